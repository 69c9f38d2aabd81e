//! Risk-averse block-coordinate resource allocation.
//!
//! One slot is solved by alternating three concave subproblems on the
//! relaxed variables (RB shares `x`, powers `p`, per-RB puncturing weights
//! `w`), all maximizing the same sample-average exponential utility of the
//! eMBB sum rate. The RB shares are then rounded, the powers re-solved for
//! the rounded allocation and the weights floored to mini-slots.
//!
//! Matrices are row-major `k * B + b` slices inside this module.

pub mod ascent;
pub mod projection;

use std::time::Instant;

use ndarray::Array2;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::config::{SaaFading, ScenarioConfig};
use crate::env::{substream, Stream};
use crate::error::Result;
use crate::model::{markov_required_rate, Allocation, LinkBudget, SlotState};
use ascent::{maximize, AscentOptions, AscentStats};

/// Outcome of one DRRA solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub slot_index: u64,
    /// Relaxed utility after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Subproblem solves that hit their iteration cap.
    pub inner_failures: usize,
    pub integrality_gap: f64,
    /// RB over-allocation left after rounding (zero after repair).
    pub delta: f64,
    /// Over-allocation produced by the threshold rule alone.
    pub threshold_delta: f64,
    pub feasible_urllc: bool,
    /// URLLC rate the weights promise versus the Markov requirement.
    pub urllc_planned: f64,
    pub urllc_required: f64,
    pub relaxed_objective: f64,
    pub rounded_objective: f64,
    pub wall_time_s: f64,
}

impl SolveReport {
    /// One JSON object per line for the run log.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Sampled channel data of one slot's optimization problem.
#[derive(Debug, Clone)]
pub struct SaaProblem {
    pub k: usize,
    pub b: usize,
    pub s: usize,
    /// Risk parameter per bit.
    pub mu: f64,
    pub max_power: f64,
    pub minislots: u32,
    /// Required URLLC rate (bits per slot).
    pub required: f64,
    /// URLLC capacity of each fully punctured RB.
    pub urllc_cap: Vec<f64>,
    bits: f64,
    /// `h / sigma2` per sample, user and RB, flattened `[s][k][b]`.
    snr_unit: Vec<f64>,
}

impl SaaProblem {
    pub fn new(slot: &SlotState, cfg: &ScenarioConfig) -> Result<Self> {
        let link = LinkBudget::new(cfg)?;
        let (k, b) = slot.embb_gain.dim();
        let s = cfg.optimizer.saa_samples;
        let mut rng = substream(cfg.seed, Stream::Saa, slot.slot_index);
        let mut snr_unit = vec![0.0; s * k * b];
        for si in 0..s {
            for ki in 0..k {
                let shared: f64 = Exp1.sample(&mut rng);
                for bi in 0..b {
                    let xi = match cfg.optimizer.saa_fading {
                        SaaFading::PerUser => shared,
                        SaaFading::PerRb => Exp1.sample(&mut rng),
                    };
                    snr_unit[(si * k + ki) * b + bi] = slot.embb_gain[[ki, bi]] * xi / link.noise_w;
                }
            }
        }
        let required = markov_required_rate(
            cfg.traffic.packet_bits,
            cfg.traffic.arrival_rate,
            cfg.traffic.outage_target,
        )?;
        Ok(Self {
            k,
            b,
            s,
            mu: cfg.optimizer.mu_per_bit(),
            max_power: cfg.phy.max_power_w,
            minislots: cfg.phy.minislots_per_slot as u32,
            required,
            urllc_cap: link.urllc_capacities(slot),
            bits: link.rb_bits * std::f64::consts::LOG2_E,
            snr_unit,
        })
    }

    fn n(&self) -> usize {
        self.k * self.b
    }

    /// Rate coefficients `A[s][kb]` at power `p`.
    fn coefficients(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut a = vec![0.0; self.s * n];
        for si in 0..self.s {
            for j in 0..n {
                a[si * n + j] = self.bits * (p[j] * self.snr_unit[si * n + j]).ln_1p();
            }
        }
        a
    }

    /// Certainty equivalent of `rates`; `weights` receives its gradient
    /// with respect to each sample (a softmax of `mu * rates`).
    fn certainty(&self, rates: &[f64], weights: &mut [f64]) -> f64 {
        let top = rates
            .iter()
            .map(|r| self.mu * r)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (wt, r) in weights.iter_mut().zip(rates) {
            *wt = (self.mu * r - top).exp();
            z += *wt;
        }
        for wt in weights.iter_mut() {
            *wt /= z;
        }
        (top + (z / rates.len() as f64).ln()) / self.mu
    }

    /// Per-sample eMBB sum rates with keep factor `keep[kb]`.
    pub fn sample_rates_keep(&self, x: &[f64], p: &[f64], keep: &[f64]) -> Vec<f64> {
        let n = self.n();
        let a = self.coefficients(p);
        (0..self.s)
            .map(|si| (0..n).map(|j| x[j] * keep[j] * a[si * n + j]).sum())
            .collect()
    }

    fn keep_from_w(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|j| 1.0 - w[j % self.b]).collect()
    }

    pub fn sample_rates(&self, x: &[f64], p: &[f64], w: &[f64]) -> Vec<f64> {
        self.sample_rates_keep(x, p, &self.keep_from_w(w))
    }

    /// Relaxed utility with per-RB weights `w`.
    pub fn value(&self, x: &[f64], p: &[f64], w: &[f64]) -> f64 {
        let r = self.sample_rates(x, p, w);
        self.certainty(&r, &mut vec![0.0; self.s])
    }

    /// Utility with integer puncturing `z[kb]`.
    pub fn value_minislots(&self, x: &[f64], p: &[f64], z: &[u32]) -> f64 {
        let keep: Vec<f64> = z.iter().map(|&zz| 1.0 - zz as f64 / self.minislots as f64).collect();
        let r = self.sample_rates_keep(x, p, &keep);
        self.certainty(&r, &mut vec![0.0; self.s])
    }

    /// Utility of per-user rate samples `rates[s][k]` summed over users;
    /// used to score schedules produced outside the optimizer.
    pub fn value_of_samples(&self, sums: &[f64]) -> f64 {
        self.certainty(sums, &mut vec![0.0; sums.len()])
    }

    /// Gradient of [`SaaProblem::value`] with respect to `x`.
    pub fn grad_x(&self, x: &[f64], p: &[f64], w: &[f64]) -> Vec<f64> {
        let c = self.x_coefficients(p, w);
        let mut g = vec![0.0; self.n()];
        self.linear_value_grad(&c, x, &mut g);
        g
    }

    /// Gradient with respect to `p` in watts.
    pub fn grad_p(&self, x: &[f64], p: &[f64], w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n()];
        let q: Vec<f64> = p.iter().map(|v| v / self.max_power).collect();
        self.q_value_grad(x, &self.keep_from_w(w), &q, &mut g);
        g.iter_mut().for_each(|v| *v /= self.max_power);
        g
    }

    pub fn grad_w(&self, x: &[f64], p: &[f64], w: &[f64]) -> Vec<f64> {
        let d = self.w_coefficients(x, p);
        let mut g = vec![0.0; self.b];
        self.w_value_grad(&d, w, &mut g);
        g
    }

    /// `C[s][kb] = keep_b A[s][kb]`, so that rates are linear in `x`.
    fn x_coefficients(&self, p: &[f64], w: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut c = self.coefficients(p);
        for si in 0..self.s {
            for j in 0..n {
                c[si * n + j] *= 1.0 - w[j % self.b];
            }
        }
        c
    }

    fn linear_value_grad(&self, c: &[f64], x: &[f64], g: &mut [f64]) -> f64 {
        let n = self.n();
        let rates: Vec<f64> = (0..self.s)
            .map(|si| (0..n).map(|j| c[si * n + j] * x[j]).sum())
            .collect();
        let mut pi = vec![0.0; self.s];
        let v = self.certainty(&rates, &mut pi);
        g.fill(0.0);
        for si in 0..self.s {
            for j in 0..n {
                g[j] += pi[si] * c[si * n + j];
            }
        }
        v
    }

    /// `D[s][b] = sum_k x_kb A[s][kb]`, so that rates are affine in `w`.
    fn w_coefficients(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        let n = self.n();
        let a = self.coefficients(p);
        let mut d = vec![0.0; self.s * self.b];
        for si in 0..self.s {
            for j in 0..n {
                d[si * self.b + j % self.b] += x[j] * a[si * n + j];
            }
        }
        d
    }

    fn w_value_grad(&self, d: &[f64], w: &[f64], g: &mut [f64]) -> f64 {
        let rates: Vec<f64> = (0..self.s)
            .map(|si| (0..self.b).map(|bi| (1.0 - w[bi]) * d[si * self.b + bi]).sum())
            .collect();
        let mut pi = vec![0.0; self.s];
        let v = self.certainty(&rates, &mut pi);
        g.fill(0.0);
        for si in 0..self.s {
            for bi in 0..self.b {
                g[bi] -= pi[si] * d[si * self.b + bi];
            }
        }
        v
    }

    /// Value and gradient in normalized power `q = p / P_max`.
    fn q_value_grad(&self, x: &[f64], keep: &[f64], q: &[f64], g: &mut [f64]) -> f64 {
        let n = self.n();
        let mut rates = vec![0.0; self.s];
        for si in 0..self.s {
            let mut r = 0.0;
            for j in 0..n {
                if x[j] > 0.0 {
                    r += x[j] * keep[j] * (q[j] * self.max_power * self.snr_unit[si * n + j]).ln_1p();
                }
            }
            rates[si] = r * self.bits;
        }
        let mut pi = vec![0.0; self.s];
        let v = self.certainty(&rates, &mut pi);
        g.fill(0.0);
        for si in 0..self.s {
            for j in 0..n {
                if x[j] > 0.0 {
                    let gu = self.max_power * self.snr_unit[si * n + j];
                    g[j] += pi[si] * x[j] * keep[j] * self.bits * gu / (1.0 + q[j] * gu);
                }
            }
        }
        v
    }

    /// URLLC rate promised by per-RB weights.
    pub fn urllc_planned(&self, w: &[f64]) -> f64 {
        w.iter().zip(&self.urllc_cap).map(|(a, b)| a * b).sum()
    }
}

fn inner_options(cfg: &ScenarioConfig) -> AscentOptions {
    AscentOptions {
        max_iterations: cfg.optimizer.max_inner_iterations,
        tolerance: cfg.optimizer.inner_tolerance,
    }
}

/// RB-share subproblem: maximize over `x` with per-RB caps, from `x`.
pub fn solve_rb_allocation(
    prob: &SaaProblem,
    x: &mut [f64],
    p: &[f64],
    w: &[f64],
    opts: AscentOptions,
) -> AscentStats {
    let c = prob.x_coefficients(p, w);
    let (k, b) = (prob.k, prob.b);
    projection::rb_columns(x, k, b);
    maximize(
        x,
        |x, g| prob.linear_value_grad(&c, x, g),
        |v| projection::rb_columns(v, k, b),
        opts,
    )
}

/// Power subproblem under the total power budget, from `p`.
pub fn solve_power_allocation(
    prob: &SaaProblem,
    x: &[f64],
    p: &mut [f64],
    w: &[f64],
    opts: AscentOptions,
) -> AscentStats {
    let keep = prob.keep_from_w(w);
    let mut q: Vec<f64> = p.iter().map(|v| v / prob.max_power).collect();
    projection::capped_simplex(&mut q, 1.0);
    let stats = maximize(
        &mut q,
        |q, g| prob.q_value_grad(x, &keep, q, g),
        |v| projection::capped_simplex(v, 1.0),
        opts,
    );
    for (pv, qv) in p.iter_mut().zip(&q) {
        *pv = qv * prob.max_power;
    }
    stats
}

/// Puncturing-weight subproblem with the Markov rate constraint. Returns
/// `false` when no weights in the box meet the requirement, in which case
/// every RB is fully punctured.
pub fn solve_urllc_weights(
    prob: &SaaProblem,
    x: &[f64],
    p: &[f64],
    w: &mut [f64],
    opts: AscentOptions,
) -> (bool, AscentStats) {
    let cap = prob.urllc_cap.clone();
    let req = prob.required;
    if !projection::box_halfspace(w, &cap, req) {
        let v = prob.value(x, p, w);
        return (false, AscentStats { iterations: 0, converged: true, value: v });
    }
    let d = prob.w_coefficients(x, p);
    let stats = maximize(
        w,
        |w, g| prob.w_value_grad(&d, w, g),
        |v| {
            projection::box_halfspace(v, &cap, req);
        },
        opts,
    );
    (true, stats)
}

/// Binary RB ownership from relaxed shares.
#[derive(Debug, Clone, PartialEq)]
pub struct Rounding {
    pub x: Vec<f64>,
    /// Worst over-allocation `max_b (sum_k x_kb - 1)` of the threshold rule.
    pub threshold_delta: f64,
    /// Over-allocation after repair.
    pub delta: f64,
}

/// Threshold at `eta`, then give every RB with zero or several winners to
/// its largest share, lowest user index first on ties.
pub fn round_rb_allocation(x: &[f64], k: usize, b: usize, eta: f64) -> Rounding {
    let mut out = vec![0.0; k * b];
    let mut threshold_delta: f64 = 0.0;
    for j in 0..b {
        let winners: Vec<usize> = (0..k).filter(|&i| x[i * b + j] >= eta).collect();
        threshold_delta = threshold_delta.max(winners.len() as f64 - 1.0);
        let owner = if winners.len() == 1 {
            winners[0]
        } else {
            let mut best = 0;
            for i in 1..k {
                if x[i * b + j] > x[best * b + j] {
                    best = i;
                }
            }
            best
        };
        out[owner * b + j] = 1.0;
    }
    let delta = (0..b)
        .map(|j| (0..k).map(|i| out[i * b + j]).sum::<f64>() - 1.0)
        .fold(0.0f64, f64::max);
    Rounding { x: out, threshold_delta: threshold_delta.max(0.0), delta }
}

/// `z = floor(M w)`.
pub fn weights_to_minislots(w: f64, minislots: u32) -> u32 {
    // The small offset absorbs round-off such as 7 * (1 - 1e-16).
    ((minislots as f64 * w + 1e-9).floor().max(0.0) as u32).min(minislots)
}

fn to_array(v: &[f64], k: usize, b: usize) -> Array2<f64> {
    Array2::from_shape_vec((k, b), v.to_vec()).expect("shape")
}

/// Full solve: alternate the three subproblems until the relative utility
/// change drops below `epsilon`, then round.
pub fn run_drra(slot: &SlotState, cfg: &ScenarioConfig) -> Result<(Allocation, SolveReport)> {
    let prob = SaaProblem::new(slot, cfg)?;
    Ok(run_drra_on(&prob, slot.slot_index, cfg))
}

pub fn run_drra_on(prob: &SaaProblem, slot_index: u64, cfg: &ScenarioConfig) -> (Allocation, SolveReport) {
    let start = Instant::now();
    let (k, b) = (prob.k, prob.b);
    let opts = inner_options(cfg);
    let eps = cfg.optimizer.epsilon;

    let mut x = vec![1.0 / k as f64; k * b];
    let mut p = vec![prob.max_power / (k * b) as f64; k * b];
    let mut w = vec![0.0; b];
    let mut prev = prob.value(&x, &p, &w);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut inner_failures = 0;
    let mut feasible = true;

    for _ in 0..cfg.optimizer.max_outer_iterations {
        let sx = solve_rb_allocation(prob, &mut x, &p, &w, opts);
        let sp = solve_power_allocation(prob, &x, &mut p, &w, opts);
        let (f, sw) = solve_urllc_weights(prob, &x, &p, &mut w, opts);
        feasible = f;
        inner_failures += [sx, sp, sw].iter().filter(|s| !s.converged).count();
        let g = prob.value(&x, &p, &w);
        trace.push(g);
        let rel = (prev - g).abs() / prev.abs().max(f64::MIN_POSITIVE);
        prev = g;
        if rel <= eps {
            converged = true;
            break;
        }
    }
    let relaxed_objective = prev;

    let rounding = round_rb_allocation(&x, k, b, cfg.optimizer.rounding_threshold);
    let xr = rounding.x;
    let mut pr: Vec<f64> = p.iter().zip(&xr).map(|(pv, xv)| pv * xv).collect();
    if pr.iter().all(|&v| v == 0.0) {
        pr = xr.iter().map(|&xv| xv * prob.max_power / b as f64).collect();
    }
    let sp = solve_power_allocation(prob, &xr, &mut pr, &w, opts);
    inner_failures += usize::from(!sp.converged);
    let rounded_objective = prob.value(&xr, &pr, &w);

    // Integrality gap against the relaxation re-solved at the final power.
    let mut xrel = xr.clone();
    solve_rb_allocation(prob, &mut xrel, &pr, &w, opts);
    let relaxed_at_p = prob.value(&xrel, &pr, &w).max(rounded_objective);
    let gap_num = rounded_objective + cfg.optimizer.penalty_weight * rounding.delta;
    let integrality_gap = if relaxed_at_p > 0.0 { gap_num / relaxed_at_p } else { 1.0 };

    let mut wk = vec![0.0; k * b];
    let mut z = vec![0u32; k * b];
    for j in 0..k * b {
        if xr[j] > 0.5 {
            wk[j] = w[j % b];
            z[j] = weights_to_minislots(w[j % b], prob.minislots);
        }
    }
    let alloc = Allocation {
        x: to_array(&xr, k, b),
        p: to_array(&pr, k, b),
        w: to_array(&wk, k, b),
        z: Array2::from_shape_vec((k, b), z).expect("shape"),
    };
    let report = SolveReport {
        slot_index,
        iterations: trace.len(),
        objective_trace: trace,
        converged,
        inner_failures,
        integrality_gap,
        delta: rounding.delta,
        threshold_delta: rounding.threshold_delta,
        feasible_urllc: feasible,
        urllc_planned: prob.urllc_planned(&w),
        urllc_required: prob.required,
        relaxed_objective,
        rounded_objective,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    (alloc, report)
}

#[cfg(test)]
mod tests;
