//! Rate, utility and reliability formulas shared by every scheduler.
//!
//! Rates are in bits per slot throughout: a Shannon rate in bit/s is scaled
//! by the slot duration so that it can be compared directly with the URLLC
//! load `zeta * L` of the same slot.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};

/// Channel realization and traffic of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotState {
    /// K x B linear power gains of the eMBB links.
    pub embb_gain: Array2<f64>,
    /// N x B linear power gains of the URLLC links.
    pub urllc_gain: Array2<f64>,
    /// URLLC packets arriving during the slot.
    pub arrivals: u32,
    pub slot_index: u64,
}

impl SlotState {
    pub fn num_embb_users(&self) -> usize {
        self.embb_gain.nrows()
    }

    pub fn num_rbs(&self) -> usize {
        self.embb_gain.ncols()
    }
}

/// Decision variables of one slot, all K x B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// RB ownership, binary or relaxed to [0, 1].
    pub x: Array2<f64>,
    /// Transmit power in watts.
    pub p: Array2<f64>,
    /// Continuous puncturing weights in [0, 1].
    pub w: Array2<f64>,
    /// Punctured mini-slots in `0..=M`.
    pub z: Array2<u32>,
}

impl Allocation {
    pub fn empty(k: usize, b: usize) -> Self {
        Self {
            x: Array2::zeros((k, b)),
            p: Array2::zeros((k, b)),
            w: Array2::zeros((k, b)),
            z: Array2::zeros((k, b)),
        }
    }

    /// Owner of each RB, or `None` if unallocated. Requires binary `x`.
    pub fn owners(&self) -> Vec<Option<usize>> {
        (0..self.x.ncols())
            .map(|b| (0..self.x.nrows()).find(|&k| self.x[[k, b]] > 0.5))
            .collect()
    }

    /// Total punctured mini-slots.
    pub fn punctured(&self) -> u32 {
        self.z.iter().sum()
    }
}

/// Selects the puncturing variable used by [`urllc_sum_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PunctureForm {
    /// Integer mini-slots `z / M`.
    Minislots,
    /// Continuous weights `w`.
    Weights,
}

/// Constants of the rate formulas derived once from a config.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    /// Bits per slot per bit/s/Hz on one RB (`f_b * T`).
    pub rb_bits: f64,
    pub noise_w: f64,
    pub minislots: u32,
    pub num_urllc: usize,
    pub cb_symbols: f64,
    pub qinv: f64,
    pub urllc_power_w: f64,
}

impl LinkBudget {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let phy = &cfg.phy;
        Ok(Self {
            rb_bits: phy.rb_symbol_budget(),
            noise_w: phy.noise_power_w(),
            minislots: phy.minislots_per_slot as u32,
            num_urllc: phy.num_urllc_users,
            cb_symbols: phy.cb_symbols as f64,
            qinv: inverse_q(phy.decoding_error)?,
            urllc_power_w: phy.urllc_power_w(),
        })
    }

    /// Unpunctured eMBB rate coefficient `f_b T log2(1 + p h / sigma2)`.
    pub fn shannon_bits(&self, p: f64, h: f64) -> f64 {
        self.rb_bits * (p * h / self.noise_w).ln_1p() * std::f64::consts::LOG2_E
    }

    /// URLLC bits per slot that one fully punctured RB carries, summed over
    /// the N URLLC users sharing it.
    pub fn urllc_rb_capacity(&self, slot: &SlotState, b: usize) -> f64 {
        let per_user = self.rb_bits / self.num_urllc as f64;
        (0..slot.urllc_gain.nrows())
            .map(|n| {
                let snr = self.urllc_power_w * slot.urllc_gain[[n, b]] / self.noise_w;
                per_user * fbl_spectral_efficiency(snr, self.cb_symbols, self.qinv)
            })
            .sum()
    }

    pub fn urllc_capacities(&self, slot: &SlotState) -> Vec<f64> {
        (0..slot.num_rbs())
            .map(|b| self.urllc_rb_capacity(slot, b))
            .collect()
    }
}

/// Finite-blocklength spectral efficiency in bit per channel use, clamped at
/// zero: `log2(1 + snr) - log2(e) sqrt(D / c) Q^-1(eps)`.
pub fn fbl_spectral_efficiency(snr: f64, cb_symbols: f64, qinv: f64) -> f64 {
    let d = 1.0 - 1.0 / ((1.0 + snr) * (1.0 + snr));
    let se = snr.ln_1p() * std::f64::consts::LOG2_E
        - std::f64::consts::LOG2_E * (d / cb_symbols).sqrt() * qinv;
    se.max(0.0)
}

/// eMBB rate on one RB in bits per slot.
pub fn embb_rb_rate(
    rb_bandwidth_hz: f64,
    slot_duration_s: f64,
    z: u32,
    minislots: u32,
    p: f64,
    h: f64,
    noise_w: f64,
) -> Result<f64> {
    if z > minislots {
        return Err(Error::domain(format!("z = {z} exceeds M = {minislots}")));
    }
    if noise_w <= 0.0 {
        return Err(Error::domain("noise power must be positive"));
    }
    let keep = 1.0 - z as f64 / minislots as f64;
    Ok(rb_bandwidth_hz * slot_duration_s * keep * (p * h / noise_w).ln_1p() * std::f64::consts::LOG2_E)
}

/// Punctured rate of every eMBB user.
pub fn embb_user_rates(alloc: &Allocation, slot: &SlotState, link: &LinkBudget) -> Vec<f64> {
    let (k_n, b_n) = alloc.x.dim();
    let m = link.minislots as f64;
    (0..k_n)
        .map(|k| {
            (0..b_n)
                .map(|b| {
                    let keep = 1.0 - alloc.z[[k, b]] as f64 / m;
                    alloc.x[[k, b]] * keep * link.shannon_bits(alloc.p[[k, b]], slot.embb_gain[[k, b]])
                })
                .sum()
        })
        .collect()
}

pub fn embb_user_rate(alloc: &Allocation, slot: &SlotState, link: &LinkBudget, k: usize) -> f64 {
    embb_user_rates(alloc, slot, link)[k]
}

/// Rates each eMBB user would get if nothing were punctured.
pub fn rates_no_puncturing(alloc: &Allocation, slot: &SlotState, link: &LinkBudget) -> Vec<f64> {
    let (k_n, b_n) = alloc.x.dim();
    (0..k_n)
        .map(|k| {
            (0..b_n)
                .map(|b| alloc.x[[k, b]] * link.shannon_bits(alloc.p[[k, b]], slot.embb_gain[[k, b]]))
                .sum()
        })
        .collect()
}

pub fn rate_no_puncturing(alloc: &Allocation, slot: &SlotState, link: &LinkBudget, k: usize) -> f64 {
    rates_no_puncturing(alloc, slot, link)[k]
}

pub fn channel_dispersion(p: f64, h: f64, noise_w: f64) -> Result<f64> {
    if noise_w <= 0.0 {
        return Err(Error::domain("noise power must be positive"));
    }
    let snr = p * h / noise_w;
    Ok(1.0 - 1.0 / ((1.0 + snr) * (1.0 + snr)))
}

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of the Gaussian Q-function.
pub fn inverse_q(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("Q^-1 needs a probability in (0, 1), got {eps}")));
    }
    let mut x = std::f64::consts::SQRT_2 * erfc_inv(2.0 * eps);
    // Newton polish; Q'(x) = -pdf(x).
    for _ in 0..3 {
        let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if pdf <= 0.0 {
            break;
        }
        x += (q_function(x) - eps) / pdf;
    }
    Ok(x)
}

/// Puncturing share of each RB: `sum_k x_kb z_kb / M` or `sum_k x_kb w_kb`.
pub fn puncture_shares(alloc: &Allocation, minislots: u32, form: PunctureForm) -> Vec<f64> {
    let (k_n, b_n) = alloc.x.dim();
    (0..b_n)
        .map(|b| {
            (0..k_n)
                .map(|k| {
                    let frac = match form {
                        PunctureForm::Minislots => alloc.z[[k, b]] as f64 / minislots as f64,
                        PunctureForm::Weights => alloc.w[[k, b]],
                    };
                    alloc.x[[k, b]] * frac
                })
                .sum()
        })
        .collect()
}

/// Total URLLC rate carried by the punctured resources, bits per slot.
pub fn urllc_sum_rate(
    alloc: &Allocation,
    slot: &SlotState,
    link: &LinkBudget,
    form: PunctureForm,
) -> Result<f64> {
    if link.cb_symbols <= 0.0 {
        return Err(Error::domain("code block length must be positive"));
    }
    let shares = puncture_shares(alloc, link.minislots, form);
    Ok(shares
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > 0.0)
        .map(|(b, s)| s * link.urllc_rb_capacity(slot, b))
        .sum())
}

/// Certainty equivalent `(1/mu) log mean exp(mu R_s)` of a sample set.
pub fn exp_utility(samples: &[f64], mu: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("exponential utility of an empty sample set"));
    }
    if mu == 0.0 {
        return Err(Error::domain("risk parameter must be nonzero"));
    }
    let a: Vec<f64> = samples.iter().map(|r| mu * r).collect();
    let top = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean_exp = a.iter().map(|v| (v - top).exp()).sum::<f64>() / samples.len() as f64;
    Ok((top + mean_exp.ln()) / mu)
}

/// Population mean and variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// `sum_k mean_k - beta var_k` over per-user rate histories.
pub fn mean_variance_objective(history: &[Vec<f64>], beta: f64) -> Result<f64> {
    if history.is_empty() || history.iter().any(|h| h.is_empty()) {
        return Err(Error::domain("mean-variance objective needs nonempty histories"));
    }
    Ok(history
        .iter()
        .map(|h| {
            let (m, v) = mean_var(h);
            m - beta * v
        })
        .sum())
}

/// Service rate that keeps `Pr[R <= zeta L] <= theta` by Markov's inequality.
pub fn markov_required_rate(zeta: f64, mean_l: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::domain("outage target must be positive"));
    }
    Ok(zeta * mean_l / theta)
}

/// Slot outage: packets arrived and the URLLC rate did not exceed their load.
pub fn is_outage(urllc_rate: f64, zeta: f64, arrivals: u32) -> bool {
    arrivals > 0 && urllc_rate <= zeta * arrivals as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    const FB: f64 = 180e3;
    const T: f64 = 1e-3;

    fn bisect_q(eps: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if q_function(mid) > eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn link(n: usize) -> LinkBudget {
        let mut cfg = ScenarioConfig::default();
        cfg.phy.num_urllc_users = n;
        LinkBudget::new(&cfg).unwrap()
    }

    #[test]
    fn embb_rb_rate_examples() {
        assert_eq!(embb_rb_rate(FB, T, 7, 7, 1.0, 5.0, 1.0).unwrap(), 0.0);
        assert!((embb_rb_rate(FB, T, 0, 7, 3.0, 1.0, 1.0).unwrap() - 360.0).abs() < 1e-9);
        let want = 180.0 * (4.0 / 7.0) * 11f64.log2();
        assert!((embb_rb_rate(FB, T, 3, 7, 10.0, 1.0, 1.0).unwrap() - want).abs() < 1e-9);
        assert!(embb_rb_rate(FB, T, 8, 7, 1.0, 1.0, 1.0).is_err());
        assert!(embb_rb_rate(FB, T, 0, 7, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn embb_rb_rate_monotone() {
        let mut prev = f64::INFINITY;
        for z in 0..=7 {
            let r = embb_rb_rate(FB, T, z, 7, 2.0, 1.5, 0.1).unwrap();
            assert!(r <= prev);
            prev = r;
        }
        let lo = embb_rb_rate(FB, T, 2, 7, 1.0, 1.0, 0.1).unwrap();
        assert!(embb_rb_rate(FB, T, 2, 7, 2.0, 1.0, 0.1).unwrap() >= lo);
        assert!(embb_rb_rate(FB, T, 2, 7, 1.0, 2.0, 0.1).unwrap() >= lo);
    }

    fn crafted() -> (Allocation, SlotState, LinkBudget) {
        let l = link(1);
        let slot = SlotState {
            embb_gain: array![[2.0, 4.0], [8.0, 1.0]] * l.noise_w,
            urllc_gain: array![[3.0, 1.0]] * (l.noise_w / l.urllc_power_w),
            arrivals: 1,
            slot_index: 0,
        };
        let alloc = Allocation {
            x: array![[1.0, 0.0], [0.0, 1.0]],
            p: array![[1.0, 0.0], [0.0, 3.0]],
            w: array![[0.5, 0.0], [0.0, 0.0]],
            z: array![[3, 0], [0, 7]],
        };
        (alloc, slot, l)
    }

    #[test]
    fn user_rates_match_manual_sum() {
        let (alloc, slot, l) = crafted();
        let r = embb_user_rates(&alloc, &slot, &l);
        // user 0: RB 0, snr 2, z 3; user 1: RB 1, snr 3, z 7.
        assert!((r[0] - 180.0 * (4.0 / 7.0) * 3f64.log2()).abs() < 1e-9);
        assert_eq!(r[1], 0.0);
        let r0 = rates_no_puncturing(&alloc, &slot, &l);
        assert!((r0[0] - 180.0 * 3f64.log2()).abs() < 1e-9);
        assert!((r0[1] - 180.0 * 2.0).abs() < 1e-9);
        let empty = Allocation::empty(2, 2);
        assert_eq!(embb_user_rates(&empty, &slot, &l), vec![0.0, 0.0]);
    }

    #[test]
    fn urllc_rate_matches_term_sum() {
        let (alloc, slot, l) = crafted();
        let se = |snr: f64| {
            let d = 1.0 - 1.0 / (1.0 + snr).powi(2);
            (snr + 1.0).log2() - (d / 24.0).sqrt() * l.qinv / std::f64::consts::LN_2
        };
        let want = 180.0 * (3.0 / 7.0) * se(3.0).max(0.0) + 180.0 * 1.0 * se(1.0).max(0.0);
        let got = urllc_sum_rate(&alloc, &slot, &l, PunctureForm::Minislots).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        let got_w = urllc_sum_rate(&alloc, &slot, &l, PunctureForm::Weights).unwrap();
        assert!((got_w - 180.0 * 0.5 * se(3.0)).abs() < 1e-9);
    }

    #[test]
    fn urllc_rate_zero_without_puncturing_or_at_low_snr() {
        let (mut alloc, slot, l) = crafted();
        alloc.z.fill(0);
        assert_eq!(urllc_sum_rate(&alloc, &slot, &l, PunctureForm::Minislots).unwrap(), 0.0);
        // The penalty exceeds the Shannon term at very low SNR.
        assert_eq!(fbl_spectral_efficiency(0.01, 24.0, l.qinv), 0.0);
    }

    #[test]
    fn dispersion_examples() {
        assert_eq!(channel_dispersion(0.0, 1.0, 1.0).unwrap(), 0.0);
        assert!((channel_dispersion(1.0, 1.0, 1.0).unwrap() - 0.75).abs() < 1e-15);
        assert!(channel_dispersion(1e6, 1.0, 1.0).unwrap() > 0.999_99);
        assert!(channel_dispersion(1e6, 1.0, 1.0).unwrap() < 1.0);
        assert!(channel_dispersion(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn inverse_q_against_bisection() {
        assert!(inverse_q(0.5).unwrap().abs() < 1e-12);
        assert!((inverse_q(0.158655).unwrap() - bisect_q(0.158655)).abs() < 1e-9);
        assert!((inverse_q(0.158655).unwrap() - 1.0).abs() < 1e-5);
        assert!((inverse_q(1e-5).unwrap() - bisect_q(1e-5)).abs() < 1e-9);
        assert!((inverse_q(1e-5).unwrap() - 4.2649).abs() < 1e-4);
        for eps in [1e-5, 1e-3, 0.1, 0.5, 0.9] {
            let q = q_function(inverse_q(eps).unwrap());
            assert!((q - eps).abs() < 1e-8 * eps.max(1e-3), "{eps}: {q}");
        }
        assert!(inverse_q(0.0).is_err());
        assert!(inverse_q(1.0).is_err());
    }

    #[test]
    fn exp_utility_examples() {
        assert!((exp_utility(&[7.5], -3.0).unwrap() - 7.5).abs() < 1e-12);
        assert!((exp_utility(&[4.0; 5], -0.7).unwrap() - 4.0).abs() < 1e-12);
        let mu = -0.01;
        let s = [1.0, 2.0, 3.0];
        let (m, v) = mean_var(&s);
        assert!((exp_utility(&s, mu).unwrap() - (m + 0.5 * mu * v)).abs() < 1e-5);
        assert!(exp_utility(&[], -1.0).is_err());
        assert!(exp_utility(&[1.0], 0.0).is_err());
        // No overflow for huge exponents.
        assert!(exp_utility(&[1e6, 2e6], -1.0).unwrap().is_finite());
    }

    #[test]
    fn mean_variance_examples() {
        assert_eq!(mean_variance_objective(&[vec![3.0; 4]], 0.5).unwrap(), 3.0);
        assert_eq!(mean_variance_objective(&[vec![1.0, 3.0], vec![2.0]], 0.0).unwrap(), 4.0);
        assert!((mean_variance_objective(&[vec![40.0, 60.0]], 0.1).unwrap() - 40.0).abs() < 1e-12);
    }

    #[test]
    fn markov_examples() {
        assert!((markov_required_rate(256.0, 50.0, 0.04).unwrap() - 320_000.0).abs() < 1e-6);
        assert_eq!(markov_required_rate(256.0, 3.0, 1.0).unwrap(), 768.0);
        assert!(markov_required_rate(256.0, 3.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn no_puncture_rate_dominates(
            gains in proptest::collection::vec(0.0f64..50.0, 6),
            zs in proptest::collection::vec(0u32..=7, 6),
        ) {
            let l = link(1);
            let slot = SlotState {
                embb_gain: Array2::from_shape_vec((2, 3), gains).unwrap() * l.noise_w,
                urllc_gain: Array2::zeros((1, 3)),
                arrivals: 0,
                slot_index: 0,
            };
            let alloc = Allocation {
                x: array![[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]],
                p: Array2::from_elem((2, 3), 1.0),
                w: Array2::zeros((2, 3)),
                z: Array2::from_shape_vec((2, 3), zs).unwrap(),
            };
            let full = rates_no_puncturing(&alloc, &slot, &l);
            let cut = embb_user_rates(&alloc, &slot, &l);
            for k in 0..2 {
                prop_assert!(full[k] + 1e-12 >= cut[k]);
            }
        }

        #[test]
        fn exp_utility_below_mean(samples in proptest::collection::vec(0.0f64..100.0, 1..20), mu in -5.0f64..-1e-3) {
            let (m, _) = mean_var(&samples);
            prop_assert!(exp_utility(&samples, mu).unwrap() <= m + 1e-9 * m.abs().max(1.0));
        }

        #[test]
        fn dispersion_in_unit_interval(snr in 0.0f64..1e6) {
            let d = channel_dispersion(snr, 1.0, 1.0).unwrap();
            prop_assert!((0.0..1.0).contains(&d));
            prop_assert!(channel_dispersion(snr * 1.1 + 1e-3, 1.0, 1.0).unwrap() >= d);
        }
    }
}
