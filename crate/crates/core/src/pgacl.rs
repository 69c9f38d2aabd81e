//! Actor-critic puncturing scheduler.
//!
//! The actor is a Gibbs policy over the number of punctured mini-slots of
//! each allocated RB, factorized across RBs. The critic is linear in the
//! RB-averaged features of the chosen levels and is trained by TD(0), both
//! on-policy and from a replay pool. A dual weight `phi` prices URLLC rate
//! and grows while the windowed outage exceeds its target.

use std::collections::VecDeque;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::drra::SaaProblem;
use crate::env::{substream, Stream};
use crate::error::{Error, Result};
use crate::model::{is_outage, Allocation, SlotState};

/// Length of the feature vector `Phi(s, b, m)`.
pub const FEATURE_DIM: usize = 8;

pub type Features = [f64; FEATURE_DIM];

/// Reduced state: no-puncture rates, URLLC channel quality and load.
#[derive(Debug, Clone, PartialEq)]
pub struct RlState {
    pub r_hat: Vec<f64>,
    /// Mean URLLC gain of each RB over the URLLC users.
    pub urllc_gain: Vec<f64>,
    pub arrivals: u32,
    /// eMBB owner of each RB.
    pub owner: Vec<Option<usize>>,
    r_max: f64,
    g_max: f64,
    load: f64,
}

impl RlState {
    pub fn num_rbs(&self) -> usize {
        self.owner.len()
    }
}

/// Build the state from an allocation with `x` and `p` set.
pub fn build_state(alloc: &Allocation, slot: &SlotState, cfg: &ScenarioConfig) -> RlState {
    let link = crate::model::LinkBudget::new(cfg).expect("validated config");
    let r_hat = crate::model::rates_no_puncturing(alloc, slot, &link);
    let urllc_gain: Vec<f64> = (0..slot.num_rbs())
        .map(|b| slot.urllc_gain.column(b).mean().unwrap_or(0.0))
        .collect();
    let r_max = r_hat.iter().cloned().fold(0.0, f64::max);
    let g_max = urllc_gain.iter().cloned().fold(0.0, f64::max);
    let lambda = cfg.traffic.arrival_rate;
    let load = if lambda > 0.0 { (slot.arrivals as f64 / lambda).min(4.0) } else { 0.0 };
    RlState {
        r_hat,
        urllc_gain,
        arrivals: slot.arrivals,
        owner: alloc.owners(),
        r_max,
        g_max,
        load,
    }
}

/// `[1, r, g, l, m/M, (m/M) r, (m/M) g, (m/M) l]` with `r` the owner's
/// normalized rate, `g` the normalized URLLC gain of the RB and `l` the
/// load `L / lambda` clipped to 4.
pub fn features(state: &RlState, b: usize, m: u32, minislots: u32) -> Features {
    let r = match state.owner[b] {
        Some(k) if state.r_max > 0.0 => state.r_hat[k] / state.r_max,
        _ => 0.0,
    };
    let g = if state.g_max > 0.0 { state.urllc_gain[b] / state.g_max } else { 0.0 };
    let l = state.load;
    let f = m as f64 / minislots as f64;
    [1.0, r, g, l, f, f * r, f * g, f * l]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-RB Gibbs distributions over `0..=M`; unallocated RBs get `None`.
pub fn policy_probs(theta: &[f64], state: &RlState, minislots: u32) -> Vec<Option<Vec<f64>>> {
    (0..state.num_rbs())
        .map(|b| {
            state.owner[b].map(|_| {
                let energies: Vec<f64> = (0..=minislots)
                    .map(|m| dot(theta, &features(state, b, m, minislots)))
                    .collect();
                softmax(&energies)
            })
        })
        .collect()
}

pub fn softmax(energies: &[f64]) -> Vec<f64> {
    let top = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = energies.iter().map(|e| (e - top).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

/// Independent categorical draw per allocated RB.
pub fn sample_action(probs: &[Option<Vec<f64>>], rng: &mut impl Rng) -> Vec<u32> {
    probs
        .iter()
        .map(|p| match p {
            None => 0,
            Some(p) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (m, pm) in p.iter().enumerate() {
                    acc += pm;
                    if u < acc {
                        return m as u32;
                    }
                }
                // Round-off: fall back to the last level with mass.
                p.iter().rposition(|&v| v > 0.0).unwrap_or(0) as u32
            }
        })
        .collect()
}

/// Expand per-RB levels to the K x B puncturing matrix of the owners.
pub fn action_matrix(levels: &[u32], owner: &[Option<usize>], k: usize) -> Array2<u32> {
    let mut z = Array2::zeros((k, levels.len()));
    for (b, (&m, o)) in levels.iter().zip(owner).enumerate() {
        if let Some(kk) = o {
            z[[*kk, b]] = m;
        }
    }
    z
}

/// Per-RB levels of a K x B puncturing matrix.
pub fn action_levels(z: &Array2<u32>, owner: &[Option<usize>]) -> Vec<u32> {
    owner
        .iter()
        .enumerate()
        .map(|(b, o)| o.map_or(0, |k| z[[k, b]]))
        .collect()
}

/// Critic features: the mean over allocated RBs of `Phi` at the chosen levels.
pub fn critic_features(state: &RlState, levels: &[u32], minislots: u32) -> Features {
    let mut psi = [0.0; FEATURE_DIM];
    let mut n = 0usize;
    for (b, &m) in levels.iter().enumerate() {
        if state.owner[b].is_some() {
            let f = features(state, b, m, minislots);
            for i in 0..FEATURE_DIM {
                psi[i] += f[i];
            }
            n += 1;
        }
    }
    if n > 0 {
        psi.iter_mut().for_each(|v| *v /= n as f64);
    }
    psi
}

/// Score `sum_b grad log pi_b(m_b | s)` of the factorized Gibbs policy.
pub fn score(theta: &[f64], state: &RlState, levels: &[u32], minislots: u32) -> Features {
    let probs = policy_probs(theta, state, minislots);
    let mut g = [0.0; FEATURE_DIM];
    for (b, p) in probs.iter().enumerate() {
        if let Some(p) = p {
            let chosen = features(state, b, levels[b], minislots);
            for i in 0..FEATURE_DIM {
                g[i] += chosen[i];
            }
            for (m, pm) in p.iter().enumerate() {
                let f = features(state, b, m as u32, minislots);
                for i in 0..FEATURE_DIM {
                    g[i] -= pm * f[i];
                }
            }
        }
    }
    g
}

/// `g + phi (sum_n r_n - zeta L)`.
pub fn reward(utility: f64, urllc_rate: f64, zeta: f64, arrivals: u32, phi: f64) -> f64 {
    utility + phi * (urllc_rate - zeta * arrivals as f64)
}

/// Slot utility `g(t)`: the sample-average exponential utility of the
/// punctured eMBB sum rate.
pub fn slot_utility(prob: &SaaProblem, alloc: &Allocation, z: &Array2<u32>) -> f64 {
    let x: Vec<f64> = alloc.x.iter().copied().collect();
    let p: Vec<f64> = alloc.p.iter().copied().collect();
    let zz: Vec<u32> = z.iter().copied().collect();
    prob.value_minislots(&x, &p, &zz)
}

/// URLLC rate delivered by puncturing levels `levels`.
pub fn urllc_rate(prob: &SaaProblem, levels: &[u32], owner: &[Option<usize>]) -> f64 {
    levels
        .iter()
        .zip(owner)
        .zip(&prob.urllc_cap)
        .filter(|((_, o), _)| o.is_some())
        .map(|((&m, _), u)| m as f64 / prob.minislots as f64 * u)
        .sum()
}

/// `max(phi + theta - theta_max, 0)`.
pub fn update_phi(phi: f64, theta: f64, theta_max: f64) -> f64 {
    (phi + theta - theta_max).max(0.0)
}

pub fn td_error(r: f64, v: &[f64], psi: &[f64], psi_next: &[f64], gamma: f64) -> f64 {
    r + gamma * dot(v, psi_next) - dot(v, psi)
}

pub fn update_critic(v: &mut [f64], delta: f64, psi: &[f64], rho_c: f64) {
    for (vi, f) in v.iter_mut().zip(psi) {
        *vi += rho_c * delta * f;
    }
}

pub fn update_actor(theta: &mut [f64], delta: f64, score: &[f64], rho_a: f64) {
    for (t, s) in theta.iter_mut().zip(score) {
        *t += rho_a * delta * s;
    }
}

/// Sliding window of outage indicators.
#[derive(Debug, Clone, Default)]
pub struct OutageWindow {
    bits: VecDeque<bool>,
    count: usize,
    len: usize,
}

impl OutageWindow {
    pub fn new(len: usize) -> Self {
        Self { bits: VecDeque::with_capacity(len), count: 0, len }
    }

    pub fn push(&mut self, outage: bool) {
        if self.bits.len() == self.len {
            if self.bits.pop_front() == Some(true) {
                self.count -= 1;
            }
        }
        self.bits.push_back(outage);
        self.count += usize::from(outage);
    }

    /// Violations in the window divided by the window length.
    pub fn theta(&self) -> f64 {
        self.count as f64 / self.len as f64
    }
}

/// A transition stored through its critic features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub psi: Features,
    pub reward: f64,
    pub psi_next: Features,
}

/// FIFO pool of experiences with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayPool {
    items: VecDeque<Experience>,
    capacity: usize,
}

impl ReplayPool {
    pub fn new(capacity: usize) -> Self {
        Self { items: VecDeque::with_capacity(capacity.min(1 << 16)), capacity }
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Option<&Experience> {
        if self.items.is_empty() {
            None
        } else {
            self.items.get(rng.random_range(0..self.items.len()))
        }
    }
}

/// How the actor is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartMode {
    /// Zero parameters; the first warm-start slots execute the optimizer's
    /// puncturing instead of the sampled action.
    Warm,
    /// Gaussian parameters and no warm start.
    Random,
}

#[derive(Debug, Clone)]
struct Pending {
    state: RlState,
    levels: Vec<u32>,
    psi: Features,
    reward: f64,
}

/// Everything the scheduler learns, plus its random stream.
#[derive(Debug, Clone)]
pub struct Agent {
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
    pub phi: f64,
    pub step: u64,
    pub window: OutageWindow,
    pub pool: ReplayPool,
    warmstart: u64,
    rng: ChaCha12Rng,
    pending: Option<Pending>,
    minislots: u32,
    gamma: f64,
    rho_a: f64,
    rho_c: f64,
    minibatch: usize,
    reward_unit: f64,
    theta_max: f64,
    zeta: f64,
}

/// What the agent did in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub z: Array2<u32>,
    pub utility: f64,
    pub reward: f64,
    pub urllc_rate: f64,
    pub outage: bool,
    /// Reliability weight used in this slot's reward.
    pub phi: f64,
    /// Windowed outage after this slot.
    pub windowed_outage: f64,
    pub warm: bool,
}

impl Agent {
    /// `lane` separates the policy streams of agents sharing a seed.
    pub fn new(cfg: &ScenarioConfig, mode: StartMode, lane: u64) -> Self {
        let mut rng = substream(cfg.seed, Stream::Policy, lane);
        let theta = match mode {
            StartMode::Warm => vec![0.0; FEATURE_DIM],
            StartMode::Random => {
                let n = Normal::new(0.0, cfg.learning.random_init_scale).expect("finite scale");
                (0..FEATURE_DIM).map(|_| n.sample(&mut rng)).collect()
            }
        };
        let warmstart = match mode {
            StartMode::Warm => cfg.learning.warmstart_slots,
            StartMode::Random => 0,
        };
        Self {
            theta,
            v: vec![0.0; FEATURE_DIM],
            phi: 0.0,
            step: 0,
            window: OutageWindow::new(cfg.traffic.outage_window),
            pool: ReplayPool::new(cfg.learning.replay_capacity),
            warmstart,
            rng,
            pending: None,
            minislots: cfg.phy.minislots_per_slot as u32,
            gamma: cfg.learning.discount,
            rho_a: cfg.learning.actor_lr,
            rho_c: cfg.learning.critic_lr,
            minibatch: cfg.learning.minibatch,
            reward_unit: cfg.learning.reward_unit_bits,
            theta_max: cfg.traffic.outage_target,
            zeta: cfg.traffic.packet_bits,
        }
    }

    /// Schedule one slot on top of the optimizer's allocation, learn from
    /// the previous transition and update the reliability weight.
    pub fn step(
        &mut self,
        cfg: &ScenarioConfig,
        alloc: &Allocation,
        slot: &SlotState,
        prob: &SaaProblem,
        warm_z: Option<&Array2<u32>>,
    ) -> StepOutcome {
        let state = build_state(alloc, slot, cfg);
        let probs = policy_probs(&self.theta, &state, self.minislots);
        let sampled = sample_action(&probs, &mut self.rng);
        let warm = self.step < self.warmstart && warm_z.is_some();
        let levels = match (warm, warm_z) {
            (true, Some(z)) => action_levels(z, &state.owner),
            _ => sampled,
        };
        let z = action_matrix(&levels, &state.owner, alloc.x.nrows());
        let utility = slot_utility(prob, alloc, &z);
        let rate = urllc_rate(prob, &levels, &state.owner);
        let outage = is_outage(rate, self.zeta, slot.arrivals);
        let phi = self.phi;
        let r = reward(utility, rate, self.zeta, slot.arrivals, phi);
        let psi = critic_features(&state, &levels, self.minislots);

        if let Some(prev) = self.pending.take() {
            let delta = td_error(prev.reward, &self.v, &prev.psi, &psi, self.gamma);
            let sc = score(&self.theta, &prev.state, &prev.levels, self.minislots);
            update_critic(&mut self.v, delta, &prev.psi, self.rho_c);
            update_actor(&mut self.theta, delta, &sc, self.rho_a);
            self.pool.push(Experience { psi: prev.psi, reward: prev.reward, psi_next: psi });
            for _ in 0..self.minibatch {
                let Some(e) = self.pool.sample(&mut self.rng).copied() else { break };
                let d = td_error(e.reward, &self.v, &e.psi, &e.psi_next, self.gamma);
                update_critic(&mut self.v, d, &e.psi, self.rho_c);
            }
        }
        self.pending = Some(Pending {
            state,
            levels,
            psi,
            reward: r / self.reward_unit,
        });

        self.window.push(outage);
        let windowed = self.window.theta();
        self.phi = update_phi(self.phi, windowed, self.theta_max);
        self.step += 1;
        StepOutcome {
            z,
            utility,
            reward: r,
            urllc_rate: rate,
            outage,
            phi,
            windowed_outage: windowed,
            warm,
        }
    }

    pub fn checkpoint(&self, cfg: &ScenarioConfig) -> Checkpoint {
        Checkpoint {
            config_hash: cfg.config_hash(),
            step: self.step,
            phi: self.phi,
            theta: self.theta.clone(),
            v: self.v.clone(),
        }
    }

    /// Restore learned parameters; the replay pool and window restart empty.
    pub fn restore(&mut self, ck: &Checkpoint, cfg: &ScenarioConfig) -> Result<()> {
        if ck.config_hash != cfg.config_hash() {
            return Err(Error::Parse {
                what: "checkpoint".into(),
                message: format!("config hash {} does not match {}", ck.config_hash, cfg.config_hash()),
            });
        }
        if ck.theta.len() != FEATURE_DIM || ck.v.len() != FEATURE_DIM {
            return Err(Error::Parse {
                what: "checkpoint".into(),
                message: format!("expected {FEATURE_DIM} parameters"),
            });
        }
        self.theta = ck.theta.clone();
        self.v = ck.v.clone();
        self.phi = ck.phi;
        self.step = ck.step;
        self.pending = None;
        Ok(())
    }
}

/// Learned parameters as a JSON document. Fields appear in the order
/// `config_hash, step, phi, theta, v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub step: u64,
    pub phi: f64,
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            what: "checkpoint".into(),
            message: e.to_string(),
        })
    }
}
