//! Reference puncturing schedulers. Each places a given number of punctured
//! mini-slots on the RBs of an existing allocation; only the placement rule
//! differs.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::model::{Allocation, LinkBudget, SlotState};

/// Quantization levels of the spectral-efficiency MCS proxy.
pub const MCS_LEVELS: usize = 15;
/// Spectral efficiency of the highest MCS level (bit/s/Hz).
pub const MCS_MAX_SE: f64 = 7.4063;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Minimize the eMBB sum-rate loss.
    SumRate,
    /// Minimize the loss of the sum of log rates (proportional fair).
    SumLog,
    /// Puncture users with the lowest MCS first.
    Lmcs,
    /// Round-robin over allocated RBs; a stand-in for matching-based schemes.
    EqualSplit,
}

impl Baseline {
    pub fn schedule(self, alloc: &Allocation, slot: &SlotState, link: &LinkBudget, demand: u32) -> Array2<u32> {
        match self {
            Baseline::SumRate => sum_rate_scheduler(alloc, slot, link, demand),
            Baseline::SumLog => sum_log_scheduler(alloc, slot, link, demand),
            Baseline::Lmcs => lmcs_scheduler(alloc, slot, link, demand),
            Baseline::EqualSplit => equal_split_scheduler(alloc, link.minislots, demand),
        }
    }
}

/// Allocated RBs with their owner and unpunctured rate.
fn allocated(alloc: &Allocation, slot: &SlotState, link: &LinkBudget) -> Vec<(usize, usize, f64)> {
    alloc
        .owners()
        .into_iter()
        .enumerate()
        .filter_map(|(b, o)| o.map(|k| (b, k, link.shannon_bits(alloc.p[[k, b]], slot.embb_gain[[k, b]]))))
        .collect()
}

fn capacity(alloc: &Allocation, minislots: u32) -> u32 {
    alloc.owners().iter().flatten().count() as u32 * minislots
}

/// Mini-slots needed to carry `zeta L` bits at the mean per-mini-slot URLLC
/// capacity of the slot, capped at the allocated grid.
pub fn demand_from_load(arrivals: u32, zeta: f64, alloc: &Allocation, slot: &SlotState, link: &LinkBudget) -> u32 {
    let cap = capacity(alloc, link.minislots);
    if arrivals == 0 || cap == 0 {
        return 0;
    }
    let owned: Vec<usize> = alloc
        .owners()
        .iter()
        .enumerate()
        .filter_map(|(b, o)| o.map(|_| b))
        .collect();
    let per_minislot =
        owned.iter().map(|&b| link.urllc_rb_capacity(slot, b)).sum::<f64>() / (owned.len() as f64 * link.minislots as f64);
    if per_minislot <= 0.0 {
        return cap;
    }
    let need = (zeta * arrivals as f64 / per_minislot).ceil();
    if need >= cap as f64 {
        cap
    } else {
        need as u32
    }
}

/// Fill the RBs with the smallest per-mini-slot rate loss first.
pub fn sum_rate_scheduler(alloc: &Allocation, slot: &SlotState, link: &LinkBudget, demand: u32) -> Array2<u32> {
    let mut z = Array2::zeros(alloc.x.dim());
    let mut rbs = allocated(alloc, slot, link);
    rbs.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
    let mut left = demand;
    for (b, k, _) in rbs {
        let take = left.min(link.minislots);
        z[[k, b]] = take;
        left -= take;
        if left == 0 {
            break;
        }
    }
    z
}

/// Greedy placement minimizing the decrease of `sum_k log(r_k)`; rates are
/// floored at one bit so that starved users do not dominate.
pub fn sum_log_scheduler(alloc: &Allocation, slot: &SlotState, link: &LinkBudget, demand: u32) -> Array2<u32> {
    let k_n = alloc.x.nrows();
    let m = link.minislots;
    let mut z = Array2::zeros(alloc.x.dim());
    let rbs = allocated(alloc, slot, link);
    let mut rate = vec![0.0; k_n];
    for &(_, k, c) in &rbs {
        rate[k] += c;
    }
    let floor_log = |r: f64| r.max(1.0).ln();
    for _ in 0..demand.min(capacity(alloc, m)) {
        let mut best: Option<(f64, usize)> = None;
        for (i, &(b, k, c)) in rbs.iter().enumerate() {
            if z[[k, b]] >= m {
                continue;
            }
            let cost = floor_log(rate[k]) - floor_log(rate[k] - c / m as f64);
            if best.is_none_or(|(bc, _)| cost < bc) {
                best = Some((cost, i));
            }
        }
        let Some((_, i)) = best else { break };
        let (b, k, c) = rbs[i];
        z[[k, b]] += 1;
        rate[k] -= c / m as f64;
    }
    z
}

/// MCS index of a spectral efficiency.
pub fn mcs_index(se: f64) -> usize {
    ((se / MCS_MAX_SE * MCS_LEVELS as f64).floor().max(0.0) as usize).min(MCS_LEVELS - 1)
}

/// Per-user MCS from the mean spectral efficiency over its RBs.
pub fn user_mcs(alloc: &Allocation, slot: &SlotState, link: &LinkBudget) -> Vec<Option<usize>> {
    let k_n = alloc.x.nrows();
    let mut se = vec![(0.0, 0usize); k_n];
    for (b, o) in alloc.owners().into_iter().enumerate() {
        if let Some(k) = o {
            se[k].0 += link.shannon_bits(alloc.p[[k, b]], slot.embb_gain[[k, b]]) / link.rb_bits;
            se[k].1 += 1;
        }
    }
    se.into_iter()
        .map(|(s, n)| (n > 0).then(|| mcs_index(s / n as f64)))
        .collect()
}

/// Puncture whole users in ascending MCS order (ties by index), each user's
/// RBs in index order.
pub fn lmcs_scheduler(alloc: &Allocation, slot: &SlotState, link: &LinkBudget, demand: u32) -> Array2<u32> {
    let mcs = user_mcs(alloc, slot, link);
    let mut users: Vec<(usize, usize)> = mcs.iter().enumerate().filter_map(|(k, m)| m.map(|m| (m, k))).collect();
    users.sort();
    let owners = alloc.owners();
    let mut z = Array2::zeros(alloc.x.dim());
    let mut left = demand;
    'outer: for (_, k) in users {
        for (b, o) in owners.iter().enumerate() {
            if *o == Some(k) {
                let take = left.min(link.minislots);
                z[[k, b]] = take;
                left -= take;
                if left == 0 {
                    break 'outer;
                }
            }
        }
    }
    z
}

/// Round-robin over allocated RBs in index order.
pub fn equal_split_scheduler(alloc: &Allocation, minislots: u32, demand: u32) -> Array2<u32> {
    let owned: Vec<(usize, usize)> = alloc
        .owners()
        .into_iter()
        .enumerate()
        .filter_map(|(b, o)| o.map(|k| (b, k)))
        .collect();
    let mut z = Array2::zeros(alloc.x.dim());
    if owned.is_empty() {
        return z;
    }
    let n = owned.len() as u32;
    let demand = demand.min(n * minislots);
    for (i, &(b, k)) in owned.iter().enumerate() {
        let i = i as u32;
        z[[k, b]] = demand / n + u32::from(i < demand % n);
    }
    z
}
