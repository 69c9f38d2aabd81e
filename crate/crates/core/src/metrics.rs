//! Per-slot records and the statistics computed from them.
//!
//! `slots.csv` columns, in order: `t, arrivals, urllc_rate, outage,
//! sum_rate, utility, reward, phi, punctured, rate_0 .. rate_{K-1}`. Rates
//! are bits per slot (equivalently kbit/s for a 1 ms slot); `reward` and
//! `phi` are empty for schedulers that do not learn. Variances use the
//! population divisor.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub t: u64,
    pub arrivals: u32,
    pub urllc_rate: f64,
    pub outage: bool,
    pub user_rates: Vec<f64>,
    /// Sample-average exponential utility of the punctured eMBB rates.
    pub utility: f64,
    pub reward: Option<f64>,
    pub phi: Option<f64>,
    pub punctured: u32,
}

impl SlotRecord {
    pub fn sum_rate(&self) -> f64 {
        self.user_rates.iter().sum()
    }
}

/// Append-only log of one scheduler's run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub records: Vec<SlotRecord>,
}

impl MetricsLog {
    pub fn push(&mut self, r: SlotRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn outages(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.outage).collect()
    }

    pub fn sum_rates(&self) -> Vec<f64> {
        self.records.iter().map(SlotRecord::sum_rate).collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.reward).collect()
    }

    /// Jain index of each slot's user rates, averaged over slots.
    pub fn mean_slot_jain(&self) -> f64 {
        mean(&self.records.iter().map(|r| jain_index(&r.user_rates)).collect::<Vec<_>>())
    }

    /// Jain index of the time-averaged user rates.
    pub fn long_term_jain(&self) -> f64 {
        let k = self.records.first().map_or(0, |r| r.user_rates.len());
        let mut avg = vec![0.0; k];
        for r in &self.records {
            for (a, v) in avg.iter_mut().zip(&r.user_rates) {
                *a += v;
            }
        }
        jain_index(&avg)
    }

    pub fn reliability(&self, r_min: f64) -> f64 {
        embb_reliability(self.records.iter().map(|r| r.user_rates.as_slice()), r_min)
    }

    pub fn to_csv(&self) -> String {
        let k = self.records.first().map_or(0, |r| r.user_rates.len());
        let mut out = String::from("t,arrivals,urllc_rate,outage,sum_rate,utility,reward,phi,punctured");
        for i in 0..k {
            write!(out, ",rate_{i}").unwrap();
        }
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            write!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.t,
                r.arrivals,
                r.urllc_rate,
                u8::from(r.outage),
                r.sum_rate(),
                r.utility,
                opt(r.reward),
                opt(r.phi),
                r.punctured
            )
            .unwrap();
            for v in &r.user_rates {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse {
            what: format!("slots.csv line {line}"),
            message: msg.to_string(),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "missing header"))?;
        if !header.starts_with("t,arrivals,urllc_rate,outage,sum_rate,utility,reward,phi,punctured") {
            return Err(bad(1, "unexpected header"));
        }
        let mut log = MetricsLog::default();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() < 9 {
                return Err(bad(i + 2, "too few columns"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 2, "bad number"));
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            log.push(SlotRecord {
                t: f[0].parse().map_err(|_| bad(i + 2, "bad slot index"))?,
                arrivals: f[1].parse().map_err(|_| bad(i + 2, "bad arrivals"))?,
                urllc_rate: num(f[2])?,
                outage: f[3] == "1",
                utility: num(f[5])?,
                reward: opt(f[6])?,
                phi: opt(f[7])?,
                punctured: f[8].parse().map_err(|_| bad(i + 2, "bad punctured"))?,
                user_rates: f[9..].iter().map(|s| num(s)).collect::<Result<_>>()?,
            });
        }
        Ok(log)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    crate::model::mean_var(xs).1.sqrt()
}

/// `(sum r)^2 / (K sum r^2)`, and 1 for the all-zero vector.
pub fn jain_index(rates: &[f64]) -> f64 {
    let s: f64 = rates.iter().sum();
    let s2: f64 = rates.iter().map(|r| r * r).sum();
    if s2 == 0.0 {
        return 1.0;
    }
    s * s / (rates.len() as f64 * s2)
}

/// Fraction of (user, slot) pairs whose rate reaches `r_min`.
pub fn embb_reliability<'a>(slots: impl Iterator<Item = &'a [f64]>, r_min: f64) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for rates in slots {
        for &r in rates {
            hit += usize::from(r >= r_min);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        hit as f64 / n as f64
    }
}

/// Sliding-window outage estimate: violations among the last `window`
/// slots divided by `window`.
pub fn outage_series(outages: &[bool], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(outages.len());
    let mut count = 0usize;
    for (t, &o) in outages.iter().enumerate() {
        count += usize::from(o);
        if t >= window && outages[t - window] {
            count -= 1;
        }
        out.push(count as f64 / window as f64);
    }
    out
}

/// Empirical complementary CDF: `(v, Pr[X >= v])` for each distinct value,
/// ascending in `v`.
pub fn ccdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in s.iter().enumerate() {
        if out.last().is_none_or(|&(last, _)| last != v) {
            out.push((v, (s.len() - i) as f64 / n));
        }
    }
    out
}

/// Tail probability `Pr[X >= v]` read off a CCDF.
pub fn ccdf_at(curve: &[(f64, f64)], v: f64) -> f64 {
    curve.iter().find(|(x, _)| *x >= v).map_or(0.0, |&(_, p)| p)
}

/// Empirical quantile with linear interpolation.
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(f64::total_cmp);
    if s.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

/// Density histogram with Freedman-Diaconis bins: `(left edge, width, density)`.
pub fn histogram(samples: &[f64]) -> Vec<(f64, f64, f64)> {
    if samples.is_empty() {
        return Vec::new();
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let iqr = quantile(samples, 0.75) - quantile(samples, 0.25);
    let n = samples.len() as f64;
    let mut width = 2.0 * iqr / n.cbrt();
    if !(width > 0.0) || hi == lo {
        width = if hi > lo { (hi - lo) / n.sqrt().ceil() } else { 1.0 };
    }
    let bins = (((hi - lo) / width).ceil() as usize).clamp(1, 10_000);
    let mut counts = vec![0usize; bins];
    for &v in samples {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, width, c as f64 / (n * width)))
        .collect()
}

/// Slots until a smoothed series first reaches `frac` of its final plateau
/// (the mean of the last tenth). `None` if it never does.
pub fn slots_to_fraction(series: &[f64], smooth: usize, frac: f64) -> Option<usize> {
    if series.is_empty() {
        return None;
    }
    let tail = &series[series.len() - (series.len() / 10).max(1)..];
    let plateau = mean(tail);
    let target = if plateau >= 0.0 { frac * plateau } else { plateau / frac };
    let mut acc = 0.0;
    for (t, v) in series.iter().enumerate() {
        acc += v;
        if t >= smooth {
            acc -= series[t - smooth];
        }
        let n = (t + 1).min(smooth) as f64;
        if t + 1 >= smooth && acc / n >= target {
            return Some(t + 1);
        }
    }
    None
}
