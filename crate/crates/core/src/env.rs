//! Seeded channel and traffic generation.
//!
//! Each consumer draws from its own ChaCha stream keyed by
//! `(seed, stream, index)`, so the fading of slot `t` is the same whatever
//! scheduler runs and however many random numbers it consumes.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ResidualFading, ScenarioConfig};
use crate::error::{Error, Result};
use crate::model::SlotState;

/// Named random substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Geometry,
    Fading,
    Traffic,
    /// Fading samples of the optimizer's sample-average approximation.
    Saa,
    Policy,
    /// Residual fading of delivered eMBB transmissions.
    Delivery,
}

impl Stream {
    fn tag(self) -> &'static [u8] {
        match self {
            Stream::Geometry => b"geometry",
            Stream::Fading => b"fading",
            Stream::Traffic => b"traffic",
            Stream::Saa => b"saa",
            Stream::Policy => b"policy",
            Stream::Delivery => b"delivery",
        }
    }
}

/// Deterministic generator for `(seed, stream, index)`.
pub fn substream(seed: u64, stream: Stream, index: u64) -> ChaCha12Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stream.tag());
    h.update(index.to_le_bytes());
    let key: [u8; 32] = h.finalize().into();
    ChaCha12Rng::from_seed(key)
}

/// Distances of every user to the gNB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserGeometry {
    pub embb_m: Vec<f64>,
    pub urllc_m: Vec<f64>,
}

impl UserGeometry {
    /// Users dropped uniformly over the annulus between the minimum distance
    /// and the cell edge.
    pub fn random(cfg: &ScenarioConfig) -> Self {
        let mut rng = substream(cfg.seed, Stream::Geometry, 0);
        let g = &cfg.geometry;
        let (r0, r1) = (g.min_distance_m.powi(2), g.cell_radius_m.powi(2));
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(r0..=r1).sqrt()).collect()
        };
        let embb_m = draw(cfg.phy.num_embb_users);
        let urllc_m = draw(cfg.phy.num_urllc_users);
        Self { embb_m, urllc_m }
    }

    /// Parse a `user_id,distance_m` table. eMBB ids are `e<k>`, URLLC ids
    /// `u<n>`, both zero-based; a header line and `#` comments are skipped.
    pub fn parse_table(text: &str, cfg: &ScenarioConfig) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Parse {
            what: format!("geometry table line {line}"),
            message: msg,
        };
        let mut embb = vec![None; cfg.phy.num_embb_users];
        let mut urllc = vec![None; cfg.phy.num_urllc_users];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("user_id") {
                continue;
            }
            let (id, dist) = line
                .split_once(',')
                .ok_or_else(|| bad(i + 1, "expected `user_id,distance_m`".into()))?;
            let dist: f64 = dist
                .trim()
                .parse()
                .map_err(|e| bad(i + 1, format!("distance: {e}")))?;
            if !(dist > 0.0 && dist <= cfg.geometry.cell_radius_m) {
                return Err(bad(i + 1, format!("distance {dist} outside (0, cell radius]")));
            }
            let id = id.trim();
            let (slots, idx) = match id.split_at_checked(1) {
                Some(("e", rest)) => (&mut embb, rest),
                Some(("u", rest)) => (&mut urllc, rest),
                _ => return Err(bad(i + 1, format!("unknown user id `{id}`"))),
            };
            let idx: usize = idx
                .parse()
                .map_err(|_| bad(i + 1, format!("unknown user id `{id}`")))?;
            let slot = slots
                .get_mut(idx)
                .ok_or_else(|| bad(i + 1, format!("user id `{id}` out of range")))?;
            *slot = Some(dist);
        }
        let collect = |v: Vec<Option<f64>>, prefix: &str| -> Result<Vec<f64>> {
            v.into_iter()
                .enumerate()
                .map(|(i, d)| {
                    d.ok_or_else(|| Error::Parse {
                        what: "geometry table".into(),
                        message: format!("missing user {prefix}{i}"),
                    })
                })
                .collect()
        };
        Ok(Self {
            embb_m: collect(embb, "e")?,
            urllc_m: collect(urllc, "u")?,
        })
    }

    pub fn load(path: &Path, cfg: &ScenarioConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_table(&text, cfg)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("user_id,distance_m\n");
        for (k, d) in self.embb_m.iter().enumerate() {
            writeln!(out, "e{k},{d}").unwrap();
        }
        for (n, d) in self.urllc_m.iter().enumerate() {
            writeln!(out, "u{n},{d}").unwrap();
        }
        out
    }
}

/// Log-distance path loss as a linear power gain.
pub fn pathloss(cfg: &ScenarioConfig, distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::domain(format!("distance must be positive, got {distance_m}")));
    }
    let g = &cfg.geometry;
    let db = g.pathloss_ref_db + 10.0 * g.pathloss_exponent * (distance_m / g.reference_distance_m).log10();
    Ok(10f64.powf(-db / 10.0))
}

/// Generates the slot sequence of one run.
#[derive(Debug, Clone)]
pub struct Environment {
    seed: u64,
    embb_pl: Vec<f64>,
    urllc_pl: Vec<f64>,
    num_rbs: usize,
    minislots: usize,
    minislot_rate: f64,
    residual: ResidualFading,
}

impl Environment {
    pub fn new(cfg: &ScenarioConfig, geometry: &UserGeometry) -> Result<Self> {
        let pl = |ds: &[f64]| ds.iter().map(|&d| pathloss(cfg, d)).collect::<Result<Vec<_>>>();
        Ok(Self {
            seed: cfg.seed,
            embb_pl: pl(&geometry.embb_m)?,
            urllc_pl: pl(&geometry.urllc_m)?,
            num_rbs: cfg.phy.num_rbs,
            minislots: cfg.phy.minislots_per_slot,
            minislot_rate: cfg.traffic.arrival_rate / cfg.phy.minislots_per_slot as f64,
            residual: cfg.phy.residual_fading,
        })
    }

    pub fn embb_pathloss(&self) -> &[f64] {
        &self.embb_pl
    }

    /// Block-fading gains and Poisson arrivals of slot `t`.
    pub fn sample_slot(&self, t: u64) -> SlotState {
        let mut fad = substream(self.seed, Stream::Fading, t);
        let mut gains = |pl: &[f64]| {
            Array2::from_shape_fn((pl.len(), self.num_rbs), |(u, _)| {
                let g: f64 = Exp1.sample(&mut fad);
                pl[u] * g
            })
        };
        let embb_gain = gains(&self.embb_pl);
        let urllc_gain = gains(&self.urllc_pl);

        let mut trf = substream(self.seed, Stream::Traffic, t);
        let arrivals = if self.minislot_rate > 0.0 {
            let pois = Poisson::new(self.minislot_rate).expect("positive finite rate");
            (0..self.minislots).map(|_| pois.sample(&mut trf) as u32).sum()
        } else {
            0
        };
        SlotState {
            embb_gain,
            urllc_gain,
            arrivals,
            slot_index: t,
        }
    }

    /// eMBB gains the transmission of `slot` actually sees: the known gains
    /// times the residual fading drawn for that slot.
    pub fn delivered_gains(&self, slot: &SlotState) -> Array2<f64> {
        let mut rng = substream(self.seed, Stream::Delivery, slot.slot_index);
        let mut g = slot.embb_gain.clone();
        match self.residual {
            ResidualFading::None => {}
            ResidualFading::PerUser => {
                for mut row in g.rows_mut() {
                    let xi: f64 = Exp1.sample(&mut rng);
                    row.mapv_inplace(|h| h * xi);
                }
            }
            ResidualFading::PerRb => g.mapv_inplace(|h| h * Distribution::<f64>::sample(&Exp1, &mut rng)),
        }
        g
    }
}
