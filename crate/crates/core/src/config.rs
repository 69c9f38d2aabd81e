//! Scenario configuration.
//!
//! A scenario is a TOML document with one table per concern (`[phy]`,
//! `[geometry]`, `[traffic]`, `[optimizer]`, `[learning]`) plus a top-level
//! `seed`. Every field is optional; omitted fields take the defaults below,
//! which reproduce the reference 5G NR numerology (1 ms slot, 7 two-symbol
//! mini-slots, 12 x 15 kHz sub-carriers per RB, 20 MHz carrier, 32-byte
//! URLLC packets).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub phy: PhyConfig,
    pub geometry: GeometryConfig,
    pub traffic: TrafficConfig,
    pub optimizer: OptimizerConfig,
    pub learning: LearningConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhyConfig {
    pub num_embb_users: usize,
    pub num_urllc_users: usize,
    /// Usable resource blocks. 20 MHz / 180 kHz leaves room for 111; 100 are
    /// scheduled, the remainder being guard band.
    pub num_rbs: usize,
    pub minislots_per_slot: usize,
    pub symbols_per_minislot: usize,
    pub symbols_per_slot: usize,
    pub subcarriers_per_rb: usize,
    pub subcarrier_spacing_hz: f64,
    pub total_bandwidth_hz: f64,
    pub slot_duration_s: f64,
    /// gNB power budget shared by all eMBB resource blocks (43 dBm).
    pub max_power_w: f64,
    pub thermal_noise_dbm_per_hz: f64,
    pub noise_figure_db: f64,
    /// Channel uses in one punctured RB mini-slot (12 sub-carriers x 2 symbols).
    pub cb_symbols: usize,
    /// Target decoding error probability of a URLLC code block.
    pub decoding_error: f64,
    pub residual_fading: ResidualFading,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub cell_radius_m: f64,
    pub min_distance_m: f64,
    pub pathloss_ref_db: f64,
    pub pathloss_exponent: f64,
    pub reference_distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub packet_bits: f64,
    /// Mean URLLC arrivals per slot (Poisson).
    pub arrival_rate: f64,
    pub outage_target: f64,
    /// Slots in the sliding window used to estimate the outage probability.
    pub outage_window: usize,
}

/// How the sample-average approximation perturbs the realized gains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaaFading {
    /// One exponential fading factor per user and sample, shared by all of
    /// that user's resource blocks.
    PerUser,
    /// Independent factors per user, resource block and sample.
    PerRb,
}

/// Fading the eMBB transmission sees on top of the gains the scheduler
/// knows at the start of the slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualFading {
    /// Rates are delivered at exactly the known gains.
    None,
    /// One exponential factor per user and slot, shared by its RBs.
    PerUser,
    /// Independent exponential factors per user and RB.
    PerRb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Risk sensitivity of the exponential utility, per `risk_unit_bits`.
    pub risk_param: f64,
    /// Rate unit (bits per slot) in which `risk_param` is expressed.
    pub risk_unit_bits: f64,
    pub rounding_threshold: f64,
    pub penalty_weight: f64,
    /// Variance weight of the reporting-only mean-variance objective.
    pub variance_weight: f64,
    pub saa_samples: usize,
    pub saa_fading: SaaFading,
    pub epsilon: f64,
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    pub inner_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub discount: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub minibatch: usize,
    pub replay_capacity: usize,
    pub warmstart_slots: u64,
    /// Standard deviation of the Gaussian draw used for random-start actors.
    pub random_init_scale: f64,
    /// Rewards are divided by this many bits before the TD and actor updates.
    pub reward_unit_bits: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            phy: PhyConfig::default(),
            geometry: GeometryConfig::default(),
            traffic: TrafficConfig::default(),
            optimizer: OptimizerConfig::default(),
            learning: LearningConfig::default(),
        }
    }
}

impl Default for PhyConfig {
    fn default() -> Self {
        Self {
            num_embb_users: 10,
            num_urllc_users: 5,
            num_rbs: 100,
            minislots_per_slot: 7,
            symbols_per_minislot: 2,
            symbols_per_slot: 14,
            subcarriers_per_rb: 12,
            subcarrier_spacing_hz: 15e3,
            total_bandwidth_hz: 20e6,
            slot_duration_s: 1e-3,
            max_power_w: 10f64.powf(4.3) * 1e-3,
            thermal_noise_dbm_per_hz: -174.0,
            noise_figure_db: 9.0,
            cb_symbols: 24,
            decoding_error: 1e-5,
            residual_fading: ResidualFading::PerUser,
        }
    }
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            cell_radius_m: 300.0,
            min_distance_m: 10.0,
            pathloss_ref_db: 38.0,
            pathloss_exponent: 3.5,
            reference_distance_m: 1.0,
        }
    }
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            packet_bits: 256.0,
            arrival_rate: 2.0,
            outage_target: 0.04,
            outage_window: 100,
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            risk_param: -5.0,
            risk_unit_bits: 2e4,
            rounding_threshold: 0.5,
            penalty_weight: -1000.0,
            variance_weight: 0.1,
            saa_samples: 32,
            saa_fading: SaaFading::PerUser,
            epsilon: 1e-3,
            max_outer_iterations: 200,
            max_inner_iterations: 500,
            inner_tolerance: 1e-6,
        }
    }
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            discount: 0.9,
            actor_lr: 1e-5,
            critic_lr: 1e-3,
            minibatch: 32,
            replay_capacity: 10_000,
            warmstart_slots: 500,
            random_init_scale: 1.0,
            reward_unit_bits: 10.0,
        }
    }
}

impl PhyConfig {
    /// Bandwidth of one resource block in Hz.
    pub fn rb_bandwidth_hz(&self) -> f64 {
        self.subcarriers_per_rb as f64 * self.subcarrier_spacing_hz
    }

    /// Bits carried by one resource block over one slot per bit/s/Hz.
    pub fn rb_symbol_budget(&self) -> f64 {
        self.rb_bandwidth_hz() * self.slot_duration_s
    }

    /// Thermal noise power over one resource block, in watts.
    pub fn noise_power_w(&self) -> f64 {
        let dbm = self.thermal_noise_dbm_per_hz
            + 10.0 * self.rb_bandwidth_hz().log10()
            + self.noise_figure_db;
        10f64.powf(dbm / 10.0) * 1e-3
    }

    /// URLLC transmit power on one resource block: the budget split evenly.
    pub fn urllc_power_w(&self) -> f64 {
        self.max_power_w / self.num_rbs as f64
    }
}

impl OptimizerConfig {
    /// Risk parameter rescaled to act on rates expressed in bits per slot.
    pub fn mu_per_bit(&self) -> f64 {
        self.risk_param / self.risk_unit_bits
    }
}

impl ScenarioConfig {
    /// Parse a TOML document. Unknown keys and type errors are reported with
    /// the dotted path of the offending field.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Parse {
            what: "scenario config".into(),
            message: e.to_string(),
        })?;
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    /// Short hex digest of the normalized configuration.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        hex::encode(&digest[..8])
    }

    /// Check every invariant; the first violation is returned with its field path.
    pub fn validate(&self) -> Result<()> {
        let phy = &self.phy;
        let check = |ok: bool, field: &str, msg: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::config(field, msg))
            }
        };
        check(phy.num_embb_users >= 1, "phy.num_embb_users", "must be >= 1")?;
        check(phy.num_urllc_users >= 1, "phy.num_urllc_users", "must be >= 1")?;
        check(phy.num_rbs >= 1, "phy.num_rbs", "must be >= 1")?;
        check(phy.minislots_per_slot >= 1, "phy.minislots_per_slot", "must be >= 1")?;
        check(
            phy.minislots_per_slot * phy.symbols_per_minislot == phy.symbols_per_slot,
            "phy.minislots_per_slot",
            &format!(
                "{} mini-slots x {} symbols does not fill a {}-symbol slot",
                phy.minislots_per_slot, phy.symbols_per_minislot, phy.symbols_per_slot
            ),
        )?;
        check(phy.subcarriers_per_rb >= 1, "phy.subcarriers_per_rb", "must be >= 1")?;
        check(phy.subcarrier_spacing_hz > 0.0, "phy.subcarrier_spacing_hz", "must be > 0")?;
        check(
            phy.num_rbs as f64 * phy.rb_bandwidth_hz() <= phy.total_bandwidth_hz * (1.0 + 1e-12),
            "phy.num_rbs",
            "resource blocks exceed the total bandwidth",
        )?;
        check(phy.slot_duration_s > 0.0, "phy.slot_duration_s", "must be > 0")?;
        check(
            phy.max_power_w > 0.0 && phy.max_power_w.is_finite(),
            "phy.max_power_w",
            "must be a positive number of watts",
        )?;
        check(phy.noise_figure_db.is_finite(), "phy.noise_figure_db", "must be finite")?;
        check(phy.cb_symbols >= 1, "phy.cb_symbols", "must be >= 1")?;
        check(
            phy.decoding_error > 0.0 && phy.decoding_error < 1.0,
            "phy.decoding_error",
            "must lie in (0, 1)",
        )?;

        let geo = &self.geometry;
        check(geo.cell_radius_m > 0.0, "geometry.cell_radius_m", "must be > 0")?;
        check(
            geo.min_distance_m > 0.0 && geo.min_distance_m <= geo.cell_radius_m,
            "geometry.min_distance_m",
            "must lie in (0, cell_radius_m]",
        )?;
        check(geo.reference_distance_m > 0.0, "geometry.reference_distance_m", "must be > 0")?;
        check(geo.pathloss_exponent > 0.0, "geometry.pathloss_exponent", "must be > 0")?;

        let tr = &self.traffic;
        check(tr.packet_bits > 0.0, "traffic.packet_bits", "must be > 0")?;
        check(
            tr.arrival_rate >= 0.0 && tr.arrival_rate.is_finite(),
            "traffic.arrival_rate",
            "must be >= 0",
        )?;
        check(
            tr.outage_target > 0.0 && tr.outage_target < 1.0,
            "traffic.outage_target",
            "must lie in (0, 1)",
        )?;
        check(tr.outage_window >= 1, "traffic.outage_window", "must be >= 1")?;

        let opt = &self.optimizer;
        check(opt.risk_param < 0.0, "optimizer.risk_param", "must be negative (risk-averse)")?;
        check(opt.risk_unit_bits > 0.0, "optimizer.risk_unit_bits", "must be > 0")?;
        check(
            (0.0..=1.0).contains(&opt.rounding_threshold),
            "optimizer.rounding_threshold",
            "must lie in [0, 1]",
        )?;
        check(opt.penalty_weight < 0.0, "optimizer.penalty_weight", "must be negative")?;
        check(opt.variance_weight >= 0.0, "optimizer.variance_weight", "must be >= 0")?;
        check(opt.saa_samples >= 1, "optimizer.saa_samples", "must be >= 1")?;
        check(opt.epsilon > 0.0, "optimizer.epsilon", "must be > 0")?;
        check(opt.max_outer_iterations >= 1, "optimizer.max_outer_iterations", "must be >= 1")?;
        check(opt.max_inner_iterations >= 1, "optimizer.max_inner_iterations", "must be >= 1")?;
        check(opt.inner_tolerance > 0.0, "optimizer.inner_tolerance", "must be > 0")?;

        let rl = &self.learning;
        check(
            (0.0..1.0).contains(&rl.discount),
            "learning.discount",
            "must lie in [0, 1)",
        )?;
        check(rl.actor_lr > 0.0, "learning.actor_lr", "must be > 0")?;
        check(rl.critic_lr > 0.0, "learning.critic_lr", "must be > 0")?;
        check(rl.minibatch >= 1, "learning.minibatch", "must be >= 1")?;
        check(rl.replay_capacity >= 1, "learning.replay_capacity", "must be >= 1")?;
        check(rl.random_init_scale >= 0.0, "learning.random_init_scale", "must be >= 0")?;
        check(rl.reward_unit_bits > 0.0, "learning.reward_unit_bits", "must be > 0")?;
        Ok(())
    }
}
