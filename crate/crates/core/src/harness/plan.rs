//! Experiment plans: a base scenario, a scheduler, sweep lists and seeds.
//!
//! ```toml
//! name = "fairness"
//! scheduler = "drra"          # drra | pgacl | sum-rate | sum-log | lmcs | equal
//! compare = ["sum-rate"]      # extra lanes on the same realization
//! seeds = [1, 2, 3]
//! slots = 500
//! out = "runs"
//! r_min_mbps = [1.0, 1.5, 2.0]
//! scenario_file = "scenario.toml"   # or an inline [scenario] table
//!
//! [sweep]
//! risk_param = [-10.0, -5.0, -0.1]
//! arrival_rate = [0.5, 1.0]
//! outage_target = [0.04]
//! ```
//!
//! Every sweep point and seed gets its own directory
//! `<out>/<name>/<point>/seed-<seed>`.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{report, simulate, Demand, Lane, Scheduler, Simulation};
use crate::config::ScenarioConfig;
use crate::env::UserGeometry;
use crate::error::{Error, Result};
use crate::pgacl::StartMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    pub scheduler: Scheduler,
    pub compare: Vec<Scheduler>,
    pub seeds: Vec<u64>,
    pub slots: u64,
    pub out: PathBuf,
    /// Rate thresholds for the reliability columns (Mbit/s).
    pub r_min_mbps: Vec<f64>,
    /// Initialization of actor-critic lanes.
    pub start: StartMode,
    /// Puncturing volume of baseline lanes.
    pub demand: Demand,
    pub sweep: Sweep,
    /// Base scenario file, relative to the plan file.
    pub scenario_file: Option<PathBuf>,
    /// User distance table, relative to the plan file.
    pub geometry_file: Option<PathBuf>,
    pub scenario: Option<ScenarioConfig>,
    /// Parallel runs during a sweep; 0 picks the available parallelism.
    pub workers: usize,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            scheduler: Scheduler::Drra,
            compare: Vec::new(),
            seeds: vec![1],
            slots: 1000,
            out: PathBuf::from("runs"),
            r_min_mbps: vec![1.0, 1.5, 2.0, 2.5],
            start: StartMode::Warm,
            demand: Demand::Load,
            sweep: Sweep::default(),
            scenario_file: None,
            geometry_file: None,
            scenario: None,
            workers: 1,
        }
    }
}

/// Lists of values to sweep; an empty list keeps the scenario's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub risk_param: Vec<f64>,
    pub arrival_rate: Vec<f64>,
    pub outage_target: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub risk_param: f64,
    pub arrival_rate: f64,
    pub outage_target: f64,
}

impl SweepPoint {
    pub fn dir_name(&self) -> String {
        format!("mu{}_lam{}_theta{}", self.risk_param, self.arrival_rate, self.outage_target)
    }

    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        cfg.optimizer.risk_param = self.risk_param;
        cfg.traffic.arrival_rate = self.arrival_rate;
        cfg.traffic.outage_target = self.outage_target;
    }
}

/// Cartesian product of the sweep lists around `base`.
pub fn expand(base: &ScenarioConfig, sweep: &Sweep) -> Vec<SweepPoint> {
    let or = |v: &[f64], d: f64| if v.is_empty() { vec![d] } else { v.to_vec() };
    let mus = or(&sweep.risk_param, base.optimizer.risk_param);
    let lams = or(&sweep.arrival_rate, base.traffic.arrival_rate);
    let ths = or(&sweep.outage_target, base.traffic.outage_target);
    let mut out = Vec::new();
    for &risk_param in &mus {
        for &arrival_rate in &lams {
            for &outage_target in &ths {
                out.push(SweepPoint { risk_param, arrival_rate, outage_target });
            }
        }
    }
    out
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Parse {
            what: "experiment plan".into(),
            message: e.to_string(),
        })?;
        serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            field: e.path().to_string(),
            message: e.into_inner().to_string(),
        })
    }

    /// Read a plan and resolve its file references against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut plan = Self::from_toml_str(&text)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for f in [&mut plan.scenario_file, &mut plan.geometry_file].into_iter().flatten() {
            if f.is_relative() {
                *f = dir.join(&*f);
            }
        }
        Ok(plan)
    }

    /// The base scenario: the referenced file, the inline table or defaults.
    pub fn base_scenario(&self) -> Result<ScenarioConfig> {
        let cfg = match (&self.scenario_file, &self.scenario) {
            (Some(_), Some(_)) => {
                return Err(Error::config("scenario", "give either scenario_file or [scenario], not both"))
            }
            (Some(f), None) => ScenarioConfig::load(f)?,
            (None, Some(c)) => c.clone(),
            (None, None) => ScenarioConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name", "must be a non-empty single path component"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.r_min_mbps.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::config("r_min_mbps", "thresholds must be finite and nonnegative"));
        }
        let base = self.base_scenario()?;
        for p in expand(&base, &self.sweep) {
            let mut cfg = base.clone();
            p.apply(&mut cfg);
            cfg.validate().map_err(|e| match e {
                Error::Config { field, message } => Error::Config {
                    field: format!("sweep point {}: {field}", p.dir_name()),
                    message,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn lanes(&self) -> Vec<Lane> {
        let mut scheds = vec![self.scheduler];
        for &s in &self.compare {
            if !scheds.contains(&s) {
                scheds.push(s);
            }
        }
        scheds
            .into_iter()
            .map(|s| Lane::new(s).start(self.start).demand(self.demand))
            .collect()
    }

    fn geometry(&self, cfg: &ScenarioConfig) -> Result<UserGeometry> {
        match &self.geometry_file {
            Some(f) => UserGeometry::load(f, cfg),
            None => Ok(UserGeometry::random(cfg)),
        }
    }

    /// Directory of one run.
    pub fn run_dir(&self, point: &SweepPoint, seed: u64) -> PathBuf {
        self.out.join(&self.name).join(point.dir_name()).join(format!("seed-{seed}"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub plan: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub slots: u64,
    pub lanes: Vec<String>,
    pub point: SweepPoint,
    pub wall_time_s: f64,
    pub solver_warnings: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub warnings: Vec<String>,
}

fn version() -> String {
    let base = format!("v{}", env!("CARGO_PKG_VERSION"));
    let git = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    match git {
        Some(g) => format!("{base}-g{g}"),
        None => base,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Simulate one sweep point and seed and write its artifacts.
pub fn run_one(plan: &ExperimentPlan, base: &ScenarioConfig, point: &SweepPoint, seed: u64) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut cfg = base.clone();
    point.apply(&mut cfg);
    cfg.seed = seed;
    let geometry = plan.geometry(&cfg)?;
    let lanes = plan.lanes();
    let sim = simulate(&cfg, &geometry, &lanes, plan.slots)?;

    let dir = plan.run_dir(point, seed);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write(&dir.join("config.toml"), &cfg.to_toml_string())?;
    write(&dir.join("geometry.csv"), &geometry.to_table())?;
    write_lanes(&dir, &sim, &cfg, &plan.r_min_mbps)?;
    let solver: String = sim.reports.iter().map(|r| r.to_json_line() + "\n").collect();
    write(&dir.join("solver.jsonl"), &solver)?;
    for lane in &sim.lanes {
        if let Some(ck) = &lane.checkpoint {
            ck.save(&dir.join(format!("checkpoint-{}.json", lane.label)))?;
        }
    }

    let manifest = Manifest {
        plan: plan.name.clone(),
        version: version(),
        config_hash: cfg.config_hash(),
        seed,
        slots: plan.slots,
        lanes: sim.lanes.iter().map(|l| l.label.clone()).collect(),
        point: *point,
        wall_time_s: start.elapsed().as_secs_f64(),
        solver_warnings: sim.warnings.len(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(&dir.join("manifest.json"), &(json + "\n"))?;
    Ok(RunOutcome { dir, manifest, warnings: sim.warnings })
}

/// `slots.csv` for the first lane, `slots-<label>.csv` for the others, one
/// `summary.csv` and the plots.
fn write_lanes(dir: &Path, sim: &Simulation, cfg: &ScenarioConfig, r_min_mbps: &[f64]) -> Result<()> {
    let mut named = Vec::new();
    for (i, lane) in sim.lanes.iter().enumerate() {
        let file = if i == 0 { "slots.csv".to_string() } else { format!("slots-{}.csv", lane.label) };
        write(&dir.join(file), &lane.log.to_csv())?;
        named.push((lane.label.clone(), lane.log.clone()));
    }
    let summaries: Vec<_> = named
        .iter()
        .map(|(l, log)| report::summarize(l, log, cfg, r_min_mbps))
        .collect();
    write(&dir.join("summary.csv"), &report::summary_csv(&summaries, r_min_mbps))?;
    report::write_plots(dir, &named, &summaries, cfg, r_min_mbps)
}

/// Run every sweep point and seed of `plan`. With `sweep == false` only the
/// base scenario is run.
pub fn run_experiment(plan: &ExperimentPlan, sweep: bool) -> Result<Vec<RunOutcome>> {
    plan.validate()?;
    let base = plan.base_scenario()?;
    let points = if sweep {
        expand(&base, &plan.sweep)
    } else {
        expand(&base, &Sweep::default())
    };
    let jobs: Vec<(SweepPoint, u64)> = points
        .iter()
        .flat_map(|p| plan.seeds.iter().map(move |&s| (*p, s)))
        .collect();
    let workers = match plan.workers {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(jobs.len().max(1));

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunOutcome>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((p, seed)) = jobs.get(i) else { break };
                let r = run_one(plan, &base, p, *seed);
                results.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    let outcomes = results
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<Result<Vec<_>>>()?;
    if sweep {
        let root = plan.out.join(&plan.name);
        report::report(&root, &plan.r_min_mbps)?;
    }
    Ok(outcomes)
}
