//! Experiment orchestration.
//!
//! A simulation runs several scheduler lanes over the same channel and
//! traffic realization. Lanes that share an optimizer configuration share
//! its per-slot solve, so comparisons differ only in the puncturing rule.

mod plan;
mod report;
pub mod svg;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::baselines::{demand_from_load, Baseline};
use crate::config::ScenarioConfig;
use crate::drra::{run_drra_on, SaaProblem, SolveReport};
use crate::env::{Environment, UserGeometry};
use crate::error::{Error, Result};
use crate::metrics::{MetricsLog, SlotRecord};
use crate::model::{embb_user_rates, is_outage, Allocation, LinkBudget, SlotState};
use crate::pgacl::{self, Agent, Checkpoint, StartMode};

pub use plan::{expand, run_experiment, run_one, ExperimentPlan, RunOutcome, Sweep, SweepPoint};
pub use report::{report, summarize, write_plots, LaneSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheduler {
    /// The optimizer's own rounded puncturing.
    Drra,
    /// Actor-critic puncturing on top of the optimizer's allocation.
    Pgacl,
    SumRate,
    SumLog,
    Lmcs,
    /// Round-robin split (labelled `equal`).
    #[serde(rename = "equal")]
    Equal,
}

impl Scheduler {
    pub const ALL: [Scheduler; 6] = [
        Scheduler::Drra,
        Scheduler::Pgacl,
        Scheduler::SumRate,
        Scheduler::SumLog,
        Scheduler::Lmcs,
        Scheduler::Equal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheduler::Drra => "drra",
            Scheduler::Pgacl => "pgacl",
            Scheduler::SumRate => "sum-rate",
            Scheduler::SumLog => "sum-log",
            Scheduler::Lmcs => "lmcs",
            Scheduler::Equal => "equal",
        }
    }

    fn baseline(self) -> Option<Baseline> {
        match self {
            Scheduler::SumRate => Some(Baseline::SumRate),
            Scheduler::SumLog => Some(Baseline::SumLog),
            Scheduler::Lmcs => Some(Baseline::Lmcs),
            Scheduler::Equal => Some(Baseline::EqualSplit),
            Scheduler::Drra | Scheduler::Pgacl => None,
        }
    }
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheduler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheduler::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse {
                what: "scheduler".into(),
                message: format!("unknown scheduler `{s}` (expected drra, pgacl, sum-rate, sum-log, lmcs or equal)"),
            })
    }
}

/// How many mini-slots a baseline punctures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Demand {
    /// Enough mini-slots to carry the slot's arrivals.
    #[default]
    Load,
    /// The same count the optimizer punctured in this slot.
    Matched,
}

/// One scheduler run inside a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub label: String,
    pub scheduler: Scheduler,
    pub start: StartMode,
    pub demand: Demand,
    /// Risk parameter of the allocation this lane schedules on; `None` uses
    /// the scenario's.
    pub risk_param: Option<f64>,
}

impl Lane {
    pub fn new(scheduler: Scheduler) -> Self {
        Self {
            label: scheduler.name().to_string(),
            scheduler,
            start: StartMode::Warm,
            demand: Demand::Load,
            risk_param: None,
        }
    }

    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn start(mut self, start: StartMode) -> Self {
        self.start = start;
        self
    }

    pub fn demand(mut self, demand: Demand) -> Self {
        self.demand = demand;
        self
    }

    pub fn risk_param(mut self, mu: f64) -> Self {
        self.risk_param = Some(mu);
        self
    }
}

#[derive(Debug, Clone)]
pub struct LaneResult {
    pub label: String,
    pub scheduler: Scheduler,
    pub log: MetricsLog,
    /// Final learned parameters of an actor-critic lane.
    pub checkpoint: Option<Checkpoint>,
}

#[derive(Debug, Clone, Default)]
pub struct Simulation {
    pub lanes: Vec<LaneResult>,
    /// Per-slot solve reports of the scenario's own optimizer configuration.
    pub reports: Vec<SolveReport>,
    pub warnings: Vec<String>,
}

impl Simulation {
    pub fn lane(&self, label: &str) -> Option<&LaneResult> {
        self.lanes.iter().find(|l| l.label == label)
    }
}

/// Per-slot optimizer configuration keyed by the risk parameter's bits.
struct Solver {
    cfg: ScenarioConfig,
}

struct Solved {
    prob: SaaProblem,
    alloc: Allocation,
}

/// Run `lanes` for `slots` slots on one channel realization.
pub fn simulate(cfg: &ScenarioConfig, geometry: &UserGeometry, lanes: &[Lane], slots: u64) -> Result<Simulation> {
    cfg.validate()?;
    let env = Environment::new(cfg, geometry)?;
    let link = LinkBudget::new(cfg)?;

    let mut solvers: BTreeMap<u64, Solver> = BTreeMap::new();
    let key = |mu: Option<f64>| mu.unwrap_or(cfg.optimizer.risk_param).to_bits();
    solvers.insert(key(None), Solver { cfg: cfg.clone() });
    for lane in lanes {
        solvers.entry(key(lane.risk_param)).or_insert_with(|| {
            let mut c = cfg.clone();
            c.optimizer.risk_param = lane.risk_param.unwrap_or(c.optimizer.risk_param);
            Solver { cfg: c }
        });
    }
    let mut agents: Vec<Option<Agent>> = lanes
        .iter()
        .enumerate()
        .map(|(i, l)| (l.scheduler == Scheduler::Pgacl).then(|| Agent::new(cfg, l.start, i as u64)))
        .collect();

    let mut sim = Simulation {
        lanes: lanes
            .iter()
            .map(|l| LaneResult {
                label: l.label.clone(),
                scheduler: l.scheduler,
                log: MetricsLog::default(),
                checkpoint: None,
            })
            .collect(),
        ..Default::default()
    };
    let base = key(None);
    let zeta = cfg.traffic.packet_bits;

    for t in 0..slots {
        let slot = env.sample_slot(t);
        let delivered = SlotState {
            embb_gain: env.delivered_gains(&slot),
            ..slot.clone()
        };
        let mut solved: BTreeMap<u64, Solved> = BTreeMap::new();
        for (&k, s) in &solvers {
            let prob = SaaProblem::new(&slot, &s.cfg)?;
            let (alloc, rep) = run_drra_on(&prob, t, &s.cfg);
            if !rep.converged || rep.inner_failures > 0 || !rep.feasible_urllc {
                sim.warnings.push(warning(&rep, s.cfg.optimizer.risk_param));
            }
            if k == base {
                sim.reports.push(rep);
            }
            solved.insert(k, Solved { prob, alloc });
        }

        for (i, lane) in lanes.iter().enumerate() {
            let Solved { prob, alloc } = &solved[&key(lane.risk_param)];
            let (z, reward, phi) = match lane.scheduler {
                Scheduler::Drra => (alloc.z.clone(), None, None),
                Scheduler::Pgacl => {
                    let agent = agents[i].as_mut().expect("agent for actor-critic lane");
                    let out = agent.step(cfg, alloc, &slot, prob, Some(&alloc.z));
                    (out.z, Some(out.reward), Some(out.phi))
                }
                sched => {
                    let demand = match lane.demand {
                        Demand::Load => demand_from_load(slot.arrivals, zeta, alloc, &slot, &link),
                        Demand::Matched => solved[&base].alloc.punctured(),
                    };
                    let b = sched.baseline().expect("baseline scheduler");
                    (b.schedule(alloc, &slot, &link, demand), None, None)
                }
            };
            sim.lanes[i].log.push(record(prob, alloc, &delivered, &link, z, zeta, reward, phi));
        }
    }
    for (lane, agent) in sim.lanes.iter_mut().zip(&agents) {
        lane.checkpoint = agent.as_ref().map(|a| a.checkpoint(cfg));
    }
    Ok(sim)
}

#[allow(clippy::too_many_arguments)]
fn record(
    prob: &SaaProblem,
    alloc: &Allocation,
    delivered: &SlotState,
    link: &LinkBudget,
    z: Array2<u32>,
    zeta: f64,
    reward: Option<f64>,
    phi: Option<f64>,
) -> SlotRecord {
    let owner = alloc.owners();
    let levels = pgacl::action_levels(&z, &owner);
    let urllc = pgacl::urllc_rate(prob, &levels, &owner);
    let utility = pgacl::slot_utility(prob, alloc, &z);
    let punctured = z.iter().sum();
    let scheduled = Allocation { z, ..alloc.clone() };
    SlotRecord {
        t: delivered.slot_index,
        arrivals: delivered.arrivals,
        urllc_rate: urllc,
        outage: is_outage(urllc, zeta, delivered.arrivals),
        user_rates: embb_user_rates(&scheduled, delivered, link),
        utility,
        reward,
        phi,
        punctured,
    }
}

fn warning(rep: &SolveReport, mu: f64) -> String {
    let mut what = Vec::new();
    if !rep.converged {
        what.push(format!("no convergence after {} iterations", rep.iterations));
    }
    if rep.inner_failures > 0 {
        what.push(format!("{} inner solves stopped early", rep.inner_failures));
    }
    if !rep.feasible_urllc {
        what.push("URLLC requirement exceeds capacity".to_string());
    }
    format!("slot {} (mu {mu}): {}", rep.slot_index, what.join("; "))
}
