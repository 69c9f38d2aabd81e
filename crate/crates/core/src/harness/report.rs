//! Summaries and plots of finished runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::svg::{bar_plot, line_plot, Series};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::metrics::{ccdf, histogram, jain_index, mean, outage_series, std_dev, MetricsLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneSummary {
    pub lane: String,
    pub slots: usize,
    pub mean_sum_rate_mbps: f64,
    pub std_sum_rate_mbps: f64,
    pub mean_jain: f64,
    pub long_term_jain: f64,
    pub outage_rate: f64,
    /// Mean windowed outage over the last quarter of the run.
    pub final_quartile_outage: f64,
    pub mean_urllc_rate_mbps: f64,
    pub mean_reward: Option<f64>,
    /// Reliability at each requested threshold.
    pub reliability: Vec<f64>,
}

fn mbps(cfg: &ScenarioConfig) -> f64 {
    1.0 / (cfg.phy.slot_duration_s * 1e6)
}

pub fn summarize(label: &str, log: &MetricsLog, cfg: &ScenarioConfig, r_min_mbps: &[f64]) -> LaneSummary {
    let scale = mbps(cfg);
    let sums = log.sum_rates();
    let outages = log.outages();
    let theta = outage_series(&outages, cfg.traffic.outage_window);
    let q = theta.len() - theta.len() * 3 / 4;
    let rewards = log.rewards();
    LaneSummary {
        lane: label.to_string(),
        slots: log.len(),
        mean_sum_rate_mbps: mean(&sums) * scale,
        std_sum_rate_mbps: std_dev(&sums) * scale,
        mean_jain: log.mean_slot_jain(),
        long_term_jain: log.long_term_jain(),
        outage_rate: mean(&outages.iter().map(|&o| f64::from(u8::from(o))).collect::<Vec<_>>()),
        final_quartile_outage: mean(&theta[theta.len() - q..]),
        mean_urllc_rate_mbps: mean(&log.records.iter().map(|r| r.urllc_rate).collect::<Vec<_>>()) * scale,
        mean_reward: (!rewards.is_empty()).then(|| mean(&rewards)),
        reliability: r_min_mbps.iter().map(|r| log.reliability(r / scale)).collect(),
    }
}

fn summary_header(r_min_mbps: &[f64]) -> String {
    let mut h = String::from(
        "lane,slots,mean_sum_rate_mbps,std_sum_rate_mbps,mean_jain,long_term_jain,outage_rate,final_quartile_outage,mean_urllc_rate_mbps,mean_reward",
    );
    for r in r_min_mbps {
        write!(h, ",reliability_{r}").unwrap();
    }
    h
}

fn summary_row(s: &LaneSummary) -> String {
    let mut row = format!(
        "{},{},{},{},{},{},{},{},{},{}",
        s.lane,
        s.slots,
        s.mean_sum_rate_mbps,
        s.std_sum_rate_mbps,
        s.mean_jain,
        s.long_term_jain,
        s.outage_rate,
        s.final_quartile_outage,
        s.mean_urllc_rate_mbps,
        s.mean_reward.map(|v| v.to_string()).unwrap_or_default()
    );
    for r in &s.reliability {
        write!(row, ",{r}").unwrap();
    }
    row
}

pub fn summary_csv(rows: &[LaneSummary], r_min_mbps: &[f64]) -> String {
    let mut out = summary_header(r_min_mbps) + "\n";
    for s in rows {
        out += &summary_row(s);
        out.push('\n');
    }
    out
}

fn smooth(xs: &[f64], window: usize) -> Vec<(f64, f64)> {
    let mut acc = 0.0;
    xs.iter()
        .enumerate()
        .map(|(t, &v)| {
            acc += v;
            if t >= window {
                acc -= xs[t - window];
            }
            (t as f64, acc / (t + 1).min(window) as f64)
        })
        .collect()
}

fn save(path: PathBuf, text: String) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Fairness, outage, CCDF, rate-density, reward and reliability charts.
pub fn write_plots(
    dir: &Path,
    lanes: &[(String, MetricsLog)],
    summaries: &[LaneSummary],
    cfg: &ScenarioConfig,
    r_min_mbps: &[f64],
) -> Result<()> {
    let scale = mbps(cfg);
    let tw = cfg.traffic.outage_window;
    let each = |f: &dyn Fn(&MetricsLog) -> Vec<(f64, f64)>| -> Vec<Series> {
        lanes
            .iter()
            .map(|(l, log)| Series { label: l.clone(), points: f(log) })
            .collect()
    };

    let fair = each(&|log| {
        let j: Vec<f64> = log.records.iter().map(|r| jain_index(&r.user_rates)).collect();
        smooth(&j, 100)
    });
    save(dir.join("fairness.svg"), line_plot("Jain fairness (100-slot mean)", "slot", "Jain index", &fair, None))?;

    let theta = |log: &MetricsLog| outage_series(&log.outages(), tw);
    let conv = each(&|log| theta(log).into_iter().enumerate().map(|(t, v)| (t as f64, v)).collect());
    save(
        dir.join("outage.svg"),
        line_plot("Windowed URLLC outage", "slot", "outage frequency", &conv, Some(cfg.traffic.outage_target)),
    )?;

    let tail = each(&|log| ccdf(&theta(log)));
    save(dir.join("ccdf.svg"), line_plot("CCDF of windowed outage", "outage frequency", "P[X >= x]", &tail, None))?;

    let pdf = each(&|log| {
        let s: Vec<f64> = log.sum_rates().iter().map(|r| r * scale).collect();
        histogram(&s).into_iter().map(|(lo, w, d)| (lo + w / 2.0, d)).collect()
    });
    save(dir.join("rate_pdf.svg"), line_plot("Sum eMBB rate density", "Mbit/s", "density", &pdf, None))?;

    let learned: Vec<Series> = lanes
        .iter()
        .filter(|(_, log)| log.records.iter().any(|r| r.reward.is_some()))
        .map(|(l, log)| Series { label: l.clone(), points: smooth(&log.rewards(), 200) })
        .collect();
    if !learned.is_empty() {
        save(dir.join("reward.svg"), line_plot("Reward (200-slot mean)", "slot", "reward", &learned, None))?;
    }

    let cats: Vec<String> = r_min_mbps.iter().map(|r| r.to_string()).collect();
    let groups: Vec<(String, Vec<f64>)> = summaries.iter().map(|s| (s.lane.clone(), s.reliability.clone())).collect();
    save(
        dir.join("reliability.svg"),
        bar_plot("eMBB reliability", "R_min (Mbit/s)", "P[rate >= R_min]", &cats, &groups),
    )
}

fn run_dirs(root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut subdirs = Vec::new();
    for e in entries {
        let e = e.map_err(|e| Error::io(root, e))?;
        if e.path().is_dir() {
            subdirs.push(e.path());
        }
    }
    if root.join("slots.csv").is_file() && root.join("config.toml").is_file() {
        out.push(root.to_path_buf());
    }
    subdirs.sort();
    for d in subdirs {
        run_dirs(&d, out)?;
    }
    Ok(())
}

fn lane_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let primary = std::fs::read_to_string(dir.join("manifest.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v["lanes"][0].as_str().map(str::to_string))
        .unwrap_or_else(|| "primary".into());
    let mut files = vec![(primary, dir.join("slots.csv"))];
    let mut extra = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if let Some(label) = name.strip_prefix("slots-").and_then(|n| n.strip_suffix(".csv")) {
            extra.push((label.to_string(), p));
        }
    }
    extra.sort();
    files.extend(extra);
    Ok(files)
}

/// Re-summarize every run below `root`, regenerate its plots and write
/// `root/report.csv` with one row per run and lane.
pub fn report(root: &Path, r_min_mbps: &[f64]) -> Result<Vec<(PathBuf, Vec<LaneSummary>)>> {
    let mut dirs = Vec::new();
    run_dirs(root, &mut dirs)?;
    let mut table = format!("run,{}\n", summary_header(r_min_mbps));
    let mut all = Vec::new();
    for dir in dirs {
        let cfg = ScenarioConfig::load(&dir.join("config.toml"))?;
        let mut lanes = Vec::new();
        for (label, path) in lane_files(&dir)? {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            lanes.push((label, MetricsLog::from_csv(&text)?));
        }
        let sums: Vec<LaneSummary> = lanes
            .iter()
            .map(|(l, log)| summarize(l, log, &cfg, r_min_mbps))
            .collect();
        save(dir.join("summary.csv"), summary_csv(&sums, r_min_mbps))?;
        write_plots(&dir, &lanes, &sums, &cfg, r_min_mbps)?;
        let rel = dir.strip_prefix(root).unwrap_or(&dir).display().to_string();
        for s in &sums {
            writeln!(table, "{},{}", if rel.is_empty() { "." } else { &rel }, summary_row(s)).unwrap();
        }
        all.push((dir, sums));
    }
    save(root.join("report.csv"), table)?;
    Ok(all)
}
