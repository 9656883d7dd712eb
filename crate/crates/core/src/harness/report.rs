//! Monte Carlo batches and their reports.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

use super::run::{Prepared, RunResult};
use super::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: String,
    /// Echo of the full configuration, in config-file syntax.
    pub config: String,
    pub n_mc: usize,
    pub steps: usize,
    pub dt_s: f64,
    pub threshold_km: f64,
    /// Mean error per step over successful runs (empty if none succeeded).
    pub error_k: Vec<f64>,
    /// Sample standard deviation across successful runs, per step.
    pub error_k_std: Vec<f64>,
    /// Mean of `error_k`.
    pub mean_km: Option<f64>,
    /// Sample standard deviation of `error_k` over steps.
    pub std_km: Option<f64>,
    pub success_rate: f64,
    pub work: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matcher_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tcr: Option<f64>,
    pub runs: Vec<RunResult>,
}

impl RunReport {
    /// Aggregates runs given in seed order.
    pub fn from_runs(prepared: &Prepared, runs: Vec<RunResult>) -> Self {
        let sc = &prepared.scenario;
        let (error_k, error_k_std) = per_step_stats(&runs, prepared.steps());
        let (mean_km, std_km) = series_stats(&error_k);
        let ok = runs.iter().filter(|r| r.success).count();
        let matcher_time_s = runs.iter().map(|r| r.wall_time_s).sum::<Option<f64>>();
        RunReport {
            algorithm: sc.algorithm.to_string(),
            config: sc.to_text(),
            n_mc: runs.len(),
            steps: prepared.steps(),
            dt_s: sc.dt_s,
            threshold_km: prepared.threshold_km,
            error_k,
            error_k_std,
            mean_km,
            std_km,
            success_rate: ok as f64 / runs.len() as f64,
            work: runs.iter().map(|r| r.work).sum(),
            matcher_time_s,
            tcr: None,
            runs,
        }
    }

    /// Drops every wall-clock figure so the report depends only on the inputs.
    pub fn without_timing(mut self) -> Self {
        self.matcher_time_s = None;
        self.tcr = None;
        for r in &mut self.runs {
            r.wall_time_s = None;
        }
        self
    }

    /// `matcher_time_s / reference.matcher_time_s`.
    pub fn time_ratio(&self, reference: &RunReport) -> Option<f64> {
        Some(self.matcher_time_s? / reference.matcher_time_s?)
    }

    /// `work / reference.work`, a timing-free cost ratio.
    pub fn work_ratio(&self, reference: &RunReport) -> f64 {
        self.work as f64 / reference.work as f64
    }
}

/// Per-step mean and sample std over the successful runs.
pub fn per_step_stats(runs: &[RunResult], steps: usize) -> (Vec<f64>, Vec<f64>) {
    let ok: Vec<&RunResult> = runs.iter().filter(|r| r.success).collect();
    if ok.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let m = ok.len() as f64;
    let mean: Vec<f64> = (0..steps).map(|k| ok.iter().map(|r| r.errors_km[k]).sum::<f64>() / m).collect();
    let std = (0..steps)
        .map(|k| {
            if ok.len() < 2 {
                return 0.0;
            }
            let ss: f64 = ok.iter().map(|r| (r.errors_km[k] - mean[k]).powi(2)).sum();
            (ss / (m - 1.0)).sqrt()
        })
        .collect();
    (mean, std)
}

/// Mean and corrected sample standard deviation of a series.
pub fn series_stats(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let l = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / l;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (l - 1.0)).sqrt()
    };
    (Some(mean), Some(std))
}

/// Runs seeds `seed .. seed + n_mc` of a prepared scenario.
pub fn monte_carlo_prepared(prepared: &Prepared, n_mc: usize) -> Result<RunReport> {
    let sc = &prepared.scenario;
    let outer = sc.exec;
    // parallelise across runs, not inside them
    let inner = if n_mc > 1 { Execution::Sequential } else { outer };
    let runs = outer
        .map_range(n_mc, |i| prepared.run(sc.seed + i as u64, inner))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport::from_runs(prepared, runs))
}

pub fn monte_carlo(scenario: &Scenario, n_mc: usize) -> Result<RunReport> {
    if n_mc == 0 {
        return Err(Error::Config("n_mc must be at least 1".into()));
    }
    monte_carlo_prepared(&Prepared::new(scenario)?, n_mc)
}

/// Two configurations flown on the same seeds and the same map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: RunReport,
    pub candidate: RunReport,
    /// Candidate matcher time over reference matcher time.
    pub tcr: Option<f64>,
    pub work_ratio: f64,
    /// Fraction of seeds where both succeeded and the candidate's mean error is strictly lower.
    pub candidate_better: f64,
}

pub fn compare(reference: &Scenario, candidate: &Scenario) -> Result<Comparison> {
    let map = reference.build_map()?;
    let cand_map = if candidate.map_source() == reference.map_source() { map.clone() } else { candidate.build_map()? };
    let a = monte_carlo_prepared(&Prepared::with_map(reference, map)?, reference.n_mc)?;
    let b = monte_carlo_prepared(&Prepared::with_map(candidate, cand_map)?, reference.n_mc)?;
    let better = a
        .runs
        .iter()
        .zip(&b.runs)
        .filter(|(x, y)| x.success && y.success && mean(&y.errors_km) < mean(&x.errors_km))
        .count();
    let mut b = b;
    b.tcr = b.time_ratio(&a);
    Ok(Comparison {
        tcr: b.tcr,
        work_ratio: b.work_ratio(&a),
        candidate_better: better as f64 / a.runs.len() as f64,
        reference: a,
        candidate: b,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

impl ReportFormat {
    /// Picks the format from a file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

/// `step,time_s,error_km_mean,error_km_std`, one row per step.
pub fn report_csv(report: &RunReport) -> String {
    let mut s = String::from("step,time_s,error_km_mean,error_km_std\n");
    for k in 0..report.steps {
        let (m, sd) = match (report.error_k.get(k), report.error_k_std.get(k)) {
            (Some(m), Some(sd)) => (m.to_string(), sd.to_string()),
            _ => ("nan".into(), "nan".into()),
        };
        let _ = writeln!(s, "{},{},{},{}", k + 1, (k + 1) as f64 * report.dt_s, m, sd);
    }
    s
}

pub fn report_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn emit_report(report: &RunReport, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => report_csv(report),
        ReportFormat::Json => report_json(report)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(errors: Vec<f64>, success: bool) -> RunResult {
        RunResult {
            seed: 0,
            checked_steps: errors.len(),
            errors_km: errors,
            failures: 0,
            success,
            work: 3,
            wall_time_s: Some(0.5),
        }
    }

    #[test]
    fn error_k_is_the_mean_over_runs() {
        let (m, sd) = per_step_stats(&[run(vec![1.0], true), run(vec![3.0], true)], 1);
        assert_eq!(m, vec![2.0]);
        assert_eq!(sd, vec![2f64.sqrt()]);
        let (m, _) = per_step_stats(&[run(vec![1.0], true), run(vec![300.0], false)], 1);
        assert_eq!(m, vec![1.0]);
    }

    #[test]
    fn series_stats_use_corrected_std() {
        let (m, sd) = series_stats(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, Some(2.5));
        assert!((sd.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(series_stats(&[]), (None, None));
    }

    fn report() -> RunReport {
        RunReport {
            algorithm: "rvbmp2".into(),
            config: "T=6\n".into(),
            n_mc: 2,
            steps: 3,
            dt_s: 12.0,
            threshold_km: 7.2,
            error_k: vec![0.1, 0.2, 0.30000000000000004],
            error_k_std: vec![0.0, 0.01, 1e-17],
            mean_km: Some(0.2),
            std_km: Some(0.1),
            success_rate: 1.0,
            work: 6,
            matcher_time_s: Some(1.0),
            tcr: Some(1.0),
            runs: vec![run(vec![0.1, 0.2, 0.3], true), run(vec![0.1, 0.2, 0.3], true)],
        }
    }

    #[test]
    fn json_round_trip_and_stable_bytes() {
        let r = report();
        let text = report_json(&r).unwrap();
        assert_eq!(serde_json::from_str::<RunReport>(&text).unwrap(), r);
        assert_eq!(report_json(&r).unwrap(), text);
        let bare = r.without_timing();
        assert!(!report_json(&bare).unwrap().contains("time"));
    }

    #[test]
    fn csv_has_header_plus_one_row_per_step() {
        let csv = report_csv(&report());
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(csv.lines().nth(1).unwrap(), "1,12,0.1,0");
    }

    #[test]
    fn ratio_against_itself_is_one() {
        let r = report();
        assert_eq!(r.time_ratio(&r), Some(1.0));
        assert_eq!(r.work_ratio(&r), 1.0);
    }
}
