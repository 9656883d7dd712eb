use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gravmatch::harness::{
    compare, emit_report, monte_carlo_prepared, report_csv, report_json, Prepared, ReportFormat, Scenario,
};
use gravmatch::mapgrid::synth_map;
use gravmatch::{Error, Execution, Result};

/// Gravity map matching simulator.
#[derive(Parser)]
#[command(name = "gravmatch", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic gravity map and write it as a GMAP file.
    SynthMap {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fly one trajectory and write per-step positions and errors as CSV.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output CSV; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo batch over seeds `seed .. seed + n_mc`.
    Mc {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fly two configurations on the same map and seeds.
    Compare {
        /// Reference configuration (flags apply to it).
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Config file layered on top of the reference to form the candidate.
        #[arg(long, value_name = "PATH")]
        candidate_config: Option<PathBuf>,
        /// Candidate override, e.g. `--candidate algorithm=rvbmp2`. Repeatable.
        #[arg(long, value_name = "KEY=VALUE")]
        candidate: Vec<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args)]
struct OutputArgs {
    /// Report path; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Report format; inferred from the file extension when omitted.
    #[arg(long)]
    format: Option<String>,
    /// Include wall-clock matcher times (makes the report run-dependent).
    #[arg(long)]
    with_timing: bool,
}

#[derive(Args)]
struct ScenarioArgs {
    /// key=value scenario file; flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run everything on one thread.
    #[arg(long)]
    sequential: bool,
    #[arg(long = "map", value_name = "PATH")]
    map: Option<String>,
    #[arg(long = "map_origin", value_name = "LON,LAT")]
    map_origin: Option<String>,
    #[arg(long = "map_extent", value_name = "DEG|LON,LAT")]
    map_extent: Option<String>,
    #[arg(long = "map_resolution", value_name = "DEG")]
    map_resolution: Option<String>,
    #[arg(long = "map_roughness", value_name = "smooth|rough")]
    map_roughness: Option<String>,
    #[arg(long = "map_seed")]
    map_seed: Option<String>,
    #[arg(long = "map_bumps")]
    map_bumps: Option<String>,
    /// desk | melbourne-sydney | perth
    #[arg(long = "route")]
    route: Option<String>,
    #[arg(long = "waypoints", value_name = "LON,LAT;LON,LAT;...")]
    waypoints: Option<String>,
    #[arg(long = "speed_deg_per_hr")]
    speed_deg_per_hr: Option<String>,
    #[arg(long = "dt_s")]
    dt_s: Option<String>,
    /// Segment length between corrections.
    #[arg(long = "T")]
    t: Option<String>,
    #[arg(long = "n")]
    n: Option<String>,
    #[arg(long = "o")]
    o: Option<String>,
    #[arg(long = "alpha")]
    alpha: Option<String>,
    #[arg(long = "sigma_z_mgal")]
    sigma_z_mgal: Option<String>,
    #[arg(long = "sigma_v_deg_per_s")]
    sigma_v_deg_per_s: Option<String>,
    #[arg(long = "bias_deg_per_hr", value_name = "B|B_LON,B_LAT")]
    bias_deg_per_hr: Option<String>,
    #[arg(long = "n_mc")]
    n_mc: Option<String>,
    #[arg(long = "seed")]
    seed: Option<String>,
    /// vbmp | rvbmp | rvbmp2 | viterbi_exact | iccp | none
    #[arg(long = "algorithm")]
    algorithm: Option<String>,
    #[arg(long = "steps")]
    steps: Option<String>,
    #[arg(long = "divergence_km")]
    divergence_km: Option<String>,
    #[arg(long = "iccp_max_iter")]
    iccp_max_iter: Option<String>,
    #[arg(long = "iccp_tol")]
    iccp_tol: Option<String>,
}

impl ScenarioArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let all = [
            ("map", &self.map),
            ("map_origin", &self.map_origin),
            ("map_extent", &self.map_extent),
            ("map_resolution", &self.map_resolution),
            ("map_roughness", &self.map_roughness),
            ("map_seed", &self.map_seed),
            ("map_bumps", &self.map_bumps),
            ("route", &self.route),
            ("waypoints", &self.waypoints),
            ("speed_deg_per_hr", &self.speed_deg_per_hr),
            ("dt_s", &self.dt_s),
            ("T", &self.t),
            ("n", &self.n),
            ("o", &self.o),
            ("alpha", &self.alpha),
            ("sigma_z_mgal", &self.sigma_z_mgal),
            ("sigma_v_deg_per_s", &self.sigma_v_deg_per_s),
            ("bias_deg_per_hr", &self.bias_deg_per_hr),
            ("n_mc", &self.n_mc),
            ("seed", &self.seed),
            ("algorithm", &self.algorithm),
            ("steps", &self.steps),
            ("divergence_km", &self.divergence_km),
            ("iccp_max_iter", &self.iccp_max_iter),
            ("iccp_tol", &self.iccp_tol),
        ];
        all.into_iter().filter_map(|(k, v)| v.as_deref().map(|v| (k, v))).collect()
    }

    fn build(&self) -> Result<Scenario> {
        let mut s = Scenario::default();
        if let Some(path) = &self.config {
            s.apply_text(&std::fs::read_to_string(path)?)?;
        }
        for (k, v) in self.overrides() {
            s.set(k, v)?;
        }
        if self.sequential {
            s.exec = Execution::Sequential;
        }
        s.validate()?;
        Ok(s)
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn format_for(output: &OutputArgs) -> Result<ReportFormat> {
    match (&output.format, &output.out) {
        (Some(f), _) => f.parse(),
        (None, Some(p)) => Ok(ReportFormat::from_path(p)),
        (None, None) => Ok(ReportFormat::Json),
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn real_main(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthMap { scenario, out } => {
            let sc = scenario.build()?;
            let map = synth_map(&sc.synth_params())?;
            map.save(&out)?;
            eprintln!(
                "wrote {}x{} map at {} deg to {}",
                map.nrows(),
                map.ncols(),
                map.res_lon(),
                out.display()
            );
        }
        Command::Run { scenario, out } => {
            let sc = scenario.build()?;
            let prepared = Prepared::new(&sc)?;
            let (result, records) = prepared.trace(sc.seed, sc.exec)?;
            let mut csv = String::from("step,time_s,truth_lon,truth_lat,ins_lon,ins_lat,est_lon,est_lat,error_km\n");
            for (k, (r, e)) in records.iter().zip(&result.errors_km).enumerate() {
                let est = r.estimate();
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{}",
                    k + 1,
                    (k + 1) as f64 * sc.dt_s,
                    r.truth.lon,
                    r.truth.lat,
                    r.ins.lon,
                    r.ins.lat,
                    est.lon,
                    est.lat,
                    e
                );
            }
            write_out(out.as_deref(), &csv)?;
            eprintln!(
                "{}: {} steps, success={}, terminal error {:.4} km",
                sc.algorithm,
                result.errors_km.len(),
                result.success,
                result.errors_km.last().copied().unwrap_or(0.0)
            );
        }
        Command::Mc { scenario, output } => {
            let sc = scenario.build()?;
            let prepared = Prepared::new(&sc)?;
            let mut report = monte_carlo_prepared(&prepared, sc.n_mc)?;
            if !output.with_timing {
                report = report.without_timing();
            }
            match output.out.as_deref() {
                Some(p) => emit_report(&report, p, format_for(&output)?)?,
                None => match format_for(&output)? {
                    ReportFormat::Csv => print!("{}", report_csv(&report)),
                    ReportFormat::Json => print!("{}", report_json(&report)?),
                },
            }
            eprintln!(
                "{}: n_mc={} success_rate={:.3} mean={} km std={} km",
                report.algorithm,
                report.n_mc,
                report.success_rate,
                fmt_opt(report.mean_km),
                fmt_opt(report.std_km)
            );
        }
        Command::Compare { scenario, candidate_config, candidate, output } => {
            let reference = scenario.build()?;
            let mut cand = reference.clone();
            if let Some(p) = candidate_config {
                cand.apply_text(&std::fs::read_to_string(p)?)?;
            }
            for kv in &candidate {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("--candidate expects KEY=VALUE, got {kv:?}")))?;
                cand.set(k, v)?;
            }
            cand.validate()?;
            let cmp = compare(&reference, &cand)?;
            let text = match format_for(&output)? {
                ReportFormat::Json => report_json(&cmp)?,
                ReportFormat::Csv => {
                    let mut s = String::from("metric,reference,candidate\n");
                    let (a, b) = (&cmp.reference, &cmp.candidate);
                    let _ = writeln!(s, "algorithm,{},{}", a.algorithm, b.algorithm);
                    let _ = writeln!(s, "mean_km,{},{}", fmt_opt(a.mean_km), fmt_opt(b.mean_km));
                    let _ = writeln!(s, "std_km,{},{}", fmt_opt(a.std_km), fmt_opt(b.std_km));
                    let _ = writeln!(s, "success_rate,{},{}", a.success_rate, b.success_rate);
                    let _ = writeln!(s, "matcher_time_s,{},{}", fmt_opt(a.matcher_time_s), fmt_opt(b.matcher_time_s));
                    let _ = writeln!(s, "tcr,1,{}", fmt_opt(cmp.tcr));
                    let _ = writeln!(s, "work_ratio,1,{}", cmp.work_ratio);
                    let _ = writeln!(s, "candidate_better,,{}", cmp.candidate_better);
                    s
                }
            };
            write_out(output.out.as_deref(), &text)?;
            eprintln!(
                "{} vs {}: TCR={} success {:.3} -> {:.3}, mean {} -> {} km",
                cmp.reference.algorithm,
                cmp.candidate.algorithm,
                fmt_opt(cmp.tcr),
                cmp.reference.success_rate,
                cmp.candidate.success_rate,
                fmt_opt(cmp.reference.mean_km),
                fmt_opt(cmp.candidate.mean_km)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
