//! Command-line front end: simulate, replay, report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use cmm_sim::io::{
    read_bias_prior_csv, read_log_csv, read_metrics_csv, records_from_rows, write_bias_csv, write_bias_prior_csv,
    write_log_csv, write_metrics_csv,
};
use cmm_sim::metrics::{compute_summary, MetricsRecord, Summary};
use cmm_sim::replay::replay;
use cmm_sim::run_simulation;
use cmm_sim::runner::Algorithm;
use cmm_sim::scenario::{load_scenario, Scenario};

#[derive(Parser)]
#[command(
    name = "cmm",
    version,
    about = "Cooperative map matching for GNSS: simulate, replay, report"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and run one or more estimators on it.
    Simulate {
        /// Scenario file, or the name of a bundled scenario.
        #[arg(long, default_value = "fig2_intersection")]
        scenario: String,
        /// rbpf, static, smoothed or ego; comma-separated for several.
        #[arg(long, value_delimiter = ',', default_value = "rbpf")]
        algo: Vec<Algorithm>,
        /// Overrides the scenario's particle count.
        #[arg(long)]
        particles: Option<usize>,
        /// First seed; defaults to the scenario's.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of seeds, `seed..seed+runs`.
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run estimators over a recorded pseudo-range log.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Supplies lanes, noise and filter settings.
        #[arg(long, default_value = "fig2_intersection")]
        scenario: String,
        /// CSV of `sat_id,bias_prior_m`; otherwise derived from the truth columns.
        #[arg(long)]
        bias_init: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "rbpf")]
        algo: Vec<Algorithm>,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarise every metrics CSV in a directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn load(scenario: &str, particles: Option<usize>) -> Result<Scenario> {
    let mut scn = load_scenario(scenario).with_context(|| format!("loading scenario `{scenario}`"))?;
    if let Some(n) = particles {
        if n == 0 {
            bail!("--particles must be positive");
        }
        scn.config.filter.n_particles = n;
    }
    Ok(scn)
}

fn write_outputs(out: &Path, algo: Algorithm, seed: u64, records: &[MetricsRecord]) -> Result<()> {
    write_metrics_csv(&out.join(format!("metrics_{algo}_seed{seed}.csv")), records)?;
    if algo == Algorithm::Rbpf {
        write_bias_csv(&out.join(format!("bias_{algo}_seed{seed}.csv")), records)?;
    }
    Ok(())
}

fn print_table(summaries: &BTreeMap<String, Summary>) {
    println!(
        "{:<10} {:>5} {:>10} {:>10} {:>14} {:>14} {:>10}",
        "algorithm", "runs", "mean [m]", "±3σ [m]", "med det [m⁴]", "mean det [m⁴]", "bias RMSE"
    );
    for (name, s) in summaries {
        println!(
            "{:<10} {:>5} {:>10.3} {:>10.3} {:>14.3e} {:>14.3e} {:>10}",
            name,
            s.n_runs,
            s.mean_error_m,
            s.three_sigma_m,
            s.median_cov_det_m4,
            s.mean_cov_det_m4,
            s.bias_rmse_m.map_or("-".to_string(), |b| format!("{b:.3}")),
        );
    }
}

fn write_summaries(out: &Path, summaries: &BTreeMap<String, Summary>) -> Result<()> {
    let path = out.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(summaries)?).with_context(|| path.display().to_string())?;
    Ok(())
}

fn simulate(
    scenario: &str,
    algos: &[Algorithm],
    particles: Option<usize>,
    seed: Option<u64>,
    runs: u64,
    out: &Path,
) -> Result<()> {
    let scn = load(scenario, particles)?;
    std::fs::create_dir_all(out).with_context(|| out.display().to_string())?;
    let first = seed.unwrap_or(scn.config.seed);
    let mut summaries = BTreeMap::new();
    for &algo in algos {
        let mut all = Vec::new();
        for seed in first..first + runs {
            let started = std::time::Instant::now();
            let run = run_simulation(&scn, algo, seed)?;
            log::info!("{algo} seed {seed}: {:.2} s", started.elapsed().as_secs_f64());
            write_log_csv(&out.join(format!("log_seed{seed}.csv")), &run.log)?;
            write_bias_prior_csv(&out.join(format!("bias_prior_seed{seed}.csv")), &run.bias_prior)?;
            write_outputs(out, algo, seed, &run.records)?;
            all.push(run.records);
        }
        if let Some(s) = compute_summary(&all) {
            summaries.insert(algo.to_string(), s);
        }
    }
    print_table(&summaries);
    write_summaries(out, &summaries)
}

#[allow(clippy::too_many_arguments)]
fn replay_cmd(
    log_path: &Path,
    scenario: &str,
    bias_init: Option<&Path>,
    algos: &[Algorithm],
    particles: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let scn = load(scenario, particles)?;
    let log = read_log_csv(log_path)?;
    log::info!("{} epochs, Δt = {} s", log.epochs.len(), log.delta_t);
    let prior = bias_init.map(read_bias_prior_csv).transpose()?;
    let seed = seed.unwrap_or(scn.config.seed);
    std::fs::create_dir_all(out).with_context(|| out.display().to_string())?;
    let mut summaries = BTreeMap::new();
    for &algo in algos {
        let records = replay(&scn, &log, algo, prior.as_ref(), seed)?;
        write_outputs(out, algo, seed, &records)?;
        if let Some(s) = compute_summary(&[records]) {
            summaries.insert(algo.to_string(), s);
        }
    }
    print_table(&summaries);
    write_summaries(out, &summaries)
}

fn report(input: &Path) -> Result<()> {
    let mut runs: BTreeMap<String, Vec<Vec<MetricsRecord>>> = BTreeMap::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| input.display().to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(stem) = name.strip_prefix("metrics_").and_then(|n| n.strip_suffix(".csv")) else {
            continue;
        };
        let algo = stem.split("_seed").next().unwrap_or(stem).to_string();
        let rows = read_metrics_csv(&path)?;
        runs.entry(algo).or_default().push(records_from_rows(&rows));
    }
    if runs.is_empty() {
        bail!("no metrics_*.csv files in {}", input.display());
    }
    let summaries: BTreeMap<String, Summary> = runs
        .iter()
        .filter_map(|(a, r)| compute_summary(r).map(|s| (a.clone(), s)))
        .collect();
    print_table(&summaries);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Simulate {
            scenario,
            algo,
            particles,
            seed,
            runs,
            out,
        } => simulate(&scenario, &algo, particles, seed, runs.max(1), &out),
        Command::Replay {
            log,
            scenario,
            bias_init,
            algo,
            particles,
            seed,
            out,
        } => replay_cmd(&log, &scenario, bias_init.as_deref(), &algo, particles, seed, &out),
        Command::Report { input } => report(&input),
    }
}
