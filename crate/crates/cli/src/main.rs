//! Command-line driver: simulate truth, run filters and sweeps, and write
//! CSV and binary results.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use otlpf::filters::{FilterKind, RunOptions};
use otlpf::harness::{
    write_grid_summary, write_ground_truth_csv, write_run_rows, Experiment, ExperimentConfig, RunRow, RunWriter,
};
use otlpf::metrics::{rank_histogram, write_rank_histogram_csv};
use otlpf::models::io::{write_binary, Header, PayloadKind};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(name = "otlpf", version, about = "Local particle filter benchmarks on periodic 1-D models")]
struct Cli {
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, env = "OTLPF_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `run.output`; defaults to the working
    /// directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a hidden trajectory and its observations.
    Simulate(Common),
    /// Run the configured filter for every repeat.
    Filter {
        #[command(flatten)]
        common: Common,
        /// Write every filtering ensemble as a binary dump per repeat.
        #[arg(long)]
        dump_ensembles: bool,
        /// Write the partition of unity as CSV (patch filter only).
        #[arg(long)]
        dump_pou: bool,
        /// Write the first assimilation's transport plans as CSV, one file
        /// per patch (patch filter only).
        #[arg(long)]
        dump_plans: bool,
    },
    /// Sweep localisation radius, patch count and kernel width.
    GridSearch(Common),
    /// Rank histogram of the truth within the filtering ensembles.
    RankHist(Common),
    /// Reference filtering statistics for the configured model.
    GroundTruth(Common),
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::from_path(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    let out = common.out.clone().or_else(|| cfg.run.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok((cfg, out))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(common) => {
            let (cfg, out) = load(&common)?;
            let truth = otlpf::harness::simulate_truth(&cfg.model, cfg.run.seed)?;
            truth.write_files(&out)?;
            eprintln!("wrote {} times of {} nodes to {}", truth.times, truth.nodes, out.display());
        }
        Command::GroundTruth(common) => {
            let (cfg, out) = load(&common)?;
            let exp = Experiment::prepare(cfg)?;
            write_ground_truth_csv(create(&out, "ground_truth.csv")?, &exp.ground_truth)?;
        }
        Command::Filter { common, dump_ensembles, dump_pou, dump_plans } => {
            let (cfg, out) = load(&common)?;
            let exp = Experiment::prepare(cfg)?;
            let filter = exp.config.filter.clone();
            if (dump_pou || dump_plans) && filter.kind != FilterKind::Sletpf {
                bail!("partition and plan dumps need the sletpf filter");
            }
            if dump_pou || dump_plans {
                let (pou, plans) = exp.first_step_plans(&filter)?;
                if dump_pou {
                    pou.write_csv(create(&out, "pou.csv")?)?;
                }
                if dump_plans {
                    let dir = out.join("plans");
                    std::fs::create_dir_all(&dir)?;
                    for (b, plan) in plans.iter().enumerate() {
                        plan.write_csv(create(&dir, &format!("patch_{b}.csv"))?)?;
                    }
                }
            }
            let mut writer = RunWriter::new(create(&out, "runs.csv")?)?;
            let options = RunOptions { record_ensembles: dump_ensembles };
            for rep in 0..exp.config.run.repeats {
                match exp.run_once(&filter, rep, options) {
                    Ok(result) => {
                        writer.write(&result.row)?;
                        if let Some(ens) = &result.output.ensembles {
                            let header = Header {
                                kind: PayloadKind::Ensembles,
                                nodes: result.output.nodes as u64,
                                times: result.output.times as u64,
                                observations: exp.truth.observation_count() as u64,
                                particles: filter.particles as u64,
                            };
                            write_binary(create(&out, &format!("ensembles_{rep}.bin"))?, &header, ens)?;
                        }
                        eprintln!("repeat {rep}: config {} in {:.2}s", result.config_hash, result.wall_seconds);
                    }
                    Err(e) => {
                        writer.write(&RunRow::failed(&exp.config, &filter, rep, e.to_string()))?;
                        eprintln!("repeat {rep} failed: {e}");
                    }
                }
            }
            writer.finish()?;
        }
        Command::GridSearch(common) => {
            let (cfg, out) = load(&common)?;
            let exp = Experiment::prepare(cfg)?;
            let result = exp.grid_search(&exp.default_grid())?;
            write_run_rows(create(&out, "grid.csv")?, &result.rows)?;
            write_grid_summary(create(&out, "grid_summary.csv")?, &result)?;
            eprintln!(
                "{} cells run, {} dropped by the admissibility window, {} failed runs",
                result.cells.len(),
                result.dropped.len(),
                result.failures()
            );
        }
        Command::RankHist(common) => {
            let (cfg, out) = load(&common)?;
            let exp = Experiment::prepare(cfg)?;
            let result = exp.run_once(&exp.config.filter, 0, RunOptions { record_ensembles: true })?;
            let ens = result.output.ensembles.as_deref().expect("ensembles were recorded");
            let hist = rank_histogram(ens, &exp.truth.states, exp.config.filter.particles, exp.truth.nodes)?;
            write_rank_histogram_csv(create(&out, "rank_hist.csv")?, &hist)?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    run(cli.command)
}
