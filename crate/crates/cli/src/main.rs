mod config;
mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rpahbf::baselines::HbfContext;
use rpahbf::channel::{generate_dataset, generate_samples, read_dataset, Dataset, FloatWidth, GenerateOptions};
use rpahbf::config::dbm_to_watts;
use rpahbf::net::{evaluate, evaluate_solutions, train, PrHbfNet, Solver};
use rpahbf::nn::{read_checkpoint, restore_into, write_checkpoint};
use rpahbf::{EmCsiTensor, Error, SystemConfig};

use crate::config::RunConfig;
use crate::manifest::{manifest_path_for, RunManifest};

/// Channel generation, training and solver comparison for hybrid
/// beamforming with pattern-reconfigurable antennas.
#[derive(Parser)]
#[command(name = "rpahbf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a channel dataset.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        count: usize,
        /// Defaults to `system.rng_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Store the payload as 32-bit floats.
        #[arg(long)]
        f32: bool,
    },
    /// Train the network; writes best/last checkpoints and the history.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides `training.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Solve every sample of a dataset and write per-sample SE.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        solver: SolverName,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Mode used by the fixed solver; overrides `eval.fixed_mode`.
        #[arg(long)]
        mode: Option<usize>,
        /// Seed of the random solver; overrides `eval.random_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the transmit power stored with the dataset.
        #[arg(long)]
        pt_dbm: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean SE of several solvers along one axis, as tidy CSV.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "fixed,greedy")]
        solvers: Vec<SolverName>,
        /// Samples generated per sweep point.
        #[arg(long, default_value_t = 64)]
        count: usize,
        /// Defaults to `system.rng_seed`; user-count points use `seed + K`.
        #[arg(long)]
        seed: Option<u64>,
        /// Evaluate a stored dataset instead of generating one (power axis only).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverName {
    Prhbfnet,
    Greedy,
    GreedyHbfnet,
    Exhaustive,
    Random,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[allow(non_camel_case_types)]
enum Axis {
    pt_dbm,
    num_users,
}

impl Axis {
    fn label(self) -> &'static str {
        match self {
            Axis::pt_dbm => "pt_dbm",
            Axis::num_users => "num_users",
        }
    }
}

fn solver_for(name: SolverName, cfg: &RunConfig, mode: Option<usize>, seed: Option<u64>) -> Solver {
    match name {
        SolverName::Prhbfnet => Solver::PrHbfNet,
        SolverName::Greedy => Solver::Greedy(cfg.greedy.to_core()),
        SolverName::GreedyHbfnet => Solver::GreedyHbfNet(cfg.greedy.to_core()),
        SolverName::Exhaustive => Solver::Exhaustive { cap: cfg.eval.exhaustive_cap },
        SolverName::Random => Solver::Random { seed: seed.unwrap_or(cfg.eval.random_seed) },
        SolverName::Fixed => Solver::Fixed { mode: mode.unwrap_or(cfg.eval.fixed_mode) },
    }
}

/// Exit status: 2 for configuration problems, 3 for I/O and file-format
/// problems, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::Domain(_) | Error::Shape(_) | Error::SearchTooLarge { .. } => 2,
                Error::Io(_) | Error::Format(_) => 3,
                Error::Degenerate(_) | Error::Overflow { .. } => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn configure_workers() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("RPAHBF_WORKERS") {
        let n: usize = v.parse().map_err(|_| config_error(format!("RPAHBF_WORKERS={v} is not a count")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    Ok(())
}

fn load_dataset(path: &Path) -> anyhow::Result<Dataset> {
    read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn load_network(sys: &SystemConfig, cfg: &RunConfig, checkpoint: &Path) -> anyhow::Result<PrHbfNet> {
    let mut net = PrHbfNet::new(sys, &cfg.network)?;
    let stored = read_checkpoint(checkpoint).with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
    restore_into(net.params_mut(), &stored)
        .map_err(|e| config_error(format!("checkpoint {} does not fit the network: {e}", checkpoint.display())))?;
    Ok(net)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn pattern_string(modes: &[usize]) -> String {
    modes.iter().map(|m| m.to_string()).collect::<Vec<_>>().join("-")
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_workers()?;
    match cli.command {
        Command::GenData { config, count, seed, out, f32 } => {
            let (cfg, _) = RunConfig::load(config.as_deref())?;
            let seed = seed.unwrap_or(cfg.system.rng_seed);
            let opts = GenerateOptions {
                float_width: if f32 { FloatWidth::F32 } else { FloatWidth::F64 },
                ..Default::default()
            };
            let mut manifest = RunManifest::start("gen-data", cfg.to_toml());
            manifest.seed("dataset", seed);
            if let Some(p) = &config {
                manifest.input(p)?;
            }
            create(&out)?;
            let header = generate_dataset(&cfg.system, count, seed, &out, opts)?;
            manifest.output(&out)?;
            manifest.finish(&manifest_path_for(&out))?;
            eprintln!(
                "wrote {} samples (Nc={}, K={}, Nt={}, M={}) to {}",
                header.count,
                header.num_subcarriers,
                header.num_users,
                header.num_antennas,
                header.num_patterns,
                out.display()
            );
        }
        Command::Train { config, data, val, out, epochs } => {
            let (mut cfg, _) = RunConfig::load(config.as_deref())?;
            if let Some(e) = epochs {
                cfg.training.epochs = e;
            }
            let train_set = load_dataset(&data)?;
            let val_set = match &val {
                Some(p) => load_dataset(p)?,
                None => Dataset { samples: Vec::new(), ..train_set.clone() },
            };
            let sys = train_set.config.clone();
            if val_set.samples.first().is_some_and(|s| s.check_config(&sys).is_err()) {
                bail!(config_error("validation data does not match the training data dimensions"));
            }
            cfg.system = sys.clone();
            let ctx = HbfContext::from_config(&sys)?;
            let mut net = PrHbfNet::new(&sys, &cfg.network)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut manifest = RunManifest::start("train", cfg.to_toml());
            manifest.seed("init", cfg.network.init_seed);
            manifest.seed("shuffle", cfg.training.seed);
            manifest.input(&data)?;
            if let Some(p) = &val {
                manifest.input(p)?;
            }
            let outcome = train(&mut net, &train_set.samples, &val_set.samples, &ctx.budget, &cfg.training, |e| {
                eprintln!("epoch {:>3}  loss {:.4}  val_se {:.4}", e.epoch, e.mean_loss, e.val_se)
            })?;
            let best = out.join("best.rpac");
            let last = out.join("last.rpac");
            let history = out.join("history.csv");
            let resolved = out.join("run.toml");
            write_checkpoint(&outcome.best, &best)?;
            write_checkpoint(&outcome.last, &last)?;
            let mut w = create(&history)?;
            outcome.history.write_csv(&mut w)?;
            w.flush()?;
            std::fs::write(&resolved, cfg.to_toml())?;
            for p in [&best, &last, &history, &resolved] {
                manifest.output(p)?;
            }
            manifest.finish(&out.join("manifest.json"))?;
            eprintln!(
                "initial val SE {:.4}, best {:.4} (epoch {}), outputs in {}",
                outcome.initial_val_se,
                outcome.best_val_se,
                outcome.best_epoch,
                out.display()
            );
        }
        Command::Eval { config, data, solver, checkpoint, mode, seed, pt_dbm, out } => {
            let (mut cfg, _) = RunConfig::load(config.as_deref())?;
            let ds = load_dataset(&data)?;
            let mut sys = ds.config.clone();
            if let Some(p) = pt_dbm {
                sys.transmit_power_dbm = p;
            }
            cfg.system = sys.clone();
            let ctx = HbfContext::from_config(&sys)?;
            let solver = solver_for(solver, &cfg, mode, seed);
            let mut manifest = RunManifest::start("eval", cfg.to_toml());
            manifest.input(&data)?;
            let net = match (&checkpoint, solver.needs_model()) {
                (Some(p), true) => {
                    manifest.input(p)?;
                    Some(load_network(&sys, &cfg, p)?)
                }
                (None, true) => bail!(config_error(format!("solver {} needs --checkpoint", solver.name()))),
                _ => None,
            };
            let sols = evaluate_solutions(&ds.samples, &solver, &ctx, net.as_ref())?;
            let report = rpahbf::net::EvalReport::from_values(sols.iter().map(|s| s.achieved_se).collect());
            let mut w = create(&out)?;
            writeln!(w, "sample,solver,se,std,pattern")?;
            for (i, s) in sols.iter().enumerate() {
                writeln!(w, "{i},{},{:.9},,{}", solver.name(), s.achieved_se, pattern_string(s.pattern.modes()))?;
            }
            writeln!(w, "mean,{},{:.9},{:.9},", solver.name(), report.mean, report.std)?;
            w.flush()?;
            manifest.output(&out)?;
            manifest.finish(&manifest_path_for(&out))?;
            eprintln!("{}: mean SE {:.4} over {} samples", solver.name(), report.mean, sols.len());
        }
        Command::Sweep { config, axis, values, solvers, count, seed, data, checkpoint, out } => {
            let (cfg, _) = RunConfig::load(config.as_deref())?;
            let seed = seed.unwrap_or(cfg.system.rng_seed);
            let solvers: Vec<Solver> = solvers.iter().map(|&s| solver_for(s, &cfg, None, None)).collect();
            let needs_model = solvers.iter().any(Solver::needs_model);
            let mut manifest = RunManifest::start("sweep", cfg.to_toml());
            if let Some(p) = &config {
                manifest.input(p)?;
            }
            let mut rows = Vec::new();
            match axis {
                Axis::pt_dbm => {
                    let (sys, samples): (SystemConfig, Vec<EmCsiTensor>) = match &data {
                        Some(p) => {
                            manifest.input(p)?;
                            let ds = load_dataset(p)?;
                            (ds.config, ds.samples)
                        }
                        None => {
                            manifest.seed("dataset", seed);
                            (cfg.system.clone(), generate_samples(&cfg.system, count, seed)?)
                        }
                    };
                    let net = match (&checkpoint, needs_model) {
                        (Some(p), true) => {
                            manifest.input(p)?;
                            Some(load_network(&sys, &cfg, p)?)
                        }
                        (None, true) => bail!(config_error("network solvers need --checkpoint")),
                        _ => None,
                    };
                    let base = HbfContext::from_config(&sys)?;
                    for &v in &values {
                        let ctx = base.with_pt_watts(dbm_to_watts(v));
                        for s in &solvers {
                            rows.push((v, s.name(), evaluate(&samples, s, &ctx, net.as_ref())?));
                        }
                    }
                }
                Axis::num_users => {
                    if data.is_some() || needs_model {
                        bail!(config_error("a user-count sweep regenerates data and supports classical solvers only"));
                    }
                    for &v in &values {
                        if v.fract() != 0.0 || v < 1.0 {
                            bail!(config_error(format!("user count {v} is not a positive integer")));
                        }
                        let k = v as usize;
                        let sys = SystemConfig { num_users: k, ..cfg.system.clone() };
                        sys.validate()?;
                        let point_seed = seed + k as u64;
                        manifest.seed(&format!("dataset_k{k}"), point_seed);
                        let samples = generate_samples(&sys, count, point_seed)?;
                        let ctx = HbfContext::from_config(&sys)?;
                        for s in &solvers {
                            rows.push((v, s.name(), evaluate(&samples, s, &ctx, None)?));
                        }
                    }
                }
            }
            let mut w = create(&out)?;
            writeln!(w, "axis,value,solver,mean_se,std_se,n")?;
            for (v, name, r) in &rows {
                writeln!(w, "{},{},{},{:.9},{:.9},{}", axis.label(), v, name, r.mean, r.std, r.per_sample.len())?;
            }
            w.flush()?;
            manifest.output(&out)?;
            manifest.finish(&manifest_path_for(&out))?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
