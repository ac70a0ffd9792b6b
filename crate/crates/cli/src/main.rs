//! `scaled-nn`: train runs, limit integrations, expansion reconstructions,
//! ensemble scaling studies and MNIST sweeps from a key=value config.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use scaled_nn::experiments::{
    accuracy_sweep, load_mnist, mc_ensemble, scaling_fit, write_accuracy_csv, write_fit_csv, write_scaling_csv, Config, EnsembleSpec, SweepSpec,
};
use scaled_nn::kernels::KernelSpec;
use scaled_nn::limit_ode::{classify_regime, closed_form_errors, expansion_recursion, reconstruct, LimitProblem};
use scaled_nn::model::init_params;
use scaled_nn::trainer::train;
use scaled_nn::Error;

const THREADS_ENV: &str = "SCALED_NN_THREADS";

/// Closed-form tolerance of `selftest`.
const SELFTEST_TOL: f64 = 1e-8;

#[derive(Parser, Debug)]
#[command(name = "scaled-nn", version, about = "Scaled two- and three-layer networks, their limit ODEs and expansions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One SGD run on the synthetic dataset; writes trajectory.csv.
    Train(Common),
    /// The limit ODE for h, its kernel tables and the K correction; writes h.csv, k.csv and kernel tables.
    Limit(Common),
    /// The expansion terms Q_0..Q_top and the reconstruction at N2; writes expansion.csv and reconstruction.csv.
    Expand(Common),
    /// SGD ensembles over the N2 grid against the limit ODE; writes scaling.csv and fit.csv.
    Ensemble(Common),
    /// Accuracy sweeps over gamma2 at gamma1 and over gamma1 at gamma2 = 1; writes accuracy.csv.
    Mnist(Common),
    /// Closed-form ODE checks; exits 0 iff every error is below 1e-8.
    Selftest(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// key=value config file; keys left out keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override one config key after the file is read.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for ensembles (default: $SCALED_NN_THREADS or all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Master seed, applied after the overrides.
    #[arg(long)]
    seed: Option<u64>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Limit(_) => "limit",
            Command::Expand(_) => "expand",
            Command::Ensemble(_) => "ensemble",
            Command::Mnist(_) => "mnist",
            Command::Selftest(_) => "selftest",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Train(c) | Command::Limit(c) | Command::Expand(c) | Command::Ensemble(c) | Command::Mnist(c) | Command::Selftest(c) => c,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

/// 1 for domain errors, 2 for I/O, format and configuration errors.
fn exit_code(e: &anyhow::Error) -> ExitCode {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(err) if !err.is_io() => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn load_config(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => Config::default(),
    };
    for o in &common.overrides {
        cfg.set(o)?;
    }
    if let Some(seed) = common.seed {
        cfg.set(&format!("seed={seed}"))?;
    }
    Ok(cfg)
}

fn init_threads(common: &Common) -> Result<()> {
    let n = match common.threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.parse().map_err(|_| Error::Config(format!("{THREADS_ENV}={v} is not a thread count")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    Ok(())
}

fn run(command: &Command) -> Result<ExitCode> {
    let common = command.common();
    let cfg = load_config(common)?;
    init_threads(common)?;
    let out = &common.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let code = match command {
        Command::Train(_) => cmd_train(&cfg, out)?,
        Command::Limit(_) => cmd_limit(&cfg, out)?,
        Command::Expand(_) => cmd_expand(&cfg, out)?,
        Command::Ensemble(_) => cmd_ensemble(&cfg, out)?,
        Command::Mnist(_) => cmd_mnist(&cfg, out)?,
        Command::Selftest(_) => cmd_selftest()?,
    };
    write_manifest(out, command.name(), &cfg, common)?;
    Ok(code)
}

fn write_manifest(out: &Path, command: &str, cfg: &Config, common: &Common) -> Result<()> {
    let text = cfg.canonical_text();
    let hash: String = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    let mut m = format!("tool=scaled-nn\nversion={}\ncommand={command}\nseed={}\nconfig_sha256={hash}\n", env!("CARGO_PKG_VERSION"), cfg.get("seed")?);
    for o in &common.overrides {
        m.push_str(&format!("override={o}\n"));
    }
    m.push_str("[config]\n");
    m.push_str(&text);
    fs::write(out.join("manifest"), m).context("writing the manifest")?;
    Ok(())
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    let p = out.join(name);
    Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
}

fn limit_problem(cfg: &Config) -> Result<LimitProblem> {
    let ds = cfg.dataset()?;
    ds.check_distinct_directions()?;
    let scaling = cfg.scaling()?;
    let spec = KernelSpec::new(scaling.widths[0], scaling.gammas[0], scaling.activation);
    Ok(LimitProblem::new(&ds, cfg.law(ds.dim())?, spec, cfg.grid()?)?)
}

fn cmd_train(cfg: &Config, out: &Path) -> Result<ExitCode> {
    let tc = cfg.train_config()?;
    let ds = cfg.dataset()?;
    ds.check_distinct_directions()?;
    let theta0 = init_params(&tc.scaling, &cfg.law(ds.dim())?, tc.seed)?;
    let traj = train(&tc, &ds, &theta0, &[])?;
    traj.write_csv(create(out, "trajectory.csv")?)?;
    println!("train: {} steps, final h = {:?}", traj.steps, traj.h.last().unwrap_or(&Vec::new()));
    Ok(ExitCode::SUCCESS)
}

fn cmd_limit(cfg: &Config, out: &Path) -> Result<ExitCode> {
    let p = limit_problem(cfg)?;
    let regime = classify_regime(cfg.value("gamma2")?)?;
    let h = p.h()?;
    let k0 = p.gaussian_init(cfg.value("gaussian_seed")?)?;
    let lp = if regime.k_forced() { Some(p.kernel_l_paths(&h)?) } else { None };
    let k = p.integrate_k(&regime, &h, lp.as_ref(), &k0)?;
    p.tables.write_csv(out, Some(&p.a))?;
    h.write_csv(&out.join("h.csv"))?;
    k.write_csv(&out.join("k.csv"))?;
    println!("limit: h_T = {:?}, K_T = {:?}", h.last(), k.last());
    Ok(ExitCode::SUCCESS)
}

fn cmd_expand(cfg: &Config, out: &Path) -> Result<ExitCode> {
    let p = limit_problem(cfg)?;
    let regime = classify_regime(cfg.value("gamma2")?)?;
    let g = p.gaussian_init(cfg.value("gaussian_seed")?)?;
    let state = expansion_recursion(&p, &regime, &g)?;
    state.write_csv(&out.join("expansion.csv"))?;
    let n2: usize = cfg.value("n2")?;
    reconstruct(&state, n2 as f64).write_csv(&out.join("reconstruction.csv"))?;
    println!("expand: nu = {}, {} terms, boundary = {}", regime.nu, state.q.len(), regime.boundary);
    Ok(ExitCode::SUCCESS)
}

fn cmd_ensemble(cfg: &Config, out: &Path) -> Result<ExitCode> {
    let ds = cfg.dataset()?;
    let law = cfg.law(ds.dim())?;
    let p = limit_problem(cfg)?;
    let h = p.h()?;
    let gamma2: f64 = cfg.value("gamma2")?;
    let point: usize = cfg.value("point")?;
    if point >= ds.len() {
        return Err(Error::Config(format!("point = {point} but the dataset has {} points", ds.len())).into());
    }
    let grid: Vec<usize> = cfg.list("n2_grid")?;
    let (seed, count): (u64, usize) = (cfg.value("seed")?, cfg.value("seeds")?);
    let mut rows = Vec::new();
    let mut devs = Vec::new();
    for &n2 in &grid {
        let mut c = cfg.clone();
        c.set(&format!("n2={n2}"))?;
        let spec = EnsembleSpec::new(c.train_config()?, law.clone(), seed, count).with_marks(cfg.list("marks")?);
        let stats = mc_ensemble(&spec, &ds)?;
        rows.extend(stats.scaling_rows(n2, gamma2, point));
        let (dev, se) = stats.mean_sup_deviation(&h)?;
        println!("ensemble: N2 = {n2}, mean sup deviation {dev:.6} ± {se:.6}");
        devs.push(dev);
    }
    write_scaling_csv(create(out, "scaling.csv")?, &rows)?;
    let theory = -f64::min(1.0 - gamma2, gamma2 - 0.5);
    let mut fits = Vec::new();
    if grid.len() >= 3 {
        let n: Vec<f64> = grid.iter().map(|&v| v as f64).collect();
        let r = scaling_fit("sup_deviation", &n, &devs, theory, 0.15)?;
        println!("ensemble: slope {:.4} ± {:.4}, theory {theory:.4}", r.slope, r.slope_se);
        fits.push(r);
    }
    write_fit_csv(create(out, "fit.csv")?, &fits)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_mnist(cfg: &Config, out: &Path) -> Result<ExitCode> {
    let dir = PathBuf::from(cfg.get("mnist_dir")?);
    let seed: u64 = cfg.value("seed")?;
    let train = load_mnist(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"), Some(cfg.value("train_subset")?), seed)?;
    let test = load_mnist(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"), Some(cfg.value("test_subset")?), seed)?;
    let width: usize = cfg.value("mnist_width")?;
    let count: usize = cfg.value("mnist_seeds")?;
    let spec = SweepSpec {
        widths: vec![width, width],
        batch: cfg.value("mnist_batch")?,
        epochs: cfg.value("epochs")?,
        seeds: (seed..seed + count as u64).collect(),
        law_seed: cfg.value("law_seed")?,
    };
    let gamma1: f64 = cfg.value("gamma1")?;
    let mut points: Vec<[f64; 2]> = cfg.list::<f64>("gamma2_grid")?.into_iter().map(|g2| [gamma1, g2]).collect();
    for g1 in cfg.list::<f64>("gamma1_grid")? {
        if !points.contains(&[g1, 1.0]) {
            points.push([g1, 1.0]);
        }
    }
    let mut records = Vec::new();
    for g in &points {
        let r = accuracy_sweep(&train, &test, &spec, g)?;
        if let Some(last) = r.last() {
            println!("mnist: gamma = {g:?}, test accuracy {:.4}", last.test_acc);
        }
        records.extend(r);
    }
    write_accuracy_csv(create(out, "accuracy.csv")?, &records)?;
    Ok(ExitCode::SUCCESS)
}

/// Scalar closed forms of the h and K equations.
fn cmd_selftest() -> Result<ExitCode> {
    let (eh, ek) = closed_form_errors()?;
    let ok = eh.max(ek) < SELFTEST_TOL;
    println!("selftest: |h_1 - (1 - e^-2)| = {eh:.3e}, |K_1 - e^-2| = {ek:.3e}, tolerance {SELFTEST_TOL:e}: {}", if ok { "PASS" } else { "FAIL" });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
