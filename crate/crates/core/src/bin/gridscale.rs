use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridscale::case::CaseVariant;
use gridscale::dataset::{build_dataset, ingest_labels, write_dataset, BuildOptions, ProblemKind};
use gridscale::metrics::Evaluator;
use gridscale::neural::Surrogate;
use gridscale::scaling::{fit_power_law, FitSummary, Observation};
use gridscale::sweep::{self, SweepConfig, SweepError, SweepKind};
use gridscale::training::{arch_for, features, Regime, TrainConfig, TrainJob};
use gridscale::NetworkCase;

#[derive(Parser)]
#[command(name = "gridscale", version, about = "Neural OPF surrogates and scaling-law sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CaseArgs {
    /// Bundled case name (case14, case30, case57) or MATPOWER file.
    #[arg(long, default_value = "case14")]
    case: String,
    #[arg(long, default_value = "typical", value_parser = parse_variant)]
    variant: CaseVariant,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<String>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<CaseVariant>,
    /// Replaces the configured seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a case file and print a summary (or its canonical JSON).
    Parse {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long)]
        json: bool,
    },
    /// Generate a labelled OPF dataset.
    GenData {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long, default_value = "dc")]
        problem: ProblemKind,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one surrogate on a dataset (90/10 split).
    Train {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "dnn-dc")]
        regime: Regime,
        /// Hidden widths, comma separated.
        #[arg(long, default_value = "128,128", value_delimiter = ',')]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0.1)]
        w_phys: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a saved surrogate on every feasible sample of a dataset.
    Eval {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Data-scaling sweep.
    SweepData(SweepArgs),
    /// Compute-scaling sweep.
    SweepCompute(SweepArgs),
    /// Fit m = a·x^α to a CSV with `x` and `m` columns.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "m")]
        metric: String,
        #[arg(long, default_value = "x")]
        resource: String,
    },
    /// Rebuild a sweep's tables and plots from its saved run records.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_variant(s: &str) -> Result<CaseVariant, String> {
    match s.to_ascii_lowercase().as_str() {
        "typical" => Ok(CaseVariant::Typical),
        "api" => Ok(CaseVariant::Api),
        "sad" => Ok(CaseVariant::Sad),
        _ => Err(format!("unknown variant {s:?} (typical, api, sad)")),
    }
}

enum CliError {
    Config(String),
    Component(String),
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Component(e.to_string())
        }
    }
}

fn component<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Component(e.to_string())
}

fn load_case(args: &CaseArgs) -> Result<NetworkCase, CliError> {
    sweep::load_case(&args.case, args.variant).map_err(|e| match e {
        SweepError::Case(gridscale::case::CaseLoadError::Io(io)) => {
            CliError::Config(format!("{}: {io}", args.case))
        }
        other => other.into(),
    })
}

fn with_workers<T>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    match workers {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("--workers must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|p| p.install(f))
            .map_err(component),
    }
}

fn sweep_config(args: &SweepArgs) -> Result<SweepConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => SweepConfig::load(p)?,
        None => SweepConfig::default(),
    };
    if let Some(c) = &args.case {
        cfg.case_path = c.clone();
    }
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    if let Some(s) = args.seed {
        cfg.seeds = vec![s];
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn print_sweep(report: &sweep::SweepReport, dir: &str) {
    println!("{} runs written to {dir}", report.records.len());
    for f in &report.fits {
        println!(
            "{} vs {}: a = {:.6}, alpha = {:.4}, R2 = {:.4} ({} points)",
            f.summary.metric, f.summary.resource, f.summary.a, f.summary.alpha, f.summary.r_squared, f.summary.n_points
        );
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Parse { case, json } => {
            let c = load_case(&case)?;
            if json {
                println!("{}", c.to_json());
            } else {
                println!(
                    "{}: {} buses, {} generators ({} in service), {} branches, base {} MVA",
                    c.name,
                    c.n_bus(),
                    c.generators.len(),
                    c.n_active_gen(),
                    c.n_branch(),
                    c.base_mva
                );
            }
        }
        Command::GenData { case, problem, n, sigma, seed, workers, out } => {
            let c = load_case(&case)?;
            let opts = BuildOptions { n_raw: n, sigma, seed, ..Default::default() };
            let ds = with_workers(workers, || build_dataset(&c, problem, &opts))?.map_err(component)?;
            write_dataset(&ds, &c, &out).map_err(component)?;
            println!(
                "{} of {} samples feasible ({:.1}%), written to {}",
                ds.n_feasible(),
                n,
                100.0 * ds.retention_rate,
                out.display()
            );
        }
        Command::Train { case, data, regime, hidden, epochs, batch_size, lr, w_phys, seed, out } => {
            let c = load_case(&case)?;
            let ds = ingest_labels(&c, &data).map_err(component)?;
            let mut cfg = TrainConfig::new(regime);
            cfg.epochs = epochs;
            cfg.lr = lr;
            cfg.w_phys = w_phys;
            cfg.seed = seed;
            if let Some(b) = batch_size {
                cfg.batch_size = b;
            }
            cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
            if ds.kind != regime.kind() {
                return Err(CliError::Config(format!(
                    "{} needs {} data, {} holds {} samples",
                    regime.label(),
                    regime.kind(),
                    data.display(),
                    ds.kind
                )));
            }
            let (train, test) = ds.split(cfg.train_fraction, seed);
            let arch = arch_for(&c, regime.kind(), &hidden, seed);
            let run = TrainJob::new(&c, train, test, arch, cfg)
                .run()
                .map_err(component)?
                .pop()
                .expect("final checkpoint");
            std::fs::create_dir_all(&out).map_err(component)?;
            run.surrogate.save(&out.join("model.json")).map_err(component)?;
            std::fs::write(out.join("record.json"), run.record.to_json()).map_err(component)?;
            std::fs::write(out.join("loss.csv"), run.record.loss_curve_csv()).map_err(component)?;
            println!("{}", run.record.metrics.to_json());
        }
        Command::Eval { case, model, data } => {
            let c = load_case(&case)?;
            let s = Surrogate::load(&model).map_err(component)?;
            let ds = ingest_labels(&c, &data).map_err(component)?;
            if ds.kind != s.kind {
                return Err(CliError::Config(format!("model is {} but data is {}", s.kind, ds.kind)));
            }
            let samples: Vec<_> = ds.feasible().collect();
            if samples.is_empty() {
                return Err(CliError::Component("dataset has no feasible samples".into()));
            }
            let x = input_matrix(&samples, s.kind);
            let pred = s.predict(x.view()).map_err(component)?;
            let ev = Evaluator::new(&c).map_err(component)?;
            let report = match s.kind {
                ProblemKind::DC => ev.evaluate_dc(pred.view(), &samples),
                ProblemKind::AC => ev.evaluate_ac(pred.view(), &samples),
            }
            .map_err(component)?;
            println!("{}", report.to_json());
        }
        Command::SweepData(args) => {
            let cfg = sweep_config(&args)?;
            let report = sweep::run_data_scaling(&cfg)?;
            print_sweep(&report, &cfg.output_dir);
        }
        Command::SweepCompute(args) => {
            let cfg = sweep_config(&args)?;
            let report = sweep::run_compute_scaling(&cfg)?;
            print_sweep(&report, &cfg.output_dir);
        }
        Command::Fit { input, metric, resource } => {
            let obs = read_observations(&input)?;
            let fit = fit_power_law(&obs).map_err(|e| CliError::Config(e.to_string()))?;
            let summary = FitSummary::new(&metric, &resource, &fit);
            println!("{}", serde_json::to_string_pretty(&summary).map_err(component)?);
        }
        Command::Report { out } => {
            if !out.join("sweep.json").exists() {
                return Err(CliError::Config(format!("{} holds no sweep", out.display())));
            }
            let report = sweep::regenerate(&out)?;
            let kind = match report.kind {
                SweepKind::Data => "data",
                SweepKind::Compute => "compute",
            };
            println!("regenerated {kind} report from {} runs", report.records.len());
        }
    }
    Ok(())
}

fn input_matrix(samples: &[&gridscale::OpfSample], kind: ProblemKind) -> ndarray::Array2<f64> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| features(s, kind)).collect();
    let width = rows.first().map_or(0, Vec::len);
    ndarray::Array2::from_shape_vec((rows.len(), width), rows.concat()).expect("uniform rows")
}

fn read_observations(path: &Path) -> Result<Vec<Observation>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Config(e.to_string()))?;
    let headers = rdr.headers().map_err(component)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Config(format!("{} has no {name:?} column", path.display())))
    };
    let (xi, mi) = (col("x")?, col("m")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(component)?;
        let num = |i: usize| {
            rec.get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Config(format!("bad number in row {:?}", rec)))
        };
        out.push(Observation::new(num(xi)?, num(mi)?));
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Component(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
