mod config;
mod experiment;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rpod_core::rom::Method;
use rpod_core::synthetic::{generate, SyntheticConfig, SyntheticKind};
use rpod_core::{io, ErrorClass};
use serde::Serialize;

use config::ExperimentConfig;
use report::{Manifest, MethodSummary, ModelSummary, SeedRecord, Summary};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(rpod_core::Error),
}

impl From<rpod_core::Error> for CliError {
    fn from(e: rpod_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Numerical => 3,
                ErrorClass::SizeSelection => 4,
            },
        }
    }

    fn tag(&self) -> &'static str {
        match self.code() {
            2 => "config",
            3 => "numerical",
            _ => "size-selection",
        }
    }

    fn message(&self) -> String {
        let raw = match self {
            CliError::Config(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        };
        raw.split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

#[derive(Parser)]
#[command(name = "rpod", version, about = "Balanced POD and RPOD* model reduction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the top-level seed and every seed derived from it.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    threads: Threads,
}

#[derive(Args, Clone)]
struct Threads {
    /// Run the dense kernels on one thread for bit-identical reruns.
    #[arg(long, conflicts_with = "threads")]
    single_thread: bool,
    #[arg(long)]
    threads: Option<usize>,
}

impl Threads {
    fn apply(&self) -> String {
        if self.single_thread {
            rpod_core::set_threads(1);
            "single".into()
        } else if let Some(n) = self.threads {
            rpod_core::set_threads(n);
            n.to_string()
        } else {
            "default".into()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Exact,
    Perturbed,
}

#[derive(Subcommand)]
enum Command {
    /// Build the model, run every configured method and write ROMs and reports.
    Run(Common),
    /// Side-by-side report of the configured methods on one model and one excitation.
    Compare(Common),
    /// Write a synthetic system with known controllable-observable modes.
    GenSynthetic {
        #[arg(long, value_enum, default_value = "exact")]
        kind: Kind,
        #[arg(long, default_value_t = 40)]
        states: usize,
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long, default_value_t = 2)]
        inputs: usize,
        #[arg(long, default_value_t = 2)]
        outputs: usize,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Discretize the configured model and export it as Matrix Market files.
    BuildModel {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        threads: Threads,
    },
    /// Print the spectrum and Hankel singular values of a saved reduced model.
    InspectRom {
        /// Directory containing `rom.toml`.
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(c) => experiment_command("run", &c),
        Command::Compare(c) => experiment_command("compare", &c),
        Command::GenSynthetic {
            kind,
            states,
            order,
            inputs,
            outputs,
            eps,
            seed,
            out,
        } => gen_synthetic(
            SyntheticConfig {
                kind: match kind {
                    Kind::Exact => SyntheticKind::Exact,
                    Kind::Perturbed => SyntheticKind::Perturbed,
                },
                states,
                order,
                inputs,
                outputs,
                eps,
                seed,
                ..SyntheticConfig::default()
            },
            &out,
        ),
        Command::BuildModel { config, out, threads } => {
            threads.apply();
            build_model(&config, &out)
        }
        Command::InspectRom { dir } => inspect_rom(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.tag(), e.message());
            ExitCode::from(e.code())
        }
    }
}

fn experiment_command(command: &str, c: &Common) -> Result<(), CliError> {
    let threads = c.threads.apply();
    let mut cfg = config::load(&c.config)?;
    let out = c
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set output.dir".into()))?;
    cfg.resolve(c.seed);
    cfg.validate()?;
    if command == "compare" && cfg.sweep.is_some() {
        return Err(CliError::Config("compare does not run sweeps; use run".into()));
    }
    let model = experiment::build_model(&cfg.model)?;
    experiment::validate_against_model(&cfg, &model.system)?;
    let dir = report::ensure_dir(&out)?;

    let resolved = toml::to_string(&cfg).map_err(|e| CliError::Config(format!("encoding config: {e}")))?;
    std::fs::write(dir.join("config.toml"), &resolved)
        .map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let mut artifacts = vec!["config.toml".to_string()];

    let summary = match &cfg.sweep {
        Some(sweep) => {
            let rows = experiment::sweep(&cfg, &sweep.eps)?;
            artifacts.push(report::write_sweep(&dir, &rows)?);
            let settling = experiment::settling_steps(&cfg, &model.system)?;
            Summary {
                command: command.into(),
                model: ModelSummary::new(&model, settling),
                excitation_steps: None,
                methods: Vec::new(),
                complexity: None,
                sweep: report::sweep_slopes(&rows),
            }
        }
        None => {
            let settling = experiment::settling_steps(&cfg, &model.system)?;
            let runs = cfg
                .methods
                .iter()
                .map(|m| experiment::run_method(&model.system, m, settling))
                .collect::<Result<Vec<_>, _>>()?;
            for r in &runs {
                if r.rom.method != Method::Identity {
                    let sub = format!("rom-{}", r.label);
                    io::write_rom(&dir.join(&sub), &r.rom)?;
                    artifacts.push(sub);
                }
            }
            let ev = experiment::evaluate(&cfg, &model.system, &runs, settling)?;
            artifacts.extend(report::write_evaluation(&dir, &runs, &ev)?);
            Summary {
                command: command.into(),
                model: ModelSummary::new(&model, settling),
                excitation_steps: Some(ev.excitation_steps),
                methods: runs
                    .iter()
                    .enumerate()
                    .map(|(k, r)| MethodSummary::new(r, Some((&ev, k))))
                    .collect(),
                complexity: experiment::complexity(&model.system, &runs, settling)
                    .as_ref()
                    .map(Into::into),
                sweep: Vec::new(),
            }
        }
    };
    report::write_toml(&dir.join("summary.toml"), &summary)?;
    artifacts.push("summary.toml".into());
    artifacts.push("manifest.toml".into());

    let manifest = Manifest {
        tool: "rpod".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config: "config.toml".into(),
        config_sha256: report::sha256_hex(&resolved),
        seed: cfg.seed,
        excitation_seed: cfg.evaluation.excitation_seed.unwrap_or(cfg.seed),
        method_seeds: cfg
            .methods
            .iter()
            .filter_map(|m| {
                m.seed.map(|seed| SeedRecord {
                    method: m.label(),
                    seed,
                })
            })
            .collect(),
        threads,
        artifacts,
    };
    report::write_toml(&dir.join("manifest.toml"), &manifest)?;
    for m in &summary.methods {
        println!(
            "{}: order {} e_output {} max markov error {}",
            m.label,
            m.order,
            m.e_output.map(io::fmt17).unwrap_or_default(),
            m.max_markov_error.map(io::fmt17).unwrap_or_default()
        );
        for w in &m.warnings {
            println!("  warning: {w}");
        }
    }
    for s in &summary.sweep {
        let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        println!(
            "{}: markov error slope {} sigma slope {}",
            s.label,
            show(s.markov_error_slope),
            show(s.sigma_next_slope)
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct GroundTruth {
    config: SyntheticConfig,
    order: usize,
    group_sizes: [usize; 4],
    co_eigenvalues_re: Vec<f64>,
    co_eigenvalues_im: Vec<f64>,
}

fn gen_synthetic(cfg: SyntheticConfig, out: &Path) -> Result<(), CliError> {
    if cfg.kind == SyntheticKind::Exact && cfg.eps != 0.0 {
        return Err(CliError::Config("--eps needs --kind perturbed".into()));
    }
    let syn = generate(&cfg)?;
    let description = format!("{:?} synthetic, seed {}", cfg.kind, cfg.seed);
    io::write_system(out, &syn.system, 1.0, &description)?;
    let truth = GroundTruth {
        order: cfg.order,
        group_sizes: syn.group_sizes,
        co_eigenvalues_re: syn.co_eigenvalues.iter().map(|l| l.re).collect(),
        co_eigenvalues_im: syn.co_eigenvalues.iter().map(|l| l.im).collect(),
        config: cfg,
    };
    report::write_toml(&out.join("truth.toml"), &truth)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn build_model(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg: ExperimentConfig = config::load(config)?;
    let model = experiment::build_model(&cfg.model)?;
    let path = io::write_system(out, &model.system, model.dt, &model.description)?;
    println!(
        "{}: N = {}, p = {}, q = {}, nnz(A) = {}",
        path.display(),
        model.system.n(),
        model.system.p(),
        model.system.q(),
        model.system.a().nnz()
    );
    Ok(())
}

fn inspect_rom(dir: &Path) -> Result<(), CliError> {
    let (rom, m) = io::read_rom(dir)?;
    let p = &m.provenance;
    println!("method: {}", m.method.name());
    println!("order: {}", m.order);
    if let Some(r) = p.requested_order {
        println!("requested order: {r}");
    }
    println!("form: {}", m.form);
    println!("hankel: {} x {}", p.hankel_dims.0, p.hankel_dims.1);
    println!("numerical rank: {}", p.numerical_rank);
    println!("sigma_next: {}", io::fmt17(p.sigma_next));
    if let Some(s) = p.seed {
        println!("seed: {s}");
    }
    println!("spectral radius: {}", io::fmt17(rom.spectral_radius()?));
    println!("eigenvalues (re, im, |lambda|):");
    for (re, im) in m.eigenvalues_re.iter().zip(&m.eigenvalues_im) {
        println!("  {} {} {}", io::fmt17(*re), io::fmt17(*im), io::fmt17(re.hypot(*im)));
    }
    println!("hankel singular values:");
    for (k, s) in p.singular_values.iter().enumerate() {
        println!("  {} {}", k + 1, io::fmt17(*s));
    }
    for w in &p.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
