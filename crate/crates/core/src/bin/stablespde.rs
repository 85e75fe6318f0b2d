use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stable_spde::experiment::{
    render_report, run_experiment, Experiment, Profile, RunConfig, RunOutcome, SampleLaw, VerifyTest,
};
use stable_spde::Error;

#[derive(Parser)]
#[command(name = "stablespde", version, about = "Stable-noise heat equation experiments")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "STABLESPDE_WORKERS", global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "1.5")]
    alpha: f64,
    #[arg(long, default_value = "artifacts")]
    out: PathBuf,
    /// Entry name inside the artifact directory.
    #[arg(long)]
    name: Option<String>,
}

impl Common {
    fn config(&self, experiment: Experiment) -> RunConfig {
        let mut cfg = RunConfig::new(self.seed, &self.out, experiment);
        cfg.model.alpha = self.alpha;
        cfg.name = self.name.clone();
        cfg
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw W_t or S_t.
    Sample {
        #[arg(long, value_enum, default_value = "stable")]
        law: SampleLaw,
        #[arg(long, default_value = "1.0")]
        t: f64,
        #[arg(short, long, default_value = "10000")]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Terminal values of a deterministic Walsh integral beside W at its clock.
    Integrate {
        #[arg(long, value_enum, default_value = "box")]
        profile: Profile,
        #[arg(short, long, default_value = "10000")]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run a solver ensemble (or boundary refinement) from a TOML config.
    Solve {
        config: PathBuf,
    },
    /// One named check.
    Verify {
        #[arg(value_enum)]
        test: VerifyTest,
        #[arg(short, long, default_value = "100000")]
        n: usize,
        #[arg(long = "lambda", default_values_t = vec![0.5, 1.0])]
        lambdas: Vec<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Support sweep over gamma from a TOML config.
    Sweep {
        config: PathBuf,
    },
    /// Render plots and the summary table of an artifact directory.
    Report {
        dir: PathBuf,
    },
}

fn load(path: &Path, allowed: &[&str]) -> Result<RunConfig, Error> {
    let cfg = RunConfig::from_file(path)?;
    if !allowed.contains(&cfg.experiment.kind()) {
        return Err(Error::Config(format!(
            "{}: experiment kind '{}' is not handled here (expected {})",
            path.display(),
            cfg.experiment.kind(),
            allowed.join(" or ")
        )));
    }
    Ok(cfg)
}

fn print(o: &RunOutcome) {
    for c in &o.report.checks {
        println!("{}", c.line());
    }
    for n in &o.report.notes {
        eprintln!("note: {n}");
    }
    println!("wrote {}", o.dir.display());
}

fn run(cli: Cli) -> Result<bool, Error> {
    let cfg = match cli.command {
        Command::Report { dir } => {
            let o = render_report(&dir)?;
            for m in &o.missing {
                eprintln!("missing: {m}");
            }
            println!("{} check rows, {} files in {}", o.rows, o.written.len(), dir.join("report").display());
            return Ok(true);
        }
        Command::Sample { law, t, n, common } => common.config(Experiment::Sample { law, t, n }),
        Command::Integrate { profile, n, common } => common.config(Experiment::Integrate { profile, n }),
        Command::Verify { test, n, lambdas, b, delta, common } => {
            common.config(Experiment::Verify { test, n, lambdas, b, delta })
        }
        Command::Solve { config } => load(&config, &["solve", "boundary"])?,
        Command::Sweep { config } => load(&config, &["sweep"])?,
    };
    let o = run_experiment(&cfg)?;
    print(&o);
    Ok(o.all_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
