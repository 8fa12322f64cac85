use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sparsedef_cli::config::{ExperimentConfig, Overrides, Task};
use sparsedef_cli::experiments;
use sparsedef_cli::fetch::{self, Outcome, Source, DEFAULT_BASE_URL};
use sparsedef_cli::report::log;

#[derive(Parser)]
#[command(name = "sparsedef", version, about = "Sparsifying front-end defenses against l-infinity attacks on MNIST")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

/// Settings shared by every subcommand. Each one overrides the config file.
#[derive(Args)]
struct Common {
    /// `key = value` settings file, applied before these flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "svm|cnn")]
    task: Option<String>,
    #[arg(long, global = true)]
    epsilon: Option<String>,
    #[arg(long, global = true)]
    rho: Option<String>,
    #[arg(long, global = true, value_name = "haar|cdf97")]
    basis: Option<String>,
    #[arg(long, global = true)]
    levels: Option<String>,
    #[arg(long, global = true, value_name = "fgsm|semiwhite|white")]
    attack: Option<String>,
    #[arg(long, global = true, value_name = "A,B")]
    digits: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Clip attacked images to [0, 1].
    #[arg(long, global = true)]
    clip: bool,
    /// Deploy the sparsifying front end.
    #[arg(long, global = true)]
    defended: bool,
    /// Keep the undefended model behind the front end instead of retraining.
    #[arg(long, global = true)]
    no_retrain: bool,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,
    /// MNIST directory; defaults to $SPARSEDEF_DATA, then data/mnist.
    #[arg(long, global = true, value_name = "DIR")]
    data: Option<String>,
    /// Any other setting, e.g. --set epochs=5. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Download (or import) and verify the four MNIST files.
    FetchData {
        #[arg(long, default_value = DEFAULT_BASE_URL)]
        base_url: String,
        /// Import from a local directory holding raw or .gz files.
        #[arg(long, value_name = "DIR")]
        from: Option<PathBuf>,
    },
    /// Train the digit-pair linear SVM.
    TrainSvm,
    /// Train the network classifier.
    TrainNet,
    /// Attack a trained model and report accuracy.
    Attack {
        /// Model file; defaults to the one `train-*` writes for these settings.
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
    },
    /// Accuracy over the rho x epsilon grid with the front end deployed.
    Sweep,
    /// Monte Carlo attenuation of random linear classifiers.
    Attenuation,
    /// Every cell of the accuracy table beside the published values.
    Table1,
}

impl Common {
    fn overrides(&self) -> Result<Overrides> {
        let mut o = match &self.config {
            Some(p) => Overrides::load(p)?,
            None => Overrides::default(),
        };
        let mut flags = Overrides::default();
        let pairs = [
            ("task", &self.task),
            ("epsilon", &self.epsilon),
            ("rho", &self.rho),
            ("basis", &self.basis),
            ("levels", &self.levels),
            ("attack", &self.attack),
            ("digits", &self.digits),
            ("seed", &self.seed),
            ("out", &self.out),
            ("data", &self.data),
        ];
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            flags.set(k, v.trim())?;
        }
        for (k, v) in pairs {
            if let Some(v) = v {
                flags.set(k, v.clone())?;
            }
        }
        if self.clip {
            flags.set("clip", "true")?;
        }
        if self.defended {
            flags.set("defended", "true")?;
        }
        if self.no_retrain {
            flags.set("retrain", "false")?;
        }
        o = o.merge(&flags);
        Ok(o)
    }
}

fn run(cli: Cli) -> Result<()> {
    let o = cli.common.overrides()?;
    let resolve = |fallback: Task| ExperimentConfig::resolve(&o, fallback);
    match cli.command {
        Command::FetchData { base_url, from } => {
            let cfg = resolve(Task::SvmPair)?;
            let source = match from {
                Some(dir) => Source::Dir(dir),
                None => Source::Url(base_url),
            };
            for (name, outcome) in fetch::fetch(&cfg.data, &source)? {
                let what = match outcome {
                    Outcome::AlreadyPresent => "verified",
                    Outcome::Fetched => "fetched",
                };
                println!("{what} {}", cfg.data.join(name).display());
            }
        }
        Command::TrainSvm => {
            let r = experiments::cmd_train_svm(&resolve(Task::SvmPair)?)?;
            println!("{}: test accuracy {:.2}%", r.model, 100.0 * r.test_accuracy);
        }
        Command::TrainNet => {
            let r = experiments::cmd_train_net(&resolve(Task::CnnMulticlass)?)?;
            println!("{}: test accuracy {:.2}%", r.model, 100.0 * r.test_accuracy);
        }
        Command::Attack { model } => {
            let cfg = resolve(Task::SvmPair)?;
            let r = experiments::cmd_attack(&cfg, model.as_deref())?;
            println!(
                "{} eps={}: clean {:.2}%, attacked {:.2}%",
                r.spec.kind,
                r.spec.epsilon,
                100.0 * r.clean_accuracy,
                100.0 * r.attacked_accuracy
            );
        }
        Command::Sweep => {
            let cfg = resolve(Task::SvmPair)?;
            for g in experiments::cmd_sweep(&cfg)? {
                println!(
                    "rho={} eps={}: {:.2}%{}",
                    g.rho,
                    g.epsilon,
                    100.0 * g.attacked_accuracy,
                    if g.best { " *" } else { "" }
                );
            }
        }
        Command::Attenuation => {
            let cfg = resolve(Task::Attenuation)?;
            for r in experiments::cmd_attenuation(&cfg)? {
                println!(
                    "N={} K={} {}: ratio {:.6} (K/N {:.6})",
                    r.config.n,
                    r.config.k,
                    r.config.mode,
                    r.mean_ratio,
                    r.k_over_n()
                );
            }
        }
        Command::Table1 => {
            let table = experiments::cmd_table1(&o)?;
            print!("{}", experiments::render_table1(&table));
            let (svm, _) = experiments::table1_configs(&o)?;
            log(&svm, &format!("table1 written to {}", svm.out.display()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
