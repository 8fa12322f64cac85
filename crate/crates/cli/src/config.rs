//! Experiment settings: built-in defaults, then a `key = value` file, then
//! command-line flags, each layer overriding the previous one.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sparsedef::attacks::AttackKind;
use sparsedef::data::DATA_DIR_ENV;
use sparsedef::frontend::Convention;
use sparsedef::models::{Architecture, FrontEndSpec, Schedule, TrainConfig};
use sparsedef::transform::{max_levels, BasisKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    SvmPair,
    CnnMulticlass,
    Attenuation,
}

impl std::str::FromStr for Task {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" | "svm_pair" => Ok(Task::SvmPair),
            "cnn" | "net" | "cnn_multiclass" => Ok(Task::CnnMulticlass),
            "attenuation" => Ok(Task::Attenuation),
            other => bail!("unknown task `{other}` (expected svm_pair, cnn_multiclass or attenuation)"),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::SvmPair => "svm_pair",
            Task::CnnMulticlass => "cnn_multiclass",
            Task::Attenuation => "attenuation",
        })
    }
}

/// Every setting a run depends on. Written verbatim into each manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub digits: (u8, u8),
    pub epsilon: f64,
    pub rho: f64,
    pub basis: BasisKind,
    pub levels: usize,
    pub attack: AttackKind,
    pub seed: u64,
    pub clip: bool,
    pub convention: Convention,
    /// Evaluate behind the sparsifying front end.
    pub defended: bool,
    /// Train defended models on sparsified inputs.
    pub retrain: bool,
    pub arch: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_step: usize,
    pub lr_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub rhos: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub dims: Vec<usize>,
    pub k: usize,
    pub trials: usize,
    pub out: PathBuf,
    pub data: PathBuf,
}

/// Settings as raw strings, keyed by canonical (underscore) names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides(BTreeMap<String, String>);

pub const KEYS: &[&str] = &[
    "task", "digits", "epsilon", "rho", "basis", "levels", "attack", "seed", "clip", "convention",
    "defended", "retrain", "arch", "epochs", "batch_size", "learning_rate", "lr_step", "lr_factor",
    "momentum", "weight_decay", "dropout", "rhos", "epsilons", "dims", "k", "trials", "out", "data",
];

fn canonical(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl Overrides {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let key = canonical(key);
        if !KEYS.contains(&key.as_str()) {
            bail!("unknown setting `{key}`");
        }
        self.0.insert(key, value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Later layers win.
    pub fn merge(mut self, other: &Overrides) -> Self {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
        self
    }

    /// `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut out = Overrides::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected `key = value`", no + 1))?;
            out.set(k, v.trim())
                .with_context(|| format!("{origin}:{}", no + 1))?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| anyhow!("invalid value `{v}` for `{key}`: {e}"))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => bail!("invalid value `{v}` for `{key}`: expected true or false"),
    }
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Defaults for `task`: ε = 0.12, ρ = 0.02 and the SVM solver for the
    /// digit-pair task; ε = 0.25, ρ = 0.03 and the convolutional network otherwise.
    pub fn defaults(task: Task) -> Self {
        let net = TrainConfig::network_default();
        let svm = TrainConfig::svm_default();
        let (epsilon, rho, tc) = match task {
            Task::SvmPair => (0.12, 0.02, &svm),
            _ => (0.25, 0.03, &net),
        };
        let (lr_step, lr_factor) = match tc.schedule {
            Schedule::Step { every, factor } => (every, factor),
            Schedule::Constant => (0, 1.0),
        };
        Self {
            task,
            digits: (3, 7),
            epsilon,
            rho,
            basis: match task {
                Task::Attenuation => BasisKind::Identity,
                _ => BasisKind::Cdf97,
            },
            levels: 2,
            attack: AttackKind::SemiWhite,
            seed: 1,
            clip: false,
            convention: Convention::Synthesis,
            defended: false,
            retrain: true,
            arch: "cnn".into(),
            epochs: tc.epochs,
            batch_size: tc.batch_size,
            learning_rate: tc.learning_rate,
            lr_step,
            lr_factor,
            momentum: tc.momentum,
            weight_decay: tc.weight_decay,
            dropout: net.dropout_rate,
            rhos: vec![0.01, 0.02, 0.03, 0.04, 0.05],
            epsilons: vec![0.0, 0.05, 0.12, 0.25],
            dims: vec![256, 1024, 4096],
            k: 32,
            trials: 2000,
            out: PathBuf::from("runs"),
            data: std::env::var_os(DATA_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("data/mnist")),
        }
    }

    /// Defaults for the task named in `o` (or `fallback`), overridden by `o`.
    pub fn resolve(o: &Overrides, fallback: Task) -> Result<Self> {
        let task = match o.get("task") {
            Some(t) => t.parse()?,
            None => fallback,
        };
        let mut c = Self::defaults(task);
        for (key, v) in &o.0 {
            let v = v.as_str();
            let k = key.as_str();
            match k {
                "task" => {}
                "digits" => {
                    let d: Vec<u8> = parse_list(k, v)?;
                    let [a, b] = d[..] else {
                        bail!("`digits` takes two digits such as 3,7");
                    };
                    c.digits = (a, b);
                }
                "epsilon" => c.epsilon = parse(k, v)?,
                "rho" => c.rho = parse(k, v)?,
                "basis" => c.basis = parse(k, v)?,
                "levels" => c.levels = parse(k, v)?,
                "attack" => c.attack = v.parse().map_err(|e: String| anyhow!(e))?,
                "seed" => c.seed = parse(k, v)?,
                "clip" => c.clip = parse_bool(k, v)?,
                "convention" => c.convention = v.parse().map_err(|e: String| anyhow!(e))?,
                "defended" => c.defended = parse_bool(k, v)?,
                "retrain" => c.retrain = parse_bool(k, v)?,
                "arch" => c.arch = v.to_string(),
                "epochs" => c.epochs = parse(k, v)?,
                "batch_size" => c.batch_size = parse(k, v)?,
                "learning_rate" => c.learning_rate = parse(k, v)?,
                "lr_step" => c.lr_step = parse(k, v)?,
                "lr_factor" => c.lr_factor = parse(k, v)?,
                "momentum" => c.momentum = parse(k, v)?,
                "weight_decay" => c.weight_decay = parse(k, v)?,
                "dropout" => c.dropout = parse(k, v)?,
                "rhos" => c.rhos = parse_list(k, v)?,
                "epsilons" => c.epsilons = parse_list(k, v)?,
                "dims" => c.dims = parse_list(k, v)?,
                "k" => c.k = parse(k, v)?,
                "trials" => c.trials = parse(k, v)?,
                "out" => c.out = PathBuf::from(v),
                "data" => c.data = PathBuf::from(v),
                _ => unreachable!("keys are checked on insertion"),
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Rejects inconsistent settings before any data is touched.
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.digits;
        if a > 9 || b > 9 || a == b {
            bail!("digits must be two different values in 0-9, got {a},{b}");
        }
        let eps_ok = |e: f64| e.is_finite() && e >= 0.0;
        if !eps_ok(self.epsilon) || !self.epsilons.iter().all(|&e| eps_ok(e)) {
            bail!("epsilon values must be finite and non-negative");
        }
        let rho_ok = |r: f64| r > 0.0 && r <= 1.0;
        if !rho_ok(self.rho) || !self.rhos.iter().all(|&r| rho_ok(r)) {
            bail!("rho values must lie in (0, 1]");
        }
        if self.basis != BasisKind::Identity {
            let max = max_levels(28, 28);
            if self.levels == 0 || self.levels > max {
                bail!("levels must lie in 1..={max} for 28x28 images, got {}", self.levels);
            }
        }
        if Architecture::preset(&self.arch, self.dropout).is_none() {
            bail!("unknown architecture `{}` (expected cnn, dense or tiny)", self.arch);
        }
        if self.k == 0 || self.trials == 0 || self.dims.iter().any(|&n| n < self.k) {
            bail!("attenuation needs 1 <= k <= every N and trials >= 1");
        }
        self.train_config(None)
            .validate()
            .map_err(|e| anyhow!("{e}"))?;
        Ok(())
    }

    pub fn front_end_spec(&self, rho: f64) -> FrontEndSpec {
        FrontEndSpec {
            basis: self.basis,
            levels: self.levels,
            rho,
        }
    }

    pub fn schedule(&self) -> Schedule {
        if self.lr_step == 0 {
            Schedule::Constant
        } else {
            Schedule::Step {
                every: self.lr_step,
                factor: self.lr_factor,
            }
        }
    }

    pub fn train_config(&self, front_end: Option<FrontEndSpec>) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            schedule: self.schedule(),
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            dropout_rate: if self.task == Task::SvmPair { 0.0 } else { self.dropout },
            front_end,
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::preset(&self.arch, self.dropout).expect("validated")
    }

    /// The config as a `key = value` file that [`Overrides::parse`] reads back.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("task", self.task.to_string());
        put("digits", format!("{},{}", self.digits.0, self.digits.1));
        put("epsilon", self.epsilon.to_string());
        put("rho", self.rho.to_string());
        put("basis", self.basis.to_string());
        put("levels", self.levels.to_string());
        put("attack", self.attack.to_string());
        put("seed", self.seed.to_string());
        put("clip", self.clip.to_string());
        put(
            "convention",
            match self.convention {
                Convention::Synthesis => "synthesis",
                Convention::Analysis => "analysis",
            }
            .into(),
        );
        put("defended", self.defended.to_string());
        put("retrain", self.retrain.to_string());
        put("arch", self.arch.clone());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("lr_step", self.lr_step.to_string());
        put("lr_factor", self.lr_factor.to_string());
        put("momentum", self.momentum.to_string());
        put("weight_decay", self.weight_decay.to_string());
        put("dropout", self.dropout.to_string());
        put("rhos", join(&self.rhos));
        put("epsilons", join(&self.epsilons));
        put("dims", join(&self.dims));
        put("k", self.k.to_string());
        put("trials", self.trials.to_string());
        put("out", self.out.display().to_string());
        put("data", self.data.display().to_string());
        s
    }
}
