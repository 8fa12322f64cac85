//! Command runners. Each one resolves its inputs, computes every result in
//! memory, and commits the report set in one step at the end.

use std::cell::OnceCell;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sparsedef::attacks::{evaluate_linear, evaluate_network, AttackKind, AttackSpec, EvalReport};
use sparsedef::attenuation::{run_ensemble, EnsembleConfig};
use sparsedef::data::{filter_pair, load_split, sha256_hex, BinaryDataset, Dataset, Split};
use sparsedef::frontend::FrontEndConfig;
use sparsedef::models::{
    accuracy, linear_bytes, linear_from_bytes, network_bytes, network_from_bytes, train_linear_svm,
    train_network, FrontEndSpec, LinearModel, ModelHeader, ModelKind, Network, SvmLog, TrainConfig,
    TrainLog,
};

use crate::config::{ExperimentConfig, Overrides, Task};
use crate::report::{log, write_atomic, ReportSet};

const SIDE: usize = 28;

/// MNIST splits, read from disk on first use.
pub struct Mnist<'a> {
    dir: &'a Path,
    train: OnceCell<Dataset>,
    test: OnceCell<Dataset>,
}

impl<'a> Mnist<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Self {
        Self {
            dir: &cfg.data,
            train: OnceCell::new(),
            test: OnceCell::new(),
        }
    }

    pub fn split(&self, split: Split) -> Result<&Dataset> {
        let cell = match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        };
        if let Some(d) = cell.get() {
            return Ok(d);
        }
        let d = load_checked(self.dir, split)?;
        Ok(cell.get_or_init(|| d))
    }

    pub fn pair(&self, split: Split, digits: (u8, u8)) -> Result<BinaryDataset> {
        Ok(filter_pair(self.split(split)?, digits.0, digits.1)?)
    }

    /// Digests of the split files, for the manifest.
    pub fn record_inputs(&self, set: &mut ReportSet, split: Split) -> Result<()> {
        for name in [split.image_file(), split.label_file()] {
            let path = self.dir.join(&name);
            let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            set.input(name, sha256_hex(&bytes));
        }
        Ok(())
    }
}

/// Loads a split, turning a missing directory or file into instructions.
pub fn load_checked(dir: &Path, split: Split) -> Result<Dataset> {
    let missing: Vec<String> = [split.image_file(), split.label_file()]
        .into_iter()
        .filter(|f| !dir.join(f).is_file())
        .collect();
    if !missing.is_empty() {
        bail!(
            "MNIST data not found: {} missing in {}. Run `sparsedef fetch-data --data {}` first, \
             or point --data (or SPARSEDEF_DATA) at a directory holding the IDX files",
            missing.join(", "),
            dir.display(),
            dir.display()
        );
    }
    load_split(dir, split).with_context(|| format!("loading MNIST {split:?} split from {}", dir.display()))
}

fn fmt_rho(rho: f64) -> String {
    format!("{rho}")
}

fn suffix(fe: Option<&FrontEndSpec>) -> String {
    match fe {
        None => "plain".into(),
        Some(s) => format!("{}_l{}_rho{}", s.basis, s.levels, fmt_rho(s.rho)),
    }
}

/// File stem for a model trained under `cfg` with training front end `fe`.
pub fn model_stem(cfg: &ExperimentConfig, fe: Option<&FrontEndSpec>) -> String {
    match cfg.task {
        Task::SvmPair => format!("svm_{}v{}_{}", cfg.digits.0, cfg.digits.1, suffix(fe)),
        _ => format!("net_{}_{}", cfg.arch, suffix(fe)),
    }
}

/// Front end used at training time: present only for retrained defenses.
pub fn training_front_end(cfg: &ExperimentConfig, rho: f64) -> Option<FrontEndSpec> {
    (cfg.defended && cfg.retrain).then(|| cfg.front_end_spec(rho))
}

pub fn build_front_end(spec: &FrontEndSpec) -> Result<FrontEndConfig> {
    spec.build(SIDE, SIDE).map_err(|e| anyhow!("building front end: {e}"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmTrainRecord {
    pub model: String,
    pub train_samples: usize,
    pub test_samples: usize,
    pub test_accuracy: f64,
    pub log: SvmLog,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetTrainRecord {
    pub model: String,
    pub train_samples: usize,
    pub test_samples: usize,
    pub test_accuracy: f64,
    pub log: TrainLog,
    pub config: TrainConfig,
}

/// A model file on disk plus what the run knows about it.
pub struct Trained<M> {
    pub model: M,
    pub header: ModelHeader,
    pub path: PathBuf,
    pub sha256: String,
    /// Wall-clock training time, from this run or the cache sidecar.
    pub seconds: Option<f64>,
    pub reused: bool,
}

fn seconds_path(model: &Path) -> PathBuf {
    model.with_extension("seconds")
}

fn read_seconds(model: &Path) -> Option<f64> {
    fs::read_to_string(seconds_path(model)).ok()?.trim().parse().ok()
}

fn test_accuracy_linear(model: &LinearModel, fe: Option<&FrontEndSpec>, test: &BinaryDataset) -> Result<f64> {
    Ok(match fe {
        Some(spec) => {
            let fe = build_front_end(spec)?;
            model.accuracy(&test.map_images(|x| fe.apply(x))?)
        }
        None => model.accuracy(test),
    })
}

fn test_accuracy_net(net: &Network, fe: Option<&FrontEndSpec>, test: &Dataset) -> Result<f64> {
    Ok(match fe {
        Some(spec) => {
            let fe = build_front_end(spec)?;
            accuracy(net, &test.map_images(|x| fe.apply(x))?)
        }
        None => accuracy(net, test),
    })
}

fn check_finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        bail!("numeric failure: {what} is {v}")
    }
}

/// Trains the SVM configured by `cfg`.
pub fn train_svm_model(
    cfg: &ExperimentConfig,
    mnist: &Mnist,
    fe: Option<FrontEndSpec>,
) -> Result<(LinearModel, SvmTrainRecord, Vec<u8>, f64)> {
    let tc = cfg.train_config(fe);
    let train = mnist.pair(Split::Train, cfg.digits)?;
    let test = mnist.pair(Split::Test, cfg.digits)?;
    let start = Instant::now();
    let (model, svm_log) = train_linear_svm(&train, &tc)?;
    let seconds = start.elapsed().as_secs_f64();
    let test_accuracy = check_finite("test accuracy", test_accuracy_linear(&model, fe.as_ref(), &test)?)?;
    let stem = model_stem(cfg, fe.as_ref());
    log(
        cfg,
        &format!("trained {stem} in {seconds:.1} s: test accuracy {:.2}%", 100.0 * test_accuracy),
    );
    let bytes = linear_bytes(&model, Some(&tc))?;
    let record = SvmTrainRecord {
        model: format!("{stem}.model"),
        train_samples: train.len(),
        test_samples: test.len(),
        test_accuracy,
        log: svm_log,
        config: tc,
    };
    Ok((model, record, bytes, seconds))
}

/// Trains the network configured by `cfg`.
pub fn train_net_model(
    cfg: &ExperimentConfig,
    mnist: &Mnist,
    fe: Option<FrontEndSpec>,
) -> Result<(Network, NetTrainRecord, Vec<u8>, f64)> {
    let tc = cfg.train_config(fe);
    let train = mnist.split(Split::Train)?;
    let test = mnist.split(Split::Test)?;
    let stem = model_stem(cfg, fe.as_ref());
    log(cfg, &format!("training {stem} ({} epochs)", tc.epochs));
    let start = Instant::now();
    let (net, train_log) = train_network(train, &cfg.architecture(), &tc)?;
    let seconds = start.elapsed().as_secs_f64();
    let test_accuracy = check_finite("test accuracy", test_accuracy_net(&net, fe.as_ref(), test)?)?;
    log(
        cfg,
        &format!("trained {stem} in {seconds:.1} s: test accuracy {:.2}%", 100.0 * test_accuracy),
    );
    let bytes = network_bytes(&net, Some(&tc))?;
    let record = NetTrainRecord {
        model: format!("{stem}.model"),
        train_samples: train.len(),
        test_samples: test.len(),
        test_accuracy,
        log: train_log,
        config: tc,
    };
    Ok((net, record, bytes, seconds))
}

fn cache_hit(header: &ModelHeader, kind: ModelKind, tc: &TrainConfig, cfg: &ExperimentConfig) -> bool {
    header.kind == kind
        && header.train_config.as_ref() == Some(tc)
        && match kind {
            ModelKind::Linear => header.dim == Some(SIDE * SIDE),
            ModelKind::Network => header.architecture.as_ref() == Some(&cfg.architecture()),
        }
}

/// Reuses `<models>/<stem>.model` when its header records exactly the
/// requested training setup; otherwise trains and stores it.
pub fn ensure_svm(
    cfg: &ExperimentConfig,
    mnist: &Mnist,
    models: &Path,
    fe: Option<FrontEndSpec>,
) -> Result<Trained<LinearModel>> {
    let tc = cfg.train_config(fe);
    let path = models.join(format!("{}.model", model_stem(cfg, fe.as_ref())));
    if let Ok(bytes) = fs::read(&path) {
        if let Ok((model, header)) = linear_from_bytes(&bytes) {
            if cache_hit(&header, ModelKind::Linear, &tc, cfg) {
                log(cfg, &format!("reusing {}", path.display()));
                return Ok(Trained {
                    model,
                    header,
                    seconds: read_seconds(&path),
                    sha256: sha256_hex(&bytes),
                    path,
                    reused: true,
                });
            }
        }
    }
    let (model, record, bytes, seconds) = train_svm_model(cfg, mnist, fe)?;
    store(&path, &bytes, seconds, &record)?;
    let (_, header) = linear_from_bytes(&bytes)?;
    Ok(Trained {
        model,
        header,
        sha256: sha256_hex(&bytes),
        path,
        seconds: Some(seconds),
        reused: false,
    })
}

/// Network counterpart of [`ensure_svm`].
pub fn ensure_net(
    cfg: &ExperimentConfig,
    mnist: &Mnist,
    models: &Path,
    fe: Option<FrontEndSpec>,
) -> Result<Trained<Network>> {
    let tc = cfg.train_config(fe);
    let path = models.join(format!("{}.model", model_stem(cfg, fe.as_ref())));
    if let Ok(bytes) = fs::read(&path) {
        if let Ok((model, header)) = network_from_bytes(&bytes) {
            if cache_hit(&header, ModelKind::Network, &tc, cfg) {
                log(cfg, &format!("reusing {}", path.display()));
                return Ok(Trained {
                    model,
                    header,
                    seconds: read_seconds(&path),
                    sha256: sha256_hex(&bytes),
                    path,
                    reused: true,
                });
            }
        }
    }
    let (model, record, bytes, seconds) = train_net_model(cfg, mnist, fe)?;
    store(&path, &bytes, seconds, &record)?;
    let (_, header) = network_from_bytes(&bytes)?;
    Ok(Trained {
        model,
        header,
        sha256: sha256_hex(&bytes),
        path,
        seconds: Some(seconds),
        reused: false,
    })
}

fn store<T: Serialize>(path: &Path, bytes: &[u8], seconds: f64, record: &T) -> Result<()> {
    write_atomic(path, bytes)?;
    write_atomic(&path.with_extension("train.json"), &crate::report::json_bytes(record)?)?;
    write_atomic(&seconds_path(path), format!("{seconds:.3}\n").as_bytes())
}

pub fn cmd_train_svm(cfg: &ExperimentConfig) -> Result<SvmTrainRecord> {
    require_task(cfg, Task::SvmPair, "train-svm")?;
    let mnist = Mnist::new(cfg);
    let fe = training_front_end(cfg, cfg.rho);
    let (_, record, bytes, seconds) = train_svm_model(cfg, &mnist, fe)?;
    let stem = model_stem(cfg, fe.as_ref());
    let mut set = ReportSet::default();
    mnist.record_inputs(&mut set, Split::Train)?;
    mnist.record_inputs(&mut set, Split::Test)?;
    set.add(format!("{stem}.model"), bytes);
    set.add_json(&format!("{stem}.train.json"), &record)?;
    set.add("train-svm.conf", cfg.to_kv().into_bytes());
    set.commit("train-svm", cfg)?;
    write_atomic(&cfg.out.join(format!("{stem}.seconds")), format!("{seconds:.3}\n").as_bytes())?;
    Ok(record)
}

pub fn cmd_train_net(cfg: &ExperimentConfig) -> Result<NetTrainRecord> {
    require_task(cfg, Task::CnnMulticlass, "train-net")?;
    let mnist = Mnist::new(cfg);
    let fe = training_front_end(cfg, cfg.rho);
    let (_, record, bytes, seconds) = train_net_model(cfg, &mnist, fe)?;
    let stem = model_stem(cfg, fe.as_ref());
    let mut set = ReportSet::default();
    mnist.record_inputs(&mut set, Split::Train)?;
    mnist.record_inputs(&mut set, Split::Test)?;
    set.add(format!("{stem}.model"), bytes);
    set.add_json(&format!("{stem}.train.json"), &record)?;
    set.add("train-net.conf", cfg.to_kv().into_bytes());
    set.commit("train-net", cfg)?;
    write_atomic(&cfg.out.join(format!("{stem}.seconds")), format!("{seconds:.3}\n").as_bytes())?;
    Ok(record)
}

fn require_task(cfg: &ExperimentConfig, task: Task, command: &str) -> Result<()> {
    if cfg.task != task {
        bail!("`{command}` runs the {task} task, but the configuration selects {}", cfg.task);
    }
    Ok(())
}

fn spec_of(cfg: &ExperimentConfig, kind: AttackKind, epsilon: f64) -> AttackSpec {
    AttackSpec {
        kind,
        epsilon,
        clip: cfg.clip,
        convention: cfg.convention,
    }
}

/// Either classifier, as loaded for an attack.
pub enum Classifier {
    Linear(LinearModel),
    Network(Network),
}

/// Attacks `model` with one setting; `fe` is the deployed front end.
pub fn run_attack(
    cfg: &ExperimentConfig,
    mnist: &Mnist,
    model: &Classifier,
    fe: Option<&FrontEndConfig>,
    kind: AttackKind,
    epsilon: f64,
) -> Result<EvalReport> {
    let spec = spec_of(cfg, kind, epsilon);
    let start = Instant::now();
    let report = match model {
        Classifier::Linear(m) => evaluate_linear(m, fe, &mnist.pair(Split::Test, cfg.digits)?, spec)?,
        Classifier::Network(n) => evaluate_network(n, fe, mnist.split(Split::Test)?, spec)?,
    };
    check_finite("attacked accuracy", report.attacked_accuracy)?;
    check_finite("mean distortion", report.mean_distortion)?;
    log(
        cfg,
        &format!(
            "{kind} eps={epsilon} defended={}: clean {:.2}% attacked {:.2}% ({:.1} s)",
            fe.is_some(),
            100.0 * report.clean_accuracy,
            100.0 * report.attacked_accuracy,
            start.elapsed().as_secs_f64()
        ),
    );
    Ok(report)
}

pub const SUMMARY_HEADER: &[&str] = &[
    "task",
    "model",
    "defended",
    "basis",
    "levels",
    "rho",
    "k",
    "attack",
    "epsilon",
    "clip",
    "convention",
    "samples",
    "clean_correct",
    "attacked_correct",
    "clean_accuracy",
    "attacked_accuracy",
    "mean_distortion",
    "certified",
];

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn summary_row(
    cfg: &ExperimentConfig,
    model: &str,
    fe: Option<&FrontEndConfig>,
    rho: f64,
    r: &EvalReport,
) -> Vec<String> {
    let (basis, levels, rho, k) = match fe {
        Some(f) => (
            cfg.basis.to_string(),
            cfg.levels.to_string(),
            fmt_rho(rho),
            f.k().to_string(),
        ),
        None => ("none".into(), String::new(), String::new(), String::new()),
    };
    vec![
        cfg.task.to_string(),
        model.to_string(),
        fe.is_some().to_string(),
        basis,
        levels,
        rho,
        k,
        r.spec.kind.to_string(),
        r.spec.epsilon.to_string(),
        r.spec.clip.to_string(),
        format!("{:?}", r.spec.convention).to_lowercase(),
        r.samples.to_string(),
        r.clean_correct.to_string(),
        r.attacked_correct.to_string(),
        pct(r.clean_accuracy),
        pct(r.attacked_accuracy),
        format!("{:.6}", r.mean_distortion),
        r.certified.map(|c| c.to_string()).unwrap_or_default(),
    ]
}

/// Loads the model `cfg` describes and checks that it was trained the way
/// the configuration claims.
pub fn load_for_attack(cfg: &ExperimentConfig, explicit: Option<&Path>) -> Result<(Classifier, PathBuf, String)> {
    let fe = training_front_end(cfg, cfg.rho);
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let name = format!("{}.model", model_stem(cfg, fe.as_ref()));
            [cfg.out.join(&name), cfg.out.join("models").join(&name)]
                .into_iter()
                .find(|p| p.is_file())
                .ok_or_else(|| {
                    anyhow!(
                        "no model {name} in {}; train one with `sparsedef {}` using the same settings, \
                         or pass --model",
                        cfg.out.display(),
                        if cfg.task == Task::SvmPair { "train-svm" } else { "train-net" }
                    )
                })?
        }
    };
    let bytes = fs::read(&path).with_context(|| format!("reading model {}", path.display()))?;
    let sha = sha256_hex(&bytes);
    let (model, header) = match cfg.task {
        Task::SvmPair => {
            let (m, h) = linear_from_bytes(&bytes).with_context(|| format!("loading {}", path.display()))?;
            (Classifier::Linear(m), h)
        }
        Task::CnnMulticlass => {
            let (n, h) = network_from_bytes(&bytes).with_context(|| format!("loading {}", path.display()))?;
            (Classifier::Network(n), h)
        }
        Task::Attenuation => bail!("the attenuation task has no model to attack"),
    };
    let trained_with = header.train_config.as_ref().and_then(|t| t.front_end);
    if trained_with != fe {
        bail!(
            "model/config mismatch: {} was trained with front end {:?}, but the configuration \
             (defended={}, retrain={}) expects {:?}",
            path.display(),
            trained_with,
            cfg.defended,
            cfg.retrain,
            fe
        );
    }
    if let (Some(dim), Classifier::Linear(_)) = (header.dim, &model) {
        if dim != SIDE * SIDE {
            bail!("model/config mismatch: {} expects {dim} inputs", path.display());
        }
    }
    if let Classifier::Network(n) = &model {
        if n.input_len() != SIDE * SIDE {
            bail!("model/config mismatch: {} expects {} inputs", path.display(), n.input_len());
        }
    }
    Ok((model, path, sha))
}

pub fn deployed_front_end(cfg: &ExperimentConfig, rho: f64) -> Result<Option<FrontEndConfig>> {
    if cfg.defended {
        Ok(Some(build_front_end(&cfg.front_end_spec(rho))?))
    } else {
        Ok(None)
    }
}

pub fn cmd_attack(cfg: &ExperimentConfig, model_path: Option<&Path>) -> Result<EvalReport> {
    let (model, path, sha) = load_for_attack(cfg, model_path)?;
    if matches!(model, Classifier::Linear(_)) && cfg.attack == AttackKind::Fgsm {
        bail!("FGSM is defined for networks; use --attack semiwhite or white for the SVM");
    }
    let mnist = Mnist::new(cfg);
    let fe = deployed_front_end(cfg, cfg.rho)?;
    let report = run_attack(cfg, &mnist, &model, fe.as_ref(), cfg.attack, cfg.epsilon)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut set = ReportSet::default();
    mnist.record_inputs(&mut set, Split::Test)?;
    set.input(name.clone(), sha);
    set.add_csv(
        "attack_summary.csv",
        SUMMARY_HEADER,
        &[summary_row(cfg, &name, fe.as_ref(), cfg.rho, &report)],
    )?;
    set.add_json("attack_records.json", &report)?;
    set.add("attack.conf", cfg.to_kv().into_bytes());
    set.commit("attack", cfg)?;
    Ok(report)
}

/// One point of a sweep grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPoint {
    pub rho: f64,
    pub k: usize,
    pub epsilon: f64,
    pub clean_accuracy: f64,
    pub attacked_accuracy: f64,
    pub mean_distortion: f64,
    pub certified: Option<usize>,
    /// Highest attacked accuracy among the ρ values at this ε.
    pub best: bool,
}

/// Accuracy over the ρ × ε grid with the defense on. Each ρ gets its own
/// model (retrained unless `retrain = false`); models are cached under
/// `<out>/models`.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<GridPoint>> {
    if cfg.rhos.is_empty() || cfg.epsilons.is_empty() {
        bail!("sweep needs non-empty rhos and epsilons");
    }
    if cfg.task == Task::SvmPair && cfg.attack == AttackKind::Fgsm {
        bail!("FGSM is defined for networks; use --attack semiwhite or white for the SVM");
    }
    let cfg = &ExperimentConfig {
        defended: true,
        ..cfg.clone()
    };
    let mnist = Mnist::new(cfg);
    let models = cfg.out.join("models");
    let mut set = ReportSet::default();
    mnist.record_inputs(&mut set, Split::Test)?;
    let mut grid = Vec::new();
    let mut reports = Vec::new();
    for &rho in &cfg.rhos {
        let trained_fe = training_front_end(cfg, rho);
        let (model, name, sha) = match cfg.task {
            Task::SvmPair => {
                let t = ensure_svm(cfg, &mnist, &models, trained_fe)?;
                (Classifier::Linear(t.model), file_name(&t.path), t.sha256)
            }
            Task::CnnMulticlass => {
                let t = ensure_net(cfg, &mnist, &models, trained_fe)?;
                (Classifier::Network(t.model), file_name(&t.path), t.sha256)
            }
            Task::Attenuation => bail!("use `sparsedef attenuation` for the attenuation task"),
        };
        if !set.has_input(&name) {
            set.input(name, sha);
        }
        let fe = build_front_end(&cfg.front_end_spec(rho))?;
        for &epsilon in &cfg.epsilons {
            let r = run_attack(cfg, &mnist, &model, Some(&fe), cfg.attack, epsilon)?;
            grid.push(GridPoint {
                rho,
                k: fe.k(),
                epsilon,
                clean_accuracy: r.clean_accuracy,
                attacked_accuracy: r.attacked_accuracy,
                mean_distortion: r.mean_distortion,
                certified: r.certified,
                best: false,
            });
            reports.push(r);
        }
    }
    mark_best(&mut grid);
    let rows: Vec<Vec<String>> = grid
        .iter()
        .map(|g| {
            vec![
                fmt_rho(g.rho),
                g.k.to_string(),
                g.epsilon.to_string(),
                cfg.attack.to_string(),
                pct(g.clean_accuracy),
                pct(g.attacked_accuracy),
                format!("{:.6}", g.mean_distortion),
                g.certified.map(|c| c.to_string()).unwrap_or_default(),
                if g.best { "*".into() } else { String::new() },
            ]
        })
        .collect();
    set.add_csv(
        "sweep.csv",
        &[
            "rho",
            "k",
            "epsilon",
            "attack",
            "clean_accuracy",
            "attacked_accuracy",
            "mean_distortion",
            "certified",
            "best_rho",
        ],
        &rows,
    )?;
    set.add_json("sweep_records.json", &reports)?;
    set.add("sweep.conf", cfg.to_kv().into_bytes());
    set.commit("sweep", cfg)?;
    Ok(grid)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Flags, per ε, every ρ whose attacked accuracy equals the column maximum.
pub fn mark_best(grid: &mut [GridPoint]) {
    let eps: Vec<f64> = grid.iter().map(|g| g.epsilon).collect();
    for e in eps {
        let best = grid
            .iter()
            .filter(|g| g.epsilon == e)
            .map(|g| g.attacked_accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        for g in grid.iter_mut().filter(|g| g.epsilon == e) {
            g.best = g.attacked_accuracy == best;
        }
    }
}

pub fn cmd_attenuation(cfg: &ExperimentConfig) -> Result<Vec<sparsedef::attenuation::AttenuationReport>> {
    if cfg.dims.is_empty() {
        bail!("attenuation needs at least one dimension in `dims`");
    }
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for &n in &cfg.dims {
        for mode in [AttackKind::SemiWhite, AttackKind::White] {
            let ec = EnsembleConfig::new(n, cfg.k, cfg.trials, cfg.basis, mode, cfg.seed);
            let start = Instant::now();
            let r = run_ensemble(&ec).map_err(|e| anyhow!("N = {n}: {e}"))?;
            check_finite("mean ratio", r.mean_ratio)?;
            log(
                cfg,
                &format!(
                    "N={n} K={} {mode}: ratio {:.6} (K/N {:.6}) in {:.2} s",
                    cfg.k,
                    r.mean_ratio,
                    r.k_over_n(),
                    start.elapsed().as_secs_f64()
                ),
            );
            rows.push(vec![
                n.to_string(),
                cfg.k.to_string(),
                cfg.basis.to_string(),
                mode.to_string(),
                format!("{:.8}", r.mean_ratio),
                format!("{:.8}", r.stderr),
                format!("{:.8}", r.k_over_n()),
                r.white_below_semi_white.to_string(),
                cfg.trials.to_string(),
                cfg.seed.to_string(),
            ]);
            reports.push(r);
        }
    }
    let mut set = ReportSet::default();
    set.add_csv(
        "attenuation.csv",
        &[
            "n",
            "k",
            "basis",
            "mode",
            "mean_ratio",
            "stderr",
            "k_over_n",
            "white_below_semi_white",
            "trials",
            "seed",
        ],
        &rows,
    )?;
    set.add_json("attenuation.json", &reports)?;
    set.add("attenuation.conf", cfg.to_kv().into_bytes());
    set.commit("attenuation", cfg)?;
    Ok(reports)
}

/// One cell of the accuracy table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Cell {
    pub classifier: String,
    pub defense: String,
    pub attack: String,
    pub epsilon: f64,
    pub rho: Option<f64>,
    /// Percent.
    pub measured: f64,
    /// Published value, percent.
    pub reference: Option<f64>,
}

impl Table1Cell {
    pub fn delta(&self) -> Option<f64> {
        self.reference.map(|r| self.measured - r)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1 {
    pub cells: Vec<Table1Cell>,
    /// `(description, holds)` for each ordering the table should show.
    pub orderings: Vec<(String, bool)>,
    /// Training wall-clock seconds per model file, when known.
    #[serde(skip)]
    pub training_seconds: Vec<(String, Option<f64>)>,
}

impl Table1 {
    pub fn get(&self, classifier: &str, defense: &str, attack: &str) -> Option<&Table1Cell> {
        self.cells
            .iter()
            .find(|c| c.classifier == classifier && c.defense == defense && c.attack == attack)
    }
}

/// Published accuracies (percent) for the table cells.
pub fn reference_value(classifier: &str, defense: &str, attack: &str) -> Option<f64> {
    Some(match (classifier, defense, attack) {
        ("svm", "none", "clean") => 98.2,
        ("svm", "none", "semiwhite") => 0.0,
        ("svm", "none", "white") => 0.0,
        ("svm", "sparsify", "semiwhite") => 97.31,
        ("svm", "sparsify", "white") => 94.62,
        ("cnn", "none", "clean") => 99.38,
        ("cnn", "none", "fgsm") => 19.45,
        ("cnn", "none", "semiwhite") => 8.87,
        ("cnn", "none", "white") => 8.87,
        ("cnn", "sparsify", "fgsm") => 89.75,
        ("cnn", "sparsify", "semiwhite") => 88.76,
        ("cnn", "sparsify", "white") => 84.04,
        _ => return None,
    })
}

/// Settings that table1 fixes per task.
const TABLE1_FIXED: &[&str] = &["task", "epsilon", "rho", "attack", "defended"];

/// Per-task configurations for the table: each task's defaults, then the
/// caller's overrides.
pub fn table1_configs(o: &Overrides) -> Result<(ExperimentConfig, ExperimentConfig)> {
    for k in TABLE1_FIXED {
        if o.get(k).is_some() {
            bail!("table1 fixes `{k}` per task; remove it from the flags or config file");
        }
    }
    Ok((
        ExperimentConfig::resolve(o, Task::SvmPair)?,
        ExperimentConfig::resolve(o, Task::CnnMulticlass)?,
    ))
}

/// Runs every cell of the accuracy table. Models live in `<out>/models` and
/// are reused when their recorded training setup matches.
pub fn cmd_table1(o: &Overrides) -> Result<Table1> {
    let (svm_cfg, cnn_cfg) = table1_configs(o)?;
    let cfg = &svm_cfg;
    let mnist = Mnist::new(cfg);
    let models = cfg.out.join("models");
    let mut set = ReportSet::default();
    mnist.record_inputs(&mut set, Split::Train)?;
    mnist.record_inputs(&mut set, Split::Test)?;
    let mut cells = Vec::new();
    let mut records: Vec<(String, EvalReport)> = Vec::new();
    let mut seconds = Vec::new();

    let cell = |classifier: &str, defense: &str, attack: &str, epsilon: f64, rho: Option<f64>, acc: f64| Table1Cell {
        classifier: classifier.into(),
        defense: defense.into(),
        attack: attack.into(),
        epsilon,
        rho,
        measured: 100.0 * acc,
        reference: reference_value(classifier, defense, attack),
    };

    for (task_cfg, classifier, attacks) in [
        (&svm_cfg, "svm", vec![AttackKind::SemiWhite, AttackKind::White]),
        (
            &cnn_cfg,
            "cnn",
            vec![AttackKind::Fgsm, AttackKind::SemiWhite, AttackKind::White],
        ),
    ] {
        for defended in [false, true] {
            let c = ExperimentConfig {
                defended,
                ..task_cfg.clone()
            };
            let trained_fe = training_front_end(&c, c.rho);
            let (model, path, sha, secs) = match c.task {
                Task::SvmPair => {
                    let t = ensure_svm(&c, &mnist, &models, trained_fe)?;
                    (Classifier::Linear(t.model), t.path, t.sha256, t.seconds)
                }
                _ => {
                    let t = ensure_net(&c, &mnist, &models, trained_fe)?;
                    (Classifier::Network(t.model), t.path, t.sha256, t.seconds)
                }
            };
            let name = format!("models/{}", file_name(&path));
            set.input(name.clone(), sha);
            seconds.push((name, secs));
            let fe = deployed_front_end(&c, c.rho)?;
            let defense = if defended { "sparsify" } else { "none" };
            let rho = defended.then_some(c.rho);
            for &kind in &attacks {
                let r = run_attack(&c, &mnist, &model, fe.as_ref(), kind, c.epsilon)?;
                if kind == attacks[0] {
                    cells.push(cell(classifier, defense, "clean", 0.0, rho, r.clean_accuracy));
                }
                cells.push(cell(classifier, defense, &kind.to_string(), c.epsilon, rho, r.attacked_accuracy));
                records.push((format!("{classifier}/{defense}/{kind}"), r));
            }
        }
    }

    let mut table = Table1 {
        cells,
        orderings: Vec::new(),
        training_seconds: seconds,
    };
    table.orderings = orderings(&table);
    set.add_csv("table1.csv", TABLE1_HEADER, &table1_rows(&table))?;
    set.add("table1.txt", render_table1(&table).into_bytes());
    set.add_json("table1_records.json", &records)?;
    set.add("table1_svm.conf", svm_cfg.to_kv().into_bytes());
    set.add("table1_cnn.conf", cnn_cfg.to_kv().into_bytes());
    set.commit("table1", cfg)?;
    Ok(table)
}

const TABLE1_HEADER: &[&str] = &[
    "classifier",
    "defense",
    "attack",
    "epsilon",
    "rho",
    "measured",
    "reference",
    "delta",
];

fn opt2(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

fn table1_rows(t: &Table1) -> Vec<Vec<String>> {
    t.cells
        .iter()
        .map(|c| {
            vec![
                c.classifier.clone(),
                c.defense.clone(),
                c.attack.clone(),
                c.epsilon.to_string(),
                c.rho.map(fmt_rho).unwrap_or_default(),
                format!("{:.2}", c.measured),
                opt2(c.reference),
                c.delta().map(|d| format!("{d:+.2}")).unwrap_or_default(),
            ]
        })
        .collect()
}

fn orderings(t: &Table1) -> Vec<(String, bool)> {
    let mut out = Vec::new();
    let acc = |c: &str, d: &str, a: &str| t.get(c, d, a).map(|x| x.measured);
    for (c, attacks) in [("svm", &["semiwhite", "white"][..]), ("cnn", &["fgsm", "semiwhite", "white"][..])] {
        for a in attacks {
            if let (Some(u), Some(d)) = (acc(c, "none", a), acc(c, "sparsify", a)) {
                out.push((format!("{c} {a}: defended > undefended"), d > u));
            }
        }
    }
    for d in ["none", "sparsify"] {
        if let (Some(f), Some(s)) = (acc("cnn", d, "fgsm"), acc("cnn", d, "semiwhite")) {
            out.push((format!("cnn {d}: semiwhite <= fgsm"), s <= f));
        }
    }
    if let (Some(s), Some(w)) = (acc("cnn", "sparsify", "semiwhite"), acc("cnn", "sparsify", "white")) {
        out.push(("cnn sparsify: white <= semiwhite".into(), w <= s));
    }
    out
}

/// Measured and published accuracies side by side, as plain text.
pub fn render_table1(t: &Table1) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "Classification accuracy (%): measured / reference (delta)");
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<4} {:<10} {:>28} {:>28}",
        "", "attack", "no defense", "sparsifying front end"
    );
    for c in ["svm", "cnn"] {
        let attacks: &[&str] = if c == "svm" {
            &["clean", "semiwhite", "white"]
        } else {
            &["clean", "fgsm", "semiwhite", "white"]
        };
        for a in attacks {
            let cell = |d: &str| match t.get(c, d, a) {
                Some(x) => format!(
                    "{:6.2} / {} ({})",
                    x.measured,
                    x.reference.map(|r| format!("{r:6.2}")).unwrap_or_else(|| "     -".into()),
                    x.delta().map(|d| format!("{d:+6.2}")).unwrap_or_else(|| "     -".into())
                ),
                None => "-".into(),
            };
            let _ = writeln!(s, "{:<4} {:<10} {:>28} {:>28}", c, a, cell("none"), cell("sparsify"));
        }
    }
    let _ = writeln!(s);
    for (what, holds) in &t.orderings {
        let _ = writeln!(s, "{}: {what}", if *holds { "holds" } else { "FAILS" });
    }
    s
}
