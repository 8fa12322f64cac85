//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Needs the MNIST files in `$SPARSEDEF_DATA` (default `data/mnist` at the
//! workspace root). Trained models and reports persist under
//! `target/tmp/acceptance`, so only the first run pays for CNN training.
//! A criterion that fails is reported, not hidden; set
//! `SPARSEDEF_ACCEPTANCE_STRICT=1` to also turn any FAIL into a nonzero exit.

#[path = "../../core/tests/support/certify.rs"]
mod certify;
#[path = "../../core/tests/support/fir.rs"]
mod fir;

use std::cell::OnceCell;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, ensure, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sparsedef::attacks::{
    distortion_linear, extract_locally_linear, fgsm, pairwise_attack, projection, white_linear,
    AttackKind,
};
use sparsedef::attenuation::{run_ensemble, EnsembleConfig};
use sparsedef::data::{Dataset, Split, DATA_DIR_ENV};
use sparsedef::frontend::{Convention, FrontEndConfig};
use sparsedef::models::{
    train_network, Architecture, FrontEndSpec, LayerSpec, LinearModel, Network, Schedule, Shape,
    TrainConfig,
};
use sparsedef::transform::{Basis, BasisKind};
use sparsedef_cli::config::{ExperimentConfig, Overrides, Task};
use sparsedef_cli::experiments::{
    cmd_attack, cmd_attenuation, cmd_table1, cmd_train_net, cmd_train_svm, load_for_attack, run_attack,
    Mnist, Table1,
};
use sparsedef_cli::report::Manifest;

struct Ctx {
    data: PathBuf,
    out: PathBuf,
    table: OnceCell<Table1>,
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        pass,
        detail: detail.into(),
    })
}

impl Ctx {
    fn config(&self, task: Task, dir: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::defaults(task);
        c.data = self.data.clone();
        c.out = self.out.join(dir);
        c
    }

    /// The accuracy table, computed once for criteria 4 to 6.
    fn table(&self) -> Result<&Table1> {
        if let Some(t) = self.table.get() {
            return Ok(t);
        }
        let mut o = Overrides::default();
        o.set("data", self.data.display().to_string())?;
        o.set("out", self.out.join("table1").display().to_string())?;
        let t = cmd_table1(&o)?;
        Ok(self.table.get_or_init(|| t))
    }

    fn cell(&self, classifier: &str, defense: &str, attack: &str) -> Result<f64> {
        let t = self.table()?;
        match t.get(classifier, defense, attack) {
            Some(c) => Ok(c.measured),
            None => bail!("table has no {classifier}/{defense}/{attack} cell"),
        }
    }
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn svm_attack(cfg: &ExperimentConfig, kind: AttackKind) -> Result<f64> {
    let (model, _, _) = load_for_attack(cfg, None)?;
    let mnist = Mnist::new(cfg);
    let fe = sparsedef_cli::experiments::deployed_front_end(cfg, cfg.rho)?;
    Ok(100.0 * run_attack(cfg, &mnist, &model, fe.as_ref(), kind, cfg.epsilon)?.attacked_accuracy)
}

fn c1_svm_clean(ctx: &Ctx) -> Result<Verdict> {
    let cfg = ctx.config(Task::SvmPair, "svm_plain");
    let start = Instant::now();
    let r = cmd_train_svm(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let acc = 100.0 * r.test_accuracy;
    verdict(
        within(acc, 98.2, 1.0) && secs < 120.0,
        format!("clean {acc:.2}% (target 98.2 ± 1.0), {secs:.1} s (limit 120 s)"),
    )
}

fn c2_svm_undefended(ctx: &Ctx) -> Result<Verdict> {
    let cfg = ctx.config(Task::SvmPair, "svm_plain");
    if load_for_attack(&cfg, None).is_err() {
        cmd_train_svm(&cfg)?;
    }
    let sw = svm_attack(&cfg, AttackKind::SemiWhite)?;
    let w = svm_attack(&cfg, AttackKind::White)?;
    verdict(
        sw <= 2.0 && w <= 2.0,
        format!("semi-white {sw:.2}%, white {w:.2}% (limit 2%)"),
    )
}

fn c3_svm_defended(ctx: &Ctx) -> Result<Verdict> {
    let mut cfg = ctx.config(Task::SvmPair, "svm_defended");
    cfg.defended = true;
    let start = Instant::now();
    let r = cmd_train_svm(&cfg)?;
    let sw = svm_attack(&cfg, AttackKind::SemiWhite)?;
    let w = svm_attack(&cfg, AttackKind::White)?;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        within(sw, 97.31, 3.0) && within(w, 94.62, 3.0) && secs < 600.0,
        format!(
            "clean {:.2}%, semi-white {sw:.2}% (target 97.31 ± 3), white {w:.2}% (target 94.62 ± 3), \
             {secs:.1} s (limit 600 s)",
            100.0 * r.test_accuracy
        ),
    )
}

fn c4_cnn_clean(ctx: &Ctx) -> Result<Verdict> {
    let acc = ctx.cell("cnn", "none", "clean")?;
    let t = ctx.table()?;
    let plain = t
        .training_seconds
        .iter()
        .find(|(name, _)| name.contains("net_cnn_plain"))
        .and_then(|(_, s)| *s);
    let defended = t
        .training_seconds
        .iter()
        .find(|(name, _)| name.contains("net_cnn_cdf97"))
        .and_then(|(_, s)| *s);
    let fmt = |s: Option<f64>| s.map_or("unknown".to_string(), |s| format!("{:.0} s", s));
    let time_ok = [plain, defended].iter().all(|s| s.is_some_and(|s| s <= 7200.0));
    verdict(
        acc >= 98.8 && time_ok,
        format!(
            "cnn architecture clean {acc:.2}% (limit >= 98.8), training {} plain / {} defended (limit 7200 s each)",
            fmt(plain),
            fmt(defended)
        ),
    )
}

fn c5_cnn_undefended(ctx: &Ctx) -> Result<Verdict> {
    let f = ctx.cell("cnn", "none", "fgsm")?;
    let sw = ctx.cell("cnn", "none", "semiwhite")?;
    let w = ctx.cell("cnn", "none", "white")?;
    verdict(
        within(f, 19.45, 5.0) && within(sw, 8.87, 4.0) && within(w, 8.87, 4.0) && sw == w,
        format!("FGSM {f:.2}% (19.45 ± 5), semi-white {sw:.2}%, white {w:.2}% (8.87 ± 4, equal)"),
    )
}

fn c6_cnn_defended(ctx: &Ctx) -> Result<Verdict> {
    let f = ctx.cell("cnn", "sparsify", "fgsm")?;
    let sw = ctx.cell("cnn", "sparsify", "semiwhite")?;
    let w = ctx.cell("cnn", "sparsify", "white")?;
    let uf = ctx.cell("cnn", "none", "fgsm")?;
    let usw = ctx.cell("cnn", "none", "semiwhite")?;
    let uw = ctx.cell("cnn", "none", "white")?;
    let values = within(f, 89.75, 5.0) && within(sw, 88.76, 5.0) && within(w, 84.04, 5.0);
    let dominates = f > uf && sw > usw && w > uw;
    let ordered = w <= sw && sw <= f;
    verdict(
        values && dominates && ordered,
        format!(
            "FGSM {f:.2}% (89.75 ± 5), semi-white {sw:.2}% (88.76 ± 5), white {w:.2}% (84.04 ± 5); \
             defended > undefended: {dominates}; white <= semi-white <= FGSM: {ordered}"
        ),
    )
}

fn c7_attenuation(_: &Ctx) -> Result<Verdict> {
    let cfg = EnsembleConfig::new(1024, 32, 2000, BasisKind::Identity, AttackKind::SemiWhite, 1);
    let start = Instant::now();
    let r = run_ensemble(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let k_over_n = 32.0 / 1024.0;
    let rel = (r.mean_ratio - k_over_n).abs() / k_over_n;
    verdict(
        rel <= 0.10 && r.white_below_semi_white == 0 && secs < 60.0,
        format!(
            "semi-white ratio {:.5} vs K/N {k_over_n:.5} ({:.1}% off, limit 10%), white below semi-white \
             on {} of 2000 paired trials, {secs:.2} s",
            r.mean_ratio,
            100.0 * rel,
            r.white_below_semi_white
        ),
    )
}

fn c8_transforms(_: &Ctx) -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut recon = 0.0_f64;
    for (kind, levels) in [(BasisKind::Haar, 1..=4), (BasisKind::Cdf97, 1..=4)] {
        for l in levels {
            let b = Basis::new(kind, 28, 28, l)?;
            for _ in 0..100 {
                let x: Vec<f64> = (0..784).map(|_| rng.gen_range(0.0..1.0)).collect();
                let back = b.synthesize(&b.analyze(&x)?)?;
                recon = recon.max(x.iter().zip(&back).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max));
            }
        }
    }
    let haar = Basis::new(BasisKind::Haar, 28, 28, 2)?;
    let cols: Vec<Vec<f64>> = (0..784).map(|j| haar.basis_vector(j)).collect::<Result<_, _>>()?;
    let mut ortho = 0.0_f64;
    for i in 0..784 {
        for j in i..784 {
            let ip: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            ortho = ortho.max((ip - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    let mut fir_err = 0.0_f64;
    for (h, w, levels) in [(8, 8, 2), (28, 28, 2), (28, 28, 3), (13, 9, 3)] {
        let b = Basis::new(BasisKind::Cdf97, h, w, levels)?;
        let x: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lifted = b.analyze(&x)?;
        let direct = fir::oracle_2d(&x, h, w, levels);
        fir_err = fir_err.max(lifted.iter().zip(&direct).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max));
    }
    verdict(
        recon < 1e-9 && ortho < 1e-9 && fir_err < 1e-8,
        format!(
            "reconstruction {recon:.1e} (< 1e-9), Haar Gram deviation {ortho:.1e} (< 1e-9), \
             lifting vs FIR {fir_err:.1e} (< 1e-8)"
        ),
    )
}

fn c9_certificate(_: &Ctx) -> Result<Verdict> {
    let t = certify::run(250, 9);
    verdict(
        t.instances == 1000 && t.support_changes == 0 && t.over_budget == 0,
        format!(
            "{} certified instances, {} perturbations, {} support changes",
            t.instances, t.perturbations, t.support_changes
        ),
    )
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// Random weights and biases, so no unit sits on a kink at init.
fn random_net(arch: Architecture, seed: u64, scale: f64) -> Result<Network> {
    let mut net = Network::new(arch, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let p: Vec<f64> = net.params().iter().map(|w| w + rng.gen_range(-scale..scale)).collect();
    net.set_params(&p)?;
    Ok(net)
}

fn c10_locally_linear(_: &Ctx) -> Result<Verdict> {
    let fe = FrontEndSpec {
        basis: BasisKind::Cdf97,
        levels: 2,
        rho: 0.03,
    }
    .build(28, 28)?;
    let mut worst = 0.0_f64;
    let mut checked = 0;
    for (p, name) in ["cnn", "dense", "tiny"].into_iter().enumerate() {
        let arch = Architecture::preset(name, 0.5).expect("preset");
        let net = random_net(arch, 10 + p as u64, 0.01)?;
        let mut rng = ChaCha8Rng::seed_from_u64(100 + p as u64);
        for _ in 0..100 {
            let x: Vec<f64> = (0..784).map(|_| rng.gen_range(0.0..1.0)).collect();
            for defended in [false, true] {
                let (llm, y) = if defended {
                    (extract_locally_linear(&net, &x, Some(&fe))?, net.logits(&fe.apply(&x)?)?)
                } else {
                    (extract_locally_linear(&net, &x, None)?, net.logits(&x)?)
                };
                let recon = llm.evaluate(&x);
                for (a, b) in y.iter().zip(&recon) {
                    worst = worst.max((a - b).abs() / (1.0 + a.abs()));
                }
                checked += 1;
            }
        }
    }
    verdict(
        worst <= 1e-6,
        format!("{checked} reconstructions over 3 presets, defended and undefended; worst relative error {worst:.1e} (limit 1e-6)"),
    )
}

fn c11_backprop(_: &Ctx) -> Result<Verdict> {
    use LayerSpec::*;
    let cases: Vec<(&str, Architecture)> = vec![
        ("dense", Architecture { input: Shape::flat(6), layers: vec![Dense { units: 4 }] }),
        ("relu", Architecture { input: Shape::flat(6), layers: vec![Dense { units: 5 }, Relu, Dense { units: 3 }] }),
        (
            "conv",
            Architecture {
                input: Shape::new(5, 5, 2),
                layers: vec![Conv { maps: 3, kernel: 3 }, Flatten, Dense { units: 3 }],
            },
        ),
        (
            "max_pool",
            Architecture {
                input: Shape::new(6, 6, 1),
                layers: vec![Conv { maps: 2, kernel: 3 }, MaxPool, Flatten, Dense { units: 3 }],
            },
        ),
        (
            "dropout",
            Architecture {
                input: Shape::flat(6),
                layers: vec![Dense { units: 5 }, Relu, Dropout { rate: 0.5 }, Dense { units: 3 }],
            },
        ),
        (
            "flatten",
            Architecture { input: Shape::new(3, 3, 2), layers: vec![Flatten, Dense { units: 2 }] },
        ),
    ];
    let h = 1e-5;
    let mut report = Vec::new();
    let mut all_ok = true;
    for (c, (name, arch)) in cases.into_iter().enumerate() {
        let mut net = random_net(arch, 40 + c as u64, 0.3)?;
        let mut rng = ChaCha8Rng::seed_from_u64(50 + c as u64);
        let n = net.input_len();
        let rows = 3;
        let xs: Vec<f64> = (0..rows * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..rows).map(|r| r % net.classes()).collect();
        let mut worst = 0.0_f64;
        let (_, analytic) = net.loss_gradient(&xs, &labels)?;
        let params = net.params();
        for p in 0..params.len() {
            let mut v = params.clone();
            v[p] += h;
            net.set_params(&v)?;
            let lp = net.loss_gradient(&xs, &labels)?.0;
            v[p] -= 2.0 * h;
            net.set_params(&v)?;
            let lm = net.loss_gradient(&xs, &labels)?.0;
            worst = worst.max(rel_err((lp - lm) / (2.0 * h), analytic[p]));
        }
        net.set_params(&params)?;
        let x = &xs[..n];
        let (_, jac) = net.jacobian(x)?;
        for j in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let (yp, ym) = (net.logits(&xp)?, net.logits(&xm)?);
            for i in 0..net.classes() {
                worst = worst.max(rel_err((yp[i] - ym[i]) / (2.0 * h), jac[i * n + j]));
            }
        }
        all_ok &= worst <= 1e-4;
        report.push(format!("{name} {worst:.1e}"));
    }
    verdict(all_ok, format!("worst relative error per layer type (limit 1e-4): {}", report.join(", ")))
}

fn c12_binary_fgsm(ctx: &Ctx) -> Result<Verdict> {
    let cfg = ctx.config(Task::SvmPair, "binary_net");
    let mnist = Mnist::new(&cfg);
    let to_dataset = |split: Split| -> Result<Dataset> {
        let pair = mnist.pair(split, (3, 7))?;
        let pixels: Vec<f64> = (0..pair.len()).flat_map(|i| pair.image(i).to_vec()).collect();
        let labels: Vec<u8> = (0..pair.len()).map(|i| u8::from(pair.label(i) < 0.0)).collect();
        Ok(Dataset::new(split, 28, 28, pixels, labels)?)
    };
    let train = to_dataset(Split::Train)?;
    let test = to_dataset(Split::Test)?;
    let tc = TrainConfig {
        epochs: 2,
        schedule: Schedule::Constant,
        dropout_rate: 0.0,
        ..TrainConfig::network_default()
    };
    let (net, _) = train_network(&train, &Architecture::mlp(&[32], 2, 0.0), &tc)?;
    let mut compared = 0;
    let mut zero = 0;
    let mut mismatched = 0;
    for i in 0..test.len() {
        let x = test.image(i);
        let t = usize::from(test.label(i));
        let (e_fgsm, nonzero) = fgsm(&net, None, x, t, 0.12)?;
        if !nonzero {
            zero += 1;
            continue;
        }
        let sw = pairwise_attack(&net, None, x, t, 0.12, AttackKind::SemiWhite, Convention::Synthesis)?;
        compared += 1;
        if e_fgsm.e != sw.perturbation.e {
            mismatched += 1;
        }
    }
    verdict(
        mismatched == 0 && compared > 0,
        format!("{compared} test inputs compared, {mismatched} differing perturbations, {zero} zero gradients skipped"),
    )
}

fn c13_white_optimal(_: &Ctx) -> Result<Verdict> {
    let basis = Basis::new(BasisKind::Haar, 2, 4, 1)?;
    let fe = FrontEndConfig::with_k(basis.clone(), 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut beaten = 0;
    let mut worst_formula = 0.0_f64;
    for _ in 0..20 {
        let x = certify::k_sparse(&basis, 3, 1.0, &mut rng);
        let report = fe.check_high_snr(&x, 1.0)?;
        let eps = 0.9 * report.lambda / report.threshold;
        ensure!(fe.check_high_snr(&x, eps)?.certified, "instance not certified");
        let w: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
        let model = LinearModel::new(w, rng.gen_range(-1.0..1.0));
        let e_w = white_linear(&model, &x, eps, &fe, Convention::Synthesis)?;
        let d_w = distortion_linear(&model, &x, &e_w, Some(&fe))?;
        let p = projection(&model.w, &fe.support_of(&x)?, &basis, Convention::Synthesis)?;
        let l1: f64 = p.iter().map(|v| v.abs()).sum();
        worst_formula = worst_formula.max((d_w - eps * l1).abs());
        for bits in 0u32..256 {
            let e: Vec<f64> = (0..8).map(|j| if bits >> j & 1 == 1 { eps } else { -eps }).collect();
            let pert = sparsedef::attacks::Perturbation { e, epsilon: eps };
            if distortion_linear(&model, &x, &pert, Some(&fe))? > d_w + 1e-9 {
                beaten += 1;
            }
        }
    }
    verdict(
        beaten == 0 && worst_formula < 1e-9,
        format!("20 instances x 256 sign patterns: white box beaten {beaten} times; |Δ_W − ε‖p‖₁| <= {worst_formula:.1e}"),
    )
}

/// Every output listed in `manifest`, read back from `dir`, plus the manifest.
fn snapshot(dir: &Path, command: &str) -> Result<Vec<(String, Vec<u8>)>> {
    let manifest_path = dir.join(format!("{command}.manifest.json"));
    let bytes = fs::read(&manifest_path)?;
    let m: Manifest = serde_json::from_slice(&bytes)?;
    let mut out = vec![(manifest_path.display().to_string(), bytes)];
    for f in &m.outputs {
        let b = fs::read(dir.join(&f.name))?;
        ensure!(sparsedef::data::sha256_hex(&b) == f.sha256, "{} does not match its manifest digest", f.name);
        out.push((f.name.clone(), b));
    }
    Ok(out)
}

/// Reruns a command from the `.conf` file of its first run.
fn replay(conf: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::resolve(&Overrides::load(conf)?, Task::SvmPair)
}

fn c14_determinism(ctx: &Ctx) -> Result<Verdict> {
    let mut runs = Vec::new();
    let cfg = ctx.config(Task::SvmPair, "determinism/train");
    cmd_train_svm(&cfg)?;
    let first = snapshot(&cfg.out, "train-svm")?;
    cmd_train_svm(&replay(&cfg.out.join("train-svm.conf"))?)?;
    runs.push(("train-svm", first == snapshot(&cfg.out, "train-svm")?));

    let mut a = cfg.clone();
    a.attack = AttackKind::White;
    cmd_attack(&a, None)?;
    let first = snapshot(&a.out, "attack")?;
    cmd_attack(&replay(&a.out.join("attack.conf"))?, None)?;
    runs.push(("attack", first == snapshot(&a.out, "attack")?));

    let mut e = ctx.config(Task::Attenuation, "determinism/attenuation");
    e.trials = 500;
    e.basis = BasisKind::Haar;
    cmd_attenuation(&e)?;
    let first = snapshot(&e.out, "attenuation")?;
    cmd_attenuation(&replay(&e.out.join("attenuation.conf"))?)?;
    runs.push(("attenuation", first == snapshot(&e.out, "attenuation")?));

    let mut n = ctx.config(Task::CnnMulticlass, "determinism/net");
    n.arch = "tiny".into();
    n.epochs = 1;
    n.attack = AttackKind::Fgsm;
    cmd_train_net(&n)?;
    let first = snapshot(&n.out, "train-net")?;
    cmd_train_net(&replay(&n.out.join("train-net.conf"))?)?;
    runs.push(("train-net", first == snapshot(&n.out, "train-net")?));
    cmd_attack(&n, None)?;
    let first = snapshot(&n.out, "attack")?;
    cmd_attack(&replay(&n.out.join("attack.conf"))?, None)?;
    runs.push(("network attack", first == snapshot(&n.out, "attack")?));

    let ok = runs.iter().all(|(_, same)| *same);
    let detail = runs
        .iter()
        .map(|(name, same)| format!("{name} {}", if *same { "identical" } else { "DIFFERS" }))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(ok, format!("rerun from recorded config: {detail}"))
}

type Check = fn(&Ctx) -> Result<Verdict>;

fn main() -> ExitCode {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let data = std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| root.join("data/mnist"));
    if !data.join(Split::Train.image_file()).is_file() {
        eprintln!(
            "acceptance: MNIST not found in {}; run `sparsedef fetch-data --data {}` or set {DATA_DIR_ENV}",
            data.display(),
            data.display()
        );
        return ExitCode::FAILURE;
    }
    let ctx = Ctx {
        data,
        out: Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance"),
        table: OnceCell::new(),
    };
    let checks: [(u32, &str, Check); 14] = [
        (1, "SVM clean accuracy", c1_svm_clean),
        (2, "SVM undefended attacks", c2_svm_undefended),
        (3, "SVM with front end", c3_svm_defended),
        (4, "CNN clean accuracy", c4_cnn_clean),
        (5, "CNN undefended attacks", c5_cnn_undefended),
        (6, "CNN with front end", c6_cnn_defended),
        (7, "attenuation lab", c7_attenuation),
        (8, "transforms", c8_transforms),
        (9, "certificate soundness", c9_certificate),
        (10, "locally-linear exactness", c10_locally_linear),
        (11, "backprop vs finite differences", c11_backprop),
        (12, "binary FGSM equals semi-white", c12_binary_fgsm),
        (13, "white-box optimality", c13_white_optimal),
        (14, "byte-reproducible reruns", c14_determinism),
    ];
    let only: Option<Vec<u32>> = std::env::var("SPARSEDEF_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, check) in checks {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let v = match catch_unwind(AssertUnwindSafe(|| check(&ctx))) {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => Verdict {
                pass: false,
                detail: format!("error: {e:#}"),
            },
            Err(_) => Verdict {
                pass: false,
                detail: "panicked".into(),
            },
        };
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {} [{:.1} s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    let strict = std::env::var("SPARSEDEF_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
