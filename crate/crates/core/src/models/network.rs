use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Cache, Layer, LayerSpec, LayerSwitch, ParamGrad, Shape};
use super::ModelError;

/// Layer list plus input shape. The final layer must be dense; its width is
/// the number of classes L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Two 5x5 convolutions with 20 and 40 maps, each followed by ReLU and
    /// 2x2 max pooling, then two 1000-unit dense layers with dropout.
    pub fn mnist_cnn(dropout: f64) -> Self {
        use LayerSpec::*;
        Self {
            input: Shape::new(28, 28, 1),
            layers: vec![
                Conv { maps: 20, kernel: 5 },
                Relu,
                MaxPool,
                Conv { maps: 40, kernel: 5 },
                Relu,
                MaxPool,
                Flatten,
                Dense { units: 1000 },
                Relu,
                Dropout { rate: dropout },
                Dense { units: 1000 },
                Relu,
                Dropout { rate: dropout },
                Dense { units: 10 },
            ],
        }
    }

    /// 784 -> 256 -> 256 -> 10 with ReLU.
    pub fn dense_reduced(dropout: f64) -> Self {
        Self::mlp(&[256, 256], 10, dropout)
    }

    /// Fully connected ReLU network on flattened 28x28 inputs.
    pub fn mlp(hidden: &[usize], classes: usize, dropout: f64) -> Self {
        let mut layers = vec![LayerSpec::Flatten];
        for &units in hidden {
            layers.push(LayerSpec::Dense { units });
            layers.push(LayerSpec::Relu);
            if dropout > 0.0 {
                layers.push(LayerSpec::Dropout { rate: dropout });
            }
        }
        layers.push(LayerSpec::Dense { units: classes });
        Self {
            input: Shape::new(28, 28, 1),
            layers,
        }
    }

    pub fn preset(name: &str, dropout: f64) -> Option<Self> {
        match name {
            "cnn" => Some(Self::mnist_cnn(dropout)),
            "dense" | "reduced" => Some(Self::dense_reduced(dropout)),
            "tiny" => Some(Self::mlp(&[32], 10, 0.0)),
            _ => None,
        }
    }
}

/// Feedforward network whose only nonlinearities are ReLU and max pooling,
/// so the logit map is piecewise linear in the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    pub(crate) layers: Vec<Layer>,
}

/// Switch state of every layer of a network at one input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchState {
    pub layers: Vec<LayerSwitch>,
}

impl SwitchState {
    /// Number of ReLU units passing their input.
    pub fn active_relus(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                LayerSwitch::Relu(m) => m.iter().filter(|&&on| on).count(),
                _ => 0,
            })
            .sum()
    }
}

pub(crate) struct Trace {
    pub caches: Vec<Cache>,
    pub rows: usize,
}

impl Network {
    /// Builds a network with He-uniform weights drawn from `seed` and zero biases.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = arch.input;
        let mut layers = Vec::with_capacity(arch.layers.len());
        for spec in &arch.layers {
            let (layer, out) = Layer::build(spec, shape, &mut rng).map_err(ModelError::Architecture)?;
            layers.push(layer);
            shape = out;
        }
        match layers.last() {
            Some(Layer::Dense(d)) if d.outputs >= 2 => {}
            _ => {
                return Err(ModelError::Architecture(
                    "final layer must be dense with at least two outputs".into(),
                ))
            }
        }
        Ok(Self { arch, layers })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_len(&self) -> usize {
        self.arch.input.len()
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_len)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// All parameters in layer order, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.layers.iter().filter_map(Layer::params) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<(), ModelError> {
        if values.len() != self.param_count() {
            return Err(ModelError::ParamCount {
                expected: self.param_count(),
                got: values.len(),
            });
        }
        let mut at = 0;
        for (w, b) in self.layers.iter_mut().filter_map(Layer::params_mut) {
            let nw = w.len();
            w.copy_from_slice(&values[at..at + nw]);
            at += nw;
            let nb = b.len();
            b.copy_from_slice(&values[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// Adds `delta` to every bias of the output layer.
    pub fn shift_output_bias(&mut self, delta: f64) {
        if let Some(Layer::Dense(d)) = self.layers.last_mut() {
            d.bias.iter_mut().for_each(|b| *b += delta);
        }
    }

    fn check_input(&self, len: usize) -> Result<(), ModelError> {
        if len != self.input_len() {
            return Err(ModelError::Shape {
                expected: self.input_len(),
                got: len,
            });
        }
        Ok(())
    }

    /// Inference logits for one input (dropout disabled).
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_input(x.len())?;
        Ok(self.logits_batch(x, 1))
    }

    /// Inference logits for `rows` stacked inputs.
    pub fn logits_batch(&self, xs: &[f64], rows: usize) -> Vec<f64> {
        let mut a = xs.to_vec();
        for layer in &self.layers {
            a = layer.forward(&a, rows, None).0;
        }
        a
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, ModelError> {
        Ok(argmax(&self.logits(x)?))
    }

    pub(crate) fn forward_trace(
        &self,
        xs: &[f64],
        rows: usize,
        mut train: Option<&mut ChaCha8Rng>,
    ) -> (Vec<f64>, Trace) {
        let mut a = xs.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = layer.forward(&a, rows, train.as_deref_mut());
            caches.push(cache);
            a = out;
        }
        (a, Trace { caches, rows })
    }

    /// Logits at `x` together with the switch positions that produced them.
    pub fn forward_record(&self, x: &[f64]) -> Result<(Vec<f64>, SwitchState), ModelError> {
        self.check_input(x.len())?;
        let (y, trace) = self.forward_trace(x, 1, None);
        let layers = trace.caches.iter().map(Layer::switch).collect();
        Ok((y, SwitchState { layers }))
    }

    /// Forward pass with every ReLU and pooling switch held at `switches`.
    /// On the input the switches were recorded at, this reproduces the logits.
    pub fn forward_frozen(&self, x: &[f64], switches: &SwitchState) -> Result<Vec<f64>, ModelError> {
        self.check_input(x.len())?;
        if switches.layers.len() != self.layers.len() {
            return Err(ModelError::Architecture("switch state does not match network".into()));
        }
        let mut a = x.to_vec();
        for (layer, switch) in self.layers.iter().zip(&switches.layers) {
            a = layer.forward_frozen(&a, switch);
        }
        Ok(a)
    }

    /// Pulls `cot_rows` cotangent rows (each of length L) back to the input
    /// through the switch state recorded in a single-sample `trace`.
    pub(crate) fn pullback(&self, trace: &Trace, cotangents: &[f64], cot_rows: usize) -> Vec<f64> {
        let mut g = cotangents.to_vec();
        for (layer, cache) in self.layers.iter().zip(&trace.caches).rev() {
            g = layer
                .backward(cache, trace.rows, &g, cot_rows, None, true)
                .expect("input gradient requested");
        }
        g
    }

    /// Gradient of `Σ_i c_i y_i` with respect to the input at `x`.
    pub fn input_gradient(&self, x: &[f64], cotangent: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_input(x.len())?;
        let (_, trace) = self.forward_trace(x, 1, None);
        Ok(self.pullback(&trace, cotangent, 1))
    }

    /// Logits at `x` and the L x N Jacobian of the logits (row i = ∂y_i/∂x).
    pub fn jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        self.check_input(x.len())?;
        let (y, trace) = self.forward_trace(x, 1, None);
        let l = self.classes();
        let mut eye = vec![0.0; l * l];
        for i in 0..l {
            eye[i * l + i] = 1.0;
        }
        Ok((y, self.pullback(&trace, &eye, l)))
    }

    /// Mean inference-mode cross-entropy over `labels.len()` stacked inputs
    /// and its gradient, flattened in [`Network::params`] order.
    pub fn loss_gradient(&self, xs: &[f64], labels: &[usize]) -> Result<(f64, Vec<f64>), ModelError> {
        if labels.is_empty() || xs.len() != labels.len() * self.input_len() {
            return Err(ModelError::Shape {
                expected: labels.len() * self.input_len(),
                got: xs.len(),
            });
        }
        if let Some(&t) = labels.iter().find(|&&t| t >= self.classes()) {
            return Err(ModelError::Label { label: t, classes: self.classes() });
        }
        let (loss, grads) = self.loss_and_grad(xs, labels, None);
        let flat = grads
            .iter()
            .flat_map(|g| g.weight.iter().chain(&g.bias).copied())
            .collect();
        Ok((loss, flat))
    }

    /// Mean softmax cross-entropy over the batch and its parameter gradient.
    pub(crate) fn loss_and_grad(
        &self,
        xs: &[f64],
        labels: &[usize],
        train: Option<&mut ChaCha8Rng>,
    ) -> (f64, Vec<ParamGrad>) {
        let rows = labels.len();
        let (y, trace) = self.forward_trace(xs, rows, train);
        let l = self.classes();
        let mut dy = vec![0.0; rows * l];
        let mut loss = 0.0;
        for r in 0..rows {
            let (ce, g) = cross_entropy(&y[r * l..(r + 1) * l], labels[r]);
            loss += ce;
            for (d, v) in dy[r * l..(r + 1) * l].iter_mut().zip(g) {
                *d = v / rows as f64;
            }
        }
        let grads = self.backward_params(&trace, dy);
        (loss / rows as f64, grads)
    }

    fn backward_params(&self, trace: &Trace, dy: Vec<f64>) -> Vec<ParamGrad> {
        let mut grads: Vec<ParamGrad> = self
            .layers
            .iter()
            .map(|layer| match layer.params() {
                Some((w, b)) => ParamGrad {
                    weight: vec![0.0; w.len()],
                    bias: vec![0.0; b.len()],
                },
                None => ParamGrad::default(),
            })
            .collect();
        let mut g = dy;
        for (idx, (layer, cache)) in self.layers.iter().zip(&trace.caches).enumerate().rev() {
            let grad = layer.params().is_some().then_some(&mut grads[idx]);
            // the first layer never needs an input gradient during training
            let need_dx = idx > 0;
            match layer.backward(cache, trace.rows, &g, trace.rows, grad, need_dx) {
                Some(dx) => g = dx,
                None => break,
            }
        }
        grads
    }

    pub(crate) fn param_layers_mut(&mut self) -> impl Iterator<Item = (usize, (&mut Vec<f64>, &mut Vec<f64>))> {
        self.layers
            .iter_mut()
            .enumerate()
            .filter_map(|(i, l)| l.params_mut().map(|p| (i, p)))
    }
}

/// Softmax with max subtraction.
pub fn softmax(y: &[f64]) -> Vec<f64> {
    let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = y.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(y: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in y.iter().enumerate() {
        if *v > y[best] {
            best = i;
        }
    }
    best
}

/// Softmax cross-entropy of `logits` against class `t` and its logit gradient.
pub fn cross_entropy(logits: &[f64], t: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    let mut p = softmax(logits);
    p[t] -= 1.0;
    (lse - logits[t], p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn small_arch(layers: Vec<LayerSpec>, input: Shape) -> Architecture {
        Architecture { input, layers }
    }

    fn presets() -> Vec<Architecture> {
        use LayerSpec::*;
        vec![
            small_arch(vec![Flatten, Dense { units: 3 }], Shape::new(3, 3, 1)),
            small_arch(
                vec![Dense { units: 6 }, Relu, Dense { units: 4 }],
                Shape::flat(5),
            ),
            small_arch(
                vec![Conv { maps: 3, kernel: 3 }, Relu, Flatten, Dense { units: 3 }],
                Shape::new(5, 5, 2),
            ),
            small_arch(
                vec![
                    Conv { maps: 2, kernel: 2 },
                    Relu,
                    MaxPool,
                    Flatten,
                    Dense { units: 5 },
                    Relu,
                    Dropout { rate: 0.5 },
                    Dense { units: 3 },
                ],
                Shape::new(7, 7, 1),
            ),
        ]
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (1.0 + a.abs().max(b.abs()))
    }

    /// Nudges every bias so no ReLU sits on a kink and pool maxima are distinct.
    fn net_with_biases(arch: Architecture, seed: u64) -> Network {
        let mut net = Network::new(arch, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
        for (_, (_, b)) in net.param_layers_mut() {
            b.iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
        }
        net
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let h = 1e-5;
        for (a, arch) in presets().into_iter().enumerate() {
            let net = net_with_biases(arch, a as u64 + 7);
            let mut rng = ChaCha8Rng::seed_from_u64(a as u64);
            let x = random_vec(&mut rng, net.input_len());
            let (_, jac) = net.jacobian(&x).unwrap();
            let l = net.classes();
            for j in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let yp = net.logits(&xp).unwrap();
                let ym = net.logits(&xm).unwrap();
                for i in 0..l {
                    let fd = (yp[i] - ym[i]) / (2.0 * h);
                    let an = jac[i * x.len() + j];
                    assert!(rel_err(fd, an) < 1e-4, "arch {a} class {i} pixel {j}: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let h = 1e-5;
        for (a, arch) in presets().into_iter().enumerate() {
            let mut net = net_with_biases(arch, a as u64 + 11);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + a as u64);
            let rows = 3;
            let xs = random_vec(&mut rng, rows * net.input_len());
            let labels: Vec<usize> = (0..rows).map(|r| r % net.classes()).collect();
            let (_, grads) = net.loss_and_grad(&xs, &labels, None);
            let analytic: Vec<f64> = grads
                .iter()
                .flat_map(|g| g.weight.iter().chain(&g.bias).copied())
                .collect();
            let params = net.params();
            assert_eq!(analytic.len(), params.len());
            for p in 0..params.len() {
                let mut v = params.clone();
                v[p] += h;
                net.set_params(&v).unwrap();
                let lp = net.loss_and_grad(&xs, &labels, None).0;
                v[p] -= 2.0 * h;
                net.set_params(&v).unwrap();
                let lm = net.loss_and_grad(&xs, &labels, None).0;
                let fd = (lp - lm) / (2.0 * h);
                assert!(rel_err(fd, analytic[p]) < 1e-4, "arch {a} param {p}: {fd} vs {}", analytic[p]);
            }
            net.set_params(&params).unwrap();
        }
    }

    #[test]
    fn conv_matches_direct_convolution() {
        let arch = small_arch(
            vec![LayerSpec::Conv { maps: 2, kernel: 3 }, LayerSpec::Flatten, LayerSpec::Dense { units: 2 }],
            Shape::new(4, 5, 2),
        );
        let net = net_with_biases(arch, 3);
        let Layer::Conv(conv) = &net.layers[0] else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_vec(&mut rng, 40);
        let (y, _) = net.layers[0].forward(&x, 1, None);
        for r in 0..2 {
            for c in 0..3 {
                for m in 0..2 {
                    let mut acc = conv.bias[m];
                    for ki in 0..3 {
                        for kj in 0..3 {
                            for ch in 0..2 {
                                let xv = x[((r + ki) * 5 + c + kj) * 2 + ch];
                                acc += conv.weight[m * 18 + (ki * 3 + kj) * 2 + ch] * xv;
                            }
                        }
                    }
                    assert!((y[(r * 3 + c) * 2 + m] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn piecewise_linear_along_lines() {
        let mut checked = 0;
        for (a, arch) in presets().into_iter().enumerate() {
            let net = net_with_biases(arch, 20 + a as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(200 + a as u64);
            for _ in 0..20 {
                let x = random_vec(&mut rng, net.input_len());
                let d = random_vec(&mut rng, net.input_len());
                let step = 1e-3;
                let pts: Vec<Vec<f64>> = (0..3)
                    .map(|k| x.iter().zip(&d).map(|(xi, di)| xi + k as f64 * step * di).collect())
                    .collect();
                let sw: Vec<SwitchState> = pts.iter().map(|p| net.forward_record(p).unwrap().1).collect();
                if sw[0] != sw[1] || sw[1] != sw[2] {
                    continue;
                }
                let ys: Vec<Vec<f64>> = pts.iter().map(|p| net.logits(p).unwrap()).collect();
                for i in 0..net.classes() {
                    let second = ys[0][i] - 2.0 * ys[1][i] + ys[2][i];
                    assert!(second.abs() < 1e-8, "arch {a}: {second}");
                }
                checked += 1;
            }
        }
        assert!(checked > 40);
    }

    #[test]
    fn frozen_replay_reproduces_logits() {
        for (a, arch) in presets().into_iter().enumerate() {
            let net = net_with_biases(arch, 30 + a as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(300 + a as u64);
            let x = random_vec(&mut rng, net.input_len());
            let (y, sw) = net.forward_record(&x).unwrap();
            assert_eq!(net.forward_frozen(&x, &sw).unwrap(), y);
            // frozen map is linear: f(2x) = 2 f(x) - f(0)
            let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            let f0 = net.forward_frozen(&vec![0.0; x.len()], &sw).unwrap();
            let f2 = net.forward_frozen(&x2, &sw).unwrap();
            for i in 0..y.len() {
                assert!((f2[i] - (2.0 * y[i] - f0[i])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let mut net = Network::new(Architecture::mlp(&[16], 4, 0.0), 1).unwrap();
        let zeros = vec![0.0; net.param_count()];
        net.set_params(&zeros).unwrap();
        let x = vec![0.7; net.input_len()];
        assert_eq!(net.logits(&x).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn output_bias_shift_leaves_softmax_unchanged() {
        let mut net = net_with_biases(presets().remove(3), 5);
        let x = random_vec(&mut ChaCha8Rng::seed_from_u64(1), net.input_len());
        let y0 = net.logits(&x).unwrap();
        net.shift_output_bias(2.5);
        let y1 = net.logits(&x).unwrap();
        for (a, b) in y0.iter().zip(&y1) {
            assert!((b - a - 2.5).abs() < 1e-12);
        }
        for (p, q) in softmax(&y0).iter().zip(softmax(&y1)) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn inference_ignores_dropout_rate() {
        let a = Network::new(Architecture::mlp(&[12, 12], 3, 0.0), 8).unwrap();
        let mut b = Network::new(Architecture::mlp(&[12, 12], 3, 0.9), 8).unwrap();
        b.set_params(&a.params()).unwrap();
        let x = random_vec(&mut ChaCha8Rng::seed_from_u64(2), a.input_len());
        assert_eq!(a.logits(&x).unwrap(), b.logits(&x).unwrap());
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1000.0, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] < 1e-300);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let y = random_vec(&mut rng, 7).iter().map(|v| 30.0 * v).collect::<Vec<_>>();
            let p = softmax(&y);
            assert!(p.iter().all(|&v| v > 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(argmax(&p), argmax(&y));
        }
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn cross_entropy_is_stable() {
        let (loss, g) = cross_entropy(&[1000.0, 0.0], 1);
        assert!((loss - 1000.0).abs() < 1e-9);
        assert!((g[0] - 1.0).abs() < 1e-12 && (g[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        let net = Network::new(Architecture::mlp(&[4], 2, 0.0), 0).unwrap();
        assert!(matches!(net.logits(&[0.0; 3]), Err(ModelError::Shape { .. })));
        let bad = small_arch(vec![LayerSpec::Dense { units: 3 }, LayerSpec::Relu], Shape::flat(2));
        assert!(Network::new(bad, 0).is_err());
        let too_wide = small_arch(vec![LayerSpec::Conv { maps: 1, kernel: 5 }], Shape::new(3, 3, 1));
        assert!(Network::new(too_wide, 0).is_err());
    }
}
