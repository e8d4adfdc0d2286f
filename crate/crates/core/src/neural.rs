//! Dense ReLU networks with hand-written backpropagation and Adam.
//!
//! Everything is batch-major: inputs are `(batch, features)` matrices.
//! Weights are stored `(fan_in, fan_out)` so a layer is `x.dot(w) + b`.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("expected {expected} input features, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("cache was produced before the last parameter update")]
    StaleCache,
    #[error("gradient shapes do not match the network")]
    GradientShape,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Linear,
    Tanh,
    /// Output is `[mean | log_std]`, the log-std half clamped to
    /// `[LOG_STD_MIN, LOG_STD_MAX]`.
    Gaussian,
}

impl Head {
    fn name(self) -> &'static str {
        match self {
            Head::Linear => "linear",
            Head::Tanh => "tanh",
            Head::Gaussian => "gaussian",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    head: Head,
    version: u64,
}

/// Activations kept by [`Mlp::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    version: u64,
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Final layer output before the head.
    pre_head: Array2<f64>,
    output: Array2<f64>,
}

impl Cache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    /// ReLU on/off pattern plus clamp pattern, used to spot kinks.
    fn pattern(&self, head: Head) -> Vec<bool> {
        let mut bits = Vec::new();
        for x in self.inputs.iter().skip(1) {
            bits.extend(x.iter().map(|&v| v > 0.0));
        }
        if head == Head::Gaussian {
            let k = self.pre_head.ncols() / 2;
            for row in self.pre_head.rows() {
                bits.extend(
                    row.iter()
                        .skip(k)
                        .map(|&v| (LOG_STD_MIN..=LOG_STD_MAX).contains(&v)),
                );
            }
        }
        bits
    }
}

/// Parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<Dense>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Grads {
            layers: net
                .layers
                .iter()
                .map(|l| Dense {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: usize) -> f64 {
        *locate(&self.layers, index)
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.w *= k;
            l.b *= k;
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    fn shape_matches(&self, net: &Mlp) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.w.dim() == l.w.dim() && g.b.len() == l.b.len())
    }
}

fn locate(layers: &[Dense], mut index: usize) -> &f64 {
    for l in layers {
        if index < l.w.len() {
            return l.w.iter().nth(index).expect("in range");
        }
        index -= l.w.len();
        if index < l.b.len() {
            return &l.b[index];
        }
        index -= l.b.len();
    }
    panic!("parameter index out of range")
}

fn locate_mut(layers: &mut [Dense], mut index: usize) -> &mut f64 {
    for l in layers {
        if index < l.w.len() {
            let cols = l.w.ncols();
            return &mut l.w[[index / cols, index % cols]];
        }
        index -= l.w.len();
        if index < l.b.len() {
            return &mut l.b[index];
        }
        index -= l.b.len();
    }
    panic!("parameter index out of range")
}

impl Mlp {
    /// `output` is the action dimension for a Gaussian head; the last layer
    /// then has twice as many units.
    pub fn new(
        input: usize,
        hidden: &[usize],
        output: usize,
        head: Head,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if input == 0 || output == 0 {
            return Err(NeuralError::Architecture(
                "input and output sizes must be positive".into(),
            ));
        }
        if hidden.contains(&0) {
            return Err(NeuralError::Architecture(
                "hidden layers must have at least one unit".into(),
            ));
        }
        let out_units = if head == Head::Gaussian {
            2 * output
        } else {
            output
        };
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(out_units);
        let layers = sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                Dense {
                    w: Array2::from_shape_simple_fn((fan_in, fan_out), || {
                        rng.random_range(-bound..bound)
                    }),
                    b: Array1::from_shape_simple_fn(fan_out, || rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Ok(Mlp {
            layers,
            head,
            version: 0,
        })
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].w.nrows()
    }

    /// Width of the network output (mean and log-std together for Gaussian).
    pub fn output_size(&self) -> usize {
        self.layers.last().expect("non-empty").w.ncols()
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn param(&self, index: usize) -> f64 {
        *locate(&self.layers, index)
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        *locate_mut(&mut self.layers, index) = value;
        self.version += 1;
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update(&mut self, source: &Mlp, tau: f64) {
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            Zip::from(&mut t.w)
                .and(&s.w)
                .for_each(|t, &s| *t = tau * s + (1.0 - tau) * *t);
            Zip::from(&mut t.b)
                .and(&s.b)
                .for_each(|t, &s| *t = tau * s + (1.0 - tau) * *t);
        }
        self.version += 1;
    }

    pub fn copy_from(&mut self, source: &Mlp) {
        self.layers.clone_from(&source.layers);
        self.version += 1;
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.input_size() {
            return Err(NeuralError::Dimension {
                expected: self.input_size(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn apply_head(&self, z: &Array2<f64>) -> Array2<f64> {
        match self.head {
            Head::Linear => z.clone(),
            Head::Tanh => z.mapv(f64::tanh),
            Head::Gaussian => {
                let k = z.ncols() / 2;
                let mut out = z.clone();
                out.slice_mut(ndarray::s![.., k..])
                    .mapv_inplace(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
                out
            }
        }
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = h.dot(&l.w) + &l.b;
            if i < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(self.apply_head(&h))
    }

    /// Single-sample convenience wrapper around [`Mlp::predict`].
    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        Ok(self.predict(&m)?.into_raw_vec_and_offset().0)
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Cache> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let z = h.dot(&l.w) + &l.b;
            inputs.push(h);
            h = if i < last { z.mapv(|v| v.max(0.0)) } else { z };
        }
        let output = self.apply_head(&h);
        Ok(Cache {
            version: self.version,
            inputs,
            pre_head: h,
            output,
        })
    }

    /// Backpropagates `grad_out` (d loss / d output, same shape as the
    /// output). Returns parameter gradients and the gradient with respect to
    /// the input batch.
    pub fn backward(&self, cache: &Cache, grad_out: &Array2<f64>) -> Result<(Grads, Array2<f64>)> {
        if cache.version != self.version {
            return Err(NeuralError::StaleCache);
        }
        if grad_out.dim() != cache.output.dim() {
            return Err(NeuralError::Dimension {
                expected: cache.output.ncols(),
                got: grad_out.ncols(),
            });
        }
        let mut dz = match self.head {
            Head::Linear => grad_out.clone(),
            Head::Tanh => {
                let mut d = grad_out.clone();
                Zip::from(&mut d)
                    .and(&cache.output)
                    .for_each(|d, &y| *d *= 1.0 - y * y);
                d
            }
            Head::Gaussian => {
                let k = cache.pre_head.ncols() / 2;
                let mut d = grad_out.clone();
                Zip::from(d.slice_mut(ndarray::s![.., k..]))
                    .and(cache.pre_head.slice(ndarray::s![.., k..]))
                    .for_each(|d, &z| {
                        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&z) {
                            *d = 0.0;
                        }
                    });
                d
            }
        };
        let mut grads = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[i];
            let dw = x.t().dot(&dz);
            let db = dz.sum_axis(Axis(0));
            grads.push(Dense { w: dw, b: db });
            let mut dx = dz.dot(&l.w.t());
            if i > 0 {
                // x is the ReLU output of the previous layer
                Zip::from(&mut dx).and(x).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            dz = dx;
        }
        grads.reverse();
        Ok((Grads { layers: grads }, dz))
    }

    /// Writes a textual snapshot: a header, then each layer's shape followed
    /// by its weights (row-major) and biases.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mlp {} {}", self.head.name(), self.layers.len());
        for l in &self.layers {
            let _ = writeln!(s, "{} {}", l.w.nrows(), l.w.ncols());
            let w: Vec<String> = l.w.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(s, "{}", w.join(" "));
            let b: Vec<String> = l.b.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(s, "{}", b.join(" "));
        }
        s
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        let bad = |m: &str| NeuralError::Snapshot(m.to_string());
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("empty"))?
            .split_whitespace()
            .collect();
        let (head, count) = match header.as_slice() {
            ["mlp", head, count] => {
                let head = match *head {
                    "linear" => Head::Linear,
                    "tanh" => Head::Tanh,
                    "gaussian" => Head::Gaussian,
                    other => return Err(bad(&format!("unknown head `{other}`"))),
                };
                (
                    head,
                    count.parse::<usize>().map_err(|_| bad("layer count"))?,
                )
            }
            _ => return Err(bad("header")),
        };
        let nums = |line: Option<&str>| -> Result<Vec<f64>> {
            line.ok_or_else(|| bad("truncated"))?
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(&format!("number `{t}`"))))
                .collect()
        };
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let shape = nums(lines.next())?;
            let [r, c] = shape[..] else {
                return Err(bad("shape"));
            };
            let (r, c) = (r as usize, c as usize);
            let w = Array2::from_shape_vec((r, c), nums(lines.next())?)
                .map_err(|_| bad("weight count"))?;
            let b = Array1::from(nums(lines.next())?);
            if b.len() != c {
                return Err(bad("bias count"));
            }
            layers.push(Dense { w, b });
        }
        if layers.is_empty() || layers.windows(2).any(|p| p[0].w.ncols() != p[1].w.nrows()) {
            return Err(bad("layer shapes do not chain"));
        }
        Ok(Mlp {
            layers,
            head,
            version: 0,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update. On a non-finite gradient nothing is
    /// modified.
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) -> Result<()> {
        if !grads.shape_matches(net) || !self.m.shape_matches(net) {
            return Err(NeuralError::GradientShape);
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(NeuralError::NonFiniteGradient);
        }
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let lr = self.lr;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((l, m), v), g) in net
            .layers
            .iter_mut()
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
            .zip(&grads.layers)
        {
            Zip::from(&mut l.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .and(&g.w)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut l.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .and(&g.b)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        net.version += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error < self.tolerance
    }
}

/// `|a - b| / max(|a|, |b|)`, falling back to the absolute error when both
/// are tiny.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Scalar loss over the network output: returns the value and its gradient
/// with respect to the output.
pub trait Loss {
    fn eval(&self, output: &Array2<f64>) -> (f64, Array2<f64>);
}

impl<F: Fn(&Array2<f64>) -> (f64, Array2<f64>)> Loss for F {
    fn eval(&self, output: &Array2<f64>) -> (f64, Array2<f64>) {
        self(output)
    }
}

/// Compares backpropagated gradients with central differences on up to
/// `samples` randomly chosen parameters. Samples whose perturbation flips a
/// ReLU or clamp are skipped since the loss is not differentiable there.
/// `analytic` overrides the backward gradients, for fault injection.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    net: &Mlp,
    input: &Array2<f64>,
    loss: &dyn Loss,
    samples: usize,
    h: f64,
    tolerance: f64,
    rng: &mut ChaCha8Rng,
    analytic: Option<&Grads>,
) -> Result<GradCheckReport> {
    let cache = net.forward(input)?;
    let pattern = cache.pattern(net.head);
    let (_, dout) = loss.eval(cache.output());
    let (computed, _) = net.backward(&cache, &dout)?;
    let grads = analytic.unwrap_or(&computed);

    let n = net.param_count();
    let picks: Vec<usize> = if samples >= n {
        (0..n).collect()
    } else {
        rand::seq::index::sample(rng, n, samples).into_vec()
    };
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
        tolerance,
    };
    for i in picks {
        let orig = net.param(i);
        let mut side = |v: f64| -> Result<(f64, bool)> {
            probe.set_param(i, v);
            let c = probe.forward(input)?;
            Ok((loss.eval(c.output()).0, c.pattern(net.head) == pattern))
        };
        let (plus, same_p) = side(orig + h)?;
        let (minus, same_m) = side(orig - h)?;
        probe.set_param(i, orig);
        if !(same_p && same_m) {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        report.max_rel_error = report
            .max_rel_error
            .max(relative_error(grads.get(i), numeric));
        report.checked += 1;
    }
    Ok(report)
}

/// Random smooth test loss `sum(c * y + d * y^2 / 2)`.
pub fn random_quadratic_loss(
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
) -> impl Fn(&Array2<f64>) -> (f64, Array2<f64>) {
    let c = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0));
    let d = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(0.0..1.0));
    move |y: &Array2<f64>| {
        let value = (&c * y + &d * y * y * 0.5).sum();
        let grad = &c + &d * y;
        (value, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_input(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_net_outputs_zero() {
        let mut net = Mlp::new(3, &[4, 4], 2, Head::Linear, &mut rng(1)).unwrap();
        for i in 0..net.param_count() {
            net.set_param(i, 0.0);
        }
        let y = net.predict(&array![[1.0, -2.0, 3.0]]).unwrap();
        assert_eq!(y, array![[0.0, 0.0]]);
    }

    #[test]
    fn tanh_head_in_range() {
        let net = Mlp::new(4, &[64, 64], 3, Head::Tanh, &mut rng(2)).unwrap();
        let x = random_input(32, 4, &mut rng(3)) * 100.0;
        assert!(net.predict(&x).unwrap().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn golden_output_seed_42() {
        let net = Mlp::new(4, &[64, 64], 3, Head::Linear, &mut rng(42)).unwrap();
        let y = net.predict_one(&[0.5, -0.25, 1.0, 0.0]).unwrap();
        let golden = GOLDEN_42;
        for (a, b) in y.iter().zip(golden) {
            assert!((a - b).abs() < 1e-12, "{y:?}");
        }
    }

    // recorded from this implementation; regenerate only on intentional change
    const GOLDEN_42: [f64; 3] = [
        0.08440695846821362,
        0.048492927898398555,
        0.11726998179572219,
    ];

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::new(4, &[8], 1, Head::Linear, &mut rng(0)).unwrap();
        assert_eq!(
            net.predict(&array![[1.0, 2.0]]).unwrap_err(),
            NeuralError::Dimension {
                expected: 4,
                got: 2
            }
        );
    }

    #[test]
    fn empty_hidden_layer_rejected() {
        assert!(matches!(
            Mlp::new(4, &[0], 1, Head::Linear, &mut rng(0)),
            Err(NeuralError::Architecture(_))
        ));
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let net = Mlp::new(5, &[16, 16], 2, Head::Tanh, &mut rng(4)).unwrap();
        let x = random_input(6, 5, &mut rng(5));
        let cache = net.forward(&x).unwrap();
        let (g, dx) = net.backward(&cache, &Array2::zeros((6, 2))).unwrap();
        assert!(g.iter().all(|v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_gradient_is_input() {
        let net = Mlp::new(3, &[], 1, Head::Linear, &mut rng(6)).unwrap();
        let x = array![[0.3, -1.5, 2.0]];
        let cache = net.forward(&x).unwrap();
        let (g, _) = net.backward(&cache, &array![[1.0]]).unwrap();
        assert_eq!(g.layers[0].w.column(0).to_vec(), vec![0.3, -1.5, 2.0]);
        assert_eq!(g.layers[0].b[0], 1.0);
    }

    #[test]
    fn stale_cache_rejected() {
        let mut net = Mlp::new(2, &[4], 1, Head::Linear, &mut rng(7)).unwrap();
        let cache = net.forward(&array![[1.0, 1.0]]).unwrap();
        let g = Grads::zeros_like(&net);
        let mut opt = Adam::new(&net, 1e-3);
        opt.step(&mut net, &g).unwrap();
        assert_eq!(
            net.backward(&cache, &array![[1.0]]).unwrap_err(),
            NeuralError::StaleCache
        );
    }

    #[test]
    fn gradient_check_heads() {
        let mut r = rng(8);
        for head in [Head::Linear, Head::Tanh, Head::Gaussian] {
            let net = Mlp::new(6, &[64, 64], 3, head, &mut r).unwrap();
            let x = random_input(4, 6, &mut r);
            let loss = random_quadratic_loss(4, net.output_size(), &mut r);
            let rep = gradient_check(&net, &x, &loss, 100, 1e-5, 1e-4, &mut r, None).unwrap();
            assert!(rep.passed(), "{head:?}: {rep:?}");
            assert!(rep.checked >= 90);
        }
    }

    #[test]
    fn input_gradient_matches_differences() {
        let mut r = rng(9);
        let net = Mlp::new(5, &[32, 32], 1, Head::Linear, &mut r).unwrap();
        let x = random_input(3, 5, &mut r);
        let cache = net.forward(&x).unwrap();
        let (_, dx) = net.backward(&cache, &Array2::ones((3, 1))).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..5 {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let num =
                    (net.predict(&xp).unwrap().sum() - net.predict(&xm).unwrap().sum()) / (2.0 * h);
                assert!(relative_error(dx[[i, j]], num) < 1e-5);
            }
        }
    }

    #[test]
    fn gradient_check_catches_doubled_gradient() {
        let mut r = rng(10);
        let net = Mlp::new(4, &[64, 64], 2, Head::Linear, &mut r).unwrap();
        let x = random_input(4, 4, &mut r);
        let loss = random_quadratic_loss(4, 2, &mut r);
        let cache = net.forward(&x).unwrap();
        let (_, dout) = loss.eval(cache.output());
        let (mut g, _) = net.backward(&cache, &dout).unwrap();
        g.scale(2.0);
        let rep = gradient_check(&net, &x, &loss, 100, 1e-5, 1e-4, &mut r, Some(&g)).unwrap();
        assert!(!rep.passed());
    }

    #[test]
    fn gaussian_log_std_clamped_and_gradient_masked() {
        let mut net = Mlp::new(2, &[], 1, Head::Gaussian, &mut rng(11)).unwrap();
        // weights: (2, 2); push log-std pre-activation far above the clamp
        net.set_param(1, 50.0);
        let x = array![[1.0, 0.0]];
        let cache = net.forward(&x).unwrap();
        assert_eq!(cache.output()[[0, 1]], LOG_STD_MAX);
        let (g, _) = net.backward(&cache, &array![[0.0, 1.0]]).unwrap();
        assert!(g.iter().all(|v| v == 0.0));
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut net = Mlp::new(3, &[8], 2, Head::Linear, &mut rng(12)).unwrap();
        let before = net.params();
        let mut opt = Adam::new(&net, 1e-3);
        let g = Grads::zeros_like(&net);
        opt.step(&mut net, &g).unwrap();
        assert_eq!(net.params(), before);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        let mut net = Mlp::new(2, &[3], 1, Head::Linear, &mut rng(13)).unwrap();
        let before = net.params();
        let mut g = Grads::zeros_like(&net);
        for (k, v) in g.layers[0].w.iter_mut().enumerate() {
            *v = if k % 2 == 0 { 0.37 } else { -5.0 };
        }
        let mut opt = Adam::new(&net, 1e-4);
        opt.step(&mut net, &g).unwrap();
        for (i, (a, b)) in net.params().iter().zip(&before).enumerate() {
            let gi = g.get(i);
            let expected = if gi == 0.0 { 0.0 } else { -1e-4 * gi.signum() };
            assert!((a - b - expected).abs() < 1e-10, "param {i}");
        }
    }

    #[test]
    fn adam_delta_scales_with_lr() {
        let mut r = rng(14);
        let base = Mlp::new(3, &[8], 2, Head::Linear, &mut r).unwrap();
        let x = random_input(5, 3, &mut r);
        let cache = base.forward(&x).unwrap();
        let (g, _) = base.backward(&cache, &Array2::ones((5, 2))).unwrap();
        let delta = |lr: f64| {
            let mut net = base.clone();
            let mut opt = Adam::new(&net, lr);
            opt.step(&mut net, &g).unwrap();
            net.params()
                .iter()
                .zip(base.params())
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>()
        };
        let (d1, d3) = (delta(1e-4), delta(3e-4));
        for (a, b) in d1.iter().zip(&d3) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_rejects_nan() {
        let mut net = Mlp::new(2, &[4], 1, Head::Linear, &mut rng(15)).unwrap();
        let before = net.clone();
        let mut g = Grads::zeros_like(&net);
        g.layers[1].b[0] = f64::NAN;
        let mut opt = Adam::new(&net, 1e-3);
        assert_eq!(
            opt.step(&mut net, &g).unwrap_err(),
            NeuralError::NonFiniteGradient
        );
        assert_eq!(net.params(), before.params());
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn soft_update_interpolates() {
        let mut r = rng(16);
        let a = Mlp::new(2, &[4], 1, Head::Linear, &mut r).unwrap();
        let mut b = Mlp::new(2, &[4], 1, Head::Linear, &mut r).unwrap();
        let b0 = b.params();
        b.soft_update(&a, 0.005);
        for ((x, y), z) in b.params().iter().zip(a.params()).zip(b0) {
            assert!((x - (0.005 * y + 0.995 * z)).abs() < 1e-15);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let net = Mlp::new(5, &[7, 3], 2, Head::Gaussian, &mut rng(17)).unwrap();
        let back = Mlp::from_snapshot(&net.snapshot()).unwrap();
        assert_eq!(back.params(), net.params());
        assert_eq!(back.head(), Head::Gaussian);
        assert!(Mlp::from_snapshot("mlp tanh 1\n2 2\n1 2 3\n0 0\n").is_err());
    }

    #[test]
    fn same_seed_same_net() {
        let a = Mlp::new(10, &[64, 64], 3, Head::Tanh, &mut rng(99)).unwrap();
        let b = Mlp::new(10, &[64, 64], 3, Head::Tanh, &mut rng(99)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn gradients_match_finite_differences(seed in any::<u64>(), rows in 1usize..6, inp in 1usize..10) {
            let mut r = rng(seed);
            let net = Mlp::new(inp, &[64, 64], 2, Head::Tanh, &mut r).unwrap();
            let x = random_input(rows, inp, &mut r);
            let loss = random_quadratic_loss(rows, 2, &mut r);
            let rep = gradient_check(&net, &x, &loss, 100, 1e-5, 1e-4, &mut r, None).unwrap();
            prop_assert!(rep.max_rel_error < 1e-4, "{:?}", rep);
        }

        #[test]
        fn adam_keeps_params_finite(seed in any::<u64>(), scale in 1e-6f64..1e6) {
            let mut r = rng(seed);
            let mut net = Mlp::new(3, &[8], 2, Head::Gaussian, &mut r).unwrap();
            let mut opt = Adam::new(&net, 3e-4);
            for _ in 0..20 {
                let x = random_input(4, 3, &mut r) * scale;
                let cache = net.forward(&x).unwrap();
                let dout = random_input(4, 4, &mut r) * scale;
                let (g, _) = net.backward(&cache, &dout).unwrap();
                opt.step(&mut net, &g).unwrap();
                prop_assert!(net.all_finite());
                let y = net.predict(&x).unwrap();
                prop_assert!(y.column(2).iter().chain(y.column(3).iter())
                    .all(|v| (LOG_STD_MIN..=LOG_STD_MAX).contains(v)));
            }
        }
    }
}
