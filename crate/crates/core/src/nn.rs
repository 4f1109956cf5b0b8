//! A small neural toolkit: an optional Elman front end, a dense stack, and a
//! policy, value or linear head, with hand-written reverse-mode gradients.
//!
//! Parameters live in one flat `f64` vector laid out tensor by tensor
//! (weights row-major `[out][in]`, then bias) so a whole network can be
//! shipped between threads or written to disk as a single slice.
//!
//! Checkpoint layout (all integers little-endian `u32`):
//!
//! ```text
//! magic  b"TWNW"
//! format 1
//! meta_len, meta bytes (UTF-8, free-form description)
//! n_tensors, then (rows, cols) per tensor
//! values as little-endian f32, tensor by tensor, row-major
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Mutex;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu6,
    Sigmoid,
    Tanh,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu6 => relu6(x),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative given the pre-activation `x` and the output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu6 => {
                if x > 0.0 && x < 6.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu6 => "relu6",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }
}

pub fn relu6(x: f64) -> f64 {
    x.clamp(0.0, 6.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Softmax over `n` logits.
    Policy(usize),
    /// One linear output.
    Value,
    /// `n` linear outputs (Q-values, regression).
    Linear(usize),
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::Policy(n) | Head::Linear(n) => n,
            Head::Value => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
    /// Elman cell width. When set, the input is read as a scalar sequence of
    /// length `input_dim` and only the final hidden state feeds the dense stack.
    pub recurrent: Option<usize>,
}

impl NetworkSpec {
    pub fn describe(&self) -> String {
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        let head = match self.head {
            Head::Policy(n) => format!("policy{n}"),
            Head::Value => "value".to_string(),
            Head::Linear(n) => format!("linear{n}"),
        };
        format!(
            "input={} rnn={} hidden=[{}] act={} head={}",
            self.input_dim,
            self.recurrent.unwrap_or(0),
            hidden.join(","),
            self.activation.name(),
            head
        )
    }
}

/// Rows x cols of one stored tensor; biases are `n x 1`.
pub type Shape = (usize, usize);

#[derive(Debug, Clone)]
struct Dense {
    w: usize,
    b: usize,
    inputs: usize,
    outputs: usize,
}

#[derive(Debug, Clone)]
struct Recurrent {
    wx: usize,
    wh: usize,
    b: usize,
    width: usize,
}

#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<Shape>,
    recurrent: Option<Recurrent>,
    dense: Vec<Dense>,
    len: usize,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Probabilities for a policy head, raw values otherwise.
    pub output: Vec<f64>,
    /// Head pre-activations.
    pub logits: Vec<f64>,
    input: Vec<f64>,
    hidden_states: Vec<Vec<f64>>,
    layer_inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        if spec.input_dim == 0 || spec.hidden.iter().any(|&h| h == 0) || spec.head.outputs() == 0 {
            return Err(Error::validation(format!("network widths must be > 0: {}", spec.describe())));
        }
        if spec.recurrent == Some(0) {
            return Err(Error::validation("recurrent width must be > 0"));
        }
        let mut shapes = Vec::new();
        let mut offset = 0;
        let mut tensor = |rows: usize, cols: usize, shapes: &mut Vec<Shape>| {
            let at = offset;
            offset += rows * cols;
            shapes.push((rows, cols));
            at
        };
        let recurrent = spec.recurrent.map(|h| Recurrent {
            wx: tensor(h, 1, &mut shapes),
            wh: tensor(h, h, &mut shapes),
            b: tensor(h, 1, &mut shapes),
            width: h,
        });
        let mut width = spec.recurrent.unwrap_or(spec.input_dim);
        let mut dense = Vec::new();
        for &h in spec.hidden.iter().chain(std::iter::once(&spec.head.outputs())) {
            let w = tensor(h, width, &mut shapes);
            let b = tensor(h, 1, &mut shapes);
            dense.push(Dense { w, b, inputs: width, outputs: h });
            width = h;
        }
        Ok(Network { spec, shapes, recurrent, dense, len: offset })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn param_count(&self) -> usize {
        self.len
    }

    /// Uniform fan-in/fan-out initialisation, zero biases. The head starts
    /// ten times smaller so a fresh policy is close to uniform.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = vec![0.0; self.len];
        let mut fill = |at: usize, rows: usize, cols: usize, scale: f64, p: &mut Vec<f64>| {
            for v in &mut p[at..at + rows * cols] {
                *v = scale * (2.0 * rng.random::<f64>() - 1.0);
            }
        };
        if let Some(r) = &self.recurrent {
            fill(r.wx, r.width, 1, 1.0, &mut p);
            fill(r.wh, r.width, r.width, (1.0 / r.width as f64).sqrt(), &mut p);
        }
        let last = self.dense.len() - 1;
        for (i, d) in self.dense.iter().enumerate() {
            let mut scale = (6.0 / (d.inputs + d.outputs) as f64).sqrt();
            if i == last {
                scale *= 0.1;
            }
            fill(d.w, d.outputs, d.inputs, scale, &mut p);
        }
        p
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.len {
            return Err(Error::usage(format!("expected {} parameters, got {}", self.len, params.len())));
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<Forward> {
        self.check_params(params)?;
        if x.len() != self.spec.input_dim {
            return Err(Error::usage(format!("input has {} values, network expects {}", x.len(), self.spec.input_dim)));
        }
        let mut hidden_states = Vec::new();
        let mut act: Vec<f64> = match &self.recurrent {
            Some(r) => {
                let mut h = vec![0.0; r.width];
                hidden_states.push(h.clone());
                for &xt in x {
                    let mut next = vec![0.0; r.width];
                    for i in 0..r.width {
                        let row = &params[r.wh + i * r.width..r.wh + (i + 1) * r.width];
                        let a = params[r.b + i] + params[r.wx + i] * xt + dot(row, &h);
                        next[i] = a.tanh();
                    }
                    h = next;
                    hidden_states.push(h.clone());
                }
                h
            }
            None => x.to_vec(),
        };
        let mut layer_inputs = Vec::with_capacity(self.dense.len());
        let mut pre = Vec::with_capacity(self.dense.len());
        let last = self.dense.len() - 1;
        for (li, d) in self.dense.iter().enumerate() {
            let mut z = params[d.b..d.b + d.outputs].to_vec();
            for (i, zi) in z.iter_mut().enumerate() {
                *zi += dot(&params[d.w + i * d.inputs..d.w + (i + 1) * d.inputs], &act);
            }
            let out = if li == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.spec.activation.apply(v)).collect()
            };
            layer_inputs.push(std::mem::replace(&mut act, out));
            pre.push(z);
        }
        let logits = act;
        let output = match self.spec.head {
            Head::Policy(_) => softmax(&logits),
            _ => logits.clone(),
        };
        Ok(Forward { output, logits, input: x.to_vec(), hidden_states, layer_inputs, pre })
    }

    /// Accumulates into `grad` the parameter gradient of a loss whose
    /// derivative with respect to the head pre-activations is `grad_logits`.
    /// For value and linear heads that is the output gradient itself; for a
    /// policy head use [`policy_logit_grad`].
    pub fn backward(&self, params: &[f64], fwd: &Forward, grad_logits: &[f64], grad: &mut [f64]) -> Result<()> {
        self.check_params(params)?;
        if grad.len() != self.len {
            return Err(Error::usage("gradient buffer has the wrong length"));
        }
        if grad_logits.len() != self.spec.head.outputs() {
            return Err(Error::usage("output gradient has the wrong length"));
        }
        let mut g = grad_logits.to_vec();
        let last = self.dense.len() - 1;
        for li in (0..self.dense.len()).rev() {
            let d = &self.dense[li];
            if li != last {
                let post = &self.layer_inputs_of(fwd, li + 1);
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi *= self.spec.activation.derivative(fwd.pre[li][i], post[i]);
                }
            }
            let x = &fwd.layer_inputs[li];
            let mut gx = vec![0.0; d.inputs];
            for (i, &gi) in g.iter().enumerate() {
                if gi == 0.0 {
                    continue;
                }
                grad[d.b + i] += gi;
                let row = d.w + i * d.inputs;
                for j in 0..d.inputs {
                    grad[row + j] += gi * x[j];
                    gx[j] += gi * params[row + j];
                }
            }
            g = gx;
        }
        if let Some(r) = &self.recurrent {
            let steps = fwd.input.len();
            let mut gh = g;
            for t in (1..=steps).rev() {
                let h = &fwd.hidden_states[t];
                let hp = &fwd.hidden_states[t - 1];
                let ga: Vec<f64> = gh.iter().zip(h).map(|(g, h)| g * (1.0 - h * h)).collect();
                let xt = fwd.input[t - 1];
                let mut next = vec![0.0; r.width];
                for (i, &gai) in ga.iter().enumerate() {
                    if gai == 0.0 {
                        continue;
                    }
                    grad[r.wx + i] += gai * xt;
                    grad[r.b + i] += gai;
                    let row = r.wh + i * r.width;
                    for j in 0..r.width {
                        grad[row + j] += gai * hp[j];
                        next[j] += gai * params[row + j];
                    }
                }
                gh = next;
            }
        }
        Ok(())
    }

    fn layer_inputs_of<'a>(&self, fwd: &'a Forward, li: usize) -> &'a [f64] {
        &fwd.layer_inputs[li]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable softmax. Logits more than 700 below the maximum are
/// clamped there so no probability is exactly zero.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).max(-700.0).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `-sum p ln p`, with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Gradient of the entropy with respect to the probabilities, `-(ln p + 1)`,
/// projected onto the simplex tangent (mean removed).
pub fn entropy_grad_probs(probs: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = probs.iter().map(|&p| -(p.max(f64::MIN_POSITIVE).ln() + 1.0)).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    raw.into_iter().map(|g| g - mean).collect()
}

/// Logit gradient of the actor loss `-A ln pi(a) - phi H(pi)`:
/// `-A (1[k = a] - pi_k) + phi pi_k (ln pi_k + H)`.
pub fn policy_logit_grad(probs: &[f64], action: usize, advantage: f64, entropy_weight: f64) -> Vec<f64> {
    let h = entropy(probs);
    probs
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let onehot = if k == action { 1.0 } else { 0.0 };
            -advantage * (onehot - p) + entropy_weight * p * (p.max(f64::MIN_POSITIVE).ln() + h)
        })
        .collect()
}

/// Actor loss matching [`policy_logit_grad`].
pub fn policy_loss(probs: &[f64], action: usize, advantage: f64, entropy_weight: f64) -> f64 {
    -advantage * probs[action].ln() - entropy_weight * entropy(probs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsProp {
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        RmsProp { decay: 0.99, eps: 1e-8 }
    }
}

/// `s <- rho s + (1 - rho) g^2; w <- w - lr g / (sqrt(s) + eps)`.
pub fn optimizer_step(params: &mut [f64], accum: &mut [f64], grad: &[f64], lr: f64, opt: RmsProp) -> Result<()> {
    if params.len() != grad.len() || accum.len() != grad.len() {
        return Err(Error::usage(format!("gradient length {} does not match {} parameters", grad.len(), params.len())));
    }
    for ((w, s), &g) in params.iter_mut().zip(accum.iter_mut()).zip(grad) {
        *s = opt.decay * *s + (1.0 - opt.decay) * g * g;
        *w -= lr * g / (s.sqrt() + opt.eps);
    }
    Ok(())
}

#[derive(Debug)]
struct StoreInner {
    params: Vec<f64>,
    accum: Vec<f64>,
    version: u64,
}

/// Shared weights. Readers copy a snapshot; gradient application is
/// serialized behind a mutex and bumps the version by one.
#[derive(Debug)]
pub struct ParameterStore {
    inner: Mutex<StoreInner>,
    shapes: Vec<Shape>,
    opt: RmsProp,
}

impl ParameterStore {
    pub fn new(params: Vec<f64>, shapes: Vec<Shape>, opt: RmsProp) -> Result<Self> {
        let total: usize = shapes.iter().map(|(r, c)| r * c).sum();
        if total != params.len() {
            return Err(Error::usage(format!("shape table covers {total} values, store has {}", params.len())));
        }
        let accum = vec![0.0; params.len()];
        Ok(ParameterStore { inner: Mutex::new(StoreInner { params, accum, version: 0 }), shapes, opt })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, StoreInner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn len(&self) -> usize {
        self.lock().params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn version(&self) -> u64 {
        self.lock().version
    }

    pub fn snapshot(&self) -> (Vec<f64>, u64) {
        let g = self.lock();
        (g.params.clone(), g.version)
    }

    pub fn snapshot_into(&self, out: &mut Vec<f64>) -> u64 {
        let g = self.lock();
        out.clear();
        out.extend_from_slice(&g.params);
        g.version
    }

    /// Applies one RMSProp step and returns the new version.
    pub fn apply(&self, grad: &[f64], lr: f64) -> Result<u64> {
        let mut g = self.lock();
        let StoreInner { params, accum, version } = &mut *g;
        optimizer_step(params, accum, grad, lr, self.opt)?;
        *version += 1;
        Ok(*version)
    }

    pub fn set(&self, params: &[f64]) -> Result<()> {
        let mut g = self.lock();
        if params.len() != g.params.len() {
            return Err(Error::usage("parameter length mismatch"));
        }
        g.params.copy_from_slice(params);
        g.version += 1;
        Ok(())
    }
}

const MAGIC: &[u8; 4] = b"TWNW";
const FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    pub shapes: Vec<Shape>,
    /// Values as stored (f32), widened back to f64.
    pub params: Vec<f64>,
}

pub fn encode_checkpoint(meta: &str, shapes: &[Shape], params: &[f64]) -> Result<Vec<u8>> {
    let total: usize = shapes.iter().map(|(r, c)| r * c).sum();
    if total != params.len() {
        return Err(Error::usage("shape table does not cover the parameter vector"));
    }
    let mut out = Vec::with_capacity(16 + meta.len() + 8 * shapes.len() + 4 * params.len());
    out.extend_from_slice(MAGIC);
    let u32le = |v: usize| (v as u32).to_le_bytes();
    out.extend_from_slice(&FORMAT.to_le_bytes());
    out.extend_from_slice(&u32le(meta.len()));
    out.extend_from_slice(meta.as_bytes());
    out.extend_from_slice(&u32le(shapes.len()));
    for &(r, c) in shapes {
        out.extend_from_slice(&u32le(r));
        out.extend_from_slice(&u32le(c));
    }
    for &p in params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let bad = |msg: &str| Error::Checkpoint { path: path.to_path_buf(), msg: msg.to_string() };
    let mut r = bytes;
    let mut word = || -> Result<u32> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
        Ok(u32::from_le_bytes(b))
    };
    if word()?.to_le_bytes() != *MAGIC {
        return Err(bad("bad magic"));
    }
    if word()? != FORMAT {
        return Err(bad("unsupported format version"));
    }
    let meta_len = word()? as usize;
    let n = {
        let header = 12;
        if bytes.len() < header + meta_len + 4 {
            return Err(bad("truncated metadata"));
        }
        u32::from_le_bytes(bytes[header + meta_len..header + meta_len + 4].try_into().expect("4 bytes")) as usize
    };
    let meta = std::str::from_utf8(&bytes[12..12 + meta_len]).map_err(|_| bad("metadata is not UTF-8"))?.to_string();
    let mut at = 16 + meta_len;
    let mut shapes = Vec::with_capacity(n);
    for _ in 0..n {
        let chunk = bytes.get(at..at + 8).ok_or_else(|| bad("truncated shape table"))?;
        let rows = u32::from_le_bytes(chunk[..4].try_into().expect("4 bytes")) as usize;
        let cols = u32::from_le_bytes(chunk[4..].try_into().expect("4 bytes")) as usize;
        shapes.push((rows, cols));
        at += 8;
    }
    let total: usize = shapes.iter().map(|(r, c)| r * c).sum();
    let body = &bytes[at..];
    if body.len() != 4 * total {
        return Err(bad(&format!("expected {} weight bytes, found {}", 4 * total, body.len())));
    }
    let params = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
    Ok(Checkpoint { meta, shapes, params })
}

pub fn save_checkpoint(path: &Path, meta: &str, shapes: &[Shape], params: &[f64]) -> Result<()> {
    let bytes = encode_checkpoint(meta, shapes, params)?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    decode_checkpoint(&bytes, path)
}

/// Loads a checkpoint and checks it against `net`.
pub fn load_params(path: &Path, net: &Network) -> Result<Vec<f64>> {
    let ck = load_checkpoint(path)?;
    if ck.shapes != net.shapes() {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            msg: format!("shape table does not match network {}", net.spec().describe()),
        });
    }
    Ok(ck.params)
}

/// Rounds every value through f32, the precision checkpoints store.
pub fn quantize(params: &mut [f64]) {
    for p in params {
        *p = *p as f32 as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_policy_is_uniform() {
        let net = Network::new(NetworkSpec {
            input_dim: 4,
            hidden: vec![3],
            activation: Activation::Relu6,
            head: Head::Policy(3),
            recurrent: None,
        })
        .unwrap();
        let p = vec![0.0; net.param_count()];
        let f = net.forward(&p, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        for v in f.output {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_and_relu6_examples() {
        let p = softmax(&[0.0, 0.0, 2f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15 && (p[2] - 0.5).abs() < 1e-15);
        let r: Vec<f64> = [-1.0, 3.0, 9.0].iter().map(|&x| relu6(x)).collect();
        assert_eq!(r, vec![0.0, 3.0, 6.0]);
        assert!(softmax(&[0.0, -5000.0, 1.0]).iter().all(|&p| p > 0.0));
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&[1.0 / 3.0; 3]) - 3f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&[1.0, 0.0, 0.0]), 0.0);
        assert!((entropy(&[0.5, 0.25, 0.25]) - 1.5 * 2f64.ln()).abs() < 1e-12);
        assert!(entropy_grad_probs(&[1.0 / 3.0; 3]).iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradient() {
        let net = Network::new(NetworkSpec {
            input_dim: 5,
            hidden: vec![4],
            activation: Activation::Tanh,
            head: Head::Value,
            recurrent: Some(3),
        })
        .unwrap();
        let mut rng = crate::scenario::rng_stream(1, 9);
        let p = net.init_params(&mut rng);
        let f = net.forward(&p, &[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let mut g = vec![0.0; net.param_count()];
        net.backward(&p, &f, &[0.0], &mut g).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rmsprop_zero_gradient_and_saturation() {
        let mut w = vec![1.0, -2.0];
        let mut s = vec![0.5, 0.5];
        optimizer_step(&mut w, &mut s, &[0.0, 0.0], 0.1, RmsProp::default()).unwrap();
        assert_eq!(w, vec![1.0, -2.0]);
        assert!((s[0] - 0.495).abs() < 1e-15);

        let mut w = vec![0.0];
        let mut s = vec![0.0];
        let mut prev = 0.0;
        for _ in 0..3000 {
            optimizer_step(&mut w, &mut s, &[0.3], 1e-3, RmsProp::default()).unwrap();
            let step = prev - w[0];
            prev = w[0];
            if step.abs() < 1e-3 * 0.999 {
                continue;
            }
        }
        let before = w[0];
        optimizer_step(&mut w, &mut s, &[0.3], 1e-3, RmsProp::default()).unwrap();
        assert!(((before - w[0]) - 1e-3).abs() < 1e-6);
        assert!(optimizer_step(&mut w, &mut s, &[0.3, 0.1], 1e-3, RmsProp::default()).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let shapes = vec![(2, 3), (2, 1)];
        let params: Vec<f64> = (0..8).map(|i| i as f64 * 0.25 - 1.0).collect();
        let bytes = encode_checkpoint("demo", &shapes, &params).unwrap();
        let ck = decode_checkpoint(&bytes, Path::new("mem")).unwrap();
        assert_eq!(ck.meta, "demo");
        assert_eq!(ck.shapes, shapes);
        assert_eq!(ck.params, params);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1], Path::new("mem")).is_err());
        assert!(decode_checkpoint(b"NOPE", Path::new("mem")).is_err());
    }

    #[test]
    fn store_versions_and_length_checks() {
        let store = ParameterStore::new(vec![0.0; 3], vec![(3, 1)], RmsProp::default()).unwrap();
        assert_eq!(store.apply(&[1.0, 1.0, 1.0], 0.1).unwrap(), 1);
        assert_eq!(store.apply(&[1.0, 1.0, 1.0], 0.1).unwrap(), 2);
        assert!(store.apply(&[1.0], 0.1).is_err());
        assert_eq!(store.version(), 2);
        assert!(ParameterStore::new(vec![0.0; 2], vec![(3, 1)], RmsProp::default()).is_err());
    }
}
