//! Hardware-efficient variational circuit classifier.
//!
//! The model acts on `n_data + m_output` qubits prepared in
//! `|psi>_in (x) |1>^m`. Each of the `depth` layers applies a CNOT entangler
//! unit followed by an arbitrary per-qubit Euler rotation
//! `Z(c) X(b) Z(a)` (a applied first). Class probabilities are the measured
//! marginals of the output register; labels follow one-hot encoding over the
//! first `n_classes` entries.

use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::rng;
use crate::simulator::{
    self, input_gradient as sim_input_gradient, output_probabilities, tape_gradient, Gate,
    OutputDistribution, StateVector,
};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Floor applied inside `log` and its derivative.
pub const LOG_CLAMP: f64 = 1e-12;

const CHECKPOINT_VERSION: u32 = 1;

/// One training/evaluation sample: raw real features (pixels, densities, or
/// state amplitudes, pre-encoding) and a class index.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        LabeledSample { features, label }
    }

    /// One-hot vector of length `2^m_output`.
    pub fn one_hot(&self, m_output: usize) -> Vec<f64> {
        let mut v = vec![0.0; 1 << m_output];
        v[self.label] = 1.0;
        v
    }
}

/// Ansatz description plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitModel {
    pub n_data: usize,
    pub m_output: usize,
    pub depth: usize,
    pub n_classes: usize,
    /// CNOT (control, target) pairs applied in order at the start of every layer.
    pub entangler: Vec<(usize, usize)>,
    /// Euler angles, flat `[depth][n_qubits][3]` (a, b, c per qubit).
    pub theta: Vec<f64>,
}

impl CircuitModel {
    /// Linear-chain entangler, all angles zero.
    pub fn new(n_data: usize, m_output: usize, depth: usize, n_classes: usize) -> Result<Self> {
        if n_data < 1 || m_output < 1 {
            return Err(Error::config("need at least one data and one output qubit"));
        }
        let lo = 1usize << (m_output - 1);
        if !(n_classes > lo && n_classes <= (1 << m_output)) {
            return Err(Error::config(format!(
                "n_classes {} incompatible with m_output {} (need 2^(m-1) < K <= 2^m)",
                n_classes, m_output
            )));
        }
        let n = n_data + m_output;
        let entangler: Vec<(usize, usize)> = (0..n - 1).map(|q| (q, q + 1)).collect();
        Ok(CircuitModel {
            n_data,
            m_output,
            depth,
            n_classes,
            entangler,
            theta: vec![0.0; depth * n * 3],
        })
    }

    /// Seeded i.i.d. uniform [0, 2*pi) initialization.
    pub fn with_random_init(mut self, seed: u64) -> Self {
        let mut r = rng::stream(seed, "theta-init", 0);
        for t in self.theta.iter_mut() {
            *t = r.gen_range(0.0..std::f64::consts::TAU);
        }
        self
    }

    pub fn n_qubits(&self) -> usize {
        self.n_data + self.m_output
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    #[inline]
    pub fn theta_index(&self, layer: usize, qubit: usize, comp: usize) -> usize {
        (layer * self.n_qubits() + qubit) * 3 + comp
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_qubits();
        if self.theta.len() != self.depth * n * 3 {
            return Err(Error::config("theta length does not match depth * qubits * 3"));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::config("non-finite theta entry"));
        }
        for &(c, t) in &self.entangler {
            if c >= n || t >= n || c == t {
                return Err(Error::config(format!("invalid entangler pair ({c},{t})")));
            }
        }
        Ok(())
    }

    /// Full gate tape: per layer, entangler CNOTs then Z(a) X(b) Z(c) on each
    /// qubit.
    pub fn tape(&self) -> Vec<Gate> {
        self.tape_with_theta(&self.theta)
    }

    pub fn tape_with_theta(&self, theta: &[f64]) -> Vec<Gate> {
        let n = self.n_qubits();
        let mut tape = Vec::with_capacity(self.depth * (self.entangler.len() + 3 * n));
        for layer in 0..self.depth {
            for &(control, target) in &self.entangler {
                tape.push(Gate::Cnot { control, target });
            }
            for q in 0..n {
                let base = (layer * n + q) * 3;
                tape.push(Gate::Rz { qubit: q, angle: theta[base] });
                tape.push(Gate::Rx { qubit: q, angle: theta[base + 1] });
                tape.push(Gate::Rz { qubit: q, angle: theta[base + 2] });
            }
        }
        tape
    }

    /// Map tape position -> theta index (None for entangler gates).
    fn tape_theta_map(&self) -> Vec<Option<usize>> {
        let n = self.n_qubits();
        let mut map = Vec::with_capacity(self.depth * (self.entangler.len() + 3 * n));
        for layer in 0..self.depth {
            for _ in &self.entangler {
                map.push(None);
            }
            for q in 0..n {
                let base = (layer * n + q) * 3;
                map.push(Some(base));
                map.push(Some(base + 1));
                map.push(Some(base + 2));
            }
        }
        map
    }
}

/// Map a feature vector into data-register amplitudes: pad with zeros to
/// 2^n_data, then l2-normalize.
pub fn amplitude_encode(features: &[f64], n_data: usize) -> Result<StateVector> {
    let dim = 1usize << n_data;
    if features.len() > dim {
        return Err(Error::config(format!(
            "feature length {} exceeds 2^{n_data}",
            features.len()
        )));
    }
    if features.is_empty() || features.iter().all(|x| *x == 0.0) {
        return Err(Error::input("cannot encode the all-zero vector"));
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); dim];
    for (a, x) in amps.iter_mut().zip(features) {
        *a = Complex64::new(*x, 0.0);
    }
    StateVector::from_unnormalized(amps)
}

/// Forward pass on an already-encoded data state.
pub fn forward(model: &CircuitModel, input: &StateVector) -> Result<OutputDistribution> {
    if input.n_qubits() != model.n_data {
        return Err(Error::config(format!(
            "input has {} qubits, model expects {}",
            input.n_qubits(),
            model.n_data
        )));
    }
    let psi = input.tensor_output_register(model.m_output);
    let out = simulator::apply_tape(&psi, &model.tape())?;
    output_probabilities(&out, model.m_output)
}

/// Encode raw features and run the forward pass.
pub fn forward_features(model: &CircuitModel, features: &[f64]) -> Result<OutputDistribution> {
    forward(model, &amplitude_encode(features, model.n_data)?)
}

/// Renormalized class probabilities: the first `n_classes` entries of the
/// output distribution, rescaled to sum to one. Identity when K = 2^m.
pub fn class_probabilities(probs: &OutputDistribution, n_classes: usize) -> Vec<f64> {
    let g = &probs.probs()[..n_classes];
    let total: f64 = g.iter().sum();
    if total <= 0.0 {
        return vec![1.0 / n_classes as f64; n_classes];
    }
    g.iter().map(|p| p / total).collect()
}

/// Cross-entropy loss `-sum_k a_k log g_k` with `g` clamped below at
/// `LOG_CLAMP`; `g` is renormalized over the first `n_classes` entries when
/// K < 2^m.
pub fn loss(probs: &OutputDistribution, one_hot: &[f64], n_classes: usize) -> f64 {
    let g = class_probabilities(probs, n_classes);
    -one_hot
        .iter()
        .take(n_classes)
        .zip(&g)
        .map(|(a, p)| a * p.max(LOG_CLAMP).ln())
        .sum::<f64>()
}

/// dL/dg_k over the raw (un-renormalized) output distribution.
///
/// Probabilities below `LOG_CLAMP` use the clamped value in the
/// denominator, keeping gradients finite where the loss itself is clamped.
pub fn loss_weights(probs: &OutputDistribution, one_hot: &[f64], n_classes: usize) -> Vec<f64> {
    let raw = probs.probs();
    let m_dim = raw.len();
    if n_classes == m_dim {
        return (0..m_dim)
            .map(|k| -one_hot[k] / raw[k].max(LOG_CLAMP))
            .collect();
    }
    let total: f64 = raw[..n_classes].iter().sum::<f64>().max(LOG_CLAMP);
    let ghat: Vec<f64> = raw[..n_classes].iter().map(|p| p / total).collect();
    (0..m_dim)
        .map(|k| {
            if k < n_classes {
                (1.0 - one_hot[k] / ghat[k].max(LOG_CLAMP)) / total
            } else {
                0.0
            }
        })
        .collect()
}

/// Predicted class and its (renormalized) confidence; ties break toward the
/// lowest class index.
pub fn predict(model: &CircuitModel, input: &StateVector) -> Result<(usize, f64)> {
    let probs = forward(model, input)?;
    Ok(predict_from_probs(&probs, model.n_classes))
}

pub fn predict_from_probs(probs: &OutputDistribution, n_classes: usize) -> (usize, f64) {
    let g = class_probabilities(probs, n_classes);
    let mut best = 0;
    for (k, p) in g.iter().enumerate() {
        if *p > g[best] {
            best = k;
        }
    }
    (best, g[best])
}

/// Per-sample loss gradient with respect to theta, plus the forward metrics.
fn sample_gradient(
    model: &CircuitModel,
    tape: &[Gate],
    theta_map: &[Option<usize>],
    sample: &LabeledSample,
) -> Result<(Vec<f64>, f64, bool)> {
    let data_state = amplitude_encode(&sample.features, model.n_data)?;
    let psi0 = data_state.tensor_output_register(model.m_output);
    let one_hot = sample.one_hot(model.m_output);
    let n_classes = model.n_classes;
    let grad = tape_gradient(tape, &psi0, model.m_output, &|p: &OutputDistribution| {
        loss_weights(p, &one_hot, n_classes)
    })?;
    let sample_loss = loss(&grad.probs, &one_hot, n_classes);
    let (pred, _) = predict_from_probs(&grad.probs, n_classes);
    let mut theta_grad = vec![0.0; model.n_params()];
    for (pos, g) in grad.angle_grads.iter().enumerate() {
        if let Some(idx) = theta_map[pos] {
            theta_grad[idx] += *g;
        }
    }
    Ok((theta_grad, sample_loss, pred == sample.label))
}

/// Batch statistics from one gradient pass.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub grad: Vec<f64>,
    pub mean_loss: f64,
    pub n_correct: usize,
}

/// Analytic batch gradient (reverse-mode; numerically identical to the
/// chained parameter-shift rule). Samples are processed as a parallel map
/// and reduced in a fixed order.
pub fn batch_gradient(model: &CircuitModel, batch: &[LabeledSample]) -> Result<BatchGradient> {
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    let tape = model.tape();
    let theta_map = model.tape_theta_map();
    let per_sample: Vec<(Vec<f64>, f64, bool)> = batch
        .par_iter()
        .map(|s| sample_gradient(model, &tape, &theta_map, s))
        .collect::<Result<_>>()?;
    let mut grad = vec![0.0; model.n_params()];
    let mut loss_sum = 0.0;
    let mut n_correct = 0;
    for (g, l, c) in &per_sample {
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
        loss_sum += l;
        n_correct += usize::from(*c);
    }
    let inv = 1.0 / batch.len() as f64;
    for g in grad.iter_mut() {
        *g *= inv;
    }
    Ok(BatchGradient {
        grad,
        mean_loss: loss_sum * inv,
        n_correct,
    })
}

/// Literal pi/2 parameter-shift gradient: for every angle,
/// `dg_k/dtheta = (g_k(+pi/2) - g_k(-pi/2)) / 2`, chained through
/// `dL/dg_k`. Two circuit evaluations per parameter per sample; used for
/// verification, not training.
pub fn parameter_shift_gradient(model: &CircuitModel, batch: &[LabeledSample]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let n_params = model.n_params();
    let states: Vec<(StateVector, Vec<f64>)> = batch
        .iter()
        .map(|s| {
            let st = amplitude_encode(&s.features, model.n_data)?
                .tensor_output_register(model.m_output);
            Ok((st, s.one_hot(model.m_output)))
        })
        .collect::<Result<_>>()?;
    let grads: Vec<f64> = (0..n_params)
        .into_par_iter()
        .map(|p| {
            let mut acc = 0.0;
            for (psi0, one_hot) in &states {
                let base = output_probabilities(
                    &simulator::apply_tape(psi0, &model.tape()).expect("validated tape"),
                    model.m_output,
                )
                .expect("valid register");
                let weights = loss_weights(&base, one_hot, model.n_classes);
                let shifted = |delta: f64| {
                    let mut theta = model.theta.clone();
                    theta[p] += delta;
                    output_probabilities(
                        &simulator::apply_tape(psi0, &model.tape_with_theta(&theta))
                            .expect("validated tape"),
                        model.m_output,
                    )
                    .expect("valid register")
                };
                let plus = shifted(half_pi);
                let minus = shifted(-half_pi);
                acc += weights
                    .iter()
                    .zip(plus.probs().iter().zip(minus.probs()))
                    .map(|(w, (gp, gm))| w * 0.5 * (gp - gm))
                    .sum::<f64>();
            }
            acc / batch.len() as f64
        })
        .collect();
    Ok(grads)
}

/// Loss gradient with respect to the raw input features of one sample
/// (normalization chain rule included; the result is orthogonal to the
/// input).
pub fn input_gradient(
    model: &CircuitModel,
    features: &[f64],
    one_hot: &[f64],
) -> Result<Vec<f64>> {
    let dim = 1usize << model.n_data;
    if features.len() > dim {
        return Err(Error::config(format!(
            "feature length {} exceeds 2^{}",
            features.len(),
            model.n_data
        )));
    }
    let mut padded = features.to_vec();
    padded.resize(dim, 0.0);
    let n_classes = model.n_classes;
    let one_hot = one_hot.to_vec();
    let grad = sim_input_gradient(
        &model.tape(),
        &padded,
        model.n_data,
        model.m_output,
        &move |p: &OutputDistribution| loss_weights(p, &one_hot, n_classes),
    )?;
    Ok(grad[..features.len()].to_vec())
}

/// Mean loss and accuracy over a sample set (fixed reduction order).
pub fn evaluate(model: &CircuitModel, samples: &[LabeledSample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::input("empty evaluation set"));
    }
    let per: Vec<(f64, bool)> = samples
        .par_iter()
        .map(|s| {
            let probs = forward_features(model, &s.features)?;
            let l = loss(&probs, &s.one_hot(model.m_output), model.n_classes);
            let (pred, _) = predict_from_probs(&probs, model.n_classes);
            Ok((l, pred == s.label))
        })
        .collect::<Result<_>>()?;
    let loss_sum: f64 = per.iter().map(|(l, _)| l).sum();
    let n_correct = per.iter().filter(|(_, c)| *c).count();
    Ok((
        loss_sum / samples.len() as f64,
        n_correct as f64 / samples.len() as f64,
    ))
}

/// Mini-batch Adam training configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Stop once validation accuracy reaches this value.
    pub early_stop_valid_acc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.005,
            batch_size: 256,
            epochs: 30,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            early_stop_valid_acc: None,
        }
    }
}

/// Metric row recorded once per epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_loss: f64,
    pub valid_accuracy: f64,
}

/// Mini-batch Adam on the analytic gradient; returns the parameters with the
/// best validation accuracy and the per-epoch records.
pub fn train(
    model: &CircuitModel,
    train_set: &[LabeledSample],
    valid_set: &[LabeledSample],
    config: &TrainConfig,
) -> Result<(CircuitModel, Vec<EpochRecord>)> {
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::input("training and validation sets must be non-empty"));
    }
    if config.learning_rate <= 0.0 || config.batch_size == 0 {
        return Err(Error::config("learning_rate must be > 0 and batch_size >= 1"));
    }
    let mut current = model.clone();
    current.validate()?;
    let mut adam = Adam::new(
        current.n_params(),
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    );
    let mut records = Vec::with_capacity(config.epochs);
    let mut best = (current.clone(), f64::NEG_INFINITY);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        shuffle(&mut order, &mut rng::stream(config.seed, "epoch-shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<LabeledSample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let bg = batch_gradient(&current, &batch)?;
            if !bg.mean_loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("non-finite batch loss {}", bg.mean_loss),
                });
            }
            loss_sum += bg.mean_loss * batch.len() as f64;
            correct += bg.n_correct;
            adam.step(&mut current.theta, &bg.grad);
        }
        let (valid_loss, valid_accuracy) = evaluate(&current, valid_set)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            valid_loss,
            valid_accuracy,
        };
        records.push(record);
        if valid_accuracy > best.1 {
            best = (current.clone(), valid_accuracy);
        }
        if let Some(stop) = config.early_stop_valid_acc {
            if valid_accuracy >= stop {
                break;
            }
        }
    }
    Ok((best.0, records))
}

/// Fisher-Yates with a caller-provided stream.
pub(crate) fn shuffle(order: &mut [usize], r: &mut impl Rng) {
    for i in (1..order.len()).rev() {
        let j = r.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// Checkpoint metadata persisted beside the parameters.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct CheckpointMetadata {
    pub seed: u64,
    pub dataset: String,
    pub epoch: usize,
    pub n_classes: usize,
    /// Class index -> human label (e.g. digit), ascending order.
    pub class_labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    n_data: usize,
    m_output: usize,
    depth: usize,
    entangler: Vec<[usize; 2]>,
    theta: Vec<f64>,
    metadata: CheckpointMetadata,
}

pub fn save_checkpoint(
    model: &CircuitModel,
    metadata: &CheckpointMetadata,
    path: &Path,
) -> Result<()> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        n_data: model.n_data,
        m_output: model.m_output,
        depth: model.depth,
        entangler: model.entangler.iter().map(|&(c, t)| [c, t]).collect(),
        theta: model.theta.clone(),
        metadata: CheckpointMetadata {
            n_classes: model.n_classes,
            ..metadata.clone()
        },
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(CircuitModel, CheckpointMetadata)> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::config(format!(
            "unsupported checkpoint version {}",
            file.version
        )));
    }
    let model = CircuitModel {
        n_data: file.n_data,
        m_output: file.m_output,
        depth: file.depth,
        n_classes: file.metadata.n_classes,
        entangler: file.entangler.iter().map(|p| (p[0], p[1])).collect(),
        theta: file.theta,
    };
    model.validate()?;
    Ok((model, file.metadata))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn encode_basis_state() {
        let st = amplitude_encode(&[1.0, 0.0, 0.0, 0.0], 2).unwrap();
        assert_abs_diff_eq!(st.amplitudes()[0].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn encode_normalizes() {
        let st = amplitude_encode(&[3.0, 4.0], 1).unwrap();
        assert_abs_diff_eq!(st.amplitudes()[0].re, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(st.amplitudes()[1].re, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn encode_pads_with_zeros() {
        let st = amplitude_encode(&[1.0, 1.0, 1.0], 2).unwrap();
        let s = 1.0 / 3.0f64.sqrt();
        for k in 0..3 {
            assert_abs_diff_eq!(st.amplitudes()[k].re, s, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(st.amplitudes()[3].re, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn encode_rejects_zero_and_oversize() {
        assert!(amplitude_encode(&[0.0, 0.0], 1).is_err());
        assert!(amplitude_encode(&[1.0; 5], 2).is_err());
    }

    #[test]
    fn encode_is_idempotent() {
        let st = amplitude_encode(&[0.2, -0.4, 0.9], 2).unwrap();
        let feats: Vec<f64> = st.amplitudes().iter().map(|a| a.re).collect();
        let st2 = amplitude_encode(&feats, 2).unwrap();
        for (a, b) in st.amplitudes().iter().zip(st2.amplitudes()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_circuit_keeps_output_register() {
        let model = CircuitModel::new(2, 1, 0, 2).unwrap();
        let probs = forward_features(&model, &[0.3, 0.2, 0.9, 0.1]).unwrap();
        assert_abs_diff_eq!(probs.probs()[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(probs.probs()[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn loss_examples() {
        let perfect = OutputDistribution::from_probs(vec![1.0, 0.0]);
        assert_abs_diff_eq!(loss(&perfect, &[1.0, 0.0], 2), 0.0, epsilon = 1e-12);
        let even = OutputDistribution::from_probs(vec![0.5, 0.5]);
        assert_abs_diff_eq!(loss(&even, &[1.0, 0.0], 2), 2.0f64.ln(), epsilon = 1e-12);
        let wrong = OutputDistribution::from_probs(vec![0.0, 1.0]);
        // Forced by the clamp: -ln(1e-12)
        assert_abs_diff_eq!(loss(&wrong, &[1.0, 0.0], 2), 27.631021115928547, epsilon = 1e-9);
    }

    #[test]
    fn predict_tie_breaks_low() {
        let even = OutputDistribution::from_probs(vec![0.5, 0.5]);
        assert_eq!(predict_from_probs(&even, 2), (0, 0.5));
        let clear = OutputDistribution::from_probs(vec![0.9, 0.1]);
        assert_eq!(predict_from_probs(&clear, 2).0, 0);
    }

    #[test]
    fn predict_renormalizes_partial_register() {
        // K = 3 classes on m = 2 output qubits.
        let probs = OutputDistribution::from_probs(vec![0.2, 0.3, 0.1, 0.4]);
        let (class, conf) = predict_from_probs(&probs, 3);
        assert_eq!(class, 1);
        assert_abs_diff_eq!(conf, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn shift_rule_identity_on_cosine() {
        // g0(theta) = cos^2(theta/2) for Rx(theta)|0>;
        // (g0(t + pi/2) - g0(t - pi/2)) / 2 == -sin(t)/2 == dg0/dt exactly.
        let half_pi = std::f64::consts::FRAC_PI_2;
        let g0 = |t: f64| {
            let st = simulator::apply_tape(
                &StateVector::zero_state(1),
                &[Gate::Rx { qubit: 0, angle: t }],
            )
            .unwrap();
            output_probabilities(&st, 1).unwrap().probs()[0]
        };
        for t in [0.0, 0.4, 1.3, -2.2] {
            let shift = 0.5 * (g0(t + half_pi) - g0(t - half_pi));
            assert_abs_diff_eq!(shift, -0.5 * t.sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn adjoint_equals_parameter_shift() {
        let model = CircuitModel::new(2, 1, 2, 2).unwrap().with_random_init(5);
        let batch = vec![
            LabeledSample::new(vec![0.9, 0.1, 0.3, 0.5], 0),
            LabeledSample::new(vec![0.2, 0.8, 0.4, 0.1], 1),
        ];
        let fast = batch_gradient(&model, &batch).unwrap().grad;
        let shift = parameter_shift_gradient(&model, &batch).unwrap();
        assert_eq!(fast.len(), shift.len());
        for (a, b) in fast.iter().zip(&shift) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn disconnected_parameter_has_zero_gradient() {
        // No entangler: rotations on the data qubit cannot move the output
        // marginal.
        let mut model = CircuitModel::new(1, 1, 1, 2).unwrap().with_random_init(3);
        model.entangler.clear();
        let batch = vec![LabeledSample::new(vec![0.6, 0.8], 0)];
        let grad = batch_gradient(&model, &batch).unwrap().grad;
        // Theta layout: qubit 0 (data) first three entries.
        for g in &grad[..3] {
            assert_abs_diff_eq!(*g, 0.0, epsilon = 1e-10);
        }
        let shift = parameter_shift_gradient(&model, &batch).unwrap();
        for g in &shift[..3] {
            assert_abs_diff_eq!(*g, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let model = CircuitModel::new(1, 1, 1, 2).unwrap();
        assert!(batch_gradient(&model, &[]).is_err());
        assert!(parameter_shift_gradient(&model, &[]).is_err());
    }

    #[test]
    fn input_gradient_zero_at_perfect_prediction() {
        // Identity circuit, x = (1, 0), label 0: loss is at its minimum.
        let model = CircuitModel::new(1, 1, 0, 2).unwrap();
        // With no layers the output register stays |1>, so class 1 is certain;
        // use label 1 at x=(0,1)... instead flip: the minimum-loss case is the
        // pinned class.
        let grad = input_gradient(&model, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        for g in &grad {
            assert_abs_diff_eq!(*g, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let model = CircuitModel::new(3, 1, 2, 2).unwrap().with_random_init(42);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let meta = CheckpointMetadata {
            seed: 42,
            dataset: "test".into(),
            epoch: 7,
            n_classes: 2,
            class_labels: vec!["1".into(), "9".into()],
        };
        save_checkpoint(&model, &meta, &path).unwrap();
        let (loaded, meta2) = load_checkpoint(&path).unwrap();
        assert_eq!(model, loaded);
        assert_eq!(meta2.epoch, 7);
        let x = vec![0.1, 0.9, 0.2, 0.4, 0.3, 0.2, 0.6, 0.05];
        let a = forward_features(&model, &x).unwrap();
        let b = forward_features(&loaded, &x).unwrap();
        for (p, q) in a.probs().iter().zip(b.probs()) {
            assert!((p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn train_reduces_loss_on_separable_toy_data() {
        let model = CircuitModel::new(2, 1, 3, 2).unwrap().with_random_init(1);
        let train_set: Vec<LabeledSample> = (0..24)
            .map(|i| {
                if i % 2 == 0 {
                    LabeledSample::new(vec![1.0, 0.1, 0.05, 0.02], 0)
                } else {
                    LabeledSample::new(vec![0.05, 0.1, 0.2, 1.0], 1)
                }
            })
            .collect();
        let cfg = TrainConfig {
            batch_size: 8,
            epochs: 25,
            learning_rate: 0.05,
            seed: 9,
            ..TrainConfig::default()
        };
        let (trained, records) = train(&model, &train_set, &train_set, &cfg).unwrap();
        assert!(records.last().unwrap().train_loss < records[0].train_loss);
        let (_, acc) = evaluate(&trained, &train_set).unwrap();
        assert!(acc > 0.9, "toy accuracy {acc}");
    }

    #[test]
    fn training_is_deterministic() {
        let model = CircuitModel::new(2, 1, 2, 2).unwrap().with_random_init(4);
        let data: Vec<LabeledSample> = (0..12)
            .map(|i| LabeledSample::new(vec![0.1 + i as f64, 1.0, 0.3, 0.2], i % 2))
            .collect();
        let cfg = TrainConfig {
            batch_size: 4,
            epochs: 3,
            ..TrainConfig::default()
        };
        let (m1, r1) = train(&model, &data, &data, &cfg).unwrap();
        let (m2, r2) = train(&model, &data, &data, &cfg).unwrap();
        assert_eq!(m1.theta, m2.theta);
        assert_eq!(r1.len(), r2.len());
        for (a, b) in r1.iter().zip(&r2) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        }
    }
}
