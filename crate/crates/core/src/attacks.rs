//! Adversarial example generation against circuit classifiers.
//!
//! White-box methods (FGSM, BIM, PGD, MIM) use the analytic loss gradient;
//! the black-box ZOO method sees only output probabilities through a
//! [`ProbOracle`]. Attacks come in two flavors:
//!
//! * additive: each component of the raw feature vector is perturbed
//!   independently; the vector is re-encoded (norm projection `pi_C`) for
//!   every evaluation, so every returned adversarial state is unit norm. The
//!   gradient already contains the projection chain rule and is orthogonal
//!   to the current iterate.
//! * functional: the perturbation is a layer of near-identity single-qubit
//!   Euler rotations `U(omega)` applied to the encoded input state; the
//!   attack walks in the angle space `omega`.
//!
//! Untargeted attacks ascend the loss at the true label; targeted attacks
//! descend the loss at the target label.

use crate::classifier::{
    amplitude_encode, forward_features, loss, loss_weights, predict_from_probs, CircuitModel,
    LabeledSample,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::simulator::{
    apply_tape, input_gradient, tape_gradient, Gate, OutputDistribution, StateVector,
};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Fgsm,
    Bim,
    Pgd,
    Mim,
    Zoo,
}

impl AttackMethod {
    pub fn name(&self) -> &'static str {
        match self {
            AttackMethod::Fgsm => "fgsm",
            AttackMethod::Bim => "bim",
            AttackMethod::Pgd => "pgd",
            AttackMethod::Mim => "mim",
            AttackMethod::Zoo => "zoo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackSpace {
    Additive,
    Functional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "goal", content = "target")]
pub enum AttackGoal {
    Untargeted,
    Targeted(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub space: AttackSpace,
    pub goal: AttackGoal,
    /// Perturbation bound epsilon. For iterative methods without an explicit
    /// `step_size`, the per-step size is `epsilon / iterations`.
    pub epsilon: f64,
    /// Explicit per-step size, the `BIM(iterations, step)` notation.
    pub step_size: Option<f64>,
    pub iterations: usize,
    /// MIM decay factor mu.
    pub mim_decay: f64,
    pub pgd_restarts: usize,
    /// Radius of the PGD random start; defaults to epsilon.
    pub pgd_start_radius: Option<f64>,
    /// Coordinates estimated per ZOO iteration.
    pub zoo_coord_batch: usize,
    /// ZOO symmetric-difference step.
    pub zoo_h: f64,
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(method: AttackMethod, space: AttackSpace, epsilon: f64, iterations: usize) -> Self {
        AttackConfig {
            method,
            space,
            goal: AttackGoal::Untargeted,
            epsilon,
            step_size: None,
            iterations,
            mim_decay: 1.0,
            pgd_restarts: 1,
            pgd_start_radius: None,
            zoo_coord_batch: 32,
            zoo_h: 1e-3,
            seed: 0,
        }
    }

    /// The paper's `METHOD(iterations, step)` notation.
    pub fn with_step(method: AttackMethod, space: AttackSpace, iterations: usize, step: f64) -> Self {
        let mut cfg = AttackConfig::new(method, space, step * iterations as f64, iterations);
        cfg.step_size = Some(step);
        cfg
    }

    pub fn targeted(mut self, target: usize) -> Self {
        self.goal = AttackGoal::Targeted(target);
        self
    }

    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Per-step size: explicit override, else epsilon / T.
    pub fn alpha(&self) -> f64 {
        self.step_size
            .unwrap_or(self.epsilon / self.iterations.max(1) as f64)
    }

    pub fn validate(&self, model: &CircuitModel) -> Result<()> {
        if self.epsilon < 0.0 {
            return Err(Error::config("epsilon must be >= 0"));
        }
        if self.iterations < 1 {
            return Err(Error::config("iterations must be >= 1"));
        }
        if self.method == AttackMethod::Fgsm && self.iterations != 1 {
            return Err(Error::config("FGSM uses exactly one iteration"));
        }
        if self.mim_decay < 0.0 {
            return Err(Error::config("MIM decay must be >= 0"));
        }
        if self.method == AttackMethod::Zoo && self.space == AttackSpace::Functional {
            return Err(Error::config("ZOO operates in the additive space only"));
        }
        if let AttackGoal::Targeted(t) = self.goal {
            if t >= model.n_classes {
                return Err(Error::config(format!(
                    "target class {t} out of range for {} classes",
                    model.n_classes
                )));
            }
        }
        Ok(())
    }
}

/// A layer of per-qubit Euler rotations `Z(c) X(b) Z(a)` on the data
/// register, parameterized by angles `omega[qubit][3]` (flat). `omega = 0`
/// is the identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalPerturbation {
    pub omega: Vec<f64>,
}

impl FunctionalPerturbation {
    pub fn identity(n_data: usize) -> Self {
        FunctionalPerturbation {
            omega: vec![0.0; 3 * n_data],
        }
    }

    /// Gate tape acting on qubits `0..n_data` (valid on both the bare data
    /// register and the full classifier register, where data qubits come
    /// first).
    pub fn tape(&self) -> Vec<Gate> {
        let n = self.omega.len() / 3;
        let mut tape = Vec::with_capacity(3 * n);
        for q in 0..n {
            tape.push(Gate::Rz { qubit: q, angle: self.omega[3 * q] });
            tape.push(Gate::Rx { qubit: q, angle: self.omega[3 * q + 1] });
            tape.push(Gate::Rz { qubit: q, angle: self.omega[3 * q + 2] });
        }
        tape
    }

    /// Componentwise bound satisfied by construction: |omega_i| <= bound.
    pub fn max_abs(&self) -> f64 {
        self.omega.iter().fold(0.0, |m, w| m.max(w.abs()))
    }
}

/// Squared overlap `|<a|b>|^2`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr().min(1.0))
}

/// One row of a per-iteration attack trace. `loss` is measured at the true
/// label; iteration 0 is the clean sample.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub fidelity: f64,
    pub loss: f64,
    pub pred_class: usize,
    pub confidence: f64,
}

/// Outcome of attacking a single sample.
#[derive(Debug, Clone)]
pub struct SampleAttack {
    pub sample_id: usize,
    pub label: usize,
    pub original_features: Vec<f64>,
    /// Raw-space adversarial features (padded to 2^n_data). For functional
    /// attacks the features are unchanged and `omega` carries the result.
    pub adversarial_features: Vec<f64>,
    /// Unit-norm adversarial input state (pi_C applied).
    pub adversarial_state: StateVector,
    pub omega: Option<FunctionalPerturbation>,
    pub trace: Vec<IterationRecord>,
    /// False when the gradient vanished and no perturbation was found.
    pub perturbed: bool,
    /// Probability-oracle queries issued (ZOO).
    pub queries: u64,
}

impl SampleAttack {
    pub fn final_record(&self) -> &IterationRecord {
        self.trace.last().expect("trace always has the clean row")
    }

    pub fn final_fidelity(&self) -> f64 {
        self.final_record().fidelity
    }

    /// Attack success under the configured goal.
    pub fn success(&self, goal: &AttackGoal) -> bool {
        let pred = self.final_record().pred_class;
        match goal {
            AttackGoal::Untargeted => pred != self.label,
            AttackGoal::Targeted(t) => pred == *t,
        }
    }
}

fn sign0(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum()
    }
}

/// Shared white-box state: the objective label (true or target), the step
/// direction, and cached model tape.
struct WhiteBox<'a> {
    model: &'a CircuitModel,
    tape: Vec<Gate>,
    true_one_hot: Vec<f64>,
    attack_one_hot: Vec<f64>,
    direction: f64,
}

impl<'a> WhiteBox<'a> {
    fn new(model: &'a CircuitModel, sample: &LabeledSample, goal: &AttackGoal) -> Self {
        let true_one_hot = sample.one_hot(model.m_output);
        let (attack_one_hot, direction) = match goal {
            AttackGoal::Untargeted => (true_one_hot.clone(), 1.0),
            AttackGoal::Targeted(t) => {
                let mut v = vec![0.0; 1 << model.m_output];
                v[*t] = 1.0;
                (v, -1.0)
            }
        };
        WhiteBox {
            model,
            tape: model.tape(),
            true_one_hot,
            attack_one_hot,
            direction,
        }
    }

    /// Objective-label gradient with respect to the raw features.
    fn additive_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let one_hot = self.attack_one_hot.clone();
        let n_classes = self.model.n_classes;
        input_gradient(
            &self.tape,
            x,
            self.model.n_data,
            self.model.m_output,
            &move |p: &OutputDistribution| loss_weights(p, &one_hot, n_classes),
        )
    }

    /// Objective-label gradient with respect to the perturbation angles.
    fn functional_grad(
        &self,
        data_state: &StateVector,
        pert: &FunctionalPerturbation,
    ) -> Result<Vec<f64>> {
        let mut full_tape = pert.tape();
        let n_pert也 = full_tape.len();
        full_tape.extend_from_slice(&self.tape);
        let psi0 = data_state.tensor_output_register(self.model.m_output);
        let one_hot = self.attack_one_hot.clone();
        let n_classes = self.model.n_classes;
        let grad = tape_gradient(&full_tape, &psi0, self.model.m_output, &move |p| {
            loss_weights(p, &one_hot, n_classes)
        })?;
        Ok(grad.angle_grads[..n_pert也].to_vec())
    }

    fn record(&self, iteration: usize, state: &StateVector, clean: &StateVector) -> Result<IterationRecord> {
        let probs = crate::classifier::forward(self.model, state)?;
        let (pred_class, confidence) = predict_from_probs(&probs, self.model.n_classes);
        Ok(IterationRecord {
            iteration,
            fidelity: fidelity(state, clean)?,
            loss: loss(&probs, &self.true_one_hot, self.model.n_classes),
            pred_class,
            confidence,
        })
    }
}

fn pad_features(features: &[f64], n_data: usize) -> Vec<f64> {
    let mut x = features.to_vec();
    x.resize(1 << n_data, 0.0);
    x
}

/// Clip `x` back onto the l2 ball of radius `radius` around `center`.
fn project_to_ball(x: &mut [f64], center: &[f64], radius: f64) {
    let dist: f64 = x
        .iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if dist > radius && dist > 0.0 {
        let scale = radius / dist;
        for (a, b) in x.iter_mut().zip(center) {
            *a = b + (*a - b) * scale;
        }
    }
}

/// Uniform sample from the l2 ball of radius `radius` in `dim` dimensions.
fn uniform_ball(dim: usize, radius: f64, r: &mut impl Rng) -> Vec<f64> {
    if radius == 0.0 {
        return vec![0.0; dim];
    }
    let gauss: Vec<f64> = (0..dim)
        .map(|_| {
            // Box-Muller
            let u1: f64 = r.gen_range(f64::EPSILON..1.0);
            let u2: f64 = r.gen_range(0.0..std::f64::consts::TAU);
            (-2.0 * u1.ln()).sqrt() * u2.cos()
        })
        .collect();
    let norm = gauss.iter().map(|g| g * g).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let scale = radius * r.gen_range(0.0f64..1.0).powf(1.0 / dim as f64) / norm;
    gauss.into_iter().map(|g| g * scale).collect()
}

/// Run the configured attack on one sample. `sample_id` seeds the
/// per-sample random streams of PGD and ZOO.
pub fn attack_sample(
    model: &CircuitModel,
    sample: &LabeledSample,
    config: &AttackConfig,
    sample_id: usize,
) -> Result<SampleAttack> {
    config.validate(model)?;
    match (config.method, config.space) {
        (AttackMethod::Zoo, _) => zoo_attack(model, sample, config, sample_id),
        (_, AttackSpace::Additive) => additive_attack(model, sample, config, sample_id),
        (_, AttackSpace::Functional) => functional_attack(model, sample, config, sample_id),
    }
}

fn additive_attack(
    model: &CircuitModel,
    sample: &LabeledSample,
    config: &AttackConfig,
    sample_id: usize,
) -> Result<SampleAttack> {
    let wb = WhiteBox::new(model, sample, &config.goal);
    let x0 = pad_features(&sample.features, model.n_data);
    let clean_state = amplitude_encode(&x0, model.n_data)?;

    let run_from = |start: Vec<f64>, trace: &mut Vec<IterationRecord>| -> Result<(Vec<f64>, bool)> {
        let mut x = start;
        let mut momentum = vec![0.0; x.len()];
        let mut perturbed = false;
        let alpha = match config.method {
            AttackMethod::Fgsm => config.epsilon,
            _ => config.alpha(),
        };
        for k in 1..=config.iterations {
            let grad = wb.additive_grad(&x)?;
            let step_dir: Vec<f64> = match config.method {
                AttackMethod::Mim => {
                    let l1: f64 = grad.iter().map(|g| g.abs()).sum();
                    if l1 == 0.0 {
                        break;
                    }
                    for (m, g) in momentum.iter_mut().zip(&grad) {
                        *m = config.mim_decay * *m + g / l1;
                    }
                    momentum.iter().map(|m| sign0(*m)).collect()
                }
                _ => {
                    if grad.iter().all(|g| *g == 0.0) {
                        break;
                    }
                    grad.iter().map(|g| sign0(*g)).collect()
                }
            };
            let moved = step_dir.iter().any(|s| *s != 0.0) && alpha != 0.0;
            for (xi, s) in x.iter_mut().zip(&step_dir) {
                *xi += alpha * wb.direction * s;
            }
            if config.method == AttackMethod::Pgd {
                project_to_ball(&mut x, &x0, config.epsilon);
            }
            perturbed |= moved;
            let state = amplitude_encode(&x, model.n_data)?;
            trace.push(wb.record(k, &state, &clean_state)?);
        }
        Ok((x, perturbed))
    };

    let mut trace = vec![wb.record(0, &clean_state, &clean_state)?];
    let (x_adv, perturbed) = match config.method {
        AttackMethod::Pgd => {
            let mut best: Option<(f64, Vec<f64>, bool, Vec<IterationRecord>)> = None;
            for restart in 0..config.pgd_restarts.max(1) {
                let mut r = rng::stream(
                    config.seed,
                    "pgd-restart",
                    (sample_id as u64) << 20 | restart as u64,
                );
                let radius = config.pgd_start_radius.unwrap_or(config.epsilon);
                let mut start = x0.clone();
                if radius > 0.0 {
                    for (xi, d) in start.iter_mut().zip(uniform_ball(x0.len(), radius, &mut r)) {
                        *xi += d;
                    }
                }
                let mut t = vec![trace[0].clone()];
                let (x, p) = run_from(start, &mut t)?;
                // Objective score: ascend true-label loss, or descend
                // target-label loss.
                let probs = forward_features(model, &x)?;
                let score =
                    wb.direction * loss(&probs, &wb.attack_one_hot, model.n_classes);
                if best.as_ref().map_or(true, |(s, ..)| score > *s) {
                    best = Some((score, x, p, t));
                }
            }
            let (_, x, p, t) = best.expect("at least one restart");
            trace = t;
            (x, p)
        }
        _ => run_from(x0.clone(), &mut trace)?,
    };

    let adversarial_state = amplitude_encode(&x_adv, model.n_data)?;
    Ok(SampleAttack {
        sample_id,
        label: sample.label,
        original_features: x0,
        adversarial_features: x_adv,
        adversarial_state,
        omega: None,
        trace,
        perturbed,
        queries: 0,
    })
}

fn functional_attack(
    model: &CircuitModel,
    sample: &LabeledSample,
    config: &AttackConfig,
    sample_id: usize,
) -> Result<SampleAttack> {
    let wb = WhiteBox::new(model, sample, &config.goal);
    let x0 = pad_features(&sample.features, model.n_data);
    let clean_state = amplitude_encode(&x0, model.n_data)?;
    let n_angles = 3 * model.n_data;

    let perturbed_state = |pert: &FunctionalPerturbation| -> Result<StateVector> {
        apply_tape(&clean_state, &pert.tape())
    };

    let run_from = |omega0: Vec<f64>, trace: &mut Vec<IterationRecord>| -> Result<(Vec<f64>, bool)> {
        let mut pert = FunctionalPerturbation { omega: omega0 };
        let mut momentum = vec![0.0; n_angles];
        let mut perturbed = false;
        let alpha = match config.method {
            AttackMethod::Fgsm => config.epsilon,
            _ => config.alpha(),
        };
        for k in 1..=config.iterations {
            let grad = wb.functional_grad(&clean_state, &pert)?;
            let step_dir: Vec<f64> = match config.method {
                AttackMethod::Mim => {
                    let l1: f64 = grad.iter().map(|g| g.abs()).sum();
                    if l1 == 0.0 {
                        break;
                    }
                    for (m, g) in momentum.iter_mut().zip(&grad) {
                        *m = config.mim_decay * *m + g / l1;
                    }
                    momentum.iter().map(|m| sign0(*m)).collect()
                }
                _ => {
                    if grad.iter().all(|g| *g == 0.0) {
                        break;
                    }
                    grad.iter().map(|g| sign0(*g)).collect()
                }
            };
            let moved = step_dir.iter().any(|s| *s != 0.0) && alpha != 0.0;
            for (w, s) in pert.omega.iter_mut().zip(&step_dir) {
                *w += alpha * wb.direction * s;
            }
            if config.method == AttackMethod::Pgd {
                project_to_ball(&mut pert.omega, &vec![0.0; n_angles], config.epsilon);
            }
            perturbed |= moved;
            trace.push(wb.record(k, &perturbed_state(&pert)?, &clean_state)?);
        }
        Ok((pert.omega, perturbed))
    };

    let mut trace = vec![wb.record(0, &clean_state, &clean_state)?];
    let (omega, perturbed) = match config.method {
        AttackMethod::Pgd => {
            let mut best: Option<(f64, Vec<f64>, bool, Vec<IterationRecord>)> = None;
            for restart in 0..config.pgd_restarts.max(1) {
                let mut r = rng::stream(
                    config.seed,
                    "pgd-functional",
                    (sample_id as u64) << 20 | restart as u64,
                );
                let radius = config.pgd_start_radius.unwrap_or(config.epsilon);
                let start = uniform_ball(n_angles, radius, &mut r);
                let mut t = vec![trace[0].clone()];
                let (w, p) = run_from(start, &mut t)?;
                let state = perturbed_state(&FunctionalPerturbation { omega: w.clone() })?;
                let probs = crate::classifier::forward(model, &state)?;
                let score =
                    wb.direction * loss(&probs, &wb.attack_one_hot, model.n_classes);
                if best.as_ref().map_or(true, |(s, ..)| score > *s) {
                    best = Some((score, w, p, t));
                }
            }
            let (_, w, p, t) = best.expect("at least one restart");
            trace = t;
            (w, p)
        }
        _ => run_from(vec![0.0; n_angles], &mut trace)?,
    };

    let pert = FunctionalPerturbation { omega };
    let adversarial_state = perturbed_state(&pert)?;
    Ok(SampleAttack {
        sample_id,
        label: sample.label,
        original_features: x0.clone(),
        adversarial_features: x0,
        adversarial_state,
        omega: Some(pert),
        trace,
        perturbed,
        queries: 0,
    })
}

/// Classifier surface visible to a black-box attacker: output probabilities
/// only, no gradients.
pub trait ProbOracle: Sync {
    fn query(&self, features: &[f64]) -> Result<OutputDistribution>;
    fn n_classes(&self) -> usize;
    fn m_output(&self) -> usize;
}

impl ProbOracle for CircuitModel {
    fn query(&self, features: &[f64]) -> Result<OutputDistribution> {
        forward_features(self, features)
    }
    fn n_classes(&self) -> usize {
        self.n_classes
    }
    fn m_output(&self) -> usize {
        self.m_output
    }
}

/// Test double / instrumentation: counts every probability query passing
/// through.
pub struct CountingOracle<'a, O: ProbOracle> {
    inner: &'a O,
    count: AtomicU64,
}

impl<'a, O: ProbOracle> CountingOracle<'a, O> {
    pub fn new(inner: &'a O) -> Self {
        CountingOracle {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

impl<'a, O: ProbOracle> ProbOracle for CountingOracle<'a, O> {
    fn query(&self, features: &[f64]) -> Result<OutputDistribution> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.query(features)
    }
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }
    fn m_output(&self) -> usize {
        self.inner.m_output()
    }
}

fn zoo_attack(
    model: &CircuitModel,
    sample: &LabeledSample,
    config: &AttackConfig,
    sample_id: usize,
) -> Result<SampleAttack> {
    let report = zoo_attack_oracle(model, sample, config, sample_id)?;
    Ok(report)
}

/// Zeroth-order attack through a probability oracle: coordinate-wise
/// symmetric differences over a random coordinate subset per iteration,
/// followed by a signed step.
pub fn zoo_attack_oracle(
    oracle: &dyn ProbOracle,
    sample: &LabeledSample,
    config: &AttackConfig,
    sample_id: usize,
) -> Result<SampleAttack> {
    let n_classes = oracle.n_classes();
    let m_output = oracle.m_output();
    let true_one_hot = sample.one_hot(m_output);
    let (attack_one_hot, direction) = match config.goal {
        AttackGoal::Untargeted => (true_one_hot.clone(), 1.0),
        AttackGoal::Targeted(t) => {
            let mut v = vec![0.0; 1 << m_output];
            v[t] = 1.0;
            (v, -1.0)
        }
    };
    let queries = AtomicU64::new(0);
    let eval_loss = |x: &[f64], one_hot: &[f64]| -> Result<f64> {
        queries.fetch_add(1, Ordering::Relaxed);
        Ok(loss(&oracle.query(x)?, one_hot, n_classes))
    };
    let record = |iteration: usize, x: &[f64], clean: &[f64]| -> Result<IterationRecord> {
        queries.fetch_add(1, Ordering::Relaxed);
        let probs = oracle.query(x)?;
        let (pred_class, confidence) = predict_from_probs(&probs, n_classes);
        let fa = normalized(x);
        let fb = normalized(clean);
        let overlap: f64 = fa.iter().zip(&fb).map(|(a, b)| a * b).sum();
        Ok(IterationRecord {
            iteration,
            fidelity: (overlap * overlap).min(1.0),
            loss: loss(&probs, &true_one_hot, n_classes),
            pred_class,
            confidence,
        })
    };

    let x0 = sample.features.clone();
    let mut x = x0.clone();
    let alpha = config.alpha();
    let mut trace = vec![record(0, &x, &x0)?];
    let mut perturbed = false;
    for k in 1..=config.iterations {
        let mut r = rng::stream(config.seed, "zoo-coords", (sample_id as u64) << 20 | k as u64);
        let coords = sample_coords(x.len(), config.zoo_coord_batch, &mut r);
        let mut stepped = false;
        for &i in &coords {
            let mut xp = x.clone();
            xp[i] += config.zoo_h;
            let mut xm = x.clone();
            xm[i] -= config.zoo_h;
            let est = (eval_loss(&xp, &attack_one_hot)? - eval_loss(&xm, &attack_one_hot)?)
                / (2.0 * config.zoo_h);
            let s = sign0(est);
            if s != 0.0 && alpha != 0.0 {
                x[i] += alpha * direction * s;
                stepped = true;
            }
        }
        perturbed |= stepped;
        trace.push(record(k, &x, &x0)?);
    }

    let adversarial_state = StateVector::from_unnormalized(
        x.iter()
            .map(|v| num_complex::Complex64::new(*v, 0.0))
            .collect::<Vec<_>>(),
    );
    // ZOO operates on the dataset's native feature length; pad when the
    // feature count is not a power of two.
    let adversarial_state = match adversarial_state {
        Ok(st) => st,
        Err(_) => {
            let n_data = (usize::BITS - (x.len() - 1).leading_zeros()) as usize;
            amplitude_encode(&x, n_data)?
        }
    };
    Ok(SampleAttack {
        sample_id,
        label: sample.label,
        original_features: x0,
        adversarial_features: x,
        adversarial_state,
        omega: None,
        trace,
        perturbed,
        queries: queries.into_inner(),
    })
}

fn normalized(x: &[f64]) -> Vec<f64> {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 {
        return x.to_vec();
    }
    x.iter().map(|v| v / n).collect()
}

fn sample_coords(dim: usize, batch: usize, r: &mut impl Rng) -> Vec<usize> {
    if batch >= dim {
        return (0..dim).collect();
    }
    // Partial Fisher-Yates: first `batch` entries of a random permutation.
    let mut idx: Vec<usize> = (0..dim).collect();
    for i in 0..batch {
        let j = r.gen_range(i..dim);
        idx.swap(i, j);
    }
    idx.truncate(batch);
    idx
}

/// Mean-over-samples point of the accuracy-vs-fidelity curve.
#[derive(Debug, Clone, Serialize)]
pub struct IterationAggregate {
    pub iteration: usize,
    pub mean_fidelity: f64,
    pub accuracy: f64,
}

/// Result of attacking a whole dataset.
#[derive(Debug, Clone)]
pub struct AttackReport {
    pub config: AttackConfig,
    pub n_samples: usize,
    /// Fraction of attacked samples still classified correctly.
    pub accuracy: f64,
    pub clean_accuracy: f64,
    pub mean_fidelity: f64,
    pub success_rate: f64,
    pub per_iteration: Vec<IterationAggregate>,
    pub samples: Vec<SampleAttack>,
    /// Samples where no perturbation was found (zero gradient).
    pub n_failed: usize,
    pub total_queries: u64,
}

/// Attack every sample (for targeted goals, every sample whose label is not
/// the target) and aggregate accuracy and fidelity per iteration.
pub fn evaluate_attack(
    model: &CircuitModel,
    samples: &[LabeledSample],
    config: &AttackConfig,
) -> Result<AttackReport> {
    config.validate(model)?;
    if samples.is_empty() {
        return Err(Error::input("empty attack dataset"));
    }
    let eligible: Vec<(usize, &LabeledSample)> = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| match config.goal {
            AttackGoal::Targeted(t) => s.label != t,
            AttackGoal::Untargeted => true,
        })
        .collect();
    if eligible.is_empty() {
        return Err(Error::input("no samples eligible for the targeted goal"));
    }
    let results: Vec<SampleAttack> = eligible
        .par_iter()
        .map(|(id, s)| attack_sample(model, s, config, *id))
        .collect::<Result<_>>()?;

    let n = results.len();
    let accuracy = results
        .iter()
        .filter(|r| r.final_record().pred_class == r.label)
        .count() as f64
        / n as f64;
    let clean_accuracy = results
        .iter()
        .filter(|r| r.trace[0].pred_class == r.label)
        .count() as f64
        / n as f64;
    let mean_fidelity = results.iter().map(|r| r.final_fidelity()).sum::<f64>() / n as f64;
    let success_rate =
        results.iter().filter(|r| r.success(&config.goal)).count() as f64 / n as f64;
    let n_failed = results.iter().filter(|r| !r.perturbed).count();
    let total_queries = results.iter().map(|r| r.queries).sum();

    let t_max = results.iter().map(|r| r.trace.len()).max().unwrap_or(1);
    let per_iteration = (0..t_max)
        .map(|k| {
            let mut fid = 0.0;
            let mut correct = 0usize;
            for r in &results {
                let rec = if k < r.trace.len() {
                    &r.trace[k]
                } else {
                    r.final_record()
                };
                fid += rec.fidelity;
                correct += usize::from(rec.pred_class == r.label);
            }
            IterationAggregate {
                iteration: k,
                mean_fidelity: fid / n as f64,
                accuracy: correct as f64 / n as f64,
            }
        })
        .collect();

    Ok(AttackReport {
        config: config.clone(),
        n_samples: n,
        accuracy,
        clean_accuracy,
        mean_fidelity,
        success_rate,
        per_iteration,
        samples: results,
        n_failed,
        total_queries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn toy_model() -> CircuitModel {
        CircuitModel::new(2, 1, 2, 2).unwrap().with_random_init(17)
    }

    fn toy_sample() -> LabeledSample {
        LabeledSample::new(vec![0.9, 0.2, 0.4, 0.1], 0)
    }

    #[test]
    fn fidelity_trivials() {
        let a = StateVector::basis_state(1, 0);
        let b = StateVector::basis_state(1, 1);
        assert_abs_diff_eq!(fidelity(&a, &a).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity(&a, &b).unwrap(), 0.0, epsilon = 1e-15);
        let plus = StateVector::from_unnormalized(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
        ])
        .unwrap();
        assert_abs_diff_eq!(fidelity(&plus, &a).unwrap(), 0.5, epsilon = 1e-12);
        let c = StateVector::basis_state(2, 0);
        assert!(fidelity(&a, &c).is_err());
    }

    #[test]
    fn fgsm_zero_epsilon_returns_input() {
        let model = toy_model();
        let cfg = AttackConfig::new(AttackMethod::Fgsm, AttackSpace::Additive, 0.0, 1);
        let out = attack_sample(&model, &toy_sample(), &cfg, 0).unwrap();
        assert!(!out.perturbed);
        assert_abs_diff_eq!(out.final_fidelity(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bim_zero_alpha_keeps_input_bitwise() {
        let model = toy_model();
        let mut cfg = AttackConfig::new(AttackMethod::Bim, AttackSpace::Additive, 0.0, 3);
        cfg.step_size = Some(0.0);
        let sample = toy_sample();
        let out = attack_sample(&model, &sample, &cfg, 0).unwrap();
        assert_eq!(out.adversarial_features[..4], sample.features[..]);
        assert!(!out.perturbed);
    }

    #[test]
    fn mim_with_zero_decay_matches_bim() {
        let model = toy_model();
        let sample = toy_sample();
        let bim = AttackConfig::with_step(AttackMethod::Bim, AttackSpace::Additive, 4, 0.05);
        let mut mim = AttackConfig::with_step(AttackMethod::Mim, AttackSpace::Additive, 4, 0.05);
        mim.mim_decay = 0.0;
        let a = attack_sample(&model, &sample, &bim, 0).unwrap();
        let b = attack_sample(&model, &sample, &mim, 0).unwrap();
        // sign(grad / ||grad||_1) == sign(grad), step for step.
        assert_eq!(a.adversarial_features, b.adversarial_features);
    }

    #[test]
    fn pgd_degenerate_reduces_to_bim() {
        let model = toy_model();
        let sample = toy_sample();
        let bim = AttackConfig::with_step(AttackMethod::Bim, AttackSpace::Additive, 3, 0.05);
        let mut pgd = AttackConfig::with_step(AttackMethod::Pgd, AttackSpace::Additive, 3, 0.05);
        pgd.epsilon = 1e6; // ball projection inert
        pgd.pgd_start_radius = Some(0.0);
        pgd.pgd_restarts = 1;
        let a = attack_sample(&model, &sample, &bim, 0).unwrap();
        let b = attack_sample(&model, &sample, &pgd, 0).unwrap();
        assert_eq!(a.adversarial_features, b.adversarial_features);
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            assert_eq!(ra.pred_class, rb.pred_class);
            assert_abs_diff_eq!(ra.fidelity, rb.fidelity, epsilon = 1e-15);
        }
    }

    #[test]
    fn ball_projection_clips_oversized_step() {
        let center = vec![1.0, 2.0, 3.0];
        let mut x = vec![1.0, 2.0, 3.0 + 0.2];
        project_to_ball(&mut x, &center, 0.1);
        let dist: f64 = x
            .iter()
            .zip(&center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert_abs_diff_eq!(dist, 0.1, epsilon = 1e-10);
    }

    #[test]
    fn functional_fgsm_respects_componentwise_bound() {
        let model = toy_model();
        let cfg = AttackConfig::new(AttackMethod::Fgsm, AttackSpace::Functional, 0.07, 1);
        let out = attack_sample(&model, &toy_sample(), &cfg, 0).unwrap();
        let pert = out.omega.unwrap();
        assert!(pert.max_abs() <= 0.07 + 1e-15);
        assert_abs_diff_eq!(out.adversarial_state.norm(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn functional_bim_alpha_eps_over_t_stays_bounded() {
        let model = toy_model();
        let cfg = AttackConfig::new(AttackMethod::Bim, AttackSpace::Functional, 0.3, 5);
        let out = attack_sample(&model, &toy_sample(), &cfg, 0).unwrap();
        assert!(out.omega.unwrap().max_abs() <= 0.3 + 1e-12);
    }

    #[test]
    fn zoo_estimate_matches_white_box_gradient() {
        let model = toy_model();
        let sample = toy_sample();
        let x = pad_features(&sample.features, model.n_data);
        let wb = WhiteBox::new(&model, &sample, &AttackGoal::Untargeted);
        let analytic = wb.additive_grad(&x).unwrap();
        let h = 1e-3;
        let one_hot = sample.one_hot(model.m_output);
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let lp = loss(&forward_features(&model, &xp).unwrap(), &one_hot, 2);
            let lm = loss(&forward_features(&model, &xm).unwrap(), &one_hot, 2);
            let est = (lp - lm) / (2.0 * h);
            assert_abs_diff_eq!(est, analytic[i], epsilon = 1e-4);
        }
    }

    #[test]
    fn zoo_uses_only_probability_queries() {
        let model = toy_model();
        let counting = CountingOracle::new(&model);
        let cfg = AttackConfig::with_step(AttackMethod::Zoo, AttackSpace::Additive, 2, 0.05);
        let out = zoo_attack_oracle(&counting, &toy_sample(), &cfg, 3).unwrap();
        assert_eq!(out.queries, counting.count());
        // 2 iterations x 4 coords x 2 queries + 3 record queries
        assert_eq!(out.queries, 2 * 4 * 2 + 3);
    }

    #[test]
    fn zoo_zero_iteration_budget_leaves_input() {
        let model = toy_model();
        let mut cfg = AttackConfig::with_step(AttackMethod::Zoo, AttackSpace::Additive, 1, 0.0);
        cfg.step_size = Some(0.0);
        let sample = toy_sample();
        let out = attack_sample(&model, &sample, &cfg, 0).unwrap();
        assert_eq!(out.adversarial_features, sample.features);
        assert!(!out.perturbed);
    }

    #[test]
    fn targeted_success_means_target_class() {
        let model = toy_model();
        let sample = LabeledSample::new(vec![0.3, 0.8, 0.1, 0.2], 1);
        let cfg = AttackConfig::with_step(AttackMethod::Bim, AttackSpace::Additive, 10, 0.2)
            .targeted(0);
        let out = attack_sample(&model, &sample, &cfg, 0).unwrap();
        if out.success(&cfg.goal) {
            assert_eq!(out.final_record().pred_class, 0);
        }
    }

    #[test]
    fn evaluate_attack_filters_target_class_samples() {
        let model = toy_model();
        let samples = vec![
            LabeledSample::new(vec![0.9, 0.2, 0.4, 0.1], 0),
            LabeledSample::new(vec![0.1, 0.8, 0.3, 0.3], 1),
            LabeledSample::new(vec![0.2, 0.2, 0.9, 0.2], 0),
        ];
        let cfg = AttackConfig::with_step(AttackMethod::Bim, AttackSpace::Additive, 2, 0.05)
            .targeted(0);
        let report = evaluate_attack(&model, &samples, &cfg).unwrap();
        assert_eq!(report.n_samples, 1); // only the label-1 sample is eligible
    }

    #[test]
    fn adversarial_states_are_unit_norm() {
        let model = toy_model();
        let samples = vec![
            LabeledSample::new(vec![0.9, 0.2, 0.4, 0.1], 0),
            LabeledSample::new(vec![0.1, 0.8, 0.3, 0.3], 1),
        ];
        for method in [AttackMethod::Fgsm, AttackMethod::Bim, AttackMethod::Mim] {
            let cfg = AttackConfig::with_step(method, AttackSpace::Additive, if method == AttackMethod::Fgsm { 1 } else { 3 }, 0.1);
            let report = evaluate_attack(&model, &samples, &cfg).unwrap();
            for s in &report.samples {
                assert_abs_diff_eq!(s.adversarial_state.norm(), 1.0, epsilon = 1e-10);
            }
        }
    }
}
