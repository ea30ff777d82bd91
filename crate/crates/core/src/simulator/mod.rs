//! Dense state-vector engine.
//!
//! States live in the computational basis with qubit 0 as the most
//! significant bit of the index, so qubit `q` of an `n`-qubit register maps
//! to bit `n - 1 - q`. Gates are applied in place over strided amplitude
//! pairs; no explicit 2^n x 2^n matrices are ever built. Rotation gates use
//! the convention `R_a(theta) = exp(-i * theta * sigma_a / 2)`.
//!
//! All operations are pure functions of their inputs and safe to call from a
//! parallel map over samples.

mod adjoint;

pub use adjoint::{input_gradient, tape_gradient, TapeGradient};

use crate::error::{Error, Result};
use num_complex::Complex64;

pub const NORM_TOL: f64 = 1e-10;

/// A pure quantum state of `n_qubits` qubits: 2^n complex amplitudes with
/// unit l2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// |0...0>
    pub fn zero_state(n_qubits: usize) -> Self {
        assert!(n_qubits >= 1, "state needs at least one qubit");
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        StateVector { n_qubits, amps }
    }

    /// Computational basis state |index>.
    pub fn basis_state(n_qubits: usize, index: usize) -> Self {
        assert!(index < (1 << n_qubits));
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[index] = Complex64::new(1.0, 0.0);
        StateVector { n_qubits, amps }
    }

    /// Build from amplitudes that must already be unit-norm (within `NORM_TOL`).
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let n_qubits = amps.len().trailing_zeros() as usize;
        if amps.len() < 2 || amps.len() != (1 << n_qubits) {
            return Err(Error::config(format!(
                "amplitude vector length {} is not a power of two >= 2",
                amps.len()
            )));
        }
        let state = StateVector { n_qubits, amps };
        let norm = state.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::input(format!(
                "state norm {norm} deviates from 1 by more than {NORM_TOL}"
            )));
        }
        Ok(state)
    }

    /// Build from an arbitrary nonzero vector, normalizing it.
    pub fn from_unnormalized(amps: Vec<Complex64>) -> Result<Self> {
        let n_qubits = amps.len().trailing_zeros() as usize;
        if amps.len() < 2 || amps.len() != (1 << n_qubits) {
            return Err(Error::config(format!(
                "amplitude vector length {} is not a power of two >= 2",
                amps.len()
            )));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::input("cannot normalize the zero vector"));
        }
        let amps = amps.into_iter().map(|a| a / norm).collect();
        Ok(StateVector { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// <self|other>
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::input(format!(
                "qubit count mismatch: {} vs {}",
                self.n_qubits, other.n_qubits
            )));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `self (x) |1...1>` on `m` fresh output qubits appended as the least
    /// significant bits.
    pub fn tensor_output_register(&self, m_output: usize) -> StateVector {
        let ones = (1usize << m_output) - 1;
        let mut amps = vec![Complex64::new(0.0, 0.0); self.amps.len() << m_output];
        for (i, a) in self.amps.iter().enumerate() {
            amps[(i << m_output) | ones] = *a;
        }
        StateVector {
            n_qubits: self.n_qubits + m_output,
            amps,
        }
    }
}

/// Circuit gates: Z and X rotations plus CNOT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Rz { qubit: usize, angle: f64 },
    Rx { qubit: usize, angle: f64 },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        match *self {
            Gate::Rz { qubit, angle } | Gate::Rx { qubit, angle } => {
                if qubit >= n_qubits {
                    return Err(Error::config(format!(
                        "gate qubit {qubit} out of range for {n_qubits} qubits"
                    )));
                }
                if !angle.is_finite() {
                    return Err(Error::input(format!("non-finite rotation angle {angle}")));
                }
            }
            Gate::Cnot { control, target } => {
                if control >= n_qubits || target >= n_qubits {
                    return Err(Error::config(format!(
                        "CNOT qubits ({control},{target}) out of range for {n_qubits} qubits"
                    )));
                }
                if control == target {
                    return Err(Error::config("CNOT control equals target"));
                }
            }
        }
        Ok(())
    }

    /// Same gate with the rotation angle negated; CNOT is self-inverse.
    pub fn inverse(&self) -> Gate {
        match *self {
            Gate::Rz { qubit, angle } => Gate::Rz { qubit, angle: -angle },
            Gate::Rx { qubit, angle } => Gate::Rx { qubit, angle: -angle },
            g @ Gate::Cnot { .. } => g,
        }
    }

    pub fn is_parameterized(&self) -> bool {
        !matches!(self, Gate::Cnot { .. })
    }
}

#[inline]
fn bit_stride(n_qubits: usize, qubit: usize) -> usize {
    1 << (n_qubits - 1 - qubit)
}

pub(crate) fn apply_rz_mut(state: &mut StateVector, qubit: usize, angle: f64) {
    let stride = bit_stride(state.n_qubits, qubit);
    let dim = state.amps.len();
    let phase0 = Complex64::from_polar(1.0, -angle / 2.0);
    let phase1 = Complex64::from_polar(1.0, angle / 2.0);
    let amps = &mut state.amps;
    let mut base = 0;
    while base < dim {
        for i in base..base + stride {
            amps[i] *= phase0;
            amps[i + stride] *= phase1;
        }
        base += 2 * stride;
    }
}

pub(crate) fn apply_rx_mut(state: &mut StateVector, qubit: usize, angle: f64) {
    let stride = bit_stride(state.n_qubits, qubit);
    let dim = state.amps.len();
    let c = (angle / 2.0).cos();
    let s = (angle / 2.0).sin();
    let amps = &mut state.amps;
    let mut base = 0;
    while base < dim {
        for i in base..base + stride {
            let a0 = amps[i];
            let a1 = amps[i + stride];
            // [[c, -i s], [-i s, c]]
            amps[i] = Complex64::new(c * a0.re + s * a1.im, c * a0.im - s * a1.re);
            amps[i + stride] = Complex64::new(s * a0.im + c * a1.re, -s * a0.re + c * a1.im);
        }
        base += 2 * stride;
    }
}

pub(crate) fn apply_cnot_mut(state: &mut StateVector, control: usize, target: usize) {
    let cmask = bit_stride(state.n_qubits, control);
    let tmask = bit_stride(state.n_qubits, target);
    let dim = state.amps.len();
    let amps = &mut state.amps;
    for i in 0..dim {
        if (i & cmask) != 0 && (i & tmask) == 0 {
            amps.swap(i, i | tmask);
        }
    }
}

pub(crate) fn apply_gate_mut(state: &mut StateVector, gate: &Gate) {
    match *gate {
        Gate::Rz { qubit, angle } => apply_rz_mut(state, qubit, angle),
        Gate::Rx { qubit, angle } => apply_rx_mut(state, qubit, angle),
        Gate::Cnot { control, target } => apply_cnot_mut(state, control, target),
    }
}

/// Exact matrix action of `gate` on `state`.
pub fn apply_gate(state: &StateVector, gate: &Gate) -> Result<StateVector> {
    gate.validate(state.n_qubits)?;
    let mut out = state.clone();
    apply_gate_mut(&mut out, gate);
    Ok(out)
}

/// Apply a gate sequence front to back.
pub fn apply_tape(state: &StateVector, tape: &[Gate]) -> Result<StateVector> {
    for gate in tape {
        gate.validate(state.n_qubits)?;
    }
    let mut out = state.clone();
    for gate in tape {
        apply_gate_mut(&mut out, gate);
    }
    Ok(out)
}

pub(crate) fn apply_tape_mut(state: &mut StateVector, tape: &[Gate]) {
    for gate in tape {
        apply_gate_mut(state, gate);
    }
}

/// Pauli operators used by the depolarizing channel and the gradient engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

pub(crate) fn apply_pauli_mut(state: &mut StateVector, qubit: usize, pauli: Pauli) {
    if pauli == Pauli::I {
        return;
    }
    let stride = bit_stride(state.n_qubits, qubit);
    let dim = state.amps.len();
    let amps = &mut state.amps;
    let mut base = 0;
    while base < dim {
        for i in base..base + stride {
            let j = i + stride;
            match pauli {
                Pauli::X => amps.swap(i, j),
                Pauli::Y => {
                    let a0 = amps[i];
                    let a1 = amps[j];
                    amps[i] = Complex64::new(a1.im, -a1.re); // -i * a1
                    amps[j] = Complex64::new(-a0.im, a0.re); // +i * a0
                }
                Pauli::Z => amps[j] = -amps[j],
                Pauli::I => unreachable!(),
            }
        }
        base += 2 * stride;
    }
}

/// Measurement probabilities of the last `m_output` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputDistribution {
    probs: Vec<f64>,
}

impl OutputDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn m_output(&self) -> usize {
        self.probs.len().trailing_zeros() as usize
    }

    pub(crate) fn from_probs(probs: Vec<f64>) -> Self {
        OutputDistribution { probs }
    }
}

/// Marginal distribution over the last `m_output` qubits:
/// `probs[k] = sum over basis states whose last m bits equal k of |amp|^2`.
///
/// Equals the diagonal of the reduced density matrix of the output register.
pub fn output_probabilities(state: &StateVector, m_output: usize) -> Result<OutputDistribution> {
    if m_output > state.n_qubits {
        return Err(Error::config(format!(
            "m_output {} exceeds qubit count {}",
            m_output, state.n_qubits
        )));
    }
    let mask = (1usize << m_output) - 1;
    let mut probs = vec![0.0f64; 1 << m_output];
    for (i, a) in state.amps.iter().enumerate() {
        probs[i & mask] += a.norm_sqr();
    }
    Ok(OutputDistribution { probs })
}
