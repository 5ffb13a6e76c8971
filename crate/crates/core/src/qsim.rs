//! Exact dense statevector and Hermitian-operator engine.
//!
//! Everything is dense complex `f64` over at most [`MAX_QUBITS`] qubits.
//! Basis labels follow the crate convention: qubit `i` is bit `i` of the
//! amplitude index, so `BitVec::to_index` addresses amplitudes directly.

pub use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::cnot::CnotCircuit;
use crate::gf2::BitVec;

/// Dense-representation qubit cap; every constructor enforces it.
pub const MAX_QUBITS: usize = 14;

/// Relative eigenvalue cutoff below which [`HermitianOperator::inv_sqrt_on_support`]
/// treats a direction as kernel.
pub const KERNEL_RELATIVE_TOL: f64 = 1e-10;

const NORM_TOL: f64 = 1e-12;
const HERMITICITY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum QsimError {
    #[error("{requested} qubits exceed the dense cap of {max} qubits")]
    TooManyQubits { requested: usize, max: usize },
    #[error("qubit widths differ: state has {state}, operand has {operand}")]
    WidthMismatch { state: usize, operand: usize },
    #[error("state norm {norm} is not 1 within {tol}")]
    NotNormalized { norm: f64, tol: f64 },
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("amplitude vector of length {got} is not a power of two ({expected} expected)")]
    BadDimension { got: usize, expected: usize },
    #[error("qubit index {0} out of range")]
    BadQubit(usize),
}

/// Measurement basis for single-shot and enumerated readouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Basis {
    Z,
    X,
}

/// A pure state of `n` qubits as `2^n` complex amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// The all-zeros computational basis state.
    pub fn zero_state(n: usize) -> Result<Self, QsimError> {
        check_width(n)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    /// The computational basis state labeled by `label`.
    pub fn basis_state(label: &BitVec) -> Result<Self, QsimError> {
        let mut state = Self::zero_state(label.len())?;
        state.amps[0] = Complex64::new(0.0, 0.0);
        state.amps[label.to_index()] = Complex64::new(1.0, 0.0);
        Ok(state)
    }

    /// Wraps raw amplitudes, requiring unit norm within 1e-12.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, QsimError> {
        let n = amps.len().trailing_zeros() as usize;
        if amps.len() != (1 << n) {
            return Err(QsimError::BadDimension { got: amps.len(), expected: 1 << n });
        }
        check_width(n)?;
        let state = Self { n, amps };
        let norm = state.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(QsimError::NotNormalized { norm, tol: NORM_TOL });
        }
        Ok(state)
    }

    /// Wraps and rescales raw amplitudes to unit norm.
    pub fn from_amplitudes_normalized(mut amps: Vec<Complex64>) -> Result<Self, QsimError> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        assert!(norm > 0.0, "cannot normalize the zero vector");
        for a in &mut amps {
            *a /= norm;
        }
        Self::from_amplitudes(amps)
    }

    /// A Haar-ish random state: iid complex Gaussian amplitudes, normalized.
    pub fn random(n: usize, rng: &mut impl Rng) -> Result<Self, QsimError> {
        check_width(n)?;
        let amps: Vec<Complex64> = (0..1usize << n)
            .map(|_| Complex64::new(gaussian(rng), gaussian(rng)))
            .collect();
        Self::from_amplitudes_normalized(amps)
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        assert_eq!(self.n, other.n, "inner product width mismatch");
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Tensor product with `other` occupying the higher qubit indices.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector, QsimError> {
        check_width(self.n + other.n)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << (self.n + other.n)];
        for (hi, b) in other.amps.iter().enumerate() {
            if b.norm_sqr() == 0.0 {
                continue;
            }
            for (lo, a) in self.amps.iter().enumerate() {
                amps[(hi << self.n) | lo] = a * b;
            }
        }
        Ok(StateVector { n: self.n + other.n, amps })
    }

    /// Applies a CNOT circuit gate by gate.
    pub fn apply_circuit(&self, circuit: &CnotCircuit) -> Result<StateVector, QsimError> {
        if circuit.width() != self.n {
            return Err(QsimError::WidthMismatch { state: self.n, operand: circuit.width() });
        }
        let mut amps = self.amps.clone();
        for &(c, t) in circuit.gates() {
            let cbit = 1usize << c;
            let tbit = 1usize << t;
            for k in 0..amps.len() {
                if k & cbit != 0 && k & tbit == 0 {
                    amps.swap(k, k | tbit);
                }
            }
        }
        Ok(StateVector { n: self.n, amps })
    }

    /// Applies the Pauli string `axis^{mask}`.
    pub fn apply_pauli(&self, axis: Basis, mask: &BitVec) -> Result<StateVector, QsimError> {
        if mask.len() != self.n {
            return Err(QsimError::WidthMismatch { state: self.n, operand: mask.len() });
        }
        let m = mask.to_index();
        let mut amps = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        match axis {
            Basis::X => {
                for (k, a) in self.amps.iter().enumerate() {
                    amps[k ^ m] = *a;
                }
            }
            Basis::Z => {
                for (k, a) in self.amps.iter().enumerate() {
                    let sign = if ((k & m).count_ones()) % 2 == 1 { -1.0 } else { 1.0 };
                    amps[k] = a * sign;
                }
            }
        }
        Ok(StateVector { n: self.n, amps })
    }

    /// Applies a Hadamard to each listed qubit.
    pub fn apply_hadamards(&self, qubits: &[usize]) -> Result<StateVector, QsimError> {
        let mut amps = self.amps.clone();
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        for &q in qubits {
            if q >= self.n {
                return Err(QsimError::BadQubit(q));
            }
            let bit = 1usize << q;
            for k in 0..amps.len() {
                if k & bit == 0 {
                    let lo = amps[k];
                    let hi = amps[k | bit];
                    amps[k] = (lo + hi) * inv_sqrt2;
                    amps[k | bit] = (lo - hi) * inv_sqrt2;
                }
            }
        }
        Ok(StateVector { n: self.n, amps })
    }

    /// Samples a measurement of `qubits` in `basis` (Born rule), returning the
    /// outcome, its probability, and the collapsed full-width post state.
    pub fn measure(
        &self,
        basis: Basis,
        qubits: &[usize],
        rng: &mut impl Rng,
    ) -> Result<MeasurementRecord, QsimError> {
        let work = match basis {
            Basis::Z => self.clone(),
            Basis::X => self.apply_hadamards(qubits)?,
        };
        let probs = work.outcome_probabilities(qubits)?;
        let draw: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = probs.len() - 1;
        for (o, &p) in probs.iter().enumerate() {
            acc += p;
            if draw < acc {
                chosen = o;
                break;
            }
        }
        let probability = probs[chosen];
        let collapsed = work.collapse(qubits, chosen, probability)?;
        let post_state = match basis {
            Basis::Z => collapsed,
            Basis::X => collapsed.apply_hadamards(qubits)?,
        };
        let outcome = outcome_bits(chosen, qubits.len());
        Ok(MeasurementRecord { outcome, probability, post_state })
    }

    /// Enumerates every outcome of measuring `qubits` in `basis` with its exact
    /// probability and collapsed post state. Zero-probability branches are
    /// dropped.
    pub fn measurement_distribution(
        &self,
        basis: Basis,
        qubits: &[usize],
    ) -> Result<Vec<(BitVec, f64, StateVector)>, QsimError> {
        let work = match basis {
            Basis::Z => self.clone(),
            Basis::X => self.apply_hadamards(qubits)?,
        };
        let probs = work.outcome_probabilities(qubits)?;
        let mut out = Vec::new();
        for (o, &p) in probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let collapsed = work.collapse(qubits, o, p)?;
            let post = match basis {
                Basis::Z => collapsed,
                Basis::X => collapsed.apply_hadamards(qubits)?,
            };
            out.push((outcome_bits(o, qubits.len()), p, post));
        }
        Ok(out)
    }

    /// Projects `qubits` onto the Z-basis outcome `value` and removes them,
    /// returning the branch probability and the normalized reduced state.
    /// A zero-probability branch returns probability 0 and an unusable state.
    pub fn project_and_discard(
        &self,
        qubits: &[usize],
        value: &BitVec,
    ) -> Result<(f64, StateVector), QsimError> {
        assert_eq!(qubits.len(), value.len(), "outcome length mismatch");
        for &q in qubits {
            if q >= self.n {
                return Err(QsimError::BadQubit(q));
            }
        }
        let kept: Vec<usize> = (0..self.n).filter(|q| !qubits.contains(q)).collect();
        let fixed: usize = qubits
            .iter()
            .enumerate()
            .filter(|(j, _)| value.get(*j))
            .map(|(_, &q)| 1usize << q)
            .sum();
        let mask: usize = qubits.iter().map(|&q| 1usize << q).sum();
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << kept.len()];
        let mut prob = 0.0;
        for (r, amp) in amps.iter_mut().enumerate() {
            let mut full = fixed;
            for (j, &q) in kept.iter().enumerate() {
                if (r >> j) & 1 == 1 {
                    full |= 1 << q;
                }
            }
            debug_assert_eq!(full & mask, fixed);
            *amp = self.amps[full];
            prob += amp.norm_sqr();
        }
        if prob > 0.0 {
            let scale = prob.sqrt();
            for a in &mut amps {
                *a /= scale;
            }
        }
        Ok((prob, StateVector { n: kept.len(), amps }))
    }

    /// `<psi|sigma|psi>` for a Hermitian `sigma`; real by construction.
    pub fn fidelity(&self, sigma: &HermitianOperator) -> Result<f64, QsimError> {
        if sigma.dim() != self.dim() {
            return Err(QsimError::WidthMismatch { state: self.dim(), operand: sigma.dim() });
        }
        let applied = sigma.apply(&self.amps);
        let value: Complex64 = self
            .amps
            .iter()
            .zip(&applied)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(value.re)
    }

    fn outcome_probabilities(&self, qubits: &[usize]) -> Result<Vec<f64>, QsimError> {
        for &q in qubits {
            if q >= self.n {
                return Err(QsimError::BadQubit(q));
            }
        }
        let mut probs = vec![0.0; 1 << qubits.len()];
        for (k, a) in self.amps.iter().enumerate() {
            let mut o = 0usize;
            for (j, &q) in qubits.iter().enumerate() {
                o |= ((k >> q) & 1) << j;
            }
            probs[o] += a.norm_sqr();
        }
        Ok(probs)
    }

    fn collapse(&self, qubits: &[usize], outcome: usize, prob: f64) -> Result<StateVector, QsimError> {
        let scale = prob.sqrt();
        let mut amps = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (k, a) in self.amps.iter().enumerate() {
            let mut o = 0usize;
            for (j, &q) in qubits.iter().enumerate() {
                o |= ((k >> q) & 1) << j;
            }
            if o == outcome {
                amps[k] = a / scale;
            }
        }
        Ok(StateVector { n: self.n, amps })
    }
}

fn outcome_bits(outcome: usize, len: usize) -> BitVec {
    BitVec::from_index(len, outcome)
}

fn check_width(n: usize) -> Result<(), QsimError> {
    if n > MAX_QUBITS {
        return Err(QsimError::TooManyQubits { requested: n, max: MAX_QUBITS });
    }
    Ok(())
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller; uniform draws are in (0, 1]
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// One sampled measurement: outcome bits, Born probability, collapsed state.
#[derive(Clone, Debug)]
pub struct MeasurementRecord {
    pub outcome: BitVec,
    pub probability: f64,
    pub post_state: StateVector,
}

/// A dense Hermitian matrix (row-major storage).
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    dim: usize,
    data: Vec<Complex64>,
}

impl HermitianOperator {
    /// Wraps a row-major matrix, verifying Hermiticity within 1e-12.
    pub fn from_matrix(dim: usize, data: Vec<Complex64>) -> Result<Self, QsimError> {
        assert_eq!(data.len(), dim * dim, "matrix data length mismatch");
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in i..dim {
                let diff = (data[i * dim + j] - data[j * dim + i].conj()).norm();
                worst = worst.max(diff);
            }
        }
        if worst > HERMITICITY_TOL {
            return Err(QsimError::NotHermitian(worst));
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![Complex64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut op = Self::zeros(dim);
        for i in 0..dim {
            op.data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        op
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let mut op = Self::zeros(entries.len());
        for (i, &e) in entries.iter().enumerate() {
            op.data[i * entries.len() + i] = Complex64::new(e, 0.0);
        }
        op
    }

    /// The projector-style outer product `|v><v|`.
    pub fn outer(v: &[Complex64]) -> Self {
        let dim = v.len();
        let mut data = Vec::with_capacity(dim * dim);
        for a in v {
            for b in v {
                data.push(a * b.conj());
            }
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn add_assign(&mut self, other: &HermitianOperator) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sub(&self, other: &HermitianOperator) -> HermitianOperator {
        assert_eq!(self.dim, other.dim);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        HermitianOperator { dim: self.dim, data }
    }

    pub fn scale(&self, factor: f64) -> HermitianOperator {
        let data = self.data.iter().map(|a| a * factor).collect();
        HermitianOperator { dim: self.dim, data }
    }

    /// Plain matrix product (not Hermitian in general; used for residuals).
    pub fn matmul(&self, other: &HermitianOperator) -> HermitianOperator {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut data = vec![Complex64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for k in 0..d {
                let aik = self.data[i * d + k];
                if aik.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..d {
                    data[i * d + j] += aik * other.data[k * d + j];
                }
            }
        }
        HermitianOperator { dim: d, data }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        let d = self.dim;
        let mut out = vec![Complex64::new(0.0, 0.0); d];
        for (i, o) in out.iter_mut().enumerate() {
            for (j, x) in v.iter().enumerate() {
                *o += self.data[i * d + j] * x;
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).sum()
    }

    /// Tensor product `self (lower qubit indices) x other (higher indices)`.
    pub fn tensor(&self, other: &HermitianOperator) -> HermitianOperator {
        let d1 = self.dim;
        let d2 = other.dim;
        let d = d1 * d2;
        let mut data = vec![Complex64::new(0.0, 0.0); d * d];
        for i2 in 0..d2 {
            for j2 in 0..d2 {
                let b = other.data[i2 * d2 + j2];
                if b.norm_sqr() == 0.0 {
                    continue;
                }
                for i1 in 0..d1 {
                    for j1 in 0..d1 {
                        data[(i2 * d1 + i1) * d + (j2 * d1 + j1)] = b * self.data[i1 * d1 + j1];
                    }
                }
            }
        }
        HermitianOperator { dim: d, data }
    }

    /// n-fold tensor power.
    pub fn tensor_power(&self, n: usize) -> HermitianOperator {
        let mut acc = HermitianOperator::identity(1);
        for _ in 0..n {
            acc = acc.tensor(self);
        }
        acc
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &HermitianOperator) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Eigendecomposition by cyclic complex Jacobi rotations.
    ///
    /// Returns eigenvalues in descending order with matching orthonormal
    /// eigenvectors; reconstruction error stays below 1e-10 for the dimensions
    /// this crate uses (<= 2^12).
    pub fn eig_hermitian(&self) -> (Vec<f64>, Vec<Vec<Complex64>>) {
        let d = self.dim;
        let mut a = self.data.clone();
        let mut v = HermitianOperator::identity(d).data;
        let scale = self.max_abs_entry().max(1.0);
        let tol = 1e-15 * scale;
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for p in 0..d {
                for q in p + 1..d {
                    off = off.max(a[p * d + q].norm());
                }
            }
            if off <= tol {
                break;
            }
            for p in 0..d {
                for q in p + 1..d {
                    let apq = a[p * d + q];
                    let r = apq.norm();
                    if r <= tol * 1e-2 {
                        continue;
                    }
                    let phase = apq / r;
                    let app = a[p * d + p].re;
                    let aqq = a[q * d + q].re;
                    let theta = (app - aqq) / (2.0 * r);
                    let t = {
                        let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                        -sign / (theta.abs() + (theta * theta + 1.0).sqrt())
                    };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    // G = [[c, s], [-s e^{-i phi}, c e^{-i phi}]] on (p, q)
                    let g_pp = Complex64::new(c, 0.0);
                    let g_pq = Complex64::new(s, 0.0);
                    let g_qp = -s * phase.conj();
                    let g_qq = c * phase.conj();
                    // columns: A <- A G, V <- V G
                    for i in 0..d {
                        let aip = a[i * d + p];
                        let aiq = a[i * d + q];
                        a[i * d + p] = aip * g_pp + aiq * g_qp;
                        a[i * d + q] = aip * g_pq + aiq * g_qq;
                        let vip = v[i * d + p];
                        let viq = v[i * d + q];
                        v[i * d + p] = vip * g_pp + viq * g_qp;
                        v[i * d + q] = vip * g_pq + viq * g_qq;
                    }
                    // rows: A <- G^dagger A
                    for j in 0..d {
                        let apj = a[p * d + j];
                        let aqj = a[q * d + j];
                        a[p * d + j] = g_pp.conj() * apj + g_qp.conj() * aqj;
                        a[q * d + j] = g_pq.conj() * apj + g_qq.conj() * aqj;
                    }
                }
            }
        }
        let mut pairs: Vec<(f64, Vec<Complex64>)> = (0..d)
            .map(|i| {
                let val = a[i * d + i].re;
                let vec: Vec<Complex64> = (0..d).map(|r| v[r * d + i]).collect();
                (val, vec)
            })
            .collect();
        pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
        let values = pairs.iter().map(|p| p.0).collect();
        let vectors = pairs.into_iter().map(|p| p.1).collect();
        (values, vectors)
    }

    /// Inverse square root on the support of a PSD operator.
    ///
    /// Eigenvalues below `KERNEL_RELATIVE_TOL` times the largest are treated
    /// as kernel, so `B * A * B` is the projector onto `A`'s support.
    pub fn inv_sqrt_on_support(&self) -> HermitianOperator {
        let (values, vectors) = self.eig_hermitian();
        let lambda_max = values.first().copied().unwrap_or(0.0).max(0.0);
        let cutoff = lambda_max * KERNEL_RELATIVE_TOL;
        let mut out = HermitianOperator::zeros(self.dim);
        for (val, vec) in values.iter().zip(&vectors) {
            if *val > cutoff && *val > 0.0 {
                let w = val.powf(-0.5);
                let term = HermitianOperator::outer(vec).scale(w);
                out.add_assign(&term);
            }
        }
        out
    }

    /// Projector onto the support of a PSD operator (same cutoff rule as
    /// [`Self::inv_sqrt_on_support`]).
    pub fn support_projector(&self) -> HermitianOperator {
        let (values, vectors) = self.eig_hermitian();
        let lambda_max = values.first().copied().unwrap_or(0.0).max(0.0);
        let cutoff = lambda_max * KERNEL_RELATIVE_TOL;
        let mut out = HermitianOperator::zeros(self.dim);
        for (val, vec) in values.iter().zip(&vectors) {
            if *val > cutoff && *val > 0.0 {
                out.add_assign(&HermitianOperator::outer(vec));
            }
        }
        out
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let (values, _) = self.eig_hermitian();
        values.last().copied().unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn uniform(rng: &mut ChaCha12Rng) -> f64 {
        rand::Rng::gen::<f64>(rng)
    }

    fn random_hermitian(dim: usize, rng: &mut ChaCha12Rng) -> HermitianOperator {
        let mut op = HermitianOperator::zeros(dim);
        for i in 0..dim {
            op.set(i, i, c(uniform(rng) * 2.0 - 1.0, 0.0));
            for j in i + 1..dim {
                let z = c(uniform(rng) - 0.5, uniform(rng) - 0.5);
                op.set(i, j, z);
                op.set(j, i, z.conj());
            }
        }
        op
    }

    #[test]
    fn cnot_on_basis_states() {
        let mut circuit = CnotCircuit::new(2);
        circuit.push(0, 1).unwrap();
        let s10 = StateVector::basis_state(&"10".parse().unwrap()).unwrap();
        let out = s10.apply_circuit(&circuit).unwrap();
        assert_eq!(out, StateVector::basis_state(&"11".parse().unwrap()).unwrap());
        let s00 = StateVector::basis_state(&"00".parse().unwrap()).unwrap();
        assert_eq!(s00.apply_circuit(&circuit).unwrap(), s00);
    }

    #[test]
    fn synthesized_circuit_permutes_all_labels() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let m = crate::gf2::random_full_rank(4, 4, &mut rng);
        let circuit = crate::cnot::synthesize(&m).unwrap();
        for idx in 0..16usize {
            let x = BitVec::from_index(4, idx);
            let expect = StateVector::basis_state(&m.mul_vec(&x).unwrap()).unwrap();
            let got = StateVector::basis_state(&x).unwrap().apply_circuit(&circuit).unwrap();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn pauli_actions() {
        let n = 2;
        let zero_mask = BitVec::zeros(n);
        let plus = StateVector::zero_state(n).unwrap().apply_hadamards(&[0, 1]).unwrap();
        assert_eq!(plus.apply_pauli(Basis::Z, &zero_mask).unwrap(), plus);

        let s00 = StateVector::zero_state(n).unwrap();
        let flipped = s00.apply_pauli(Basis::X, &"11".parse().unwrap()).unwrap();
        assert_eq!(flipped, StateVector::basis_state(&"11".parse().unwrap()).unwrap());

        // Z^{10} turns |+,+> into |-,+>
        let z10 = plus.apply_pauli(Basis::Z, &"10".parse().unwrap()).unwrap();
        let minus_plus = {
            let s = StateVector::basis_state(&"10".parse().unwrap()).unwrap();
            s.apply_hadamards(&[0, 1]).unwrap()
        };
        assert!((z10.inner(&minus_plus).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn x_basis_measurement_of_plus_is_deterministic() {
        let plus = StateVector::zero_state(1).unwrap().apply_hadamards(&[0]).unwrap();
        let dist = plus.measurement_distribution(Basis::X, &[0]).unwrap();
        assert_eq!(dist.len(), 1);
        assert_eq!(dist[0].0.to_string(), "0");
        assert!((dist[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn z_measurement_of_plus_is_uniform() {
        let plus = StateVector::zero_state(1).unwrap().apply_hadamards(&[0]).unwrap();
        let dist = plus.measurement_distribution(Basis::Z, &[0]).unwrap();
        assert_eq!(dist.len(), 2);
        for (_, p, _) in &dist {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn bell_pair_collapse() {
        // (|00> + |11>)/sqrt(2)
        let mut circuit = CnotCircuit::new(2);
        circuit.push(0, 1).unwrap();
        let bell = StateVector::zero_state(2)
            .unwrap()
            .apply_hadamards(&[0])
            .unwrap()
            .apply_circuit(&circuit)
            .unwrap();
        let dist = bell.measurement_distribution(Basis::Z, &[0]).unwrap();
        assert_eq!(dist.len(), 2);
        for (outcome, p, post) in dist {
            assert!((p - 0.5).abs() < 1e-12);
            let expect = if outcome.get(0) { "11" } else { "00" };
            let expect = StateVector::basis_state(&expect.parse().unwrap()).unwrap();
            assert!((post.inner(&expect).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn measure_is_seed_deterministic() {
        let mut rng_a = ChaCha12Rng::seed_from_u64(77);
        let mut rng_b = ChaCha12Rng::seed_from_u64(77);
        let state = StateVector::random(3, &mut ChaCha12Rng::seed_from_u64(5)).unwrap();
        let a = state.measure(Basis::Z, &[0, 2], &mut rng_a).unwrap();
        let b = state.measure(Basis::Z, &[0, 2], &mut rng_b).unwrap();
        assert_eq!(a.outcome, b.outcome);
        assert!((a.probability - b.probability).abs() < 1e-15);
    }

    #[test]
    fn project_and_discard_reduces_width() {
        let mut circuit = CnotCircuit::new(2);
        circuit.push(0, 1).unwrap();
        let bell = StateVector::zero_state(2)
            .unwrap()
            .apply_hadamards(&[0])
            .unwrap()
            .apply_circuit(&circuit)
            .unwrap();
        let (p, reduced) = bell.project_and_discard(&[1], &"1".parse().unwrap()).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert_eq!(reduced.num_qubits(), 1);
        let one = StateVector::basis_state(&"1".parse().unwrap()).unwrap();
        assert!((reduced.inner(&one).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_of_diagonal() {
        let op = HermitianOperator::diagonal(&[1.0, 0.0]);
        let (vals, _) = op.eig_hermitian();
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!(vals[1].abs() < 1e-14);
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for &dim in &[2usize, 5, 16, 64] {
            let op = random_hermitian(dim, &mut rng);
            let (vals, vecs) = op.eig_hermitian();
            let mut rebuilt = HermitianOperator::zeros(dim);
            for (val, vec) in vals.iter().zip(&vecs) {
                rebuilt.add_assign(&HermitianOperator::outer(vec).scale(*val));
            }
            assert!(
                op.max_abs_diff(&rebuilt) <= 1e-10,
                "dim {dim}: reconstruction error {}",
                op.max_abs_diff(&rebuilt)
            );
        }
    }

    #[test]
    fn inv_sqrt_examples() {
        let id = HermitianOperator::identity(4);
        assert!(id.inv_sqrt_on_support().max_abs_diff(&id) < 1e-12);

        let op = HermitianOperator::diagonal(&[4.0, 0.0]);
        let expect = HermitianOperator::diagonal(&[0.5, 0.0]);
        assert!(op.inv_sqrt_on_support().max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn inv_sqrt_support_identity_low_rank() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        // random PSD of rank 3 on dim 8
        let dim = 8;
        let mut a = HermitianOperator::zeros(dim);
        for _ in 0..3 {
            let v: Vec<Complex64> = (0..dim)
                .map(|_| c(uniform(&mut rng) - 0.5, uniform(&mut rng) - 0.5))
                .collect();
            a.add_assign(&HermitianOperator::outer(&v));
        }
        let b = a.inv_sqrt_on_support();
        let bab = b.matmul(&a).matmul(&b);
        let support = a.support_projector();
        assert!(bab.max_abs_diff(&support) < 1e-9);
        // idempotence and commutation
        assert!(bab.matmul(&bab).max_abs_diff(&bab) < 1e-9);
        let ab = a.matmul(&b);
        let ba = b.matmul(&a);
        assert!(ab.max_abs_diff(&ba) < 1e-9);
    }

    #[test]
    fn fidelity_examples() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let psi = StateVector::random(3, &mut rng).unwrap();
        let proj = HermitianOperator::outer(psi.amplitudes());
        assert!((psi.fidelity(&proj).unwrap() - 1.0).abs() < 1e-12);

        let zero = StateVector::zero_state(1).unwrap();
        let one = StateVector::basis_state(&"1".parse().unwrap()).unwrap();
        let proj_one = HermitianOperator::outer(one.amplitudes());
        assert!(zero.fidelity(&proj_one).unwrap().abs() < 1e-15);

        let mixed = HermitianOperator::diagonal(&[0.5, 0.5]);
        assert!((zero.fidelity(&mixed).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn qubit_cap_enforced() {
        assert!(matches!(
            StateVector::zero_state(MAX_QUBITS + 1),
            Err(QsimError::TooManyQubits { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn circuits_and_paulis_preserve_norm(seed in 0u64..500) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let n = 1 + (seed as usize % 5);
            let state = StateVector::random(n, &mut rng).unwrap();
            let mut circuit = CnotCircuit::new(n.max(2));
            if n >= 2 {
                circuit.push(0, 1).unwrap();
                let out = state.apply_circuit(&circuit).unwrap();
                prop_assert!((out.norm() - 1.0).abs() < 1e-12);
            }
            let mask = BitVec::random(n, &mut rng);
            let z = state.apply_pauli(Basis::Z, &mask).unwrap();
            let x = state.apply_pauli(Basis::X, &mask).unwrap();
            prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            prop_assert!((x.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn measurement_probabilities_sum_to_one(seed in 0u64..200) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let n = 2 + (seed as usize % 4);
            let state = StateVector::random(n, &mut rng).unwrap();
            let qubits: Vec<usize> = (0..n).filter(|q| q % 2 == 0).collect();
            for basis in [Basis::Z, Basis::X] {
                let dist = state.measurement_distribution(basis, &qubits).unwrap();
                let total: f64 = dist.iter().map(|(_, p, _)| p).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }
}
