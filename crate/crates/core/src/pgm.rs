//! Pretty-good-measurement analysis of noisy processing.
//!
//! A phase-error pattern `x` is recorded in the shield system as the product
//! state `Z^x |phi_q>^{(x)N}` with `|phi_q> = sqrt(1-q)|0> + sqrt(q)|1>`. This
//! module builds the single-copy mixture `rho_hat`, its omega-typical
//! projector, the PGM that identifies patterns within a candidate set, the
//! averaged-over-hashing success probabilities, and the failure-probability
//! bounds together with the diagnostic inequality chain behind them.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::gf2::BitVec;
use crate::qsim::{HermitianOperator, QsimError, StateVector, KERNEL_RELATIVE_TOL};
use crate::rates::h;
use crate::rng::stream_rng;

/// Shield-state and typical-projector width cap (dense dimension 2^12).
pub const MAX_COPIES: usize = 12;

/// Slack used when deciding whether a weight shell sits inside the typical
/// window, so exact-boundary choices of omega are not lost to rounding.
const WINDOW_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("{what} = {value} outside the valid range {range}")]
    OutOfRange { what: &'static str, value: f64, range: &'static str },
    #[error("{requested} copies exceed the cap of {max}")]
    TooManyCopies { requested: usize, max: usize },
    #[error("candidate width {got} does not match the projector width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("string is not among the PGM candidates")]
    CandidateNotFound,
    #[error("exhaustive averaging caps: |T| <= 12, m <= 8, width <= 16 (got |T|={t_len}, m={m}, width={width})")]
    ExhaustiveTooLarge { t_len: usize, m: usize, width: usize },
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

/// The single-copy shield mixture `(1-e)|phi_q><phi_q| + e Z|phi_q><phi_q|Z`
/// with its closed-form spectrum.
#[derive(Clone, Debug)]
pub struct RhoHat {
    q: f64,
    e: f64,
    matrix: HermitianOperator,
    lambda0: f64,
    lambda1: f64,
    /// Real orthonormal eigenvectors, `basis[0]` for `lambda0`.
    basis: [[f64; 2]; 2],
}

/// Builds [`RhoHat`]. `q = 1/2` is admitted here (orthogonal-state limit)
/// even though protocol configurations exclude it.
pub fn rho_hat(q: f64, e: f64) -> Result<RhoHat, PgmError> {
    if !(0.0..1.0).contains(&q) {
        return Err(PgmError::OutOfRange { what: "q", value: q, range: "[0, 1)" });
    }
    if !(0.0..=0.5).contains(&e) {
        return Err(PgmError::OutOfRange { what: "e", value: e, range: "[0, 1/2]" });
    }
    let c = (1.0 - 2.0 * e) * (q * (1.0 - q)).sqrt();
    let matrix = HermitianOperator::from_matrix(
        2,
        vec![
            Complex64::new(1.0 - q, 0.0),
            Complex64::new(c, 0.0),
            Complex64::new(c, 0.0),
            Complex64::new(q, 0.0),
        ],
    )
    .expect("rho_hat matrix is Hermitian by construction");
    // lambda1 = 1/2 - sqrt((1/2-q)^2 + (1-2e)^2 q(1-q)), evaluated in the
    // cancellation-free rational form
    let root = ((0.5 - q).powi(2) + (1.0 - 2.0 * e).powi(2) * q * (1.0 - q)).sqrt();
    let lambda1 = 4.0 * e * (1.0 - e) * q * (1.0 - q) / (0.5 + root);
    let lambda0 = 1.0 - lambda1;
    let a = 1.0 - q;
    let basis = if c.abs() > 1e-300 {
        let v0 = normalize2([c, lambda0 - a]);
        let v1 = [-v0[1], v0[0]];
        [v0, v1]
    } else if a >= q {
        [[1.0, 0.0], [0.0, 1.0]]
    } else {
        [[0.0, 1.0], [1.0, 0.0]]
    };
    Ok(RhoHat { q, e, matrix, lambda0, lambda1, basis })
}

fn normalize2(v: [f64; 2]) -> [f64; 2] {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    [v[0] / n, v[1] / n]
}

impl RhoHat {
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    pub fn matrix(&self) -> &HermitianOperator {
        &self.matrix
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn eigvec(&self, which: usize) -> [f64; 2] {
        self.basis[which]
    }

    /// Von Neumann entropy `S(rho_hat) = h(lambda1)` in bits.
    pub fn entropy(&self) -> f64 {
        h(self.lambda1)
    }
}

/// The shield state `Z^x |phi_q>^{(x)N}` as an explicit product state.
///
/// Overlaps obey `<x|y> = (1-2q)^{|x xor y|}`.
pub fn shield_state(x: &BitVec, q: f64) -> Result<StateVector, PgmError> {
    if x.len() > MAX_COPIES {
        return Err(PgmError::TooManyCopies { requested: x.len(), max: MAX_COPIES });
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(PgmError::OutOfRange { what: "q", value: q, range: "[0, 1]" });
    }
    let a0 = (1.0 - q).sqrt();
    let a1 = q.sqrt();
    let dim = 1usize << x.len();
    let mut amps = Vec::with_capacity(dim);
    for label in 0..dim {
        let mut amp = 1.0;
        for site in 0..x.len() {
            if (label >> site) & 1 == 0 {
                amp *= a0;
            } else {
                amp *= if x.get(site) { -a1 } else { a1 };
            }
        }
        amps.push(Complex64::new(amp, 0.0));
    }
    Ok(StateVector::from_amplitudes_normalized(amps)?)
}

/// Projector onto the omega-typical subspace of `rho^{(x)N}`: the span of
/// tensor-eigenbasis strings whose weight `|a|` satisfies
/// `||a| - N lambda1| <= N omega`.
#[derive(Clone, Debug)]
pub struct TypicalProjector {
    n_copies: usize,
    omega: f64,
    lambda1: f64,
    admitted: Vec<BitVec>,
    admitted_weights: Vec<usize>,
    basis: [[f64; 2]; 2],
}

pub fn typical_projector(rho: &RhoHat, n_copies: usize, omega: f64) -> Result<TypicalProjector, PgmError> {
    if n_copies > MAX_COPIES {
        return Err(PgmError::TooManyCopies { requested: n_copies, max: MAX_COPIES });
    }
    if omega < 0.0 {
        return Err(PgmError::OutOfRange { what: "omega", value: omega, range: "[0, inf)" });
    }
    let center = n_copies as f64 * rho.lambda1;
    let halfwidth = n_copies as f64 * omega + WINDOW_SLACK;
    let admitted_weights: Vec<usize> = (0..=n_copies)
        .filter(|&k| (k as f64 - center).abs() <= halfwidth)
        .collect();
    let mut admitted = Vec::new();
    for label in 0..1usize << n_copies {
        if admitted_weights.contains(&label.count_ones().try_into().unwrap()) {
            admitted.push(BitVec::from_index(n_copies, label));
        }
    }
    debug_assert!(
        typical_mass_deficit(rho, n_copies, omega) <= typical_mass_bound(n_copies, omega) + 1e-12,
        "Bernoulli tail bound violated"
    );
    Ok(TypicalProjector {
        n_copies,
        omega,
        lambda1: rho.lambda1,
        admitted,
        admitted_weights,
        basis: rho.basis,
    })
}

impl TypicalProjector {
    pub fn n_copies(&self) -> usize {
        self.n_copies
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn rank(&self) -> usize {
        self.admitted.len()
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn admitted_strings(&self) -> &[BitVec] {
        &self.admitted
    }

    /// Applies the projector to raw amplitudes: rotate into the tensor
    /// eigenbasis, keep the admitted weight shells, rotate back.
    pub fn apply(&self, amps: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(amps.len(), 1 << self.n_copies);
        let mut work = amps.to_vec();
        let v = self.basis;
        for site in 0..self.n_copies {
            // W^dagger with W = [v0 v1] as columns (real, so transpose)
            apply_site(&mut work, site, v[0][0], v[0][1], v[1][0], v[1][1]);
        }
        for (label, amp) in work.iter_mut().enumerate() {
            let weight = label.count_ones() as usize;
            if !self.admitted_weights.contains(&weight) {
                *amp = Complex64::new(0.0, 0.0);
            }
        }
        for site in 0..self.n_copies {
            apply_site(&mut work, site, v[0][0], v[1][0], v[0][1], v[1][1]);
        }
        work
    }

    /// Materializes the dense projector (cost 4^N; intended for N <= 10).
    pub fn matrix(&self) -> HermitianOperator {
        let dim = 1usize << self.n_copies;
        let mut op = HermitianOperator::zeros(dim);
        for col in 0..dim {
            let mut e = vec![Complex64::new(0.0, 0.0); dim];
            e[col] = Complex64::new(1.0, 0.0);
            let out = self.apply(&e);
            for (row, val) in out.into_iter().enumerate() {
                op.set(row, col, val);
            }
        }
        op
    }
}

/// Applies the real 2x2 matrix [[m00, m01], [m10, m11]] to one site.
fn apply_site(amps: &mut [Complex64], site: usize, m00: f64, m01: f64, m10: f64, m11: f64) {
    let bit = 1usize << site;
    for k in 0..amps.len() {
        if k & bit == 0 {
            let lo = amps[k];
            let hi = amps[k | bit];
            amps[k] = lo * m00 + hi * m01;
            amps[k | bit] = lo * m10 + hi * m11;
        }
    }
}

/// Exact `Tr(rho^{(x)N} (1 - P))` from the weight-shell spectrum; the dense
/// route must agree with this at small N.
pub fn typical_mass_deficit(rho: &RhoHat, n_copies: usize, omega: f64) -> f64 {
    let center = n_copies as f64 * rho.lambda1;
    let halfwidth = n_copies as f64 * omega + WINDOW_SLACK;
    (0..=n_copies)
        .filter(|&k| (k as f64 - center).abs() > halfwidth)
        .map(|k| {
            crate::gf2::binomial(n_copies, k) as f64
                * rho.lambda0.powi((n_copies - k) as i32)
                * rho.lambda1.powi(k as i32)
        })
        .sum()
}

/// The Bernoulli-tail bound `2^{1 - N omega^2}` the typical mass deficit must obey.
pub fn typical_mass_bound(n_copies: usize, omega: f64) -> f64 {
    2f64.powf(1.0 - n_copies as f64 * omega * omega)
}

/// The pretty good measurement over a candidate set.
///
/// Element `M_x` is `B P(P|x>) B` with `B = [sum_x P(P|x>)]^{-1/2}` taken on
/// the support; concretely `M_x = |w_x><w_x|` for `w_x = B P|x>`. The heavy
/// algebra runs in an orthonormal basis of `span{P|x>}`, which is exact and
/// keeps the cost polynomial in the candidate count.
pub struct PgmSet {
    rho: RhoHat,
    typical: TypicalProjector,
    candidates: Vec<BitVec>,
    /// Full shield states |x>.
    states: Vec<StateVector>,
    /// v_x = P|x>.
    projected: Vec<Vec<Complex64>>,
    /// Coordinates of v_x in the orthonormal basis of span{v_x}.
    coords: Vec<Vec<Complex64>>,
    /// Compressed S = sum v v^dagger and  B = S^{-1/2} on its support.
    s_compressed: HermitianOperator,
    b_compressed: HermitianOperator,
    /// w_x = B v_x in the full space.
    weighted: Vec<Vec<Complex64>>,
    support_rank: usize,
}

pub fn build_pgm(
    candidates: &[BitVec],
    rho: &RhoHat,
    typical: &TypicalProjector,
) -> Result<PgmSet, PgmError> {
    assert!(!candidates.is_empty(), "PGM needs at least one candidate");
    let n = typical.n_copies();
    for c in candidates {
        if c.len() != n {
            return Err(PgmError::WidthMismatch { expected: n, got: c.len() });
        }
    }
    let states: Vec<StateVector> = candidates
        .iter()
        .map(|x| shield_state(x, rho.q))
        .collect::<Result<_, _>>()?;
    let projected: Vec<Vec<Complex64>> = states
        .iter()
        .map(|s| typical.apply(s.amplitudes()))
        .collect();

    // modified Gram-Schmidt with one reorthogonalization pass
    let max_norm = projected.iter().map(|v| vec_norm(v)).fold(0.0, f64::max);
    let gs_tol = max_norm.max(1e-300) * 1e-10;
    let mut span_basis: Vec<Vec<Complex64>> = Vec::new();
    let mut coords: Vec<Vec<Complex64>> = Vec::new();
    for v in &projected {
        let mut resid = v.clone();
        let mut coord = vec![Complex64::new(0.0, 0.0); span_basis.len()];
        for _pass in 0..2 {
            for (i, qb) in span_basis.iter().enumerate() {
                let c = vec_inner(qb, &resid);
                coord[i] += c;
                vec_axpy(&mut resid, -c, qb);
            }
        }
        let norm = vec_norm(&resid);
        if norm > gs_tol {
            for a in &mut resid {
                *a /= norm;
            }
            span_basis.push(resid);
            coord.push(Complex64::new(norm, 0.0));
        }
        coords.push(coord);
    }
    let r = span_basis.len();
    for coord in &mut coords {
        coord.resize(r, Complex64::new(0.0, 0.0));
    }

    let mut s_compressed = HermitianOperator::zeros(r.max(1));
    if r > 0 {
        for coord in &coords {
            s_compressed.add_assign(&HermitianOperator::outer(coord));
        }
    }
    let b_compressed = s_compressed.inv_sqrt_on_support();
    let (eigs, _) = s_compressed.eig_hermitian();
    let lambda_max = eigs.first().copied().unwrap_or(0.0).max(0.0);
    let support_rank = eigs
        .iter()
        .filter(|&&v| v > lambda_max * KERNEL_RELATIVE_TOL && v > 0.0)
        .count()
        .min(r);

    let weighted: Vec<Vec<Complex64>> = coords
        .iter()
        .map(|coord| {
            if r == 0 {
                return vec![Complex64::new(0.0, 0.0); 1 << n];
            }
            let bc = b_compressed.apply(coord);
            let mut w = vec![Complex64::new(0.0, 0.0); 1 << n];
            for (j, qb) in span_basis.iter().enumerate() {
                vec_axpy(&mut w, bc[j], qb);
            }
            w
        })
        .collect();

    Ok(PgmSet {
        rho: rho.clone(),
        typical: typical.clone(),
        candidates: candidates.to_vec(),
        states,
        projected,
        coords,
        s_compressed,
        b_compressed,
        weighted,
        support_rank,
    })
}

impl PgmSet {
    pub fn candidates(&self) -> &[BitVec] {
        &self.candidates
    }

    pub fn rho(&self) -> &RhoHat {
        &self.rho
    }

    pub fn typical(&self) -> &TypicalProjector {
        &self.typical
    }

    pub fn support_rank(&self) -> usize {
        self.support_rank
    }

    /// True when `span{P|x>}` has lost dimensions relative to the candidate
    /// count; reported by every experiment, never silently tolerated.
    pub fn is_rank_deficient(&self) -> bool {
        self.support_rank < self.candidates.len()
    }

    fn index_of(&self, x: &BitVec) -> Result<usize, PgmError> {
        self.candidates
            .iter()
            .position(|c| c == x)
            .ok_or(PgmError::CandidateNotFound)
    }

    /// `<x| M_x |x>` for a candidate `x`.
    pub fn success_prob(&self, x: &BitVec) -> Result<f64, PgmError> {
        let i = self.index_of(x)?;
        let overlap = vec_inner(&self.weighted[i], self.states[i].amplitudes());
        Ok(overlap.norm_sqr())
    }

    /// Dense POVM element `M_x = |w_x><w_x|`.
    pub fn element(&self, i: usize) -> HermitianOperator {
        HermitianOperator::outer(&self.weighted[i])
    }

    /// Dense `sum_x M_x` (cost 4^N).
    pub fn sum_elements(&self) -> HermitianOperator {
        let dim = 1usize << self.typical.n_copies();
        let mut out = HermitianOperator::zeros(dim);
        for w in &self.weighted {
            out.add_assign(&HermitianOperator::outer(w));
        }
        out
    }

    /// Dense failure element `P - sum_x M_x` on the typical subspace.
    pub fn leftover(&self) -> HermitianOperator {
        self.typical.matrix().sub(&self.sum_elements())
    }

    /// `sum_x M_x` compressed to the span basis: `B S B` as an r x r matrix.
    /// Its spectrum equals the nonzero spectrum of the dense sum.
    pub fn sum_elements_compressed(&self) -> HermitianOperator {
        self.b_compressed
            .matmul(&self.s_compressed)
            .matmul(&self.b_compressed)
    }

    /// Support projector of S compressed to the span basis.
    pub fn support_projector_compressed(&self) -> HermitianOperator {
        self.s_compressed.support_projector()
    }

    /// Gram matrix entry `Gamma_{ij} = <x_i| P |x_j>` (real for these states).
    pub fn gamma(&self, i: usize, j: usize) -> f64 {
        vec_inner(&self.projected[i], &self.projected[j]).re
    }

    /// Square-root factor entry `Gamma^{1/2}_{ij} = <x_i| P B P |x_j>`.
    pub fn gamma_sqrt(&self, i: usize, j: usize) -> f64 {
        let bc = self.b_compressed.apply(&self.coords[j]);
        vec_inner(&self.coords[i], &bc).re
    }
}

fn vec_inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn vec_norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn vec_axpy(acc: &mut [Complex64], factor: Complex64, v: &[Complex64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += factor * b;
    }
}

/// How the hashing average enumerates hash draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum HashingMode {
    /// The canonical multiply-by-a-field-element family: for every
    /// `alpha in GF(2^w)` the map `d -> low m bits of alpha * d`. Survival of
    /// any fixed nonzero difference is exactly `2^{-m}`-distributed over the
    /// family, which is all the averaging argument uses.
    Exhaustive,
    /// Uniform iid `m x w` parity matrices, sampled.
    MonteCarlo { trials: usize },
}

/// Result of averaging the PGM success over random hashing draws.
#[derive(Clone, Debug, Serialize)]
pub struct HashingAverage {
    pub mean: f64,
    /// Standard error of the mean (Monte Carlo only).
    pub std_error: Option<f64>,
    pub draws: usize,
    pub distinct_survivor_sets: usize,
    /// Number of draws whose PGM instance was rank deficient.
    pub rank_deficient_draws: usize,
}

/// Averages `<x|M_x|x>` over hashing draws: the surviving candidate set
/// `Omega_m` always contains `true_x`, and every other member of `t_set`
/// survives iff its difference from `true_x` passes all `m` parity checks.
pub fn average_over_hashing(
    true_x: &BitVec,
    t_set: &[BitVec],
    m: usize,
    rho: &RhoHat,
    typical: &TypicalProjector,
    mode: HashingMode,
    seed: u64,
) -> Result<HashingAverage, PgmError> {
    let w = true_x.len();
    if w != typical.n_copies() {
        return Err(PgmError::WidthMismatch { expected: typical.n_copies(), got: w });
    }
    let others: Vec<&BitVec> = t_set.iter().filter(|y| *y != true_x).collect();
    let diffs: Vec<usize> = others.iter().map(|y| y.xor(true_x).to_index()).collect();

    let mut success_cache: BTreeMap<u64, (f64, bool)> = BTreeMap::new();
    let mut evaluate = |survivor_mask: u64| -> Result<(f64, bool), PgmError> {
        if let Some(&hit) = success_cache.get(&survivor_mask) {
            return Ok(hit);
        }
        let mut members = vec![true_x.clone()];
        for (i, y) in others.iter().enumerate() {
            if survivor_mask >> i & 1 == 1 {
                members.push((*y).clone());
            }
        }
        let pgm = build_pgm(&members, rho, typical)?;
        let value = (pgm.success_prob(true_x)?, pgm.is_rank_deficient());
        success_cache.insert(survivor_mask, value);
        Ok(value)
    };

    let mut total = 0.0;
    let mut total_sq = 0.0;
    let mut rank_deficient_draws = 0usize;
    let draws;
    match mode {
        HashingMode::Exhaustive => {
            if t_set.len() > 12 || m > 8 || w > 16 || m > w {
                return Err(PgmError::ExhaustiveTooLarge { t_len: t_set.len(), m, width: w });
            }
            let poly = smallest_irreducible(w);
            let m_mask: u32 = if m == 0 { 0 } else { (1u32 << m) - 1 };
            draws = 1usize << w;
            for alpha in 0..draws as u32 {
                let mut mask = 0u64;
                for (i, &d) in diffs.iter().enumerate() {
                    if gf_mul(alpha, d as u32, poly, w) & m_mask == 0 {
                        mask |= 1 << i;
                    }
                }
                let (p, deficient) = evaluate(mask)?;
                total += p;
                if deficient {
                    rank_deficient_draws += 1;
                }
            }
        }
        HashingMode::MonteCarlo { trials } => {
            draws = trials;
            let mut rng = stream_rng(seed, 0);
            for _ in 0..trials {
                let rows: Vec<usize> = (0..m)
                    .map(|_| BitVec::random(w, &mut rng).to_index())
                    .collect();
                let mut mask = 0u64;
                for (i, &d) in diffs.iter().enumerate() {
                    let survives = rows.iter().all(|&row| (row & d).count_ones() % 2 == 0);
                    if survives {
                        mask |= 1 << i;
                    }
                }
                let (p, deficient) = evaluate(mask)?;
                total += p;
                total_sq += p * p;
                if deficient {
                    rank_deficient_draws += 1;
                }
            }
        }
    }
    let mean = total / draws as f64;
    let std_error = match mode {
        HashingMode::Exhaustive => None,
        HashingMode::MonteCarlo { trials } => {
            let var = (total_sq / trials as f64 - mean * mean).max(0.0);
            Some((var / trials as f64).sqrt())
        }
    };
    Ok(HashingAverage {
        mean,
        std_error,
        draws,
        distinct_survivor_sets: success_cache.len(),
        rank_deficient_draws,
    })
}

/// A deterministic experiment instance for averaged-PGM studies: the true
/// pattern carries the typical weight `round(N e)`, and the other candidates
/// are seeded distinct draws within the sampling radius `floor(N (e + eps))`
/// of it.
pub fn experiment_candidates(
    n_copies: usize,
    e: f64,
    epsilon: f64,
    t_size: usize,
    seed: u64,
) -> (BitVec, Vec<BitVec>) {
    use rand::Rng;
    let weight = (n_copies as f64 * e).round() as usize;
    let mut true_x = BitVec::zeros(n_copies);
    for i in 0..weight.min(n_copies) {
        true_x.set(i, true);
    }
    let radius = ((n_copies as f64) * (e + epsilon)).floor().max(1.0) as usize;
    let radius = radius.min(n_copies);
    let mut rng = stream_rng(seed, 20);
    let mut t_set = vec![true_x.clone()];
    let mut guard = 0;
    while t_set.len() < t_size && guard < 10_000 {
        guard += 1;
        let mut candidate = true_x.clone();
        let flip_count = 1 + rng.gen_range(0..radius);
        for _ in 0..flip_count {
            let pos = rng.gen_range(0..n_copies);
            candidate.flip(pos);
        }
        if !t_set.contains(&candidate) && candidate.xor(&true_x).weight() <= radius {
            t_set.push(candidate);
        }
    }
    (true_x, t_set)
}

/// Carry-less product of two GF(2) polynomials.
fn clmul(a: u32, b: u32) -> u64 {
    let mut acc = 0u64;
    let mut i = 0;
    while b >> i != 0 {
        if (b >> i) & 1 == 1 {
            acc ^= (a as u64) << i;
        }
        i += 1;
        if i >= 32 {
            break;
        }
    }
    acc
}

fn poly_degree(p: u64) -> i32 {
    63 - p.leading_zeros() as i32
}

fn poly_mod(mut value: u64, modulus: u64) -> u64 {
    let md = poly_degree(modulus);
    while value != 0 && poly_degree(value) >= md {
        value ^= modulus << (poly_degree(value) - md);
    }
    value
}

/// Product in GF(2^w) with the given irreducible modulus.
fn gf_mul(a: u32, b: u32, modulus: u64, w: usize) -> u32 {
    debug_assert!(w <= 16);
    poly_mod(clmul(a, b), modulus) as u32
}

/// Lexicographically smallest irreducible polynomial of degree `w`, found by
/// trial division; canonical so that the exhaustive hash family is fixed.
fn smallest_irreducible(w: usize) -> u64 {
    assert!((1..=16).contains(&w));
    'candidates: for c in (1..1u64 << w).step_by(2) {
        let p = (1u64 << w) | c;
        for d in 1..=w / 2 {
            for q in (1u64 << d)..(1u64 << (d + 1)) {
                if poly_mod(p, q) == 0 {
                    continue 'candidates;
                }
            }
        }
        return p;
    }
    unreachable!("an irreducible polynomial exists for every degree")
}

/// Sign convention for the last term of the averaged-failure bound. The
/// printed form adds a failure contribution that must subtract; the corrected
/// form subtracts it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AvefailSign {
    Corrected,
    AsPrinted,
}

fn avefail_terms(n_copies: usize, m: usize, q: f64, e: f64, epsilon: f64, omega: f64) -> (f64, f64) {
    let n = n_copies as f64;
    let log_factor = if epsilon == 0.0 || e == 0.0 {
        // continuity limit: no deviation allowance, the weight-window factor drops
        0.0
    } else {
        epsilon * (((e - epsilon) / (1.0 - e + epsilon)) * (e / (1.0 - e))).log2()
    };
    let term1 = 6.0 * n * 2f64.powf(-n * (omega * omega + log_factor));
    let s_rho = rho_hat(q, e).expect("bound parameters in range").entropy();
    let exp3 = -h(e) + s_rho + m as f64 / n - epsilon - omega;
    let term3 = 2f64.powf(-n * exp3);
    (term1, term3)
}

/// Lower bound on the hashing-averaged PGM success probability
/// `E(<x|M_x|x>)`. Desk-scale parameters routinely make it negative
/// (vacuous); it is never clamped.
pub fn bound_avefail(
    n_copies: usize,
    m: usize,
    q: f64,
    e: f64,
    epsilon: f64,
    omega: f64,
    sign: AvefailSign,
) -> f64 {
    let (term1, term3) = avefail_terms(n_copies, m, q, e, epsilon, omega);
    match sign {
        AvefailSign::Corrected => 1.0 - term1 - term3,
        AvefailSign::AsPrinted => 1.0 - term1 + term3,
    }
}

/// The omega choice that makes the typicality exponent collapse to `delta`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TomegaChoice {
    pub radicand: f64,
    /// `sqrt(radicand)` when the radicand is nonnegative; `None` is reported
    /// rather than guessed around.
    pub omega: Option<f64>,
}

pub fn tomega(e: f64, epsilon: f64, delta: f64) -> TomegaChoice {
    let log_term = if epsilon == 0.0 {
        0.0
    } else {
        epsilon * (((1.0 - e + epsilon) / (e - epsilon)) * ((1.0 - e) / e)).log2()
    };
    let radicand = log_term + delta;
    let omega = (radicand >= 0.0).then(|| radicand.sqrt());
    TomegaChoice { radicand, omega }
}

/// The matching hashing-round count `m = N (h(e) - S(rho) + eps + omega + delta_m)`.
pub fn hashing_rounds(n_copies: usize, q: f64, e: f64, epsilon: f64, omega: f64, delta_m: f64) -> f64 {
    let s_rho = rho_hat(q, e).expect("bound parameters in range").entropy();
    n_copies as f64 * (h(e) - s_rho + epsilon + omega + delta_m)
}

/// Upper bound on the overall failure probability: the two averaged-PGM terms
/// plus the test-bit sampling tail with the explicit constant
/// [`crate::protocol::SAMPLING_CONSTANT`].
pub fn p_fail_bound(n_copies: usize, m: usize, q: f64, e: f64, epsilon: f64, omega: f64) -> f64 {
    let (term1, term3) = avefail_terms(n_copies, m, q, e, epsilon, omega);
    let n = n_copies as f64;
    let sampling = crate::protocol::SAMPLING_CONSTANT * n * 2f64.powf(-n * epsilon * epsilon);
    term1 + term3 + sampling
}

/// Fidelity bound `F >= 1 - p_fail`.
pub fn fidelity_bound(n_copies: usize, m: usize, q: f64, e: f64, epsilon: f64, omega: f64) -> f64 {
    1.0 - p_fail_bound(n_copies, m, q, e, epsilon, omega)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    Vacuous,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticsReport {
    pub candidates: usize,
    pub support_rank: usize,
    pub rank_deficient: bool,
    /// max |sum M - support projector| entry, and max eigenvalue of the sum
    /// (sub-completeness needs it <= 1 on the typical subspace).
    pub sum_vs_support_max_err: f64,
    pub sum_max_eigenvalue: f64,
    pub sub_completeness: CheckStatus,
    /// min over x of (G^{1/2}_xx)^2 - (3 G_xx - (G^2)_xx - 1).
    pub gamma_chain_min_slack: f64,
    pub gamma_chain: CheckStatus,
    /// Eq.-style typicality lower bound on <x|P|x> and the worst diagonal.
    pub typicalerror_bound: f64,
    pub typicalerror_min_diag: f64,
    pub typicalerror: CheckStatus,
    /// max |(G^{1/2})^2 - G| entry.
    pub gram_consistency_max_err: f64,
    pub gram_consistency: CheckStatus,
    /// Largest rho^{(x)N} eigenvalue inside the typical window vs 2^{-N(S - omega)}.
    pub restricted_eig_max: f64,
    pub restricted_eig_bound: f64,
    pub operator_bound: CheckStatus,
}

const DIAG_TOL: f64 = 1e-9;

/// Numerically verifies the inequality chain behind the averaged-failure
/// bound on a constructed PGM instance. Violations are reported findings,
/// not errors; bounds that are negative at desk scale are flagged vacuous.
pub fn appendix_diagnostics(pgm: &PgmSet, epsilon: f64) -> DiagnosticsReport {
    let k = pgm.candidates().len();
    let n = pgm.typical().n_copies();
    let nf = n as f64;
    let rho = pgm.rho();

    let sum_c = pgm.sum_elements_compressed();
    let support_c = pgm.support_projector_compressed();
    let sum_vs_support_max_err = sum_c.max_abs_diff(&support_c);
    let (sum_eigs, _) = sum_c.eig_hermitian();
    let sum_max_eigenvalue = sum_eigs.first().copied().unwrap_or(0.0);
    let sub_completeness = if sum_vs_support_max_err <= DIAG_TOL && sum_max_eigenvalue <= 1.0 + DIAG_TOL
    {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };

    let gamma: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| pgm.gamma(i, j)).collect())
        .collect();
    let gamma_sqrt: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| pgm.gamma_sqrt(i, j)).collect())
        .collect();

    let mut gamma_chain_min_slack = f64::INFINITY;
    for x in 0..k {
        let g_sq_xx: f64 = (0..k).map(|y| gamma[x][y] * gamma[y][x]).sum();
        let lhs = gamma_sqrt[x][x] * gamma_sqrt[x][x];
        let rhs = 3.0 * gamma[x][x] - g_sq_xx - 1.0;
        gamma_chain_min_slack = gamma_chain_min_slack.min(lhs - rhs);
        // intermediate step of the chain: y^2 >= 2y - 1
        let mid = 2.0 * gamma_sqrt[x][x] - 1.0;
        gamma_chain_min_slack = gamma_chain_min_slack.min(lhs - mid).min(mid - rhs);
    }
    let gamma_chain = if gamma_chain_min_slack >= -DIAG_TOL {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };

    let log_factor = if epsilon == 0.0 || rho.e() == 0.0 {
        0.0
    } else {
        epsilon
            * (((rho.e() - epsilon) / (1.0 - rho.e() + epsilon)) * (rho.e() / (1.0 - rho.e())))
                .log2()
    };
    let typicalerror_bound =
        1.0 - nf * 2f64.powf(1.0 - nf * (pgm.typical().omega().powi(2) + log_factor));
    let typicalerror_min_diag = (0..k).map(|x| gamma[x][x]).fold(f64::INFINITY, f64::min);
    let typicalerror = if !typicalerror_bound.is_finite() || typicalerror_bound <= 0.0 {
        CheckStatus::Vacuous
    } else if typicalerror_min_diag >= typicalerror_bound - DIAG_TOL {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };

    let mut gram_consistency_max_err = 0.0f64;
    for x in 0..k {
        for y in 0..k {
            let prod: f64 = (0..k).map(|z| gamma_sqrt[x][z] * gamma_sqrt[z][y]).sum();
            gram_consistency_max_err = gram_consistency_max_err.max((prod - gamma[x][y]).abs());
        }
    }
    let gram_consistency = if gram_consistency_max_err <= DIAG_TOL {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };

    let center = nf * rho.lambda1();
    let halfwidth = nf * pgm.typical().omega() + WINDOW_SLACK;
    let restricted_eig_max = (0..=n)
        .filter(|&kk| (kk as f64 - center).abs() <= halfwidth)
        .map(|kk| rho.lambda0().powi((n - kk) as i32) * rho.lambda1().powi(kk as i32))
        .fold(0.0, f64::max);
    let restricted_eig_bound = 2f64.powf(-nf * (rho.entropy() - pgm.typical().omega()));
    let operator_bound = if restricted_eig_max <= restricted_eig_bound + DIAG_TOL {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };

    DiagnosticsReport {
        candidates: k,
        support_rank: pgm.support_rank(),
        rank_deficient: pgm.is_rank_deficient(),
        sum_vs_support_max_err,
        sum_max_eigenvalue,
        sub_completeness,
        gamma_chain_min_slack,
        gamma_chain,
        typicalerror_bound,
        typicalerror_min_diag,
        typicalerror,
        gram_consistency_max_err,
        gram_consistency,
        restricted_eig_max,
        restricted_eig_bound,
        operator_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn rho_hat_eigenvalues_closed_form() {
        let r = rho_hat(0.0, 0.3).unwrap();
        assert!((r.lambda0() - 1.0).abs() < 1e-15);
        assert!(r.lambda1().abs() < 1e-15);

        let r = rho_hat(0.5, 0.1).unwrap();
        assert!((r.lambda0() - 0.9).abs() < 1e-14);
        assert!((r.lambda1() - 0.1).abs() < 1e-14);

        // dual path: numeric eigensolve agrees with the closed form
        let r = rho_hat(0.2, 0.1).unwrap();
        let (vals, _) = r.matrix().eig_hermitian();
        assert!((vals[0] - r.lambda0()).abs() < 1e-12);
        assert!((vals[1] - r.lambda1()).abs() < 1e-12);
    }

    #[test]
    fn rho_hat_eigvectors_reconstruct() {
        for (q, e) in [(0.2, 0.1), (0.4, 0.25), (0.0, 0.3), (0.5, 0.0)] {
            let r = rho_hat(q, e).unwrap();
            let mut rebuilt = HermitianOperator::zeros(2);
            for (lam, which) in [(r.lambda0(), 0), (r.lambda1(), 1)] {
                let v = r.eigvec(which);
                let vc = vec![Complex64::new(v[0], 0.0), Complex64::new(v[1], 0.0)];
                rebuilt.add_assign(&HermitianOperator::outer(&vc).scale(lam));
            }
            assert!(r.matrix().max_abs_diff(&rebuilt) < 1e-13, "q={q}, e={e}");
        }
    }

    #[test]
    fn rho_hat_range_checks() {
        assert!(rho_hat(1.0, 0.1).is_err());
        assert!(rho_hat(0.3, 0.6).is_err());
        assert!(rho_hat(-0.1, 0.1).is_err());
    }

    #[test]
    fn shield_overlap_law() {
        let q = 0.25;
        let x: BitVec = "000".parse().unwrap();
        let y: BitVec = "010".parse().unwrap();
        let sx = shield_state(&x, q).unwrap();
        let sy = shield_state(&y, q).unwrap();
        // |x xor y| = 1, so overlap is 1 - 2q = 0.5
        assert!((sx.inner(&sy).re - 0.5).abs() < 1e-14);

        // q = 1/2 makes distinct strings orthogonal
        let sx = shield_state(&x, 0.5).unwrap();
        let sy = shield_state(&y, 0.5).unwrap();
        assert!(sx.inner(&sy).norm() < 1e-14);
    }

    #[test]
    fn shield_overlap_law_exhaustive() {
        let q = 0.3;
        let n = 4;
        for a in 0..1usize << n {
            for b in 0..1usize << n {
                let x = BitVec::from_index(n, a);
                let y = BitVec::from_index(n, b);
                let overlap = shield_state(&x, q).unwrap().inner(&shield_state(&y, q).unwrap());
                let expect = (1.0 - 2.0 * q).powi(x.xor(&y).weight() as i32);
                assert!((overlap.re - expect).abs() < 1e-12);
                assert!(overlap.im.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn typical_projector_trivial_windows() {
        let rho = rho_hat(0.2, 0.1).unwrap();
        let omega_all = rho.lambda1().max(1.0 - rho.lambda1());
        let p = typical_projector(&rho, 4, omega_all).unwrap();
        assert_eq!(p.rank(), 16);
        assert!(p.matrix().max_abs_diff(&HermitianOperator::identity(16)) < 1e-12);

        // omega = 0 with non-integer N*lambda1: empty
        let p = typical_projector(&rho, 3, 0.0).unwrap();
        assert_eq!(p.rank(), 0);
    }

    #[test]
    fn typical_projector_rank_counts_window() {
        let rho = rho_hat(0.2, 0.1).unwrap();
        let n = 8;
        let omega = 0.2;
        let p = typical_projector(&rho, n, omega).unwrap();
        let expected: usize = (0..=n)
            .filter(|&k| (k as f64 - 8.0 * rho.lambda1()).abs() <= 1.6 + 1e-9)
            .map(|k| crate::gf2::binomial(n, k) as usize)
            .sum();
        assert_eq!(p.rank(), expected);
        // idempotence
        let m = p.matrix();
        assert!(m.matmul(&m).max_abs_diff(&m) < 1e-10);
        assert!((m.trace() - p.rank() as f64).abs() < 1e-9);
    }

    #[test]
    fn typicality_bound_dense_matches_analytic() {
        let rho = rho_hat(0.3, 0.15).unwrap();
        for n in [2usize, 4, 6] {
            for omega in [0.05, 0.15, 0.3] {
                let p = typical_projector(&rho, n, omega).unwrap();
                let dense = {
                    let complement = HermitianOperator::identity(1 << n).sub(&p.matrix());
                    rho.matrix().tensor_power(n).matmul(&complement).trace()
                };
                let analytic = typical_mass_deficit(&rho, n, omega);
                assert!((dense - analytic).abs() < 1e-10, "n={n}, omega={omega}");
                assert!(analytic <= typical_mass_bound(n, omega) + 1e-12);
            }
        }
    }

    #[test]
    fn single_candidate_pgm() {
        let rho = rho_hat(0.25, 0.1).unwrap();
        let p = typical_projector(&rho, 4, 0.3).unwrap();
        let x: BitVec = "0100".parse().unwrap();
        let pgm = build_pgm(std::slice::from_ref(&x), &rho, &p).unwrap();
        // one-element PGM: success = <x|P|x>
        let expect = pgm.gamma(0, 0);
        assert!((pgm.success_prob(&x).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn orthogonal_candidates_discriminate_perfectly() {
        let rho = rho_hat(0.5, 0.1).unwrap();
        let p = typical_projector(&rho, 3, 1.0).unwrap(); // identity window
        let a: BitVec = "000".parse().unwrap();
        let b: BitVec = "110".parse().unwrap();
        let pgm = build_pgm(&[a.clone(), b.clone()], &rho, &p).unwrap();
        assert!((pgm.success_prob(&a).unwrap() - 1.0).abs() < 1e-10);
        assert!((pgm.success_prob(&b).unwrap() - 1.0).abs() < 1e-10);
        assert!(!pgm.is_rank_deficient());
    }

    #[test]
    fn povm_validity_small_instance() {
        let rho = rho_hat(0.2, 0.1).unwrap();
        let p = typical_projector(&rho, 4, 0.4).unwrap();
        let candidates: Vec<BitVec> = ["0000", "1000", "0110"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let pgm = build_pgm(&candidates, &rho, &p).unwrap();
        // each element PSD
        for i in 0..candidates.len() {
            assert!(pgm.element(i).min_eigenvalue() > -1e-10);
        }
        // sum equals support projector (dense route)
        let sum = pgm.sum_elements();
        let (vals, _) = sum.eig_hermitian();
        assert!(vals.iter().all(|&v| (-1e-10..=1.0 + 1e-10).contains(&v)));
        // leftover PSD
        assert!(pgm.leftover().min_eigenvalue() > -1e-9);
    }

    #[test]
    fn hashing_average_m_zero_is_plain_pgm() {
        let rho = rho_hat(0.25, 0.1).unwrap();
        let p = typical_projector(&rho, 4, 0.5).unwrap();
        let t: Vec<BitVec> = ["0000", "1000", "0010", "1100"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let x = t[0].clone();
        let avg = average_over_hashing(&x, &t, 0, &rho, &p, HashingMode::Exhaustive, 1).unwrap();
        let pgm = build_pgm(&t, &rho, &p).unwrap();
        assert!((avg.mean - pgm.success_prob(&x).unwrap()).abs() < 1e-12);
        assert_eq!(avg.distinct_survivor_sets, 1);
    }

    #[test]
    fn hashing_average_large_m_approaches_projection() {
        let rho = rho_hat(0.25, 0.1).unwrap();
        let p = typical_projector(&rho, 5, 0.6).unwrap();
        let t: Vec<BitVec> = ["00000", "10000", "01000"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let x = t[0].clone();
        let single = build_pgm(std::slice::from_ref(&x), &rho, &p).unwrap();
        let solo = single.success_prob(&x).unwrap();
        let avg = average_over_hashing(&x, &t, 5, &rho, &p, HashingMode::Exhaustive, 1).unwrap();
        // survival probability 2^-5 each: the average sits near the solo value
        assert!((avg.mean - solo).abs() < 0.05, "avg {} vs solo {}", avg.mean, solo);
    }

    #[test]
    fn monte_carlo_matches_exhaustive_within_3_sigma() {
        let rho = rho_hat(0.25, 0.1).unwrap();
        let p = typical_projector(&rho, 6, 0.6).unwrap();
        let t: Vec<BitVec> = ["000000", "100000", "001000", "000011"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let x = t[0].clone();
        let exact = average_over_hashing(&x, &t, 2, &rho, &p, HashingMode::Exhaustive, 1).unwrap();
        let mc = average_over_hashing(
            &x,
            &t,
            2,
            &rho,
            &p,
            HashingMode::MonteCarlo { trials: 4000 },
            99,
        )
        .unwrap();
        let sigma = mc.std_error.unwrap().max(1e-6);
        assert!(
            (mc.mean - exact.mean).abs() <= 3.0 * sigma,
            "mc {} vs exact {} (sigma {})",
            mc.mean,
            exact.mean,
            sigma
        );
    }

    #[test]
    fn exhaustive_family_survival_is_two_to_minus_m() {
        // over the multiply-by-alpha family, each fixed nonzero difference
        // survives exactly 2^{w-m} of the 2^w draws
        let w = 8;
        let poly = smallest_irreducible(w);
        for m in 1..=4usize {
            let m_mask = (1u32 << m) - 1;
            for d in [1u32, 5, 97, 200] {
                let survivors = (0..1u32 << w)
                    .filter(|&alpha| gf_mul(alpha, d, poly, w) & m_mask == 0)
                    .count();
                assert_eq!(survivors, 1 << (w - m), "m={m}, d={d}");
            }
        }
    }

    #[test]
    fn irreducible_polys_sane() {
        assert_eq!(smallest_irreducible(1), 0b11);
        assert_eq!(smallest_irreducible(2), 0b111);
        assert_eq!(smallest_irreducible(3), 0b1011);
        assert_eq!(smallest_irreducible(4), 0b10011);
        for w in 1..=16 {
            let p = smallest_irreducible(w);
            assert_eq!(poly_degree(p), w as i32);
            assert_eq!(p & 1, 1);
        }
    }

    #[test]
    fn bound_avefail_asymptotics() {
        // parameters following the omega and m displays push the bound to 1
        let (q, e, eps, delta, delta_m) = (0.25, 0.1, 0.02, 0.05, 0.05);
        let omega = tomega(e, eps, delta).omega.unwrap();
        assert!(omega > eps);
        for (n, slack) in [(1000usize, 1e-9), (10_000, 1e-20)] {
            let m = hashing_rounds(n, q, e, eps, omega, delta_m).ceil() as usize;
            let b = bound_avefail(n, m, q, e, eps, omega, AvefailSign::Corrected);
            assert!(b > 0.0 && b <= 1.0, "n={n}: bound {b}");
            assert!(1.0 - b < slack, "n={n}: bound {b}");
        }
        // m below N(h(e) - S) keeps the bound away from 1
        let n = 10_000;
        let m_low = (n as f64 * (h(e) - rho_hat(q, e).unwrap().entropy()) * 0.5) as usize;
        let b = bound_avefail(n, m_low, q, e, eps, omega, AvefailSign::Corrected);
        assert!(b < 0.5);
    }

    #[test]
    fn bound_avefail_e_zero_limit() {
        let b = bound_avefail(100, 20, 0.3, 0.0, 0.0, 0.3, AvefailSign::Corrected);
        let expect = 1.0 - 600.0 * 2f64.powf(-100.0 * 0.09) - 2f64.powf(-100.0 * (0.2 - 0.3));
        assert!((b - expect).abs() < 1e-12);
    }

    #[test]
    fn tomega_examples() {
        // degenerate epsilon = 0 gives sqrt(delta)
        let t = tomega(0.1, 0.0, 0.04);
        assert!((t.omega.unwrap() - 0.2).abs() < 1e-15);
        // typical parameter choices keep omega above epsilon
        let t = tomega(0.1, 0.02, 0.01);
        assert!(t.omega.unwrap() > 0.02);
        // negative radicand is reported, not guessed around
        let t = tomega(0.1, 0.02, -10.0);
        assert!(t.omega.is_none());
        assert!(t.radicand < 0.0);
    }

    #[test]
    fn fidelity_bound_monotone_in_n() {
        let (q, e, eps, delta, delta_m) = (0.25, 0.1, 0.05, 0.02, 0.02);
        let omega = tomega(e, eps, delta).omega.unwrap();
        let mut last = f64::NEG_INFINITY;
        for &n in &[2000usize, 4000, 8000, 16000] {
            let m = hashing_rounds(n, q, e, eps, omega, delta_m).ceil() as usize;
            let f = fidelity_bound(n, m, q, e, eps, omega);
            assert!(f >= last, "n={n}");
            last = f;
        }
        assert!(last > 0.99);
    }

    #[test]
    fn diagnostics_orthogonal_case_chain_tight() {
        let rho = rho_hat(0.5, 0.1).unwrap();
        let p = typical_projector(&rho, 3, 1.0).unwrap();
        let candidates: Vec<BitVec> = ["000", "110"].iter().map(|s| s.parse().unwrap()).collect();
        let pgm = build_pgm(&candidates, &rho, &p).unwrap();
        let report = appendix_diagnostics(&pgm, 0.05);
        assert_eq!(report.sub_completeness, CheckStatus::Pass);
        assert_eq!(report.gamma_chain, CheckStatus::Pass);
        assert_eq!(report.gram_consistency, CheckStatus::Pass);
        // orthogonal candidates: Gamma diagonal, chain tight at 1
        assert!((report.gamma_chain_min_slack).abs() < 1e-9);
    }

    #[test]
    fn diagnostics_generic_case_passes() {
        let rho = rho_hat(0.25, 0.1).unwrap();
        let p = typical_projector(&rho, 6, 0.55).unwrap();
        let candidates: Vec<BitVec> = ["000000", "100000", "010100", "001001"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let pgm = build_pgm(&candidates, &rho, &p).unwrap();
        let report = appendix_diagnostics(&pgm, 0.05);
        assert_eq!(report.sub_completeness, CheckStatus::Pass);
        assert_eq!(report.gamma_chain, CheckStatus::Pass);
        assert_eq!(report.gram_consistency, CheckStatus::Pass);
        assert_eq!(report.operator_bound, CheckStatus::Pass);
        // typicalerror is allowed to be vacuous at this scale, never failed
        assert_ne!(report.typicalerror, CheckStatus::Fail);
    }

    #[test]
    fn compressed_sum_matches_dense() {
        let rho = rho_hat(0.2, 0.15).unwrap();
        let p = typical_projector(&rho, 5, 0.5).unwrap();
        let candidates: Vec<BitVec> = ["00000", "10000", "01010"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let pgm = build_pgm(&candidates, &rho, &p).unwrap();
        let dense = pgm.sum_elements();
        let (dense_eigs, _) = dense.eig_hermitian();
        let (comp_eigs, _) = pgm.sum_elements_compressed().eig_hermitian();
        for (a, b) in dense_eigs.iter().take(comp_eigs.len()).zip(&comp_eigs) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn success_prob_rejects_unknown_candidate() {
        let rho = rho_hat(0.25, 0.1).unwrap();
        let p = typical_projector(&rho, 3, 0.5).unwrap();
        let pgm = build_pgm(&["000".parse().unwrap()], &rho, &p).unwrap();
        assert!(matches!(
            pgm.success_prob(&"111".parse().unwrap()),
            Err(PgmError::CandidateNotFound)
        ));
    }

    #[test]
    fn gram_oracle_two_state_case() {
        // independent Gram-route oracle for two candidates on the full space
        let rho = rho_hat(0.2, 0.1).unwrap();
        let n = 4;
        let p = typical_projector(&rho, n, 1.0).unwrap(); // identity window
        let a: BitVec = "0000".parse().unwrap();
        let b: BitVec = "1111".parse().unwrap();
        let pgm = build_pgm(&[a.clone(), b.clone()], &rho, &p).unwrap();
        // 2x2 Gram matrix [[1, g], [g, 1]] with g = (1-2q)^4; PGM success for
        // either state is ((sqrt(1+g) + sqrt(1-g))/2)^2
        let g = (1.0 - 2.0 * rho.q()).powi(n as i32);
        let expect = ((1.0 + g).sqrt() + (1.0 - g).sqrt()).powi(2) / 4.0;
        assert!((pgm.success_prob(&a).unwrap() - expect).abs() < 1e-10);
        assert!((pgm.success_prob(&b).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn success_monotone_under_more_candidates() {
        let rho = rho_hat(0.2, 0.1).unwrap();
        let p = typical_projector(&rho, 5, 1.0).unwrap();
        let x: BitVec = "00000".parse().unwrap();
        let pool = ["10000", "01000", "00100", "00010"];
        let mut last = 1.0f64;
        for take in 0..=pool.len() {
            let mut cands = vec![x.clone()];
            cands.extend(pool[..take].iter().map(|s| s.parse::<BitVec>().unwrap()));
            let pgm = build_pgm(&cands, &rho, &p).unwrap();
            let s = pgm.success_prob(&x).unwrap();
            assert!(s <= last + 1e-10, "take={take}: {s} > {last}");
            last = s;
            let total: f64 = cands.iter().map(|c| pgm.success_prob(c).unwrap()).sum();
            assert!(total <= cands.len() as f64 + 1e-10);
        }
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let rho = rho_hat(0.25, 0.1).unwrap();
        let p = typical_projector(&rho, 4, 0.6).unwrap();
        let t: Vec<BitVec> = ["0000", "1000"].iter().map(|s| s.parse().unwrap()).collect();
        let x = t[0].clone();
        let mode = HashingMode::MonteCarlo { trials: 100 };
        let a = average_over_hashing(&x, &t, 2, &rho, &p, mode, 7).unwrap();
        let b = average_over_hashing(&x, &t, 2, &rho, &p, mode, 7).unwrap();
        assert_eq!(a.mean, b.mean);
    }

    #[test]
    fn random_low_rank_support_identity() {
        // random PSD rank-3 on dim 8 via shield vectors: B S B = support proj
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let rho = rho_hat(0.3, 0.2).unwrap();
        let p = typical_projector(&rho, 3, 1.0).unwrap();
        let mut cands = Vec::new();
        while cands.len() < 3 {
            let c = BitVec::random(3, &mut rng);
            if !cands.contains(&c) {
                cands.push(c);
            }
        }
        let pgm = build_pgm(&cands, &rho, &p).unwrap();
        let sum_c = pgm.sum_elements_compressed();
        let supp_c = pgm.support_projector_compressed();
        assert!(sum_c.max_abs_diff(&supp_c) < 1e-9);
    }
}
