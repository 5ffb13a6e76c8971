//! Executable models of the actual and virtual key-distillation protocols.
//!
//! The actual protocol is pure bit arithmetic: syndrome, discard, reconcile,
//! privacy-amplify. The virtual protocol runs the same steps as measurements
//! on a statevector threaded through the two CNOT circuits, with an extra
//! X-basis readout of the hashing ports. The equivalence harness computes the
//! exact joint distribution of (syndrome, final key) under both, with and
//! without the X readout, and reports total-variation distances.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::cnot::{build_cnot1, build_cnot2, CnotCircuit, CnotError};
use crate::gf2::{
    ball_size, hamming_ball, random_full_rank, BitMatrix, BitVec, Gf2Error, LinearCode, BALL_CAP,
};
use crate::pgm::tomega;
use crate::qsim::{Basis, QsimError, StateVector};
use crate::rng::stream_rng;
use rand::seq::SliceRandom;

/// Explicit constant standing in for the O(n+s) factor of the test-bit
/// sampling tail; the check is one-sided sanity, not a proof.
pub const SAMPLING_CONSTANT: f64 = 4.0;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("dimension mismatch: {what} must have length {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("{what} = {value} outside the valid range {range}")]
    OutOfRange { what: &'static str, value: f64, range: &'static str },
    #[error("hashing size m = {m} must be smaller than n = {n}")]
    HashTooLarge { m: usize, n: usize },
    #[error("no coset leader found for the given syndrome")]
    NoCosetLeader,
    #[error("candidate construction overflow: {size} strings exceed the cap {cap}")]
    CandidateCap { size: u128, cap: u128 },
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
    #[error(transparent)]
    Cnot(#[from] CnotError),
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

/// The reconciliation flip rule: a pure function from the syndrome difference
/// to an n-bit flip mask. Equivalence requires only that the actual and
/// virtual runs share the same rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FlipRule {
    /// No flips regardless of the syndrome difference.
    Zero,
    /// Minimum-weight error pattern matching the syndrome difference, mapped
    /// through the key rows of CNOT(I); ties break on the first pattern in
    /// weight-shell order.
    CosetLeader,
}

impl FlipRule {
    pub fn flips(&self, cfg: &ProtocolConfig, syndrome_diff: &BitVec) -> Result<BitVec, ProtocolError> {
        if syndrome_diff.len() != cfg.s {
            return Err(ProtocolError::Dimension {
                what: "syndrome difference",
                expected: cfg.s,
                got: syndrome_diff.len(),
            });
        }
        match self {
            FlipRule::Zero => Ok(BitVec::zeros(cfg.n)),
            FlipRule::CosetLeader => {
                if syndrome_diff.is_zero() {
                    return Ok(BitVec::zeros(cfg.n));
                }
                let width = cfg.n + cfg.s;
                let zero = BitVec::zeros(width);
                let leader = crate::gf2::hamming_ball_iter(&zero, width)
                    .find(|e| {
                        cfg.code.syndrome(e).map(|sy| &sy == syndrome_diff).unwrap_or(false)
                    })
                    .ok_or(ProtocolError::NoCosetLeader)?;
                let (_, k_rows) = cfg.cnot1()?;
                Ok(k_rows.mul_vec(&leader)?)
            }
        }
    }
}

/// All protocol parameters: sizes, code, hashing and privacy-amplification
/// rows, and the scalar knobs of the bounds.
#[derive(Clone, Debug, Serialize)]
pub struct ProtocolConfig {
    pub n: usize,
    pub s: usize,
    pub m: usize,
    pub code: LinearCode,
    /// Privacy-amplification rows V, (n-m) x n.
    pub pa_matrix: BitMatrix,
    /// Hashing rows U, m x n.
    pub hash_matrix: BitMatrix,
    pub q: f64,
    pub e_p_t: f64,
    pub epsilon: f64,
    pub omega: f64,
    pub delta: f64,
    pub delta_m: f64,
    /// Extra bits discarded when a bidirectional code is modeled.
    pub d: usize,
    pub seed: u64,
}

impl ProtocolConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        s: usize,
        m: usize,
        code: LinearCode,
        pa_matrix: BitMatrix,
        hash_matrix: BitMatrix,
        q: f64,
        e_p_t: f64,
        epsilon: f64,
        omega: f64,
        delta: f64,
        delta_m: f64,
        d: usize,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        if m >= n {
            return Err(ProtocolError::HashTooLarge { m, n });
        }
        if code.block_len() != n + s || code.syndrome_bits() != s {
            return Err(ProtocolError::Dimension {
                what: "parity check",
                expected: n + s,
                got: code.block_len(),
            });
        }
        for (what, mat, rows) in [
            ("pa_matrix", &pa_matrix, n - m),
            ("hash_matrix", &hash_matrix, m),
        ] {
            if mat.col_count() != n || mat.row_count() != rows {
                return Err(ProtocolError::Dimension { what, expected: rows, got: mat.row_count() });
            }
        }
        if !hash_matrix.mul_mat(&pa_matrix.transpose()).is_zero() {
            return Err(ProtocolError::OutOfRange {
                what: "U V^T",
                value: 1.0,
                range: "hashing and privacy-amplification rows must be orthogonal",
            });
        }
        if !(0.0..1.0).contains(&q) || (q - 0.5).abs() < 1e-12 {
            return Err(ProtocolError::OutOfRange { what: "q", value: q, range: "[0, 1) \\ {1/2}" });
        }
        if !(0.0..0.5).contains(&e_p_t) {
            return Err(ProtocolError::OutOfRange { what: "e_p_t", value: e_p_t, range: "[0, 1/2)" });
        }
        for (what, value) in [
            ("epsilon", epsilon),
            ("omega", omega),
            ("delta", delta),
            ("delta_m", delta_m),
        ] {
            if value < 0.0 {
                return Err(ProtocolError::OutOfRange { what, value, range: "[0, inf)" });
            }
        }
        Ok(Self {
            n,
            s,
            m,
            code,
            pa_matrix,
            hash_matrix,
            q,
            e_p_t,
            epsilon,
            omega,
            delta,
            delta_m,
            d,
            seed,
        })
    }

    /// A reproducible configuration with a random code and a random hashing
    /// pair, default noise parameters, and omega auto-derived from the
    /// tomega display (square root of delta when the radicand degenerates).
    pub fn random(n: usize, s: usize, m: usize, seed: u64) -> Result<Self, ProtocolError> {
        let mut rng = stream_rng(seed, 1);
        let code = LinearCode::new(random_full_rank(s, n + s, &mut rng))
            .expect("full-rank rows are independent");
        let hash_matrix = if m == 0 {
            BitMatrix::zeros(0, n)
        } else {
            random_full_rank(m, n, &mut rng)
        };
        let pa_matrix = hash_matrix.kernel_basis();
        let (e_p_t, epsilon, delta, delta_m, q) = (0.05, 0.02, 0.01, 0.01, 0.25);
        let omega = tomega(e_p_t, epsilon, delta).omega.unwrap_or(delta.sqrt());
        Self::new(
            n, s, m, code, pa_matrix, hash_matrix, q, e_p_t, epsilon, omega, delta, delta_m, 0,
            seed,
        )
    }

    /// The syndrome-extraction circuit and its key rows K.
    pub fn cnot1(&self) -> Result<(CnotCircuit, BitMatrix), ProtocolError> {
        Ok(build_cnot1(&self.code)?)
    }

    /// The hashing/privacy-amplification circuit.
    pub fn cnot2(&self) -> Result<CnotCircuit, ProtocolError> {
        Ok(build_cnot2(&self.hash_matrix, &self.pa_matrix)?)
    }
}

/// Everything a single protocol run produces.
#[derive(Clone, Debug, Serialize)]
pub struct RunTranscript {
    pub syndrome_alice: BitVec,
    pub syndrome_bob: Option<BitVec>,
    /// X-basis hashing syndrome; virtual runs only.
    pub x_syndrome: Option<BitVec>,
    /// n-bit reconciled key; actual runs only.
    pub reconciled_key: Option<BitVec>,
    /// (n-m)-bit final key.
    pub final_key: BitVec,
}

/// The actual protocol on a classical sifted key: syndrome, discard, apply
/// the given flips, privacy-amplify.
pub fn run_actual(
    cfg: &ProtocolConfig,
    sifted: &BitVec,
    bob_syndrome: &BitVec,
    flips: &BitVec,
) -> Result<RunTranscript, ProtocolError> {
    if sifted.len() != cfg.n + cfg.s {
        return Err(ProtocolError::Dimension {
            what: "sifted key",
            expected: cfg.n + cfg.s,
            got: sifted.len(),
        });
    }
    if bob_syndrome.len() != cfg.s {
        return Err(ProtocolError::Dimension {
            what: "bob syndrome",
            expected: cfg.s,
            got: bob_syndrome.len(),
        });
    }
    if flips.len() != cfg.n {
        return Err(ProtocolError::Dimension { what: "flips", expected: cfg.n, got: flips.len() });
    }
    let syndrome_alice = cfg.code.syndrome(sifted)?;
    let (_, k_rows) = cfg.cnot1()?;
    let kept = k_rows.mul_vec(sifted)?;
    let reconciled = kept.xor(flips);
    let final_key = cfg.pa_matrix.mul_vec(&reconciled)?;
    Ok(RunTranscript {
        syndrome_alice,
        syndrome_bob: Some(bob_syndrome.clone()),
        x_syndrome: None,
        reconciled_key: Some(reconciled),
        final_key,
    })
}

/// The actual protocol with the flip mask supplied by a reconciliation rule
/// applied to the syndrome difference.
pub fn run_actual_with_rule(
    cfg: &ProtocolConfig,
    sifted: &BitVec,
    bob_syndrome: &BitVec,
    rule: FlipRule,
) -> Result<RunTranscript, ProtocolError> {
    let syndrome_alice = cfg.code.syndrome(sifted)?;
    let flips = rule.flips(cfg, &syndrome_alice.xor(bob_syndrome))?;
    run_actual(cfg, sifted, bob_syndrome, &flips)
}

/// One sampled run of the virtual protocol: CNOT(I), Z-measure and discard
/// the syndrome ports, reconcile, CNOT(II), X-measure the hashing ports,
/// Z-measure the key ports.
pub fn run_virtual(
    cfg: &ProtocolConfig,
    input_state: &StateVector,
    bob_syndrome: &BitVec,
    rule: FlipRule,
    seed: u64,
) -> Result<RunTranscript, ProtocolError> {
    if input_state.num_qubits() != cfg.n + cfg.s {
        return Err(ProtocolError::Dimension {
            what: "input state",
            expected: cfg.n + cfg.s,
            got: input_state.num_qubits(),
        });
    }
    let mut rng = stream_rng(seed, 2);
    let (c1, _) = cfg.cnot1()?;
    let st = input_state.apply_circuit(&c1)?;
    let syndrome_ports: Vec<usize> = (cfg.n..cfg.n + cfg.s).collect();
    let rec = st.measure(Basis::Z, &syndrome_ports, &mut rng)?;
    let syndrome_alice = rec.outcome.clone();
    let (_, reduced) = rec.post_state.project_and_discard(&syndrome_ports, &rec.outcome)?;
    let flips = rule.flips(cfg, &syndrome_alice.xor(bob_syndrome))?;
    let st = reduced.apply_pauli(Basis::X, &flips)?;
    let st = st.apply_circuit(&cfg.cnot2()?)?;
    let x_ports: Vec<usize> = (0..cfg.m).collect();
    let rec_x = st.measure(Basis::X, &x_ports, &mut rng)?;
    let z_ports: Vec<usize> = (cfg.m..cfg.n).collect();
    let rec_z = rec_x.post_state.measure(Basis::Z, &z_ports, &mut rng)?;
    Ok(RunTranscript {
        syndrome_alice,
        syndrome_bob: Some(bob_syndrome.clone()),
        x_syndrome: Some(rec_x.outcome),
        reconciled_key: None,
        final_key: rec_z.outcome,
    })
}

type JointDist = BTreeMap<(usize, usize), f64>;

/// Exact joint distribution of (Z syndrome, final key) for the virtual
/// protocol, optionally including the X-basis hashing readout (whose outcome
/// is marginalized out).
fn virtual_joint_distribution(
    cfg: &ProtocolConfig,
    input_state: &StateVector,
    bob_syndrome: &BitVec,
    rule: FlipRule,
    with_x_measurement: bool,
) -> Result<JointDist, ProtocolError> {
    let (c1, _) = cfg.cnot1()?;
    let c2 = cfg.cnot2()?;
    let st = input_state.apply_circuit(&c1)?;
    let syndrome_ports: Vec<usize> = (cfg.n..cfg.n + cfg.s).collect();
    let x_ports: Vec<usize> = (0..cfg.m).collect();
    let mut dist = JointDist::new();
    for a_index in 0..1usize << cfg.s {
        let a = BitVec::from_index(cfg.s, a_index);
        let (p_a, key_state) = st.project_and_discard(&syndrome_ports, &a)?;
        if p_a <= 0.0 {
            continue;
        }
        let flips = rule.flips(cfg, &a.xor(bob_syndrome))?;
        let branch = key_state.apply_pauli(Basis::X, &flips)?.apply_circuit(&c2)?;
        let readout = if with_x_measurement {
            branch.apply_hadamards(&x_ports)?
        } else {
            branch
        };
        let key_shift = cfg.m;
        for (label, amp) in readout.amplitudes().iter().enumerate() {
            let p = amp.norm_sqr();
            if p <= 0.0 {
                continue;
            }
            let key = label >> key_shift;
            *dist.entry((a_index, key)).or_insert(0.0) += p_a * p;
        }
    }
    Ok(dist)
}

/// Exact joint distribution of (Z syndrome, final key) when the input state
/// is measured upfront and the actual protocol processes the outcome.
fn actual_joint_distribution(
    cfg: &ProtocolConfig,
    input_state: &StateVector,
    bob_syndrome: &BitVec,
    rule: FlipRule,
) -> Result<JointDist, ProtocolError> {
    let (_, k_rows) = cfg.cnot1()?;
    let mut dist = JointDist::new();
    for (label, amp) in input_state.amplitudes().iter().enumerate() {
        let p = amp.norm_sqr();
        if p <= 0.0 {
            continue;
        }
        let x = BitVec::from_index(cfg.n + cfg.s, label);
        let a = cfg.code.syndrome(&x)?;
        let flips = rule.flips(cfg, &a.xor(bob_syndrome))?;
        let reconciled = k_rows.mul_vec(&x)?.xor(&flips);
        let key = cfg.pa_matrix.mul_vec(&reconciled)?;
        *dist.entry((a.to_index(), key.to_index())).or_insert(0.0) += p;
    }
    Ok(dist)
}

fn total_variation(p: &JointDist, q: &JointDist) -> f64 {
    let mut keys: Vec<(usize, usize)> = p.keys().chain(q.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    0.5 * keys
        .iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Pairwise total-variation distances between the three exact joint
/// distributions of (syndrome, final key).
#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    /// Virtual with X readout vs virtual without it.
    pub tv_with_vs_without: f64,
    /// Virtual with X readout vs actual.
    pub tv_with_vs_actual: f64,
    /// Virtual without X readout vs actual.
    pub tv_without_vs_actual: f64,
    pub max_tv: f64,
    pub outcome_support: usize,
}

/// Checks the non-disturbance claim on one input state: inserting or deleting
/// the X-basis hashing measurement, or replacing the whole quantum procedure
/// by the classical actual protocol, leaves the (syndrome, key) distribution
/// unchanged. Distances are computed exactly; asserting on them is left to
/// the caller.
pub fn equivalence_check(
    cfg: &ProtocolConfig,
    input_state: &StateVector,
    bob_syndrome: &BitVec,
    rule: FlipRule,
) -> Result<EquivalenceReport, ProtocolError> {
    equivalence_check_with_rules(cfg, input_state, bob_syndrome, rule, rule)
}

/// Like [`equivalence_check`] but with separately chosen rules for the
/// virtual and actual sides; mismatched rules are the negative control.
pub fn equivalence_check_with_rules(
    cfg: &ProtocolConfig,
    input_state: &StateVector,
    bob_syndrome: &BitVec,
    virtual_rule: FlipRule,
    actual_rule: FlipRule,
) -> Result<EquivalenceReport, ProtocolError> {
    let with_x = virtual_joint_distribution(cfg, input_state, bob_syndrome, virtual_rule, true)?;
    let without_x = virtual_joint_distribution(cfg, input_state, bob_syndrome, virtual_rule, false)?;
    let actual = actual_joint_distribution(cfg, input_state, bob_syndrome, actual_rule)?;
    let tv_with_vs_without = total_variation(&with_x, &without_x);
    let tv_with_vs_actual = total_variation(&with_x, &actual);
    let tv_without_vs_actual = total_variation(&without_x, &actual);
    Ok(EquivalenceReport {
        tv_with_vs_without,
        tv_with_vs_actual,
        tv_without_vs_actual,
        max_tv: tv_with_vs_without.max(tv_with_vs_actual).max(tv_without_vs_actual),
        outcome_support: with_x.len(),
    })
}

/// Which construction produced a candidate set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CandidateLabel {
    CaseICode,
    CaseIKey,
    CaseIICode,
    CaseIIKey,
    OmegaSet,
}

/// An explicit, duplicate-free, sorted list of candidate bit strings together
/// with the recorded cardinality bound of its construction.
#[derive(Clone, Debug, Serialize)]
pub struct CandidateSet {
    pub label: CandidateLabel,
    pub members: Vec<BitVec>,
    /// log2 of the construction's cardinality bound 2^{(n+s) h(e + eps)}.
    pub log2_bound: f64,
}

impl CandidateSet {
    fn from_members(label: CandidateLabel, members: Vec<BitVec>, log2_bound: f64) -> Self {
        let mut members = members;
        members.sort();
        members.dedup();
        Self { label, members, log2_bound }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn candidate_radius(cfg: &ProtocolConfig) -> usize {
    ((cfg.n + cfg.s) as f64 * (cfg.e_p_t + cfg.epsilon)).floor() as usize
}

/// Case (i): only one party holds the fictitious qubit. The code-bit
/// candidates are the Hamming ball around the X-basis estimate; the key
/// candidates are their images under the X-basis action of CNOT(I),
/// truncated to the first n bits.
pub fn candidates_case_i(
    cfg: &ProtocolConfig,
    mu_tilde: &BitVec,
) -> Result<(CandidateSet, CandidateSet), ProtocolError> {
    let width = cfg.n + cfg.s;
    if mu_tilde.len() != width {
        return Err(ProtocolError::Dimension {
            what: "mu_tilde",
            expected: width,
            got: mu_tilde.len(),
        });
    }
    let radius = candidate_radius(cfg).min(width);
    let ball = hamming_ball(mu_tilde, radius)?;
    let f_map = cfg.cnot1()?.0.x_map();
    let log2_bound = width as f64 * crate::rates::h((cfg.e_p_t + cfg.epsilon).min(1.0));
    let keys: Vec<BitVec> = ball
        .iter()
        .map(|t| Ok(f_map.mul_vec(t)?.prefix(cfg.n)))
        .collect::<Result<_, ProtocolError>>()?;
    let code_set = CandidateSet::from_members(CandidateLabel::CaseICode, ball, log2_bound);
    let key_set = CandidateSet::from_members(CandidateLabel::CaseIKey, keys, log2_bound);
    debug_assert!(key_set.len() <= code_set.len());
    Ok((code_set, key_set))
}

/// Case (ii): both parties hold fictitious qubits and Bob reports the n-bit
/// X-basis outcome `mu`. The key candidates depend only on `mu` and the
/// displacement ball; the arbitrary syndrome-padding strings a_k drop out.
pub fn candidates_case_ii(
    cfg: &ProtocolConfig,
    mu: &BitVec,
) -> Result<(CandidateSet, CandidateSet), ProtocolError> {
    if mu.len() != cfg.n {
        return Err(ProtocolError::Dimension { what: "mu", expected: cfg.n, got: mu.len() });
    }
    let width = cfg.n + cfg.s;
    let radius = candidate_radius(cfg).min(width);
    let total = ball_size(width, radius).saturating_mul(1 << cfg.s);
    if total > BALL_CAP {
        return Err(ProtocolError::CandidateCap { size: total, cap: BALL_CAP });
    }
    let ball = hamming_ball(&BitVec::zeros(width), radius)?;
    let c1 = cfg.cnot1()?.0;
    let f_map = c1.x_map();
    let f_inv = f_map.invert()?;
    let mu_padded = mu.concat(&BitVec::zeros(cfg.s));
    let log2_bound = width as f64 * crate::rates::h((cfg.e_p_t + cfg.epsilon).min(1.0));

    let keys: Vec<BitVec> = ball
        .iter()
        .map(|r| Ok(mu.xor(&f_map.mul_vec(r)?.prefix(cfg.n))))
        .collect::<Result<_, ProtocolError>>()?;

    let mut code_members = Vec::with_capacity(ball.len() << cfg.s);
    for a_index in 0..1usize << cfg.s {
        let a_k = BitVec::zeros(cfg.n).concat(&BitVec::from_index(cfg.s, a_index));
        let base = f_inv.mul_vec(&mu_padded.xor(&a_k))?;
        for r in &ball {
            code_members.push(base.xor(r));
        }
    }
    let code_set = CandidateSet::from_members(CandidateLabel::CaseIICode, code_members, log2_bound);
    let key_set = CandidateSet::from_members(CandidateLabel::CaseIIKey, keys, log2_bound);
    Ok((code_set, key_set))
}

/// Debug path for the a_k-invariance property: the key candidates recomputed
/// through the code candidates for one fixed padding string `a_k`.
pub fn candidates_case_ii_key_via_code(
    cfg: &ProtocolConfig,
    mu: &BitVec,
    a_k: &BitVec,
) -> Result<CandidateSet, ProtocolError> {
    if a_k.len() != cfg.s {
        return Err(ProtocolError::Dimension { what: "a_k", expected: cfg.s, got: a_k.len() });
    }
    let width = cfg.n + cfg.s;
    let radius = candidate_radius(cfg).min(width);
    let ball = hamming_ball(&BitVec::zeros(width), radius)?;
    let f_map = cfg.cnot1()?.0.x_map();
    let f_inv = f_map.invert()?;
    let padding = BitVec::zeros(cfg.n).concat(a_k);
    let mu_padded = mu.concat(&BitVec::zeros(cfg.s));
    let base = f_inv.mul_vec(&mu_padded.xor(&padding))?;
    let log2_bound = width as f64 * crate::rates::h((cfg.e_p_t + cfg.epsilon).min(1.0));
    let keys: Vec<BitVec> = ball
        .iter()
        .map(|r| Ok(f_map.mul_vec(&base.xor(r))?.prefix(cfg.n)))
        .collect::<Result<_, ProtocolError>>()?;
    Ok(CandidateSet::from_members(CandidateLabel::CaseIIKey, keys, log2_bound))
}

/// Couples each code qubit to a fresh shield qubit prepared in
/// `|phi_q> = sqrt(1-q)|0> + sqrt(q)|1>` via a CNOT with the shield as the
/// Z-basis control. Code qubits keep indices `0..N`; shields take `N..2N`.
///
/// In the X-basis expansion `|psi> = sum_x alpha_x |e_x>` the output is
/// `sum_x alpha_x (Z^x |phi_q>^{(x)N}) (x) |e_x>`: the phase-error pattern is
/// copied onto the shields in the nonorthogonal pair `|phi_q>`, `Z|phi_q>`.
pub fn apply_shield(q: f64, code_state: &StateVector) -> Result<StateVector, ProtocolError> {
    let n = code_state.num_qubits();
    if 2 * n > crate::qsim::MAX_QUBITS {
        return Err(ProtocolError::Dimension {
            what: "code state (shielding doubles the width)",
            expected: crate::qsim::MAX_QUBITS / 2,
            got: n,
        });
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(ProtocolError::OutOfRange { what: "q", value: q, range: "[0, 1]" });
    }
    let shields = crate::pgm::shield_state(&BitVec::zeros(n), q)
        .expect("width checked above, q checked above");
    let full = code_state.tensor(&shields)?;
    let mut circuit = CnotCircuit::new(2 * n);
    for i in 0..n {
        circuit.push(n + i, i)?;
    }
    Ok(full.apply_circuit(&circuit)?)
}

/// Monte Carlo tail of the test/code sampling estimate against the
/// explicit-constant bound `C N 2^{-N eps^2}`.
#[derive(Clone, Debug, Serialize)]
pub struct SamplingReport {
    pub block: usize,
    pub e_true: f64,
    pub epsilon: f64,
    pub trials: usize,
    pub empirical_tail: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Splits a 2N-bit population with error fraction `e_true` into N test and
/// N code bits uniformly at random and estimates
/// `P(|e_code - e_test| >= epsilon)`.
pub fn sampling_bound_check(
    block: usize,
    e_true: f64,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> SamplingReport {
    assert!(block > 0 && (0.0..=1.0).contains(&e_true));
    let population = 2 * block;
    let errors = (population as f64 * e_true).round() as usize;
    let mut flags = vec![false; population];
    for f in flags.iter_mut().take(errors) {
        *f = true;
    }
    let mut rng = stream_rng(seed, 3);
    let mut hits = 0usize;
    for _ in 0..trials {
        flags.shuffle(&mut rng);
        let test_errors = flags[..block].iter().filter(|&&f| f).count();
        let code_errors = flags[block..].iter().filter(|&&f| f).count();
        let diff = (test_errors as f64 - code_errors as f64).abs() / block as f64;
        if diff >= epsilon {
            hits += 1;
        }
    }
    let empirical_tail = hits as f64 / trials as f64;
    let bound = SAMPLING_CONSTANT * block as f64 * 2f64.powf(-(block as f64) * epsilon * epsilon);
    SamplingReport {
        block,
        e_true,
        epsilon,
        trials,
        empirical_tail,
        bound,
        pass: empirical_tail <= bound,
    }
}

/// How hashing matrices are drawn when estimating survival frequencies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum HashDrawMode {
    /// Each of the m rows is an independent uniform n-bit string; the
    /// survival probability of a fixed nonzero difference is exactly 2^{-m}.
    UniformIid,
    /// Uniform among rank-m matrices (the protocol's default draw); survival
    /// is close to, but not exactly, 2^{-m}.
    FullRank,
}

/// Empirical survival frequency of one fixed difference string under m random
/// parity checks, with the exact-uniform reference value and its sigma.
#[derive(Clone, Debug, Serialize)]
pub struct HashingSurvivalReport {
    pub n: usize,
    pub m: usize,
    pub mode: HashDrawMode,
    pub trials: usize,
    pub empirical: f64,
    pub expected_uniform: f64,
    pub sigma: f64,
    pub z_score: f64,
}

pub fn hashing_survival(
    n: usize,
    m: usize,
    mode: HashDrawMode,
    trials: usize,
    seed: u64,
) -> HashingSurvivalReport {
    assert!(m <= n && n > 0);
    let mut rng = stream_rng(seed, 4);
    let mut diff = BitVec::random(n, &mut rng);
    while diff.is_zero() {
        diff = BitVec::random(n, &mut rng);
    }
    let mut survived = 0usize;
    for _ in 0..trials {
        let survives = match mode {
            HashDrawMode::UniformIid => {
                (0..m).all(|_| !BitVec::random(n, &mut rng).dot(&diff))
            }
            HashDrawMode::FullRank => {
                let u = if m == 0 {
                    BitMatrix::zeros(0, n)
                } else {
                    random_full_rank(m, n, &mut rng)
                };
                u.mul_vec(&diff).expect("widths match").is_zero()
            }
        };
        if survives {
            survived += 1;
        }
    }
    let empirical = survived as f64 / trials as f64;
    let expected_uniform = 2f64.powi(-(m as i32));
    let sigma = (expected_uniform * (1.0 - expected_uniform) / trials as f64).sqrt();
    let z_score = if sigma > 0.0 { (empirical - expected_uniform) / sigma } else { 0.0 };
    HashingSurvivalReport {
        n,
        m,
        mode,
        trials,
        empirical,
        expected_uniform,
        sigma,
        z_score,
    }
}

/// Convenience for tests and the CLI: a random pure input state drawn from a
/// numbered stream.
pub fn random_input_state(width: usize, seed: u64, stream: u64) -> Result<StateVector, ProtocolError> {
    let mut rng = stream_rng(seed, stream);
    Ok(StateVector::random(width, &mut rng)?)
}
