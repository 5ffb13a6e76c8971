//! CNOT circuit synthesis over GF(2).
//!
//! A CNOT-only circuit permutes computational-basis labels by an invertible
//! linear map `M`: applying the gate list to `|x>` yields `|M x>`. Measurement
//! semantics follow from the row picture:
//!
//! - Z-measuring output port `j` reads the input parity `row_j(z_map) . x`;
//! - X-measuring output port `i` reads the input X-parity given by
//!   `row_i(x_map)`, where `x_map = transpose(invert(z_map))`.
//!
//! Those two facts drive the constructors for the syndrome-extraction circuit
//! (`build_cnot1`) and the hashing/privacy-amplification circuit
//! (`build_cnot2`).

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2::{random_full_rank, BitMatrix, Gf2Error, LinearCode};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CnotError {
    #[error("matrix is not square or not invertible over GF(2)")]
    Singular,
    #[error("gate control and target must differ")]
    ControlEqualsTarget,
    #[error("qubit index {index} out of range for width {width}")]
    IndexOutOfRange { index: usize, width: usize },
    #[error("hashing rows and privacy-amplification rows must satisfy U_i . V_k = 0 (violated at i={i}, k={k})")]
    NotOrthogonal { i: usize, k: usize },
    #[error("rank-deficient constraint rows: {0}")]
    RankDeficient(&'static str),
    #[error("expected {expected} total rows for width {width}")]
    BadRowCount { expected: usize, width: usize },
    #[error("malformed circuit text: {0}")]
    Parse(String),
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
}

/// An ordered list of CNOT gates on `width` qubits.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnotCircuit {
    width: usize,
    gates: Vec<(usize, usize)>,
}

impl CnotCircuit {
    pub fn new(width: usize) -> Self {
        Self { width, gates: Vec::new() }
    }

    pub fn push(&mut self, control: usize, target: usize) -> Result<(), CnotError> {
        if control == target {
            return Err(CnotError::ControlEqualsTarget);
        }
        for index in [control, target] {
            if index >= self.width {
                return Err(CnotError::IndexOutOfRange { index, width: self.width });
            }
        }
        self.gates.push((control, target));
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn gates(&self) -> &[(usize, usize)] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// The invertible map on basis labels: gate `(c, t)` adds bit `c` into
    /// bit `t`, so the composite sends `x` to `z_map() * x`.
    pub fn z_map(&self) -> BitMatrix {
        let mut m = BitMatrix::identity(self.width);
        for &(c, t) in &self.gates {
            m.row_xor_assign(t, c);
        }
        m
    }

    /// The induced map on X-parity labels, `transpose(invert(z_map))`.
    ///
    /// Row `i` is the input X-parity read out when output port `i` is measured
    /// in the X basis.
    pub fn x_map(&self) -> BitMatrix {
        self.z_map()
            .invert()
            .expect("z_map of a CNOT circuit is always invertible")
            .transpose()
    }

    /// Text form: a `width N` header, then one `c <control> <target>` line per gate.
    pub fn to_text(&self) -> String {
        let mut out = format!("width {}\n", self.width);
        for &(c, t) in &self.gates {
            out.push_str(&format!("c {c} {t}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CnotError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| CnotError::Parse("empty input".into()))?;
        let width = header
            .strip_prefix("width ")
            .and_then(|w| w.trim().parse().ok())
            .ok_or_else(|| CnotError::Parse(format!("bad header {header:?}")))?;
        let mut circuit = CnotCircuit::new(width);
        for line in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["c", c, t] => {
                    let c = c.parse().map_err(|_| CnotError::Parse(format!("bad gate line {line:?}")))?;
                    let t = t.parse().map_err(|_| CnotError::Parse(format!("bad gate line {line:?}")))?;
                    circuit.push(c, t)?;
                }
                _ => return Err(CnotError::Parse(format!("bad gate line {line:?}"))),
            }
        }
        Ok(circuit)
    }
}

impl fmt::Debug for CnotCircuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CnotCircuit(width={}, gates={:?})", self.width, self.gates)
    }
}

/// The Z-label map of a circuit paired with its induced X-parity map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearMapPair {
    z_map: BitMatrix,
    x_map: BitMatrix,
}

impl LinearMapPair {
    pub fn from_circuit(circuit: &CnotCircuit) -> Self {
        Self { z_map: circuit.z_map(), x_map: circuit.x_map() }
    }

    pub fn z_map(&self) -> &BitMatrix {
        &self.z_map
    }

    pub fn x_map(&self) -> &BitMatrix {
        &self.x_map
    }
}

/// Synthesizes a gate list whose basis action is `|x> -> |m x>`.
///
/// Gaussian elimination reduces `m` to the identity with row additions only
/// (a needed pivot is created by adding a lower row, never by swapping), and
/// the recorded operations are replayed in reverse as CNOT gates. Gate count
/// is O(width^2).
pub fn synthesize(m: &BitMatrix) -> Result<CnotCircuit, CnotError> {
    let n = m.row_count();
    if n != m.col_count() || m.rank() != n {
        return Err(CnotError::Singular);
    }
    let mut work = m.clone();
    // ops hold (target, source) row additions in elimination order
    let mut ops: Vec<(usize, usize)> = Vec::new();
    for col in 0..n {
        if !work.get(col, col) {
            let pivot = (col + 1..n)
                .find(|&r| work.get(r, col))
                .expect("full-rank matrix always has a pivot below the diagonal");
            work.row_xor_assign(col, pivot);
            ops.push((col, pivot));
        }
        for row in 0..n {
            if row != col && work.get(row, col) {
                work.row_xor_assign(row, col);
                ops.push((row, col));
            }
        }
    }
    debug_assert_eq!(work, BitMatrix::identity(n));
    let mut circuit = CnotCircuit::new(n);
    for &(target, source) in ops.iter().rev() {
        circuit.push(source, target)?;
    }
    Ok(circuit)
}

/// The syndrome-extraction circuit for a linear code.
///
/// Output ports are laid out so that the first `n` ports carry a
/// key-information basis (the greedy standard-basis completion `K` of the
/// parity check) and the last `s` ports carry the syndrome: the circuit's
/// `z_map` is `[K; H]`. Returns the circuit together with `K`.
pub fn build_cnot1(code: &LinearCode) -> Result<(CnotCircuit, BitMatrix), CnotError> {
    let h = code.parity_check();
    let k = h.standard_completion();
    let z_map = k.vstack(h);
    let circuit = synthesize(&z_map)?;
    Ok((circuit, k))
}

/// Builds the hashing/privacy-amplification circuit from the X-parity rows
/// `u` (m x n) and the key rows `v` ((n-m) x n).
///
/// The returned circuit has width `n`; X-measuring output ports `0..m`
/// realizes the parities `{X^{U_i}}` on the inputs and Z-measuring ports
/// `m..n` realizes `{Z^{V_k}}`. Construction: complete `v` with `m` rows `A`
/// satisfying `A U^T = I` (solvable because `u` has full row rank); duality
/// of the row bases then forces the X-port rows of the x_map to equal `u`
/// exactly, and `[A; V]` is automatically invertible.
pub fn build_cnot2(u: &BitMatrix, v: &BitMatrix) -> Result<CnotCircuit, CnotError> {
    let n = v.col_count();
    let m = u.row_count();
    if u.col_count() != n || m + v.row_count() != n {
        return Err(CnotError::BadRowCount { expected: n, width: n });
    }
    if u.rank() != m {
        return Err(CnotError::RankDeficient("hashing rows U"));
    }
    if v.rank() != v.row_count() {
        return Err(CnotError::RankDeficient("privacy-amplification rows V"));
    }
    for (i, u_row) in u.rows().iter().enumerate() {
        for (k, v_row) in v.rows().iter().enumerate() {
            if u_row.dot(v_row) {
                return Err(CnotError::NotOrthogonal { i, k });
            }
        }
    }
    let a = dual_rows(u);
    let z_map = a.vstack(v);
    debug_assert_eq!(z_map.rank(), n);
    let circuit = synthesize(&z_map)?;
    debug_assert_eq!(&circuit.x_map().rows()[..m], u.rows());
    Ok(circuit)
}

/// Rows `A_j` with `U_i . A_j = delta_ij`, derived canonically from the RREF
/// of `u` (coefficients on the pivot columns).
fn dual_rows(u: &BitMatrix) -> BitMatrix {
    let m = u.row_count();
    let n = u.col_count();
    let (_, transform, pivots) = u.rref();
    let mut rows = Vec::with_capacity(m);
    for j in 0..m {
        let mut row = crate::gf2::BitVec::zeros(n);
        for (i, &p) in pivots.iter().enumerate() {
            if transform.get(i, j) {
                row.set(p, true);
            }
        }
        rows.push(row);
    }
    BitMatrix::from_rows(rows, n)
}

/// Draws a uniformly random rank-`m` hashing matrix `U`, takes the canonical
/// kernel basis as the privacy-amplification rows `V`, and synthesizes the
/// circuit. Deterministic for a fixed RNG state.
pub fn random_hashing_circuit(
    n: usize,
    m: usize,
    rng: &mut impl Rng,
) -> Result<(CnotCircuit, BitMatrix, BitMatrix), CnotError> {
    assert!(m < n, "need m < n for a nonempty key");
    let u = if m == 0 {
        BitMatrix::zeros(0, n)
    } else {
        random_full_rank(m, n, rng)
    };
    let v = u.kernel_basis();
    debug_assert_eq!(v.row_count(), n - m);
    let circuit = build_cnot2(&u, &v)?;
    Ok((circuit, u, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2::BitVec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn synthesize_identity_is_empty() {
        let c = synthesize(&BitMatrix::identity(4)).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn synthesize_single_transvection() {
        let m = BitMatrix::from_dense(&[&[1, 0], &[1, 1]]);
        let c = synthesize(&m).unwrap();
        assert_eq!(c.gates(), &[(0, 1)]);
        assert_eq!(c.z_map(), m);
    }

    #[test]
    fn synthesize_rejects_singular() {
        let m = BitMatrix::from_dense(&[&[1, 1], &[1, 1]]);
        assert_eq!(synthesize(&m).unwrap_err(), CnotError::Singular);
    }

    #[test]
    fn synthesize_matches_map_on_all_labels() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for width in 2..=8usize {
            for _ in 0..8 {
                let m = random_full_rank(width, width, &mut rng);
                let c = synthesize(&m).unwrap();
                assert_eq!(c.z_map(), m);
                // exhaustive label check: replay the gate list on each bit string
                for idx in 0..1usize << width {
                    let x = BitVec::from_index(width, idx);
                    let mut label = x.clone();
                    for &(ctrl, tgt) in c.gates() {
                        if label.get(ctrl) {
                            label.flip(tgt);
                        }
                    }
                    assert_eq!(label, m.mul_vec(&x).unwrap());
                }
            }
        }
    }

    #[test]
    fn x_map_of_empty_circuit_is_identity() {
        let c = CnotCircuit::new(3);
        assert_eq!(c.x_map(), BitMatrix::identity(3));
    }

    #[test]
    fn x_map_of_single_cnot() {
        let mut c = CnotCircuit::new(2);
        c.push(0, 1).unwrap();
        assert_eq!(c.z_map(), BitMatrix::from_dense(&[&[1, 0], &[1, 1]]));
        assert_eq!(c.x_map(), BitMatrix::from_dense(&[&[1, 1], &[0, 1]]));
    }

    #[test]
    fn heisenberg_duality_random_circuits() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let width = 2 + (rng.gen::<usize>() % 5);
            let mut c = CnotCircuit::new(width);
            for _ in 0..rng.gen_range(0..12) {
                let a = rng.gen_range(0..width);
                let mut b = rng.gen_range(0..width);
                while b == a {
                    b = rng.gen_range(0..width);
                }
                c.push(a, b).unwrap();
            }
            let product = c.x_map().mul_mat(&c.z_map().transpose());
            assert_eq!(product, BitMatrix::identity(width));
        }
    }

    #[test]
    fn build_cnot2_two_qubit_example() {
        let u = BitMatrix::from_dense(&[&[1, 1]]);
        let v = BitMatrix::from_dense(&[&[1, 1]]);
        // (1,1).(1,1) = 0 mod 2, so this is admissible
        let c = build_cnot2(&u, &v).unwrap();
        assert_eq!(&c.x_map().rows()[..1], u.rows());
        assert_eq!(&c.z_map().rows()[1..], v.rows());
    }

    #[test]
    fn build_cnot2_rejects_nonorthogonal() {
        let u = BitMatrix::from_dense(&[&[1, 0]]);
        let v = BitMatrix::from_dense(&[&[1, 0]]);
        assert_eq!(
            build_cnot2(&u, &v).unwrap_err(),
            CnotError::NotOrthogonal { i: 0, k: 0 }
        );
    }

    #[test]
    fn build_cnot2_from_random_kernel_pair() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..20 {
            let v = random_full_rank(2, 4, &mut rng);
            let u = v.kernel_basis();
            assert_eq!(u.row_count(), 2);
            let c = build_cnot2(&u, &v).unwrap();
            assert_eq!(&c.x_map().rows()[..2], u.rows());
            assert_eq!(&c.z_map().rows()[2..], v.rows());
        }
    }

    #[test]
    fn build_cnot2_measurement_semantics() {
        use crate::qsim::{Basis, StateVector};
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let (n, m) = (4usize, 2usize);
        let (circuit, u, v) = random_hashing_circuit(n, m, &mut rng).unwrap();
        let all: Vec<usize> = (0..n).collect();
        for label in 0..1usize << n {
            let x = crate::gf2::BitVec::from_index(n, label);
            // Z-basis input |x>: Z-measuring the last n-m ports reads V_k . x
            let st = StateVector::basis_state(&x).unwrap().apply_circuit(&circuit).unwrap();
            let dist = st.measurement_distribution(Basis::Z, &[m, m + 1]).unwrap();
            assert_eq!(dist.len(), 1);
            assert_eq!(dist[0].0, v.mul_vec(&x).unwrap());
            // X-basis input |e_x>: X-measuring the first m ports reads U_i . x
            let ex = StateVector::basis_state(&x)
                .unwrap()
                .apply_hadamards(&all)
                .unwrap()
                .apply_circuit(&circuit)
                .unwrap();
            let dist = ex.measurement_distribution(Basis::X, &[0, 1]).unwrap();
            assert_eq!(dist.len(), 1);
            assert_eq!(dist[0].0, u.mul_vec(&x).unwrap());
        }
    }

    #[test]
    fn random_hashing_orthogonality() {
        for (n, m, seed) in [(2, 1, 4u64), (4, 2, 3), (6, 3, 17)] {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let (circuit, u, v) = random_hashing_circuit(n, m, &mut rng).unwrap();
            assert_eq!(u.rank(), m);
            assert_eq!(v.rank(), n - m);
            assert!(u.mul_mat(&v.transpose()).is_zero());
            assert_eq!(circuit.width(), n);
        }
    }

    #[test]
    fn random_hashing_degenerate_m_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let (circuit, u, v) = random_hashing_circuit(3, 0, &mut rng).unwrap();
        assert_eq!(u.row_count(), 0);
        assert_eq!(v, BitMatrix::identity(3));
        assert!(circuit.is_empty());
    }

    #[test]
    fn cnot1_ports_carry_syndrome_rows() {
        let code = LinearCode::new(BitMatrix::from_dense(&[&[1, 1, 0, 0], &[0, 0, 1, 1]])).unwrap();
        let (circuit, k) = build_cnot1(&code).unwrap();
        let z = circuit.z_map();
        assert_eq!(&z.rows()[..2], k.rows());
        assert_eq!(&z.rows()[2..], code.parity_check().rows());
    }

    #[test]
    fn linear_map_pair_invariant() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        for _ in 0..50 {
            let m = random_full_rank(4, 4, &mut rng);
            let circuit = synthesize(&m).unwrap();
            let pair = LinearMapPair::from_circuit(&circuit);
            assert_eq!(pair.z_map(), &m);
            assert_eq!(
                pair.x_map(),
                &m.invert().unwrap().transpose(),
                "x_map must be the transposed inverse of z_map"
            );
        }
    }

    #[test]
    fn text_roundtrip() {
        let mut c = CnotCircuit::new(4);
        c.push(0, 3).unwrap();
        c.push(2, 1).unwrap();
        let text = c.to_text();
        assert_eq!(text, "width 4\nc 0 3\nc 2 1\n");
        assert_eq!(CnotCircuit::from_text(&text).unwrap(), c);
    }

    #[test]
    fn push_validates_indices() {
        let mut c = CnotCircuit::new(2);
        assert_eq!(c.push(1, 1).unwrap_err(), CnotError::ControlEqualsTarget);
        assert_eq!(
            c.push(0, 2).unwrap_err(),
            CnotError::IndexOutOfRange { index: 2, width: 2 }
        );
    }
}
