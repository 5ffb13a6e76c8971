//! Entropies, key-generation-rate formulas, and threshold solvers.
//!
//! All logarithms are base 2. Asymptotic rates are reported per code bit; the
//! finite-size forms `rate_case_i`/`rate_case_ii` return the raw
//! `(n+s)`-scaled value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pgm::{rho_hat, RhoHat};

#[derive(Debug, Error, PartialEq)]
pub enum RatesError {
    #[error("{what} = {value} outside the valid range {range}")]
    OutOfRange { what: &'static str, value: f64, range: &'static str },
    #[error("no sign change found: rate is {0} across the whole bisection range")]
    NoSignChange(&'static str),
}

/// Binary entropy `h(x) = -x log2 x - (1-x) log2(1-x)`, with `h(0) = h(1) = 0`
/// by continuity.
pub fn binary_entropy(x: f64) -> Result<f64, RatesError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(RatesError::OutOfRange { what: "x", value: x, range: "[0, 1]" });
    }
    Ok(h(x))
}

/// Unchecked binary entropy for internal callers with validated inputs.
pub(crate) fn h(x: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x));
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Von Neumann entropy `S(rho) = h(lambda_1)` in bits.
pub fn von_neumann(rho: &RhoHat) -> f64 {
    h(rho.lambda1())
}

/// Key bits per run when only one party holds the fictitious qubit:
/// `(n+s)(1 - h(e)) - (s + d)`.
pub fn rate_case_i(n: usize, s: usize, e: f64, d: usize) -> f64 {
    (n + s) as f64 * (1.0 - h(e)) - (s + d) as f64
}

/// Key bits per run when both parties hold fictitious qubits; the display is
/// the same as case (i).
pub fn rate_case_ii(n: usize, s: usize, e: f64, d: usize) -> f64 {
    (n + s) as f64 * (1.0 - h(e)) - (s + d) as f64
}

/// The bit error rate after deliberate flips with probability `q`.
pub fn processed_error(e: f64, q: f64) -> f64 {
    e * (1.0 - q) + q * (1.0 - e)
}

/// Asymptotic noisy-processing key rate per code bit:
/// `1 - [h(e) - S(rho_hat(q, e))] - h(e(1-q) + q(1-e))`.
///
/// Error correction pays for the processed bit error rate, so the rate
/// vanishes identically at `q = 1/2` and reduces to the `1 - 2 h(e)` hashing
/// form at `q = 0`.
pub fn rate_bb84_noisy(e: f64, q: f64) -> f64 {
    assert!((0.0..=0.5).contains(&q), "q must lie in [0, 1/2]");
    assert!((0.0..=0.5).contains(&e), "e must lie in [0, 1/2]");
    let s = rho_hat(q, e).expect("validated range").entropy();
    1.0 - (h(e) - s) - h(processed_error(e, q))
}

/// Joint bit/phase error statistics feeding the conditional six-state rate.
///
/// `p_joint[x][z]` is the probability of bit-error indicator `x` and
/// phase-error indicator `z` on one code bit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SixStateModel {
    pub p_joint: [[f64; 2]; 2],
}

impl SixStateModel {
    /// The symmetric six-state channel statistics for bit error rate `e`:
    /// p(no bit, no phase) = 1 - 3e/2, the other three cells e/2 each.
    pub fn symmetric(e: f64) -> Result<Self, RatesError> {
        if !(0.0..=0.5).contains(&e) {
            return Err(RatesError::OutOfRange { what: "e", value: e, range: "[0, 1/2]" });
        }
        Self::from_joint([[1.0 - 1.5 * e, 0.5 * e], [0.5 * e, 0.5 * e]])
    }

    pub fn from_joint(p_joint: [[f64; 2]; 2]) -> Result<Self, RatesError> {
        let total: f64 = p_joint.iter().flatten().sum();
        if p_joint.iter().flatten().any(|&p| p < -1e-15) || (total - 1.0).abs() > 1e-12 {
            return Err(RatesError::OutOfRange {
                what: "p_joint",
                value: total,
                range: "entries >= 0 summing to 1",
            });
        }
        Ok(Self { p_joint })
    }

    /// Marginal bit error rate.
    pub fn bit_error_rate(&self) -> f64 {
        self.p_joint[1][0] + self.p_joint[1][1]
    }

    /// `p(X = i)` with `i = 0` meaning no bit error.
    pub fn p_bit(&self, i: usize) -> f64 {
        self.p_joint[i][0] + self.p_joint[i][1]
    }

    /// Phase error rate conditional on bit indicator `i`.
    pub fn phase_given_bit(&self, i: usize) -> f64 {
        let p = self.p_bit(i);
        if p <= 0.0 {
            0.0
        } else {
            self.p_joint[i][1] / p
        }
    }

    /// Shannon entropy of the bit-error pattern per code bit, `H(X)`.
    pub fn bit_entropy(&self) -> f64 {
        h(self.bit_error_rate())
    }

    /// Conditional entropy of the phase pattern given the bit pattern, `H(Z|X)`.
    pub fn conditional_phase_entropy(&self) -> f64 {
        (0..2).map(|i| self.p_bit(i) * h(self.phase_given_bit(i))).sum()
    }
}

/// Asymptotic six-state rate per code bit with noisy processing:
/// `1 - [H(Z|X) - sum_i p(X=i) S(rho_i)] - h(e(1-q)+q(1-e))`,
/// with `rho_i = rho_hat(q, e_i)` built from the conditional phase rates.
///
/// At `q = 0` this reduces to `1 - H(Z|X) - H(X)`, the conditional hashing
/// rate; the error-correction term tracks the processed bit error rate so
/// the `q -> 1/2` limit reproduces the noisy-processing threshold.
pub fn rate_sixstate_noisy(e: f64, q: f64, model: &SixStateModel) -> f64 {
    assert!((0.0..=0.5).contains(&q), "q must lie in [0, 1/2]");
    debug_assert!((model.bit_error_rate() - e).abs() < 1e-9, "model inconsistent with e");
    let hzx = model.conditional_phase_entropy();
    let shield_gain: f64 = (0..2)
        .map(|i| {
            let e_i = model.phase_given_bit(i).min(0.5);
            model.p_bit(i) * rho_hat(q, e_i).expect("validated range").entropy()
        })
        .sum();
    1.0 - (hzx - shield_gain) - h(processed_error(e, q))
}

/// How the noise probability is chosen when solving for a threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum QStrategy {
    Fixed(f64),
    /// Supremum over the geometric grid `q = 1/2 - 2^{-k}`, `k = 2..=30`;
    /// the supremum is attained in the `q -> 1/2` limit.
    SupGeometricGrid,
}

/// Values of the supremum grid.
pub fn q_grid() -> impl Iterator<Item = f64> {
    (2..=30).map(|k| 0.5 - 2f64.powi(-k))
}

/// Positivity cutoff for the bisection: grid entries within rounding error of
/// zero must not count as positive rates (the rate vanishes identically at
/// `q = 1/2`, so entries deep in the grid are pure cancellation noise).
const RATE_POSITIVITY_TOL: f64 = 1e-12;

/// Largest `e` at which the rate stays positive, to 1e-6 by bisection.
pub fn threshold(rate_fn: impl Fn(f64, f64) -> f64, strategy: QStrategy) -> Result<f64, RatesError> {
    let value = |e: f64| -> f64 {
        match strategy {
            QStrategy::Fixed(q) => rate_fn(e, q),
            QStrategy::SupGeometricGrid => q_grid().map(|q| rate_fn(e, q)).fold(f64::MIN, f64::max),
        }
    };
    let mut lo = 1e-9;
    let mut hi = 0.5 - 1e-9;
    if value(lo) <= RATE_POSITIVITY_TOL {
        return Err(RatesError::NoSignChange("nonpositive"));
    }
    if value(hi) > RATE_POSITIVITY_TOL {
        return Err(RatesError::NoSignChange("positive"));
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if value(mid) > RATE_POSITIVITY_TOL {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
