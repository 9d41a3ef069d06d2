//! Closed-form bounds on `P[Find]`, distinguishing advantages and the
//! sponge indifferentiability error.
//!
//! Every `P[Find]` bound is exactly zero at `q = 0`: with no queries the
//! database stays empty and no relation can hold.

use serde::Serialize;

use crate::error::{Error, Result};

/// A bound as evaluated, plus its value as a probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundValue {
    pub raw: f64,
    pub clamped: f64,
    /// The raw value exceeds 1, so the statement says nothing.
    pub vacuous: bool,
}

impl BoundValue {
    pub fn new(raw: f64) -> Self {
        Self {
            raw,
            clamped: raw.min(1.0),
            vacuous: raw > 1.0,
        }
    }
}

fn require_range(q: usize, n: usize) -> Result<()> {
    if q >= n {
        return Err(Error::InvalidParameter(format!(
            "bound needs q < N, got q={q}, N={n}"
        )));
    }
    Ok(())
}

/// Classical collision-or-zero-preimage bound on the inner part:
/// `q(q+1) / 2^(c+1)`.
pub fn f_coll(q: usize, c: u32) -> f64 {
    let q = q as f64;
    q * (q + 1.0) / 2f64.powi(c as i32 + 1)
}

/// Quantum counterpart, for `q` up to about `2^(c/4)`: `7q(q+1) / 2^c`.
pub fn f_coll_q(q: usize, c: u32) -> f64 {
    let q = q as f64;
    7.0 * q * (q + 1.0) / 2f64.powi(c as i32)
}

/// `P[Find]` for the oracle punctured on collisions and zero-preimages.
pub fn lemma3_bound(q: usize, n: usize) -> Result<f64> {
    require_range(q, n)?;
    let (q, n) = (q as f64, n as f64);
    Ok(2.0 * q * (q + 1.0) / n
        + 3.0 * q.powi(2) * (q + 1.0).powi(2) / (n * (n - q).sqrt())
        + 2.0 * q.powi(3) * (q + 1.0).powi(3) / (n * (n - q)))
}

/// The simpler bound `4 sqrt(q^5 / N)` for the same puncturing.
pub fn weaker_coll_preim_bound(q: usize, n: usize) -> f64 {
    4.0 * ((q as f64).powi(5) / n as f64).sqrt()
}

/// `P[Find]` for the oracle punctured on collisions only.
pub fn coll_only_bound(q: usize, n: usize) -> Result<f64> {
    require_range(q, n)?;
    if q == 0 {
        return Ok(0.0);
    }
    let (q, n) = (q as f64, n as f64);
    Ok(2.0 * q * (1.0 + q) / n
        + 3.0 * q.powi(2) * (1.0 + q).powi(2) / (n * (n - q).sqrt())
        + 6.0 * q.powi(3) * (1.0 + q).powi(2) * (1.0 + q.powi(2)) / (4.0 * n * (n - q)))
}

/// `P[Find]` for the oracle punctured on zero-preimages only. The
/// polynomial has a constant term, so `q = 0` is handled separately.
pub fn preim_only_bound(q: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("bound needs N >= 2, got {n}")));
    }
    if q == 0 {
        return Ok(0.0);
    }
    let (q, n) = (q as f64, n as f64);
    Ok(9.0 * q / n
        + 15.0 * q * (q + 1.0) / (n * (n - 1.0).sqrt())
        + 5.0 * 2.0 * (q + 1.0) * (2.0 * q + 1.0) / (n * (n - 1.0)))
}

/// Zero-preimage probability after `q` queries to the unpunctured standard
/// oracle: `q^2 / N`.
pub fn zhandry_preim(q: usize, n: usize) -> f64 {
    (q as f64).powi(2) / n as f64
}

/// Collision probability after `q` queries: `3 q^3 / N`.
pub fn zhandry_coll(q: usize, n: usize) -> f64 {
    3.0 * (q as f64).powi(3) / n as f64
}

/// Loss of `r` successive measurements, each passing with probability at
/// least `1 - eps`: `2 r sqrt(eps)`.
pub fn gentle_multi(r: usize, eps: f64) -> f64 {
    2.0 * r as f64 * eps.sqrt()
}

/// One-way-to-hiding bound `sqrt((d+1) P[Find])`.
pub fn o2h_bound(d: usize, p_find: f64) -> f64 {
    ((d as f64 + 1.0) * p_find).sqrt()
}

/// Classical sponge indifferentiability error `8 f_coll(q)`.
pub fn classical_indiff_eps(q: usize, c: u32) -> f64 {
    8.0 * f_coll(q, c)
}

/// Quantum sponge indifferentiability error
/// `56 q(q+1)/2^c + sqrt(7 q (q+1)^2 / 2^c)`.
pub fn quantum_indiff_eps(q: usize, c: u32) -> f64 {
    let (qf, two_c) = (q as f64, 2f64.powi(c as i32));
    56.0 * qf * (qf + 1.0) / two_c + (7.0 * qf * (qf + 1.0).powi(2) / two_c).sqrt()
}

/// The same error assembled from its game hops:
/// `8 f_coll_q + sqrt((q+1) f_coll_q)`.
pub fn quantum_indiff_eps_from_hops(q: usize, c: u32) -> f64 {
    let f = f_coll_q(q, c);
    8.0 * f + ((q as f64 + 1.0) * f).sqrt()
}

/// One row of the `bounds` table.
#[derive(Clone, Debug, Serialize)]
pub struct BoundsRow {
    pub q: usize,
    pub n: usize,
    pub c: u32,
    pub lemma3: Option<BoundValue>,
    pub weaker: BoundValue,
    pub coll_only: Option<BoundValue>,
    pub preim_only: Option<BoundValue>,
    pub zhandry_preim: BoundValue,
    pub zhandry_coll: BoundValue,
    pub f_coll: BoundValue,
    pub f_coll_q: BoundValue,
    pub classical_eps: BoundValue,
    pub quantum_eps: BoundValue,
}

/// Evaluate every bound at `(q, N = 2^c)`.
pub fn bounds_row(q: usize, c: u32) -> BoundsRow {
    let n = 1usize << c;
    BoundsRow {
        q,
        n,
        c,
        lemma3: lemma3_bound(q, n).ok().map(BoundValue::new),
        weaker: BoundValue::new(weaker_coll_preim_bound(q, n)),
        coll_only: coll_only_bound(q, n).ok().map(BoundValue::new),
        preim_only: preim_only_bound(q, n).ok().map(BoundValue::new),
        zhandry_preim: BoundValue::new(zhandry_preim(q, n)),
        zhandry_coll: BoundValue::new(zhandry_coll(q, n)),
        f_coll: BoundValue::new(f_coll(q, c)),
        f_coll_q: BoundValue::new(f_coll_q(q, c)),
        classical_eps: BoundValue::new(classical_indiff_eps(q, c)),
        quantum_eps: BoundValue::new(quantum_indiff_eps(q, c)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_queries() {
        assert_eq!(f_coll(0, 3), 0.0);
        assert_eq!(f_coll_q(0, 3), 0.0);
        assert_eq!(lemma3_bound(0, 16).unwrap(), 0.0);
        assert_eq!(weaker_coll_preim_bound(0, 16), 0.0);
        assert_eq!(coll_only_bound(0, 16).unwrap(), 0.0);
        assert_eq!(preim_only_bound(0, 16).unwrap(), 0.0);
        assert_eq!(zhandry_preim(0, 16), 0.0);
        assert_eq!(zhandry_coll(0, 16), 0.0);
        assert_eq!(gentle_multi(4, 0.0), 0.0);
        assert_eq!(o2h_bound(3, 0.0), 0.0);
        assert_eq!(classical_indiff_eps(0, 4), 0.0);
        assert_eq!(quantum_indiff_eps(0, 4), 0.0);
    }

    #[test]
    fn worked_values() {
        assert_abs_diff_eq!(f_coll(2, 3), 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(f_coll(1, 1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f_coll_q(1, 4), 0.875, epsilon = 1e-15);
        assert_abs_diff_eq!(f_coll_q(2, 8), 42.0 / 256.0, epsilon = 1e-15);
        let l3 = 0.25 + 12.0 / (16.0 * 15f64.sqrt()) + 16.0 / 240.0;
        assert_abs_diff_eq!(lemma3_bound(1, 16).unwrap(), l3, epsilon = 1e-15);
        assert!((l3 - 0.5103).abs() < 1e-4);
        assert_abs_diff_eq!(weaker_coll_preim_bound(1, 16), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(weaker_coll_preim_bound(2, 1024), 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(zhandry_preim(2, 16), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(zhandry_coll(2, 16), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(gentle_multi(1, 0.25), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gentle_multi(3, 0.01), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(o2h_bound(2, 0.25), 0.75f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(o2h_bound(0, 1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(classical_indiff_eps(2, 3), 3.0, epsilon = 1e-15);
        assert!(BoundValue::new(classical_indiff_eps(2, 3)).vacuous);
        assert_eq!(BoundValue::new(1.5).clamped, 1.0);
    }

    #[test]
    fn rejects_q_at_least_n() {
        assert!(lemma3_bound(16, 16).is_err());
        assert!(coll_only_bound(4, 4).is_err());
        assert!(preim_only_bound(1, 1).is_err());
    }

    #[test]
    fn quantum_eps_forms_agree() {
        for q in 0..=10 {
            for c in 1..=12 {
                let (a, b) = (quantum_indiff_eps(q, c), quantum_indiff_eps_from_hops(q, c));
                assert!((a - b).abs() <= 1e-12 * a.max(1.0), "q={q} c={c}");
            }
        }
    }
}
