//! Product distributions over functions `[M] -> [N]` and their preparation
//! unitaries.
//!
//! `samp(x)` maps `|0>` to `sum_y sqrt(p_x(y)) |y>`; the remaining columns are
//! any orthonormal completion.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevec::{check_unitary, hadamard_matrix, qft_matrix, C64};

/// Group operation used to write oracle outputs into the adversary's register.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupOp {
    #[default]
    AddModN,
    Xor,
}

impl GroupOp {
    pub fn validate(self, n: usize) -> Result<()> {
        match self {
            GroupOp::Xor if !n.is_power_of_two() => Err(Error::XorNeedsPowerOfTwo(n)),
            _ => Ok(()),
        }
    }

    /// `y o f`.
    #[inline]
    pub fn combine(self, y: usize, f: usize, n: usize) -> usize {
        match self {
            GroupOp::AddModN => (y + f) % n,
            GroupOp::Xor => y ^ f,
        }
    }

    /// `phi - eta` (or `phi ^ eta`).
    #[inline]
    pub fn subtract(self, phi: usize, eta: usize, n: usize) -> usize {
        match self {
            GroupOp::AddModN => (phi + n - eta % n) % n,
            GroupOp::Xor => phi ^ eta,
        }
    }

    /// Inverse of [`subtract`](Self::subtract).
    #[inline]
    pub fn add(self, phi: usize, eta: usize, n: usize) -> usize {
        match self {
            GroupOp::AddModN => (phi + eta) % n,
            GroupOp::Xor => phi ^ eta,
        }
    }

    /// Character `omega_N^(eta f)`, or `(-1)^(eta . f)` bitwise.
    pub fn phase(self, eta: usize, f: usize, n: usize) -> C64 {
        match self {
            GroupOp::AddModN => {
                let k = (eta * f) % n;
                C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64)
            }
            GroupOp::Xor => {
                if (eta & f).count_ones() % 2 == 0 {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(-1.0, 0.0)
                }
            }
        }
    }

    /// The Fourier transform of the group: `QFT_N`, or the Hadamard transform.
    pub fn transform(self, n: usize) -> DMatrix<C64> {
        match self {
            GroupOp::AddModN => qft_matrix(n, false),
            GroupOp::Xor => hadamard_matrix(n),
        }
    }

    pub fn inverse_transform(self, n: usize) -> DMatrix<C64> {
        match self {
            GroupOp::AddModN => qft_matrix(n, true),
            GroupOp::Xor => hadamard_matrix(n),
        }
    }
}

/// How a distribution was constructed; some fast paths depend on it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DistKind {
    Uniform,
    /// Uniform with the Hadamard transform as preparation.
    UniformXor,
    Bernoulli(f64),
    Marginals,
}

/// Marginal table as read from JSON: `{"M":..,"N":..,"rows":[[..],..]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarginalTable {
    #[serde(rename = "M")]
    pub domain: usize,
    #[serde(rename = "N")]
    pub range: usize,
    pub rows: Vec<Vec<f64>>,
}

/// Independent output distribution per input, with preparation unitaries.
#[derive(Clone, Debug)]
pub struct ProductDistribution {
    domain: usize,
    range: usize,
    marginals: Vec<Vec<f64>>,
    samp: Vec<DMatrix<C64>>,
    kind: DistKind,
}

fn check_sizes(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidDistribution(format!(
            "domain and range must be positive, got M={m}, N={n}"
        )));
    }
    Ok(())
}

/// Householder reflection taking `e_0` to `v` (a unit vector).
fn reflection_completion(v: &[f64]) -> DMatrix<C64> {
    let n = v.len();
    let mut w: Vec<f64> = v.iter().map(|x| -x).collect();
    w[0] += 1.0;
    let ww: f64 = w.iter().map(|x| x * x).sum();
    if ww.sqrt() < 1e-15 {
        return DMatrix::identity(n, n);
    }
    DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        C64::new(id - 2.0 * w[i] * w[j] / ww, 0.0)
    })
}

impl ProductDistribution {
    pub fn uniform(m: usize, n: usize) -> Result<Self> {
        check_sizes(m, n)?;
        let s = qft_matrix(n, true);
        Ok(Self {
            domain: m,
            range: n,
            marginals: vec![vec![1.0 / n as f64; n]; m],
            samp: vec![s; m],
            kind: DistKind::Uniform,
        })
    }

    /// Uniform marginals prepared by the Hadamard transform; `N` a power of two.
    pub fn uniform_xor(m: usize, n: usize) -> Result<Self> {
        check_sizes(m, n)?;
        GroupOp::Xor.validate(n)?;
        Ok(Self {
            domain: m,
            range: n,
            marginals: vec![vec![1.0 / n as f64; n]; m],
            samp: vec![hadamard_matrix(n); m],
            kind: DistKind::UniformXor,
        })
    }

    pub fn bernoulli(m: usize, lambda: f64) -> Result<Self> {
        check_sizes(m, 2)?;
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidDistribution(format!(
                "bernoulli parameter {lambda} outside [0,1]"
            )));
        }
        let a = (1.0 - lambda).sqrt();
        let b = lambda.sqrt();
        let s = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(a, 0.0), C64::new(b, 0.0), C64::new(b, 0.0), C64::new(-a, 0.0)],
        );
        Ok(Self {
            domain: m,
            range: 2,
            marginals: vec![vec![1.0 - lambda, lambda]; m],
            samp: vec![s; m],
            kind: DistKind::Bernoulli(lambda),
        })
    }

    pub fn from_marginals(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        check_sizes(m, n)?;
        let mut samp = Vec::with_capacity(m);
        for (x, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidDistribution(format!(
                    "row {x} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(bad) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "row {x} has invalid entry {bad}"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidDistribution(format!(
                    "row {x} sums to {sum}, not 1"
                )));
            }
            let v: Vec<f64> = row.iter().map(|p| p.sqrt()).collect();
            samp.push(reflection_completion(&v));
        }
        Ok(Self {
            domain: m,
            range: n,
            marginals: rows.to_vec(),
            samp,
            kind: DistKind::Marginals,
        })
    }

    pub fn from_table(table: &MarginalTable) -> Result<Self> {
        if table.rows.len() != table.domain {
            return Err(Error::InvalidDistribution(format!(
                "M={} but {} rows given",
                table.domain,
                table.rows.len()
            )));
        }
        if table.rows.iter().any(|r| r.len() != table.range) {
            return Err(Error::InvalidDistribution(format!(
                "every row must have N={} entries",
                table.range
            )));
        }
        Self::from_marginals(&table.rows)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: MarginalTable = serde_json::from_str(text)
            .map_err(|e| Error::InvalidDistribution(format!("bad marginal JSON: {e}")))?;
        Self::from_table(&table)
    }

    /// Random strictly positive marginals, one independent row per input.
    pub fn random<R: Rng>(m: usize, n: usize, rng: &mut R) -> Result<Self> {
        check_sizes(m, n)?;
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
                let s: f64 = w.iter().sum();
                let mut row: Vec<f64> = w.iter().map(|v| v / s).collect();
                // land the row sum on 1 as closely as f64 allows
                let drift: f64 = 1.0 - row.iter().sum::<f64>();
                row[0] += drift;
                row
            })
            .collect();
        Self::from_marginals(&rows)
    }

    pub fn domain_size(&self) -> usize {
        self.domain
    }

    pub fn range_size(&self) -> usize {
        self.range
    }

    pub fn kind(&self) -> DistKind {
        self.kind
    }

    pub fn marginal(&self, x: usize) -> &[f64] {
        &self.marginals[x]
    }

    pub fn samp(&self, x: usize) -> &DMatrix<C64> {
        &self.samp[x]
    }

    /// Check the distribution invariants; used by tests and loaders.
    pub fn validate(&self) -> Result<()> {
        for x in 0..self.domain {
            let p = &self.marginals[x];
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidDistribution(format!("row {x} sums to {sum}")));
            }
            check_unitary(&self.samp[x])?;
            for y in 0..self.range {
                let col = self.samp[x][(y, 0)];
                if (col - C64::new(p[y].sqrt(), 0.0)).norm() > 1e-10 {
                    return Err(Error::InvalidDistribution(format!(
                        "samp({x}) column 0 disagrees with marginal at {y}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draw a function table with independent rows.
    pub fn classical_sample<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        self.marginals
            .iter()
            .map(|p| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (y, &py) in p.iter().enumerate() {
                    acc += py;
                    if u < acc {
                        return y;
                    }
                }
                // rounding left u above the last partial sum
                p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
            })
            .collect()
    }
}
