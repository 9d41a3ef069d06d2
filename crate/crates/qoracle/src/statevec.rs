//! Complex state vectors over named registers of mixed cardinality.
//!
//! A basis label is a tuple with one coordinate per register. Labels are
//! packed into a `u128` key, giving each register `ceil(log2(cardinality))`
//! bits, with the first-listed register in the most significant bits. Sorting
//! keys therefore sorts labels lexicographically, and the dense index of a
//! label is its mixed-radix value with the same register order.
//!
//! Amplitudes are stored sparsely: only labels with a nonzero amplitude are
//! kept. Every operation is exact on the stored support, so this is the same
//! vector as the dense one; it just skips the (vast) zero part of oracle
//! states with many scratch and database registers.

use std::collections::hash_map::Entry;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};

/// Tolerance for physics invariants (norm, unitarity, scratch cleanliness).
pub const TOL_INVARIANT: f64 = 1e-10;
/// Tolerance for involution round trips.
pub const TOL_ROUNDTRIP: f64 = 1e-12;
/// Largest dense vector `to_dense` and exhaustive checks will materialize.
pub const DENSE_CAP: u128 = 1 << 24;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

fn bit_width(cardinality: usize) -> u32 {
    if cardinality <= 1 {
        0
    } else {
        usize::BITS - (cardinality - 1).leading_zeros()
    }
}

/// Ordered list of named registers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterLayout {
    names: Vec<String>,
    cards: Vec<usize>,
    shifts: Vec<u32>,
    widths: Vec<u32>,
}

impl RegisterLayout {
    pub fn new<S: AsRef<str>>(registers: &[(S, usize)]) -> Result<Self> {
        let mut names = Vec::with_capacity(registers.len());
        let mut cards = Vec::with_capacity(registers.len());
        for (name, card) in registers {
            let name = name.as_ref().to_string();
            if *card == 0 {
                return Err(Error::BadCardinality {
                    name,
                    cardinality: *card,
                });
            }
            if names.contains(&name) {
                return Err(Error::DuplicateRegister(name));
            }
            names.push(name);
            cards.push(*card);
        }
        let widths: Vec<u32> = cards.iter().map(|&c| bit_width(c)).collect();
        let bits: u32 = widths.iter().sum();
        if bits > 128 {
            return Err(Error::LayoutTooWide { bits });
        }
        let mut shifts = vec![0u32; widths.len()];
        let mut acc = 0u32;
        for i in (0..widths.len()).rev() {
            shifts[i] = acc;
            acc += widths[i];
        }
        Ok(Self {
            names,
            cards,
            shifts,
            widths,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cardinality(&self, index: usize) -> usize {
        self.cards[index]
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownRegister(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn indices_of<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.index_of(n.as_ref())).collect()
    }

    /// Product of all cardinalities, saturating at `u128::MAX`.
    pub fn total_dim(&self) -> u128 {
        self.cards
            .iter()
            .try_fold(1u128, |acc, &c| acc.checked_mul(c as u128))
            .unwrap_or(u128::MAX)
    }

    pub fn check_label(&self, label: &[usize]) -> Result<()> {
        if label.len() != self.len() {
            return Err(Error::LabelLength {
                expected: self.len(),
                got: label.len(),
            });
        }
        for (i, &v) in label.iter().enumerate() {
            if v >= self.cards[i] {
                return Err(Error::OutOfRange {
                    name: self.names[i].clone(),
                    value: v,
                    cardinality: self.cards[i],
                });
            }
        }
        Ok(())
    }

    pub fn encode(&self, label: &[usize]) -> Result<u128> {
        self.check_label(label)?;
        Ok(self.encode_unchecked(label))
    }

    #[inline]
    fn encode_unchecked(&self, label: &[usize]) -> u128 {
        let mut key = 0u128;
        for (i, &v) in label.iter().enumerate() {
            key |= (v as u128) << self.shifts[i];
        }
        key
    }

    #[inline]
    fn decode_into(&self, key: u128, out: &mut [usize]) {
        for i in 0..self.len() {
            let w = self.widths[i];
            out[i] = if w == 0 {
                0
            } else {
                ((key >> self.shifts[i]) & ((1u128 << w) - 1)) as usize
            };
        }
    }

    pub fn decode(&self, key: u128) -> Vec<usize> {
        let mut out = vec![0; self.len()];
        self.decode_into(key, &mut out);
        out
    }

    #[inline]
    fn field_mask(&self, index: usize) -> u128 {
        let w = self.widths[index];
        if w == 0 {
            0
        } else {
            ((1u128 << w) - 1) << self.shifts[index]
        }
    }

    /// Mixed-radix index of a label, first register most significant.
    pub fn dense_index(&self, label: &[usize]) -> u128 {
        label
            .iter()
            .zip(&self.cards)
            .fold(0u128, |acc, (&v, &c)| acc * c as u128 + v as u128)
    }

    /// Inverse of [`dense_index`](Self::dense_index).
    pub fn label_of_index(&self, mut index: u128) -> Vec<usize> {
        let mut out = vec![0; self.len()];
        for i in (0..self.len()).rev() {
            let c = self.cards[i] as u128;
            out[i] = (index % c) as usize;
            index /= c;
        }
        out
    }

    pub fn with_appended<S: AsRef<str>>(&self, extra: &[(S, usize)]) -> Result<Self> {
        let mut regs: Vec<(String, usize)> = self
            .names
            .iter()
            .cloned()
            .zip(self.cards.iter().copied())
            .collect();
        regs.extend(extra.iter().map(|(n, c)| (n.as_ref().to_string(), *c)));
        Self::new(&regs)
    }

    fn restricted(&self, keep: &[usize]) -> Result<Self> {
        let regs: Vec<(String, usize)> = keep
            .iter()
            .map(|&i| (self.names[i].clone(), self.cards[i]))
            .collect();
        Self::new(&regs)
    }
}

/// A square unitary acting on a list of target registers.
#[derive(Clone, Debug)]
pub struct LocalUnitary {
    targets: Vec<String>,
    matrix: DMatrix<C64>,
}

/// Largest deviation of `m m^dagger` from the identity.
pub fn unitarity_deviation(m: &DMatrix<C64>) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let prod = m * m.adjoint();
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let expect = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - C64::new(expect, 0.0)).norm());
        }
    }
    worst
}

pub fn check_unitary(m: &DMatrix<C64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let deviation = unitarity_deviation(m);
    if deviation > TOL_INVARIANT {
        return Err(Error::NotUnitary { deviation });
    }
    Ok(())
}

impl LocalUnitary {
    pub fn new<S: AsRef<str>>(targets: &[S], matrix: DMatrix<C64>) -> Result<Self> {
        check_unitary(&matrix)?;
        Ok(Self {
            targets: targets.iter().map(|s| s.as_ref().to_string()).collect(),
            matrix,
        })
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }
}

/// `QFT_N` with entries `omega^(xi*x)/sqrt(N)`, `omega = exp(2 pi i / N)`.
pub fn qft_matrix(n: usize, inverse: bool) -> DMatrix<C64> {
    let scale = 1.0 / (n as f64).sqrt();
    let sign = if inverse { -1.0 } else { 1.0 };
    DMatrix::from_fn(n, n, |xi, x| {
        let k = (xi * x) % n;
        C64::from_polar(scale, sign * 2.0 * PI * k as f64 / n as f64)
    })
}

/// Hadamard transform on `log2(n)` bits.
pub fn hadamard_matrix(n: usize) -> DMatrix<C64> {
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |xi, x| {
        if (xi & x).count_ones() % 2 == 0 {
            C64::new(scale, 0.0)
        } else {
            C64::new(-scale, 0.0)
        }
    })
}

/// Haar-random unitary from the QR decomposition of a complex Gaussian
/// matrix, with the phases of `R`'s diagonal folded back into `Q`.
pub fn random_unitary<R: rand::Rng>(dim: usize, rng: &mut R) -> DMatrix<C64> {
    let mut gauss = || {
        let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        (r * (2.0 * PI * u2).cos(), r * (2.0 * PI * u2).sin())
    };
    let z = DMatrix::from_fn(dim, dim, |_, _| {
        let (a, b) = gauss();
        C64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Outcome of a projective two-outcome measurement.
#[derive(Clone, Debug)]
pub struct Projection {
    pub probability: f64,
    pub accepted: Option<QState>,
    pub rejected: Option<QState>,
}

/// Sparse amplitude vector over a [`RegisterLayout`].
#[derive(Clone, Debug)]
pub struct QState {
    layout: RegisterLayout,
    amps: FxHashMap<u128, C64>,
    prune: f64,
}

impl QState {
    pub fn basis(layout: RegisterLayout, label: &[usize]) -> Result<Self> {
        let key = layout.encode(label)?;
        let mut amps = FxHashMap::default();
        amps.insert(key, C64::new(1.0, 0.0));
        Ok(Self {
            layout,
            amps,
            prune: 0.0,
        })
    }

    /// Builds a state from explicit amplitudes. Repeated labels add up.
    pub fn from_amplitudes<I>(layout: RegisterLayout, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, C64)>,
    {
        let mut amps: FxHashMap<u128, C64> = FxHashMap::default();
        for (label, amp) in entries {
            let key = layout.encode(&label)?;
            *amps.entry(key).or_insert(ZERO) += amp;
        }
        amps.retain(|_, a| *a != ZERO);
        Ok(Self {
            layout,
            amps,
            prune: 0.0,
        })
    }

    /// An all-zero vector, used as an accumulator.
    pub fn zero(layout: RegisterLayout) -> Self {
        Self {
            layout,
            amps: FxHashMap::default(),
            prune: 0.0,
        }
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    /// Drop amplitudes with modulus at or below `threshold` after each
    /// linear-algebra step. Zero (the default) keeps every nonzero entry.
    pub fn set_prune_threshold(&mut self, threshold: f64) {
        self.prune = threshold.max(0.0);
    }

    pub fn prune_threshold(&self) -> f64 {
        self.prune
    }

    pub fn support_len(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitude(&self, label: &[usize]) -> Result<C64> {
        let key = self.layout.encode(label)?;
        Ok(self.amps.get(&key).copied().unwrap_or(ZERO))
    }

    /// Support entries sorted by label.
    pub fn entries(&self) -> Vec<(Vec<usize>, C64)> {
        let mut keys: Vec<&u128> = self.amps.keys().collect();
        keys.sort_unstable();
        keys.into_iter()
            .map(|k| (self.layout.decode(*k), self.amps[k]))
            .collect()
    }

    /// Visit every support label without allocating per entry.
    pub fn for_each(&self, mut f: impl FnMut(&[usize], C64)) {
        let mut buf = vec![0usize; self.layout.len()];
        for (&k, &a) in &self.amps {
            self.layout.decode_into(k, &mut buf);
            f(&buf, a);
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&mut self, factor: C64) {
        for a in self.amps.values_mut() {
            *a *= factor;
        }
        self.amps.retain(|_, a| *a != ZERO);
    }

    /// Rescale to unit norm; a zero vector is left untouched.
    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.scale(C64::new(1.0 / n, 0.0));
        }
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &QState, factor: C64) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch);
        }
        for (&k, &a) in &other.amps {
            *self.amps.entry(k).or_insert(ZERO) += factor * a;
        }
        self.amps.retain(|_, a| *a != ZERO);
        Ok(())
    }

    /// Total weight of labels satisfying `pred`.
    pub fn weight_where(&self, mut pred: impl FnMut(&[usize]) -> bool) -> f64 {
        let mut buf = vec![0usize; self.layout.len()];
        let mut w = 0.0;
        for (&k, a) in &self.amps {
            self.layout.decode_into(k, &mut buf);
            if pred(&buf) {
                w += a.norm_sqr();
            }
        }
        w
    }

    /// Probability distribution of the given registers' joint values.
    pub fn marginal<S: AsRef<str>>(&self, registers: &[S]) -> Result<Vec<(Vec<usize>, f64)>> {
        let idx = self.layout.indices_of(registers)?;
        let mut dist: FxHashMap<Vec<usize>, f64> = FxHashMap::default();
        self.for_each(|label, a| {
            let key: Vec<usize> = idx.iter().map(|&i| label[i]).collect();
            *dist.entry(key).or_insert(0.0) += a.norm_sqr();
        });
        let mut out: Vec<_> = dist.into_iter().collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    /// Dense amplitude vector in mixed-radix order.
    pub fn to_dense(&self) -> Result<Vec<C64>> {
        let dim = self.layout.total_dim();
        if dim > DENSE_CAP {
            return Err(Error::SizeGuard { dim, cap: DENSE_CAP });
        }
        let mut out = vec![ZERO; dim as usize];
        self.for_each(|label, a| out[self.layout.dense_index(label) as usize] = a);
        Ok(out)
    }

    pub fn inner(&self, other: &QState) -> Result<C64> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch);
        }
        let (small, large, conj_small) = if self.amps.len() <= other.amps.len() {
            (&self.amps, &other.amps, true)
        } else {
            (&other.amps, &self.amps, false)
        };
        let mut acc = ZERO;
        for (k, a) in small {
            if let Some(b) = large.get(k) {
                acc += if conj_small { a.conj() * b } else { b.conj() * a };
            }
        }
        Ok(acc)
    }

    /// Euclidean norm of the amplitude difference. Global phase counts.
    pub fn l2_distance(&self, other: &QState) -> Result<f64> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch);
        }
        let mut acc = 0.0;
        for (k, a) in &self.amps {
            let b = other.amps.get(k).copied().unwrap_or(ZERO);
            acc += (a - b).norm_sqr();
        }
        for (k, b) in &other.amps {
            if !self.amps.contains_key(k) {
                acc += b.norm_sqr();
            }
        }
        Ok(acc.sqrt())
    }

    /// `min over unit phases t of |self - t*other|`, for unit vectors.
    pub fn phase_insensitive_distance(&self, other: &QState) -> Result<f64> {
        let ip = self.inner(other)?.norm();
        let d2 = self.norm_sqr() + other.norm_sqr() - 2.0 * ip;
        Ok(d2.max(0.0).sqrt())
    }

    fn prune_small(&mut self) {
        if self.prune > 0.0 {
            let t = self.prune * self.prune;
            self.amps.retain(|_, a| a.norm_sqr() > t);
        } else {
            self.amps.retain(|_, a| *a != ZERO);
        }
    }

    pub fn apply_qft(&mut self, register: &str, inverse: bool) -> Result<()> {
        let i = self.layout.index_of(register)?;
        let m = qft_matrix(self.layout.cardinality(i), inverse);
        self.apply_matrix_indices(&[i], &m);
        Ok(())
    }

    pub fn apply_hadamard(&mut self, register: &str) -> Result<()> {
        let i = self.layout.index_of(register)?;
        let n = self.layout.cardinality(i);
        if !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo {
                name: register.to_string(),
                cardinality: n,
            });
        }
        self.apply_matrix_indices(&[i], &hadamard_matrix(n));
        Ok(())
    }

    pub fn apply_local_unitary(&mut self, u: &LocalUnitary) -> Result<()> {
        let idx = self.layout.indices_of(u.targets())?;
        let dim: usize = idx.iter().map(|&i| self.layout.cardinality(i)).product();
        if dim != u.matrix().nrows() {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: u.matrix().nrows(),
            });
        }
        self.apply_matrix_indices(&idx, u.matrix());
        Ok(())
    }

    /// Apply an unchecked square matrix to the named registers. Oracle code
    /// uses this for matrices it has built itself.
    pub fn apply_matrix<S: AsRef<str>>(&mut self, targets: &[S], m: &DMatrix<C64>) -> Result<()> {
        let idx = self.layout.indices_of(targets)?;
        let dim: usize = idx.iter().map(|&i| self.layout.cardinality(i)).product();
        if dim != m.nrows() || dim != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: m.nrows(),
            });
        }
        self.apply_matrix_indices(&idx, m);
        Ok(())
    }

    fn apply_matrix_indices(&mut self, targets: &[usize], m: &DMatrix<C64>) {
        let ms = [m.clone()];
        self.apply_selected(targets, &ms, |_| Some(0));
    }

    /// Apply `matrices[select(label)]` to the target registers, where the
    /// selector sees each label with its target coordinates set to zero and
    /// `None` means identity. Every matrix must be unitary.
    pub fn apply_conditioned_unitary<S: AsRef<str>>(
        &mut self,
        targets: &[S],
        matrices: &[DMatrix<C64>],
        select: impl FnMut(&[usize]) -> Option<usize>,
    ) -> Result<()> {
        let idx = self.layout.indices_of(targets)?;
        let dim: usize = idx.iter().map(|&i| self.layout.cardinality(i)).product();
        for m in matrices {
            if m.nrows() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.nrows(),
                });
            }
            check_unitary(m)?;
        }
        self.apply_selected(&idx, matrices, select);
        Ok(())
    }

    fn apply_selected(
        &mut self,
        targets: &[usize],
        matrices: &[DMatrix<C64>],
        mut select: impl FnMut(&[usize]) -> Option<usize>,
    ) {
        let layout = &self.layout;
        let dims: Vec<usize> = targets.iter().map(|&i| layout.cardinality(i)).collect();
        let dim: usize = dims.iter().product();
        let target_mask = targets.iter().fold(0u128, |m, &i| m | layout.field_mask(i));
        // packed bits of every sub-index, first target most significant
        let sub_bits: Vec<u128> = (0..dim)
            .map(|mut s| {
                let mut bits = 0u128;
                for t in (0..targets.len()).rev() {
                    bits |= ((s % dims[t]) as u128) << layout.shifts[targets[t]];
                    s /= dims[t];
                }
                bits
            })
            .collect();
        let sub_of = |key: u128| -> usize {
            let mut s = 0usize;
            for (t, &i) in targets.iter().enumerate() {
                let w = layout.widths[i];
                let v = if w == 0 {
                    0
                } else {
                    ((key >> layout.shifts[i]) & ((1u128 << w) - 1)) as usize
                };
                s = s * dims[t] + v;
            }
            s
        };

        let mut items: Vec<(u128, usize, C64)> = self
            .amps
            .iter()
            .map(|(&k, &a)| (k & !target_mask, sub_of(k), a))
            .collect();
        items.sort_unstable_by_key(|e| (e.0, e.1));

        let mut out: FxHashMap<u128, C64> =
            FxHashMap::with_capacity_and_hasher(self.amps.len(), Default::default());
        let mut buf = vec![0usize; layout.len()];
        let mut acc = vec![ZERO; dim];
        let mut start = 0;
        while start < items.len() {
            let rest = items[start].0;
            let mut end = start;
            while end < items.len() && items[end].0 == rest {
                end += 1;
            }
            layout.decode_into(rest, &mut buf);
            match select(&buf) {
                None => {
                    for e in &items[start..end] {
                        out.insert(rest | sub_bits[e.1], e.2);
                    }
                }
                Some(which) => {
                    let m = &matrices[which];
                    acc.iter_mut().for_each(|v| *v = ZERO);
                    for e in &items[start..end] {
                        let col = m.column(e.1);
                        for (row, v) in acc.iter_mut().enumerate() {
                            *v += col[row] * e.2;
                        }
                    }
                    for (row, v) in acc.iter().enumerate() {
                        if *v != ZERO {
                            out.insert(rest | sub_bits[row], *v);
                        }
                    }
                }
            }
            start = end;
        }
        self.amps = out;
        self.prune_small();
    }

    /// Multiply each amplitude by `phase(label)`.
    pub fn apply_phase(&mut self, mut phase: impl FnMut(&[usize]) -> C64) {
        let mut buf = vec![0usize; self.layout.len()];
        for (&k, a) in self.amps.iter_mut() {
            self.layout.decode_into(k, &mut buf);
            *a *= phase(&buf);
        }
        self.prune_small();
    }

    /// Move the amplitude of every label `l` to `f(l)`. `f` edits the label
    /// in place. Errors if two support labels collide or a coordinate leaves
    /// its register's range; the state is unchanged on error.
    pub fn apply_basis_function(&mut self, mut f: impl FnMut(&mut [usize])) -> Result<()> {
        self.apply_scratch_function("basis function", f64::INFINITY, |l| {
            f(l);
            true
        })
        .map(|_| ())
    }

    /// Like [`apply_basis_function`](Self::apply_basis_function) for a
    /// reversible step that uses zero-initialized scratch internally. `f`
    /// returns `false` when its scratch did not return to zero on that label;
    /// such amplitude is dropped and its total weight returned. Exceeding
    /// `tol` is an error.
    pub fn apply_scratch_function(
        &mut self,
        step: &str,
        tol: f64,
        mut f: impl FnMut(&mut [usize]) -> bool,
    ) -> Result<f64> {
        let layout = &self.layout;
        let mut buf = vec![0usize; layout.len()];
        let mut out: FxHashMap<u128, C64> =
            FxHashMap::with_capacity_and_hasher(self.amps.len(), Default::default());
        let mut dirty = 0.0;
        for (&k, &a) in &self.amps {
            layout.decode_into(k, &mut buf);
            if !f(&mut buf) {
                dirty += a.norm_sqr();
                continue;
            }
            let key = layout.encode(&buf)?;
            match out.entry(key) {
                Entry::Occupied(_) => return Err(Error::NotBijective(buf)),
                Entry::Vacant(v) => {
                    v.insert(a);
                }
            }
        }
        if dirty > tol {
            return Err(Error::DirtyScratch {
                step: step.to_string(),
                weight: dirty,
            });
        }
        self.amps = out;
        Ok(dirty)
    }

    /// Split into the unnormalized parts satisfying and failing `pred`.
    pub fn split(&self, mut pred: impl FnMut(&[usize]) -> bool) -> (QState, QState) {
        let mut yes = QState::zero(self.layout.clone());
        let mut no = QState::zero(self.layout.clone());
        yes.prune = self.prune;
        no.prune = self.prune;
        let mut buf = vec![0usize; self.layout.len()];
        for (&k, &a) in &self.amps {
            self.layout.decode_into(k, &mut buf);
            if pred(&buf) {
                yes.amps.insert(k, a);
            } else {
                no.amps.insert(k, a);
            }
        }
        (yes, no)
    }

    /// Born-rule measurement of the predicate; branches are renormalized and
    /// a zero-probability branch is `None`.
    pub fn project(&self, pred: impl FnMut(&[usize]) -> bool) -> Projection {
        let total = self.norm_sqr();
        let (mut yes, mut no) = self.split(pred);
        let wy = yes.norm_sqr();
        let wn = no.norm_sqr();
        let probability = if total > 0.0 { wy / total } else { 0.0 };
        let accepted = (wy > 0.0).then(|| {
            yes.normalize();
            yes
        });
        let rejected = (wn > 0.0).then(|| {
            no.normalize();
            no
        });
        Projection {
            probability,
            accepted,
            rejected,
        }
    }

    /// Append zero-initialized registers in the least significant position.
    pub fn append_registers<S: AsRef<str>>(&mut self, registers: &[(S, usize)]) -> Result<()> {
        let layout = self.layout.with_appended(registers)?;
        let shift: u32 = layout.widths[self.layout.len()..].iter().sum();
        self.amps = self.amps.drain().map(|(k, a)| (k << shift, a)).collect();
        self.layout = layout;
        Ok(())
    }

    /// Remove registers that must hold zero. Amplitude on nonzero values is
    /// discarded; if its weight exceeds `tol` this is an error and the state
    /// is unchanged. Returns the discarded weight.
    pub fn remove_registers<S: AsRef<str>>(&mut self, names: &[S], tol: f64) -> Result<f64> {
        let idx = self.layout.indices_of(names)?;
        let mask = idx.iter().fold(0u128, |m, &i| m | self.layout.field_mask(i));
        let dirty: f64 = self
            .amps
            .iter()
            .filter(|(k, _)| *k & mask != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        if dirty > tol {
            let name = idx
                .iter()
                .map(|&i| self.layout.name(i).to_string())
                .collect::<Vec<_>>()
                .join(",");
            return Err(Error::DirtyRegister {
                name,
                weight: dirty,
            });
        }
        let keep: Vec<usize> = (0..self.layout.len()).filter(|i| !idx.contains(i)).collect();
        let layout = self.layout.restricted(&keep)?;
        let old = &self.layout;
        let mut buf = vec![0usize; old.len()];
        let mut small = vec![0usize; keep.len()];
        let mut out: FxHashMap<u128, C64> = FxHashMap::default();
        for (&k, &a) in &self.amps {
            if k & mask != 0 {
                continue;
            }
            old.decode_into(k, &mut buf);
            for (j, &i) in keep.iter().enumerate() {
                small[j] = buf[i];
            }
            out.insert(layout.encode_unchecked(&small), a);
        }
        self.amps = out;
        self.layout = layout;
        Ok(dirty)
    }

    /// Permute register order; `order` lists every register exactly once.
    pub fn reorder_registers<S: AsRef<str>>(&mut self, order: &[S]) -> Result<()> {
        let idx = self.layout.indices_of(order)?;
        if idx.len() != self.layout.len() {
            return Err(Error::LabelLength {
                expected: self.layout.len(),
                got: idx.len(),
            });
        }
        let layout = self.layout.restricted(&idx)?;
        let mut buf = vec![0usize; idx.len()];
        let mut perm = vec![0usize; idx.len()];
        let mut out: FxHashMap<u128, C64> = FxHashMap::default();
        for (&k, &a) in &self.amps {
            self.layout.decode_into(k, &mut buf);
            for (j, &i) in idx.iter().enumerate() {
                perm[j] = buf[i];
            }
            out.insert(layout.encode_unchecked(&perm), a);
        }
        self.amps = out;
        self.layout = layout;
        Ok(())
    }

    /// Tensor product `self (x) other`, with `other`'s registers last.
    pub fn tensor(&self, other: &QState) -> Result<QState> {
        let extra: Vec<(String, usize)> = other
            .layout
            .names()
            .iter()
            .cloned()
            .zip(other.layout.cardinalities().iter().copied())
            .collect();
        let layout = self.layout.with_appended(&extra)?;
        let shift: u32 = layout.widths[self.layout.len()..].iter().sum();
        let mut amps = FxHashMap::default();
        for (&ka, &a) in &self.amps {
            for (&kb, &b) in &other.amps {
                amps.insert((ka << shift) | kb, a * b);
            }
        }
        Ok(QState {
            layout,
            amps,
            prune: self.prune,
        })
    }
}

/// Exhaustively check that `f` is a bijection on the whole label set.
pub fn check_bijection(layout: &RegisterLayout, mut f: impl FnMut(&mut [usize])) -> Result<()> {
    let dim = layout.total_dim();
    if dim > DENSE_CAP {
        return Err(Error::SizeGuard { dim, cap: DENSE_CAP });
    }
    let mut seen = vec![false; dim as usize];
    for index in 0..dim {
        let mut label = layout.label_of_index(index);
        f(&mut label);
        layout.check_label(&label)?;
        let j = layout.dense_index(&label) as usize;
        if seen[j] {
            return Err(Error::NotBijective(label));
        }
        seen[j] = true;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn layout(regs: &[(&str, usize)]) -> RegisterLayout {
        RegisterLayout::new(regs).unwrap()
    }

    #[test]
    fn basis_state_dense_vectors() {
        let s = QState::basis(layout(&[("X", 2), ("Y", 2)]), &[0, 0]).unwrap();
        let d = s.to_dense().unwrap();
        assert_eq!(d, vec![C64::new(1.0, 0.0), ZERO, ZERO, ZERO]);
        let s = QState::basis(layout(&[("F", 4)]), &[3]).unwrap();
        assert_eq!(s.to_dense().unwrap()[3], C64::new(1.0, 0.0));
        let err = QState::basis(layout(&[("X", 2)]), &[2]).unwrap_err();
        assert!(err.to_string().contains("out of range"));
        assert!(err.to_string().contains('X'));
    }

    #[test]
    fn layout_rejects_bad_registers() {
        assert!(RegisterLayout::new(&[("X", 0)]).is_err());
        assert!(RegisterLayout::new(&[("X", 2), ("X", 3)]).is_err());
    }

    #[test]
    fn qft_small_cases() {
        let mut s = QState::basis(layout(&[("Y", 2)]), &[0]).unwrap();
        s.apply_qft("Y", false).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for v in s.to_dense().unwrap() {
            assert_abs_diff_eq!(v.re, h, epsilon = 1e-15);
        }
        let mut s = QState::basis(layout(&[("Y", 4)]), &[1]).unwrap();
        s.apply_qft("Y", false).unwrap();
        let d = s.to_dense().unwrap();
        let want = [
            C64::new(0.5, 0.0),
            C64::new(0.0, 0.5),
            C64::new(-0.5, 0.0),
            C64::new(0.0, -0.5),
        ];
        for (a, b) in d.iter().zip(want) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn hadamard_cases() {
        let mut s = QState::basis(layout(&[("Y", 2)]), &[1]).unwrap();
        s.apply_hadamard("Y").unwrap();
        let d = s.to_dense().unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((d[0] - C64::new(h, 0.0)).norm() < 1e-15);
        assert!((d[1] - C64::new(-h, 0.0)).norm() < 1e-15);
        let mut s = QState::basis(layout(&[("Y", 4)]), &[0]).unwrap();
        s.apply_hadamard("Y").unwrap();
        assert!(s.to_dense().unwrap().iter().all(|v| (v - C64::new(0.5, 0.0)).norm() < 1e-15));
        let mut s = QState::basis(layout(&[("Y", 3)]), &[0]).unwrap();
        assert!(matches!(s.apply_hadamard("Y"), Err(Error::NotPowerOfTwo { .. })));
    }

    #[test]
    fn local_unitary_cases() {
        let l = layout(&[("X", 2), ("Y", 2)]);
        let mut s = QState::basis(l.clone(), &[1, 0]).unwrap();
        let id = LocalUnitary::new(&["Y"], DMatrix::identity(2, 2)).unwrap();
        s.apply_local_unitary(&id).unwrap();
        assert_eq!(s.amplitude(&[1, 0]).unwrap(), C64::new(1.0, 0.0));
        let one = C64::new(1.0, 0.0);
        let swap = DMatrix::from_row_slice(2, 2, &[ZERO, one, one, ZERO]);
        let x = LocalUnitary::new(&["Y"], swap).unwrap();
        s.apply_local_unitary(&x).unwrap();
        assert_eq!(s.amplitude(&[1, 1]).unwrap(), one);
        let bad = DMatrix::from_row_slice(2, 2, &[one, one, ZERO, one]);
        assert!(matches!(LocalUnitary::new(&["Y"], bad), Err(Error::NotUnitary { .. })));
        let wrong = LocalUnitary::new(&["Y"], DMatrix::identity(3, 3)).unwrap();
        assert!(s.apply_local_unitary(&wrong).is_err());
    }

    #[test]
    fn basis_function_cases() {
        let l = layout(&[("X", 2), ("Y", 3)]);
        let mut s = QState::from_amplitudes(
            l.clone(),
            vec![(vec![1, 0], C64::new(0.6, 0.0)), (vec![1, 2], C64::new(0.0, 0.8))],
        )
        .unwrap();
        let before = s.clone();
        s.apply_basis_function(|_| {}).unwrap();
        assert_eq!(s.l2_distance(&before).unwrap(), 0.0);
        s.apply_basis_function(|l| l[1] = (l[1] + 1) % 3).unwrap();
        assert_eq!(s.amplitude(&[1, 1]).unwrap(), C64::new(0.6, 0.0));
        assert_eq!(s.amplitude(&[1, 0]).unwrap(), C64::new(0.0, 0.8));
        assert!(matches!(
            s.apply_basis_function(|l| l[1] = 0),
            Err(Error::NotBijective(_))
        ));
        assert!(check_bijection(&l, |l| l[1] = 0).is_err());
        assert!(check_bijection(&l, |l| l[1] = (l[1] + 2) % 3).is_ok());
    }

    #[test]
    fn projection_cases() {
        let l = layout(&[("Y", 2)]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = QState::from_amplitudes(
            l.clone(),
            vec![(vec![0], C64::new(h, 0.0)), (vec![1], C64::new(h, 0.0))],
        )
        .unwrap();
        let p = s.project(|_| true);
        assert_abs_diff_eq!(p.probability, 1.0, epsilon = 1e-15);
        assert!(p.rejected.is_none());
        let p = s.project(|l| l[0] == 0);
        assert_abs_diff_eq!(p.probability, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.accepted.unwrap().amplitude(&[0]).unwrap().re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.rejected.unwrap().amplitude(&[1]).unwrap().re, 1.0, epsilon = 1e-15);
        let b = QState::basis(l, &[1]).unwrap();
        let p = b.project(|l| l[0] == 0);
        assert_eq!(p.probability, 0.0);
        assert!(p.accepted.is_none());
        assert!(p.rejected.is_some());
    }

    #[test]
    fn distances() {
        let l = layout(&[("Y", 2)]);
        let a = QState::basis(l.clone(), &[0]).unwrap();
        let b = QState::basis(l, &[1]).unwrap();
        assert_eq!(a.l2_distance(&a).unwrap(), 0.0);
        assert_abs_diff_eq!(a.l2_distance(&b).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        let mut neg = a.clone();
        neg.scale(C64::new(-1.0, 0.0));
        assert_abs_diff_eq!(a.l2_distance(&neg).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.phase_insensitive_distance(&neg).unwrap(), 0.0, epsilon = 1e-7);
        let other = QState::basis(layout(&[("Z", 2)]), &[0]).unwrap();
        assert!(a.l2_distance(&other).is_err());
    }

    #[test]
    fn append_remove_reorder() {
        let mut s = QState::basis(layout(&[("X", 3), ("Y", 4)]), &[2, 3]).unwrap();
        s.append_registers(&[("S", 5)]).unwrap();
        assert_eq!(s.amplitude(&[2, 3, 0]).unwrap(), C64::new(1.0, 0.0));
        s.apply_basis_function(|l| l[2] = (l[2] + 1) % 5).unwrap();
        assert!(matches!(
            s.remove_registers(&["S"], 1e-10),
            Err(Error::DirtyRegister { .. })
        ));
        s.apply_basis_function(|l| l[2] = (l[2] + 4) % 5).unwrap();
        s.remove_registers(&["S"], 1e-10).unwrap();
        assert_eq!(s.layout().names(), &["X".to_string(), "Y".to_string()]);
        s.reorder_registers(&["Y", "X"]).unwrap();
        assert_eq!(s.amplitude(&[3, 2]).unwrap(), C64::new(1.0, 0.0));
    }

    #[test]
    fn conditioned_unitary_selects_per_control() {
        let l = layout(&[("C", 2), ("Y", 2)]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut s = QState::from_amplitudes(
            l,
            vec![(vec![0, 0], C64::new(h, 0.0)), (vec![1, 0], C64::new(h, 0.0))],
        )
        .unwrap();
        let hm = hadamard_matrix(2);
        s.apply_conditioned_unitary(&["Y"], &[hm], |l| (l[0] == 1).then_some(0)).unwrap();
        assert_abs_diff_eq!(s.amplitude(&[0, 0]).unwrap().re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitude(&[1, 1]).unwrap().re, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn random_unitaries_are_unitary() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for dim in [1, 2, 5, 16] {
            assert!(unitarity_deviation(&random_unitary(dim, &mut rng)) < 1e-12);
        }
    }

    #[test]
    fn dense_index_matches_mixed_radix() {
        let l = layout(&[("A", 3), ("B", 5), ("C", 2)]);
        for i in 0..30u128 {
            let label = l.label_of_index(i);
            assert_eq!(l.dense_index(&label), i);
        }
        assert_eq!(l.dense_index(&[1, 0, 0]), 10);
    }
}
