//! Compressed oracles for product distributions.
//!
//! The database is `q` cells, each an x-part in `[M] ∪ {⊥}` (⊥ encoded as
//! `M`) and a y-part in `[N]`. In the CFO picture the y-parts rest in the
//! unprepared basis, where a fresh cell reads 0; `samp(x)` maps a cell to
//! the standard basis and the group transform then maps it to the Fourier
//! basis.
//!
//! A query is a composition of reversible steps on labels:
//!
//! 1. `S += count`, locate `x` into the one-hot register `L`, insert `x` if
//!    absent (keeping cells sorted) and bump `S`;
//! 2. on the located cell only, change to the Fourier basis, subtract `eta`
//!    and change back;
//! 3. remove the located cell if it now reads 0, relocate `x` to clear `L`,
//!    and `S -= count`.
//!
//! `S` and `L` live in the state for the duration of a query and must come
//! back clean. Bits that never leave a single classical step are kept inside
//! that step and checked there.

use nalgebra::DMatrix;

use crate::distributions::{DistKind, GroupOp, ProductDistribution};
use crate::error::{Error, Result};
use crate::full_oracle::f_register;
use crate::statevec::{QState, C64, TOL_INVARIANT};

/// Basis the database y-parts are expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DbBasis {
    Unprepared,
    Standard,
    Fourier,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompressedPicture {
    /// Database unprepared, adversary `Y` in the Fourier basis.
    Fourier,
    /// Database standard, adversary `Y` in the Fourier basis.
    Phase,
    /// Database standard, adversary `Y` standard.
    Standard,
}

impl CompressedPicture {
    pub fn name(self) -> &'static str {
        match self {
            CompressedPicture::Fourier => "CFO",
            CompressedPicture::Phase => "CPhO",
            CompressedPicture::Standard => "CStO",
        }
    }

    pub fn db_basis(self) -> DbBasis {
        match self {
            CompressedPicture::Fourier => DbBasis::Unprepared,
            _ => DbBasis::Standard,
        }
    }
}

/// Register indices of a database inside some layout.
#[derive(Clone, Debug)]
pub struct DbIndex {
    pub xs: Vec<usize>,
    pub ys: Vec<usize>,
    /// The ⊥ value, equal to the domain size.
    pub bottom: usize,
    pub range: usize,
}

impl DbIndex {
    pub fn capacity(&self) -> usize {
        self.xs.len()
    }

    #[inline]
    pub fn count(&self, l: &[usize]) -> usize {
        self.xs.iter().filter(|&&i| l[i] != self.bottom).count()
    }

    /// Non-padding `(x, y)` pairs of a label, in cell order.
    pub fn entries(&self, l: &[usize]) -> Vec<(usize, usize)> {
        self.xs
            .iter()
            .zip(&self.ys)
            .filter(|(&xi, _)| l[xi] != self.bottom)
            .map(|(&xi, &yi)| (l[xi], l[yi]))
            .collect()
    }

    /// Bitmask of cells holding `x`.
    #[inline]
    pub fn locate(&self, l: &[usize], x: usize) -> u64 {
        let modulus = self.bottom + 1;
        let mut found = 0u64;
        for (i, &xi) in self.xs.iter().enumerate() {
            // difference register, zero exactly when the cell holds x
            let diff = (l[xi] + modulus - x) % modulus;
            if diff == 0 {
                found ^= 1 << i;
            }
        }
        found
    }

    /// Sortedness, padding at the back, and in the unprepared basis: nonzero
    /// y on stored cells and zero y on padding.
    pub fn check_label(&self, l: &[usize], unprepared: bool) -> std::result::Result<(), String> {
        let mut prev: Option<usize> = None;
        let mut seen_pad = false;
        for (i, (&xi, &yi)) in self.xs.iter().zip(&self.ys).enumerate() {
            let x = l[xi];
            if x == self.bottom {
                seen_pad = true;
                if unprepared && l[yi] != 0 {
                    return Err(format!("padding cell {i} has y={}", l[yi]));
                }
                continue;
            }
            if seen_pad {
                return Err(format!("cell {i} stored after padding"));
            }
            if let Some(p) = prev {
                if x <= p {
                    return Err(format!("cell {i} breaks ascending order"));
                }
            }
            if unprepared && l[yi] == 0 {
                return Err(format!("stored cell {i} reads zero"));
            }
            prev = Some(x);
        }
        Ok(())
    }
}

/// How the query's `eta` is read: `(label[register] & mask) >> offset`.
/// A mask selects a bit field of a wider register; with a group transform
/// that factorises over bits, the unselected bits pass through unchanged.
#[derive(Clone, Copy, Debug)]
pub struct Target {
    pub register: usize,
    pub mask: usize,
    pub offset: u32,
}

impl Target {
    pub fn whole(register: usize) -> Self {
        Self { register, mask: usize::MAX, offset: 0 }
    }

    #[inline]
    pub fn eta(&self, l: &[usize]) -> usize {
        (l[self.register] & self.mask) >> self.offset
    }
}

/// Register wiring of one query against the database.
pub struct QueryPorts<'a> {
    pub input: usize,
    pub target: Target,
    /// Only labels satisfying this predicate are queried. It must not read
    /// registers the query writes.
    pub control: Option<&'a dyn Fn(&[usize]) -> bool>,
    /// Remove cells that read zero after the update. Turning this off gives
    /// the broken oracle used by the deletion regression.
    pub delete: bool,
}

/// funAdd: make room for `x` at its sorted position and store it there.
/// Sets bit `p` of `loc`. The database must be sorted and not full.
pub fn fun_add(l: &mut [usize], db: &DbIndex, x: usize, loc: &mut u64) -> bool {
    let q = db.capacity();
    let modulus = db.bottom + 1;
    let mut a = vec![0u8; q];
    for i in 0..q {
        a[i] ^= (l[db.xs[i]] > x) as u8;
    }
    for i in (1..q).rev() {
        a[i] ^= a[i - 1];
    }
    let Some(p) = a.iter().position(|&b| b == 1) else {
        return true;
    };
    // move the last cell to position p
    let last = (l[db.xs[q - 1]], l[db.ys[q - 1]]);
    for i in (p + 1..q).rev() {
        l[db.xs[i]] = l[db.xs[i - 1]];
        l[db.ys[i]] = l[db.ys[i - 1]];
    }
    l[db.xs[p]] = last.0;
    l[db.ys[p]] = last.1;
    l[db.xs[p]] = (l[db.xs[p]] + modulus + x - db.bottom) % modulus;
    *loc ^= 1 << p;
    for (i, bit) in a.iter_mut().enumerate() {
        *bit ^= ((*loc >> i) & 1) as u8;
    }
    a.iter().all(|&b| b == 0)
}

/// funRem: if the located cell reads zero, free it and move it to the back.
/// Returns (removed, scratch clean).
pub fn fun_rem(l: &mut [usize], db: &DbIndex, x: usize, loc: &mut u64) -> (bool, bool) {
    let q = db.capacity();
    let modulus = db.bottom + 1;
    let Some(pos) = (0..q).find(|&i| (*loc >> i) & 1 == 1) else {
        return (false, false);
    };
    let mut b = (l[db.ys[pos]] == 0) as u8;
    let removed = b == 1;
    let mut a = vec![0u8; q];
    if removed {
        l[db.xs[pos]] = (l[db.xs[pos]] + modulus + db.bottom - x) % modulus;
        for i in 0..q {
            a[i] ^= (l[db.xs[i]] > x) as u8;
        }
        for i in (1..q).rev() {
            a[i] ^= a[i - 1];
        }
        for (i, bit) in a.iter().enumerate() {
            *loc ^= (*bit as u64) << i;
        }
        let p = a.iter().position(|&v| v == 1).unwrap_or(pos);
        // move cell p to the back
        let freed = (l[db.xs[p]], l[db.ys[p]]);
        for i in p..q - 1 {
            l[db.xs[i]] = l[db.xs[i + 1]];
            l[db.ys[i]] = l[db.ys[i + 1]];
        }
        l[db.xs[q - 1]] = freed.0;
        l[db.ys[q - 1]] = freed.1;
        for i in 1..q {
            a[i] ^= a[i - 1];
        }
        for i in 0..q {
            a[i] ^= (l[db.xs[i]] > x) as u8;
        }
    }
    // b is one exactly when x is no longer stored
    b ^= (db.locate(l, x) == 0) as u8;
    (removed, b == 0 && a.iter().all(|&v| v == 0))
}

/// Per-input unitaries on (target, queried cell value); see
/// [`CompressedOracle::cell_unitaries`].
#[derive(Clone, Debug)]
pub struct CellUnitaries {
    pub matrices: Vec<DMatrix<C64>>,
    pub y_card: usize,
    pub v_card: usize,
}

#[derive(Clone, Debug)]
pub struct CompressedOracle {
    dist: ProductDistribution,
    group: GroupOp,
    capacity: usize,
    picture: CompressedPicture,
    prefix: String,
}

impl CompressedOracle {
    pub fn new(dist: ProductDistribution, group: GroupOp, capacity: usize) -> Result<Self> {
        group.validate(dist.range_size())?;
        if capacity == 0 || capacity > 16 {
            return Err(Error::InvalidParameter(format!(
                "database capacity must be in 1..=16, got {capacity}"
            )));
        }
        Ok(Self {
            dist,
            group,
            capacity,
            picture: CompressedPicture::Fourier,
            prefix: "D".into(),
        })
    }

    /// Name registers `{prefix}{i}.x` / `{prefix}{i}.y`; lets several
    /// databases share a state.
    pub fn with_prefix(mut self, prefix: &str) -> Self {
        self.prefix = prefix.to_string();
        self
    }

    pub fn with_picture(mut self, picture: CompressedPicture) -> Self {
        self.picture = picture;
        self
    }

    pub fn dist(&self) -> &ProductDistribution {
        &self.dist
    }

    pub fn group(&self) -> GroupOp {
        self.group
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn picture(&self) -> CompressedPicture {
        self.picture
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn bottom(&self) -> usize {
        self.dist.domain_size()
    }

    pub fn cell_x(&self, i: usize) -> String {
        format!("{}{i}.x", self.prefix)
    }

    pub fn cell_y(&self, i: usize) -> String {
        format!("{}{i}.y", self.prefix)
    }

    fn count_register(&self) -> String {
        format!("{}.S", self.prefix)
    }

    fn locate_register(&self) -> String {
        format!("{}.L", self.prefix)
    }

    pub fn db_registers(&self) -> Vec<(String, usize)> {
        (0..self.capacity)
            .flat_map(|i| {
                [
                    (self.cell_x(i), self.bottom() + 1),
                    (self.cell_y(i), self.dist.range_size()),
                ]
            })
            .collect()
    }

    pub fn db_index(&self, state: &QState) -> Result<DbIndex> {
        let layout = state.layout();
        let mut xs = Vec::with_capacity(self.capacity);
        let mut ys = Vec::with_capacity(self.capacity);
        for i in 0..self.capacity {
            xs.push(layout.index_of(&self.cell_x(i))?);
            ys.push(layout.index_of(&self.cell_y(i))?);
        }
        Ok(DbIndex {
            xs,
            ys,
            bottom: self.bottom(),
            range: self.dist.range_size(),
        })
    }

    /// Append an empty database and express it in the picture's basis.
    pub fn initial_state(&self, mut state: QState) -> Result<QState> {
        let bottom = self.bottom();
        let start = state.layout().len();
        state.append_registers(&self.db_registers())?;
        state.apply_basis_function(|l| {
            for i in 0..self.capacity {
                l[start + 2 * i] = bottom;
            }
        })?;
        self.convert_db(&mut state, DbBasis::Unprepared, self.picture.db_basis())?;
        Ok(state)
    }

    /// Change the basis of every y-part. Padding cells hold `|0>` in every
    /// basis and are left alone.
    pub fn convert_db(&self, state: &mut QState, from: DbBasis, to: DbBasis) -> Result<()> {
        let rank = |b: DbBasis| match b {
            DbBasis::Unprepared => 0,
            DbBasis::Standard => 1,
            DbBasis::Fourier => 2,
        };
        let (mut cur, goal) = (rank(from), rank(to));
        let n = self.dist.range_size();
        let m = self.dist.domain_size();
        let samp: Vec<DMatrix<C64>> = (0..m).map(|x| self.dist.samp(x).clone()).collect();
        let samp_inv: Vec<DMatrix<C64>> = samp.iter().map(|s| s.adjoint()).collect();
        while cur != goal {
            if cur < goal {
                if cur == 0 {
                    self.apply_cellwise(state, &samp)?;
                } else {
                    self.apply_cellwise(state, &[self.group.transform(n)])?;
                }
                cur += 1;
            } else {
                if cur == 1 {
                    self.apply_cellwise(state, &samp_inv)?;
                } else {
                    self.apply_cellwise(state, &[self.group.inverse_transform(n)])?;
                }
                cur -= 1;
            }
        }
        Ok(())
    }

    /// `matrices[x]` on each stored y-part, by its cell's x; a single matrix
    /// is applied regardless of x.
    fn apply_cellwise(&self, state: &mut QState, matrices: &[DMatrix<C64>]) -> Result<()> {
        let db = self.db_index(state)?;
        for i in 0..self.capacity {
            let xi = db.xs[i];
            let bottom = db.bottom;
            let single = matrices.len() == 1;
            state.apply_conditioned_unitary(&[self.cell_y(i)], matrices, |l| {
                if l[xi] == bottom {
                    None
                } else {
                    Some(if single { 0 } else { l[xi] })
                }
            })?;
        }
        Ok(())
    }

    fn require(&self, expected: CompressedPicture) -> Result<()> {
        if self.picture != expected {
            return Err(Error::PictureMismatch {
                expected: expected.name(),
                actual: self.picture.name(),
            });
        }
        Ok(())
    }

    fn ports<'a>(&self, state: &QState, x_reg: &str, y_reg: &str) -> Result<QueryPorts<'a>> {
        let layout = state.layout();
        let input = layout.index_of(x_reg)?;
        let target = layout.index_of(y_reg)?;
        if layout.cardinality(input) != self.bottom() {
            return Err(Error::DimensionMismatch {
                expected: self.bottom(),
                got: layout.cardinality(input),
            });
        }
        if layout.cardinality(target) != self.dist.range_size() {
            return Err(Error::DimensionMismatch {
                expected: self.dist.range_size(),
                got: layout.cardinality(target),
            });
        }
        Ok(QueryPorts {
            input,
            target: Target::whole(target),
            control: None,
            delete: true,
        })
    }

    pub fn cfo_query(&self, state: &mut QState, x_reg: &str, y_reg: &str) -> Result<()> {
        self.require(CompressedPicture::Fourier)?;
        let ports = self.ports(state, x_reg, y_reg)?;
        self.cfo_with(state, &ports)
    }

    pub fn cpho_query(&self, state: &mut QState, x_reg: &str, y_reg: &str) -> Result<()> {
        self.require(CompressedPicture::Phase)?;
        let ports = self.ports(state, x_reg, y_reg)?;
        self.cpho_with(state, &ports)
    }

    pub fn csto_query(&self, state: &mut QState, x_reg: &str, y_reg: &str) -> Result<()> {
        self.require(CompressedPicture::Standard)?;
        let ports = self.ports(state, x_reg, y_reg)?;
        self.csto_with(state, &ports)
    }

    /// The phase oracle with the deletion step left out.
    pub fn cpho_without_deletion(&self, state: &mut QState, x_reg: &str, y_reg: &str) -> Result<()> {
        self.require(CompressedPicture::Phase)?;
        let mut ports = self.ports(state, x_reg, y_reg)?;
        ports.delete = false;
        self.cpho_with(state, &ports)
    }

    pub fn query(&self, state: &mut QState, x_reg: &str, y_reg: &str) -> Result<()> {
        match self.picture {
            CompressedPicture::Fourier => self.cfo_query(state, x_reg, y_reg),
            CompressedPicture::Phase => self.cpho_query(state, x_reg, y_reg),
            CompressedPicture::Standard => self.csto_query(state, x_reg, y_reg),
        }
    }

    /// Phase-picture query: the CFO conjugated by the database preparation.
    /// Only the cell holding the queried input changes basis: the CFO moves
    /// other cells without touching their y-parts, and each cell's basis
    /// change depends on its own x alone.
    pub fn cpho_with(&self, state: &mut QState, ports: &QueryPorts) -> Result<()> {
        let samp: Vec<DMatrix<C64>> = (0..self.dist.domain_size()).map(|x| self.dist.samp(x).clone()).collect();
        let samp_inv: Vec<DMatrix<C64>> = samp.iter().map(|m| m.adjoint()).collect();
        self.convert_queried_cell(state, ports, &samp_inv)?;
        self.cfo_with(state, ports)?;
        self.convert_queried_cell(state, ports, &samp)
    }

    fn convert_queried_cell(&self, state: &mut QState, ports: &QueryPorts, by_x: &[DMatrix<C64>]) -> Result<()> {
        let db = self.db_index(state)?;
        let xin = ports.input;
        for i in 0..self.capacity {
            let xi = db.xs[i];
            state.apply_conditioned_unitary(&[self.cell_y(i)], by_x, |l| {
                (l[xi] == l[xin] && ports.control.is_none_or(|c| c(l))).then(|| l[xi])
            })?;
        }
        Ok(())
    }

    /// Standard-picture query: the phase query conjugated by the group
    /// transform on the target register.
    pub fn csto_with(&self, state: &mut QState, ports: &QueryPorts) -> Result<()> {
        let t = ports.target.register;
        let n = state.layout().cardinality(t);
        let name = state.layout().name(t).to_string();
        state.apply_matrix(&[&name], &self.group.transform(n))?;
        self.cpho_with(state, ports)?;
        state.apply_matrix(&[&name], &self.group.inverse_transform(n))
    }

    /// The standard-picture query restricted to one input: a unitary on
    /// the target register and the queried cell's value (`range` for
    /// absent), one per input `x`. Computed by running [`Self::csto_with`]
    /// on a one-cell database.
    pub fn cell_unitaries(&self, y_card: usize, mask: usize, offset: u32) -> Result<CellUnitaries> {
        let n = self.dist.range_size();
        let v_card = n + 1;
        let dim = y_card * v_card;
        let m_card = self.dist.domain_size();
        let tiny = CompressedOracle::new(self.dist.clone(), self.group, 1)?.with_picture(CompressedPicture::Standard);
        let layout = crate::statevec::RegisterLayout::new(&[("X", m_card), ("Y", y_card)])?;
        let mut matrices: Vec<DMatrix<C64>> = Vec::with_capacity(m_card);
        for x in 0..m_card {
            // inputs with the same marginal and sampler share a unitary
            if let Some(prev) = (0..x).find(|&w| self.dist.samp(w) == self.dist.samp(x)) {
                matrices.push(matrices[prev].clone());
                continue;
            }
            let mut m = DMatrix::zeros(dim, dim);
            for col in 0..dim {
                let (y, v) = (col / v_card, col % v_card);
                let mut st = tiny.initial_state(QState::basis(layout.clone(), &[x, y])?)?;
                let db = tiny.db_index(&st)?;
                if v < n {
                    st.apply_basis_function(|l| {
                        l[db.xs[0]] = x;
                        l[db.ys[0]] = v;
                    })?;
                }
                let ports = QueryPorts { input: 0, target: Target { register: 1, mask, offset }, control: None, delete: true };
                tiny.csto_with(&mut st, &ports)?;
                st.for_each(|l, a| {
                    let v_out = if l[db.xs[0]] == db.bottom { n } else { l[db.ys[0]] };
                    m[(l[1] * v_card + v_out, col)] = a;
                });
            }
            matrices.push(m);
        }
        Ok(CellUnitaries { matrices, y_card, v_card })
    }

    /// [`Self::csto_with`] through precomputed cell unitaries: move the
    /// queried cell into a scratch register, apply the unitary, move it
    /// back.
    pub fn csto_local(&self, state: &mut QState, ports: &QueryPorts, cell: &CellUnitaries) -> Result<()> {
        let t = ports.target.register;
        if state.layout().cardinality(t) != cell.y_card {
            return Err(Error::DimensionMismatch { expected: cell.y_card, got: state.layout().cardinality(t) });
        }
        let db = self.db_index(state)?;
        let q = self.capacity;
        let xin = ports.input;
        let active = |l: &[usize]| ports.control.is_none_or(|c| c(l));
        let overflow = state.weight_where(|l| active(l) && db.locate(l, l[xin]) == 0 && l[db.xs[q - 1]] != db.bottom);
        if overflow > 0.0 {
            return Err(Error::CapacityOverflow { capacity: q });
        }
        let v_name = format!("{}.V", self.prefix);
        state.append_registers(&[(v_name.as_str(), cell.v_card)])?;
        let vi = state.layout().index_of(&v_name)?;
        let absent = cell.v_card - 1;
        // gather: take x's cell out of the sorted list
        state.apply_basis_function(|l| {
            let found = db.locate(l, l[xin]);
            if found == 0 {
                l[vi] = absent;
                return;
            }
            let p = found.trailing_zeros() as usize;
            l[vi] = l[db.ys[p]];
            for i in p..q - 1 {
                l[db.xs[i]] = l[db.xs[i + 1]];
                l[db.ys[i]] = l[db.ys[i + 1]];
            }
            l[db.xs[q - 1]] = db.bottom;
            l[db.ys[q - 1]] = 0;
        })?;
        let y_name = state.layout().name(t).to_string();
        state.apply_conditioned_unitary(&[y_name.as_str(), v_name.as_str()], &cell.matrices, |l| active(l).then(|| l[xin]))?;
        // scatter: put it back at its sorted position
        let full = state.weight_where(|l| l[vi] != absent && l[db.xs[q - 1]] != db.bottom);
        if full > 0.0 {
            return Err(Error::CapacityOverflow { capacity: q });
        }
        state.apply_basis_function(|l| {
            let v = l[vi];
            l[vi] = 0;
            if v == absent {
                return;
            }
            let x = l[xin];
            let p = (0..q).find(|&i| l[db.xs[i]] > x).expect("room checked");
            for i in (p + 1..q).rev() {
                l[db.xs[i]] = l[db.xs[i - 1]];
                l[db.ys[i]] = l[db.ys[i - 1]];
            }
            l[db.xs[p]] = x;
            l[db.ys[p]] = v;
        })?;
        state.remove_registers(&[v_name.as_str()], TOL_INVARIANT)?;
        Ok(())
    }

    /// The CFO on a database resting in the unprepared basis.
    pub fn cfo_with(&self, state: &mut QState, ports: &QueryPorts) -> Result<()> {
        let q = self.capacity;
        let s_name = self.count_register();
        let l_name = self.locate_register();
        state.append_registers(&[(s_name.as_str(), q + 1), (l_name.as_str(), 1usize << q)])?;
        let layout = state.layout();
        let db = self.db_index(state)?;
        let s_reg = layout.index_of(&s_name)?;
        let l_reg = layout.index_of(&l_name)?;
        let xin = ports.input;
        let active = |l: &[usize]| ports.control.is_none_or(|c| c(l));

        // a full database can only take queries on inputs it already holds
        let overflow = state.weight_where(|l| {
            active(l) && db.locate(l, l[xin]) == 0 && l[db.xs[q - 1]] != db.bottom
        });
        if overflow > 0.0 {
            state.remove_registers(&[s_name.as_str(), l_name.as_str()], f64::INFINITY)?;
            return Err(Error::CapacityOverflow { capacity: q });
        }

        let delete = ports.delete;
        state.apply_scratch_function("locate and insert", TOL_INVARIANT, |l| {
            if !active(l) {
                return true;
            }
            let x = l[xin];
            let found = db.locate(l, x);
            // a stored cell reading zero is what decompression maps to an
            // absent entry, which the update leaves alone; it comes back
            // unchanged (only reachable after puncturing)
            if delete && found != 0 && l[db.ys[found.trailing_zeros() as usize]] == 0 {
                return true;
            }
            l[s_reg] = (l[s_reg] + db.count(l)) % (q + 1);
            let mut loc = l[l_reg] as u64 ^ found;
            let mut absent = (loc == 0) as u8;
            let mut clean = true;
            if absent == 1 {
                clean &= fun_add(l, &db, x, &mut loc);
                l[s_reg] = (l[s_reg] + 1) % (q + 1);
            }
            if let Some(p) = (0..q).find(|&i| (loc >> i) & 1 == 1) {
                absent ^= (l[db.ys[p]] == 0) as u8;
            }
            l[l_reg] = loc as usize;
            clean && absent == 0
        })?;

        self.update_located(state, &db, l_reg, ports)?;

        state.apply_scratch_function("remove and uncompute", TOL_INVARIANT, |l| {
            // skipped labels are exactly those with nothing located
            if !active(l) || l[l_reg] == 0 {
                return true;
            }
            let x = l[xin];
            let mut loc = l[l_reg] as u64;
            let mut clean = true;
            if delete {
                let (removed, ok) = fun_rem(l, &db, x, &mut loc);
                clean &= ok;
                if removed {
                    l[s_reg] = (l[s_reg] + q) % (q + 1);
                }
            }
            loc ^= db.locate(l, x);
            l[l_reg] = loc as usize;
            l[s_reg] = (l[s_reg] + (q + 1) - db.count(l)) % (q + 1);
            clean
        })?;

        state.remove_registers(&[s_name.as_str(), l_name.as_str()], TOL_INVARIANT)?;
        Ok(())
    }

    /// funUpd: on the cell flagged in `L`, go to the Fourier basis, subtract
    /// `eta`, and come back.
    fn update_located(
        &self,
        state: &mut QState,
        db: &DbIndex,
        l_reg: usize,
        ports: &QueryPorts,
    ) -> Result<()> {
        let n = self.dist.range_size();
        let m = self.dist.domain_size();
        let fwd: Vec<DMatrix<C64>> = (0..m)
            .map(|x| self.group.transform(n) * self.dist.samp(x))
            .collect();
        let back: Vec<DMatrix<C64>> = fwd.iter().map(|u| u.adjoint()).collect();
        let into_fourier = |state: &mut QState, mats: &[DMatrix<C64>]| -> Result<()> {
            for i in 0..self.capacity {
                let xi = db.xs[i];
                state.apply_conditioned_unitary(&[self.cell_y(i)], mats, |l| {
                    ((l[l_reg] >> i) & 1 == 1).then(|| l[xi])
                })?;
            }
            Ok(())
        };
        into_fourier(state, &fwd)?;
        let (g, t) = (self.group, ports.target);
        let q = self.capacity;
        state.apply_basis_function(|l| {
            if let Some(p) = (0..q).find(|&i| (l[l_reg] >> i) & 1 == 1) {
                let eta = t.eta(l);
                l[db.ys[p]] = g.subtract(l[db.ys[p]], eta, n);
            }
        })?;
        into_fourier(state, &back)
    }

    /// Closed-form CFO for the uniform distribution with Hadamard preparation
    /// in xor mode, where the unprepared and Fourier bases coincide.
    pub fn uniform_fast_query(&self, state: &mut QState, x_reg: &str, y_reg: &str) -> Result<()> {
        self.require(CompressedPicture::Fourier)?;
        if self.dist.kind() != DistKind::UniformXor || self.group != GroupOp::Xor {
            return Err(Error::NotUniformXor);
        }
        let ports = self.ports(state, x_reg, y_reg)?;
        let db = self.db_index(state)?;
        let (xin, yin, q) = (ports.input, ports.target.register, self.capacity);
        let overflow = state.weight_where(|l| {
            l[yin] != 0 && db.locate(l, l[xin]) == 0 && l[db.xs[q - 1]] != db.bottom
        });
        if overflow > 0.0 {
            return Err(Error::CapacityOverflow { capacity: q });
        }
        state.apply_basis_function(|l| {
            let (x, eta) = (l[xin], l[yin]);
            if eta == 0 {
                return;
            }
            let mut cells: Vec<(usize, usize)> = db.entries(l);
            match cells.iter().position(|c| c.0 == x) {
                None => {
                    let at = cells.iter().position(|c| c.0 > x).unwrap_or(cells.len());
                    cells.insert(at, (x, eta));
                }
                Some(r) if cells[r].1 == eta => {
                    cells.remove(r);
                }
                Some(r) => cells[r].1 ^= eta,
            }
            for i in 0..q {
                let (cx, cy) = cells.get(i).copied().unwrap_or((db.bottom, 0));
                l[db.xs[i]] = cx;
                l[db.ys[i]] = cy;
            }
        })
    }

    /// Check database invariants on every label with non-negligible weight,
    /// after moving a copy of the database from this oracle's picture to the
    /// unprepared basis.
    pub fn check_well_formed(&self, state: &QState) -> Result<()> {
        let basis = self.picture.db_basis();
        let converted;
        let state = if basis == DbBasis::Unprepared {
            state
        } else {
            let mut s = state.clone();
            self.convert_db(&mut s, basis, DbBasis::Unprepared)?;
            converted = s;
            &converted
        };
        let db = self.db_index(state)?;
        let mut bad: Option<String> = None;
        state.for_each(|l, a| {
            if bad.is_none() && a.norm() > TOL_INVARIANT {
                if let Err(e) = db.check_label(l, true) {
                    bad = Some(e);
                }
            }
        });
        match bad {
            Some(e) => Err(Error::IllFormed(e)),
            None => Ok(()),
        }
    }

    /// Replace the database by the full function register `F0..F{M-1}` in
    /// the Fourier picture. The state must be in the CFO picture.
    pub fn decompress(&self, state: &QState) -> Result<QState> {
        self.require(CompressedPicture::Fourier)?;
        let mut state = state.clone();
        let db = self.db_index(&state)?;
        let mut bad: Option<String> = None;
        state.for_each(|l, _| {
            if bad.is_none() {
                if let Err(e) = db.check_label(l, true) {
                    bad = Some(e);
                }
            }
        });
        if let Some(e) = bad {
            return Err(Error::IllFormed(e));
        }
        let (m, n, q) = (self.dist.domain_size(), self.dist.range_size(), self.capacity);
        let s_name = self.count_register();
        let mut extra: Vec<(String, usize)> = vec![(s_name.clone(), q + 1)];
        extra.extend((0..m).map(|x| (f_register(x), n)));
        state.append_registers(&extra)?;
        let s_reg = state.layout().index_of(&s_name)?;
        let f0 = s_reg + 1;
        let modulus = db.bottom + 1;
        state.apply_basis_function(|l| {
            l[s_reg] = (l[s_reg] + db.count(l)) % (q + 1);
            for i in 0..l[s_reg] {
                let row = f0 + l[db.xs[i]];
                l.swap(row, db.ys[i]);
            }
            for x in (0..m).rev() {
                if l[f0 + x] != 0 {
                    let cell = db.xs[l[s_reg] - 1];
                    l[cell] = (l[cell] + modulus + db.bottom - x) % modulus;
                    l[s_reg] -= 1;
                }
            }
        })?;
        let mut db_names: Vec<String> = vec![s_name];
        for i in 0..q {
            // x-parts now hold ⊥; shift them to 0 before removal
            db_names.push(self.cell_x(i));
            db_names.push(self.cell_y(i));
        }
        let bottom = db.bottom;
        let xs = db.xs.clone();
        state.apply_basis_function(|l| {
            for &xi in &xs {
                l[xi] = (l[xi] + modulus - bottom) % modulus;
            }
        })?;
        state.remove_registers(&db_names, TOL_INVARIANT)?;
        for x in 0..m {
            let u = self.group.transform(n) * self.dist.samp(x);
            state.apply_matrix(&[f_register(x)], &u)?;
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::RegisterLayout;
    use approx::assert_abs_diff_eq;

    fn adversary(m: usize, n: usize, x: usize, y: usize) -> QState {
        QState::basis(RegisterLayout::new(&[("X", m), ("Y", n)]).unwrap(), &[x, y]).unwrap()
    }

    fn uniform_xor(m: usize, n: usize, q: usize) -> CompressedOracle {
        CompressedOracle::new(ProductDistribution::uniform_xor(m, n).unwrap(), GroupOp::Xor, q).unwrap()
    }

    /// Single-label state's database entries.
    fn only_entries(o: &CompressedOracle, s: &QState) -> Vec<(usize, usize)> {
        let heavy: Vec<_> = s.entries().into_iter().filter(|e| e.1.norm() > 1e-12).collect();
        assert_eq!(heavy.len(), 1, "expected a basis state");
        o.db_index(s).unwrap().entries(&heavy[0].0)
    }

    #[test]
    fn insertion_update_removal() {
        let o = uniform_xor(2, 2, 2);
        let mut s = o.initial_state(adversary(2, 2, 0, 1)).unwrap();
        o.cfo_query(&mut s, "X", "Y").unwrap();
        assert_eq!(only_entries(&o, &s), vec![(0, 1)]);
        o.check_well_formed(&s).unwrap();
        o.cfo_query(&mut s, "X", "Y").unwrap();
        assert_eq!(only_entries(&o, &s), Vec::<(usize, usize)>::new());

        let mut s = o.initial_state(adversary(2, 2, 1, 0)).unwrap();
        o.cfo_query(&mut s, "X", "Y").unwrap();
        assert!(only_entries(&o, &s).is_empty());
    }

    #[test]
    fn insert_keeps_order() {
        let o = uniform_xor(4, 4, 3);
        let mut s = o.initial_state(adversary(4, 4, 1, 2)).unwrap();
        o.cfo_query(&mut s, "X", "Y").unwrap();
        s.apply_basis_function(|l| {
            l[0] = 0;
            l[1] = 3;
        })
        .unwrap();
        o.cfo_query(&mut s, "X", "Y").unwrap();
        assert_eq!(only_entries(&o, &s), vec![(0, 3), (1, 2)]);
        s.apply_basis_function(|l| l[1] = 1).unwrap();
        o.cfo_query(&mut s, "X", "Y").unwrap();
        assert_eq!(only_entries(&o, &s), vec![(0, 2), (1, 2)]);
    }

    #[test]
    fn fun_add_and_rem_on_labels() {
        let db = DbIndex {
            xs: vec![0, 2, 4],
            ys: vec![1, 3, 5],
            bottom: 4,
            range: 4,
        };
        let mut l = vec![1, 2, 3, 1, 4, 0];
        let mut loc = 0;
        assert!(fun_add(&mut l, &db, 2, &mut loc));
        assert_eq!(l, vec![1, 2, 2, 0, 3, 1]);
        assert_eq!(loc, 0b010);
        let mut loc2 = loc;
        let (removed, clean) = fun_rem(&mut l, &db, 2, &mut loc2);
        assert!(removed && clean);
        assert_eq!(loc2, 0);
        assert_eq!(l, vec![1, 2, 3, 1, 4, 0]);
        let mut l = vec![1, 2, 3, 1, 4, 0];
        let mut loc = 0b001;
        let (removed, clean) = fun_rem(&mut l, &db, 1, &mut loc);
        assert!(!removed && clean);
        assert_eq!(loc, 0b001);
    }

    #[test]
    fn capacity_overflow() {
        let o = uniform_xor(4, 2, 1);
        let mut s = o.initial_state(adversary(4, 2, 0, 1)).unwrap();
        o.cfo_query(&mut s, "X", "Y").unwrap();
        s.apply_basis_function(|l| l[0] = 3).unwrap();
        assert!(matches!(
            o.cfo_query(&mut s, "X", "Y"),
            Err(Error::CapacityOverflow { .. })
        ));
        // a zero-eta query still inserts before it deletes
        s.apply_basis_function(|l| l[1] = 0).unwrap();
        assert!(o.cfo_query(&mut s, "X", "Y").is_err());
        s.apply_basis_function(|l| l[0] = 0).unwrap();
        o.cfo_query(&mut s, "X", "Y").unwrap();
    }

    #[test]
    fn decompress_empty_is_zero_table() {
        let o = CompressedOracle::new(ProductDistribution::uniform(2, 3).unwrap(), GroupOp::AddModN, 2).unwrap();
        let s = o.initial_state(adversary(2, 3, 1, 0)).unwrap();
        let d = o.decompress(&s).unwrap();
        assert_eq!(d.layout().names(), &["X", "Y", "F0", "F1"]);
        assert_abs_diff_eq!(d.amplitude(&[1, 0, 0, 0]).unwrap().norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn decompress_single_entry() {
        let o = uniform_xor(2, 4, 2);
        let mut s = o.initial_state(adversary(2, 4, 1, 3)).unwrap();
        o.cfo_query(&mut s, "X", "Y").unwrap();
        let d = o.decompress(&s).unwrap();
        // Hadamard preparation: the Fourier picture equals the stored cell
        assert_abs_diff_eq!(d.amplitude(&[1, 3, 0, 3]).unwrap().norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fast_path_refuses_other_distributions() {
        let o = CompressedOracle::new(ProductDistribution::uniform(2, 2).unwrap(), GroupOp::Xor, 1).unwrap();
        let mut s = o.initial_state(adversary(2, 2, 0, 1)).unwrap();
        assert!(matches!(
            o.uniform_fast_query(&mut s, "X", "Y"),
            Err(Error::NotUniformXor)
        ));
    }
}
