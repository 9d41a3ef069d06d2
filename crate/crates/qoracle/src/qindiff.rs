//! Quantum simulators for the sponge internal function and the five games
//! of the quantum indifferentiability argument, simulated exactly.
//!
//! The outer and inner databases share their x-parts, so they are stored as
//! one compressed database over `2^(r+c)` values. The inner, outer and joint
//! sub-queries read disjoint bit fields of the same target register; in xor
//! mode the group transform factorises over bits, so a field query leaves
//! the other bits alone.
//!
//! Per query the simulator computes the sponge graph of every database
//! entry except the queried node. That graph is unchanged by the query, so
//! it is uncomputed by recomputing it.

use crate::compressed_oracle::{CellUnitaries, CompressedOracle, CompressedPicture, DbIndex, QueryPorts, Target};
use crate::distributions::{GroupOp, ProductDistribution};
use crate::error::{Error, Result};
use crate::full_oracle::FullOracle;
use crate::harness::{Interface, OracleStack, QueryCall};
use crate::sponge::{bits_of, pad, SpongeGraph, SpongeParams};
use crate::statevec::{QState, TOL_INVARIANT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum QuantumVariant {
    Sim2,
    Sim3,
    Sim4,
}

/// Index of a message in the random oracle's finite domain: by length, then
/// by value.
pub fn message_index(m: &[bool]) -> usize {
    (1usize << m.len()) - 1 + crate::sponge::value_of(m)
}

/// Messages whose padding fits in `blocks` blocks.
pub fn message_domain(r: u32, blocks: usize) -> usize {
    let max_len = blocks * r as usize - 2;
    (1usize << (max_len + 1)) - 1
}

const NO_EDGE: u8 = u8::MAX;
const MAX_NODES: usize = 8;

/// Partial sponge graph on at most eight nodes, kept in a fixed array so
/// that per-label graph work does not allocate. Mirrors [`SpongeGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SmallGraph {
    p: SpongeParams,
    edges: [u8; MAX_NODES],
}

impl SmallGraph {
    pub fn new(p: SpongeParams) -> Self {
        debug_assert!(p.nodes() <= MAX_NODES);
        Self { p, edges: [NO_EDGE; MAX_NODES] }
    }

    pub fn edge(&self, s: usize) -> Option<usize> {
        (self.edges[s] != NO_EDGE).then_some(self.edges[s] as usize)
    }

    pub fn set_edge(&mut self, s: usize, t: Option<usize>) {
        self.edges[s] = t.map_or(NO_EDGE, |t| t as u8);
    }

    /// Base-`(n+1)` code, `n` standing for a missing edge.
    pub fn encode(&self) -> usize {
        let n = self.p.nodes();
        (0..n).rev().fold(0, |acc, s| acc * (n + 1) + self.edge(s).unwrap_or(n))
    }

    pub fn decode(p: SpongeParams, mut code: usize) -> Self {
        let n = p.nodes();
        let mut g = Self::new(p);
        for s in 0..n {
            let v = code % (n + 1);
            code /= n + 1;
            g.set_edge(s, (v != n).then_some(v));
        }
        g
    }

    pub fn to_graph(&self) -> SpongeGraph {
        let mut g = SpongeGraph::new(self.p);
        for s in 0..self.p.nodes() {
            if let Some(t) = self.edge(s) {
                g.add_edge(s, t).expect("one edge per node");
            }
        }
        g
    }

    /// Distance of every supernode from the root, `u8::MAX` if unreachable.
    pub fn distances(&self) -> [u8; 4] {
        let p = self.p;
        let mut dist = [u8::MAX; 4];
        dist[0] = 0;
        let mut frontier = 1u8;
        let mut d = 0;
        while frontier != 0 {
            d += 1;
            let mut next = 0u8;
            for s in 0..p.nodes() {
                if let Some(t) = self.edge(s) {
                    let (a, b) = (p.inner(s), p.inner(t));
                    if frontier >> a & 1 == 1 && dist[b] == u8::MAX {
                        dist[b] = d;
                        next |= 1 << b;
                    }
                }
            }
            frontier = next;
        }
        dist
    }

    /// Rooted supernodes as a bitmask.
    pub fn rooted_mask(&self) -> u8 {
        let dist = self.distances();
        (0..self.p.inner_size()).filter(|&i| dist[i] != u8::MAX).fold(0, |m, i| m | 1 << i)
    }

    /// Rooted supernodes and sources of edges, as a bitmask.
    pub fn covered_mask(&self) -> u8 {
        let p = self.p;
        (0..p.nodes()).filter(|&s| self.edge(s).is_some()).fold(self.rooted_mask(), |m, s| m | 1 << p.inner(s))
    }

    /// Blocks of the path into node `s`, as in [`SpongeGraph::fun_path_into`],
    /// packed MSB-first with their count.
    pub fn path_into(&self, s: usize) -> Option<(usize, usize)> {
        let p = self.p;
        let target = p.inner(s);
        let mut prev = [(u8::MAX, 0u8); MAX_NODES];
        let mut queue = [0u8; MAX_NODES];
        let (mut head, mut tail) = (0, 1);
        let mut seen = 1u8;
        while head < tail {
            let u = queue[head] as usize;
            head += 1;
            if p.inner(u) == target {
                let mut blocks = [0usize; MAX_NODES + 1];
                let mut len = 0;
                blocks[len] = p.outer(u) ^ p.outer(s);
                len += 1;
                let mut cur = u;
                while prev[cur].0 != u8::MAX {
                    blocks[len] = prev[cur].1 as usize;
                    len += 1;
                    cur = prev[cur].0 as usize;
                }
                let packed = blocks[..len].iter().rev().fold(0, |acc, &b| acc << p.r | b);
                return Some((packed, len));
            }
            for a in 0..p.outer_size() {
                let v = p.node(p.outer(u) ^ a, p.inner(u));
                if let Some(t) = self.edge(v) {
                    if seen >> t & 1 == 0 {
                        seen |= 1 << t;
                        prev[t] = (u as u8, a as u8);
                        queue[tail] = t as u8;
                        tail += 1;
                    }
                }
            }
        }
        None
    }

    /// Index of the message whose absorption ends at `s`, when the path into
    /// `s` is a valid padding.
    pub fn message_into(&self, s: usize) -> Option<usize> {
        let (packed, len) = self.path_into(s)?;
        let r = self.p.r as usize;
        if packed & 1 == 0 {
            return None;
        }
        let rest = packed >> 1;
        if rest == 0 {
            return None;
        }
        let zeros = rest.trailing_zeros() as usize;
        if zeros >= r {
            return None;
        }
        let m_len = len * r - 2 - zeros;
        Some((1usize << m_len) - 1 + (rest >> (zeros + 1)))
    }
}

pub struct QuantumSim {
    pub variant: QuantumVariant,
    pub params: SpongeParams,
    pub db: CompressedOracle,
    /// The random oracle used by `Sim4`.
    pub h: Option<CompressedOracle>,
    /// Number of simulator calls so far; names the puncture bits.
    pub calls: usize,
    cells: SimCells,
}

/// Precomputed cell unitaries for every sub-query the simulator makes.
struct SimCells {
    inner: CellUnitaries,
    outer: CellUnitaries,
    joint: CellUnitaries,
    /// Oracle answer into the outer bits of the target.
    h_outer: Option<CellUnitaries>,
    /// Oracle answer into a fresh outer-part register.
    h_fresh: Option<CellUnitaries>,
}

impl QuantumSim {
    pub fn new(variant: QuantumVariant, params: SpongeParams, capacity: usize, h: Option<CompressedOracle>) -> Result<Self> {
        if params.r + params.c > 3 {
            return Err(Error::InvalidParameter(format!(
                "quantum simulator supports r + c <= 3, got {}",
                params.r + params.c
            )));
        }
        if variant == QuantumVariant::Sim4 && h.is_none() {
            return Err(Error::InvalidParameter("Sim4 needs a random oracle".into()));
        }
        let n = params.nodes();
        let db = CompressedOracle::new(ProductDistribution::uniform_xor(n, n)?, GroupOp::Xor, capacity)?
            .with_picture(CompressedPicture::Standard);
        let inner_mask = params.inner_size() - 1;
        let outer_mask = (params.outer_size() - 1) << params.c;
        let cells = SimCells {
            inner: db.cell_unitaries(n, inner_mask, 0)?,
            outer: db.cell_unitaries(n, outer_mask, 0)?,
            joint: db.cell_unitaries(n, usize::MAX, 0)?,
            h_outer: h.as_ref().map(|h| h.cell_unitaries(n, outer_mask, params.c)).transpose()?,
            h_fresh: h.as_ref().map(|h| h.cell_unitaries(params.outer_size(), usize::MAX, 0)).transpose()?,
        };
        Ok(Self { variant, params, db, h, calls: 0, cells })
    }

    fn n(&self) -> usize {
        self.params.nodes()
    }

    fn punctured(&self) -> bool {
        self.variant != QuantumVariant::Sim2
    }

    pub fn bit_names(&self) -> Vec<String> {
        (0..self.calls).map(|k| format!("J{k}")).collect()
    }

    /// Graph of all entries other than node `s`, with outer parts resolved
    /// from the oracle registers where available. `o_regs[u]` holds the
    /// oracle answer for node `u` (Sim4 only); edges from supernodes at
    /// distance `>= level` keep the database's outer part.
    fn view(&self, l: &[usize], s: usize, db: &DbIndex, o_regs: &[usize], level: u8) -> SmallGraph {
        let p = self.params;
        let mut g = SmallGraph::new(p);
        for (&xi, &yi) in db.xs.iter().zip(&db.ys) {
            let x = l[xi];
            if x == db.bottom {
                break;
            }
            if x != s {
                g.set_edge(x, Some(l[yi]));
            }
        }
        if o_regs.is_empty() {
            return g;
        }
        let dist = g.distances();
        for k in 0..level {
            for u in 0..p.nodes() {
                let Some(t) = g.edge(u) else { continue };
                if dist[p.inner(u)] == k && g.message_into(u).is_some() {
                    g.set_edge(u, Some(p.node(l[o_regs[u]], p.inner(t))));
                }
            }
        }
        g
    }

    /// One simulator call on `|s, v>`: `v ^= phi(s)`.
    pub fn query(&mut self, state: &mut QState, x_reg: &str, y_reg: &str) -> Result<()> {
        let p = self.params;
        let n = self.n();
        // supernode distances are below 2^c
        let k_max = p.inner_size() as u8;
        let layout = state.layout();
        let xin = layout.index_of(x_reg)?;
        let yin = layout.index_of(y_reg)?;
        if layout.cardinality(xin) != n || layout.cardinality(yin) != n {
            return Err(Error::DimensionMismatch { expected: n, got: layout.cardinality(yin) });
        }
        let sim4 = self.variant == QuantumVariant::Sim4;
        let hdom = self.h.as_ref().map(|h| h.dist().domain_size()).unwrap_or(1);

        let mut scratch: Vec<(String, usize)> = vec![
            ("Q.G".into(), (n + 1).pow(n as u32)),
            ("Q.BR".into(), 2),
            ("Q.VP".into(), 2),
        ];
        if sim4 {
            scratch.push(("Q.XH".into(), hdom));
            scratch.push(("Q.FL".into(), 2));
            for u in 0..n {
                scratch.push((format!("Q.O{u}"), p.outer_size()));
            }
        }
        state.append_registers(&scratch)?;
        let layout = state.layout().clone();
        let db = self.db.db_index(state)?;
        let g_reg = layout.index_of("Q.G")?;
        let br = layout.index_of("Q.BR")?;
        let vp = layout.index_of("Q.VP")?;
        let (xh, fl, o_regs) = if sim4 {
            let o: Vec<usize> = (0..n).map(|u| layout.index_of(&format!("Q.O{u}")).unwrap()).collect();
            (layout.index_of("Q.XH")?, layout.index_of("Q.FL")?, o)
        } else {
            (usize::MAX, usize::MAX, Vec::new())
        };

        // re-prepare the graph's oracle-derived outer parts, level by level
        let mut steps = Vec::new();
        if sim4 {
            for k in 0..k_max {
                // only the root supernode sits at distance 0
                for u in (0..n).filter(|&u| (k == 0) == (p.inner(u) == 0)) {
                    steps.push((k, u));
                }
            }
        }
        for &(k, u) in &steps {
            self.reprep_step(state, &db, xin, &o_regs, xh, fl, k, u)?;
        }

        // graph register and branch flags; `sign` picks compute or uncompute
        let flags = |this: &Self, state: &mut QState, sign: bool| -> Result<()> {
            state.apply_basis_function(|l| {
                let s = l[xin];
                let g = this.view(l, s, &db, &o_regs, k_max);
                l[g_reg] ^= g.encode();
                let rooted = g.rooted_mask() >> p.inner(s) & 1 == 1;
                let branch = rooted && (g.covered_mask().count_ones() as usize) < p.inner_size();
                l[br] ^= branch as usize;
                if branch {
                    if let Some(x) = g.message_into(s) {
                        l[vp] ^= 1;
                        if sim4 {
                            l[xh] = if sign { (l[xh] + x) % hdom } else { (l[xh] + hdom - x) % hdom };
                        }
                    }
                }
            })
        };
        flags(self, state, true)?;

        let inner_mask = p.inner_size() - 1;
        let outer_mask = (p.outer_size() - 1) << p.c;
        let on_branch = move |l: &[usize]| l[br] == 1;
        let off_branch = move |l: &[usize]| l[br] == 0;
        let outer_from_db = move |l: &[usize]| l[br] == 1 && (!sim4 || l[vp] == 0);
        let outer_from_h = move |l: &[usize]| l[br] == 1 && l[vp] == 1;

        // outer part
        self.db.csto_local(
            state,
            &QueryPorts {
                input: xin,
                target: Target { register: yin, mask: outer_mask, offset: 0 },
                control: Some(&outer_from_db),
                delete: true,
            },
            &self.cells.outer,
        )?;
        if sim4 {
            let h = self.h.as_ref().expect("checked in new");
            h.csto_local(
                state,
                &QueryPorts {
                    input: xh,
                    target: Target { register: yin, mask: outer_mask, offset: p.c },
                    control: Some(&outer_from_h),
                    delete: true,
                },
                self.cells.h_outer.as_ref().expect("Sim4 has an oracle"),
            )?;
        }
        // inner part
        self.db.csto_local(
            state,
            &QueryPorts {
                input: xin,
                target: Target { register: yin, mask: inner_mask, offset: 0 },
                control: Some(&on_branch),
                delete: true,
            },
            &self.cells.inner,
        )?;
        // the inner part goes last: with one shared database the outer
        // sub-query could otherwise still move the inner bits by deletion
        if self.punctured() {
            let bit = format!("J{}", self.calls);
            state.append_registers(&[(bit.as_str(), 2)])?;
            let j = state.layout().index_of(&bit)?;
            state.apply_basis_function(|l| {
                if l[br] != 1 {
                    return;
                }
                let covered = SmallGraph::decode(p, l[g_reg]).covered_mask();
                let found = db.locate(l, l[xin]);
                if found != 0 {
                    let y = l[db.ys[found.trailing_zeros() as usize]];
                    if covered >> p.inner(y) & 1 == 1 {
                        l[j] ^= 1;
                    }
                }
            })?;
        }
        // not rooted or saturated: the joint value at once
        self.db.csto_local(
            state,
            &QueryPorts {
                input: xin,
                target: Target::whole(yin),
                control: Some(&off_branch),
                delete: true,
            },
            &self.cells.joint,
        )?;

        flags(self, state, false)?;
        for &(k, u) in steps.iter().rev() {
            self.reprep_step(state, &db, xin, &o_regs, xh, fl, k, u)?;
        }
        let names: Vec<&str> = scratch.iter().map(|(s, _)| s.as_str()).collect();
        state.remove_registers(&names, TOL_INVARIANT)?;
        self.calls += 1;
        Ok(())
    }

    /// Query the oracle for node `u` if it sits at distance `k` and its path
    /// decodes to a message. Self-inverse given the same database.
    #[allow(clippy::too_many_arguments)]
    fn reprep_step(
        &self,
        state: &mut QState,
        db: &DbIndex,
        xin: usize,
        o_regs: &[usize],
        xh: usize,
        fl: usize,
        k: u8,
        u: usize,
    ) -> Result<()> {
        let p = self.params;
        let h = self.h.as_ref().expect("Sim4 has an oracle");
        let hdom = h.dist().domain_size();
        let mark = |state: &mut QState, sign: bool| -> Result<()> {
            state.apply_basis_function(|l| {
                let s = l[xin];
                if u == s {
                    return;
                }
                let g = self.view(l, s, db, o_regs, k);
                if g.edge(u).is_none() || g.distances()[p.inner(u)] != k {
                    return;
                }
                if let Some(x) = g.message_into(u) {
                    l[fl] ^= 1;
                    l[xh] = if sign { (l[xh] + x) % hdom } else { (l[xh] + hdom - x) % hdom };
                }
            })
        };
        mark(state, true)?;
        if state.weight_where(|l| l[fl] == 1) > 0.0 {
            let control = |l: &[usize]| l[fl] == 1;
            h.csto_local(
                state,
                &QueryPorts {
                    input: xh,
                    target: Target::whole(o_regs[u]),
                    control: Some(&control),
                    delete: true,
                },
                self.cells.h_fresh.as_ref().expect("Sim4 has an oracle"),
            )?;
        }
        mark(state, false)
    }
}

/// Configuration of one quantum game.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct QuantumGameConfig {
    pub r: u32,
    pub c: u32,
    /// Blocks in a padded private-interface message; messages have
    /// `blocks * r - 2` bits.
    pub blocks: usize,
    /// Simulator database capacity.
    pub capacity: usize,
}

impl QuantumGameConfig {
    pub fn params(&self) -> Result<SpongeParams> {
        SpongeParams::new(self.r, self.c)
    }

    pub fn message_bits(&self) -> usize {
        self.blocks * self.r as usize - 2
    }

    /// Capacity sufficient for an adversary making `public` and `private`
    /// queries: every private query touches `blocks` nodes.
    pub fn for_queries(r: u32, c: u32, blocks: usize, public: usize, private: usize) -> Self {
        Self {
            r,
            c,
            blocks,
            capacity: (public + blocks * private).max(1),
        }
    }
}

/// Game 1 keeps the full function table up to this many tables; beyond it
/// the compressed standard oracle, which is the same operator, stands in.
const FULL_ORACLE_MAX_TABLES: f64 = 65536.0;

enum PublicOracle {
    Full(FullOracle),
    Plain(CompressedOracle),
    Sim(QuantumSim),
}

/// The oracle stack of game `1..=5`.
pub struct QuantumGame {
    pub game: usize,
    pub cfg: QuantumGameConfig,
    params: SpongeParams,
    public: PublicOracle,
    h: Option<CompressedOracle>,
    h_cell: Option<CellUnitaries>,
    private_calls: usize,
    /// Weight left in private-interface workspace that could not be
    /// uncomputed; the registers are kept in that case.
    pub workspace_residue: f64,
}

impl QuantumGame {
    pub fn new(game: usize, cfg: QuantumGameConfig) -> Result<Self> {
        let params = cfg.params()?;
        if cfg.blocks * (cfg.r as usize) < 2 {
            return Err(Error::InvalidParameter("private messages need blocks * r >= 2".into()));
        }
        let n = params.nodes();
        // shortest paths into a supernode have at most 2^c blocks
        let h_blocks = cfg.blocks.max(params.inner_size());
        let h = if game >= 4 {
            let dom = message_domain(params.r, h_blocks);
            Some(
                CompressedOracle::new(ProductDistribution::uniform_xor(dom, params.outer_size())?, GroupOp::Xor, cfg.capacity)?
                    .with_prefix("H")
                    .with_picture(CompressedPicture::Standard),
            )
        } else {
            None
        };
        let public = match game {
            1 if (n as f64).powi(n as i32) <= FULL_ORACLE_MAX_TABLES => {
                PublicOracle::Full(FullOracle::new(ProductDistribution::uniform_xor(n, n)?, GroupOp::Xor)?)
            }
            1 => PublicOracle::Plain(
                CompressedOracle::new(ProductDistribution::uniform_xor(n, n)?, GroupOp::Xor, cfg.capacity)?
                    .with_picture(CompressedPicture::Standard),
            ),
            2 => PublicOracle::Sim(QuantumSim::new(QuantumVariant::Sim2, params, cfg.capacity, None)?),
            3 => PublicOracle::Sim(QuantumSim::new(QuantumVariant::Sim3, params, cfg.capacity, None)?),
            4 | 5 => PublicOracle::Sim(QuantumSim::new(QuantumVariant::Sim4, params, cfg.capacity, h.clone())?),
            _ => return Err(Error::InvalidParameter(format!("quantum game {game} is not in 1..=5"))),
        };
        Ok(Self {
            game,
            cfg,
            params,
            public,
            h_cell: h.as_ref().map(|h| h.cell_unitaries(params.outer_size(), usize::MAX, 0)).transpose()?,
            h,
            private_calls: 0,
            workspace_residue: 0.0,
        })
    }

    /// Names of the deferred puncture bits so far.
    pub fn find_bits(&self) -> Vec<String> {
        match &self.public {
            PublicOracle::Sim(s) if s.punctured() => s.bit_names(),
            _ => Vec::new(),
        }
    }

    /// Exact `P[Find]` on a final state.
    pub fn find_probability(&self, state: &QState) -> Result<f64> {
        let idx = state.layout().indices_of(&self.find_bits())?;
        Ok(state.weight_where(|l| idx.iter().any(|&i| l[i] == 1)) / state.norm_sqr())
    }

    /// Internal-function evaluations so far, including the construction's.
    pub fn phi_calls(&self) -> usize {
        match &self.public {
            PublicOracle::Sim(s) => s.calls,
            PublicOracle::Full(_) | PublicOracle::Plain(_) => 0,
        }
    }

    fn phi(&mut self, state: &mut QState, x: &str, y: &str) -> Result<()> {
        match &mut self.public {
            PublicOracle::Full(f) => f.sto_query(state, x, y),
            PublicOracle::Plain(o) => o.csto_query(state, x, y),
            PublicOracle::Sim(s) => s.query(state, x, y),
        }
    }

    /// The construction on a message register: absorb, copy the first
    /// output block into `z`, and run the absorption backwards.
    fn sponge_query(&mut self, state: &mut QState, m_reg: &str, z_reg: &str) -> Result<()> {
        let p = self.params;
        let n = p.nodes();
        let b = self.cfg.blocks;
        let k = self.private_calls;
        let mbits = self.cfg.message_bits() as u32;
        let u_name = format!("P{k}.U");
        let s_names: Vec<String> = (1..=b).map(|i| format!("P{k}.S{i}")).collect();
        let mut regs = vec![(u_name.clone(), n)];
        regs.extend(s_names.iter().map(|s| (s.clone(), n)));
        state.append_registers(&regs)?;
        let layout = state.layout().clone();
        let mi = layout.index_of(m_reg)?;
        let zi = layout.index_of(z_reg)?;
        let ui = layout.index_of(&u_name)?;
        let si = layout.indices_of(&s_names)?;
        let blocks_of = move |m: usize| pad(&bits_of(m, mbits), p.r);
        // U ^= S_{i-1} xor (block_i, 0)
        let load = |state: &mut QState, i: usize| -> Result<()> {
            state.apply_basis_function(|l| {
                let prev = if i == 0 { 0 } else { l[si[i - 1]] };
                let block = blocks_of(l[mi])[i];
                l[ui] ^= prev ^ p.node(block, 0);
            })
        };
        for i in 0..b {
            load(state, i)?;
            self.phi(state, &u_name, &s_names[i])?;
            load(state, i)?;
        }
        state.apply_basis_function(|l| l[zi] ^= p.outer(l[si[b - 1]]))?;
        for i in (0..b).rev() {
            load(state, i)?;
            self.phi(state, &u_name, &s_names[i])?;
            load(state, i)?;
        }
        let all: Vec<&str> = std::iter::once(u_name.as_str()).chain(s_names.iter().map(|s| s.as_str())).collect();
        let dirty = state.weight_where(|l| l[ui] != 0 || si.iter().any(|&i| l[i] != 0));
        if dirty <= TOL_INVARIANT {
            state.remove_registers(&all, TOL_INVARIANT)?;
        } else {
            self.workspace_residue += dirty;
        }
        self.private_calls += 1;
        Ok(())
    }

    /// The random oracle on a message register.
    fn oracle_query(&mut self, state: &mut QState, m_reg: &str, z_reg: &str) -> Result<()> {
        let h = self.h.as_ref().expect("games 4 and 5 have an oracle");
        let mbits = self.cfg.message_bits();
        let name = format!("P{}.X", self.private_calls);
        state.append_registers(&[(name.as_str(), h.dist().domain_size())])?;
        let xi = state.layout().index_of(&name)?;
        let mi = state.layout().index_of(m_reg)?;
        let index = move |m: usize| message_index(&bits_of(m, mbits as u32));
        state.apply_basis_function(|l| l[xi] ^= index(l[mi]))?;
        let zi = state.layout().index_of(z_reg)?;
        let ports = QueryPorts { input: xi, target: Target::whole(zi), control: None, delete: true };
        h.csto_local(state, &ports, self.h_cell.as_ref().expect("built with the oracle"))?;
        state.apply_basis_function(|l| l[xi] ^= index(l[mi]))?;
        state.remove_registers(&[name.as_str()], TOL_INVARIANT)?;
        self.private_calls += 1;
        Ok(())
    }
}

impl OracleStack for QuantumGame {
    fn prepare(&mut self, state: QState) -> Result<QState> {
        let mut state = match &mut self.public {
            PublicOracle::Full(f) => f.purified_initial_state(state)?,
            PublicOracle::Plain(o) => o.initial_state(state)?,
            PublicOracle::Sim(s) => s.db.initial_state(state)?,
        };
        if let Some(h) = &self.h {
            state = h.initial_state(state)?;
        }
        Ok(state)
    }

    fn query(&mut self, state: &mut QState, call: &QueryCall) -> Result<()> {
        match call.interface {
            Interface::Public => self.phi(state, &call.input, &call.output),
            Interface::Private if self.game == 5 => self.oracle_query(state, &call.input, &call.output),
            Interface::Private => self.sponge_query(state, &call.input, &call.output),
        }
    }
}

/// Exact outcome of one adversary against games 1 to 5.
#[derive(Clone, Debug, serde::Serialize)]
pub struct QuantumGamesRecord {
    pub accept: [f64; 5],
    /// `P[Find]` in games 3, 4 and 5.
    pub find: [f64; 3],
    /// Simulator calls in game 3, counting the construction's.
    pub q_sim: usize,
    pub adv_1_2: f64,
    pub adv_2_3: f64,
    pub adv_3_4: f64,
    pub adv_4_5: f64,
    pub bound_2_3: f64,
    pub bound_3_4: f64,
    pub bound_4_5: f64,
    /// Workspace weight left over by the construction, summed over games.
    pub workspace_residue: f64,
    pub holds: bool,
}

/// Run `spec` in every game and compare consecutive acceptance
/// probabilities with the hop bounds. `slack` absorbs rounding.
pub fn run_quantum_games(spec: &crate::harness::AdversarySpec, cfg: &QuantumGameConfig, slack: f64) -> Result<QuantumGamesRecord> {
    let mut accept = [0.0; 5];
    let mut find = [0.0; 3];
    let mut q_sim = 0;
    let mut workspace_residue = 0.0;
    for game in 1..=5 {
        let mut g = QuantumGame::new(game, cfg.clone())?;
        let run = crate::harness::run_adversary(spec, &mut g)?;
        accept[game - 1] = run.accept.ok_or_else(|| Error::InvalidParameter("adversary has no measurement".into()))?;
        if game >= 3 {
            find[game - 3] = g.find_probability(&run.state)?;
        }
        if game == 3 {
            q_sim = g.phi_calls();
        }
        workspace_residue += g.workspace_residue;
    }
    let adv = |a: usize, b: usize| (accept[a] - accept[b]).abs();
    let bound_2_3 = crate::bounds::o2h_bound(q_sim, find[0]);
    let bound_3_4 = 4.0 * find[0].max(find[1]);
    let bound_4_5 = 4.0 * find[1].max(find[2]);
    let (adv_1_2, adv_2_3, adv_3_4, adv_4_5) = (adv(0, 1), adv(1, 2), adv(2, 3), adv(3, 4));
    let holds = adv_1_2 <= slack
        && adv_2_3 <= bound_2_3 + slack
        && adv_3_4 <= bound_3_4 + slack
        && adv_4_5 <= bound_4_5 + slack;
    Ok(QuantumGamesRecord {
        accept,
        find,
        q_sim,
        adv_1_2,
        adv_2_3,
        adv_3_4,
        adv_4_5,
        bound_2_3,
        bound_3_4,
        bound_4_5,
        workspace_residue,
        holds,
    })
}

/// A random adversary against the sponge interfaces. Before each query a
/// Haar-random unitary acts on that query's registers and the work qubit
/// `W`; a last one on the same registers precedes the measurement of `W`.
pub fn random_sponge_adversary<R: rand::Rng>(cfg: &QuantumGameConfig, interfaces: &[Interface], rng: &mut R) -> crate::harness::AdversarySpec {
    use crate::harness::{matrix_entries, AdversarySpec, RegisterSpec, Step};
    let n = 1usize << (cfg.r + cfg.c);
    let (m, z) = (1usize << cfg.message_bits(), 1usize << cfg.r);
    let ports = |i: Interface| match i {
        Interface::Public => (["X", "Y", "W"], n * n * 2),
        Interface::Private => (["M", "Z", "W"], m * z * 2),
    };
    let mut haar = |i: Interface| {
        let (regs, dim) = ports(i);
        Step::Unitary {
            registers: regs.iter().map(|r| r.to_string()).collect(),
            matrix: matrix_entries(&crate::statevec::random_unitary(dim, rng)),
        }
    };
    let mut steps = Vec::new();
    for &i in interfaces {
        steps.push(haar(i));
        let (regs, _) = ports(i);
        steps.push(Step::Query(QueryCall { input: regs[0].into(), output: regs[1].into(), interface: i }));
    }
    steps.push(haar(interfaces.last().copied().unwrap_or(Interface::Public)));
    steps.push(Step::Measure { registers: vec!["W".into()], accept: vec![vec![1]] });
    let regs = [("X", n), ("Y", n), ("M", m), ("Z", z), ("W", 2)];
    AdversarySpec {
        registers: regs
            .iter()
            .map(|(name, card)| RegisterSpec { name: name.to_string(), cardinality: *card, init: 0 })
            .collect(),
        queries: interfaces.len(),
        depth: interfaces.len(),
        aux: String::new(),
        steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_adversary, AdversarySpec, CompressedStack, Gate, RegisterSpec, Step};

    fn public_call() -> QueryCall {
        QueryCall { input: "X".into(), output: "Y".into(), interface: Interface::Public }
    }

    fn private_call() -> QueryCall {
        QueryCall { input: "M".into(), output: "Z".into(), interface: Interface::Private }
    }

    fn spec(steps: Vec<Step>, queries: usize, n: usize) -> AdversarySpec {
        AdversarySpec {
            registers: vec![
                RegisterSpec { name: "X".into(), cardinality: n, init: 0 },
                RegisterSpec { name: "Y".into(), cardinality: n, init: 0 },
                RegisterSpec { name: "M".into(), cardinality: 2, init: 0 },
                RegisterSpec { name: "Z".into(), cardinality: 2, init: 0 },
            ],
            queries,
            depth: queries,
            aux: String::new(),
            steps,
        }
    }

    #[test]
    fn edge_codec() {
        let p = SpongeParams::new(1, 1).unwrap();
        let mut g = SmallGraph::new(p);
        g.set_edge(0, Some(3));
        g.set_edge(2, Some(0));
        assert_eq!(SmallGraph::decode(p, g.encode()), g);
        assert_eq!(SmallGraph::new(p).encode(), 624);
    }

    #[test]
    fn small_graph_matches_sponge_graph() {
        use crate::sponge::unpad;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for (r, c) in [(1, 1), (1, 2), (2, 1)] {
            let p = SpongeParams::new(r, c).unwrap();
            for _ in 0..2000 {
                let mut g = SmallGraph::new(p);
                for s in 0..p.nodes() {
                    if rng.gen_bool(0.4) {
                        g.set_edge(s, Some(rng.gen_range(0..p.nodes())));
                    }
                }
                let reference = g.to_graph();
                let rooted: u8 = reference.rooted_set().iter().fold(0, |m, &i| m | 1 << i);
                let covered: u8 = reference.covered().iter().fold(0, |m, &i| m | 1 << i);
                assert_eq!(g.rooted_mask(), rooted);
                assert_eq!(g.covered_mask(), covered);
                for s in 0..p.nodes() {
                    let expected = reference.fun_path_into(s).and_then(|path| unpad(&path, r)).map(|m| message_index(&m));
                    assert_eq!(g.message_into(s), expected, "r={r} c={c} s={s} {g:?}");
                }
            }
        }
    }

    #[test]
    fn message_indexing() {
        assert_eq!(message_index(&[]), 0);
        assert_eq!(message_index(&[false]), 1);
        assert_eq!(message_index(&[true]), 2);
        assert_eq!(message_index(&[false, false]), 3);
        assert_eq!(message_domain(1, 3), 3);
    }

    #[test]
    fn sim2_equals_plain_compressed_oracle() {
        let p = SpongeParams::new(1, 1).unwrap();
        let steps = vec![
            Step::Gate { gate: Gate::Hadamard, registers: vec!["X".into()], angle: 0.0 },
            Step::Gate { gate: Gate::Hadamard, registers: vec!["Y".into()], angle: 0.0 },
            Step::Query(public_call()),
            Step::Gate { gate: Gate::Increment, registers: vec!["X".into()], angle: 0.0 },
            Step::Query(public_call()),
        ];
        let adv = spec(steps, 2, 4);
        let cfg = QuantumGameConfig::for_queries(1, 1, 3, 2, 0);
        let mut game = QuantumGame::new(2, cfg.clone()).unwrap();
        let a = run_adversary(&adv, &mut game).unwrap();
        let db = CompressedOracle::new(ProductDistribution::uniform_xor(4, 4).unwrap(), GroupOp::Xor, cfg.capacity)
            .unwrap()
            .with_picture(CompressedPicture::Standard);
        let b = run_adversary(&adv, &mut CompressedStack { oracle: db }).unwrap();
        assert!(a.state.l2_distance(&b.state).unwrap() < 1e-9);
        let _ = p;
    }

    #[test]
    fn private_query_matches_full_oracle_sponge() {
        // game 1 vs game 2 on one private query in superposition
        let steps = vec![
            Step::Gate { gate: Gate::Hadamard, registers: vec!["M".into()], angle: 0.0 },
            Step::Query(private_call()),
            Step::Measure { registers: vec!["M".into(), "Z".into()], accept: vec![vec![0, 0], vec![1, 1]] },
        ];
        let adv = spec(steps, 1, 4);
        let cfg = QuantumGameConfig::for_queries(1, 1, 3, 0, 1);
        let p1 = run_adversary(&adv, &mut QuantumGame::new(1, cfg.clone()).unwrap()).unwrap().accept.unwrap();
        let mut g2 = QuantumGame::new(2, cfg).unwrap();
        let p2 = run_adversary(&adv, &mut g2).unwrap().accept.unwrap();
        assert!((p1 - p2).abs() < 1e-9, "{p1} {p2}");
        assert_eq!(g2.workspace_residue, 0.0);
    }

    /// Registers `X{i}`, `Y{i}` per query, `X{i}` preset to `nodes[i]`.
    fn basis_queries(game: usize, c: u32, nodes: &[usize]) -> (QuantumGame, QState) {
        let n = 1usize << (1 + c);
        let cfg = QuantumGameConfig::for_queries(1, c, 3, nodes.len(), 0);
        let mut regs = Vec::new();
        for (i, &s) in nodes.iter().enumerate() {
            regs.push(RegisterSpec { name: format!("X{i}"), cardinality: n, init: s });
            regs.push(RegisterSpec { name: format!("Y{i}"), cardinality: n, init: 0 });
        }
        let steps = (0..nodes.len())
            .map(|i| Step::Query(QueryCall { input: format!("X{i}"), output: format!("Y{i}"), interface: Interface::Public }))
            .collect();
        let adv = AdversarySpec { registers: regs, queries: nodes.len(), depth: nodes.len(), aux: String::new(), steps };
        let mut g = QuantumGame::new(game, cfg).unwrap();
        let state = run_adversary(&adv, &mut g).unwrap().state;
        (g, state)
    }

    /// Query node (1,0), then coherently the successor node reached with
    /// block 1: the path "1 1" pads the empty message. `X2` holds node 0
    /// and is never queried.
    fn valid_path_queries(game: usize) -> (QuantumGame, QState) {
        let p = SpongeParams::new(1, 2).unwrap();
        let n = p.nodes();
        let cfg = QuantumGameConfig::for_queries(1, 2, 3, 3, 0);
        let mut regs = Vec::new();
        for i in 0..3 {
            let init = if i == 0 { p.node(1, 0) } else { 0 };
            regs.push(RegisterSpec { name: format!("X{i}"), cardinality: n, init });
            regs.push(RegisterSpec { name: format!("Y{i}"), cardinality: n, init: 0 });
        }
        let adv = AdversarySpec { registers: regs, queries: 0, depth: 0, aux: String::new(), steps: vec![] };
        let mut g = QuantumGame::new(game, cfg).unwrap();
        let mut state = g.prepare(adv.initial_state().unwrap()).unwrap();
        let call = |i: usize| QueryCall { input: format!("X{i}"), output: format!("Y{i}"), interface: Interface::Public };
        g.query(&mut state, &call(0)).unwrap();
        let layout = state.layout().clone();
        let (y0, x1) = (layout.index_of("Y0").unwrap(), layout.index_of("X1").unwrap());
        state.apply_basis_function(|l| l[x1] ^= p.node(1 ^ p.outer(l[y0]), p.inner(l[y0]))).unwrap();
        g.query(&mut state, &call(1)).unwrap();
        (g, state)
    }

    fn law_of(state: &QState, regs: &[String]) -> std::collections::BTreeMap<Vec<usize>, f64> {
        state.marginal(regs).unwrap().into_iter().filter(|(_, w)| *w > 1e-14).collect()
    }

    fn law_gap(a: &std::collections::BTreeMap<Vec<usize>, f64>, b: &std::collections::BTreeMap<Vec<usize>, f64>) -> f64 {
        a.keys().chain(b.keys()).map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn empty_and_single_entry_graphs() {
        let p = SpongeParams::new(1, 2).unwrap();
        let g = SmallGraph::new(p);
        assert_eq!(g.rooted_mask(), 0b0001);
        assert_eq!(g.covered_mask(), 0b0001);
        let mut g = SmallGraph::new(p);
        // (a, 0) -> y with inner(y) = 2
        g.set_edge(p.node(1, 0), Some(p.node(0, 2)));
        assert_eq!(g.rooted_mask(), 0b0101);
        assert_eq!(g.covered_mask(), 0b0101);
        // an unrooted edge adds its source supernode to the covered set only
        g.set_edge(p.node(0, 3), Some(p.node(1, 1)));
        assert_eq!(g.rooted_mask(), 0b0101);
        assert_eq!(g.covered_mask(), 0b1101);
    }

    #[test]
    fn unrooted_query_takes_the_joint_branch() {
        // a node outside the root supernode is answered in one joint query
        // and never sets the puncture bit
        let p = SpongeParams::new(1, 2).unwrap();
        let (g3, s3) = basis_queries(3, 2, &[p.node(1, 3)]);
        assert_eq!(g3.find_probability(&s3).unwrap(), 0.0);
        let (_, s1) = basis_queries(1, 2, &[p.node(1, 3)]);
        let y = ["Y0".to_string()];
        assert!(law_gap(&law_of(&s3, &y), &law_of(&s1, &y)) < 1e-12);
    }

    #[test]
    fn surviving_inner_values_avoid_the_covered_set() {
        let p = SpongeParams::new(1, 2).unwrap();
        let (g, state) = basis_queries(3, 2, &[p.node(0, 0), p.node(1, 0)]);
        let find = g.find_probability(&state).unwrap();
        assert!(find > 0.0 && find < 1.0, "find = {find}");
        let layout = state.layout();
        let bits = layout.indices_of(&g.find_bits()).unwrap();
        let ys: Vec<usize> = (0..2).map(|i| layout.index_of(&format!("D{i}.y")).unwrap()).collect();
        let xs: Vec<usize> = (0..2).map(|i| layout.index_of(&format!("D{i}.x")).unwrap()).collect();
        let mut survivors = 0.0;
        state.for_each(|l, a| {
            if a.norm_sqr() < 1e-20 || bits.iter().any(|&b| l[b] == 1) || xs.iter().any(|&x| l[x] == p.nodes()) {
                return;
            }
            survivors += a.norm_sqr();
            let (i0, i1) = (p.inner(l[ys[0]]), p.inner(l[ys[1]]));
            assert!(i0 != 0 && i1 != 0 && i0 != i1, "label {l:?}");
        });
        // about 3/4 survive the first query and 2/4 of those the second,
        // less the weight where a cell was deleted
        assert!(survivors > 0.2, "survivors = {survivors}");
    }

    #[test]
    fn sim4_answers_valid_paddings_from_the_oracle() {
        // game 4 reads the second answer's outer part from H(empty) where
        // game 3 reads it from the database; the laws must coincide
        let p = SpongeParams::new(1, 2).unwrap();
        let mut stats = Vec::new();
        for game in [3, 4] {
            let (g, state) = valid_path_queries(game);
            let layout = state.layout().clone();
            let y1 = layout.index_of("Y1").unwrap();
            let h0 = layout.index_of("H0.x").ok().map(|x| (x, layout.index_of("H0.y").unwrap()));
            let bits = layout.indices_of(&g.find_bits()).unwrap();
            let (mut agree, mut from_h) = (0.0f64, 0.0f64);
            state.for_each(|l, a| {
                if bits.iter().any(|&b| l[b] == 1) {
                    return;
                }
                if let Some((hx, hy)) = h0 {
                    if l[hx] == message_index(&[]) {
                        from_h += a.norm_sqr();
                        if l[hy] == p.outer(l[y1]) {
                            agree += a.norm_sqr();
                        }
                    }
                }
            });
            if game == 4 {
                assert!(from_h > 0.1, "H answered with weight {from_h}");
                // over two values a fresh compressed answer sits next to its
                // stored value with the correction term -1/2 sum_y |y>, which
                // leaves a match with probability exactly 1/2
                assert!((agree / from_h - 0.5).abs() < 1e-9, "{}", agree / from_h);
            }
            stats.push(law_of(&state, &["Y0".into(), "Y1".into()]));
        }
        // a fresh H and a fresh outer cell are the same to the adversary
        assert!(law_gap(&stats[0], &stats[1]) < 1e-9);
    }

    #[test]
    fn sim4_without_valid_padding_matches_sim3() {
        // paths starting with block 0 never unpad at r = 1
        let p = SpongeParams::new(1, 2).unwrap();
        let (g3, s3) = basis_queries(3, 2, &[p.node(0, 0), p.node(1, 0)]);
        let (g4, s4) = basis_queries(4, 2, &[p.node(0, 0), p.node(1, 0)]);
        let mut regs = vec!["Y0".to_string(), "Y1".to_string()];
        regs.extend(g3.find_bits());
        assert_eq!(g3.find_bits(), g4.find_bits());
        assert!(law_gap(&law_of(&s3, &regs), &law_of(&s4, &regs)) < 1e-12);
        let hx = s4.layout().index_of("H0.x").unwrap();
        assert_eq!(s4.weight_where(|l| l[hx] != message_domain(1, 4)), 0.0);
    }

    #[test]
    fn reprep_steps_are_self_inverse() {
        let p = SpongeParams::new(1, 2).unwrap();
        let (g, mut state) = valid_path_queries(4);
        let PublicOracle::Sim(sim) = &g.public else { panic!("game 4 runs a simulator") };
        let n = p.nodes();
        let hdom = sim.h.as_ref().unwrap().dist().domain_size();
        let mut scratch: Vec<(String, usize)> = vec![("Q.XH".into(), hdom), ("Q.FL".into(), 2)];
        scratch.extend((0..n).map(|u| (format!("Q.O{u}"), p.outer_size())));
        state.append_registers(&scratch).unwrap();
        let layout = state.layout().clone();
        let db = sim.db.db_index(&state).unwrap();
        let xin = layout.index_of("X2").unwrap();
        let o: Vec<usize> = (0..n).map(|u| layout.index_of(&format!("Q.O{u}")).unwrap()).collect();
        let (xh, fl) = (layout.index_of("Q.XH").unwrap(), layout.index_of("Q.FL").unwrap());
        let before = state.clone();
        let mut changed = 0.0f64;
        for k in 0..p.inner_size() as u8 {
            for u in (0..n).filter(|&u| (k == 0) == (p.inner(u) == 0)) {
                sim.reprep_step(&mut state, &db, xin, &o, xh, fl, k, u).unwrap();
                changed = changed.max(state.l2_distance(&before).unwrap());
                sim.reprep_step(&mut state, &db, xin, &o, xh, fl, k, u).unwrap();
                assert!(state.l2_distance(&before).unwrap() < 1e-12, "k={k} u={u}");
            }
        }
        assert!(changed > 0.1, "no step touched the state");
    }

    #[test]
    fn scratch_is_released_after_every_query() {
        let p = SpongeParams::new(1, 2).unwrap();
        for game in 2..=4 {
            let (g, state) = basis_queries(game, 2, &[p.node(1, 0), p.node(0, 1), p.node(1, 2)]);
            assert!(state.layout().names().iter().all(|n| !n.starts_with("Q.")), "game {game}");
            assert_eq!(g.phi_calls(), 3);
        }
    }

    #[test]
    fn five_games_one_public_query() {
        use rand::SeedableRng;
        let cfg = QuantumGameConfig::for_queries(1, 1, 3, 1, 0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let adv = random_sponge_adversary(&cfg, &[Interface::Public], &mut rng);
        let rec = run_quantum_games(&adv, &cfg, 1e-9).unwrap();
        assert!(rec.holds, "{rec:?}");
        assert!(rec.adv_1_2 < 1e-9);
    }
}
