//! Experiment drivers behind the CLI subcommands and the acceptance suite.
//!
//! Each driver takes a serde config plus [`RunOptions`] and returns flat
//! records. All randomness comes from ChaCha8 streams keyed by
//! `(seed, case index)`, so a sweep gives the same records whatever the
//! thread count. Cases run in parallel; records come back in case order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use super::{
    birthday_adversary, random_adversary, random_layered_adversary, run_adversary, AdversarySpec, CompressedStack,
    FullStack, Interface,
};
use crate::bounds;
use crate::compressed_oracle::{CompressedOracle, CompressedPicture};
use crate::distributions::{GroupOp, ProductDistribution};
use crate::error::{Error, Result};
use crate::full_oracle::FullOracle;
use crate::puncture::{self, Relation};
use crate::qindiff::{self, QuantumGame, QuantumGameConfig};
use crate::sponge::{self, ClassicalScript, SpongeParams};
use crate::statevec::{hadamard_matrix, QState, RegisterLayout, DENSE_CAP};

/// Stream `case` of the ChaCha8 generator seeded with `seed`.
pub fn case_rng(seed: u64, case: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(case);
    rng
}

/// Round to 12 significant digits.
pub fn sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn ser12<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(sig12(*x))
}

fn ser12_opt<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_some(&sig12(*v)),
        None => s.serialize_none(),
    }
}

/// Options shared by every driver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    /// Overrides the driver's default tolerance.
    pub tol: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { seed: 0, tol: None }
    }
}

impl RunOptions {
    fn tol_or(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }
}

/// Largest state an experiment will build, and which guard applies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DimensionCheck {
    pub dim: u128,
    /// `Some(cap)` when the state is held densely enough for the dense cap
    /// to apply; sparse runs are only limited by the label width.
    pub cap: Option<u128>,
}

impl DimensionCheck {
    fn dense(dim: u128) -> Result<Self> {
        if dim > DENSE_CAP {
            return Err(Error::SizeGuard { dim, cap: DENSE_CAP });
        }
        Ok(Self { dim, cap: Some(DENSE_CAP) })
    }

    fn sparse(layout: &RegisterLayout) -> Self {
        Self { dim: layout.total_dim(), cap: None }
    }
}

// ---------------------------------------------------------------------------
// distributions and relations as they appear in configs

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistChoice {
    Uniform,
    /// `P[1] = lambda`. For `N > 2` the same marginal padded with zeros.
    Bernoulli { lambda: f64 },
    /// Seeded random strictly positive marginals.
    Random,
}

impl DistChoice {
    pub fn build<R: Rng>(&self, m: usize, n: usize, group: GroupOp, rng: &mut R) -> Result<ProductDistribution> {
        match self {
            DistChoice::Uniform if group == GroupOp::Xor => ProductDistribution::uniform_xor(m, n),
            DistChoice::Uniform => ProductDistribution::uniform(m, n),
            DistChoice::Bernoulli { lambda } if n == 2 => ProductDistribution::bernoulli(m, *lambda),
            DistChoice::Bernoulli { lambda } => {
                let mut row = vec![0.0; n];
                row[0] = 1.0 - lambda;
                row[1] = *lambda;
                ProductDistribution::from_marginals(&vec![row; m])
            }
            DistChoice::Random => ProductDistribution::random(m, n, rng),
        }
    }

    pub fn label(&self) -> String {
        match self {
            DistChoice::Uniform => "uniform".into(),
            DistChoice::Bernoulli { lambda } => format!("bernoulli({lambda})"),
            DistChoice::Random => "random".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationChoice {
    Empty,
    Collision,
    Preimage,
    PreimageOrCollision,
}

impl RelationChoice {
    pub fn relation(self) -> Relation {
        match self {
            RelationChoice::Empty => Relation::empty(),
            RelationChoice::Collision => Relation::collision(),
            RelationChoice::Preimage => Relation::preimage(),
            RelationChoice::PreimageOrCollision => Relation::preimage().union(&Relation::collision()),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RelationChoice::Empty => "empty",
            RelationChoice::Collision => "collision",
            RelationChoice::Preimage => "preimage",
            RelationChoice::PreimageOrCollision => "preimage-or-collision",
        }
    }
}

fn group_label(g: GroupOp) -> &'static str {
    match g {
        GroupOp::AddModN => "add-mod-n",
        GroupOp::Xor => "xor",
    }
}

// ---------------------------------------------------------------------------
// verify-correctness

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectnessConfig {
    pub domains: Vec<usize>,
    pub ranges: Vec<usize>,
    pub queries: Vec<usize>,
    pub groups: Vec<GroupOp>,
    pub distributions: Vec<DistChoice>,
    /// Random adversaries per case.
    pub adversaries: usize,
}

impl Default for CorrectnessConfig {
    fn default() -> Self {
        Self {
            domains: vec![2, 3, 4],
            ranges: vec![2, 3, 4],
            queries: vec![1, 2, 3],
            groups: vec![GroupOp::AddModN, GroupOp::Xor],
            distributions: vec![DistChoice::Uniform, DistChoice::Bernoulli { lambda: 0.25 }, DistChoice::Random],
            adversaries: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct CorrectnessCase {
    index: usize,
    m: usize,
    n: usize,
    q: usize,
    group: GroupOp,
    dist: DistChoice,
}

impl CorrectnessConfig {
    /// Every combination; xor is skipped for ranges that are not powers of
    /// two, where it is undefined.
    fn cases(&self) -> Vec<CorrectnessCase> {
        let mut out = Vec::new();
        for &m in &self.domains {
            for &n in &self.ranges {
                for &q in &self.queries {
                    for &group in &self.groups {
                        if group.validate(n).is_err() {
                            continue;
                        }
                        for dist in &self.distributions {
                            out.push(CorrectnessCase { index: out.len(), m, n, q, group, dist: dist.clone() });
                        }
                    }
                }
            }
        }
        out
    }

    /// The full-oracle run is the largest state: `X, Y, W` and `N^M` tables.
    pub fn dimension(&self) -> Result<DimensionCheck> {
        let dim = self
            .cases()
            .iter()
            .map(|c| (c.m * c.n * 2) as u128 * (c.n as u128).pow(c.m as u32))
            .max()
            .unwrap_or(0);
        DimensionCheck::dense(dim)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrectnessRow {
    pub case: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub q: usize,
    pub group: &'static str,
    pub distribution: String,
    pub adversaries: usize,
    #[serde(serialize_with = "ser12")]
    pub max_l2: f64,
    pub pass: bool,
}

/// Run every adversary against the full oracle in the Fourier picture and
/// against the CFO, decompress, and record the largest distance.
pub fn verify_correctness(cfg: &CorrectnessConfig, opts: RunOptions) -> Result<Vec<CorrectnessRow>> {
    let tol = opts.tol_or(1e-9);
    cfg.cases()
        .par_iter()
        .map(|case| {
            let mut rng = case_rng(opts.seed, case.index as u64);
            let dist = case.dist.build(case.m, case.n, case.group, &mut rng)?;
            let full = FullOracle::new(dist.clone(), case.group)?;
            let comp = CompressedOracle::new(dist, case.group, case.q)?;
            let mut max_l2: f64 = 0.0;
            for _ in 0..cfg.adversaries {
                let spec = random_adversary(case.m, case.n, case.q, &mut rng);
                let f = run_adversary(&spec, &mut FullStack { oracle: full.clone(), fourier: true })?;
                let c = run_adversary(&spec, &mut CompressedStack { oracle: comp.clone() })?;
                max_l2 = max_l2.max(comp.decompress(&c.state)?.l2_distance(&f.state)?);
            }
            Ok(CorrectnessRow {
                case: case.index,
                m: case.m,
                n: case.n,
                q: case.q,
                group: group_label(case.group),
                distribution: case.dist.label(),
                adversaries: cfg.adversaries,
                max_l2,
                pass: max_l2 <= tol,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// regress-cpho-attack: first-query closed forms and the missing-deletion attack

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// Input bits; the domain has `2^m` elements.
    pub m: u32,
    /// Output bits.
    pub n: u32,
    pub shots: usize,
    /// Allowed deviation of the estimated distinguishing probability.
    pub margin: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { m: 2, n: 2, shots: 10_000, margin: 0.02 }
    }
}

impl AttackConfig {
    pub fn dimension(&self) -> Result<DimensionCheck> {
        let (m, n) = (1u128 << self.m, 1u128 << self.n);
        DimensionCheck::dense(m * n * (m + 1) * n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackRecord {
    pub m: u32,
    pub n: u32,
    pub shots: usize,
    /// Largest entrywise gap between the standard-picture first query and
    /// its closed form, over all basis inputs.
    #[serde(serialize_with = "ser12")]
    pub csto_max_gap: f64,
    #[serde(serialize_with = "ser12")]
    pub cpho_max_gap: f64,
    /// `1 - 2^-m`.
    #[serde(serialize_with = "ser12")]
    pub expected: f64,
    /// Exact probability that the Hadamard-basis measurement of `X` is
    /// nonzero after the oracle without deletion.
    #[serde(serialize_with = "ser12")]
    pub exact: f64,
    #[serde(serialize_with = "ser12")]
    pub hat_without_deletion: f64,
    #[serde(serialize_with = "ser12")]
    pub hat_with_deletion: f64,
    /// `hat_without_deletion - hat_with_deletion`.
    #[serde(serialize_with = "ser12")]
    pub advantage: f64,
    pub holds: bool,
}

fn uniform_first_query_oracle(m: usize, n: usize, picture: CompressedPicture) -> Result<CompressedOracle> {
    Ok(CompressedOracle::new(ProductDistribution::uniform_xor(m, n)?, GroupOp::Xor, 1)?.with_picture(picture))
}

/// The database convention of the closed forms has an empty cell in
/// `sum_z |bottom, z> / sqrt(N)`; ours keeps padding at `|bottom, 0>`.
/// Map ours to theirs by a Hadamard on padding y-parts.
fn to_uniform_padding(state: &mut QState, oracle: &CompressedOracle) -> Result<()> {
    let n = oracle.dist().range_size();
    let bottom = oracle.bottom();
    let xi = state.layout().index_of(&oracle.cell_x(0))?;
    state.apply_conditioned_unitary(&[oracle.cell_y(0)], &[hadamard_matrix(n)], |l| (l[xi] == bottom).then_some(0))
}

fn max_entry_gap(a: &QState, b: &QState) -> Result<f64> {
    if a.layout() != b.layout() {
        return Err(Error::LayoutMismatch);
    }
    let mut gap: f64 = 0.0;
    for (l, x) in a.entries() {
        gap = gap.max((x - b.amplitude(&l)?).norm());
    }
    for (l, y) in b.entries() {
        gap = gap.max((a.amplitude(&l)? - y).norm());
    }
    Ok(gap)
}

fn parity(v: usize) -> f64 {
    if v.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Largest entrywise gap of the first standard-picture and phase-picture
/// queries from their closed forms, over every basis input.
pub fn first_query_gaps(m: usize, n: usize) -> Result<(f64, f64)> {
    let layout = RegisterLayout::new(&[("X", m), ("Y", n)])?;
    let full = layout.with_appended(&[("D0.x", m + 1), ("D0.y", n)])?;
    let bottom = m;
    let nf = n as f64;
    let (mut csto_gap, mut cpho_gap): (f64, f64) = (0.0, 0.0);
    for x in 0..m {
        for y in 0..n {
            // |x, y> |empty>
            let o = uniform_first_query_oracle(m, n, CompressedPicture::Standard)?;
            let mut s = o.initial_state(QState::basis(layout.clone(), &[x, y])?)?;
            o.csto_query(&mut s, "X", "Y")?;
            to_uniform_padding(&mut s, &o)?;
            let mut want = QState::zero(full.clone());
            let mut terms = Vec::new();
            for z in 0..n {
                terms.push((vec![x, y ^ z, x, z], 1.0 / nf.sqrt()));
                for yp in 0..n {
                    terms.push((vec![x, yp, x, z], -1.0 / nf.powf(1.5)));
                    terms.push((vec![x, yp, bottom, z], 1.0 / nf.powf(1.5)));
                }
            }
            add_terms(&mut want, &terms)?;
            csto_gap = csto_gap.max(max_entry_gap(&s, &want)?);

            // |x, eta> |empty>, eta = y
            let o = uniform_first_query_oracle(m, n, CompressedPicture::Phase)?;
            let mut s = o.initial_state(QState::basis(layout.clone(), &[x, y])?)?;
            o.cpho_query(&mut s, "X", "Y")?;
            to_uniform_padding(&mut s, &o)?;
            let mut want = QState::zero(full.clone());
            let terms: Vec<(Vec<usize>, f64)> = (0..n)
                .map(|z| {
                    if y == 0 {
                        (vec![x, 0, bottom, z], 1.0 / nf.sqrt())
                    } else {
                        (vec![x, y, x, z], parity(y & z) / nf.sqrt())
                    }
                })
                .collect();
            add_terms(&mut want, &terms)?;
            cpho_gap = cpho_gap.max(max_entry_gap(&s, &want)?);
        }
    }
    Ok((csto_gap, cpho_gap))
}

fn add_terms(state: &mut QState, terms: &[(Vec<usize>, f64)]) -> Result<()> {
    let layout = state.layout().clone();
    for (label, amp) in terms {
        let basis = QState::basis(layout.clone(), label)?;
        state.add_scaled(&basis, (*amp).into())?;
    }
    Ok(())
}

/// Outcome law of measuring `X` in the Hadamard basis after one query on
/// the uniform superposition `sum_x |x, 0>`.
fn attack_outcomes(m: usize, n: usize, delete: bool) -> Result<Vec<f64>> {
    let o = uniform_first_query_oracle(m, n, CompressedPicture::Phase)?;
    let layout = RegisterLayout::new(&[("X", m), ("Y", n)])?;
    let mut s = o.initial_state(QState::basis(layout, &[0, 0])?)?;
    s.apply_hadamard("X")?;
    if delete {
        o.cpho_query(&mut s, "X", "Y")?;
    } else {
        o.cpho_without_deletion(&mut s, "X", "Y")?;
    }
    s.apply_hadamard("X")?;
    let mut law = vec![0.0; m];
    for (v, p) in s.marginal(&["X"])? {
        law[v[0]] += p;
    }
    Ok(law)
}

fn sample_nonzero<R: Rng>(law: &[f64], shots: usize, rng: &mut R) -> f64 {
    let mut hits = 0usize;
    for _ in 0..shots {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut outcome = law.len() - 1;
        for (i, p) in law.iter().enumerate() {
            acc += p;
            if u < acc {
                outcome = i;
                break;
            }
        }
        hits += (outcome != 0) as usize;
    }
    hits as f64 / shots as f64
}

pub fn regress_cpho_attack(cfg: &AttackConfig, opts: RunOptions) -> Result<AttackRecord> {
    let tol = opts.tol_or(1e-10);
    let (m, n) = (1usize << cfg.m, 1usize << cfg.n);
    let (csto_max_gap, cpho_max_gap) = first_query_gaps(m, n)?;
    let broken = attack_outcomes(m, n, false)?;
    let sound = attack_outcomes(m, n, true)?;
    let mut rng = case_rng(opts.seed, 0);
    let hat_without_deletion = sample_nonzero(&broken, cfg.shots, &mut rng);
    let hat_with_deletion = sample_nonzero(&sound, cfg.shots, &mut rng);
    let expected = 1.0 - 1.0 / m as f64;
    let advantage = hat_without_deletion - hat_with_deletion;
    Ok(AttackRecord {
        m: cfg.m,
        n: cfg.n,
        shots: cfg.shots,
        csto_max_gap,
        cpho_max_gap,
        expected,
        exact: 1.0 - broken[0],
        hat_without_deletion,
        hat_with_deletion,
        advantage,
        holds: csto_max_gap <= tol && cpho_max_gap <= tol && (advantage - expected).abs() <= cfg.margin,
    })
}

// ---------------------------------------------------------------------------
// uniform fast path

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FastPathConfig {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub capacity: usize,
    pub states: usize,
}

impl Default for FastPathConfig {
    fn default() -> Self {
        Self { m: 4, n: 4, capacity: 3, states: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FastPathRecord {
    pub states: usize,
    #[serde(serialize_with = "ser12")]
    pub max_l2: f64,
    /// Total weight the sweep put on each case of the closed form: zero
    /// eta, insertion, update, removal.
    pub case_weight: [f64; 4],
    pub holds: bool,
}

/// Random states reached by a few generic queries and Haar unitaries; the
/// next query is then made both ways.
pub fn fast_path_sweep(cfg: &FastPathConfig, opts: RunOptions) -> Result<FastPathRecord> {
    let tol = opts.tol_or(1e-10);
    let o = CompressedOracle::new(ProductDistribution::uniform_xor(cfg.m, cfg.n)?, GroupOp::Xor, cfg.capacity)?;
    let results: Vec<(f64, [f64; 4])> = (0..cfg.states)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(opts.seed, i as u64);
            let layout = RegisterLayout::new(&[("X", cfg.m), ("Y", cfg.n)])?;
            let mut s = o.initial_state(QState::basis(layout, &[0, 0])?)?;
            // leave room in the database for the compared query
            let before = rng.gen_range(0..cfg.capacity);
            for _ in 0..before {
                let u = crate::statevec::random_unitary(cfg.m * cfg.n, &mut rng);
                s.apply_matrix(&["X", "Y"], &u)?;
                o.cfo_query(&mut s, "X", "Y")?;
            }
            let u = crate::statevec::random_unitary(cfg.m * cfg.n, &mut rng);
            s.apply_matrix(&["X", "Y"], &u)?;
            let weights = fast_path_cases(&o, &s)?;
            let mut generic = s.clone();
            o.cfo_query(&mut generic, "X", "Y")?;
            o.uniform_fast_query(&mut s, "X", "Y")?;
            Ok((s.l2_distance(&generic)?, weights))
        })
        .collect::<Result<_>>()?;
    let mut case_weight = [0.0; 4];
    let mut max_l2: f64 = 0.0;
    for (d, w) in results {
        max_l2 = max_l2.max(d);
        for k in 0..4 {
            case_weight[k] += w[k];
        }
    }
    Ok(FastPathRecord { states: cfg.states, max_l2, case_weight, holds: max_l2 <= tol })
}

fn fast_path_cases(o: &CompressedOracle, s: &QState) -> Result<[f64; 4]> {
    let db = o.db_index(s)?;
    let mut w = [0.0; 4];
    s.for_each(|l, a| {
        let (x, eta) = (l[0], l[1]);
        let k = if eta == 0 {
            0
        } else {
            match db.entries(l).iter().find(|e| e.0 == x) {
                None => 1,
                Some(e) if e.1 != eta => 2,
                Some(_) => 3,
            }
        };
        w[k] += a.norm_sqr();
    });
    Ok(w)
}

// ---------------------------------------------------------------------------
// adversaries in configs

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Preset {
    /// Basis queries on distinct inputs `0..queries`, each output register
    /// in the kickback state, then a check that every output reads 1.
    Birthday { queries: usize },
    /// Haar-random adversaries over random sizes, query counts and layer
    /// widths.
    Random {
        count: usize,
        #[serde(default = "default_max_queries")]
        max_queries: usize,
    },
}

fn default_max_queries() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AdversaryChoice {
    Script { script: AdversarySpec },
    Preset(Preset),
}

/// One adversary with the oracle sizes it was built for.
#[derive(Clone, Debug)]
pub struct SizedAdversary {
    pub m: usize,
    pub n: usize,
    pub spec: AdversarySpec,
}

impl AdversaryChoice {
    /// Materialize the adversaries; `m`, `n` size presets that do not pick
    /// their own.
    pub fn adversaries(&self, m: usize, n: usize, group: GroupOp, seed: u64) -> Result<Vec<SizedAdversary>> {
        match self {
            AdversaryChoice::Script { script } => {
                script.validate()?;
                Ok(vec![SizedAdversary { m, n, spec: script.clone() }])
            }
            AdversaryChoice::Preset(Preset::Birthday { queries }) => {
                Ok(vec![SizedAdversary { m, n, spec: birthday_adversary(m, n, *queries, group)? }])
            }
            AdversaryChoice::Preset(Preset::Random { count, max_queries }) => Ok((0..*count)
                .map(|i| {
                    let mut rng = case_rng(seed, i as u64);
                    let m = rng.gen_range(2..=4);
                    let n = rng.gen_range(2..=4);
                    let q = rng.gen_range(1..=(*max_queries).max(1));
                    // split q into layers of width one or two; two-query
                    // layers only while the joint unitary stays at most 128-dimensional
                    let parallel_ok = m * n <= 8;
                    let mut widths = Vec::new();
                    let mut left = q;
                    while left > 0 {
                        let w = if parallel_ok && left >= 2 && rng.gen_bool(0.5) { 2 } else { 1 };
                        widths.push(w);
                        left -= w;
                    }
                    SizedAdversary { m, n, spec: random_layered_adversary(m, n, &widths, &mut rng) }
                })
                .collect()),
        }
    }
}

fn standard_oracle(m: usize, n: usize, q: usize, dist: &DistChoice, group: GroupOp, seed: u64) -> Result<CompressedOracle> {
    let mut rng = case_rng(seed, u64::MAX);
    let d = dist.build(m, n, group, &mut rng)?;
    Ok(CompressedOracle::new(d, group, q.max(1))?.with_picture(CompressedPicture::Standard))
}

fn sparse_dimension(advs: &[SizedAdversary], extra_bits: usize) -> Result<DimensionCheck> {
    let mut worst: Option<RegisterLayout> = None;
    for a in advs {
        let o = CompressedOracle::new(ProductDistribution::uniform(a.m, a.n)?, GroupOp::AddModN, a.spec.queries.max(1))?;
        let mut regs: Vec<(String, usize)> =
            a.spec.registers.iter().map(|r| (r.name.clone(), r.cardinality)).collect();
        regs.extend(o.db_registers());
        regs.extend((0..extra_bits).map(|k| (format!("J{k}"), 2)));
        let layout = RegisterLayout::new(&regs)?;
        if worst.as_ref().is_none_or(|w| layout.total_dim() > w.total_dim()) {
            worst = Some(layout);
        }
    }
    Ok(worst.map(|l| DimensionCheck::sparse(&l)).unwrap_or(DimensionCheck { dim: 0, cap: None }))
}

// ---------------------------------------------------------------------------
// find-prob

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FindConfig {
    #[serde(rename = "M", default = "four")]
    pub m: usize,
    #[serde(rename = "N", default = "four")]
    pub n: usize,
    pub relation: RelationChoice,
    pub adversary: AdversaryChoice,
    #[serde(default = "uniform")]
    pub distribution: DistChoice,
    #[serde(default)]
    pub group: GroupOp,
}

fn four() -> usize {
    4
}

fn uniform() -> DistChoice {
    DistChoice::Uniform
}

impl FindConfig {
    pub fn dimension(&self, seed: u64) -> Result<DimensionCheck> {
        let advs = self.adversary.adversaries(self.m, self.n, self.group, seed)?;
        let depth = advs.iter().map(|a| a.spec.depth).max().unwrap_or(0);
        sparse_dimension(&advs, depth)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FindRow {
    pub adversary: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub q: usize,
    pub relation: &'static str,
    #[serde(serialize_with = "ser12")]
    pub find: f64,
    #[serde(serialize_with = "ser12_opt")]
    pub lemma3: Option<f64>,
    #[serde(serialize_with = "ser12")]
    pub weaker: f64,
    #[serde(serialize_with = "ser12_opt")]
    pub relation_bound: Option<f64>,
    #[serde(serialize_with = "ser12_opt")]
    pub zhandry: Option<f64>,
    /// `min(1, every applicable bound)`.
    #[serde(serialize_with = "ser12")]
    pub min_bound: f64,
    pub holds: bool,
}

/// The bounds that cover `P[Find]` for a relation after `q` queries to an
/// `N`-valued oracle: `(lemma3, weaker, relation-specific, zhandry)`.
pub fn find_bounds(rel: RelationChoice, q: usize, n: usize) -> (Option<f64>, f64, Option<f64>, Option<f64>) {
    let lemma3 = bounds::lemma3_bound(q, n).ok();
    let weaker = bounds::weaker_coll_preim_bound(q, n);
    let (specific, zhandry) = match rel {
        RelationChoice::Collision => (bounds::coll_only_bound(q, n).ok(), Some(bounds::zhandry_coll(q, n))),
        RelationChoice::Preimage => (bounds::preim_only_bound(q, n).ok(), Some(bounds::zhandry_preim(q, n))),
        RelationChoice::PreimageOrCollision | RelationChoice::Empty => (None, None),
    };
    (lemma3, weaker, specific, zhandry)
}

pub fn find_prob(cfg: &FindConfig, opts: RunOptions) -> Result<Vec<FindRow>> {
    let tol = opts.tol_or(1e-10);
    let advs = cfg.adversary.adversaries(cfg.m, cfg.n, cfg.group, opts.seed)?;
    advs.par_iter()
        .enumerate()
        .map(|(i, a)| {
            let q = a.spec.queries;
            let base = standard_oracle(a.m, a.n, q, &cfg.distribution, cfg.group, opts.seed)?;
            let find = puncture::find_probability(&a.spec, &base, &cfg.relation.relation())?;
            let (lemma3, weaker, relation_bound, zhandry) = find_bounds(cfg.relation, q, a.n);
            let min_bound = [lemma3, Some(weaker), relation_bound, zhandry]
                .into_iter()
                .flatten()
                .fold(1.0f64, f64::min);
            Ok(FindRow {
                adversary: i,
                m: a.m,
                n: a.n,
                q,
                relation: cfg.relation.label(),
                find,
                lemma3,
                weaker,
                relation_bound,
                zhandry,
                min_bound,
                holds: find <= min_bound + tol,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// o2h

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct O2hConfig {
    #[serde(rename = "M", default = "four")]
    pub m: usize,
    #[serde(rename = "N", default = "four")]
    pub n: usize,
    pub adversary: AdversaryChoice,
    #[serde(default = "default_r1")]
    pub r1: Vec<RelationChoice>,
    #[serde(default = "default_r2")]
    pub r2: Vec<RelationChoice>,
    /// Also compare immediate and deferred puncturing on `R1 ∪ R2`.
    #[serde(default = "yes")]
    pub compare_immediate: bool,
    #[serde(default = "uniform")]
    pub distribution: DistChoice,
    #[serde(default)]
    pub group: GroupOp,
}

fn default_r1() -> Vec<RelationChoice> {
    vec![RelationChoice::Empty, RelationChoice::Preimage]
}

fn default_r2() -> Vec<RelationChoice> {
    vec![RelationChoice::Collision, RelationChoice::PreimageOrCollision]
}

fn yes() -> bool {
    true
}

impl O2hConfig {
    pub fn dimension(&self, seed: u64) -> Result<DimensionCheck> {
        let advs = self.adversary.adversaries(self.m, self.n, self.group, seed)?;
        let depth = advs.iter().map(|a| a.spec.depth).max().unwrap_or(0);
        sparse_dimension(&advs, 2 * depth)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct O2hRow {
    pub adversary: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub q: usize,
    pub d: usize,
    pub r1: &'static str,
    pub r2: &'static str,
    #[serde(serialize_with = "ser12")]
    pub p_left: f64,
    #[serde(serialize_with = "ser12")]
    pub p_right: f64,
    #[serde(serialize_with = "ser12")]
    pub find: f64,
    /// `|P_left - P_right|`.
    #[serde(serialize_with = "ser12")]
    pub lhs: f64,
    /// `|sqrt(P_left) - sqrt(P_right)|`.
    #[serde(serialize_with = "ser12")]
    pub lhs_sqrt: f64,
    /// `sqrt((d + 1) P[Find])`.
    #[serde(serialize_with = "ser12")]
    pub rhs: f64,
    /// Total variation between immediate and deferred puncturing on
    /// `R1 ∪ R2`.
    #[serde(serialize_with = "ser12_opt")]
    pub tv_immediate: Option<f64>,
    pub holds: bool,
}

pub fn o2h(cfg: &O2hConfig, opts: RunOptions) -> Result<Vec<O2hRow>> {
    let slack = opts.tol_or(1e-10);
    let advs = cfg.adversary.adversaries(cfg.m, cfg.n, cfg.group, opts.seed)?;
    let mut jobs = Vec::new();
    for (i, a) in advs.iter().enumerate() {
        for &r1 in &cfg.r1 {
            for &r2 in &cfg.r2 {
                jobs.push((i, a, r1, r2));
            }
        }
    }
    jobs.par_iter()
        .map(|&(i, a, r1, r2)| {
            let base = standard_oracle(a.m, a.n, a.spec.queries, &cfg.distribution, cfg.group, opts.seed)?;
            let rec = puncture::run_o2h_experiment(&a.spec, &base, &r1.relation(), &r2.relation(), slack)?;
            let tv_immediate = if cfg.compare_immediate {
                let joint = r1.relation().union(&r2.relation());
                let d = puncture::deferred_joint_law(&a.spec, &base, &joint)?;
                let im = puncture::immediate_joint_law(&a.spec, &base, &joint)?;
                Some(puncture::total_variation(&d, &im))
            } else {
                None
            };
            let tv_ok = tv_immediate.is_none_or(|tv| tv <= 1e-9);
            Ok(O2hRow {
                adversary: i,
                m: a.m,
                n: a.n,
                q: a.spec.queries,
                d: a.spec.depth,
                r1: r1.label(),
                r2: r2.label(),
                p_left: rec.p_left,
                p_right: rec.p_right,
                find: rec.find,
                lhs: rec.lhs_diff,
                lhs_sqrt: rec.sqrt_diff,
                rhs: rec.rhs_bound,
                tv_immediate,
                holds: rec.holds && tv_ok,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// sponge-classical

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassicalAdversary {
    Script { script: ClassicalScript },
    Preset { preset: ClassicalPreset },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassicalPreset {
    /// `q` public queries walking rooted supernodes; accepts on an inner
    /// collision or a return to the root supernode.
    Collision,
    /// Absorb the empty message by hand, then compare with the private
    /// interface.
    Consistency,
    /// One private query on the empty message, then public queries on
    /// fixed nodes; accepts when the first public answer's outer part
    /// equals the private answer.
    Mixed,
}

impl ClassicalAdversary {
    pub fn label(&self) -> String {
        match self {
            ClassicalAdversary::Script { .. } => "script".into(),
            ClassicalAdversary::Preset { preset } => match preset {
                ClassicalPreset::Collision => "collision".into(),
                ClassicalPreset::Consistency => "consistency".into(),
                ClassicalPreset::Mixed => "mixed".into(),
            },
        }
    }

    pub fn script(&self, p: SpongeParams, q: usize) -> ClassicalScript {
        match self {
            ClassicalAdversary::Script { script } => script.clone(),
            ClassicalAdversary::Preset { preset: ClassicalPreset::Collision } => sponge::collision_script(p, q),
            ClassicalAdversary::Preset { preset: ClassicalPreset::Consistency } => sponge::consistency_script(p),
            ClassicalAdversary::Preset { preset: ClassicalPreset::Mixed } => mixed_script(p, q),
        }
    }
}

/// Private query on the empty message and `q - 1` public queries.
pub fn mixed_script(p: SpongeParams, q: usize) -> ClassicalScript {
    use sponge::{ClassicalStep, Cond, Expr};
    let mut steps = vec![ClassicalStep::Private { message: String::new(), out: "z".into() }];
    for i in 1..q.max(1) {
        steps.push(ClassicalStep::Public { input: Expr::Const(p.node(1, 0) ^ (i - 1)), out: format!("t{i}") });
    }
    let accept = if q >= 2 {
        Cond::Eq(Expr::Outer(Box::new(Expr::Var("t1".into()))), Expr::Var("z".into()))
    } else {
        Cond::Eq(Expr::Var("z".into()), Expr::Const(0))
    };
    ClassicalScript { steps, accept }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalSpongeConfig {
    pub r: u32,
    pub c: u32,
    /// Query budget of preset adversaries.
    pub q: usize,
    /// A single game in `1..=6`; all six when absent.
    #[serde(default)]
    pub game: Option<usize>,
    /// One sweep per seed; the CLI seed when empty.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub adversary: ClassicalAdversary,
    /// Also check game 3 against game 4 conditioned on no bad event, by
    /// enumerating every coin sequence.
    #[serde(default)]
    pub claim1: bool,
}

fn default_runs() -> usize {
    100_000
}

impl ClassicalSpongeConfig {
    pub fn dimension(&self) -> Result<DimensionCheck> {
        let p = SpongeParams::new(self.r, self.c)?;
        DimensionCheck::dense(p.nodes() as u128)
    }

    fn games(&self) -> Result<Vec<usize>> {
        match self.game {
            Some(g) if (1..=6).contains(&g) => Ok(vec![g]),
            Some(g) => Err(Error::InvalidParameter(format!("classical game {g} is not in 1..=6"))),
            None => Ok((1..=6).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassicalRow {
    pub seed: u64,
    pub game: usize,
    pub runs: usize,
    #[serde(serialize_with = "ser12")]
    pub p_accept: f64,
    #[serde(serialize_with = "ser12")]
    pub sigma: f64,
    #[serde(serialize_with = "ser12")]
    pub p_bad: f64,
    #[serde(serialize_with = "ser12")]
    pub sigma_bad: f64,
    /// `f_coll` at the largest number of internal samples in any run.
    #[serde(serialize_with = "ser12")]
    pub f_coll: f64,
    /// `|P[game] - P[game - 1]|`, when the previous game ran.
    #[serde(serialize_with = "ser12_opt")]
    pub hop: Option<f64>,
    /// What the hop may be: its bound plus four combined standard errors.
    #[serde(serialize_with = "ser12_opt")]
    pub hop_allowed: Option<f64>,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Claim1Row {
    pub script: String,
    pub q: usize,
    #[serde(serialize_with = "ser12")]
    pub p_bad: f64,
    /// Total variation between the game-3 and game-4 transcript laws given
    /// no bad event.
    #[serde(serialize_with = "ser12")]
    pub tv: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassicalReport {
    pub games: Vec<ClassicalRow>,
    pub claim1: Vec<Claim1Row>,
}

impl ClassicalReport {
    pub fn holds(&self) -> bool {
        self.games.iter().all(|g| g.holds) && self.claim1.iter().all(|c| c.holds)
    }
}

/// The bound on `|P[g] - P[g-1]|` in terms of the bad probabilities of the
/// two games.
fn classical_hop_bound(game: usize, bad_prev: f64, bad: f64) -> f64 {
    match game {
        2 => 0.0,
        3 => bad,
        4 => bad_prev + bad,
        5 => 4.0 * bad_prev.max(bad),
        6 => bad_prev.max(bad),
        _ => 0.0,
    }
}

pub fn sponge_classical(cfg: &ClassicalSpongeConfig, opts: RunOptions) -> Result<ClassicalReport> {
    let p = SpongeParams::new(cfg.r, cfg.c)?;
    let script = cfg.adversary.script(p, cfg.q);
    let games = cfg.games()?;
    let seeds = if cfg.seeds.is_empty() { vec![opts.seed] } else { cfg.seeds.clone() };
    let mut jobs = Vec::new();
    for &seed in &seeds {
        for &g in &games {
            jobs.push((seed, g));
        }
    }
    let estimates: Vec<sponge::GameEstimate> = jobs
        .par_iter()
        .map(|&(seed, g)| sponge::estimate_game(p, &script, g, cfg.runs, case_rng(seed, g as u64)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (k, (&(seed, g), e)) in jobs.iter().zip(&estimates).enumerate() {
        let f_coll = bounds::f_coll(e.max_samples, cfg.c);
        let prev = (k > 0 && jobs[k - 1] == (seed, g - 1)).then(|| &estimates[k - 1]);
        let (hop, hop_allowed) = match prev {
            Some(pe) => {
                let sigma = (pe.sigma().powi(2) + e.sigma().powi(2)).sqrt();
                let allowed = classical_hop_bound(g, pe.p_bad, e.p_bad) + 4.0 * sigma;
                (Some((e.p_accept - pe.p_accept).abs()), Some(allowed))
            }
            None => (None, None),
        };
        let hop_ok = match (hop, hop_allowed) {
            (Some(h), Some(a)) => h <= a,
            _ => true,
        };
        let bad_ok = e.p_bad <= f_coll + 4.0 * e.sigma_bad();
        rows.push(ClassicalRow {
            seed,
            game: g,
            runs: e.runs,
            p_accept: e.p_accept,
            sigma: e.sigma(),
            p_bad: e.p_bad,
            sigma_bad: e.sigma_bad(),
            f_coll,
            hop,
            hop_allowed,
            holds: hop_ok && bad_ok,
        });
    }
    let claim1 = if cfg.claim1 {
        claim1_rows(p, &[(cfg.adversary.label(), script.clone(), cfg.q)], opts.tol_or(1e-9))?
    } else {
        Vec::new()
    };
    Ok(ClassicalReport { games: rows, claim1 })
}

/// Exact comparison of games 3 and 4 given no bad event.
pub fn claim1_rows(p: SpongeParams, scripts: &[(String, ClassicalScript, usize)], tol: f64) -> Result<Vec<Claim1Row>> {
    use std::collections::BTreeMap;
    let conditioned = |game: usize, script: &ClassicalScript| -> Result<(BTreeMap<Vec<sponge::Call>, f64>, f64)> {
        let law = sponge::exact_transcript_law(p, script, game)?;
        let good: f64 = law.iter().filter(|((_, bad), _)| !bad).map(|(_, w)| w).sum();
        let mut out = BTreeMap::new();
        for ((t, bad), w) in law {
            if !bad {
                *out.entry(t).or_insert(0.0) += w / good;
            }
        }
        Ok((out, 1.0 - good))
    };
    scripts
        .iter()
        .map(|(name, script, q)| {
            let (a, bad3) = conditioned(3, script)?;
            let (b, bad4) = conditioned(4, script)?;
            let tv = sponge::law_distance(&a, &b);
            Ok(Claim1Row {
                script: name.clone(),
                q: *q,
                p_bad: bad3,
                tv,
                holds: tv <= tol && (bad3 - bad4).abs() <= tol,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// sponge-quantum

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QuantumAdversary {
    Script { script: AdversarySpec },
    /// `count` Haar-random adversaries making the listed queries in order.
    Random { count: usize, interfaces: Vec<Interface> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumSpongeConfig {
    pub r: u32,
    pub c: u32,
    /// Public queries of the default adversary, used when `adversary` is
    /// absent.
    #[serde(default = "one")]
    pub q: usize,
    /// A single game in `1..=5`; all five, with the hop checks, when absent.
    #[serde(default)]
    pub game: Option<usize>,
    /// Blocks per padded private message.
    #[serde(default = "three")]
    pub blocks: usize,
    #[serde(default)]
    pub adversary: Option<QuantumAdversary>,
}

fn one() -> usize {
    1
}

fn three() -> usize {
    3
}

impl QuantumSpongeConfig {
    fn adversaries(&self, seed: u64) -> Result<Vec<(String, AdversarySpec, QuantumGameConfig)>> {
        let (count, interfaces) = match &self.adversary {
            Some(QuantumAdversary::Script { script }) => {
                script.validate()?;
                let calls: Vec<Interface> = script.layers().iter().flatten().map(|c| c.interface).collect();
                let cfg = self.game_config(&calls);
                return Ok(vec![(interfaces_label(&calls), script.clone(), cfg)]);
            }
            Some(QuantumAdversary::Random { count, interfaces }) => (*count, interfaces.clone()),
            None => (1, vec![Interface::Public; self.q]),
        };
        let cfg = self.game_config(&interfaces);
        Ok((0..count)
            .map(|i| {
                let mut rng = case_rng(seed, i as u64);
                let spec = qindiff::random_sponge_adversary(&cfg, &interfaces, &mut rng);
                (interfaces_label(&interfaces), spec, cfg.clone())
            })
            .collect())
    }

    fn game_config(&self, calls: &[Interface]) -> QuantumGameConfig {
        let public = calls.iter().filter(|i| **i == Interface::Public).count();
        QuantumGameConfig::for_queries(self.r, self.c, self.blocks, public, calls.len() - public)
    }

    pub fn dimension(&self, seed: u64) -> Result<DimensionCheck> {
        let mut worst = DimensionCheck { dim: 0, cap: None };
        for (_, spec, cfg) in self.adversaries(seed)? {
            let game = QuantumGame::new(self.game.unwrap_or(4).max(2), cfg)?;
            let _ = game;
            let mut regs: Vec<(String, usize)> = spec.registers.iter().map(|r| (r.name.clone(), r.cardinality)).collect();
            let n = 1usize << (self.r + self.c);
            for k in 0..spec.queries {
                regs.push((format!("D{k}.x"), n + 1));
                regs.push((format!("D{k}.y"), n));
            }
            let layout = RegisterLayout::new(&regs)?;
            if layout.total_dim() > worst.dim {
                worst = DimensionCheck::sparse(&layout);
            }
        }
        Ok(worst)
    }
}

fn interfaces_label(calls: &[Interface]) -> String {
    calls
        .iter()
        .map(|i| match i {
            Interface::Public => "pub",
            Interface::Private => "priv",
        })
        .collect::<Vec<_>>()
        .join("+")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantumRow {
    pub adversary: usize,
    pub queries: String,
    #[serde(serialize_with = "ser12_opt")]
    pub p1: Option<f64>,
    #[serde(serialize_with = "ser12_opt")]
    pub p2: Option<f64>,
    #[serde(serialize_with = "ser12_opt")]
    pub p3: Option<f64>,
    #[serde(serialize_with = "ser12_opt")]
    pub p4: Option<f64>,
    #[serde(serialize_with = "ser12_opt")]
    pub p5: Option<f64>,
    #[serde(serialize_with = "ser12_opt")]
    pub find3: Option<f64>,
    #[serde(serialize_with = "ser12_opt")]
    pub find4: Option<f64>,
    #[serde(serialize_with = "ser12_opt")]
    pub find5: Option<f64>,
    pub q_sim: Option<usize>,
    #[serde(serialize_with = "ser12_opt")]
    pub adv_1_2: Option<f64>,
    #[serde(serialize_with = "ser12_opt")]
    pub adv_2_3: Option<f64>,
    #[serde(serialize_with = "ser12_opt")]
    pub bound_2_3: Option<f64>,
    #[serde(serialize_with = "ser12_opt")]
    pub adv_3_4: Option<f64>,
    #[serde(serialize_with = "ser12_opt")]
    pub bound_3_4: Option<f64>,
    #[serde(serialize_with = "ser12_opt")]
    pub adv_4_5: Option<f64>,
    #[serde(serialize_with = "ser12_opt")]
    pub bound_4_5: Option<f64>,
    /// Weight the construction could not uncompute, summed over games.
    #[serde(serialize_with = "ser12")]
    pub workspace_residue: f64,
    pub holds: bool,
}

pub fn sponge_quantum(cfg: &QuantumSpongeConfig, opts: RunOptions) -> Result<Vec<QuantumRow>> {
    let slack = opts.tol_or(1e-9);
    let advs = cfg.adversaries(opts.seed)?;
    advs.par_iter()
        .enumerate()
        .map(|(i, (label, spec, gcfg))| match cfg.game {
            None => {
                let rec = qindiff::run_quantum_games(spec, gcfg, slack)?;
                Ok(QuantumRow {
                    adversary: i,
                    queries: label.clone(),
                    p1: Some(rec.accept[0]),
                    p2: Some(rec.accept[1]),
                    p3: Some(rec.accept[2]),
                    p4: Some(rec.accept[3]),
                    p5: Some(rec.accept[4]),
                    find3: Some(rec.find[0]),
                    find4: Some(rec.find[1]),
                    find5: Some(rec.find[2]),
                    q_sim: Some(rec.q_sim),
                    adv_1_2: Some(rec.adv_1_2),
                    adv_2_3: Some(rec.adv_2_3),
                    bound_2_3: Some(rec.bound_2_3),
                    adv_3_4: Some(rec.adv_3_4),
                    bound_3_4: Some(rec.bound_3_4),
                    adv_4_5: Some(rec.adv_4_5),
                    bound_4_5: Some(rec.bound_4_5),
                    workspace_residue: rec.workspace_residue,
                    holds: rec.holds,
                })
            }
            Some(g) => {
                let mut game = QuantumGame::new(g, gcfg.clone())?;
                let run = run_adversary(spec, &mut game)?;
                let p = run
                    .accept
                    .ok_or_else(|| Error::InvalidAdversary("the adversary must end with a measurement".into()))?;
                let find = (g >= 3).then(|| game.find_probability(&run.state)).transpose()?;
                let mut row = QuantumRow {
                    adversary: i,
                    queries: label.clone(),
                    p1: None,
                    p2: None,
                    p3: None,
                    p4: None,
                    p5: None,
                    find3: None,
                    find4: None,
                    find5: None,
                    q_sim: None,
                    adv_1_2: None,
                    adv_2_3: None,
                    bound_2_3: None,
                    adv_3_4: None,
                    bound_3_4: None,
                    adv_4_5: None,
                    bound_4_5: None,
                    workspace_residue: game.workspace_residue,
                    holds: true,
                };
                match g {
                    1 => row.p1 = Some(p),
                    2 => row.p2 = Some(p),
                    3 => (row.p3, row.find3) = (Some(p), find),
                    4 => (row.p4, row.find4) = (Some(p), find),
                    _ => (row.p5, row.find5) = (Some(p), find),
                }
                Ok(row)
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// bounds

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsCsvRow {
    pub q: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub c: u32,
    #[serde(serialize_with = "ser12_opt")]
    pub lemma3: Option<f64>,
    #[serde(serialize_with = "ser12")]
    pub weaker: f64,
    #[serde(serialize_with = "ser12_opt")]
    pub coll_only: Option<f64>,
    #[serde(serialize_with = "ser12_opt")]
    pub preim_only: Option<f64>,
    #[serde(serialize_with = "ser12")]
    pub zhandry_preim: f64,
    #[serde(serialize_with = "ser12")]
    pub zhandry_coll: f64,
    #[serde(serialize_with = "ser12")]
    pub f_coll: f64,
    #[serde(serialize_with = "ser12")]
    pub f_coll_q: f64,
    #[serde(serialize_with = "ser12")]
    pub classical_eps: f64,
    #[serde(serialize_with = "ser12")]
    pub quantum_eps: f64,
    /// Names of the bounds above 1, which say nothing.
    pub vacuous: String,
}

/// One row per `q`, at `N = 2^c`. `N` must be a power of two.
pub fn bounds_table(qs: &[usize], n: usize) -> Result<Vec<BoundsCsvRow>> {
    if !n.is_power_of_two() || n < 2 {
        return Err(Error::InvalidParameter(format!("N must be a power of two >= 2, got {n}")));
    }
    let c = n.trailing_zeros();
    Ok(qs
        .iter()
        .map(|&q| {
            let b = bounds::bounds_row(q, c);
            let mut vacuous = Vec::new();
            let mut note = |name: &str, v: Option<bounds::BoundValue>| {
                if v.is_some_and(|v| v.vacuous) {
                    vacuous.push(name.to_string());
                }
            };
            note("lemma3", b.lemma3);
            note("weaker", Some(b.weaker));
            note("coll_only", b.coll_only);
            note("preim_only", b.preim_only);
            note("zhandry_preim", Some(b.zhandry_preim));
            note("zhandry_coll", Some(b.zhandry_coll));
            note("f_coll", Some(b.f_coll));
            note("f_coll_q", Some(b.f_coll_q));
            note("classical_eps", Some(b.classical_eps));
            note("quantum_eps", Some(b.quantum_eps));
            BoundsCsvRow {
                q,
                n,
                c,
                lemma3: b.lemma3.map(|v| v.raw),
                weaker: b.weaker.raw,
                coll_only: b.coll_only.map(|v| v.raw),
                preim_only: b.preim_only.map(|v| v.raw),
                zhandry_preim: b.zhandry_preim.raw,
                zhandry_coll: b.zhandry_coll.raw,
                f_coll: b.f_coll.raw,
                f_coll_q: b.f_coll_q.raw,
                classical_eps: b.classical_eps.raw,
                quantum_eps: b.quantum_eps.raw,
                vacuous: vacuous.join(" "),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(sig12(0.1 + 0.2), 0.3);
        assert_eq!(sig12(1.0 / 3.0), 0.333333333333);
        assert_eq!(sig12(0.0), 0.0);
        assert_eq!(sig12(-2.0f64.sqrt()), -1.41421356237);
    }

    #[test]
    fn case_streams_differ_and_repeat() {
        let a: u64 = case_rng(7, 0).gen();
        let b: u64 = case_rng(7, 1).gen();
        assert_ne!(a, b);
        assert_eq!(a, case_rng(7, 0).gen::<u64>());
    }

    #[test]
    fn correctness_grid_size() {
        // xor only exists at N in {2, 4}
        assert_eq!(CorrectnessConfig::default().cases().len(), 3 * 3 * 3 * 3 + 3 * 2 * 3 * 3);
    }
}
