//! Puncturing a compressed oracle on a relation over its database.
//!
//! A relation is measured on the standard-basis database after each query
//! layer. Immediate mode projects on the outcome and records its
//! probability; deferred mode XORs the outcome into a fresh qubit `J{k}` so
//! the run stays unitary and the outcomes are read off the final state.

use std::fmt;
use std::sync::Arc;

use crate::compressed_oracle::{CompressedOracle, DbBasis};
use crate::error::{Error, Result};
use crate::harness::{apply_layer, apply_step, accept_probability, AdversarySpec, OracleStack, QueryCall, Step};
use crate::statevec::{QState, TOL_INVARIANT};

type RelationFn = dyn Fn(&[(usize, usize)]) -> bool + Send + Sync;

/// A predicate on databases, given as their non-padding `(x, y)` pairs.
#[derive(Clone)]
pub struct Relation {
    name: String,
    pred: Arc<RelationFn>,
}

impl fmt::Debug for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Relation").field(&self.name).finish()
    }
}

impl Relation {
    pub fn new(name: &str, pred: impl Fn(&[(usize, usize)]) -> bool + Send + Sync + 'static) -> Self {
        Self {
            name: name.to_string(),
            pred: Arc::new(pred),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn holds(&self, entries: &[(usize, usize)]) -> bool {
        (self.pred)(entries)
    }

    pub fn empty() -> Self {
        Self::new("empty", |_| false)
    }

    /// Two distinct inputs with equal outputs.
    pub fn collision() -> Self {
        Self::new("collision", |e| {
            e.iter()
                .enumerate()
                .any(|(i, a)| e[i + 1..].iter().any(|b| a.0 != b.0 && a.1 == b.1))
        })
    }

    /// Some input maps to zero.
    pub fn preimage() -> Self {
        Self::new("preimage", |e| e.iter().any(|&(_, y)| y == 0))
    }

    /// Some stored pair lies in `set`.
    pub fn membership(name: &str, set: Vec<(usize, usize)>) -> Self {
        Self::new(name, move |e| e.iter().any(|p| set.contains(p)))
    }

    pub fn union(&self, other: &Relation) -> Self {
        let (a, b) = (self.pred.clone(), other.pred.clone());
        Self {
            name: format!("{}|{}", self.name, other.name),
            pred: Arc::new(move |e| a(e) || b(e)),
        }
    }

    pub fn is_empty_relation(&self) -> bool {
        self.name == "empty"
    }
}

/// Coherently XOR `R(D)` into a fresh qubit `bit`. The database must be in
/// the standard basis.
pub fn log_relation(state: &mut QState, oracle: &CompressedOracle, relation: &Relation, bit: &str) -> Result<()> {
    let db = oracle.db_index(state)?;
    state.append_registers(&[(bit, 2)])?;
    let j = state.layout().index_of(bit)?;
    state.apply_basis_function(|l| {
        if relation.holds(&db.entries(l)) {
            l[j] ^= 1;
        }
    })
}

/// Measure `R` on a standard-basis database. Returns `P[R = 1]` and the
/// post-measurement state for `outcome`, renormalized.
pub fn measure_relation(
    state: &QState,
    oracle: &CompressedOracle,
    relation: &Relation,
    outcome: bool,
) -> Result<(f64, Option<QState>)> {
    let db = oracle.db_index(state)?;
    let proj = state.project(|l| relation.holds(&db.entries(l)));
    let kept = if outcome { proj.accepted } else { proj.rejected };
    Ok((proj.probability, kept))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PunctureMode {
    Immediate,
    Deferred,
}

/// A compressed oracle punctured on one or more relations. Each relation
/// gets its own log prefix; deferred outcome bits are named
/// `{prefix}{layer}`.
#[derive(Clone, Debug)]
pub struct PuncturedOracle {
    base: CompressedOracle,
    relations: Vec<(Relation, String)>,
    mode: PunctureMode,
    layer: usize,
    find_log: Vec<f64>,
    not_found: f64,
    degenerate: bool,
}

impl PuncturedOracle {
    pub fn new(base: CompressedOracle, relation: Relation, mode: PunctureMode) -> Self {
        Self::with_relations(base, vec![(relation, "J".to_string())], mode)
    }

    /// Several relations, measured in order after every layer. Immediate
    /// mode takes exactly one.
    pub fn with_relations(base: CompressedOracle, relations: Vec<(Relation, String)>, mode: PunctureMode) -> Self {
        Self {
            base,
            relations,
            mode,
            layer: 0,
            find_log: Vec::new(),
            not_found: 1.0,
            degenerate: false,
        }
    }

    pub fn base(&self) -> &CompressedOracle {
        &self.base
    }

    pub fn mode(&self) -> PunctureMode {
        self.mode
    }

    pub fn layers_done(&self) -> usize {
        self.layer
    }

    /// Immediate mode: per-layer `P[R = 1]`, conditioned on earlier misses.
    pub fn find_log(&self) -> &[f64] {
        &self.find_log
    }

    /// Immediate mode: `P[Find]` so far.
    pub fn find_probability(&self) -> f64 {
        1.0 - self.not_found
    }

    /// Set when an immediate measurement left no weight on the not-found
    /// branch; later layers are then skipped.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn bit_name(&self, relation: usize, layer: usize) -> String {
        format!("{}{layer}", self.relations[relation].1)
    }

    /// Names of the deferred outcome bits of one relation so far.
    pub fn bits(&self, relation: usize) -> Vec<String> {
        (0..self.layer).map(|k| self.bit_name(relation, k)).collect()
    }

    fn to_standard(&self, state: &mut QState) -> Result<()> {
        self.base
            .convert_db(state, self.base.picture().db_basis(), DbBasis::Standard)
    }

    fn from_standard(&self, state: &mut QState) -> Result<()> {
        self.base
            .convert_db(state, DbBasis::Standard, self.base.picture().db_basis())
    }

    /// Deferred puncture of the current layer.
    fn log_layer(&mut self, state: &mut QState) -> Result<()> {
        self.to_standard(state)?;
        for r in 0..self.relations.len() {
            let bit = self.bit_name(r, self.layer);
            log_relation(state, &self.base, &self.relations[r].0, &bit)?;
        }
        self.from_standard(state)
    }

    /// Immediate puncture: project on `R = 0`.
    fn project_layer(&mut self, state: &mut QState) -> Result<()> {
        if self.relations.len() != 1 {
            return Err(Error::InvalidParameter(
                "immediate puncturing takes exactly one relation".into(),
            ));
        }
        if self.degenerate {
            self.find_log.push(0.0);
            return Ok(());
        }
        self.to_standard(state)?;
        let (p, kept) = measure_relation(state, &self.base, &self.relations[0].0, false)?;
        self.find_log.push(p);
        self.not_found *= 1.0 - p;
        match kept {
            Some(mut s) if 1.0 - p > TOL_INVARIANT => {
                self.from_standard(&mut s)?;
                *state = s;
            }
            _ => {
                self.degenerate = true;
                self.not_found = 0.0;
                self.from_standard(state)?;
            }
        }
        Ok(())
    }

    /// Query followed by its puncture, as a one-query layer.
    pub fn punctured_query(&mut self, state: &mut QState, x_reg: &str, y_reg: &str) -> Result<()> {
        self.base.query(state, x_reg, y_reg)?;
        self.end_layer(state)
    }

    /// Deferred mode: `P[some bit of relation r is set]`.
    pub fn deferred_find(&self, state: &QState, relation: usize) -> Result<f64> {
        let idx = state.layout().indices_of(&self.bits(relation))?;
        Ok(state.weight_where(|l| idx.iter().any(|&i| l[i] == 1)) / state.norm_sqr())
    }
}

impl OracleStack for PuncturedOracle {
    fn prepare(&mut self, state: QState) -> Result<QState> {
        self.layer = 0;
        self.find_log.clear();
        self.not_found = 1.0;
        self.degenerate = false;
        self.base.initial_state(state)
    }

    fn query(&mut self, state: &mut QState, call: &QueryCall) -> Result<()> {
        if self.degenerate {
            return Ok(());
        }
        CompressedStackRef(&self.base).query(state, call)
    }

    fn end_layer(&mut self, state: &mut QState) -> Result<()> {
        match self.mode {
            PunctureMode::Immediate => self.project_layer(state)?,
            PunctureMode::Deferred => self.log_layer(state)?,
        }
        self.layer += 1;
        Ok(())
    }
}

struct CompressedStackRef<'a>(&'a CompressedOracle);

impl CompressedStackRef<'_> {
    fn query(&self, state: &mut QState, call: &QueryCall) -> Result<()> {
        if call.interface != crate::harness::Interface::Public {
            return Err(Error::InvalidAdversary("this oracle has no private interface".into()));
        }
        self.0.query(state, &call.input, &call.output)
    }
}

/// Exact `P[Find]` of an adversary against `base` punctured on `relation`,
/// computed with deferred measurement.
pub fn find_probability(spec: &AdversarySpec, base: &CompressedOracle, relation: &Relation) -> Result<f64> {
    let mut po = PuncturedOracle::new(base.clone(), relation.clone(), PunctureMode::Deferred);
    let run = crate::harness::run_adversary(spec, &mut po)?;
    po.deferred_find(&run.state, 0)
}

/// One evaluation of the one-way-to-hiding inequality.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct O2hRecord {
    /// `P[b = 1]` against the oracle punctured on `R1`.
    pub p_left: f64,
    /// `P[b = 1]` against the oracle punctured on `R1 ∪ R2`.
    pub p_right: f64,
    /// `P[Find]` for `R2` in the right-hand run.
    pub find: f64,
    pub lhs_diff: f64,
    pub sqrt_diff: f64,
    /// `sqrt((d + 1) P[Find])`.
    pub rhs_bound: f64,
    pub holds: bool,
}

/// Run the adversary against `H \ R1` and `H \ (R1 ∪ R2)` and check both
/// one-way-to-hiding inequalities. `R1` is always evaluated coherently; in
/// the right-hand run `R2` is logged separately after `R1` so `Find` refers
/// to `R2` alone.
pub fn run_o2h_experiment(
    spec: &AdversarySpec,
    base: &CompressedOracle,
    r1: &Relation,
    r2: &Relation,
    slack: f64,
) -> Result<O2hRecord> {
    let mut left = PuncturedOracle::with_relations(base.clone(), vec![(r1.clone(), "J1.".into())], PunctureMode::Deferred);
    let run_l = crate::harness::run_adversary(spec, &mut left)?;
    let mut right = PuncturedOracle::with_relations(
        base.clone(),
        vec![(r1.clone(), "J1.".into()), (r2.clone(), "J2.".into())],
        PunctureMode::Deferred,
    );
    let run_r = crate::harness::run_adversary(spec, &mut right)?;
    let (p_left, p_right) = match (run_l.accept, run_r.accept) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidAdversary("the adversary must end with a measurement".into())),
    };
    let find = right.deferred_find(&run_r.state, 1)?;
    let lhs_diff = (p_left - p_right).abs();
    let sqrt_diff = (p_left.sqrt() - p_right.sqrt()).abs();
    let rhs_bound = ((spec.depth as f64 + 1.0) * find).sqrt();
    let holds = lhs_diff <= rhs_bound + slack && sqrt_diff <= rhs_bound + slack;
    Ok(O2hRecord {
        p_left,
        p_right,
        find,
        lhs_diff,
        sqrt_diff,
        rhs_bound,
        holds,
    })
}

/// Distance between the adversary's outputs on two stacks that should agree
/// until `Find`: returns `(|P1[b=1] - P2[b=1]|, sqrt((q+1) P[Find]))`.
pub fn almost_identical_check(
    spec: &AdversarySpec,
    first: &mut dyn OracleStack,
    second: &mut dyn OracleStack,
    find: f64,
) -> Result<(f64, f64)> {
    let a = crate::harness::run_adversary(spec, first)?.accept.unwrap_or(0.0);
    let b = crate::harness::run_adversary(spec, second)?.accept.unwrap_or(0.0);
    Ok(((a - b).abs(), ((spec.queries as f64 + 1.0) * find).sqrt()))
}

/// Joint law of (per-layer outcomes, final `b`) as a map from
/// `(outcome bits, b)` to probability.
pub type JointLaw = std::collections::BTreeMap<(Vec<u8>, u8), f64>;

/// Joint law under deferred measurement, read from the final state.
pub fn deferred_joint_law(spec: &AdversarySpec, base: &CompressedOracle, relation: &Relation) -> Result<JointLaw> {
    let mut po = PuncturedOracle::new(base.clone(), relation.clone(), PunctureMode::Deferred);
    let run = crate::harness::run_adversary(spec, &mut po)?;
    let bits = run.state.layout().indices_of(&po.bits(0))?;
    let (regs, accept) = spec
        .measurement()
        .ok_or_else(|| Error::InvalidAdversary("the adversary must end with a measurement".into()))?;
    let midx = run.state.layout().indices_of(regs)?;
    let mut law = JointLaw::new();
    let total = run.state.norm_sqr();
    run.state.for_each(|l, a| {
        let key: Vec<u8> = bits.iter().map(|&i| l[i] as u8).collect();
        let b = accept.iter().any(|v| v.iter().zip(&midx).all(|(x, &i)| l[i] == *x)) as u8;
        *law.entry((key, b)).or_insert(0.0) += a.norm_sqr() / total;
    });
    Ok(law)
}

/// Joint law under immediate measurement, by following both outcome
/// branches of every puncture.
pub fn immediate_joint_law(spec: &AdversarySpec, base: &CompressedOracle, relation: &Relation) -> Result<JointLaw> {
    spec.validate()?;
    let mut stack = PuncturedOracle::new(base.clone(), relation.clone(), PunctureMode::Immediate);
    let state = stack.prepare(spec.initial_state()?)?;
    let mut law = JointLaw::new();
    branch(spec, &stack, 0, state, 1.0, Vec::new(), &mut law)?;
    Ok(law)
}

fn branch(
    spec: &AdversarySpec,
    stack: &PuncturedOracle,
    from: usize,
    mut state: QState,
    weight: f64,
    outcomes: Vec<u8>,
    law: &mut JointLaw,
) -> Result<()> {
    for (i, step) in spec.steps.iter().enumerate().skip(from) {
        match step {
            Step::Query(_) | Step::Parallel { .. } => {
                // run the layer's queries without the puncture hook
                let mut plain = NoHook(&stack.base);
                apply_layer(&mut state, step, &mut plain)?;
                stack.to_standard(&mut state)?;
                let relation = &stack.relations[0].0;
                for outcome in [false, true] {
                    let (p1, kept) = measure_relation(&state, &stack.base, relation, outcome)?;
                    let p = if outcome { p1 } else { 1.0 - p1 };
                    if let Some(mut s) = kept {
                        if p * weight > 1e-300 {
                            stack.from_standard(&mut s)?;
                            let mut o = outcomes.clone();
                            o.push(outcome as u8);
                            branch(spec, stack, i + 1, s, weight * p, o, law)?;
                        }
                    }
                }
                return Ok(());
            }
            _ => apply_step(&mut state, step)?,
        }
    }
    let p1 = accept_probability(spec, &state)?
        .ok_or_else(|| Error::InvalidAdversary("the adversary must end with a measurement".into()))?;
    for (b, p) in [(0u8, 1.0 - p1), (1u8, p1)] {
        if p > 0.0 {
            *law.entry((outcomes.clone(), b)).or_insert(0.0) += weight * p;
        }
    }
    Ok(())
}

struct NoHook<'a>(&'a CompressedOracle);

impl OracleStack for NoHook<'_> {
    fn prepare(&mut self, state: QState) -> Result<QState> {
        Ok(state)
    }

    fn query(&mut self, state: &mut QState, call: &QueryCall) -> Result<()> {
        CompressedStackRef(self.0).query(state, call)
    }
}

/// Total variation distance between two joint laws.
pub fn total_variation(a: &JointLaw, b: &JointLaw) -> f64 {
    let mut keys: Vec<_> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressed_oracle::CompressedPicture;
    use crate::distributions::{GroupOp, ProductDistribution};
    use crate::harness::{random_adversary, Gate, Interface, RegisterSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn standard_oracle(m: usize, n: usize, cap: usize) -> CompressedOracle {
        CompressedOracle::new(ProductDistribution::uniform(m, n).unwrap(), GroupOp::AddModN, cap)
            .unwrap()
            .with_picture(CompressedPicture::Standard)
    }

    fn call(x: &str, y: &str) -> QueryCall {
        QueryCall { input: x.into(), output: y.into(), interface: Interface::Public }
    }

    /// Basis queries on inputs 0 and 1 with outputs in Y0, Y1. With
    /// `kickback` each output register holds `G^dagger |1>`, so the query
    /// always writes its input into the database; a plain `|x, 0>` query
    /// leaves it empty with amplitude `1/sqrt(N)`.
    fn birthday(n: usize, queries: usize, kickback: bool) -> AdversarySpec {
        let mut registers = Vec::new();
        let mut steps = Vec::new();
        for k in 0..queries {
            let (x, y) = (format!("X{k}"), format!("Y{k}"));
            registers.push(RegisterSpec { name: x.clone(), cardinality: 4, init: k });
            registers.push(RegisterSpec { name: y.clone(), cardinality: n, init: kickback as usize });
            if kickback {
                steps.push(Step::Gate { gate: Gate::Iqft, registers: vec![y.clone()], angle: 0.0 });
            }
        }
        for k in 0..queries {
            steps.push(Step::Query(call(&format!("X{k}"), &format!("Y{k}"))));
        }
        AdversarySpec { registers, queries, depth: queries, aux: String::new(), steps }
    }

    #[test]
    fn birthday_find_is_one_over_n() {
        let p = find_probability(&birthday(4, 2, true), &standard_oracle(4, 4, 2), &Relation::collision()).unwrap();
        assert!((p - 0.25).abs() < 1e-10, "{p}");
        // plain queries: both inputs recorded w.p. (1 - 1/N)^2, then 1/N
        let p = find_probability(&birthday(4, 2, false), &standard_oracle(4, 4, 2), &Relation::collision()).unwrap();
        assert!((p - 9.0 / 64.0).abs() < 1e-10, "{p}");
    }

    #[test]
    fn single_preimage_query() {
        let p = find_probability(&birthday(4, 1, true), &standard_oracle(4, 4, 1), &Relation::preimage()).unwrap();
        assert!((p - 0.25).abs() < 1e-10, "{p}");
        // (N - 1) / N^2
        let p = find_probability(&birthday(4, 1, false), &standard_oracle(4, 4, 1), &Relation::preimage()).unwrap();
        assert!((p - 3.0 / 16.0).abs() < 1e-10, "{p}");
    }

    #[test]
    fn superposition_preimage_query() {
        let spec = AdversarySpec {
            registers: vec![
                RegisterSpec { name: "X".into(), cardinality: 2, init: 0 },
                RegisterSpec { name: "Y".into(), cardinality: 2, init: 1 },
            ],
            queries: 1,
            depth: 1,
            aux: String::new(),
            steps: vec![
                Step::Gate { gate: Gate::Hadamard, registers: vec!["X".into()], angle: 0.0 },
                Step::Gate { gate: Gate::Iqft, registers: vec!["Y".into()], angle: 0.0 },
                Step::Query(call("X", "Y")),
            ],
        };
        let p = find_probability(&spec, &standard_oracle(2, 2, 1), &Relation::preimage()).unwrap();
        assert!((p - 0.5).abs() < 1e-10, "{p}");
    }

    #[test]
    fn empty_relation_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = random_adversary(3, 3, 2, &mut rng);
        let base = standard_oracle(3, 3, 2);
        let plain = crate::harness::run_adversary(&spec, &mut crate::harness::CompressedStack { oracle: base.clone() })
            .unwrap();
        let mut po = PuncturedOracle::new(base, Relation::empty(), PunctureMode::Immediate);
        let punct = crate::harness::run_adversary(&spec, &mut po).unwrap();
        assert!(plain.state.l2_distance(&punct.state).unwrap() < 1e-12);
        assert_eq!(po.find_probability(), 0.0);
    }

    #[test]
    fn immediate_matches_deferred() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for picture in [CompressedPicture::Standard, CompressedPicture::Fourier] {
            let spec = random_adversary(3, 2, 2, &mut rng);
            let base = standard_oracle(3, 2, 2).with_picture(picture);
            let rel = Relation::preimage();
            let d = deferred_joint_law(&spec, &base, &rel).unwrap();
            let i = immediate_joint_law(&spec, &base, &rel).unwrap();
            assert!(total_variation(&d, &i) < 1e-9);
            let mut po = PuncturedOracle::new(base.clone(), rel.clone(), PunctureMode::Immediate);
            crate::harness::run_adversary(&spec, &mut po).unwrap();
            let find_def = find_probability(&spec, &base, &rel).unwrap();
            assert!((po.find_probability() - find_def).abs() < 1e-10);
        }
    }

    #[test]
    fn o2h_holds_on_random_adversary() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let spec = random_adversary(3, 3, 2, &mut rng);
        let base = standard_oracle(3, 3, 2);
        let rec = run_o2h_experiment(&spec, &base, &Relation::preimage(), &Relation::collision(), 1e-10).unwrap();
        assert!(rec.holds, "{rec:?}");
    }
}
