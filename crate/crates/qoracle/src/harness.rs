//! Adversary scripts, the oracle-stack interface they run against, and the
//! experiment drivers used by the CLI and the acceptance suite.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compressed_oracle::CompressedOracle;
use crate::distributions::GroupOp;
use crate::error::{Error, Result};
use crate::full_oracle::FullOracle;
use crate::statevec::{check_unitary, hadamard_matrix, qft_matrix, random_unitary, QState, RegisterLayout, C64};

pub mod experiments;

/// Which oracle interface a query goes to. Single-oracle experiments only
/// have the public one; the sponge games also expose a private one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interface {
    #[default]
    Public,
    Private,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCall {
    pub input: String,
    pub output: String,
    #[serde(default)]
    pub interface: Interface,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gate {
    Qft,
    Iqft,
    Hadamard,
    /// `+1 mod cardinality` on one register.
    Increment,
    /// `exp(i angle a b)` on two registers.
    ControlledPhase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Step {
    Gate {
        gate: Gate,
        registers: Vec<String>,
        #[serde(default = "default_angle")]
        angle: f64,
    },
    /// Explicit matrix, entries as `[re, im]`, rows first.
    Unitary {
        registers: Vec<String>,
        matrix: Vec<Vec<[f64; 2]>>,
    },
    Query(QueryCall),
    Parallel { queries: Vec<QueryCall> },
    /// Final measurement: `b = 1` iff the registers' joint value is listed.
    Measure {
        registers: Vec<String>,
        accept: Vec<Vec<usize>>,
    },
}

fn default_angle() -> f64 {
    std::f64::consts::PI
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisterSpec {
    pub name: String,
    pub cardinality: usize,
    #[serde(default)]
    pub init: usize,
}

/// A scripted quantum adversary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub registers: Vec<RegisterSpec>,
    /// Total number of queries, counting each member of a parallel layer.
    pub queries: usize,
    /// Number of query layers.
    pub depth: usize,
    /// Auxiliary input; carried through to results, not interpreted.
    #[serde(default)]
    pub aux: String,
    pub steps: Vec<Step>,
}

impl AdversarySpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidAdversary(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn layout(&self) -> Result<RegisterLayout> {
        let regs: Vec<(&str, usize)> = self
            .registers
            .iter()
            .map(|r| (r.name.as_str(), r.cardinality))
            .collect();
        RegisterLayout::new(&regs)
    }

    pub fn initial_state(&self) -> Result<QState> {
        let label: Vec<usize> = self.registers.iter().map(|r| r.init).collect();
        QState::basis(self.layout()?, &label)
    }

    /// Query calls grouped by layer.
    pub fn layers(&self) -> Vec<Vec<&QueryCall>> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                Step::Query(c) => Some(vec![c]),
                Step::Parallel { queries } => Some(queries.iter().collect()),
                _ => None,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let layout = self.layout()?;
        layout.check_label(&self.registers.iter().map(|r| r.init).collect::<Vec<_>>())?;
        let layers = self.layers();
        let q: usize = layers.iter().map(Vec::len).sum();
        if q != self.queries || layers.len() != self.depth {
            return Err(Error::InvalidAdversary(format!(
                "declared q={} d={}, steps make q={} d={}",
                self.queries,
                self.depth,
                q,
                layers.len()
            )));
        }
        if layers.iter().any(Vec::is_empty) {
            return Err(Error::InvalidAdversary("empty parallel layer".into()));
        }
        for (i, step) in self.steps.iter().enumerate() {
            match step {
                Step::Gate { gate, registers, .. } => {
                    let want = if *gate == Gate::ControlledPhase { 2 } else { 1 };
                    if registers.len() != want {
                        return Err(Error::InvalidAdversary(format!(
                            "step {i}: {gate:?} takes {want} register(s)"
                        )));
                    }
                    layout.indices_of(registers)?;
                    if *gate == Gate::Hadamard {
                        let c = layout.cardinality(layout.index_of(&registers[0])?);
                        if !c.is_power_of_two() {
                            return Err(Error::NotPowerOfTwo {
                                name: registers[0].clone(),
                                cardinality: c,
                            });
                        }
                    }
                }
                Step::Unitary { registers, .. } => {
                    let m = unitary_matrix(step)?;
                    let idx = layout.indices_of(registers)?;
                    let dim: usize = idx.iter().map(|&j| layout.cardinality(j)).product();
                    if m.nrows() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: m.nrows(),
                        });
                    }
                }
                Step::Measure { registers, accept } => {
                    if i + 1 != self.steps.len() {
                        return Err(Error::InvalidAdversary(
                            "measure must be the last step".into(),
                        ));
                    }
                    let idx = layout.indices_of(registers)?;
                    for v in accept {
                        if v.len() != idx.len() {
                            return Err(Error::InvalidAdversary(format!(
                                "accept value {v:?} has wrong arity"
                            )));
                        }
                    }
                }
                Step::Query(_) | Step::Parallel { .. } => {}
            }
        }
        Ok(())
    }

    pub fn measurement(&self) -> Option<(&[String], &[Vec<usize>])> {
        match self.steps.last() {
            Some(Step::Measure { registers, accept }) => Some((registers, accept)),
            _ => None,
        }
    }
}

fn unitary_matrix(step: &Step) -> Result<DMatrix<C64>> {
    let Step::Unitary { matrix, .. } = step else {
        unreachable!("only called on unitary steps")
    };
    let n = matrix.len();
    if matrix.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidAdversary("matrix is not square".into()));
    }
    let m = DMatrix::from_fn(n, n, |i, j| C64::new(matrix[i][j][0], matrix[i][j][1]));
    check_unitary(&m)?;
    Ok(m)
}

/// Encode a matrix for an adversary script.
pub fn matrix_entries(m: &DMatrix<C64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Everything an adversary can talk to.
pub trait OracleStack {
    /// Attach the oracle's registers to the adversary's initial state.
    fn prepare(&mut self, state: QState) -> Result<QState>;
    fn query(&mut self, state: &mut QState, call: &QueryCall) -> Result<()>;
    /// Runs after every query layer; puncturing hooks in here.
    fn end_layer(&mut self, _state: &mut QState) -> Result<()> {
        Ok(())
    }
}

fn public_only(call: &QueryCall) -> Result<()> {
    if call.interface != Interface::Public {
        return Err(Error::InvalidAdversary(
            "this oracle has no private interface".into(),
        ));
    }
    Ok(())
}

/// A full oracle in whatever picture it was built in.
pub struct FullStack {
    pub oracle: FullOracle,
    /// Start from the Fourier-picture initial state.
    pub fourier: bool,
}

impl OracleStack for FullStack {
    fn prepare(&mut self, state: QState) -> Result<QState> {
        if self.fourier {
            let (s, o) = self.oracle.fourier_initial_state(state)?;
            self.oracle = o;
            Ok(s)
        } else {
            self.oracle.purified_initial_state(state)
        }
    }

    fn query(&mut self, state: &mut QState, call: &QueryCall) -> Result<()> {
        public_only(call)?;
        self.oracle.query(state, &call.input, &call.output)
    }
}

/// A compressed oracle in its own picture.
pub struct CompressedStack {
    pub oracle: CompressedOracle,
}

impl OracleStack for CompressedStack {
    fn prepare(&mut self, state: QState) -> Result<QState> {
        self.oracle.initial_state(state)
    }

    fn query(&mut self, state: &mut QState, call: &QueryCall) -> Result<()> {
        public_only(call)?;
        self.oracle.query(state, &call.input, &call.output)
    }
}

/// Result of running an adversary.
#[derive(Clone, Debug)]
pub struct AdversaryRun {
    pub state: QState,
    /// `P[b = 1]`, or `None` when the script has no final measurement.
    pub accept: Option<f64>,
}

/// Apply one non-query step.
pub fn apply_step(state: &mut QState, step: &Step) -> Result<()> {
    match step {
        Step::Gate {
            gate,
            registers,
            angle,
        } => {
            let name = registers[0].as_str();
            let i = state.layout().index_of(name)?;
            let card = state.layout().cardinality(i);
            match gate {
                Gate::Qft => state.apply_matrix(&[name], &qft_matrix(card, false)),
                Gate::Iqft => state.apply_matrix(&[name], &qft_matrix(card, true)),
                Gate::Hadamard => state.apply_matrix(&[name], &hadamard_matrix(card)),
                Gate::Increment => state.apply_basis_function(|l| l[i] = (l[i] + 1) % card),
                Gate::ControlledPhase => {
                    let j = state.layout().index_of(&registers[1])?;
                    let angle = *angle;
                    state.apply_phase(|l| C64::from_polar(1.0, angle * (l[i] * l[j]) as f64));
                    Ok(())
                }
            }
        }
        Step::Unitary { registers, .. } => {
            let m = unitary_matrix(step)?;
            state.apply_matrix(registers, &m)
        }
        Step::Measure { .. } | Step::Query(_) | Step::Parallel { .. } => Ok(()),
    }
}

/// Apply one query layer (a single query or a parallel block) and its hook.
pub fn apply_layer(state: &mut QState, step: &Step, oracle: &mut dyn OracleStack) -> Result<()> {
    match step {
        Step::Query(call) => oracle.query(state, call)?,
        Step::Parallel { queries } => {
            for call in queries {
                oracle.query(state, call)?;
            }
        }
        _ => return Ok(()),
    }
    oracle.end_layer(state)
}

/// `P[b = 1]` for the script's final measurement, on an arbitrary state.
pub fn accept_probability(spec: &AdversarySpec, state: &QState) -> Result<Option<f64>> {
    let Some((regs, accept)) = spec.measurement() else {
        return Ok(None);
    };
    let idx = state.layout().indices_of(regs)?;
    let total = state.norm_sqr();
    let w = state.weight_where(|l| accept.iter().any(|v| v.iter().zip(&idx).all(|(a, &i)| l[i] == *a)));
    Ok(Some(if total > 0.0 { w / total } else { 0.0 }))
}

/// Run the script against an oracle stack, exactly.
pub fn run_adversary(spec: &AdversarySpec, oracle: &mut dyn OracleStack) -> Result<AdversaryRun> {
    spec.validate()?;
    let mut state = oracle.prepare(spec.initial_state()?)?;
    for step in &spec.steps {
        match step {
            Step::Query(_) | Step::Parallel { .. } => apply_layer(&mut state, step, oracle)?,
            _ => apply_step(&mut state, step)?,
        }
    }
    let accept = accept_probability(spec, &state)?;
    Ok(AdversaryRun { state, accept })
}

/// Random adversary over registers `X` (domain), `Y` (range) and a work
/// qubit `W`: a Haar-random unitary before each query and one at the end,
/// then a measurement of `W`.
pub fn random_adversary<R: Rng>(
    domain: usize,
    range: usize,
    queries: usize,
    rng: &mut R,
) -> AdversarySpec {
    let regs = vec!["X".to_string(), "Y".to_string(), "W".to_string()];
    let dim = domain * range * 2;
    let mut steps = Vec::new();
    for _ in 0..queries {
        steps.push(Step::Unitary {
            registers: regs.clone(),
            matrix: matrix_entries(&random_unitary(dim, rng)),
        });
        steps.push(Step::Query(QueryCall {
            input: "X".into(),
            output: "Y".into(),
            interface: Interface::Public,
        }));
    }
    steps.push(Step::Unitary {
        registers: regs,
        matrix: matrix_entries(&random_unitary(dim, rng)),
    });
    steps.push(Step::Measure {
        registers: vec!["W".into()],
        accept: vec![vec![1]],
    });
    AdversarySpec {
        registers: vec![
            RegisterSpec { name: "X".into(), cardinality: domain, init: 0 },
            RegisterSpec { name: "Y".into(), cardinality: range, init: 0 },
            RegisterSpec { name: "W".into(), cardinality: 2, init: 0 },
        ],
        queries,
        depth: queries,
        aux: String::new(),
        steps,
    }
}

/// Birthday adversary: query `X_k = k` for `k < queries` with each output
/// register in the kickback state `G^dagger |1>`, undo `G^dagger`, and accept
/// when every output register reads 1.
pub fn birthday_adversary(domain: usize, range: usize, queries: usize, group: GroupOp) -> Result<AdversarySpec> {
    if queries == 0 || queries > domain {
        return Err(Error::InvalidParameter(format!(
            "birthday needs 1..={domain} distinct inputs, got {queries}"
        )));
    }
    group.validate(range)?;
    let (forward, back) = match group {
        GroupOp::AddModN => (Gate::Iqft, Gate::Qft),
        GroupOp::Xor => (Gate::Hadamard, Gate::Hadamard),
    };
    let mut registers = Vec::new();
    let mut steps = Vec::new();
    for k in 0..queries {
        let y = format!("Y{k}");
        registers.push(RegisterSpec { name: format!("X{k}"), cardinality: domain, init: k });
        registers.push(RegisterSpec { name: y.clone(), cardinality: range, init: 1 });
        steps.push(Step::Gate { gate: forward, registers: vec![y], angle: 0.0 });
    }
    for k in 0..queries {
        steps.push(Step::Query(QueryCall {
            input: format!("X{k}"),
            output: format!("Y{k}"),
            interface: Interface::Public,
        }));
    }
    for k in 0..queries {
        steps.push(Step::Gate { gate: back, registers: vec![format!("Y{k}")], angle: 0.0 });
    }
    steps.push(Step::Measure {
        registers: (0..queries).map(|k| format!("Y{k}")).collect(),
        accept: vec![vec![1; queries]],
    });
    Ok(AdversarySpec { registers, queries, depth: queries, aux: String::new(), steps })
}

/// Random adversary with parallel layers. `widths[i]` (1 or 2) is the number
/// of queries in layer `i`; layer members use `X0, Y0` and `X1, Y1`. A Haar
/// unitary over all registers precedes each layer and the final measurement
/// of the work qubit `W`.
pub fn random_layered_adversary<R: Rng>(domain: usize, range: usize, widths: &[usize], rng: &mut R) -> AdversarySpec {
    let lanes = widths.iter().copied().max().unwrap_or(1).clamp(1, 2);
    let mut registers = Vec::new();
    for k in 0..lanes {
        registers.push(RegisterSpec { name: format!("X{k}"), cardinality: domain, init: 0 });
        registers.push(RegisterSpec { name: format!("Y{k}"), cardinality: range, init: 0 });
    }
    registers.push(RegisterSpec { name: "W".into(), cardinality: 2, init: 0 });
    let names: Vec<String> = registers.iter().map(|r| r.name.clone()).collect();
    let dim = (domain * range).pow(lanes as u32) * 2;
    let mut steps = Vec::new();
    let call = |k: usize| QueryCall { input: format!("X{k}"), output: format!("Y{k}"), interface: Interface::Public };
    for &w in widths {
        steps.push(Step::Unitary { registers: names.clone(), matrix: matrix_entries(&random_unitary(dim, rng)) });
        if w >= 2 {
            steps.push(Step::Parallel { queries: vec![call(0), call(1)] });
        } else {
            steps.push(Step::Query(call(0)));
        }
    }
    steps.push(Step::Unitary { registers: names, matrix: matrix_entries(&random_unitary(dim, rng)) });
    steps.push(Step::Measure { registers: vec!["W".into()], accept: vec![vec![1]] });
    AdversarySpec {
        registers,
        queries: widths.iter().map(|&w| w.clamp(1, 2)).sum(),
        depth: widths.len(),
        aux: String::new(),
        steps,
    }
}
