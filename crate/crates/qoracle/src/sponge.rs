//! The sponge construction over a lazily sampled internal function, its
//! graph, the variable-length random oracle, and the classical simulators
//! and games of the indifferentiability argument.
//!
//! A state `s` packs its outer part in the high bits: `s = outer << c |
//! inner`. Bit strings are `Vec<bool>`; an `r`-bit block is read most
//! significant bit first.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpongeParams {
    pub r: u32,
    pub c: u32,
}

impl SpongeParams {
    pub fn new(r: u32, c: u32) -> Result<Self> {
        if r == 0 || c == 0 || r + c > 24 {
            return Err(Error::InvalidParameter(format!(
                "sponge needs r, c >= 1 and r + c <= 24, got r={r} c={c}"
            )));
        }
        Ok(Self { r, c })
    }

    pub fn nodes(self) -> usize {
        1 << (self.r + self.c)
    }

    pub fn outer_size(self) -> usize {
        1 << self.r
    }

    pub fn inner_size(self) -> usize {
        1 << self.c
    }

    #[inline]
    pub fn outer(self, s: usize) -> usize {
        s >> self.c
    }

    #[inline]
    pub fn inner(self, s: usize) -> usize {
        s & (self.inner_size() - 1)
    }

    #[inline]
    pub fn node(self, outer: usize, inner: usize) -> usize {
        (outer << self.c) | inner
    }
}

pub fn bits_of(value: usize, width: u32) -> Vec<bool> {
    (0..width).rev().map(|i| (value >> i) & 1 == 1).collect()
}

pub fn value_of(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// Parse a string of `0`/`1` characters.
pub fn parse_bits(text: &str) -> Result<Vec<bool>> {
    text.chars()
        .map(|ch| match ch {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::InvalidParameter(format!("not a bit: {other:?}"))),
        })
        .collect()
}

pub fn format_bits(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// pad10*1: append a one, zeros, and a final one up to a block boundary.
pub fn pad(m: &[bool], r: u32) -> Vec<usize> {
    let r = r as usize;
    let zeros = (2 * r - (m.len() + 2) % r) % r;
    let mut bits = m.to_vec();
    bits.push(true);
    bits.extend(std::iter::repeat_n(false, zeros));
    bits.push(true);
    bits.chunks(r).map(value_of).collect()
}

/// Inverse of [`pad`]; `None` when the blocks are not a padded message.
pub fn unpad(blocks: &[usize], r: u32) -> Option<Vec<bool>> {
    if blocks.is_empty() {
        return None;
    }
    let mut bits: Vec<bool> = blocks.iter().flat_map(|&b| bits_of(b, r)).collect();
    if bits.pop() != Some(true) {
        return None;
    }
    let one = bits.iter().rposition(|&b| b)?;
    let zeros = bits.len() - one - 1;
    if zeros >= r as usize {
        return None;
    }
    bits.truncate(one);
    Some(bits)
}

/// A total internal function given by its truth table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InternalFunction {
    pub params: SpongeParams,
    pub table: Vec<usize>,
}

impl InternalFunction {
    pub fn new(params: SpongeParams, table: Vec<usize>) -> Result<Self> {
        if table.len() != params.nodes() || table.iter().any(|&t| t >= params.nodes()) {
            return Err(Error::InvalidParameter(
                "truth table does not match the state space".into(),
            ));
        }
        Ok(Self { params, table })
    }

    pub fn random(params: SpongeParams, coins: &mut dyn Coins) -> Self {
        let n = params.nodes();
        Self {
            params,
            table: (0..n).map(|_| coins.below(n)).collect(),
        }
    }

    pub fn apply(&self, s: usize) -> usize {
        self.table[s]
    }
}

/// Alg.-style sponge evaluation against any internal function provider.
/// Returns exactly `ell` bits.
pub fn sponge_eval(
    params: SpongeParams,
    phi: &mut dyn FnMut(usize) -> Result<usize>,
    m: &[bool],
    ell: usize,
) -> Result<Vec<bool>> {
    let mut s = 0usize;
    for block in pad(m, params.r) {
        s = phi(params.node(params.outer(s) ^ block, params.inner(s)))?;
    }
    let mut z = bits_of(params.outer(s), params.r);
    while z.len() < ell {
        s = phi(s)?;
        z.extend(bits_of(params.outer(s), params.r));
    }
    z.truncate(ell);
    Ok(z)
}

/// Single-block sponge output as an integer.
pub fn sponge_block(params: SpongeParams, phi: &mut dyn FnMut(usize) -> Result<usize>, m: &[bool]) -> Result<usize> {
    Ok(value_of(&sponge_eval(params, phi, m, params.r as usize)?))
}

/// A partial sponge graph: at most one outgoing edge per node.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpongeGraph {
    params: Option<SpongeParams>,
    edges: BTreeMap<usize, usize>,
}

impl SpongeGraph {
    pub fn new(params: SpongeParams) -> Self {
        Self {
            params: Some(params),
            edges: BTreeMap::new(),
        }
    }

    pub fn from_function(f: &InternalFunction) -> Self {
        let mut g = Self::new(f.params);
        for (s, &t) in f.table.iter().enumerate() {
            g.edges.insert(s, t);
        }
        g
    }

    fn p(&self) -> SpongeParams {
        self.params.expect("graph built with parameters")
    }

    pub fn edges(&self) -> &BTreeMap<usize, usize> {
        &self.edges
    }

    pub fn edge(&self, s: usize) -> Option<usize> {
        self.edges.get(&s).copied()
    }

    pub fn add_edge(&mut self, s: usize, t: usize) -> Result<()> {
        if self.edges.contains_key(&s) {
            return Err(Error::DuplicateEdge(s));
        }
        self.edges.insert(s, t);
        Ok(())
    }

    /// Supernodes reachable from the root supernode.
    pub fn rooted_set(&self) -> BTreeSet<usize> {
        let p = self.p();
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&s, &t) in &self.edges {
            out.entry(p.inner(s)).or_default().push(p.inner(t));
        }
        let mut seen = BTreeSet::from([0usize]);
        let mut queue = VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            for &v in out.get(&u).into_iter().flatten() {
                if seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Supernodes holding a node with an outgoing edge.
    pub fn outgoing_set(&self) -> BTreeSet<usize> {
        let p = self.p();
        self.edges.keys().map(|&s| p.inner(s)).collect()
    }

    pub fn covered(&self) -> BTreeSet<usize> {
        let mut set = self.rooted_set();
        set.extend(self.outgoing_set());
        set
    }

    pub fn is_saturated(&self) -> bool {
        self.covered().len() == self.p().inner_size()
    }

    /// Shortest, then lexicographically smallest, sponge path to node `s`.
    pub fn fun_path(&self, s: usize) -> Option<Vec<usize>> {
        let p = self.p();
        let mut prev: HashMap<usize, (usize, usize)> = HashMap::new();
        let mut queue = VecDeque::from([0usize]);
        let mut seen = BTreeSet::from([0usize]);
        while let Some(u) = queue.pop_front() {
            if u == s {
                let mut path = Vec::new();
                let mut cur = u;
                while let Some(&(from, a)) = prev.get(&cur) {
                    path.push(a);
                    cur = from;
                }
                path.reverse();
                return Some(path);
            }
            for a in 0..p.outer_size() {
                let v = p.node(p.outer(u) ^ a, p.inner(u));
                if let Some(t) = self.edge(v) {
                    if seen.insert(t) {
                        prev.insert(t, (u, a));
                        queue.push_back(t);
                    }
                }
            }
        }
        None
    }

    /// Blocks whose absorption ends with the internal function called at
    /// `s`: a path to the first node reached in `s`'s supernode, then the
    /// block that moves its outer part to `s`'s.
    pub fn fun_path_into(&self, s: usize) -> Option<Vec<usize>> {
        let p = self.p();
        let target = p.inner(s);
        let mut prev: HashMap<usize, (usize, usize)> = HashMap::new();
        let mut queue = VecDeque::from([0usize]);
        let mut seen = BTreeSet::from([0usize]);
        while let Some(u) = queue.pop_front() {
            if p.inner(u) == target {
                let mut path = vec![p.outer(u) ^ p.outer(s)];
                let mut cur = u;
                while let Some(&(from, a)) = prev.get(&cur) {
                    path.push(a);
                    cur = from;
                }
                path.reverse();
                return Some(path);
            }
            for a in 0..p.outer_size() {
                let v = p.node(p.outer(u) ^ a, p.inner(u));
                if let Some(t) = self.edge(v) {
                    if seen.insert(t) {
                        prev.insert(t, (u, a));
                        queue.push_back(t);
                    }
                }
            }
        }
        None
    }
}

/// Source of uniform choices. Monte Carlo draws them from an RNG; exact
/// enumeration walks every choice sequence.
pub trait Coins {
    /// Uniform in `0..n`.
    fn below(&mut self, n: usize) -> usize;
}

pub struct RngCoins<R: Rng>(pub R);

impl<R: Rng> Coins for RngCoins<R> {
    fn below(&mut self, n: usize) -> usize {
        self.0.gen_range(0..n)
    }
}

/// Replays a prefix of choices and extends it with zeros.
struct Replay {
    stack: Vec<(usize, usize)>,
    pos: usize,
}

impl Coins for Replay {
    fn below(&mut self, n: usize) -> usize {
        if self.pos == self.stack.len() {
            self.stack.push((0, n));
        }
        let (choice, arity) = self.stack[self.pos];
        debug_assert_eq!(arity, n, "choice tree must not depend on replayed values");
        self.pos += 1;
        choice
    }
}

/// Run `f` on every sequence of coin outcomes, paired with its probability.
/// `f` must draw deterministically given earlier outcomes.
pub fn enumerate_coins<T>(mut f: impl FnMut(&mut dyn Coins) -> T) -> Vec<(T, f64)> {
    let mut out = Vec::new();
    let mut replay = Replay { stack: Vec::new(), pos: 0 };
    loop {
        replay.pos = 0;
        let value = f(&mut replay);
        replay.stack.truncate(replay.pos);
        let weight: f64 = replay.stack.iter().map(|&(_, n)| 1.0 / n as f64).product();
        out.push((value, weight));
        while let Some(&(choice, n)) = replay.stack.last() {
            if choice + 1 < n {
                replay.stack.last_mut().unwrap().0 += 1;
                break;
            }
            replay.stack.pop();
        }
        if replay.stack.is_empty() {
            return out;
        }
    }
}

/// Lazily sampled random oracle with unbounded output: each input owns a
/// bit stream extended on demand.
#[derive(Clone, Debug, Default)]
pub struct RandomOracle {
    streams: HashMap<Vec<bool>, Vec<bool>>,
}

impl RandomOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn query(&mut self, x: &[bool], ell: usize, coins: &mut dyn Coins) -> Vec<bool> {
        let stream = self.streams.entry(x.to_vec()).or_default();
        while stream.len() < ell {
            stream.push(coins.below(2) == 1);
        }
        stream[..ell].to_vec()
    }

    /// One `r`-bit block as an integer.
    pub fn block(&mut self, x: &[bool], r: u32, coins: &mut dyn Coins) -> usize {
        value_of(&self.query(x, r as usize, coins))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimVariant {
    Sim2,
    Sim3,
    Sim4,
    I6,
}

/// The classical simulator, in one of its four variants.
#[derive(Clone, Debug)]
pub struct ClassicalSim {
    pub variant: SimVariant,
    pub params: SpongeParams,
    pub graph: SpongeGraph,
    pub bad: bool,
    /// Fresh answers sampled so far.
    pub samples: usize,
}

impl ClassicalSim {
    pub fn new(variant: SimVariant, params: SpongeParams) -> Self {
        Self {
            variant,
            params,
            graph: SpongeGraph::new(params),
            bad: false,
            samples: 0,
        }
    }

    pub fn query(&mut self, s: usize, coins: &mut dyn Coins, ro: &mut RandomOracle) -> Result<usize> {
        let p = self.params;
        if let Some(t) = self.graph.edge(s) {
            return Ok(t);
        }
        self.samples += 1;
        let rooted = self.graph.rooted_set();
        let covered = self.graph.covered();
        let t = if rooted.contains(&p.inner(s)) && covered.len() < p.inner_size() {
            let t_inner = if self.variant == SimVariant::I6 {
                let good: Vec<usize> = (0..p.inner_size()).filter(|v| !covered.contains(v)).collect();
                if good.is_empty() {
                    return Err(Error::Saturated);
                }
                good[coins.below(good.len())]
            } else {
                let v = coins.below(p.inner_size());
                if matches!(self.variant, SimVariant::Sim3 | SimVariant::Sim4) && covered.contains(&v) {
                    self.bad = true;
                }
                v
            };
            let path = self.graph.fun_path_into(s).expect("rooted supernode has a path");
            let t_outer = match unpad(&path, p.r) {
                Some(x) if matches!(self.variant, SimVariant::Sim4 | SimVariant::I6) => ro.block(&x, p.r, coins),
                _ => coins.below(p.outer_size()),
            };
            p.node(t_outer, t_inner)
        } else {
            coins.below(p.nodes())
        };
        self.graph.add_edge(s, t)?;
        Ok(t)
    }
}

/// The two interfaces a classical distinguisher sees, plus its own coins.
pub trait ClassicalInterfaces {
    /// The internal function, or its simulation.
    fn public(&mut self, s: usize) -> Result<usize>;
    /// The construction, or the random oracle; one `r`-bit block.
    fn private(&mut self, m: &[bool]) -> Result<usize>;
    fn random(&mut self, n: usize) -> usize;
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Call {
    Public(usize, usize),
    Private(String, usize),
}

enum PublicSide {
    Table(InternalFunction),
    Sim(ClassicalSim),
}

/// One of the six classical worlds, with its transcript.
pub struct ClassicalWorld<'a> {
    params: SpongeParams,
    game: usize,
    public: PublicSide,
    ro: RandomOracle,
    coins: &'a mut dyn Coins,
    pub transcript: Vec<Call>,
}

impl<'a> ClassicalWorld<'a> {
    pub fn new(params: SpongeParams, game: usize, coins: &'a mut dyn Coins) -> Result<Self> {
        let public = match game {
            1 => PublicSide::Table(InternalFunction::random(params, coins)),
            2 => PublicSide::Sim(ClassicalSim::new(SimVariant::Sim2, params)),
            3 => PublicSide::Sim(ClassicalSim::new(SimVariant::Sim3, params)),
            4 | 5 => PublicSide::Sim(ClassicalSim::new(SimVariant::Sim4, params)),
            6 => PublicSide::Sim(ClassicalSim::new(SimVariant::I6, params)),
            _ => return Err(Error::InvalidParameter(format!("classical game {game} is not in 1..=6"))),
        };
        Ok(Self {
            params,
            game,
            public,
            ro: RandomOracle::new(),
            coins,
            transcript: Vec::new(),
        })
    }

    pub fn bad(&self) -> bool {
        matches!(&self.public, PublicSide::Sim(s) if s.bad)
    }

    /// Internal-function evaluations, counting those made by the
    /// construction.
    pub fn samples(&self) -> usize {
        match &self.public {
            PublicSide::Sim(s) => s.samples,
            PublicSide::Table(_) => 0,
        }
    }

    fn phi(&mut self, s: usize) -> Result<usize> {
        match &mut self.public {
            PublicSide::Table(f) => Ok(f.apply(s)),
            PublicSide::Sim(sim) => sim.query(s, self.coins, &mut self.ro),
        }
    }
}

impl ClassicalInterfaces for ClassicalWorld<'_> {
    fn public(&mut self, s: usize) -> Result<usize> {
        if s >= self.params.nodes() {
            return Err(Error::InvalidAdversary(format!("node {s} out of range")));
        }
        let t = self.phi(s)?;
        self.transcript.push(Call::Public(s, t));
        Ok(t)
    }

    fn private(&mut self, m: &[bool]) -> Result<usize> {
        let z = if self.game >= 5 {
            self.ro.block(m, self.params.r, self.coins)
        } else {
            let params = self.params;
            sponge_block(params, &mut |s| self.phi(s), m)?
        };
        self.transcript.push(Call::Private(format_bits(m), z));
        Ok(z)
    }

    fn random(&mut self, n: usize) -> usize {
        self.coins.below(n)
    }
}

/// Values in a classical adversary script.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(usize),
    Var(String),
    Outer(Box<Expr>),
    Inner(Box<Expr>),
    /// `(outer, inner)`
    Node(Box<Expr>, Box<Expr>),
    Xor(Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cond {
    True,
    Eq(Expr, Expr),
    Ne(Expr, Expr),
    And(Vec<Cond>),
    Or(Vec<Cond>),
    Not(Box<Cond>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ClassicalStep {
    Public {
        input: Expr,
        out: String,
    },
    /// `message` is a string of `0`/`1`.
    Private {
        message: String,
        out: String,
    },
    Random {
        n: usize,
        out: String,
    },
    If {
        cond: Cond,
        then: Vec<ClassicalStep>,
        #[serde(default)]
        otherwise: Vec<ClassicalStep>,
    },
}

/// A classical distinguisher: steps with branching, then an accept test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalScript {
    pub steps: Vec<ClassicalStep>,
    pub accept: Cond,
}

impl ClassicalScript {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidAdversary(e.to_string()))
    }

    pub fn run(&self, params: SpongeParams, world: &mut dyn ClassicalInterfaces) -> Result<bool> {
        let mut vars = HashMap::new();
        exec(&self.steps, params, world, &mut vars)?;
        cond(&self.accept, params, &vars)
    }

    /// Upper bound on interface calls along any branch.
    pub fn max_calls(&self) -> usize {
        fn walk(steps: &[ClassicalStep]) -> usize {
            steps
                .iter()
                .map(|s| match s {
                    ClassicalStep::Public { .. } | ClassicalStep::Private { .. } => 1,
                    ClassicalStep::Random { .. } => 0,
                    ClassicalStep::If { then, otherwise, .. } => walk(then).max(walk(otherwise)),
                })
                .sum()
        }
        walk(&self.steps)
    }
}

fn eval(e: &Expr, p: SpongeParams, vars: &HashMap<String, usize>) -> Result<usize> {
    Ok(match e {
        Expr::Const(v) => *v,
        Expr::Var(name) => *vars
            .get(name)
            .ok_or_else(|| Error::InvalidAdversary(format!("unbound variable {name}")))?,
        Expr::Outer(x) => p.outer(eval(x, p, vars)?),
        Expr::Inner(x) => p.inner(eval(x, p, vars)?),
        Expr::Node(a, b) => {
            let (a, b) = (eval(a, p, vars)?, eval(b, p, vars)?);
            if a >= p.outer_size() || b >= p.inner_size() {
                return Err(Error::InvalidAdversary("node part out of range".into()));
            }
            p.node(a, b)
        }
        Expr::Xor(a, b) => eval(a, p, vars)? ^ eval(b, p, vars)?,
    })
}

fn cond(c: &Cond, p: SpongeParams, vars: &HashMap<String, usize>) -> Result<bool> {
    Ok(match c {
        Cond::True => true,
        Cond::Eq(a, b) => eval(a, p, vars)? == eval(b, p, vars)?,
        Cond::Ne(a, b) => eval(a, p, vars)? != eval(b, p, vars)?,
        Cond::And(cs) => {
            for c in cs {
                if !cond(c, p, vars)? {
                    return Ok(false);
                }
            }
            true
        }
        Cond::Or(cs) => {
            for c in cs {
                if cond(c, p, vars)? {
                    return Ok(true);
                }
            }
            false
        }
        Cond::Not(c) => !cond(c, p, vars)?,
    })
}

fn exec(
    steps: &[ClassicalStep],
    p: SpongeParams,
    world: &mut dyn ClassicalInterfaces,
    vars: &mut HashMap<String, usize>,
) -> Result<()> {
    for step in steps {
        match step {
            ClassicalStep::Public { input, out } => {
                let s = eval(input, p, vars)?;
                let t = world.public(s)?;
                vars.insert(out.clone(), t);
            }
            ClassicalStep::Private { message, out } => {
                let z = world.private(&parse_bits(message)?)?;
                vars.insert(out.clone(), z);
            }
            ClassicalStep::Random { n, out } => {
                let v = world.random(*n);
                vars.insert(out.clone(), v);
            }
            ClassicalStep::If { cond: c, then, otherwise } => {
                if cond(c, p, vars)? {
                    exec(then, p, world, vars)?;
                } else {
                    exec(otherwise, p, world, vars)?;
                }
            }
        }
    }
    Ok(())
}

/// A two-query distinguisher: absorb the empty message by hand through the
/// public interface, then compare with the private answer on it. It
/// accepts when they agree, which always happens in the real world.
pub fn consistency_script(p: SpongeParams) -> ClassicalScript {
    let block = pad(&[], p.r);
    let mut steps = Vec::new();
    let mut prev: Option<String> = None;
    for (i, &b) in block.iter().enumerate() {
        let input = match &prev {
            None => Expr::Const(p.node(b, 0)),
            Some(v) => Expr::Xor(Box::new(Expr::Var(v.clone())), Box::new(Expr::Const(p.node(b, 0)))),
        };
        let out = format!("t{i}");
        steps.push(ClassicalStep::Public { input, out: out.clone() });
        prev = Some(out);
    }
    steps.push(ClassicalStep::Private { message: String::new(), out: "z".into() });
    let last = prev.expect("padding has at least one block");
    ClassicalScript {
        steps,
        accept: Cond::Eq(Expr::Outer(Box::new(Expr::Var(last))), Expr::Var("z".into())),
    }
}

/// `q` public queries on random nodes of the root supernode and of the
/// supernodes reached so far; accepts when two answers share an inner part
/// or one lands in the root supernode.
pub fn collision_script(p: SpongeParams, q: usize) -> ClassicalScript {
    let mut steps = Vec::new();
    for i in 0..q {
        let a = format!("a{i}");
        steps.push(ClassicalStep::Random { n: p.outer_size(), out: a.clone() });
        let inner = if i == 0 {
            Expr::Const(0)
        } else {
            Expr::Inner(Box::new(Expr::Var(format!("t{}", i - 1))))
        };
        steps.push(ClassicalStep::Public {
            input: Expr::Node(Box::new(Expr::Var(a)), Box::new(inner)),
            out: format!("t{i}"),
        });
    }
    let mut hits = Vec::new();
    for i in 0..q {
        let ti = Expr::Inner(Box::new(Expr::Var(format!("t{i}"))));
        hits.push(Cond::Eq(ti.clone(), Expr::Const(0)));
        for j in 0..i {
            hits.push(Cond::Eq(ti.clone(), Expr::Inner(Box::new(Expr::Var(format!("t{j}"))))));
        }
    }
    ClassicalScript {
        steps,
        accept: Cond::Or(hits),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameRun {
    pub accept: bool,
    pub bad: bool,
    pub samples: usize,
    pub transcript: Vec<Call>,
}

pub fn run_classical_game(
    params: SpongeParams,
    script: &ClassicalScript,
    game: usize,
    coins: &mut dyn Coins,
) -> Result<GameRun> {
    let mut world = ClassicalWorld::new(params, game, coins)?;
    let accept = script.run(params, &mut world)?;
    Ok(GameRun {
        accept,
        bad: world.bad(),
        samples: world.samples(),
        transcript: world.transcript,
    })
}

/// Monte-Carlo estimate of one game.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GameEstimate {
    pub game: usize,
    pub runs: usize,
    pub p_accept: f64,
    pub p_bad: f64,
    /// Largest number of internal-function samples in any run.
    pub max_samples: usize,
}

impl GameEstimate {
    /// Standard error of `p_accept`.
    pub fn sigma(&self) -> f64 {
        (self.p_accept * (1.0 - self.p_accept) / self.runs as f64).sqrt()
    }

    pub fn sigma_bad(&self) -> f64 {
        (self.p_bad * (1.0 - self.p_bad) / self.runs as f64).sqrt()
    }
}

pub fn estimate_game<R: Rng>(
    params: SpongeParams,
    script: &ClassicalScript,
    game: usize,
    runs: usize,
    rng: R,
) -> Result<GameEstimate> {
    let mut coins = RngCoins(rng);
    let (mut acc, mut bad, mut max_samples) = (0usize, 0usize, 0usize);
    for _ in 0..runs {
        let run = run_classical_game(params, script, game, &mut coins)?;
        acc += run.accept as usize;
        bad += run.bad as usize;
        max_samples = max_samples.max(run.samples);
    }
    Ok(GameEstimate {
        game,
        runs,
        p_accept: acc as f64 / runs as f64,
        p_bad: bad as f64 / runs as f64,
        max_samples,
    })
}

/// Exact law of `(transcript, bad)` for a game, by enumerating every coin.
pub fn exact_transcript_law(
    params: SpongeParams,
    script: &ClassicalScript,
    game: usize,
) -> Result<BTreeMap<(Vec<Call>, bool), f64>> {
    let mut law = BTreeMap::new();
    for (run, w) in enumerate_coins(|coins| run_classical_game(params, script, game, coins)) {
        let run = run?;
        *law.entry((run.transcript, run.bad)).or_insert(0.0) += w;
    }
    Ok(law)
}

/// Total variation between two laws over the same key type.
pub fn law_distance<K: Ord + Clone>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let keys: BTreeSet<&K> = a.keys().chain(b.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}
