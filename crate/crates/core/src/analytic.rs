//! Robust analytic extension of the encoded transition map. The machine's
//! table is interpolated exactly on its grid, digits are read through
//! trigonometric indicator kernels, and an error-contracting rounding gadget
//! keeps iterated evaluation inside a tube around the true encodings.
//!
//! Expressions live in a hash-consed DAG whose only transcendental nodes are
//! sine/cosine of affine forms; affine coefficients live in ℚ + ℚπ so every
//! argument is exactly described.

use crate::poly::{Polynomial, PolyError};
use crate::scalar::{
    cos_pi_rational_sqrt5, rat, rat_i, sin_pi_rational_sqrt5, Ctx, PiRat, Real, Sqrt5Rat,
};
use crate::tm::{delta_encoded, EncodedConfig, TuringMachine, ALPHABET};
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error("exact evaluation unsupported: {0}")]
    ExactUnsupported(String),
    #[error("polynomial error: {0}")]
    Poly(#[from] PolyError),
    #[error("robustness certificate missing or FAIL: {0}")]
    Certificate(String),
}

pub type NodeId = usize;

/// Affine form over graph nodes with ℚ+ℚπ coefficients; the only admissible
/// argument shape for sine/cosine nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Affine {
    pub terms: Vec<(PiRat, NodeId)>,
    pub offset: PiRat,
}

impl Affine {
    pub fn node(id: NodeId, coef: PiRat) -> Self {
        Affine { terms: vec![(coef, id)], offset: PiRat::zero() }
    }

    fn canonicalize(mut self) -> Self {
        self.terms.retain(|(c, _)| !c.is_zero());
        self.terms.sort_by_key(|(_, id)| *id);
        let mut merged: Vec<(PiRat, NodeId)> = Vec::new();
        for (c, id) in self.terms {
            if let Some(last) = merged.last_mut() {
                if last.1 == id {
                    last.0 = last.0.add(&c);
                    continue;
                }
            }
            merged.push((c, id));
        }
        merged.retain(|(c, _)| !c.is_zero());
        Affine { terms: merged, offset: self.offset }
    }

    pub fn has_pi(&self) -> bool {
        self.offset.has_pi() || self.terms.iter().any(|(c, _)| c.has_pi())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Const(BigRational),
    Var(usize),
    /// Weighted sum Σ cᵢ·nodeᵢ + constant.
    Sum { terms: Vec<(BigRational, NodeId)>, constant: BigRational },
    /// Product Π nodeᵢ^eᵢ (no constant factors; those live in Sum weights).
    Prod(Vec<(NodeId, u32)>),
    Sin(Affine),
    Cos(Affine),
}

/// Hash-consed expression DAG. Children always precede parents, so a single
/// forward pass evaluates the graph.
#[derive(Debug, Clone, Default)]
pub struct ExpressionGraph {
    nodes: Vec<Node>,
    memo: HashMap<Node, NodeId>,
}

impl ExpressionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    fn intern(&mut self, node: Node) -> NodeId {
        if let Some(&id) = self.memo.get(&node) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(node.clone());
        self.memo.insert(node, id);
        id
    }

    pub fn c(&mut self, q: BigRational) -> NodeId {
        self.intern(Node::Const(q))
    }

    pub fn c_int(&mut self, n: i64) -> NodeId {
        self.c(rat_i(n))
    }

    pub fn var(&mut self, i: usize) -> NodeId {
        self.intern(Node::Var(i))
    }

    pub fn as_const(&self, id: NodeId) -> Option<BigRational> {
        match &self.nodes[id] {
            Node::Const(q) => Some(q.clone()),
            _ => None,
        }
    }

    /// Weighted sum with folding: constants merge, single unit terms
    /// collapse. Nested sums are NOT spliced: compiler checkpoints attach to
    /// sum nodes, and flattening would bypass them.
    pub fn sum(&mut self, terms: Vec<(BigRational, NodeId)>, constant: BigRational) -> NodeId {
        let mut acc_const = constant;
        let mut acc_terms: Vec<(BigRational, NodeId)> = Vec::new();
        for (c, id) in terms {
            if c.is_zero() {
                continue;
            }
            if let Some(v) = self.as_const(id) {
                acc_const += &c * v;
                continue;
            }
            acc_terms.push((c, id));
        }
        acc_terms.sort_by_key(|(_, id)| *id);
        let mut merged: Vec<(BigRational, NodeId)> = Vec::new();
        for (c, id) in acc_terms {
            if let Some(last) = merged.last_mut() {
                if last.1 == id {
                    last.0 += &c;
                    continue;
                }
            }
            merged.push((c, id));
        }
        merged.retain(|(c, _)| !c.is_zero());
        if merged.is_empty() {
            return self.c(acc_const);
        }
        if merged.len() == 1 && merged[0].0.is_one() && acc_const.is_zero() {
            return merged[0].1;
        }
        self.intern(Node::Sum { terms: merged, constant: acc_const })
    }

    pub fn add2(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.sum(vec![(BigRational::one(), a), (BigRational::one(), b)], BigRational::zero())
    }

    pub fn sub2(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.sum(vec![(BigRational::one(), a), (-BigRational::one(), b)], BigRational::zero())
    }

    pub fn scale(&mut self, q: BigRational, a: NodeId) -> NodeId {
        self.sum(vec![(q, a)], BigRational::zero())
    }

    /// Product with constant folding.
    pub fn prod(&mut self, factors: Vec<(NodeId, u32)>) -> NodeId {
        let mut scalar = BigRational::one();
        let mut rest: Vec<(NodeId, u32)> = Vec::new();
        for (id, e) in factors {
            if e == 0 {
                continue;
            }
            if let Some(v) = self.as_const(id) {
                if v.is_zero() {
                    return self.c(BigRational::zero());
                }
                let mut p = BigRational::one();
                for _ in 0..e {
                    p *= &v;
                }
                scalar *= p;
                continue;
            }
            if let Node::Prod(inner) = self.nodes[id].clone() {
                if e == 1 {
                    rest.extend(inner);
                    continue;
                }
            }
            rest.push((id, e));
        }
        rest.sort_by_key(|(id, _)| *id);
        let mut merged: Vec<(NodeId, u32)> = Vec::new();
        for (id, e) in rest {
            if let Some(last) = merged.last_mut() {
                if last.0 == id {
                    last.1 += e;
                    continue;
                }
            }
            merged.push((id, e));
        }
        if merged.is_empty() {
            return self.c(scalar);
        }
        let core = if merged.len() == 1 && merged[0].1 == 1 {
            merged[0].0
        } else {
            self.intern(Node::Prod(merged))
        };
        if scalar.is_one() {
            core
        } else {
            self.sum(vec![(scalar, core)], BigRational::zero())
        }
    }

    pub fn mul2(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.prod(vec![(a, 1), (b, 1)])
    }

    pub fn pow(&mut self, a: NodeId, e: u32) -> NodeId {
        self.prod(vec![(a, e)])
    }

    fn trig(&mut self, is_sin: bool, arg: Affine) -> NodeId {
        let arg = arg.canonicalize();
        if arg.terms.is_empty() {
            // constant argument: fold when the value is exactly rational
            let off = &arg.offset;
            if off.plain.is_zero() {
                let v = if is_sin {
                    sin_pi_rational_sqrt5(&off.pi_part)
                } else {
                    cos_pi_rational_sqrt5(&off.pi_part)
                };
                if let Some(q) = v.and_then(|s| s.as_rational()) {
                    return self.c(q);
                }
            }
        }
        if is_sin {
            self.intern(Node::Sin(arg))
        } else {
            self.intern(Node::Cos(arg))
        }
    }

    pub fn sin(&mut self, arg: Affine) -> NodeId {
        self.trig(true, arg)
    }

    pub fn cos(&mut self, arg: Affine) -> NodeId {
        self.trig(false, arg)
    }

    /// Structural check: every trig argument is affine over earlier nodes
    /// with exact ℚ+ℚπ coefficients. Holds by construction; asserted in tests
    /// after every build step.
    pub fn trig_args_affine(&self) -> bool {
        self.nodes.iter().enumerate().all(|(id, n)| match n {
            Node::Sin(a) | Node::Cos(a) => a.terms.iter().all(|(_, child)| *child < id),
            _ => true,
        })
    }

    pub fn trig_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Sin(_) | Node::Cos(_)))
            .count()
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Numeric forward evaluation at context precision. Shared sin/cos arguments
/// are computed once via sin_cos.
pub fn eval_graph(graph: &ExpressionGraph, ctx: &Ctx, inputs: &[Real]) -> Vec<Real> {
    let mut values: Vec<Real> = Vec::with_capacity(graph.len());
    let mut trig_cache: HashMap<Vec<u8>, (Real, Real)> = HashMap::new();
    for node in graph.nodes() {
        let v = match node {
            Node::Const(q) => ctx.from_rat(q),
            Node::Var(i) => inputs[*i].clone(),
            Node::Sum { terms, constant } => {
                let mut acc = ctx.from_rat(constant);
                for (c, id) in terms {
                    acc += ctx.from_rat(c) * &values[*id];
                }
                acc
            }
            Node::Prod(factors) => {
                let mut acc = ctx.one();
                for (id, e) in factors {
                    acc *= values[*id].powi((*e as i64).into());
                }
                acc
            }
            Node::Sin(a) | Node::Cos(a) => {
                let key = affine_cache_key(a);
                let (s, c) = trig_cache
                    .entry(key)
                    .or_insert_with(|| {
                        let mut arg = ctx.from_pirat(&a.offset);
                        for (coef, id) in &a.terms {
                            arg += ctx.from_pirat(coef) * &values[*id];
                        }
                        arg.sin_cos()
                    })
                    .clone();
                if matches!(node, Node::Sin(_)) {
                    s
                } else {
                    c
                }
            }
        };
        values.push(v);
    }
    values
}

fn affine_cache_key(a: &Affine) -> Vec<u8> {
    let mut s = String::new();
    for (c, id) in &a.terms {
        let _ = write!(s, "{}+{}p*{};", c.plain, c.pi_part, id);
    }
    let _ = write!(s, "|{}+{}p", a.offset.plain, a.offset.pi_part);
    s.into_bytes()
}

/// Exact forward evaluation over ℚ(√5). Fails if a trig argument leaves the
/// grid where cosine values stay in the field; on integer encodings the step
/// map never does.
pub fn eval_graph_exact(
    graph: &ExpressionGraph,
    inputs: &[BigRational],
) -> Result<Vec<Sqrt5Rat>, AnalyticError> {
    let mut values: Vec<Sqrt5Rat> = Vec::with_capacity(graph.len());
    for node in graph.nodes() {
        let v = match node {
            Node::Const(q) => Sqrt5Rat::from_rat(q.clone()),
            Node::Var(i) => Sqrt5Rat::from_rat(inputs[*i].clone()),
            Node::Sum { terms, constant } => {
                let mut acc = Sqrt5Rat::from_rat(constant.clone());
                for (c, id) in terms {
                    acc = acc.add(&values[*id].scale(c));
                }
                acc
            }
            Node::Prod(factors) => {
                let mut acc = Sqrt5Rat::one();
                for (id, e) in factors {
                    acc = acc.mul(&values[*id].pow(*e));
                }
                acc
            }
            Node::Sin(a) | Node::Cos(a) => {
                let mut plain = Sqrt5Rat::from_rat(a.offset.plain.clone());
                let mut pi_mult = Sqrt5Rat::from_rat(a.offset.pi_part.clone());
                for (coef, id) in &a.terms {
                    plain = plain.add(&values[*id].scale(&coef.plain));
                    pi_mult = pi_mult.add(&values[*id].scale(&coef.pi_part));
                }
                if !(plain.a.is_zero() && plain.b.is_zero()) {
                    return Err(AnalyticError::ExactUnsupported(
                        "trig argument has a non-π rational part".into(),
                    ));
                }
                let q = pi_mult.as_rational().ok_or_else(|| {
                    AnalyticError::ExactUnsupported("π multiple is irrational".into())
                })?;
                let v = if matches!(node, Node::Sin(_)) {
                    sin_pi_rational_sqrt5(&q)
                } else {
                    cos_pi_rational_sqrt5(&q)
                };
                v.ok_or_else(|| {
                    AnalyticError::ExactUnsupported(format!("trig of π·{q} is outside ℚ(√5)"))
                })?
            }
        };
        values.push(v);
    }
    Ok(values)
}

/// Lenient exact evaluation: nodes whose exact value leaves ℚ(√5) evaluate to
/// None, and None propagates. Initialization only needs the nodes that feed
/// trig arguments and checkpoints, which stay in the field.
pub fn eval_graph_exact_lenient(
    graph: &ExpressionGraph,
    inputs: &[BigRational],
) -> Vec<Option<Sqrt5Rat>> {
    let mut values: Vec<Option<Sqrt5Rat>> = Vec::with_capacity(graph.len());
    for node in graph.nodes() {
        let v: Option<Sqrt5Rat> = (|| match node {
            Node::Const(q) => Some(Sqrt5Rat::from_rat(q.clone())),
            Node::Var(i) => Some(Sqrt5Rat::from_rat(inputs[*i].clone())),
            Node::Sum { terms, constant } => {
                let mut acc = Sqrt5Rat::from_rat(constant.clone());
                for (c, id) in terms {
                    acc = acc.add(&values[*id].as_ref()?.scale(c));
                }
                Some(acc)
            }
            Node::Prod(factors) => {
                let mut acc = Sqrt5Rat::one();
                for (id, e) in factors {
                    acc = acc.mul(&values[*id].as_ref()?.pow(*e));
                }
                Some(acc)
            }
            Node::Sin(a) | Node::Cos(a) => {
                let mut plain = Sqrt5Rat::from_rat(a.offset.plain.clone());
                let mut pi_mult = Sqrt5Rat::from_rat(a.offset.pi_part.clone());
                for (coef, id) in &a.terms {
                    let v = values[*id].as_ref()?;
                    plain = plain.add(&v.scale(&coef.plain));
                    pi_mult = pi_mult.add(&v.scale(&coef.pi_part));
                }
                if !(plain.a.is_zero() && plain.b.is_zero()) {
                    return None;
                }
                let q = pi_mult.as_rational()?;
                if matches!(node, Node::Sin(_)) {
                    sin_pi_rational_sqrt5(&q)
                } else {
                    cos_pi_rational_sqrt5(&q)
                }
            }
        })();
        values.push(v);
    }
    values
}

// ---------------------------------------------------------------------------
// Spec'd analytic fragments
// ---------------------------------------------------------------------------

/// Digit kernel K(u) = (1/10) Σ_{k=0}^{9} cos(πku/5): 1 at multiples of 10,
/// 0 at other integers, period 10.
pub fn digit_kernel(graph: &mut ExpressionGraph, u: NodeId) -> NodeId {
    let mut terms = Vec::new();
    for k in 0..10i64 {
        let arg = Affine::node(u, PiRat::pi_times(rat(k, 5)));
        let c = graph.cos(arg);
        terms.push((rat(1, 10), c));
    }
    graph.sum(terms, BigRational::zero())
}

/// mod10(x) = Σ_{s=0}^{9} s·K(x−s): equals x mod 10 at integers.
pub fn mod10(graph: &mut ExpressionGraph, x: NodeId) -> NodeId {
    let mut terms = Vec::new();
    for s in 1..10i64 {
        let mut k_terms = Vec::new();
        for k in 0..10i64 {
            let arg = Affine {
                terms: vec![(PiRat::pi_times(rat(k, 5)), x)],
                offset: PiRat::pi_times(rat(-k * s, 5)),
            };
            let c = graph.cos(arg);
            k_terms.push((rat(1, 10), c));
        }
        let ks = graph.sum(k_terms, BigRational::zero());
        terms.push((rat_i(s), ks));
    }
    graph.sum(terms, BigRational::zero())
}

/// σ(x) = x − (1/5)·sin(2πx): fixes integers, contracts nearby errors.
pub fn sigma(graph: &mut ExpressionGraph, x: NodeId) -> NodeId {
    let s = graph.sin(Affine::node(x, PiRat::pi_times(rat_i(2))));
    graph.sum(vec![(BigRational::one(), x), (rat(-1, 5), s)], BigRational::zero())
}

/// One stage of a σ chain with the trig pair recorded.
#[derive(Debug, Clone)]
pub struct SigmaStage {
    pub input: NodeId,
    pub sin: NodeId,
    pub cos: NodeId,
    pub output: NodeId,
}

/// k-fold σ with every stage's sin/cos pair recorded (the compiler attaches
/// chain-Jacobian variables to these).
#[derive(Debug, Clone)]
pub struct SigmaChain {
    pub input: NodeId,
    pub stages: Vec<SigmaStage>,
}

impl SigmaChain {
    pub fn output(&self) -> NodeId {
        self.stages.last().map(|s| s.output).unwrap_or(self.input)
    }
}

pub fn sigma_chain(graph: &mut ExpressionGraph, x: NodeId, k: u32) -> SigmaChain {
    let mut stages = Vec::new();
    let mut cur = x;
    for _ in 0..k {
        let arg = Affine::node(cur, PiRat::pi_times(rat_i(2)));
        let s = graph.sin(arg.clone());
        let c = graph.cos(arg);
        let out = graph.sum(
            vec![(BigRational::one(), cur), (rat(-1, 5), s)],
            BigRational::zero(),
        );
        stages.push(SigmaStage { input: cur, sin: s, cos: c, output: out });
        cur = out;
    }
    SigmaChain { input: x, stages }
}

/// Move selectors: sel₋₁(ε) = ε(ε−1)/2, sel₀(ε) = (1−ε)(1+ε),
/// sel₊₁(ε) = ε(ε+1)/2, as exact univariate polynomials.
pub fn move_selector(m: i8) -> Polynomial {
    let e = Polynomial::var(1, 0);
    let one = Polynomial::one(1);
    match m {
        -1 => e.mul(&e.sub(&one).unwrap()).unwrap().scale(&rat(1, 2)),
        0 => one.sub(&e.mul(&e).unwrap()).unwrap(),
        1 => e.mul(&e.add(&one).unwrap()).unwrap().scale(&rat(1, 2)),
        _ => panic!("move must be -1, 0, or 1"),
    }
}

// ---------------------------------------------------------------------------
// Transition interpolation
// ---------------------------------------------------------------------------

fn lagrange_univariate(points: &[(BigRational, BigRational)]) -> Polynomial {
    let mut acc = Polynomial::zero(1);
    for (i, (xi, yi)) in points.iter().enumerate() {
        if yi.is_zero() {
            continue;
        }
        let mut basis = Polynomial::one(1);
        let mut denom = BigRational::one();
        for (j, (xj, _)) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let lin = Polynomial::var(1, 0)
                .sub(&Polynomial::constant(1, xj.clone()))
                .unwrap();
            basis = basis.mul(&lin).unwrap();
            denom *= xi - xj;
        }
        acc = acc.add(&basis.scale(&(yi / denom))).unwrap();
    }
    acc
}

/// Table value on the full grid {1..r}×{0..9}, with the halting row fixed to
/// the identity transition (q_halt, s, 0).
fn table_value(machine: &TuringMachine, q: u32, s: u8) -> (u32, u8, i8) {
    if q == machine.q_halt() {
        (q, s, 0)
    } else {
        let r = machine.rule(q, s);
        (r.next, r.write, r.mv)
    }
}

/// Bivariate Lagrange interpolants Qnext(q,t0), Wsym(q,t0), Emove(q,t0) on
/// {1..r}×{0..9}; variable 0 is q, variable 1 is t0.
pub fn interpolate_transition(machine: &TuringMachine) -> [Polynomial; 3] {
    let r = machine.states;
    let mut qnext = Polynomial::zero(2);
    let mut wsym = Polynomial::zero(2);
    let mut emove = Polynomial::zero(2);
    let q_grid: Vec<BigRational> = (1..=r).map(|q| rat_i(q as i64)).collect();
    let s_grid: Vec<BigRational> = (0..ALPHABET).map(|s| rat_i(s as i64)).collect();
    let embed = |p: &Polynomial, var: usize| -> Polynomial {
        p.substitute(&[Polynomial::var(2, var)]).unwrap()
    };
    for (qi, qv) in q_grid.iter().enumerate() {
        let lq: Vec<(BigRational, BigRational)> = q_grid
            .iter()
            .enumerate()
            .map(|(j, x)| (x.clone(), if j == qi { rat_i(1) } else { rat_i(0) }))
            .collect();
        let lq = embed(&lagrange_univariate(&lq), 0);
        for (si, sv) in s_grid.iter().enumerate() {
            let _ = sv;
            let ls: Vec<(BigRational, BigRational)> = s_grid
                .iter()
                .enumerate()
                .map(|(j, x)| (x.clone(), if j == si { rat_i(1) } else { rat_i(0) }))
                .collect();
            let ls = embed(&lagrange_univariate(&ls), 1);
            let basis = lq.mul(&ls).unwrap();
            let (nq, w, mv) = table_value(machine, qv.to_integer().to_u32().unwrap(), si as u8);
            qnext = qnext.add(&basis.scale(&rat_i(nq as i64))).unwrap();
            wsym = wsym.add(&basis.scale(&rat_i(w as i64))).unwrap();
            emove = emove.add(&basis.scale(&rat_i(mv as i64))).unwrap();
        }
    }
    [qnext, wsym, emove]
}

/// Linear-lookup tables: the branch combination
///   next_a = (ã − u1)·T1 + u2·T2 + T3
///   next_b = b̃·T4 + T5 − (1/10)·u2·T2
///   next_q = T7
/// is an exact rewrite of the selector form sel₋₁/sel₀/sel₊₁ applied to the
/// three shift branches; each Tᵢ(q, s) is tabulated on the grid.
#[derive(Debug, Clone)]
pub struct TransitionTables {
    /// Per symbol s, univariate polynomials in q for (T1, T2, T3, T4, T5, T7).
    pub per_symbol: Vec<[Polynomial; 6]>,
    pub states: u32,
}

pub fn transition_tables(machine: &TuringMachine) -> TransitionTables {
    let r = machine.states;
    let mut per_symbol = Vec::new();
    for s in 0..ALPHABET {
        let mut cols: [Vec<(BigRational, BigRational)>; 6] = Default::default();
        for q in 1..=r {
            let (nq, w, mv) = table_value(machine, q, s);
            let (s0, sp, sm) = match mv {
                0 => (rat_i(1), rat_i(0), rat_i(0)),
                1 => (rat_i(0), rat_i(1), rat_i(0)),
                -1 => (rat_i(0), rat_i(0), rat_i(1)),
                _ => unreachable!(),
            };
            let w = rat_i(w as i64);
            let t1 = &s0 + &sp * rat(1, 10) + &sm * rat_i(10);
            let t2 = sm.clone();
            let t3 = &w * (&s0 + &sm * rat_i(10));
            let t4 = &s0 + &sp * rat_i(10) + &sm * rat(1, 10);
            let t5 = &w * &sp;
            let t7 = rat_i(nq as i64);
            let qv = rat_i(q as i64);
            for (k, v) in [t1, t2, t3, t4, t5, t7].into_iter().enumerate() {
                cols[k].push((qv.clone(), v));
            }
        }
        per_symbol.push([
            lagrange_univariate(&cols[0]),
            lagrange_univariate(&cols[1]),
            lagrange_univariate(&cols[2]),
            lagrange_univariate(&cols[3]),
            lagrange_univariate(&cols[4]),
            lagrange_univariate(&cols[5]),
        ]);
    }
    TransitionTables { per_symbol, states: r }
}

// ---------------------------------------------------------------------------
// Kernel block: CRT digit indicators
// ---------------------------------------------------------------------------

/// Digit-indicator kernel block over one input node: a parity cosine cos(πx)
/// and five period-5 cosines cos(2π(x−t)/5). The indicator of digit s
/// combines both through integer-coefficient Chebyshev polynomials, so the
/// whole block costs six trig pairs instead of ninety.
#[derive(Debug, Clone)]
pub struct KernelBlock {
    pub input: NodeId,
    pub parity_cos: NodeId,
    pub mod5_cos: [NodeId; 5],
    /// indicator node per digit 0..9
    pub indicators: [NodeId; 10],
    /// Σ s·indicator_s — the digit value read from the input
    pub digit_value: NodeId,
}

pub fn kernel_block(graph: &mut ExpressionGraph, x: NodeId) -> KernelBlock {
    let parity_cos = graph.cos(Affine::node(x, PiRat::pi_times(rat_i(1))));
    let mut mod5_cos = [0usize; 5];
    for (t, slot) in mod5_cos.iter_mut().enumerate() {
        let arg = Affine {
            terms: vec![(PiRat::pi_times(rat(2, 5)), x)],
            offset: PiRat::pi_times(rat(-2 * t as i64, 5)),
        };
        *slot = graph.cos(arg);
    }
    // I5_t = (1/5)(8C⁴ + 4C³ − 6C² − 2C + 1): the collapsed Chebyshev form of
    // (1/5) Σ_{k=0}^{4} cos(k·2π(x−t)/5)
    let mut mod5_ind = [0usize; 5];
    for t in 0..5 {
        let c = mod5_cos[t];
        let c2 = graph.pow(c, 2);
        let c3 = graph.pow(c, 3);
        let c4 = graph.pow(c, 4);
        mod5_ind[t] = graph.sum(
            vec![
                (rat(8, 5), c4),
                (rat(4, 5), c3),
                (rat(-6, 5), c2),
                (rat(-2, 5), c),
            ],
            rat(1, 5),
        );
    }
    let i2_even = graph.sum(vec![(rat(1, 2), parity_cos)], rat(1, 2));
    let i2_odd = graph.sum(vec![(rat(-1, 2), parity_cos)], rat(1, 2));
    let mut indicators = [0usize; 10];
    for (s, slot) in indicators.iter_mut().enumerate() {
        let par = if s % 2 == 0 { i2_even } else { i2_odd };
        *slot = graph.mul2(par, mod5_ind[s % 5]);
    }
    let digit_value = graph.sum(
        (1..10).map(|s| (rat_i(s as i64), indicators[s])).collect(),
        BigRational::zero(),
    );
    KernelBlock { input: x, parity_cos, mod5_cos, indicators, digit_value }
}

// ---------------------------------------------------------------------------
// The analytic step map
// ---------------------------------------------------------------------------

/// Node roles the PIVP compiler promotes to state variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum CheckpointRole {
    LookupA1,
    LookupA2,
    LookupA3,
    LookupB1,
    LookupB2,
    LookupQ,
    DigitValueA,
    DigitValueB,
}

impl CheckpointRole {
    pub fn label(&self) -> &'static str {
        match self {
            CheckpointRole::LookupA1 => "T1",
            CheckpointRole::LookupA2 => "T2",
            CheckpointRole::LookupA3 => "T3",
            CheckpointRole::LookupB1 => "T4",
            CheckpointRole::LookupB2 => "T5",
            CheckpointRole::LookupQ => "Tq",
            CheckpointRole::DigitValueA => "u1",
            CheckpointRole::DigitValueB => "u2",
        }
    }
}

/// Structural description of one σ-chain (for Jacobian variables).
#[derive(Debug, Clone)]
pub struct ChainRecord {
    pub chain: SigmaChain,
    pub label: String,
}

/// Everything the F̂ construction adds to a graph on top of three input
/// nodes; shared between the standalone map and the clocked compiler.
#[derive(Debug, Clone)]
pub struct StepParts {
    pub outputs: [NodeId; 3],
    pub checkpoints: Vec<(CheckpointRole, NodeId)>,
    pub chains: Vec<ChainRecord>,
}

/// Builds F̂ ∘ σ^k_in over the given input nodes (a, b, q order): the inner
/// contraction chains, the digit kernels, the table lookups, and the branch
/// combination.
pub fn build_step_parts(
    graph: &mut ExpressionGraph,
    machine: &TuringMachine,
    inputs: [NodeId; 3],
    sigma_in: u32,
) -> StepParts {
    let tables = transition_tables(machine);
    let chain_a = sigma_chain(graph, inputs[0], sigma_in);
    let chain_b = sigma_chain(graph, inputs[1], sigma_in);
    let chain_q = sigma_chain(graph, inputs[2], sigma_in);
    let (a_t, b_t, q_t) = (chain_a.output(), chain_b.output(), chain_q.output());

    let kern_a = kernel_block(graph, a_t);
    let kern_b = kernel_block(graph, b_t);
    let u1 = kern_a.digit_value;
    let u2 = kern_b.digit_value;

    // q̃ powers shared by all table polynomials
    let r = machine.states as usize;
    let mut qpow: Vec<NodeId> = vec![graph.c_int(1)];
    for e in 1..r {
        let p = graph.pow(q_t, e as u32);
        qpow.push(p);
    }
    fn embed_univariate(
        graph: &mut ExpressionGraph,
        qpow: &[NodeId],
        p: &Polynomial,
    ) -> NodeId {
        let mut terms = Vec::new();
        let mut constant = BigRational::zero();
        for (m, c) in p.terms() {
            let e = m.0[0] as usize;
            if e == 0 {
                constant += c;
            } else {
                terms.push((c.clone(), qpow[e]));
            }
        }
        graph.sum(terms, constant)
    }
    let lookup = |graph: &mut ExpressionGraph, idx: usize| -> NodeId {
        let mut terms = Vec::new();
        for s in 0..ALPHABET as usize {
            let poly = &tables.per_symbol[s][idx];
            if poly.is_zero() {
                continue;
            }
            let coeff_node = embed_univariate(graph, &qpow, poly);
            let prod = graph.mul2(coeff_node, kern_a.indicators[s]);
            terms.push((BigRational::one(), prod));
        }
        graph.sum(terms, BigRational::zero())
    };
    let t1 = lookup(graph, 0);
    let t2 = lookup(graph, 1);
    let t3 = lookup(graph, 2);
    let t4 = lookup(graph, 3);
    let t5 = lookup(graph, 4);
    let t7 = lookup(graph, 5);

    // next_a = (ã − u1)·T1 + u2·T2 + T3
    let d = graph.sub2(a_t, u1);
    let p1 = graph.mul2(d, t1);
    let p2 = graph.mul2(u2, t2);
    let next_a = graph.sum(
        vec![
            (BigRational::one(), p1),
            (BigRational::one(), p2),
            (BigRational::one(), t3),
        ],
        BigRational::zero(),
    );
    // next_b = b̃·T4 + T5 − (1/10)·u2·T2
    let p3 = graph.mul2(b_t, t4);
    let next_b = graph.sum(
        vec![
            (BigRational::one(), p3),
            (BigRational::one(), t5),
            (rat(-1, 10), p2),
        ],
        BigRational::zero(),
    );
    let next_q = t7;

    let mut checkpoints = vec![
        (CheckpointRole::DigitValueA, u1),
        (CheckpointRole::DigitValueB, u2),
        (CheckpointRole::LookupA1, t1),
        (CheckpointRole::LookupA2, t2),
        (CheckpointRole::LookupA3, t3),
        (CheckpointRole::LookupB1, t4),
        (CheckpointRole::LookupB2, t5),
        (CheckpointRole::LookupQ, t7),
    ];
    // constant lookups fold away and need no state variable
    checkpoints.retain(|(_, id)| graph.as_const(*id).is_none());

    StepParts {
        outputs: [next_a, next_b, next_q],
        checkpoints,
        chains: vec![
            ChainRecord { chain: chain_a, label: "in_a".into() },
            ChainRecord { chain: chain_b, label: "in_b".into() },
            ChainRecord { chain: chain_q, label: "in_q".into() },
        ],
    }
}

/// Analytic map ℝ³ → ℝ³: σ^out ∘ F̂ ∘ σ^in, exact on integer encodings.
#[derive(Debug, Clone)]
pub struct AnalyticMap {
    pub machine_name: String,
    pub sigma_in: u32,
    pub sigma_out: u32,
    pub graph: ExpressionGraph,
    pub outputs: [NodeId; 3],
    /// Outputs of the raw step before the outer contraction.
    pub core_outputs: [NodeId; 3],
    pub parts: StepParts,
    pub out_chains: Vec<ChainRecord>,
}

impl AnalyticMap {
    pub fn eval(&self, ctx: &Ctx, x: &[Real; 3]) -> [Real; 3] {
        let values = eval_graph(&self.graph, ctx, x.as_slice());
        [
            values[self.outputs[0]].clone(),
            values[self.outputs[1]].clone(),
            values[self.outputs[2]].clone(),
        ]
    }

    pub fn eval_exact(&self, x: &[BigRational; 3]) -> Result<[BigRational; 3], AnalyticError> {
        let values = eval_graph_exact(&self.graph, x.as_slice())?;
        let get = |id: NodeId| -> Result<BigRational, AnalyticError> {
            values[id]
                .as_rational()
                .ok_or_else(|| AnalyticError::ExactUnsupported("output not rational".into()))
        };
        Ok([get(self.outputs[0])?, get(self.outputs[1])?, get(self.outputs[2])?])
    }

    pub fn eval_encoded(&self, enc: &EncodedConfig) -> Result<[BigRational; 3], AnalyticError> {
        self.eval_exact(&encoded_to_point(enc))
    }
}

pub fn encoded_to_point(enc: &EncodedConfig) -> [BigRational; 3] {
    let big = |u: &BigUint| BigRational::from_integer(BigInt::from(u.clone()));
    [big(&enc.y1), big(&enc.y2), rat_i(enc.q as i64)]
}

pub fn point_to_encoded(p: &[BigRational; 3]) -> Option<EncodedConfig> {
    let to_uint = |q: &BigRational| -> Option<BigUint> {
        if !q.is_integer() || q.is_negative() {
            return None;
        }
        q.to_integer().to_biguint()
    };
    Some(EncodedConfig {
        y1: to_uint(&p[0])?,
        y2: to_uint(&p[1])?,
        q: if p[2].is_integer() { p[2].to_integer().to_u32()? } else { return None },
    })
}

/// The raw analytic step map F̂ (no contraction stages).
pub fn build_analytic_step(machine: &TuringMachine) -> AnalyticMap {
    build_robust_step(machine, 0, 0)
}

/// σ^out ∘ F̂ ∘ σ^in over fresh input variables.
pub fn build_robust_step(machine: &TuringMachine, sigma_in: u32, sigma_out: u32) -> AnalyticMap {
    let mut graph = ExpressionGraph::new();
    let x0 = graph.var(0);
    let x1 = graph.var(1);
    let x2 = graph.var(2);
    let parts = build_step_parts(&mut graph, machine, [x0, x1, x2], sigma_in);
    let core = parts.outputs;
    let mut out_chains = Vec::new();
    let mut outputs = [0usize; 3];
    for (i, &c) in core.iter().enumerate() {
        let chain = sigma_chain(&mut graph, c, sigma_out);
        outputs[i] = chain.output();
        out_chains.push(ChainRecord { chain, label: format!("out_{i}") });
    }
    AnalyticMap {
        machine_name: machine.name.clone(),
        sigma_in,
        sigma_out,
        graph,
        outputs,
        core_outputs: core,
        parts,
        out_chains,
    }
}

/// Symmetric robustification σ_k ∘ F̂ ∘ σ_k per the map-level contract.
pub fn robustify(machine: &TuringMachine, k: u32) -> AnalyticMap {
    build_robust_step(machine, k, k)
}

// ---------------------------------------------------------------------------
// Robustness certification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize)]
pub struct RobustnessCert {
    pub machine: String,
    pub sigma_in: u32,
    pub sigma_out: u32,
    pub eps_in: String,
    pub worst_error: String,
    pub samples_per_config: usize,
    pub configs: usize,
    pub precision_bits: usize,
    pub pass: bool,
    pub witness: Option<String>,
}

impl RobustnessCert {
    pub fn require_pass(&self) -> Result<(), AnalyticError> {
        if self.pass {
            Ok(())
        } else {
            Err(AnalyticError::Certificate(format!(
                "machine {} worst error {} at eps_in {}{}",
                self.machine,
                self.worst_error,
                self.eps_in,
                self.witness
                    .as_deref()
                    .map(|w| format!(" witness {w}"))
                    .unwrap_or_default()
            )))
        }
    }
}

/// Samples perturbations ‖δ‖∞ ≤ ε over each configuration and checks the
/// tube invariance ‖map(x+δ) − Δ(x)‖∞ ≤ ε. Exactness on the unperturbed
/// encodings is asserted through the ℚ(√5) evaluator first.
pub fn verify_robustness(
    map: &AnalyticMap,
    machine: &TuringMachine,
    configs: &[EncodedConfig],
    eps_in: &BigRational,
    samples: usize,
    ctx: &Ctx,
    seed: u64,
) -> Result<RobustnessCert, AnalyticError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps_real = ctx.from_rat(eps_in);
    let mut worst = ctx.zero();
    let mut witness: Option<String> = None;
    let mut pass = true;

    for enc in configs {
        let exact = map.eval_encoded(enc)?;
        let truth = delta_encoded(machine, enc);
        let truth_pt = encoded_to_point(&truth);
        if exact != truth_pt {
            return Ok(RobustnessCert {
                machine: machine.name.clone(),
                sigma_in: map.sigma_in,
                sigma_out: map.sigma_out,
                eps_in: eps_in.to_string(),
                worst_error: "exactness violated".into(),
                samples_per_config: samples,
                configs: configs.len(),
                precision_bits: ctx.bits,
                pass: false,
                witness: Some(format!("{enc} maps to {exact:?}, oracle {truth}")),
            });
        }
        let base: Vec<Real> = encoded_to_point(enc).iter().map(|q| ctx.from_rat(q)).collect();
        let truth_real: Vec<Real> = truth_pt.iter().map(|q| ctx.from_rat(q)).collect();
        if eps_in.is_zero() {
            continue;
        }
        for _ in 0..samples {
            let draw = |rng: &mut ChaCha8Rng| -> BigRational {
                let g: i64 = rng.random_range(-1_000_000..=1_000_000);
                rat(g, 1_000_000) * eps_in
            };
            let delta = [draw(&mut rng), draw(&mut rng), draw(&mut rng)];
            let point: [Real; 3] = [
                base[0].clone() + ctx.from_rat(&delta[0]),
                base[1].clone() + ctx.from_rat(&delta[1]),
                base[2].clone() + ctx.from_rat(&delta[2]),
            ];
            let image = map.eval(ctx, &point);
            let mut err = ctx.zero();
            for i in 0..3 {
                let e = crate::scalar::abs(&(image[i].clone() - &truth_real[i]));
                if e > err {
                    err = e;
                }
            }
            if err > worst {
                worst = err.clone();
            }
            if err > eps_real && witness.is_none() {
                pass = false;
                witness = Some(format!(
                    "x={enc} delta=({}, {}, {}) err={}",
                    delta[0],
                    delta[1],
                    delta[2],
                    ctx.to_decimal_string(&err)
                ));
            }
        }
    }
    Ok(RobustnessCert {
        machine: machine.name.clone(),
        sigma_in: map.sigma_in,
        sigma_out: map.sigma_out,
        eps_in: eps_in.to_string(),
        worst_error: ctx.to_decimal_string(&worst),
        samples_per_config: samples,
        configs: configs.len(),
        precision_bits: ctx.bits,
        pass,
        witness,
    })
}

/// Dense-grid plus derivative-bound certificate for the σ contraction factor:
/// sup over 0 < |e| ≤ 1/8 of |σ(n+e) − n| / |e|, certified against `bound`.
pub fn sigma_contraction_certificate(ctx: &Ctx, grid: usize, bound: &BigRational) -> (Real, bool) {
    let two_pi = ctx.pi() * ctx.int(2);
    let fifth = ctx.from_rat(&rat(1, 5));
    let mut worst = ctx.zero();
    for i in 1..=grid {
        let e = ctx.from_rat(&rat(i as i64, (8 * grid) as i64));
        let val = e.clone() - fifth.clone() * (two_pi.clone() * &e).sin();
        let ratio = crate::scalar::abs(&val) / &e;
        if ratio > worst {
            worst = ratio;
        }
    }
    // |σ'(e)| = |1 − (2π/5)cos(2πe)| is extremal at the interval ends since
    // cos decreases on [0, 1/8]
    let d0 = crate::scalar::abs(&(ctx.one() - two_pi.clone() * &fifth));
    let e_end = ctx.from_rat(&rat(1, 8));
    let d1 = crate::scalar::abs(
        &(ctx.one() - two_pi.clone() * fifth * (two_pi.clone() * e_end).cos()),
    );
    let deriv_bound = if d0 > d1 { d0 } else { d1 };
    let lambda = if deriv_bound > worst { deriv_bound } else { worst };
    let ok = lambda <= ctx.from_rat(bound);
    (lambda, ok)
}

// ---------------------------------------------------------------------------
// Graph serialization (node-list DAG with explicit affine trig arguments)
// ---------------------------------------------------------------------------

#[derive(serde::Serialize)]
struct AffineJson {
    terms: Vec<(String, String, NodeId)>,
    offset: (String, String),
}

#[derive(serde::Serialize)]
#[serde(tag = "kind")]
enum NodeJson {
    Const { value: String },
    Var { index: usize },
    Sum { terms: Vec<(String, NodeId)>, constant: String },
    Prod { factors: Vec<(NodeId, u32)> },
    Sin { arg: AffineJson },
    Cos { arg: AffineJson },
}

#[derive(serde::Serialize)]
struct MapJson {
    machine: String,
    sigma_in: u32,
    sigma_out: u32,
    inputs: usize,
    outputs: Vec<NodeId>,
    nodes: Vec<NodeJson>,
}

fn affine_json(a: &Affine) -> AffineJson {
    AffineJson {
        terms: a
            .terms
            .iter()
            .map(|(c, id)| (c.plain.to_string(), c.pi_part.to_string(), *id))
            .collect(),
        offset: (a.offset.plain.to_string(), a.offset.pi_part.to_string()),
    }
}

impl AnalyticMap {
    pub fn to_json_string(&self) -> String {
        let nodes = self
            .graph
            .nodes()
            .iter()
            .map(|n| match n {
                Node::Const(q) => NodeJson::Const { value: q.to_string() },
                Node::Var(i) => NodeJson::Var { index: *i },
                Node::Sum { terms, constant } => NodeJson::Sum {
                    terms: terms.iter().map(|(c, id)| (c.to_string(), *id)).collect(),
                    constant: constant.to_string(),
                },
                Node::Prod(f) => NodeJson::Prod { factors: f.clone() },
                Node::Sin(a) => NodeJson::Sin { arg: affine_json(a) },
                Node::Cos(a) => NodeJson::Cos { arg: affine_json(a) },
            })
            .collect();
        let j = MapJson {
            machine: self.machine_name.clone(),
            sigma_in: self.sigma_in,
            sigma_out: self.sigma_out,
            inputs: 3,
            outputs: self.outputs.to_vec(),
            nodes,
        };
        serde_json::to_string_pretty(&j).expect("map serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    fn q5_int(values: &[Sqrt5Rat], id: NodeId) -> BigRational {
        values[id].as_rational().expect("rational value")
    }

    #[test]
    fn digit_kernel_exact_values() {
        let mut g = ExpressionGraph::new();
        let u = g.var(0);
        let k = digit_kernel(&mut g, u);
        for (input, want) in [(0i64, 1i64), (7, 0), (10, 1), (3, 0), (20, 1)] {
            let vals = eval_graph_exact(&g, &[rat_i(input)]).unwrap();
            assert_eq!(q5_int(&vals, k), rat_i(want), "K({input})");
        }
    }

    #[test]
    fn mod10_exact_values() {
        let mut g = ExpressionGraph::new();
        let x = g.var(0);
        let m = mod10(&mut g, x);
        for input in [0i64, 7, 27, 120, 97] {
            let vals = eval_graph_exact(&g, &[rat_i(input)]).unwrap();
            assert_eq!(q5_int(&vals, m), rat_i(input % 10), "mod10({input})");
        }
    }

    #[test]
    fn mod10_periodicity_numeric() {
        let ctx = Ctx::new(128);
        let mut g = ExpressionGraph::new();
        let x = g.var(0);
        let m = mod10(&mut g, x);
        for v in ["0.3", "4.78", "-2.5"] {
            let a = ctx.parse_decimal(v).unwrap();
            let b = a.clone() + ctx.int(10);
            let va = eval_graph(&g, &ctx, &[a])[m].clone();
            let vb = eval_graph(&g, &ctx, &[b])[m].clone();
            assert!(crate::scalar::abs(&(va - vb)) < ctx.pow2(-100));
        }
    }

    #[test]
    fn sigma_fixes_integers() {
        let mut g = ExpressionGraph::new();
        let x = g.var(0);
        let s = sigma(&mut g, x);
        for n in [-3i64, 0, 5, 12] {
            let vals = eval_graph_exact(&g, &[rat_i(n)]).unwrap();
            assert_eq!(q5_int(&vals, s), rat_i(n));
        }
    }

    #[test]
    fn sigma_lambda_certificate() {
        let ctx = Ctx::new(256);
        let (lambda, ok) = sigma_contraction_certificate(&ctx, 2048, &rat(26, 100));
        assert!(ok, "lambda = {}", ctx.to_decimal_string(&lambda));
        let lo = ctx.parse_decimal("0.256").unwrap();
        assert!(lambda > lo);
    }

    #[test]
    fn sigma_chain_composes_contraction() {
        // three stages contract |e| ≤ 1/8 by at least 0.26³ < 0.018
        let ctx = Ctx::new(192);
        let mut g = ExpressionGraph::new();
        let x = g.var(0);
        let chain = sigma_chain(&mut g, x, 3);
        let out = chain.output();
        let bound = ctx.parse_decimal("0.018").unwrap();
        for i in 1..=64 {
            let e = ctx.from_rat(&rat(i, 64 * 8));
            let v = eval_graph(&g, &ctx, &[ctx.int(4) + &e])[out].clone();
            let err = crate::scalar::abs(&(v - ctx.int(4)));
            assert!(err <= bound.clone() * &e, "e = {i}/512");
        }
    }

    #[test]
    fn selectors_match_spec_values() {
        for (m, at, want) in [
            (0i8, 0i64, 1i64),
            (0, 1, 0),
            (0, -1, 0),
            (1, 1, 1),
            (1, 0, 0),
            (1, -1, 0),
            (-1, -1, 1),
            (-1, 0, 0),
            (-1, 1, 0),
        ] {
            let sel = move_selector(m);
            assert_eq!(sel.eval_exact(&[rat_i(at)]).unwrap(), rat_i(want), "sel_{m}({at})");
        }
    }

    #[test]
    fn selector_form_equals_table_form_on_grid() {
        // the T-table branch combination reproduces the selector combination
        // at every grid point, for a machine using all three moves
        let machine = corpus::copy();
        let tables = transition_tables(&machine);
        let [_, wsym, emove] = interpolate_transition(&machine);
        for q in 1..=machine.states {
            for s in 0..ALPHABET {
                let pt = [rat_i(q as i64), rat_i(s as i64)];
                let e = emove.eval_exact(&pt).unwrap();
                let w = wsym.eval_exact(&pt).unwrap();
                let sel = |m: i8| move_selector(m).eval_exact(&[e.clone()]).unwrap();
                let t1_sel = sel(0) + sel(1) * rat(1, 10) + sel(-1) * rat_i(10);
                let t1_tab = tables.per_symbol[s as usize][0]
                    .eval_exact(&[rat_i(q as i64)])
                    .unwrap();
                assert_eq!(t1_sel, t1_tab, "T1({q},{s})");
                let t3_sel = &w * (sel(0) + sel(-1) * rat_i(10));
                let t3_tab = tables.per_symbol[s as usize][2]
                    .eval_exact(&[rat_i(q as i64)])
                    .unwrap();
                assert_eq!(t3_sel, t3_tab, "T3({q},{s})");
            }
        }
    }

    #[test]
    fn interpolation_exact_on_grid() {
        for machine in [corpus::inc(), corpus::copy(), corpus::parity()] {
            let [qn, ws, em] = interpolate_transition(&machine);
            assert!(qn.degree_in(0) <= machine.states - 1 && qn.degree_in(1) <= 9);
            for q in 1..=machine.states {
                for s in 0..ALPHABET {
                    let (want_q, want_w, want_e) = super::table_value(&machine, q, s);
                    let pt = [rat_i(q as i64), rat_i(s as i64)];
                    assert_eq!(qn.eval_exact(&pt).unwrap(), rat_i(want_q as i64));
                    assert_eq!(ws.eval_exact(&pt).unwrap(), rat_i(want_w as i64));
                    assert_eq!(em.eval_exact(&pt).unwrap(), rat_i(want_e as i64));
                }
            }
        }
    }

    #[test]
    fn interpolation_of_constant_move_column_is_constant() {
        // LOOP never moves: Emove is the zero polynomial
        let [_, _, em] = interpolate_transition(&corpus::loop_machine());
        assert!(em.is_zero());
    }

    #[test]
    fn inc_step_map_matches_oracle_exactly() {
        let machine = corpus::inc();
        let map = build_analytic_step(&machine);
        assert!(map.graph.trig_args_affine());
        let enc = EncodedConfig { y1: 0u32.into(), y2: 0u32.into(), q: 1 };
        let img = map.eval_encoded(&enc).unwrap();
        assert_eq!(img, [rat_i(1), rat_i(0), rat_i(2)]);
    }

    #[test]
    fn right_mover_matches_oracle_exactly() {
        let machine = crate::tm::parse_machine("states 2\n1,7 -> 1,7,1\n").unwrap();
        let map = build_analytic_step(&machine);
        let enc = EncodedConfig { y1: 27u32.into(), y2: 3u32.into(), q: 1 };
        let img = map.eval_encoded(&enc).unwrap();
        assert_eq!(img, [rat_i(2), rat_i(37), rat_i(1)]);
    }

    #[test]
    fn step_map_exact_on_reachable_sets() {
        for machine in corpus::all() {
            let map = build_robust_step(&machine, 2, 1);
            for enc in corpus::reachable_encodings(&machine, 3, 12) {
                let img = map.eval_encoded(&enc).unwrap();
                let want = encoded_to_point(&delta_encoded(&machine, &enc));
                assert_eq!(img, want, "machine {} at {enc}", machine.name);
            }
        }
    }

    #[test]
    fn halting_rows_are_fixed_points() {
        for machine in corpus::all() {
            let map = build_analytic_step(&machine);
            let enc = EncodedConfig { y1: 52u32.into(), y2: 7u32.into(), q: machine.q_halt() };
            let img = map.eval_encoded(&enc).unwrap();
            assert_eq!(img, encoded_to_point(&enc), "machine {}", machine.name);
        }
    }

    #[test]
    fn sigma_stages_fix_encodings() {
        let machine = corpus::shiftr();
        let plain = build_analytic_step(&machine);
        let robust = robustify(&machine, 3);
        for enc in corpus::reachable_encodings(&machine, 2, 8) {
            assert_eq!(plain.eval_encoded(&enc).unwrap(), robust.eval_encoded(&enc).unwrap());
        }
    }

    #[test]
    fn robustness_cert_passes_at_quarter() {
        let ctx = Ctx::new(192);
        let machine = corpus::inc();
        let map = build_robust_step(&machine, 6, 3);
        let configs = corpus::reachable_encodings(&machine, 3, 12);
        let cert = verify_robustness(&map, &machine, &configs, &rat(1, 4), 64, &ctx, 11).unwrap();
        assert!(cert.pass, "worst = {}", cert.worst_error);
    }

    #[test]
    fn zero_epsilon_passes_trivially() {
        let ctx = Ctx::new(128);
        let machine = corpus::inc();
        let map = build_robust_step(&machine, 1, 1);
        let configs = corpus::reachable_encodings(&machine, 3, 12);
        let cert = verify_robustness(&map, &machine, &configs, &rat_i(0), 16, &ctx, 3).unwrap();
        assert!(cert.pass);
    }

    #[test]
    fn raw_map_fails_certification() {
        // without contraction stages, blended branches amplify input noise
        let ctx = Ctx::new(192);
        let machine = corpus::parity();
        let map = build_analytic_step(&machine);
        let configs = corpus::reachable_encodings(&machine, 3, 12);
        let cert = verify_robustness(&map, &machine, &configs, &rat(1, 4), 64, &ctx, 13).unwrap();
        assert!(!cert.pass, "raw map should not certify");
        assert!(cert.witness.is_some());
    }

    #[test]
    fn monotone_in_sigma_stages() {
        let ctx = Ctx::new(128);
        let machine = corpus::shiftr();
        let configs = corpus::reachable_encodings(&machine, 2, 6);
        let mut prev: Option<Real> = None;
        for k in 1..=5 {
            let map = build_robust_step(&machine, k, k.min(3));
            let cert =
                verify_robustness(&map, &machine, &configs, &rat(1, 8), 48, &ctx, 17).unwrap();
            let worst = ctx.parse_decimal(&cert.worst_error).unwrap();
            if let Some(p) = prev {
                assert!(
                    worst <= p.clone() + ctx.pow2(-30),
                    "k={k} worsened: {} > {}",
                    ctx.to_decimal_string(&worst),
                    ctx.to_decimal_string(&p)
                );
            }
            prev = Some(worst);
        }
    }

    #[test]
    fn tube_invariance_composes_over_iterations() {
        let ctx = Ctx::new(192);
        let machine = corpus::parity();
        let map = build_robust_step(&machine, 6, 3);
        let eps = rat(1, 8);
        let enc = EncodedConfig { y1: 21u32.into(), y2: 0u32.into(), q: 1 };
        let mut x: [Real; 3] = [
            ctx.from_rat(&(rat_i(21) + &eps)),
            ctx.from_rat(&eps),
            ctx.from_rat(&(rat_i(1) - &eps)),
        ];
        let mut truth = enc;
        let eps_real = ctx.from_rat(&eps);
        for j in 0..20 {
            x = map.eval(&ctx, &x);
            truth = delta_encoded(&machine, &truth);
            let t = encoded_to_point(&truth);
            for i in 0..3 {
                let err = crate::scalar::abs(&(x[i].clone() - ctx.from_rat(&t[i])));
                assert!(
                    err <= eps_real,
                    "iterate {j} coord {i} err {}",
                    ctx.to_decimal_string(&err)
                );
            }
        }
    }

    #[test]
    fn map_json_is_deterministic() {
        let machine = corpus::inc();
        let a = build_robust_step(&machine, 2, 1).to_json_string();
        let b = build_robust_step(&machine, 2, 1).to_json_string();
        assert_eq!(a, b);
        assert!(a.contains("\"kind\": \"Cos\""));
    }
}
