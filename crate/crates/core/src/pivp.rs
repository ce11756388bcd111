//! Compilation of analytic systems into autonomous polynomial vector fields.
//!
//! Every sine/cosine argument gets a cosine/sine variable pair whose
//! derivatives close polynomially; σ-chain stages additionally get chain
//! Jacobian variables (products of stage derivatives), and designated lookup
//! nodes become state variables so no right-hand side ever multiplies two
//! large expansions. π enters as a frozen variable with derivative zero,
//! keeping every polynomial coefficient rational.

use crate::analytic::{
    build_robust_step, build_step_parts, sigma_chain, Affine, AnalyticError, ChainRecord,
    ExpressionGraph, Node, NodeId, RobustnessCert,
};
use crate::config::PipelineConfig;
use crate::poly::{Polynomial, PolyError, PolyVectorField};
use crate::scalar::{rat, rat_i, Ctx, ExactVal, PiRat, Real};
use crate::tm::{EncodedConfig, TuringMachine};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PivpError {
    #[error("polynomial error: {0}")]
    Poly(#[from] PolyError),
    #[error("analytic error: {0}")]
    Analytic(#[from] AnalyticError),
    #[error("missing robustness certificate for the clocked build")]
    MissingCertificate,
    #[error("region parameters invalid: {0}")]
    Region(String),
    #[error("initial value for variable {0} is not exactly representable")]
    InitialValue(String),
}

/// Analytic system ready for compilation: base variables with analytic
/// right-hand sides, declared σ-chains, and checkpoint nodes.
#[derive(Debug, Clone)]
pub struct AnalyticSystem {
    pub graph: ExpressionGraph,
    pub base_dim: usize,
    pub rhs: Vec<NodeId>,
    pub chains: Vec<ChainRecord>,
    pub checkpoints: Vec<(String, NodeId)>,
    pub var_names: Vec<String>,
}

/// The two-phase clocked simulation of a certified step map:
///   ω' = 1
///   z1' = c·c2(ω)·(σ_out(z2) − z1)
///   z2' = c·c1(ω)·(F̂(σ_in(z1)) − z2)
/// with phase gates c1 = ((1+sin 2πω)/2)^K and c2 = ((1−sin 2πω)/2)^K.
#[derive(Debug, Clone)]
pub struct ClockedSystem {
    pub system: AnalyticSystem,
    pub machine: TuringMachine,
    pub gain_c: BigRational,
    pub sharpness: u32,
    pub sigma_in: u32,
    pub sigma_out: u32,
    pub cert: RobustnessCert,
    pub phase_a: NodeId,
    pub phase_b: NodeId,
}

pub fn build_clocked_system(
    machine: &TuringMachine,
    cfg: &PipelineConfig,
    cert: Option<RobustnessCert>,
) -> Result<ClockedSystem, PivpError> {
    let cert = cert.ok_or(PivpError::MissingCertificate)?;
    cert.require_pass()?;
    let mut graph = ExpressionGraph::new();
    let omega = graph.var(0);
    let z1: Vec<NodeId> = (1..4).map(|i| graph.var(i)).collect();
    let z2: Vec<NodeId> = (4..7).map(|i| graph.var(i)).collect();

    // clock block
    let clock_arg = Affine::node(omega, PiRat::pi_times(rat_i(2)));
    let s_theta = graph.sin(clock_arg);
    let h1 = graph.sum(vec![(rat(1, 2), s_theta)], rat(1, 2));
    let h2 = graph.sum(vec![(rat(-1, 2), s_theta)], rat(1, 2));
    let g1 = graph.pow(h1, cfg.sharpness);
    let g2 = graph.pow(h2, cfg.sharpness);

    // step map on the robustified z1, outer contraction on z2
    let parts = build_step_parts(&mut graph, machine, [z1[0], z1[1], z1[2]], cfg.sigma_in);
    let mut chains = parts.chains.clone();
    let mut out_chains = Vec::new();
    for (i, &z) in z2.iter().enumerate() {
        let ch = sigma_chain(&mut graph, z, cfg.sigma_out);
        out_chains.push(ch.output());
        chains.push(ChainRecord { chain: ch, label: format!("out_{i}") });
    }

    let one = graph.c_int(1);
    let mut rhs = vec![one];
    for i in 0..3 {
        // z1ᵢ' = c·g2·(σ_out(z2ᵢ) − z1ᵢ)
        let diff = graph.sub2(out_chains[i], z1[i]);
        let prod = graph.mul2(g2, diff);
        rhs.push(graph.scale(cfg.gain_c.clone(), prod));
    }
    for i in 0..3 {
        // z2ᵢ' = c·g1·(F̂ᵢ(σ_in(z1)) − z2ᵢ)
        let diff = graph.sub2(parts.outputs[i], z2[i]);
        let prod = graph.mul2(g1, diff);
        rhs.push(graph.scale(cfg.gain_c.clone(), prod));
    }

    let mut checkpoints: Vec<(String, NodeId)> = vec![("h1".into(), h1), ("h2".into(), h2)];
    let mut seen: HashSet<NodeId> = checkpoints.iter().map(|(_, n)| *n).collect();
    // chain outputs become state variables: lookup polynomials then see a
    // single variable instead of an affine expansion, which keeps their
    // derivative polynomials small
    for rec in &chains {
        if !rec.chain.stages.is_empty() {
            let out = rec.chain.output();
            if seen.insert(out) {
                checkpoints.push((format!("rob[{}]", rec.label), out));
            }
        }
    }
    for (role, node) in &parts.checkpoints {
        if seen.insert(*node) {
            checkpoints.push((role.label().to_string(), *node));
        }
    }

    Ok(ClockedSystem {
        system: AnalyticSystem {
            graph,
            base_dim: 7,
            rhs,
            chains,
            checkpoints,
            var_names: vec![
                "omega".into(),
                "z1a".into(),
                "z1b".into(),
                "z1q".into(),
                "z2a".into(),
                "z2b".into(),
                "z2q".into(),
            ],
        },
        machine: machine.clone(),
        gain_c: cfg.gain_c.clone(),
        sharpness: cfg.sharpness,
        sigma_in: cfg.sigma_in,
        sigma_out: cfg.sigma_out,
        cert,
        phase_a: g1,
        phase_b: g2,
    })
}

/// Convenience: certify and build in one call.
pub fn certified_clocked_system(
    machine: &TuringMachine,
    cfg: &PipelineConfig,
    configs: &[EncodedConfig],
) -> Result<(ClockedSystem, RobustnessCert), PivpError> {
    let map = build_robust_step(machine, cfg.sigma_in, cfg.sigma_out);
    let ctx = Ctx::new(cfg.precision_bits.min(192));
    let cert = crate::analytic::verify_robustness(
        &map,
        machine,
        configs,
        &cfg.epsilon,
        cfg.robust_samples.min(200),
        &ctx,
        cfg.seed,
    )?;
    cert.require_pass()?;
    let clocked = build_clocked_system(machine, cfg, Some(cert.clone()))?;
    Ok((clocked, cert))
}

// ---------------------------------------------------------------------------
// State variables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub enum VarRole {
    Base(String),
    Omega,
    Z1(usize),
    Z2(usize),
    Pi,
    TrigSin(String),
    TrigCos(String),
    ChainJac { chain: String, depth: usize },
    Checkpoint(String),
}

impl VarRole {
    pub fn label(&self) -> String {
        match self {
            VarRole::Base(s) => s.clone(),
            VarRole::Omega => "omega".into(),
            VarRole::Z1(i) => format!("z1_{i}"),
            VarRole::Z2(i) => format!("z2_{i}"),
            VarRole::Pi => "pi".into(),
            VarRole::TrigSin(a) => format!("sin[{a}]"),
            VarRole::TrigCos(a) => format!("cos[{a}]"),
            VarRole::ChainJac { chain, depth } => format!("jac[{chain}:{depth}]"),
            VarRole::Checkpoint(s) => format!("chk[{s}]"),
        }
    }
}

/// Exact initial-value recipe per state variable.
#[derive(Debug, Clone)]
enum VarDef {
    BaseVar(usize),
    PiConst,
    PairSin(Affine),
    PairCos(Affine),
    Jac { chain: usize, depth: usize },
    Checkpoint(NodeId),
}

/// Compiled autonomous polynomial system with an exact initial-point recipe.
#[derive(Debug, Clone)]
pub struct AutonomousPolyODE {
    pub machine_name: Option<String>,
    pub field: PolyVectorField,
    pub roles: Vec<VarRole>,
    pub degree: u32,
    graph: ExpressionGraph,
    base_dim: usize,
    chains: Vec<ChainRecord>,
    var_defs: Vec<VarDef>,
}

impl AutonomousPolyODE {
    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn index_of(&self, role: &VarRole) -> Option<usize> {
        self.roles.iter().position(|r| r == role)
    }

    pub fn omega_index(&self) -> Option<usize> {
        self.index_of(&VarRole::Omega)
    }

    pub fn z1_indices(&self) -> Option<[usize; 3]> {
        Some([
            self.index_of(&VarRole::Z1(0))?,
            self.index_of(&VarRole::Z1(1))?,
            self.index_of(&VarRole::Z1(2))?,
        ])
    }

    /// Exact initial values for a base point (generic systems).
    pub fn initial_values_at(&self, base: &[BigRational]) -> Result<Vec<ExactVal>, PivpError> {
        assert_eq!(base.len(), self.base_dim);
        let values = crate::analytic::eval_graph_exact_lenient(&self.graph, base);
        let node_rat = |id: NodeId, what: &str| -> Result<BigRational, PivpError> {
            values[id]
                .as_ref()
                .and_then(|v| v.as_rational())
                .ok_or_else(|| PivpError::InitialValue(what.to_string()))
        };
        let mut out = Vec::with_capacity(self.var_defs.len());
        for (vi, def) in self.var_defs.iter().enumerate() {
            let val = match def {
                VarDef::BaseVar(i) => ExactVal::rational(base[*i].clone()),
                VarDef::PiConst => ExactVal::PiPoly(vec![BigRational::zero(), BigRational::one()]),
                VarDef::PairSin(a) | VarDef::PairCos(a) => {
                    let mut plain = a.offset.plain.clone();
                    let mut pi_mult = a.offset.pi_part.clone();
                    for (coef, id) in &a.terms {
                        let v = node_rat(*id, &format!("trig arg child of var {vi}"))?;
                        plain += &coef.plain * &v;
                        pi_mult += &coef.pi_part * &v;
                    }
                    ExactVal::Trig {
                        is_sin: matches!(def, VarDef::PairSin(_)),
                        plain,
                        pi_mult,
                    }
                }
                VarDef::Jac { chain, depth } => {
                    // Π_{j≤depth} (1 − (2/5)π·cos_j(0)) as a polynomial in π
                    let mut acc = vec![BigRational::one()];
                    for stage in &self.chains[*chain].chain.stages[..*depth] {
                        let c0 = node_rat(stage.cos, "chain cosine")?;
                        // multiply acc by (1 − (2/5)·c0·π)
                        let lin = [BigRational::one(), rat(-2, 5) * &c0];
                        let mut next = vec![BigRational::zero(); acc.len() + 1];
                        for (i, a) in acc.iter().enumerate() {
                            for (j, l) in lin.iter().enumerate() {
                                let t = a * l;
                                next[i + j] += t;
                            }
                        }
                        acc = next;
                    }
                    ExactVal::PiPoly(acc)
                }
                VarDef::Checkpoint(node) => {
                    ExactVal::rational(node_rat(*node, "checkpoint value")?)
                }
            };
            out.push(val);
        }
        Ok(out)
    }

    /// Initial values for an encoded machine configuration: base point
    /// (0, x0, x0) per the autonomization convention.
    pub fn initial_values(&self, enc: &EncodedConfig) -> Result<Vec<ExactVal>, PivpError> {
        let x = crate::analytic::encoded_to_point(enc);
        let base = vec![
            BigRational::zero(),
            x[0].clone(),
            x[1].clone(),
            x[2].clone(),
            x[0].clone(),
            x[1].clone(),
            x[2].clone(),
        ];
        self.initial_values_at(&base)
    }

    pub fn initial_point(&self, enc: &EncodedConfig, ctx: &Ctx) -> Result<Vec<Real>, PivpError> {
        Ok(self.initial_values(enc)?.iter().map(|v| v.eval(ctx)).collect())
    }

    pub fn initial_point_at(
        &self,
        base: &[BigRational],
        ctx: &Ctx,
    ) -> Result<Vec<Real>, PivpError> {
        Ok(self.initial_values_at(base)?.iter().map(|v| v.eval(ctx)).collect())
    }

    /// Trig-pair variable index pairs (sin, cos), for conservation checks.
    pub fn trig_pairs(&self) -> Vec<(usize, usize)> {
        let mut by_arg: HashMap<&Affine, (Option<usize>, Option<usize>)> = HashMap::new();
        for (i, def) in self.var_defs.iter().enumerate() {
            match def {
                VarDef::PairSin(a) => by_arg.entry(a).or_default().0 = Some(i),
                VarDef::PairCos(a) => by_arg.entry(a).or_default().1 = Some(i),
                _ => {}
            }
        }
        let mut out: Vec<(usize, usize)> = by_arg
            .values()
            .filter_map(|(s, c)| Some(((*s)?, (*c)?)))
            .collect();
        out.sort_unstable();
        out
    }

    /// JSON artifact: field schema plus variable roles and the exact initial
    /// template evaluated for the given base point.
    pub fn to_json_string(&self, enc: Option<&EncodedConfig>) -> String {
        #[derive(serde::Serialize)]
        struct OdeJson {
            machine: Option<String>,
            degree: u32,
            dimension: usize,
            variables: Vec<String>,
            initial_template: Option<Vec<serde_json::Value>>,
            field: serde_json::Value,
        }
        let init = enc.map(|e| {
            self.initial_values(e)
                .expect("template")
                .iter()
                .map(|v| match v {
                    ExactVal::PiPoly(c) => serde_json::json!({
                        "pi_poly": c.iter().map(|q| q.to_string()).collect::<Vec<_>>()
                    }),
                    ExactVal::Trig { is_sin, plain, pi_mult } => serde_json::json!({
                        "trig": {
                            "kind": if *is_sin { "sin" } else { "cos" },
                            "plain": plain.to_string(),
                            "pi_mult": pi_mult.to_string(),
                        }
                    }),
                })
                .collect()
        });
        let j = OdeJson {
            machine: self.machine_name.clone(),
            degree: self.degree,
            dimension: self.dim(),
            variables: self.roles.iter().map(VarRole::label).collect(),
            initial_template: init,
            field: serde_json::from_str(&self.field.to_json_string()).expect("field json"),
        };
        serde_json::to_string_pretty(&j).expect("ode serializes")
    }
}

// ---------------------------------------------------------------------------
// The compiler
// ---------------------------------------------------------------------------

fn affine_label(a: &Affine) -> String {
    let mut s = String::new();
    for (c, id) in &a.terms {
        if !c.plain.is_zero() {
            s.push_str(&format!("{}·n{}", c.plain, id));
        }
        if !c.pi_part.is_zero() {
            s.push_str(&format!("{}π·n{}", c.pi_part, id));
        }
        s.push('+');
    }
    if !a.offset.plain.is_zero() || !a.offset.pi_part.is_zero() {
        s.push_str(&format!("{}+{}π", a.offset.plain, a.offset.pi_part));
    } else if s.ends_with('+') {
        s.pop();
    }
    s
}

struct Compiler<'s> {
    sys: &'s AnalyticSystem,
    nvars: usize,
    pi_var: Option<usize>,
    pair_var: HashMap<Affine, (usize, usize)>,
    jac_var: HashMap<(usize, usize), usize>,
    checkpoint_var: HashMap<NodeId, usize>,
    stage_of: HashMap<NodeId, (usize, usize)>,
    roles: Vec<VarRole>,
    var_defs: Vec<VarDef>,
    rhs: Vec<Option<Polynomial>>,
    skel_memo: HashMap<NodeId, Polynomial>,
    der_memo: HashMap<NodeId, Polynomial>,
}

impl<'s> Compiler<'s> {
    fn new(sys: &'s AnalyticSystem) -> Self {
        Compiler {
            sys,
            nvars: 0,
            pi_var: None,
            pair_var: HashMap::new(),
            jac_var: HashMap::new(),
            checkpoint_var: HashMap::new(),
            stage_of: HashMap::new(),
            roles: Vec::new(),
            var_defs: Vec::new(),
            rhs: Vec::new(),
            skel_memo: HashMap::new(),
            der_memo: HashMap::new(),
        }
    }

    fn allocate(&mut self) {
        let base = self.sys.base_dim;
        for i in 0..base {
            let name = self
                .sys
                .var_names
                .get(i)
                .cloned()
                .unwrap_or_else(|| format!("x{i}"));
            let role = match name.as_str() {
                "omega" => VarRole::Omega,
                "z1a" => VarRole::Z1(0),
                "z1b" => VarRole::Z1(1),
                "z1q" => VarRole::Z1(2),
                "z2a" => VarRole::Z2(0),
                "z2b" => VarRole::Z2(1),
                "z2q" => VarRole::Z2(2),
                _ => VarRole::Base(name),
            };
            self.roles.push(role);
            self.var_defs.push(VarDef::BaseVar(i));
        }
        self.nvars = base;

        // does any trig argument involve π?
        let needs_pi = self.sys.graph.nodes().iter().any(|n| match n {
            Node::Sin(a) | Node::Cos(a) => a.has_pi(),
            _ => false,
        });
        if needs_pi {
            self.pi_var = Some(self.nvars);
            self.roles.push(VarRole::Pi);
            self.var_defs.push(VarDef::PiConst);
            self.nvars += 1;
        }

        // trig pairs in graph order
        for node in self.sys.graph.nodes() {
            if let Node::Sin(a) | Node::Cos(a) = node {
                if !self.pair_var.contains_key(a) {
                    let s = self.nvars;
                    let c = self.nvars + 1;
                    self.nvars += 2;
                    let label = affine_label(a);
                    self.roles.push(VarRole::TrigSin(label.clone()));
                    self.roles.push(VarRole::TrigCos(label));
                    self.var_defs.push(VarDef::PairSin(a.clone()));
                    self.var_defs.push(VarDef::PairCos(a.clone()));
                    self.pair_var.insert(a.clone(), (s, c));
                }
            }
        }

        // chain Jacobians and the stage-output shortcut table
        for (ci, rec) in self.sys.chains.iter().enumerate() {
            for (depth0, stage) in rec.chain.stages.iter().enumerate() {
                let depth = depth0 + 1;
                let v = self.nvars;
                self.nvars += 1;
                self.roles.push(VarRole::ChainJac { chain: rec.label.clone(), depth });
                self.var_defs.push(VarDef::Jac { chain: ci, depth });
                self.jac_var.insert((ci, depth), v);
                self.stage_of.insert(stage.output, (ci, depth));
            }
        }

        for (name, node) in &self.sys.checkpoints {
            if self.checkpoint_var.contains_key(node) {
                continue;
            }
            let v = self.nvars;
            self.nvars += 1;
            self.roles.push(VarRole::Checkpoint(name.clone()));
            self.var_defs.push(VarDef::Checkpoint(*node));
            self.checkpoint_var.insert(*node, v);
        }

        self.rhs = vec![None; self.nvars];
    }

    fn var_poly(&self, v: usize) -> Polynomial {
        Polynomial::var(self.nvars, v)
    }

    fn pirat_poly(&self, c: &PiRat) -> Polynomial {
        let mut p = Polynomial::constant(self.nvars, c.plain.clone());
        if !c.pi_part.is_zero() {
            let pi = self
                .pi_var
                .expect("π coefficient requires the π variable");
            p = p
                .add(&self.var_poly(pi).scale(&c.pi_part))
                .expect("same dim");
        }
        p
    }

    /// Skeleton: the node's value as a polynomial over state variables.
    fn skel(&mut self, id: NodeId) -> Polynomial {
        if let Some(p) = self.skel_memo.get(&id) {
            return p.clone();
        }
        // checkpointed nodes read as their variable
        let p = if let Some(&v) = self.checkpoint_var.get(&id) {
            self.var_poly(v)
        } else {
            self.skel_def(id)
        };
        self.skel_memo.insert(id, p.clone());
        p
    }

    /// Skeleton of the node's definition (not replaced by its own variable).
    fn skel_def(&mut self, id: NodeId) -> Polynomial {
        match self.sys.graph.node(id).clone() {
            Node::Const(q) => Polynomial::constant(self.nvars, q),
            Node::Var(i) => self.var_poly(i),
            Node::Sum { terms, constant } => {
                let mut acc = Polynomial::constant(self.nvars, constant);
                for (c, child) in terms {
                    let s = self.skel(child);
                    acc = acc.add(&s.scale(&c)).expect("dim");
                }
                acc
            }
            Node::Prod(factors) => {
                let mut acc = Polynomial::one(self.nvars);
                for (child, e) in factors {
                    let s = self.skel(child);
                    acc = acc.mul(&s.pow(e)).expect("dim");
                }
                acc
            }
            Node::Sin(a) => {
                let (s, _) = self.pair_var[&a];
                self.var_poly(s)
            }
            Node::Cos(a) => {
                let (_, c) = self.pair_var[&a];
                self.var_poly(c)
            }
        }
    }

    /// Time derivative of a node's value as a polynomial over state
    /// variables. Chain stage outputs short-circuit through their Jacobian
    /// variables; that single rewrite is what keeps downstream derivatives
    /// from re-expanding the whole chain.
    fn der(&mut self, id: NodeId) -> Polynomial {
        if let Some(p) = self.der_memo.get(&id) {
            return p.clone();
        }
        let p = if let Some(&(ci, depth)) = self.stage_of.get(&id) {
            let input = self.sys.chains[ci].chain.input;
            let din = self.der(input);
            let j = self.jac_var[&(ci, depth)];
            din.mul(&self.var_poly(j)).expect("dim")
        } else {
            match self.sys.graph.node(id).clone() {
                Node::Const(_) => Polynomial::zero(self.nvars),
                Node::Var(i) => self
                    .rhs
                    .get(i)
                    .and_then(|o| o.clone())
                    .expect("base RHS computed before derivatives"),
                Node::Sum { terms, constant: _ } => {
                    let mut acc = Polynomial::zero(self.nvars);
                    for (c, child) in terms {
                        let d = self.der(child);
                        acc = acc.add(&d.scale(&c)).expect("dim");
                    }
                    acc
                }
                Node::Prod(factors) => {
                    let mut acc = Polynomial::zero(self.nvars);
                    for (i, (child, e)) in factors.iter().enumerate() {
                        let mut partial = Polynomial::constant(
                            self.nvars,
                            BigRational::from_integer(BigInt::from(*e)),
                        );
                        let s = self.skel(*child);
                        partial = partial.mul(&s.pow(e - 1)).expect("dim");
                        for (j, (other, eo)) in factors.iter().enumerate() {
                            if i == j {
                                continue;
                            }
                            let so = self.skel(*other);
                            partial = partial.mul(&so.pow(*eo)).expect("dim");
                        }
                        let d = self.der(*child);
                        acc = acc.add(&partial.mul(&d).expect("dim")).expect("dim");
                    }
                    acc
                }
                Node::Sin(a) => {
                    let adot = self.arg_derivative(&a);
                    let (_, c) = self.pair_var[&a];
                    adot.mul(&self.var_poly(c)).expect("dim")
                }
                Node::Cos(a) => {
                    let adot = self.arg_derivative(&a);
                    let (s, _) = self.pair_var[&a];
                    adot.mul(&self.var_poly(s)).expect("dim").neg()
                }
            }
        };
        self.der_memo.insert(id, p.clone());
        p
    }

    fn arg_derivative(&mut self, a: &Affine) -> Polynomial {
        let mut acc = Polynomial::zero(self.nvars);
        for (coef, child) in &a.terms {
            let cp = self.pirat_poly(coef);
            let d = self.der(*child);
            acc = acc.add(&cp.mul(&d).expect("dim")).expect("dim");
        }
        acc
    }

    fn compile(mut self, machine_name: Option<String>) -> Result<AutonomousPolyODE, PivpError> {
        self.allocate();

        // 1. base right-hand sides (skeletons only)
        for i in 0..self.sys.base_dim {
            let p = self.skel(self.sys.rhs[i]);
            self.rhs[i] = Some(p);
        }
        if let Some(p) = self.pi_var {
            self.rhs[p] = Some(Polynomial::zero(self.nvars));
        }

        // 2. chain pairs and Jacobians, stage by stage
        for (ci, rec) in self.sys.chains.iter().enumerate() {
            let input = rec.chain.input;
            let stages = rec.chain.stages.clone();
            for (depth0, stage) in stages.iter().enumerate() {
                let depth = depth0 + 1;
                // pair for the stage argument 2π·stage.input
                let arg = match self.sys.graph.node(stage.sin) {
                    Node::Sin(a) => a.clone(),
                    _ => unreachable!("stage sin node"),
                };
                let (sv, cv) = self.pair_var[&arg];
                if self.rhs[sv].is_none() {
                    // Ȧ = 2π·der(stage input) = 2·p·der(input)·J_{depth−1}
                    let din = self.der(input);
                    let mut adot = din
                        .mul(&self.pirat_poly(&PiRat::pi_times(rat_i(2))))
                        .expect("dim");
                    if depth >= 2 {
                        let jprev = self.jac_var[&(ci, depth - 1)];
                        adot = adot.mul(&self.var_poly(jprev)).expect("dim");
                    }
                    self.rhs[sv] = Some(adot.mul(&self.var_poly(cv)).expect("dim"));
                    self.rhs[cv] = Some(adot.mul(&self.var_poly(sv)).expect("dim").neg());
                }
                // J_depth' = Σ_{j≤depth} dB_j · J_{j−1} · Π_{l=j+1..depth} B_l
                // with B_l = 1 − (2/5)π·cos_l and dB_j = −(2/5)π·cos_j'
                let jv = self.jac_var[&(ci, depth)];
                let mut acc = Polynomial::zero(self.nvars);
                for j in 1..=depth {
                    let stage_j = &stages[j - 1];
                    let arg_j = match self.sys.graph.node(stage_j.sin) {
                        Node::Sin(a) => a.clone(),
                        _ => unreachable!(),
                    };
                    let (_, cv_j) = self.pair_var[&arg_j];
                    let cdot = self.rhs[cv_j].clone().expect("pair RHS in stage order");
                    let mut term = cdot
                        .mul(&self.pirat_poly(&PiRat::pi_times(rat(-2, 5))))
                        .expect("dim");
                    if j >= 2 {
                        let jprev = self.jac_var[&(ci, j - 1)];
                        term = term.mul(&self.var_poly(jprev)).expect("dim");
                    }
                    for l in (j + 1)..=depth {
                        let stage_l = &stages[l - 1];
                        let arg_l = match self.sys.graph.node(stage_l.sin) {
                            Node::Sin(a) => a.clone(),
                            _ => unreachable!(),
                        };
                        let (_, cv_l) = self.pair_var[&arg_l];
                        let b = Polynomial::one(self.nvars)
                            .sub(
                                &self
                                    .var_poly(cv_l)
                                    .mul(&self.pirat_poly(&PiRat::pi_times(rat(2, 5))))
                                    .expect("dim"),
                            )
                            .expect("dim");
                        term = term.mul(&b).expect("dim");
                    }
                    acc = acc.add(&term).expect("dim");
                }
                self.rhs[jv] = Some(acc);
            }
        }

        // 3. remaining trig pairs (kernel, parity, clock)
        let pairs: Vec<(Affine, (usize, usize))> = {
            let mut v: Vec<_> = self.pair_var.iter().map(|(a, p)| (a.clone(), *p)).collect();
            v.sort_by_key(|(_, (s, _))| *s);
            v
        };
        for (arg, (sv, cv)) in pairs {
            if self.rhs[sv].is_some() {
                continue;
            }
            let adot = self.arg_derivative(&arg);
            self.rhs[sv] = Some(adot.mul(&self.var_poly(cv)).expect("dim"));
            self.rhs[cv] = Some(adot.mul(&self.var_poly(sv)).expect("dim").neg());
        }

        // 4. checkpoints
        let checkpoint_nodes: Vec<(NodeId, usize)> = {
            let mut v: Vec<_> = self.checkpoint_var.iter().map(|(n, i)| (*n, *i)).collect();
            v.sort_by_key(|(_, i)| *i);
            v
        };
        for (node, var) in checkpoint_nodes {
            let p = self.der(node);
            self.rhs[var] = Some(p);
        }

        // 5. dead-variable elimination from the base closure
        let rhs: Vec<Polynomial> = self
            .rhs
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.unwrap_or_else(|| panic!("RHS missing for var {i}")))
            .collect();
        let mut live = vec![false; self.nvars];
        let mut stack: Vec<usize> = (0..self.sys.base_dim).collect();
        while let Some(v) = stack.pop() {
            if live[v] {
                continue;
            }
            live[v] = true;
            for (m, _) in rhs[v].terms() {
                for (w, &e) in m.0.iter().enumerate() {
                    if e > 0 && !live[w] {
                        stack.push(w);
                    }
                }
            }
        }
        let keep: Vec<usize> = (0..self.nvars).filter(|&v| live[v]).collect();
        let remap: HashMap<usize, usize> =
            keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let project = |p: &Polynomial| -> Polynomial {
            let mut out = Polynomial::zero(keep.len());
            for (m, c) in p.terms() {
                let mut e = vec![0u32; keep.len()];
                for (w, &exp) in m.0.iter().enumerate() {
                    if exp > 0 {
                        e[remap[&w]] = exp;
                    }
                }
                out.add_term(crate::poly::Monomial(e), c.clone());
            }
            out
        };
        let components: Vec<Polynomial> = keep.iter().map(|&v| project(&rhs[v])).collect();
        let roles: Vec<VarRole> = keep.iter().map(|&v| self.roles[v].clone()).collect();
        let var_defs: Vec<VarDef> = keep.iter().map(|&v| self.var_defs[v].clone()).collect();
        let field = PolyVectorField::new(components)?;
        let degree = field.degree();

        Ok(AutonomousPolyODE {
            machine_name,
            field,
            roles,
            degree,
            graph: self.sys.graph.clone(),
            base_dim: self.sys.base_dim,
            chains: self.sys.chains.clone(),
            var_defs,
        })
    }
}

/// Compiles an analytic system into an autonomous polynomial field.
pub fn pivp_compile(sys: &AnalyticSystem) -> Result<AutonomousPolyODE, PivpError> {
    Compiler::new(sys).compile(None)
}

/// Autonomizes a clocked system: ω (already the first coordinate, ω' = 1)
/// plus the polynomial closure of every analytic node.
pub fn autonomize(clocked: &ClockedSystem) -> Result<AutonomousPolyODE, PivpError> {
    Compiler::new(&clocked.system).compile(Some(clocked.machine.name.clone()))
}

// ---------------------------------------------------------------------------
// Halting region
// ---------------------------------------------------------------------------

/// The open halting region U_{t*} = V × Uε^{t*} × ℝ^rest: clock windows
/// ⋃(i, i+δV) in ω and an ε-tube (∞-norm) around the admissible halting
/// encodings whose window −k..k matches t*.
#[derive(Debug, Clone)]
pub struct RegionSpec {
    pub delta_v: BigRational,
    pub epsilon: BigRational,
    pub k: usize,
    pub t_star: Vec<u8>,
    pub machine: String,
    pub q_halt: u32,
    pub k0: usize,
}

pub fn build_halting_region(
    machine: &TuringMachine,
    t_star: &[u8],
    k: usize,
    epsilon: &BigRational,
    delta_v: &BigRational,
    k0: usize,
) -> Result<RegionSpec, PivpError> {
    if t_star.len() != 2 * k + 1 {
        return Err(PivpError::Region(format!(
            "t_star length {} != 2k+1 = {}",
            t_star.len(),
            2 * k + 1
        )));
    }
    if k > k0 {
        return Err(PivpError::Region(format!("k = {k} exceeds k0 = {k0}")));
    }
    let two_eps = epsilon * rat_i(2);
    if two_eps >= BigRational::one() || epsilon <= &BigRational::zero() {
        return Err(PivpError::Region(
            "need 0 < 2ε < 1: distinct encodings sit at distance ≥ 1".into(),
        ));
    }
    if delta_v <= &BigRational::zero() || delta_v > &rat(1, 2) {
        return Err(PivpError::Region("need 0 < δV ≤ 1/2".into()));
    }
    if t_star.iter().any(|&s| s >= crate::tm::ALPHABET) {
        return Err(PivpError::Region("t_star symbols must be 0..9".into()));
    }
    Ok(RegionSpec {
        delta_v: delta_v.clone(),
        epsilon: epsilon.clone(),
        k,
        t_star: t_star.to_vec(),
        machine: machine.name.clone(),
        q_halt: machine.q_halt(),
        k0,
    })
}

impl RegionSpec {
    /// Low digits of y1 pinned by t*: t*_0..t*_k; and of y2: t*_{−1}..t*_{−k}.
    fn pinned(&self) -> (BigInt, BigInt, BigInt, BigInt) {
        let mut y1_low = BigInt::zero();
        let mut y2_low = BigInt::zero();
        for i in (0..=self.k).rev() {
            y1_low = y1_low * 10 + BigInt::from(self.t_star[self.k + i]);
        }
        for i in (1..=self.k).rev() {
            y2_low = y2_low * 10 + BigInt::from(self.t_star[self.k - i]);
        }
        let m1 = BigInt::from(10u32).pow(self.k as u32 + 1);
        let m2 = BigInt::from(10u32).pow(self.k as u32);
        (y1_low, y2_low, m1, m2)
    }

    /// ∞-distance from a scalar to the admissible arithmetic progression
    /// low + m·modulus with 0 ≤ m < count.
    fn progression_distance(ctx: &Ctx, z: &Real, low: &BigInt, modulus: &BigInt, count: &BigInt) -> Real {
        let low_r = ctx.from_bigint(low);
        let mod_r = ctx.from_bigint(modulus);
        let ratio = (z.clone() - &low_r) / &mod_r;
        let mut m = crate::scalar::round_to_bigint(&ratio);
        if m.is_negative() {
            m = BigInt::zero();
        }
        let max_m = count - BigInt::one();
        if m > max_m {
            m = max_m;
        }
        let nearest = low_r + ctx.from_bigint(&m) * mod_r;
        crate::scalar::abs(&(z.clone() - nearest))
    }

    /// Signed margin: negative inside, zero exactly on the topological
    /// boundary, max(clock-window distance, tube distance), 1-Lipschitz in
    /// the ∞-norm.
    pub fn margin(&self, ctx: &Ctx, omega: &Real, z1: &[Real; 3]) -> Real {
        use dashu_base::Sign;
        // clock-window component over ⋃_{i≥0} (i, i+δV)
        let dv = ctx.from_rat(&self.delta_v);
        let m_omega = if omega.sign() == Sign::Negative {
            -omega.clone()
        } else {
            let fl = omega.floor();
            let f = omega.clone() - fl;
            if f < dv {
                // inside (subject to f > 0): −min(f, δV − f)
                let a = f.clone();
                let b = dv.clone() - &f;
                -(if a < b { a } else { b })
            } else {
                let a = f.clone() - dv;
                let b = ctx.one() - &f;
                if a < b {
                    a
                } else {
                    b
                }
            }
        };
        // tube component: per-coordinate distance to the admissible set
        let (y1_low, y2_low, m1, m2) = self.pinned();
        let count1 = BigInt::from(10u32).pow((self.k0 - self.k) as u32);
        let count2 = if self.k0 >= self.k {
            BigInt::from(10u32).pow((self.k0 - self.k) as u32)
        } else {
            BigInt::one()
        };
        let d1 = Self::progression_distance(ctx, &z1[0], &y1_low, &m1, &count1);
        let d2 = Self::progression_distance(ctx, &z1[1], &y2_low, &m2, &count2);
        let dq = crate::scalar::abs(&(z1[2].clone() - ctx.int(self.q_halt as i64)));
        let mut tube = d1;
        if d2 > tube {
            tube = d2;
        }
        if dq > tube {
            tube = dq;
        }
        let m_tube = tube - ctx.from_rat(&self.epsilon);
        if m_omega > m_tube {
            m_omega
        } else {
            m_tube
        }
    }

    /// Membership predicate (margin < 0).
    pub fn contains(&self, ctx: &Ctx, omega: &Real, z1: &[Real; 3]) -> bool {
        use dashu_base::Sign;
        self.margin(ctx, omega, z1).sign() == Sign::Negative
    }

    /// Brute-force membership for tests: enumerate all admissible points.
    pub fn contains_by_enumeration(&self, ctx: &Ctx, omega: &Real, z1: &[Real; 3]) -> bool {
        use dashu_base::Sign;
        let dv = ctx.from_rat(&self.delta_v);
        let omega_in = if omega.sign() == Sign::Negative {
            false
        } else {
            let f = omega.clone() - omega.floor();
            f > ctx.zero() && f < dv
        };
        if !omega_in {
            return false;
        }
        let (y1_low, y2_low, m1, m2) = self.pinned();
        let count: i64 = 10i64.pow((self.k0 - self.k) as u32);
        let eps = ctx.from_rat(&self.epsilon);
        for a in 0..count {
            for b in 0..count {
                let p1 = ctx.from_bigint(&(&y1_low + &m1 * BigInt::from(a)));
                let p2 = ctx.from_bigint(&(&y2_low + &m2 * BigInt::from(b)));
                let pq = ctx.int(self.q_halt as i64);
                let d = [
                    crate::scalar::abs(&(z1[0].clone() - p1)),
                    crate::scalar::abs(&(z1[1].clone() - p2)),
                    crate::scalar::abs(&(z1[2].clone() - pq)),
                ];
                let dmax = d.iter().cloned().reduce(|x, y| if x > y { x } else { y }).unwrap();
                if dmax < eps {
                    return true;
                }
            }
        }
        false
    }

    pub fn to_json_string(&self) -> String {
        #[derive(serde::Serialize)]
        struct RegionJson<'a> {
            delta_v: String,
            epsilon: String,
            k: usize,
            t_star: &'a [u8],
            machine: &'a str,
            q_halt: u32,
            k0: usize,
        }
        serde_json::to_string_pretty(&RegionJson {
            delta_v: self.delta_v.to_string(),
            epsilon: self.epsilon.to_string(),
            k: self.k,
            t_star: &self.t_star,
            machine: &self.machine,
            q_halt: self.q_halt,
            k0: self.k0,
        })
        .expect("region serializes")
    }
}
