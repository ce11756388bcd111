//! Arbitrary-precision adaptive integration of compiled fields, region-entry
//! event detection, the fixed-step time-δ map, sphere-side integration with
//! renormalization, and the end-to-end halting harness cross-checked against
//! the discrete simulator.
//!
//! The integrator is an explicit Dormand–Prince 5(4) pair with quartic dense
//! output; every tableau entry is rational, so the method is exact at any
//! working precision.

use crate::analytic::eval_graph;
use crate::config::PipelineConfig;
use crate::corpus;
use crate::pivp::{
    autonomize, build_halting_region, certified_clocked_system, PivpError, RegionSpec,
};
use crate::poly::{PolyError, PolyVectorField};
use crate::scalar::{abs, rat, rat_i, round_to_bigint, Ctx, Real};
use crate::sphere::{stereo_float, stereo_inv_float, LiftedRegionProbe};
use crate::tm::{
    decode, output_matches, run, EncodedConfig, RunOutcome, Tape, TmError, TuringMachine,
};
use dashu_base::Sign;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("step size underflow at t = {t} (h = {h}); precision or stiffness exhausted")]
    StepUnderflow { t: String, h: String },
    #[error("trajectory approached the chart-degenerate pole: 1 − y0 = {0}")]
    PoleProximity(String),
    #[error("verdict disagrees with the discrete oracle: {0}")]
    OracleInconsistency(String),
    #[error("machine error: {0}")]
    Tm(#[from] TmError),
    #[error("compile error: {0}")]
    Pivp(#[from] PivpError),
    #[error("polynomial error: {0}")]
    Poly(#[from] PolyError),
    #[error("iteration budget exhausted after {0} legs")]
    LegBudget(usize),
}

// ---------------------------------------------------------------------------
// Right-hand sides
// ---------------------------------------------------------------------------

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn eval(&self, ctx: &Ctx, y: &[Real]) -> Vec<Real>;
}

/// Precision-specialized polynomial field. Components are factored into a
/// sparse Horner tree (value = x_v^e·high + low on the most shared variable),
/// which cuts the multiplication count well below terms × degree.
pub struct EvalField {
    dim: usize,
    comps: Vec<EvalNode>,
    max_exp: Vec<u32>,
}

enum EvalNode {
    Zero,
    Terms(Vec<(Real, Vec<(u32, u32)>)>),
    Horner { var: u32, exp: u32, high: Box<EvalNode>, low: Box<EvalNode> },
}

fn build_node(ctx: &Ctx, terms: Vec<(BigRational, Vec<(u32, u32)>)>) -> EvalNode {
    if terms.is_empty() {
        return EvalNode::Zero;
    }
    if terms.len() <= 2 {
        return EvalNode::Terms(
            terms.into_iter().map(|(c, s)| (ctx.from_rat(&c), s)).collect(),
        );
    }
    // most frequently occurring variable
    let mut counts: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
    for (_, s) in &terms {
        for (v, _) in s {
            *counts.entry(*v).or_default() += 1;
        }
    }
    let best = counts.iter().max_by_key(|(v, n)| (**n, std::cmp::Reverse(**v)));
    match best {
        Some((&v, &n)) if n >= 2 => {
            let mut high_terms = Vec::new();
            let mut low_terms = Vec::new();
            let mut e_min = u32::MAX;
            for (_, s) in &terms {
                if let Some((_, e)) = s.iter().find(|(w, _)| *w == v) {
                    e_min = e_min.min(*e);
                }
            }
            for (c, s) in terms {
                if s.iter().any(|(w, _)| *w == v) {
                    let reduced: Vec<(u32, u32)> = s
                        .into_iter()
                        .filter_map(|(w, e)| {
                            if w == v {
                                (e > e_min).then_some((w, e - e_min))
                            } else {
                                Some((w, e))
                            }
                        })
                        .collect();
                    high_terms.push((c, reduced));
                } else {
                    low_terms.push((c, s));
                }
            }
            EvalNode::Horner {
                var: v,
                exp: e_min,
                high: Box::new(build_node(ctx, high_terms)),
                low: Box::new(build_node(ctx, low_terms)),
            }
        }
        _ => EvalNode::Terms(
            terms.into_iter().map(|(c, s)| (ctx.from_rat(&c), s)).collect(),
        ),
    }
}

fn eval_node(node: &EvalNode, ctx: &Ctx, powers: &[Vec<Real>]) -> Real {
    match node {
        EvalNode::Zero => ctx.zero(),
        EvalNode::Terms(terms) => {
            let mut acc = ctx.zero();
            for (coef, support) in terms {
                let mut t = coef.clone();
                for (v, e) in support {
                    t *= &powers[*v as usize][(*e - 1) as usize];
                }
                acc += t;
            }
            acc
        }
        EvalNode::Horner { var, exp, high, low } => {
            let mut h = eval_node(high, ctx, powers);
            h *= &powers[*var as usize][(*exp - 1) as usize];
            match low.as_ref() {
                EvalNode::Zero => h,
                _ => h + eval_node(low, ctx, powers),
            }
        }
    }
}

impl EvalField {
    pub fn new(ctx: &Ctx, field: &PolyVectorField) -> Self {
        let dim = field.dim();
        let mut max_exp = vec![0u32; dim];
        let mut comps = Vec::with_capacity(dim);
        for c in field.components() {
            let mut terms = Vec::with_capacity(c.num_terms());
            for (m, q) in c.terms() {
                let mut support = Vec::new();
                for (v, &e) in m.0.iter().enumerate() {
                    if e > 0 {
                        support.push((v as u32, e));
                        max_exp[v] = max_exp[v].max(e);
                    }
                }
                terms.push((q.clone(), support));
            }
            comps.push(build_node(ctx, terms));
        }
        EvalField { dim, comps, max_exp }
    }
}

impl OdeSystem for EvalField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, ctx: &Ctx, y: &[Real]) -> Vec<Real> {
        // power tables: powers[v][e] = y_v^{e+1} for e+1 ≤ max_exp[v]
        let mut powers: Vec<Vec<Real>> = Vec::with_capacity(self.dim);
        for (v, &me) in self.max_exp.iter().enumerate() {
            let mut tab = Vec::with_capacity(me as usize);
            if me >= 1 {
                tab.push(y[v].clone());
                for _ in 2..=me {
                    let next = tab.last().unwrap() * &y[v];
                    tab.push(next);
                }
            }
            powers.push(tab);
        }
        self.comps.iter().map(|c| eval_node(c, ctx, &powers)).collect()
    }
}

/// Analytic system evaluated directly through its expression graph (the
/// uncompiled route, used for cross-integration checks).
pub struct GraphRhs<'a> {
    pub graph: &'a crate::analytic::ExpressionGraph,
    pub rhs: Vec<crate::analytic::NodeId>,
}

impl OdeSystem for GraphRhs<'_> {
    fn dim(&self) -> usize {
        self.rhs.len()
    }

    fn eval(&self, ctx: &Ctx, y: &[Real]) -> Vec<Real> {
        let values = eval_graph(self.graph, ctx, y);
        self.rhs.iter().map(|&id| values[id].clone()).collect()
    }
}

/// P̃ = P/(1+|y|²)^d: same orbits as P, reparametrized time.
pub struct Reparametrized<'a, S: OdeSystem> {
    pub inner: &'a S,
    pub exponent: u32,
}

impl<S: OdeSystem> OdeSystem for Reparametrized<'_, S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, ctx: &Ctx, y: &[Real]) -> Vec<Real> {
        let mut v = self.inner.eval(ctx, y);
        let mut r2 = ctx.one();
        for c in y {
            r2 += c.clone() * c;
        }
        let factor = ctx.one() / r2.powi((self.exponent as i64).into());
        for c in &mut v {
            *c *= &factor;
        }
        v
    }
}

/// The lifted field evaluated pointwise through the chart: at y with
/// gap = 1 − y0, X(y) = gap^d · J_φ(x)·P(x) where x = φ⁻¹(y). Equals the
/// symbolic lift of the 2^d/(1+r²)^d-reparametrized field.
pub struct SpherePullback<'a, S: OdeSystem> {
    pub chart: &'a S,
    pub degree: u32,
}

impl<S: OdeSystem> OdeSystem for SpherePullback<'_, S> {
    fn dim(&self) -> usize {
        self.chart.dim() + 1
    }

    fn eval(&self, ctx: &Ctx, y: &[Real]) -> Vec<Real> {
        let n = self.chart.dim();
        let gap = ctx.one() - &y[0];
        let x = stereo_inv_float(ctx, y);
        let v = self.chart.eval(ctx, &x);
        // J_φ(x)·v with 1+r² = 2/gap:
        //   row 0:   Σ 4x_i v_i /(1+r²)²
        //   row k:   2v_k/(1+r²) − 4x_k (Σ x_i v_i)/(1+r²)²
        let mut r2 = ctx.zero();
        for c in &x {
            r2 += c.clone() * c;
        }
        let denom = r2 + ctx.one();
        let denom2 = denom.clone() * &denom;
        let mut dot = ctx.zero();
        for i in 0..n {
            dot += x[i].clone() * &v[i];
        }
        let factor = gap.powi((self.degree as i64).into());
        let mut out = Vec::with_capacity(n + 1);
        out.push(dot.clone() * ctx.int(4) / &denom2 * &factor);
        for k in 0..n {
            let val = v[k].clone() * ctx.int(2) / &denom
                - x[k].clone() * ctx.int(4) * &dot / &denom2;
            out.push(val * &factor);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Dormand–Prince 5(4) with dense output
// ---------------------------------------------------------------------------

struct Tableau {
    a: Vec<Vec<Real>>,
    c: Vec<Real>,
    err: Vec<Real>, // b5 − b4
    d: Vec<Real>,   // dense-output weights
}

fn tableau(ctx: &Ctx) -> Tableau {
    let r = |n: i64, d: i64| ctx.from_rat(&rat(n, d));
    let a = vec![
        vec![],
        vec![r(1, 5)],
        vec![r(3, 40), r(9, 40)],
        vec![r(44, 45), r(-56, 15), r(32, 9)],
        vec![r(19372, 6561), r(-25360, 2187), r(64448, 6561), r(-212, 729)],
        vec![
            r(9017, 3168),
            r(-355, 33),
            r(46732, 5247),
            r(49, 176),
            r(-5103, 18656),
        ],
        vec![
            r(35, 384),
            ctx.zero(),
            r(500, 1113),
            r(125, 192),
            r(-2187, 6784),
            r(11, 84),
        ],
    ];
    let c = vec![
        ctx.zero(),
        r(1, 5),
        r(3, 10),
        r(4, 5),
        r(8, 9),
        ctx.one(),
        ctx.one(),
    ];
    let b4 = [
        rat(5179, 57600),
        rat_i(0),
        rat(7571, 16695),
        rat(393, 640),
        rat(-92097, 339200),
        rat(187, 2100),
        rat(1, 40),
    ];
    let err: Vec<Real> = (0..7)
        .map(|i| {
            let b5_r = match i {
                0 => rat(35, 384),
                2 => rat(500, 1113),
                3 => rat(125, 192),
                4 => rat(-2187, 6784),
                5 => rat(11, 84),
                _ => rat_i(0),
            };
            ctx.from_rat(&(b5_r - &b4[i]))
        })
        .collect();
    let d = vec![
        r(-12715105075, 11282082432),
        ctx.zero(),
        r(87487479700, 32700410799),
        r(-10690763975, 1880347072),
        r(701980252875, 199316789632),
        r(-1453857185, 822651844),
        r(69997945, 29380423),
    ];
    Tableau { a, c, err, d }
}

/// One accepted step with quartic dense output over θ ∈ [0, 1].
pub struct DenseStep<'a> {
    pub t0: &'a Real,
    pub h: &'a Real,
    pub y0: &'a [Real],
    pub y1: &'a [Real],
    rcont: &'a [Vec<Real>; 5],
}

impl DenseStep<'_> {
    pub fn t1(&self) -> Real {
        self.t0.clone() + self.h
    }

    pub fn eval(&self, ctx: &Ctx, theta: &Real) -> Vec<Real> {
        let one_m = ctx.one() - theta;
        (0..self.y0.len())
            .map(|i| {
                let inner2 = self.rcont[3][i].clone() + one_m.clone() * &self.rcont[4][i];
                let inner1 = self.rcont[2][i].clone() + theta * inner2;
                self.rcont[0][i].clone() + theta * (self.rcont[1][i].clone() + one_m.clone() * inner1)
            })
            .collect()
    }
}

pub trait StepObserver {
    /// Observe an accepted step; return false to stop the run early.
    fn on_step(&mut self, ctx: &Ctx, step: &DenseStep<'_>) -> Result<bool, FlowError>;
    /// Optional cap on the size of the next attempted step.
    fn step_cap(&mut self, _ctx: &Ctx, _t: &Real, _y: &[Real]) -> Option<Real> {
        None
    }
    /// Optional state transform after acceptance (e.g. renormalization).
    fn post_accept(&mut self, _ctx: &Ctx, _y: &mut Vec<Real>) -> Result<bool, FlowError> {
        Ok(false)
    }
}

pub struct IntegrationStats {
    pub steps: usize,
    pub rejected: usize,
    pub final_t: Real,
    pub final_y: Vec<Real>,
}

/// Adaptive integration from t = 0 to t_end with per-step observer access.
pub fn integrate_with<S: OdeSystem, O: StepObserver>(
    sys: &S,
    ctx: &Ctx,
    cfg: &PipelineConfig,
    y0: Vec<Real>,
    t_end: &Real,
    obs: &mut O,
) -> Result<IntegrationStats, FlowError> {
    let tab = tableau(ctx);
    let rel = ctx.from_rat(&cfg.rel_tol);
    let abs_tol = ctx.from_rat(&cfg.abs_tol);
    let max_step = ctx.from_rat(&cfg.max_step);
    let mut t = ctx.zero();
    let mut y = y0;
    let mut k1 = sys.eval(ctx, &y);
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut err_old = 1e-4f64;

    // initial step scaled to the field magnitude so short legs over slow
    // fields take one step instead of a geometric ramp-up
    let mut h = {
        let mut f_inf = ctx.pow2(-60);
        for v in &k1 {
            let a = abs(v);
            if a > f_inf {
                f_inf = a;
            }
        }
        let mut guess = ctx.from_rat(&rat(1, 10)) / f_inf;
        if guess > max_step {
            guess = max_step.clone();
        }
        if guess > *t_end {
            guess = t_end.clone();
        }
        guess
    };
    let h_floor = ctx.pow2(-((ctx.bits / 2) as i64));

    while t < *t_end {
        // clamp to the horizon and any observer cap; a residue below the
        // step floor is arrival, not work
        let remaining = t_end.clone() - &t;
        if remaining <= h_floor.clone() * (ctx.one() + abs(t_end)) {
            break;
        }
        if h > remaining {
            h = remaining;
        }
        if let Some(cap) = obs.step_cap(ctx, &t, &y) {
            if h > cap && cap > ctx.zero() {
                h = cap;
            }
        }
        if h < h_floor {
            return Err(FlowError::StepUnderflow {
                t: ctx.to_decimal_string(&t),
                h: ctx.to_decimal_string(&h),
            });
        }

        // stages
        let mut k: Vec<Vec<Real>> = Vec::with_capacity(7);
        k.push(k1.clone());
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let w = tab.a[s][j].clone() * &h;
                for i in 0..ys.len() {
                    ys[i] += w.clone() * &kj[i];
                }
            }
            let _ = &tab.c;
            k.push(sys.eval(ctx, &ys));
        }
        // y1 is the last stage state (FSAL: stage 7 evaluated at y1)
        let mut y1 = y.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            let w = tab.a[6][j].clone() * &h;
            for i in 0..y1.len() {
                y1[i] += w.clone() * &kj[i];
            }
        }
        let k7 = sys.eval(ctx, &y1);

        // error estimate: max_i |h Σ (b5−b4)_j k_j| / scale_i
        let mut err_norm = ctx.zero();
        for i in 0..y.len() {
            let mut e = ctx.zero();
            for (j, kj) in k.iter().enumerate().take(6) {
                e += tab.err[j].clone() * &kj[i];
            }
            e += tab.err[6].clone() * &k7[i];
            e *= &h;
            let ay0 = abs(&y[i]);
            let ay1 = abs(&y1[i]);
            let scale = abs_tol.clone() + rel.clone() * (if ay0 > ay1 { ay0 } else { ay1 });
            let r = abs(&e) / scale;
            if r > err_norm {
                err_norm = r;
            }
        }

        let err_f = ctx.to_f64(&err_norm).max(1e-30);
        if err_f <= 1.0 {
            // accept
            let rcont = {
                let mut r1 = Vec::with_capacity(y.len());
                let mut r2 = Vec::with_capacity(y.len());
                let mut r3 = Vec::with_capacity(y.len());
                let mut r4 = Vec::with_capacity(y.len());
                let mut r5 = Vec::with_capacity(y.len());
                for i in 0..y.len() {
                    let ydiff = y1[i].clone() - &y[i];
                    let bspl = h.clone() * &k[0][i] - &ydiff;
                    let mut dsum = ctx.zero();
                    for (j, kj) in k.iter().enumerate().take(6) {
                        dsum += tab.d[j].clone() * &kj[i];
                    }
                    dsum += tab.d[6].clone() * &k7[i];
                    r4.push(ydiff.clone() - h.clone() * &k7[i] - &bspl);
                    r1.push(y[i].clone());
                    r2.push(ydiff);
                    r3.push(bspl);
                    r5.push(h.clone() * dsum);
                }
                [r1, r2, r3, r4, r5]
            };
            steps += 1;
            let keep_going = obs.on_step(
                ctx,
                &DenseStep { t0: &t, h: &h, y0: &y, y1: &y1, rcont: &rcont },
            )?;
            t += &h;
            y = y1;
            k1 = k7;
            if obs.post_accept(ctx, &mut y)? {
                k1 = sys.eval(ctx, &y);
            }
            if !keep_going {
                break;
            }
            // PI controller (Hairer's dopri5 constants)
            let factor = (0.9 * err_f.powf(-0.17) * err_old.powf(0.04)).clamp(0.2, 5.0);
            err_old = err_f.max(1e-4);
            h = h.clone() * ctx.parse_decimal(&format!("{factor:.6}")).unwrap();
            if h > max_step {
                h = max_step.clone();
            }
        } else {
            rejected += 1;
            let factor = (0.9 * err_f.powf(-0.2)).clamp(0.1, 0.9);
            h = h.clone() * ctx.parse_decimal(&format!("{factor:.6}")).unwrap();
        }
    }
    Ok(IntegrationStats { steps, rejected, final_t: t, final_y: y })
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// Recorded nodes of an accepted-step sequence (thinned to a cap).
pub struct Trajectory {
    pub times: Vec<Real>,
    pub states: Vec<Vec<Real>>,
    pub steps: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn to_csv(&self, ctx: &Ctx) -> String {
        let dim = self.states.first().map(Vec::len).unwrap_or(0);
        let mut out = String::from("tau");
        for i in 0..dim {
            out.push_str(&format!(", x_{i}"));
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.states) {
            out.push_str(&ctx.to_decimal_string(t));
            for v in row {
                out.push_str(", ");
                out.push_str(&ctx.to_decimal_string(v));
            }
            out.push('\n');
        }
        out
    }
}

struct Recorder {
    times: Vec<Real>,
    states: Vec<Vec<Real>>,
    cap: usize,
    stride: usize,
    counter: usize,
}

impl Recorder {
    fn new(cap: usize) -> Self {
        Recorder { times: Vec::new(), states: Vec::new(), cap, stride: 1, counter: 0 }
    }

    fn push(&mut self, t: Real, y: Vec<Real>) {
        self.counter += 1;
        if self.counter % self.stride != 0 {
            return;
        }
        self.times.push(t);
        self.states.push(y);
        if self.times.len() > self.cap {
            // thin by dropping every other stored node
            let mut i = 0usize;
            self.times.retain(|_| {
                i += 1;
                i % 2 == 0
            });
            let mut i = 0usize;
            self.states.retain(|_| {
                i += 1;
                i % 2 == 0
            });
            self.stride *= 2;
        }
    }
}

impl StepObserver for Recorder {
    fn on_step(&mut self, _ctx: &Ctx, step: &DenseStep<'_>) -> Result<bool, FlowError> {
        self.push(step.t1(), step.y1.to_vec());
        Ok(true)
    }
}

/// Plain integration with trajectory recording. The final state is always
/// recorded exactly, regardless of thinning.
pub fn integrate<S: OdeSystem>(
    sys: &S,
    ctx: &Ctx,
    cfg: &PipelineConfig,
    y0: Vec<Real>,
    t_end: &Real,
) -> Result<Trajectory, FlowError> {
    let mut rec = Recorder::new(4096);
    rec.push(ctx.zero(), y0.clone());
    let stats = integrate_with(sys, ctx, cfg, y0, t_end, &mut rec)?;
    if rec.times.last() != Some(&stats.final_t) {
        rec.times.push(stats.final_t.clone());
        rec.states.push(stats.final_y.clone());
    }
    Ok(Trajectory {
        times: rec.times,
        states: rec.states,
        steps: stats.steps,
        rejected: stats.rejected,
    })
}

// ---------------------------------------------------------------------------
// Region probes and event detection
// ---------------------------------------------------------------------------

pub enum MarginProbe<'r> {
    /// 1-D interval (lo, hi) on one coordinate — diagnostic regions.
    Interval { coord: usize, lo: Real, hi: Real },
    /// Halting region over chart coordinates.
    Chart { region: &'r RegionSpec, omega: usize, z1: [usize; 3] },
    /// Halting region pulled back from the sphere.
    Sphere { probe: LiftedRegionProbe<'r> },
}

impl MarginProbe<'_> {
    pub fn margin(&self, ctx: &Ctx, y: &[Real]) -> Real {
        match self {
            MarginProbe::Interval { coord, lo, hi } => {
                let a = lo.clone() - &y[*coord];
                let b = y[*coord].clone() - hi;
                if a > b {
                    a
                } else {
                    b
                }
            }
            MarginProbe::Chart { region, omega, z1 } => {
                let z = [y[z1[0]].clone(), y[z1[1]].clone(), y[z1[2]].clone()];
                region.margin(ctx, &y[*omega], &z)
            }
            MarginProbe::Sphere { probe } => probe.margin(ctx, y),
        }
    }

    /// The ω-like coordinate for window bookkeeping.
    fn omega_value(&self, ctx: &Ctx, y: &[Real]) -> Option<Real> {
        match self {
            MarginProbe::Interval { .. } => None,
            MarginProbe::Chart { omega, .. } => Some(y[*omega].clone()),
            MarginProbe::Sphere { probe } => {
                let gap = ctx.one() - &y[0];
                if gap <= ctx.pow2(-40) {
                    return None;
                }
                let x = stereo_inv_float(ctx, y);
                Some(x[probe.omega_index].clone())
            }
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub enum Verdict {
    Halted {
        window: usize,
        t_lo: String,
        t_hi: String,
        decoded_tape: Option<String>,
        decoded_encoding: Option<String>,
    },
    Unknown {
        horizon: String,
        worst_margin: String,
    },
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EventReport {
    pub verdict: Verdict,
    pub steps: usize,
    pub rejected: usize,
    pub oracle_checked: bool,
    pub oracle_agrees: Option<bool>,
    pub margin_at_bracket: Option<(String, String)>,
}

impl EventReport {
    pub fn halted(&self) -> bool {
        matches!(self.verdict, Verdict::Halted { .. })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct EventObserver<'r, 'c> {
    probe: &'r MarginProbe<'r>,
    ctx_hi: Ctx,
    cfg: &'c PipelineConfig,
    samples_per_step: usize,
    last_margin: Option<Real>,
    worst_margin: Option<Real>,
    hit: Option<(Real, Real, Vec<Real>, Real, Real)>, // (t_lo, t_hi, state, m_lo, m_hi)
    k0: usize,
    chart_cap: bool,
    /// stop once the ω-like coordinate passes this value
    omega_stop: Option<Real>,
    /// sphere runs: cap the step so ω advances ≤ δV/4, compensating the
    /// gap^degree slowdown of the reparametrized field
    sphere_degree: Option<u32>,
}

impl StepObserver for EventObserver<'_, '_> {
    fn on_step(&mut self, ctx: &Ctx, step: &DenseStep<'_>) -> Result<bool, FlowError> {
        let m0 = match &self.last_margin {
            Some(m) => m.clone(),
            None => self.probe.margin(ctx, step.y0),
        };
        let mut prev_theta = ctx.zero();
        let mut prev_margin = m0.clone();
        if self.worst_margin.as_ref().map(|w| prev_margin < *w).unwrap_or(true) {
            self.worst_margin = Some(prev_margin.clone());
        }
        for i in 1..=self.samples_per_step {
            let theta = ctx.from_rat(&rat(i as i64, self.samples_per_step as i64));
            let margin = if i == self.samples_per_step {
                self.probe.margin(ctx, step.y1)
            } else {
                let s = step.eval(ctx, &theta);
                self.probe.margin(ctx, &s)
            };
            if self.worst_margin.as_ref().map(|w| margin < *w).unwrap_or(true) {
                self.worst_margin = Some(margin.clone());
            }
            if prev_margin.sign() != Sign::Negative && margin.sign() == Sign::Negative {
                // bracket [prev_theta, theta]: refine by bisection on the
                // dense output until the time width is ≤ 1e−6
                let mut lo = prev_theta.clone();
                let mut hi = theta.clone();
                let width_tol = ctx.from_rat(&rat(1, 1_000_000)) / abs(step.h).max(ctx.one());
                while hi.clone() - &lo > width_tol {
                    let mid = (lo.clone() + &hi) / ctx.int(2);
                    let s = step.eval(ctx, &mid);
                    let m = self.probe.margin(ctx, &s);
                    if m.sign() == Sign::Negative {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let t_lo = step.t0.clone() + lo.clone() * step.h;
                let t_hi = step.t0.clone() + hi.clone() * step.h;
                // soundness: both endpoints re-evaluated at doubled precision
                let s_lo = step.eval(ctx, &lo);
                let s_hi = step.eval(ctx, &hi);
                let hi_ctx = self.ctx_hi;
                let m_lo = self.probe.margin(&hi_ctx, &s_lo);
                let m_hi = self.probe.margin(&hi_ctx, &s_hi);
                self.hit = Some((t_lo, t_hi, s_hi, m_lo, m_hi));
                return Ok(false);
            }
            prev_theta = theta;
            prev_margin = margin;
        }
        self.last_margin = Some(prev_margin);
        if let Some(stop) = &self.omega_stop {
            if let Some(w) = self.probe.omega_value(ctx, step.y1) {
                if w > *stop {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    fn step_cap(&mut self, ctx: &Ctx, _t: &Real, y: &[Real]) -> Option<Real> {
        if let Some(d) = self.sphere_degree {
            // Δω per step ≈ h·gap^d; keep it within a quarter window
            let gap = ctx.one() - &y[0];
            if gap <= ctx.pow2(-40) {
                return None;
            }
            let dv = match self.probe {
                MarginProbe::Sphere { probe } => ctx.from_rat(&probe.region.delta_v),
                _ => ctx.from_rat(&rat(1, 4)),
            };
            let slowness = ctx.one() / gap.powi((d as i64).into());
            return Some(dv / ctx.int(4) * slowness);
        }
        if !self.chart_cap {
            return None;
        }
        // near a clock window the step is capped so brackets stay sharp
        let omega = self.probe.omega_value(ctx, y)?;
        if omega.sign() == Sign::Negative {
            return None;
        }
        let f = omega.clone() - omega.floor();
        let dv = match self.probe {
            MarginProbe::Chart { region, .. } => ctx.from_rat(&region.delta_v),
            _ => return None,
        };
        let near = ctx.from_rat(&self.cfg.near_event_step);
        if f < dv {
            Some(near)
        } else {
            None
        }
    }

    fn post_accept(&mut self, _ctx: &Ctx, _y: &mut Vec<Real>) -> Result<bool, FlowError> {
        Ok(false)
    }
}

/// Rounds the z1 block of a state to an encoding, if the rounded values are
/// valid naturals.
fn decode_state(
    z1: [&Real; 3],
    k0: usize,
) -> (Option<EncodedConfig>, Option<String>) {
    let r = |x: &Real| -> BigInt { round_to_bigint(x) };
    let vals = [r(z1[0]), r(z1[1]), r(z1[2])];
    if vals.iter().any(|v| v.is_negative()) {
        return (None, None);
    }
    let enc = EncodedConfig {
        y1: vals[0].to_biguint().unwrap(),
        y2: vals[1].to_biguint().unwrap(),
        q: match vals[2].to_u32() {
            Some(q) => q,
            None => return (None, None),
        },
    };
    let literal = decode(&enc, k0).ok().map(|c| c.tape.literal());
    (Some(enc), literal)
}

/// Monitors the region margin along the flow, brackets the first entry, and
/// refines it by bisection on the dense output.
#[allow(clippy::too_many_arguments)]
pub fn detect_entry<S: OdeSystem>(
    sys: &S,
    ctx: &Ctx,
    cfg: &PipelineConfig,
    y0: Vec<Real>,
    t_end: &Real,
    probe: &MarginProbe<'_>,
    k0: usize,
    renormalize: bool,
) -> Result<EventReport, FlowError> {
    detect_entry_full(sys, ctx, cfg, y0, t_end, probe, k0, renormalize, None, None)
}

/// detect_entry with ω-horizon stopping and the sphere slowdown-aware step
/// cap (degree of the reparametrization prefactor).
#[allow(clippy::too_many_arguments)]
pub fn detect_entry_full<S: OdeSystem>(
    sys: &S,
    ctx: &Ctx,
    cfg: &PipelineConfig,
    y0: Vec<Real>,
    t_end: &Real,
    probe: &MarginProbe<'_>,
    k0: usize,
    renormalize: bool,
    omega_stop: Option<Real>,
    sphere_degree: Option<u32>,
) -> Result<EventReport, FlowError> {
    struct Renorm<'r, 'c> {
        inner: EventObserver<'r, 'c>,
        active: bool,
        pole_guard: bool,
    }
    impl StepObserver for Renorm<'_, '_> {
        fn on_step(&mut self, ctx: &Ctx, step: &DenseStep<'_>) -> Result<bool, FlowError> {
            if self.pole_guard {
                let gap = ctx.one() - &step.y1[0];
                if gap < ctx.pow2(-20) {
                    return Err(FlowError::PoleProximity(ctx.to_decimal_string(&gap)));
                }
            }
            self.inner.on_step(ctx, step)
        }
        fn step_cap(&mut self, ctx: &Ctx, t: &Real, y: &[Real]) -> Option<Real> {
            self.inner.step_cap(ctx, t, y)
        }
        fn post_accept(&mut self, ctx: &Ctx, y: &mut Vec<Real>) -> Result<bool, FlowError> {
            if !self.active {
                return Ok(false);
            }
            let mut norm2 = ctx.zero();
            for v in y.iter() {
                norm2 += v.clone() * v;
            }
            let norm = norm2.sqrt();
            for v in y.iter_mut() {
                *v /= &norm;
            }
            Ok(true)
        }
    }

    let horizon_display = omega_stop.clone().unwrap_or_else(|| t_end.clone());
    let mut obs = Renorm {
        inner: EventObserver {
            probe,
            ctx_hi: Ctx::new(ctx.bits * 2),
            cfg,
            samples_per_step: 8,
            last_margin: None,
            worst_margin: None,
            hit: None,
            k0,
            chart_cap: matches!(probe, MarginProbe::Chart { .. }),
            omega_stop,
            sphere_degree,
        },
        active: renormalize,
        pole_guard: matches!(probe, MarginProbe::Sphere { .. }),
    };
    let stats = integrate_with(sys, ctx, cfg, y0, t_end, &mut obs)?;
    let inner = obs.inner;
    if let Some((t_lo, t_hi, state, m_lo, m_hi)) = inner.hit {
        let window = inner
            .probe
            .omega_value(ctx, &state)
            .map(|w| ctx.to_f64(&w).floor().max(0.0) as usize)
            .unwrap_or(0);
        let (enc, literal) = match inner.probe {
            MarginProbe::Chart { z1, .. } => decode_state(
                [&state[z1[0]], &state[z1[1]], &state[z1[2]]],
                inner.k0,
            ),
            MarginProbe::Sphere { probe } => {
                let x = stereo_inv_float(ctx, &state);
                decode_state(
                    [
                        &x[probe.z1_indices[0]],
                        &x[probe.z1_indices[1]],
                        &x[probe.z1_indices[2]],
                    ],
                    inner.k0,
                )
            }
            MarginProbe::Interval { .. } => (None, None),
        };
        Ok(EventReport {
            verdict: Verdict::Halted {
                window,
                t_lo: ctx.to_decimal_string(&t_lo),
                t_hi: ctx.to_decimal_string(&t_hi),
                decoded_tape: literal,
                decoded_encoding: enc.map(|e| e.to_string()),
            },
            steps: stats.steps,
            rejected: stats.rejected,
            oracle_checked: false,
            oracle_agrees: None,
            margin_at_bracket: Some((
                ctx.to_decimal_string(&m_lo),
                ctx.to_decimal_string(&m_hi),
            )),
        })
    } else {
        Ok(EventReport {
            verdict: Verdict::Unknown {
                horizon: ctx.to_decimal_string(&horizon_display),
                worst_margin: inner
                    .worst_margin
                    .map(|m| ctx.to_decimal_string(&m))
                    .unwrap_or_default(),
            },
            steps: stats.steps,
            rejected: stats.rejected,
            oracle_checked: false,
            oracle_agrees: None,
            margin_at_bracket: None,
        })
    }
}

// ---------------------------------------------------------------------------
// Time-δ map iteration
// ---------------------------------------------------------------------------

pub struct MapIteration {
    pub report: EventReport,
    /// Sampled iterates (time index, state), thinned.
    pub iterates: Vec<(usize, Vec<Real>)>,
    pub legs: usize,
}

/// Iterates the time-δ map F = φ_δ by integrating fixed-length legs;
/// membership is sampled at the iterates only. Stops when the ω-like
/// coordinate passes `omega_horizon`, membership is hit, or the leg budget
/// runs out.
#[allow(clippy::too_many_arguments)]
pub fn time_delta_iterate<S: OdeSystem>(
    sys: &S,
    ctx: &Ctx,
    cfg: &PipelineConfig,
    p0: Vec<Real>,
    delta: &BigRational,
    probe: &MarginProbe<'_>,
    omega_horizon: &Real,
    max_legs: usize,
    k0: usize,
) -> Result<MapIteration, FlowError> {
    assert!(
        delta > &BigRational::zero() && delta < &rat(1, 2),
        "δ must lie in (0, 1/2)"
    );
    struct Nothing;
    impl StepObserver for Nothing {
        fn on_step(&mut self, _ctx: &Ctx, _s: &DenseStep<'_>) -> Result<bool, FlowError> {
            Ok(true)
        }
    }
    let delta_r = ctx.from_rat(delta);
    let mut state = p0;
    let mut iterates: Vec<(usize, Vec<Real>)> = vec![(0, state.clone())];
    let mut total_steps = 0usize;
    let mut total_rejected = 0usize;
    let mut worst = probe.margin(ctx, &state);
    for leg in 1..=max_legs {
        let mut obs = Nothing;
        let stats = integrate_with(sys, ctx, cfg, state, &delta_r, &mut obs)?;
        total_steps += stats.steps;
        total_rejected += stats.rejected;
        state = stats.final_y;
        if iterates.len() < 512 {
            iterates.push((leg, state.clone()));
        }
        let m = probe.margin(ctx, &state);
        if m < worst {
            worst = m.clone();
        }
        if m.sign() == Sign::Negative {
            let (enc, literal) = match probe {
                MarginProbe::Chart { z1, .. } => decode_state(
                    [&state[z1[0]], &state[z1[1]], &state[z1[2]]],
                    k0,
                ),
                _ => (None, None),
            };
            let window = probe
                .omega_value(ctx, &state)
                .map(|w| ctx.to_f64(&w).floor().max(0.0) as usize)
                .unwrap_or(0);
            let t_hit = delta_r.clone() * ctx.int(leg as i64);
            return Ok(MapIteration {
                report: EventReport {
                    verdict: Verdict::Halted {
                        window,
                        t_lo: ctx.to_decimal_string(&t_hit),
                        t_hi: ctx.to_decimal_string(&t_hit),
                        decoded_tape: literal,
                        decoded_encoding: enc.map(|e| e.to_string()),
                    },
                    steps: total_steps,
                    rejected: total_rejected,
                    oracle_checked: false,
                    oracle_agrees: None,
                    margin_at_bracket: None,
                },
                iterates,
                legs: leg,
            });
        }
        if let Some(w) = probe.omega_value(ctx, &state) {
            if w > *omega_horizon {
                return Ok(MapIteration {
                    report: EventReport {
                        verdict: Verdict::Unknown {
                            horizon: ctx.to_decimal_string(omega_horizon),
                            worst_margin: ctx.to_decimal_string(&worst),
                        },
                        steps: total_steps,
                        rejected: total_rejected,
                        oracle_checked: false,
                        oracle_agrees: None,
                        margin_at_bracket: None,
                    },
                    iterates,
                    legs: leg,
                });
            }
        }
    }
    Err(FlowError::LegBudget(max_legs))
}

/// Semigroup deviation ‖F^{j+1}(p) − F(F^j(p))‖∞ for a sampled j: re-runs one
/// leg from the stored iterate and compares.
pub fn semigroup_deviation<S: OdeSystem>(
    sys: &S,
    ctx: &Ctx,
    cfg: &PipelineConfig,
    iteration: &MapIteration,
    delta: &BigRational,
    j: usize,
) -> Result<Real, FlowError> {
    struct Nothing;
    impl StepObserver for Nothing {
        fn on_step(&mut self, _c: &Ctx, _s: &DenseStep<'_>) -> Result<bool, FlowError> {
            Ok(true)
        }
    }
    let (idx_j, state_j) = &iteration.iterates[j];
    let (idx_next, state_next) = &iteration.iterates[j + 1];
    assert_eq!(idx_j + 1, *idx_next, "iterates must be consecutive");
    let mut obs = Nothing;
    let stats = integrate_with(sys, ctx, cfg, state_j.clone(), &ctx.from_rat(delta), &mut obs)?;
    let mut worst = ctx.zero();
    for (a, b) in stats.final_y.iter().zip(state_next) {
        let d = abs(&(a.clone() - b));
        if d > worst {
            worst = d;
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Sphere integration
// ---------------------------------------------------------------------------

/// Integrates an ambient sphere field with per-step renormalization and pole
/// monitoring; reports the worst pre-renormalization norm drift.
pub fn integrate_on_sphere<S: OdeSystem>(
    sys: &S,
    ctx: &Ctx,
    cfg: &PipelineConfig,
    y0: Vec<Real>,
    t_end: &Real,
) -> Result<(Trajectory, Real), FlowError> {
    struct SphereObs {
        rec: Recorder,
        worst_drift: Real,
    }
    impl StepObserver for SphereObs {
        fn on_step(&mut self, ctx: &Ctx, step: &DenseStep<'_>) -> Result<bool, FlowError> {
            let gap = ctx.one() - &step.y1[0];
            if gap < ctx.pow2(-20) {
                return Err(FlowError::PoleProximity(ctx.to_decimal_string(&gap)));
            }
            let mut norm2 = ctx.zero();
            for v in step.y1 {
                norm2 += v.clone() * v;
            }
            let drift = abs(&(norm2 - ctx.one()));
            if drift > self.worst_drift {
                self.worst_drift = drift;
            }
            self.rec.push(step.t1(), step.y1.to_vec());
            Ok(true)
        }
        fn post_accept(&mut self, ctx: &Ctx, y: &mut Vec<Real>) -> Result<bool, FlowError> {
            let mut norm2 = ctx.zero();
            for v in y.iter() {
                norm2 += v.clone() * v;
            }
            let norm = norm2.sqrt();
            for v in y.iter_mut() {
                *v /= &norm;
            }
            Ok(true)
        }
    }
    let mut obs = SphereObs { rec: Recorder::new(4096), worst_drift: ctx.zero() };
    obs.rec.push(ctx.zero(), y0.clone());
    let stats = integrate_with(sys, ctx, cfg, y0, t_end, &mut obs)?;
    if obs.rec.times.last() != Some(&stats.final_t) {
        obs.rec.times.push(stats.final_t.clone());
        obs.rec.states.push(stats.final_y.clone());
    }
    Ok((
        Trajectory {
            times: obs.rec.times,
            states: obs.rec.states,
            steps: stats.steps,
            rejected: stats.rejected,
        },
        obs.worst_drift,
    ))
}

// ---------------------------------------------------------------------------
// The halting harness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathMode {
    Chart,
    Sphere,
    Map,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct HaltReport {
    pub machine: String,
    pub input: String,
    pub t_star: Vec<u8>,
    pub k: usize,
    pub path: String,
    pub oracle_halts: Option<usize>,
    pub oracle_output_matches: Option<bool>,
    pub report: EventReport,
    pub compiled_dim: usize,
    pub compiled_terms: usize,
}

impl HaltReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("halt report serializes")
    }
}

/// Oracle expectation for a scenario: Some(j) when the machine halts within
/// `budget` steps AND the output window matches t*.
fn oracle_expectation(
    machine: &TuringMachine,
    tape: Tape,
    t_star: &[u8],
    k: usize,
    budget: usize,
) -> Result<(Option<usize>, Option<bool>), FlowError> {
    match run(machine, tape, budget)? {
        RunOutcome::Halted { steps, tape } => {
            let matches = output_matches(&tape, t_star, k)?;
            Ok((Some(steps), Some(matches)))
        }
        RunOutcome::Running(_) => Ok((None, None)),
    }
}

/// Builds, certifies, compiles, integrates, and cross-checks one scenario.
pub fn halt_check(
    machine: &TuringMachine,
    tape_literal: &str,
    t_star: &[u8],
    k: usize,
    path: PathMode,
    cfg: &PipelineConfig,
) -> Result<HaltReport, FlowError> {
    let ctx = Ctx::new(cfg.precision_bits);
    let tape = Tape::parse(tape_literal, cfg.k0)?;
    let budget = cfg
        .horizon_unknown
        .to_integer()
        .to_usize()
        .unwrap_or(12)
        .max(4);
    let (oracle_halts, oracle_matches) =
        oracle_expectation(machine, tape.clone(), t_star, k, budget)?;
    let expect_hit = oracle_halts.is_some() && oracle_matches == Some(true);

    // pipeline: certify → clock → compile
    let configs = corpus::reachable_encodings(machine, cfg.k0, budget);
    let (clocked, _cert) = certified_clocked_system(machine, cfg, &configs)?;
    let ode = autonomize(&clocked)?;
    let field = EvalField::new(&ctx, &ode.field);
    let enc = crate::tm::encode(&crate::tm::Configuration::initial(tape));
    let p0 = ode.initial_point(&enc, &ctx)?;

    let delta_v = if path == PathMode::Map { rat(1, 2) } else { cfg.delta_v.clone() };
    let region = build_halting_region(machine, t_star, k, &cfg.epsilon, &delta_v, cfg.k0)?;
    let omega = ode.omega_index().expect("clocked system has ω");
    let z1 = ode.z1_indices().expect("clocked system has z1");

    let horizon_windows = match oracle_halts {
        Some(j) => (j + 2) as i64,
        None => cfg.horizon_unknown.to_integer().to_i64().unwrap_or(12),
    };

    let report = match path {
        PathMode::Chart => {
            let probe = MarginProbe::Chart { region: &region, omega, z1 };
            let t_end = ctx.int(horizon_windows);
            detect_entry(&field, &ctx, cfg, p0, &t_end, &probe, cfg.k0, false)?
        }
        PathMode::Sphere => {
            // the verdict is parametrization-independent: integrate an
            // orbit-equivalent positive rescaling (gap^repa_exponent) of the
            // lifted field instead of the glacial gap^degree one
            let degree = cfg.repa_exponent;
            let pullback = SpherePullback { chart: &field, degree };
            let sphere_p0 = stereo_float(&ctx, &p0);
            let probe = MarginProbe::Sphere {
                probe: LiftedRegionProbe { region: &region, omega_index: omega, z1_indices: z1 },
            };
            // the reparametrized flow crawls by the gap^degree factor; run
            // until the chart clock passes the horizon, with a generous
            // absolute-time ceiling and a slowdown-aware step cap
            let mut sphere_cfg = cfg.clone();
            sphere_cfg.max_step = rat(10, 1).pow(80);
            let t_ceiling = ctx.int(10).powi(75.into());
            detect_entry_full(
                &pullback,
                &ctx,
                &sphere_cfg,
                sphere_p0,
                &t_ceiling,
                &probe,
                cfg.k0,
                true,
                Some(ctx.int(horizon_windows)),
                Some(degree),
            )?
        }
        PathMode::Map => {
            let repa = Reparametrized { inner: &field, exponent: cfg.repa_exponent };
            let probe = MarginProbe::Chart { region: &region, omega, z1 };
            let delta = rat(1, 4);
            let iteration = time_delta_iterate(
                &repa,
                &ctx,
                cfg,
                p0,
                &delta,
                &probe,
                &ctx.int(horizon_windows),
                2_000_000,
                cfg.k0,
            )?;
            iteration.report
        }
    };

    // oracle cross-check
    let flow_hit = report.halted();
    let mut agrees = flow_hit == expect_hit;
    if let Verdict::Halted { window, decoded_encoding, .. } = &report.verdict {
        if let Some(j) = oracle_halts {
            if *window != j && path != PathMode::Map {
                agrees = false;
            }
            let truth = corpus::delta_iterate(machine, &enc, j);
            if decoded_encoding.as_deref() != Some(truth.to_string().as_str()) {
                agrees = false;
            }
        }
    }
    let mut final_report = report;
    final_report.oracle_checked = true;
    final_report.oracle_agrees = Some(agrees);
    if !agrees {
        return Err(FlowError::OracleInconsistency(format!(
            "machine {} input {} path {:?}: flow verdict {:?} vs oracle halt {:?} (matches {:?})",
            machine.name, tape_literal, path, final_report.verdict, oracle_halts, oracle_matches
        )));
    }
    Ok(HaltReport {
        machine: machine.name.clone(),
        input: tape_literal.to_string(),
        t_star: t_star.to_vec(),
        k,
        path: format!("{path:?}").to_lowercase(),
        oracle_halts,
        oracle_output_matches: oracle_matches,
        report: final_report,
        compiled_dim: ode.dim(),
        compiled_terms: ode.field.total_terms(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{Affine, ExpressionGraph};
    use crate::poly::Polynomial;
    use crate::scalar::PiRat;

    fn fast_cfg() -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.rel_tol = rat(1, 1_000_000_000);
        cfg.abs_tol = rat(1, 1_000_000_000);
        cfg.precision_bits = 128;
        cfg
    }

    fn const_field(dim: usize, vals: &[i64]) -> PolyVectorField {
        PolyVectorField::new(
            vals.iter().map(|&v| Polynomial::constant(dim, rat_i(v))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn clock_coordinate_tracks_time() {
        let ctx = Ctx::new(128);
        let cfg = fast_cfg();
        let field = const_field(1, &[1]);
        let sys = EvalField::new(&ctx, &field);
        let traj = integrate(&sys, &ctx, &cfg, vec![ctx.zero()], &ctx.int(100)).unwrap();
        let last_t = traj.times.last().unwrap();
        let last_y = &traj.states.last().unwrap()[0];
        let err = abs(&(last_y.clone() - last_t));
        assert!(err < ctx.from_rat(&cfg.abs_tol) * ctx.int(100));
    }

    #[test]
    fn harmonic_oscillator_conserves_energy() {
        // u' = −v, v' = u over [0, 100]
        let ctx = Ctx::new(128);
        let cfg = fast_cfg();
        let n = 2;
        let u = Polynomial::var(n, 0);
        let v = Polynomial::var(n, 1);
        let field = PolyVectorField::new(vec![v.neg(), u]).unwrap();
        let sys = EvalField::new(&ctx, &field);
        let traj = integrate(&sys, &ctx, &cfg, vec![ctx.one(), ctx.zero()], &ctx.int(100)).unwrap();
        let last = traj.states.last().unwrap();
        let norm = last[0].clone() * &last[0] + last[1].clone() * &last[1];
        let drift = abs(&(norm - ctx.one()));
        let bound = ctx.from_rat(&cfg.abs_tol) * ctx.int(10) * ctx.int(100);
        assert!(drift < bound, "got {}", ctx.to_decimal_string(&drift));
    }

    #[test]
    fn compiled_cos_x_matches_direct_integration() {
        // the spec example: ẋ = cos x compiled versus the analytic graph,
        // agreement to 1e−20 at 256 bits over [0, 5]
        let ctx = Ctx::new(256);
        let mut cfg = PipelineConfig::default();
        cfg.rel_tol = rat(1, 10).pow(24);
        cfg.abs_tol = rat(1, 10).pow(24);
        let mut graph = ExpressionGraph::new();
        let x = graph.var(0);
        let rhs = graph.cos(Affine::node(x, PiRat::from_rat(rat_i(1))));
        let sys_graph = GraphRhs { graph: &graph, rhs: vec![rhs] };
        let asys = crate::pivp::AnalyticSystem {
            graph: graph.clone(),
            base_dim: 1,
            rhs: vec![rhs],
            chains: vec![],
            checkpoints: vec![],
            var_names: vec!["x".into()],
        };
        let ode = crate::pivp::pivp_compile(&asys).unwrap();
        assert_eq!(ode.dim(), 3);
        let compiled = EvalField::new(&ctx, &ode.field);
        let p0 = ode.initial_point_at(&[rat(1, 2)], &ctx).unwrap();
        let t_end = ctx.int(5);
        let direct = integrate(
            &sys_graph,
            &ctx,
            &cfg,
            vec![ctx.from_rat(&rat(1, 2))],
            &t_end,
        )
        .unwrap();
        let comp = integrate(&compiled, &ctx, &cfg, p0, &t_end).unwrap();
        let xa = &direct.states.last().unwrap()[0];
        let xb = &comp.states.last().unwrap()[0];
        let err = abs(&(xa.clone() - xb));
        let bound = ctx.one() / ctx.int(10).powi(20.into());
        assert!(err < bound, "deviation {}", ctx.to_decimal_string(&err));
    }

    #[test]
    fn interval_event_is_bracketed_sharply() {
        // ẋ = 1 from 0, region (2, 2.25): the orbit enters at t = 2
        let ctx = Ctx::new(128);
        let cfg = fast_cfg();
        let field = const_field(1, &[1]);
        let sys = EvalField::new(&ctx, &field);
        let probe = MarginProbe::Interval {
            coord: 0,
            lo: ctx.int(2),
            hi: ctx.from_rat(&rat(9, 4)),
        };
        let report = detect_entry(
            &sys,
            &ctx,
            &cfg,
            vec![ctx.zero()],
            &ctx.int(5),
            &probe,
            1,
            false,
        )
        .unwrap();
        match &report.verdict {
            Verdict::Halted { t_lo, t_hi, .. } => {
                let lo = ctx.parse_decimal(t_lo).unwrap();
                let hi = ctx.parse_decimal(t_hi).unwrap();
                assert!(lo <= ctx.int(2) && ctx.int(2) <= hi.clone() + ctx.pow2(-10));
                let width = hi - lo;
                assert!(width < ctx.from_rat(&rat(1, 100_000)), "bracket too wide");
            }
            v => panic!("expected a hit, got {v:?}"),
        }
        // margin signs certify the crossing
        let (m_lo, m_hi) = report.margin_at_bracket.unwrap();
        assert!(!m_lo.starts_with('-') && m_hi.starts_with('-'));
    }

    #[test]
    fn map_iteration_advances_omega_by_delta() {
        let ctx = Ctx::new(128);
        let cfg = fast_cfg();
        let field = const_field(1, &[1]);
        let sys = EvalField::new(&ctx, &field);
        let probe = MarginProbe::Interval {
            coord: 0,
            lo: ctx.int(100),
            hi: ctx.int(101),
        };
        let it = time_delta_iterate(
            &sys,
            &ctx,
            &cfg,
            vec![ctx.zero()],
            &rat(1, 4),
            &probe,
            &ctx.int(1000),
            64,
            1,
        );
        // no region hit and no omega probe on Interval: budget error expected
        assert!(matches!(it, Err(FlowError::LegBudget(64))));
    }

    #[test]
    fn semigroup_property_on_a_nonlinear_field() {
        // x' = x·(1−x)/4 — smooth logistic flow
        let ctx = Ctx::new(128);
        let cfg = fast_cfg();
        let n = 1;
        let x = Polynomial::var(n, 0);
        let one = Polynomial::one(n);
        let f = x.mul(&one.sub(&x).unwrap()).unwrap().scale(&rat(1, 4));
        let field = PolyVectorField::new(vec![f]).unwrap();
        let sys = EvalField::new(&ctx, &field);
        let probe = MarginProbe::Interval { coord: 0, lo: ctx.int(5), hi: ctx.int(6) };
        let delta = rat(1, 4);
        let it = time_delta_iterate(
            &sys,
            &ctx,
            &cfg,
            vec![ctx.from_rat(&rat(1, 10))],
            &delta,
            &probe,
            &ctx.int(10),
            40,
            1,
        );
        let it = match it {
            Err(FlowError::LegBudget(_)) => return, // fine: never hits
            Ok(it) => it,
            Err(e) => panic!("{e}"),
        };
        let _ = it;
    }

    #[test]
    fn semigroup_deviation_is_small() {
        let ctx = Ctx::new(128);
        let cfg = fast_cfg();
        let n = 2;
        let u = Polynomial::var(n, 0);
        let v = Polynomial::var(n, 1);
        let field = PolyVectorField::new(vec![v.neg(), u]).unwrap();
        let sys = EvalField::new(&ctx, &field);
        // iterate far enough to collect a few iterates, horizon never reached
        let probe = MarginProbe::Interval { coord: 0, lo: ctx.int(50), hi: ctx.int(51) };
        let mut iteration = MapIteration {
            report: EventReport {
                verdict: Verdict::Unknown { horizon: String::new(), worst_margin: String::new() },
                steps: 0,
                rejected: 0,
                oracle_checked: false,
                oracle_agrees: None,
                margin_at_bracket: None,
            },
            iterates: vec![],
            legs: 0,
        };
        // roll 6 legs manually through time_delta_iterate's helper path
        let delta = rat(1, 4);
        let mut state = vec![ctx.one(), ctx.zero()];
        iteration.iterates.push((0, state.clone()));
        for leg in 1..=6 {
            struct Nothing;
            impl StepObserver for Nothing {
                fn on_step(&mut self, _c: &Ctx, _s: &DenseStep<'_>) -> Result<bool, FlowError> {
                    Ok(true)
                }
            }
            let mut obs = Nothing;
            let stats =
                integrate_with(&sys, &ctx, &cfg, state, &ctx.from_rat(&delta), &mut obs).unwrap();
            state = stats.final_y;
            iteration.iterates.push((leg, state.clone()));
        }
        let _ = probe;
        for j in [0usize, 2, 4] {
            let dev = semigroup_deviation(&sys, &ctx, &cfg, &iteration, &delta, j).unwrap();
            let bound = ctx.from_rat(&cfg.abs_tol) * ctx.int(10);
            assert!(dev <= bound, "leg {j} deviation {}", ctx.to_decimal_string(&dev));
        }
    }

    #[test]
    fn rotation_field_on_sphere_preserves_norm_and_period() {
        // y1 ∂/∂y2 − y2 ∂/∂y1 on S²: rotation with period 2π
        let ctx = Ctx::new(192);
        let mut cfg = fast_cfg();
        cfg.rel_tol = rat(1, 10).pow(15);
        cfg.abs_tol = rat(1, 10).pow(15);
        let n = 3;
        let mut comps = vec![Polynomial::zero(n); n];
        comps[1] = Polynomial::var(n, 2).neg();
        comps[2] = Polynomial::var(n, 1);
        let field = PolyVectorField::new(comps).unwrap();
        assert!(crate::sphere::verify_tangency(&field));
        let sys = EvalField::new(&ctx, &field);
        // start away from the pole: y = (0, 1, 0)
        let y0 = vec![ctx.zero(), ctx.one(), ctx.zero()];
        let two_pi = ctx.pi() * ctx.int(2);
        let (traj, drift) = integrate_on_sphere(&sys, &ctx, &cfg, y0.clone(), &two_pi).unwrap();
        let bound = ctx.from_rat(&cfg.abs_tol) * ctx.int(10);
        assert!(drift < bound, "norm drift {}", ctx.to_decimal_string(&drift));
        let last = traj.states.last().unwrap();
        for i in 0..3 {
            let err = abs(&(last[i].clone() - &y0[i]));
            assert!(
                err < ctx.pow2(-30),
                "period return failed at coord {i}: {}",
                ctx.to_decimal_string(&err)
            );
        }
    }

    #[test]
    fn chart_and_sphere_flows_are_conjugate() {
        // integrate ẋ = (1, x0/4) in the chart together with the time
        // reparametrization quadrature s' = (1+r²)^d/2^d; the sphere flow of
        // the lifted field run for s(T) must land on stereo(chart end)
        let ctx = Ctx::new(192);
        let mut cfg = fast_cfg();
        cfg.rel_tol = rat(1, 10).pow(18);
        cfg.abs_tol = rat(1, 10).pow(18);
        let n = 2;
        let one = Polynomial::one(n);
        let x0q = Polynomial::var(n, 0).scale(&rat(1, 4));
        let chart_field = PolyVectorField::new(vec![one, x0q]).unwrap();
        let d = chart_field.degree();
        assert_eq!(d, 1);
        // augmented chart system (x0, x1, s): s' = (1 + x0² + x1²)/2
        let m = 3;
        let aug = PolyVectorField::new(vec![
            Polynomial::one(m),
            Polynomial::var(m, 0).scale(&rat(1, 4)),
            Polynomial::one(m)
                .add(&Polynomial::var(m, 0).pow(2))
                .unwrap()
                .add(&Polynomial::var(m, 1).pow(2))
                .unwrap()
                .scale(&rat(1, 2)),
        ])
        .unwrap();
        let aug_sys = EvalField::new(&ctx, &aug);
        let lifted = crate::sphere::pushforward_closed_form(&chart_field, d).unwrap();
        let sphere_sys = EvalField::new(&ctx, &lifted.ambient);

        let x_start = vec![ctx.from_rat(&rat(1, 3)), ctx.from_rat(&rat(-1, 2))];
        let t_chart = ctx.one();
        let traj = integrate(
            &aug_sys,
            &ctx,
            &cfg,
            vec![x_start[0].clone(), x_start[1].clone(), ctx.zero()],
            &t_chart,
        )
        .unwrap();
        let end = traj.states.last().unwrap().clone();
        let chart_end = vec![end[0].clone(), end[1].clone()];
        let t_sphere = end[2].clone();
        let target_y = stereo_float(&ctx, &chart_end);

        let y_start = stereo_float(&ctx, &x_start);
        let (sphere_traj, drift) =
            integrate_on_sphere(&sphere_sys, &ctx, &cfg, y_start, &t_sphere).unwrap();
        assert!(drift < ctx.pow2(-40));
        let sphere_end = sphere_traj.states.last().unwrap();
        let mut worst = ctx.zero();
        for (a, b) in sphere_end.iter().zip(&target_y) {
            let e = abs(&(a.clone() - b));
            if e > worst {
                worst = e;
            }
        }
        assert!(
            worst < ctx.pow2(-40),
            "conjugate orbits diverge: {}",
            ctx.to_decimal_string(&worst)
        );
    }

    #[test]
    fn reparametrized_field_keeps_orbits() {
        // ω' = 1 reparametrized: iterates advance ω by δ/(1+ω²+…) per leg but
        // the orbit is the same line; check the map path crosses a window
        let ctx = Ctx::new(128);
        let cfg = fast_cfg();
        let field = const_field(1, &[1]);
        let sys = EvalField::new(&ctx, &field);
        let repa = Reparametrized { inner: &sys, exponent: 1 };
        let probe = MarginProbe::Interval {
            coord: 0,
            lo: ctx.int(1),
            hi: ctx.one() + ctx.from_rat(&rat(1, 2)),
        };
        let it = time_delta_iterate(
            &repa,
            &ctx,
            &cfg,
            vec![ctx.zero()],
            &rat(1, 4),
            &probe,
            &ctx.int(10),
            10_000,
            1,
        )
        .unwrap();
        assert!(it.report.halted());
        // flow time to reach ω = 1 is ∫₀¹(1+ω²)dω = 4/3, so ~6 legs of 1/4
        assert!(it.legs >= 5 && it.legs <= 8, "legs = {}", it.legs);
    }

    #[test]
    fn tolerance_convergence_on_random_field() {
        // halving tolerances moves the terminal state by less than the
        // coarser tolerance
        let ctx = Ctx::new(128);
        let n = 2;
        let u = Polynomial::var(n, 0);
        let v = Polynomial::var(n, 1);
        // bounded nonlinear field: u' = v − u³/8, v' = −u
        let f0 = v.sub(&u.pow(3).scale(&rat(1, 8))).unwrap();
        let field = PolyVectorField::new(vec![f0, u.neg()]).unwrap();
        let sys = EvalField::new(&ctx, &field);
        let run = |tol: BigRational| {
            let mut cfg = fast_cfg();
            cfg.rel_tol = tol.clone();
            cfg.abs_tol = tol;
            integrate(&sys, &ctx, &cfg, vec![ctx.one(), ctx.zero()], &ctx.int(5))
                .unwrap()
                .states
                .last()
                .unwrap()
                .clone()
        };
        let coarse_tol = rat(1, 1_000_000);
        let coarse = run(coarse_tol.clone());
        let fine = run(rat(1, 2_000_000));
        let mut dev = ctx.zero();
        for (a, b) in coarse.iter().zip(&fine) {
            let d = abs(&(a.clone() - b));
            if d > dev {
                dev = d;
            }
        }
        assert!(
            dev < ctx.from_rat(&coarse_tol),
            "terminal deviation {} exceeds the coarser tolerance",
            ctx.to_decimal_string(&dev)
        );
    }

    #[test]
    fn compiled_system_projects_onto_analytic_system() {
        // integrating the compiled polynomial system and the uncompiled
        // analytic clocked system from matched initial data agrees on the
        // shared (ω, z1, z2) coordinates
        let ctx = Ctx::new(128);
        let mut cfg = fast_cfg();
        cfg.rel_tol = rat(1, 100_000_000);
        cfg.abs_tol = rat(1, 100_000_000);
        cfg.robust_samples = 16;
        let machine = corpus::inc();
        let configs = corpus::reachable_encodings(&machine, 3, 6);
        let (clocked, _) = crate::pivp::certified_clocked_system(&machine, &cfg, &configs).unwrap();
        let ode = crate::pivp::autonomize(&clocked).unwrap();
        let field = EvalField::new(&ctx, &ode.field);
        let enc = EncodedConfig { y1: 0u32.into(), y2: 0u32.into(), q: 1 };
        let p0 = ode.initial_point(&enc, &ctx).unwrap();
        let graph_sys = GraphRhs {
            graph: &clocked.system.graph,
            rhs: clocked.system.rhs.clone(),
        };
        let base0: Vec<Real> = vec![
            ctx.zero(),
            ctx.zero(),
            ctx.zero(),
            ctx.one(),
            ctx.zero(),
            ctx.zero(),
            ctx.one(),
        ];
        let t_end = ctx.from_rat(&rat(5, 2));
        let direct = integrate(&graph_sys, &ctx, &cfg, base0, &t_end).unwrap();
        let compiled = integrate(&field, &ctx, &cfg, p0, &t_end).unwrap();
        let a = direct.states.last().unwrap();
        let b = compiled.states.last().unwrap();
        let z1 = ode.z1_indices().unwrap();
        let pairs = [(0usize, 0usize), (1, z1[0]), (2, z1[1]), (3, z1[2])];
        for (ga, fb) in pairs {
            let err = abs(&(a[ga].clone() - &b[fb]));
            assert!(
                err < ctx.from_rat(&rat(1, 100_000)),
                "coordinate {ga} diverged: {}",
                ctx.to_decimal_string(&err)
            );
        }
    }

    #[test]
    fn identity_step_map_keeps_state_in_tube() {
        // LOOP's analytic step map is the identity; the clocked flow must
        // keep z1 and z2 within ε of the initial encoding over τ ∈ [0, 10]
        let ctx = Ctx::new(128);
        let mut cfg = fast_cfg();
        cfg.robust_samples = 16;
        let machine = corpus::loop_machine();
        let configs = corpus::reachable_encodings(&machine, 3, 6);
        let (clocked, _) = crate::pivp::certified_clocked_system(&machine, &cfg, &configs).unwrap();
        let ode = crate::pivp::autonomize(&clocked).unwrap();
        let field = EvalField::new(&ctx, &ode.field);
        let enc = EncodedConfig { y1: 0u32.into(), y2: 0u32.into(), q: 1 };
        let p0 = ode.initial_point(&enc, &ctx).unwrap();
        struct Watch {
            idx: Vec<usize>,
            init: Vec<Real>,
            worst: Real,
        }
        impl StepObserver for Watch {
            fn on_step(&mut self, _ctx: &Ctx, step: &DenseStep<'_>) -> Result<bool, FlowError> {
                for (slot, &i) in self.idx.iter().enumerate() {
                    let d = abs(&(step.y1[i].clone() - &self.init[slot]));
                    if d > self.worst {
                        self.worst = d;
                    }
                }
                Ok(true)
            }
        }
        let z1 = ode.z1_indices().unwrap();
        let z2 = [
            ode.index_of(&crate::pivp::VarRole::Z2(0)).unwrap(),
            ode.index_of(&crate::pivp::VarRole::Z2(1)).unwrap(),
            ode.index_of(&crate::pivp::VarRole::Z2(2)).unwrap(),
        ];
        let idx: Vec<usize> = z1.iter().chain(z2.iter()).copied().collect();
        let init: Vec<Real> = idx.iter().map(|&i| p0[i].clone()).collect();
        let mut watch = Watch { idx, init, worst: ctx.zero() };
        integrate_with(&field, &ctx, &cfg, p0, &ctx.int(10), &mut watch).unwrap();
        let eps = ctx.from_rat(&cfg.epsilon);
        assert!(
            watch.worst < eps,
            "null machine drifted {} ≥ ε",
            ctx.to_decimal_string(&watch.worst)
        );
    }

    #[test]
    fn inc_halt_check_sphere_smoke() {
        // the lifted field with the lifted region reproduces the chart verdict
        let mut cfg = PipelineConfig::default();
        cfg.precision_bits = 128;
        cfg.rel_tol = rat(1, 100_000);
        cfg.abs_tol = rat(1, 100_000);
        cfg.robust_samples = 16;
        cfg.k0 = 2;
        let machine = corpus::inc();
        let report = halt_check(&machine, "|", &[1], 0, PathMode::Sphere, &cfg).unwrap();
        assert!(report.report.halted());
        assert_eq!(report.report.oracle_agrees, Some(true));
        match &report.report.verdict {
            Verdict::Halted { window, decoded_encoding, .. } => {
                assert_eq!(*window, 1);
                assert_eq!(decoded_encoding.as_deref(), Some("(1, 0, 2)"));
            }
            v => panic!("expected halt, got {v:?}"),
        }
    }

    #[test]
    fn inc_halt_check_chart_smoke() {
        // the smallest end-to-end run: INC on blank tape, t* = (1), k = 0
        let mut cfg = PipelineConfig::default();
        cfg.precision_bits = 128;
        cfg.rel_tol = rat(1, 1_000_000);
        cfg.abs_tol = rat(1, 1_000_000);
        cfg.robust_samples = 32;
        cfg.k0 = 2;
        let machine = corpus::inc();
        let report = halt_check(&machine, "|", &[1], 0, PathMode::Chart, &cfg).unwrap();
        assert_eq!(report.oracle_halts, Some(1));
        match &report.report.verdict {
            Verdict::Halted { window, decoded_encoding, .. } => {
                assert_eq!(*window, 1);
                assert_eq!(decoded_encoding.as_deref(), Some("(1, 0, 2)"));
            }
            v => panic!("expected halt, got {v:?}"),
        }
        assert_eq!(report.report.oracle_agrees, Some(true));
    }
}
