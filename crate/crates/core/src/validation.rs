//! Trajectory- and sample-level checks of Lyapunov implications and asymptotic gains.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::GainFn;
use crate::network::GainMatrix;
use crate::par::{item_rng, Exec};
use crate::sim::biochem::{equilibrium, log_rhs};
use crate::sim::{DisturbanceMode, FeedbackFn, Model, SystemKind, SystemSpec, Trajectory};

pub const TOL_IMPL: f64 = 1e-8;
pub const TOL_TAIL: f64 = 1e-6;
pub const TAIL_FRACTION: f64 = 0.2;
pub const TOL_GAIN: f64 = 0.05;
pub const MIN_TAIL_SAMPLES: usize = 10;

const CHUNK: usize = 1024;
const MAX_STORED_VIOLATIONS: usize = 1000;

/// Positive definite decay rates `ρᵢ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateFn {
    /// `k·s`
    Linear { k: f64 },
    /// Any gain expression.
    Gain { g: GainFn },
    /// `a√(2s)·min{(1 − λ/θ)(1 − e^{−√2s}), (b + 1 − b/θ)(e^{√2s} − 1)/(b + 1 + (b/θ)(e^{√2s} − 1))}`
    BiochemHead { a: f64, lambda: f64, theta: f64, b: f64 },
    /// `(1 − 1/μ)·a√(2s)(1 − e^{−√2s})/(1 + (e^{√2s} − 1)/μ)`
    BiochemLink { a: f64, mu: f64 },
}

impl RateFn {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            RateFn::Linear { k } => k * s,
            RateFn::Gain { g } => g.eval(s),
            RateFn::BiochemHead { a, lambda, theta, b } => {
                let r = (2.0 * s).sqrt();
                let up = (1.0 - lambda / theta) * -(-r).exp_m1();
                let e = r.exp_m1();
                let down = if e.is_infinite() {
                    (b + 1.0 - b / theta) * theta / b
                } else {
                    (b + 1.0 - b / theta) * e / (b + 1.0 + b / theta * e)
                };
                a * r * up.min(down)
            }
            RateFn::BiochemLink { a, mu } => {
                let r = (2.0 * s).sqrt();
                let em = (-r).exp();
                let frac = (1.0 - em) * em / (em + (1.0 - em) / mu);
                (1.0 - 1.0 / mu) * a * r * frac
            }
        }
    }
}

/// Quadratic block functions `Vᵢ(x) = ½‖x_{Bᵢ}‖²` with their rates and gains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSetup {
    /// State indices (0-based) of each block.
    pub blocks: Vec<Vec<usize>>,
    pub rho: Vec<RateFn>,
    pub gains: GainMatrix,
    #[serde(default = "GainFn::zero")]
    pub zeta: GainFn,
}

impl LyapunovSetup {
    /// One block per state coordinate.
    pub fn scalar_blocks(rho: Vec<RateFn>, gains: GainMatrix, zeta: GainFn) -> Self {
        LyapunovSetup {
            blocks: (0..rho.len()).map(|i| vec![i]).collect(),
            rho,
            gains,
            zeta,
        }
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn v(&self, i: usize, x: &[f64]) -> f64 {
        0.5 * self.blocks[i].iter().map(|&j| x[j] * x[j]).sum::<f64>()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let k = self.k();
        if k == 0 || self.rho.len() != k || self.gains.n() != k {
            return Err(Error::Config(format!(
                "lyapunov setup needs matching blocks ({k}), rho ({}) and gains ({})",
                self.rho.len(),
                self.gains.n()
            )));
        }
        if self.blocks.iter().flatten().any(|&j| j >= n) || self.blocks.iter().any(Vec::is_empty) {
            return Err(Error::Config(format!(
                "lyapunov blocks must be non-empty subsets of 0..{n}"
            )));
        }
        for (i, r) in self.rho.iter().enumerate() {
            if r.eval(0.0) != 0.0 {
                return Err(Error::Config(format!("rho{} must vanish at 0", i + 1)));
            }
            for e in -6..=4 {
                let s = 10f64.powi(e);
                let rs = r.eval(s);
                if rs.is_nan() || rs <= 0.0 {
                    return Err(Error::Config(format!("rho{} is not positive at s = {s:e}", i + 1)));
                }
            }
        }
        Ok(())
    }
}

/// Settings for [`check_implication`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImplicationOptions {
    pub samples: usize,
    pub radius: f64,
    pub seed: u64,
    pub tol_impl: f64,
}

impl Default for ImplicationOptions {
    fn default() -> Self {
        ImplicationOptions {
            samples: 100_000,
            radius: 10.0,
            seed: 0,
            tol_impl: TOL_IMPL,
        }
    }
}

/// A sampled point where the premise holds and the derivative bound fails.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based channel.
    pub channel: usize,
    pub state: Vec<f64>,
    /// Delayed values `x(t − τ)` (delay systems).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub delayed: Vec<f64>,
    /// Held state `x(τᵢ)` (sampled-data systems).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub held: Vec<f64>,
    pub input: f64,
    #[serde(default)]
    pub held_input: f64,
    /// `Vᵢ` at the point.
    pub v_i: f64,
    /// `max{ζ(|u|), maxⱼ γᵢⱼ(Vⱼ)}`.
    pub premise: f64,
    /// `sup_d ∇Vᵢ·f`.
    pub derivative: f64,
    /// `−ρᵢ(Vᵢ)`.
    pub bound: f64,
    pub disturbance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImplicationReport {
    pub samples: usize,
    pub premise_hits: usize,
    pub violation_count: usize,
    /// At most the first 1000 violations, in sample order.
    pub violations: Vec<Violation>,
    /// Largest `derivative − bound` over premise points.
    pub max_excess: f64,
}

impl ImplicationReport {
    pub fn falsified(&self) -> bool {
        self.violation_count > 0
    }
}

/// The vector field as the implication checker sees it.
enum Field {
    Ode(Model),
    Delay {
        model: Model,
        slots: usize,
    },
    /// Log coordinates around the positive equilibrium.
    Biochem {
        a: Vec<f64>,
        g: FeedbackFn,
        xstar: Vec<f64>,
    },
    Sampled {
        model: Model,
        h_max: f64,
    },
}

struct Point {
    x: Vec<f64>,
    w: Vec<f64>,
    xh: Vec<f64>,
    u: f64,
    uh: f64,
}

impl Field {
    fn from_spec(spec: &SystemSpec) -> Result<Self> {
        spec.validate()?;
        Ok(match (&spec.model, spec.kind) {
            (Model::BiochemCircuit { a, g, .. }, _) => Field::Biochem {
                a: a.clone(),
                g: g.clone(),
                xstar: equilibrium(a, g)?,
            },
            (m @ Model::LinearDelayNetwork { .. }, _) => {
                let mut model = m.clone();
                if let Model::LinearDelayNetwork { disturbance, .. } = &mut model {
                    *disturbance = DisturbanceMode::Signal;
                }
                Field::Delay { model, slots: 1 }
            }
            (m, SystemKind::Ode) => Field::Ode(m.clone()),
            (m, SystemKind::SampledData) => Field::Sampled {
                model: m.clone(),
                h_max: spec.sampling.as_ref().map_or(0.0, |s| s.h.h_max()),
            },
            (m, SystemKind::Delay) => Field::Delay {
                model: m.clone(),
                slots: m.delays().len(),
            },
        })
    }

    fn is_delay(&self) -> bool {
        matches!(self, Field::Delay { .. } | Field::Biochem { .. })
    }

    /// Finite adversary set standing in for `sup_{d ∈ D}`.
    fn adversaries(&self, spec: &SystemSpec) -> Vec<f64> {
        let top = match self {
            Field::Delay { .. } => 1.0,
            Field::Biochem { .. } => 0.0,
            _ => spec.disturbance.sup_abs(),
        };
        if top == 0.0 {
            vec![0.0]
        } else {
            vec![-top, -0.5 * top, 0.0, 0.5 * top, top]
        }
    }

    fn eval(&self, p: &Point, d: f64, out: &mut [f64]) {
        match self {
            Field::Ode(m) => m.rhs_ode(0.0, &p.x, p.u, d, out),
            Field::Delay { model, slots } => {
                let delayed = vec![p.w.clone(); *slots];
                model.rhs_delay(0.0, &p.x, &delayed, p.u, d, out);
            }
            Field::Biochem { a, g, xstar } => log_rhs(a, g, xstar, &p.x, &p.w, out),
            Field::Sampled { model, .. } => model.rhs_sampled(&p.x, &p.xh, d, p.u, p.uh, out),
        }
    }
}

/// `Vⱼ` at the sampled point: for delay systems the sup over current and delayed values.
fn v_at(setup: &LyapunovSetup, field: &Field, p: &Point, j: usize) -> f64 {
    let v = setup.v(j, &p.x);
    if field.is_delay() {
        v.max(setup.v(j, &p.w))
    } else {
        v
    }
}

struct Evaluation {
    premise_holds: bool,
    v_i: f64,
    premise: f64,
    derivative: f64,
    bound: f64,
    disturbance: f64,
}

fn evaluate(setup: &LyapunovSetup, field: &Field, adversaries: &[f64], p: &Point, i: usize) -> Evaluation {
    let k = setup.k();
    let q_i = setup.v(i, &p.x);
    let mut premise = setup.zeta.eval(p.u.abs());
    for j in 0..k {
        premise = premise.max(setup.gains.get(i, j).eval(v_at(setup, field, p, j)));
    }
    let mut holds = premise <= q_i;
    if let Field::Sampled { .. } = field {
        let held = setup.zeta.eval(p.uh.abs());
        let mut held_premise = held;
        for j in 0..k {
            held_premise = held_premise.max(setup.gains.get(i, j).eval(setup.v(j, &p.xh)));
        }
        holds &= held_premise <= q_i;
        premise = premise.max(held_premise);
    }
    let bound = -setup.rho[i].eval(q_i);
    if !holds {
        return Evaluation {
            premise_holds: false,
            v_i: q_i,
            premise,
            derivative: f64::NAN,
            bound,
            disturbance: 0.0,
        };
    }
    let mut f = vec![0.0; p.x.len()];
    let mut best = f64::NEG_INFINITY;
    let mut worst_d = 0.0;
    for &d in adversaries {
        field.eval(p, d, &mut f);
        let dv: f64 = setup.blocks[i].iter().map(|&j| p.x[j] * f[j]).sum();
        if dv > best {
            best = dv;
            worst_d = d;
        }
    }
    Evaluation {
        premise_holds: true,
        v_i: q_i,
        premise,
        derivative: best,
        bound,
        disturbance: worst_d,
    }
}

/// Largest `v ∈ [0, cap]` with `γ(½v²) ≤ q`.
fn premise_radius(gamma: &GainFn, q: f64, cap: f64) -> f64 {
    if gamma.is_zero() || gamma.eval(0.5 * cap * cap) <= q {
        return cap;
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if gamma.eval(0.5 * mid * mid) <= q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Largest `|u| ≤ cap` with `ζ(|u|) ≤ q`.
fn input_radius(zeta: &GainFn, q: f64, cap: f64) -> f64 {
    if zeta.is_zero() || zeta.eval(cap) <= q {
        return cap;
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if zeta.eval(mid) <= q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn signed<R: Rng>(rng: &mut R, m: f64) -> f64 {
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

/// Uniform in `[−m, m]`, or on the boundary with probability ½.
fn within<R: Rng>(rng: &mut R, m: f64) -> f64 {
    if m <= 0.0 {
        return 0.0;
    }
    if rng.gen_bool(0.5) {
        signed(rng, m)
    } else {
        rng.gen_range(-m..=m)
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..=hi.ln()).exp()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[allow(clippy::too_many_arguments)]
fn draw_point<R: Rng>(
    rng: &mut R,
    setup: &LyapunovSetup,
    field: &Field,
    adversaries: &[f64],
    n: usize,
    radius: f64,
    i: usize,
    targeted: bool,
) -> Point {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut u;
    if targeted {
        // Scale the target block to a log-uniform level, then fill the rest
        // inside the premise region implied by that level.
        let level = log_uniform(rng, 1e-4 * radius, radius);
        let block = &setup.blocks[i];
        for &j in block {
            x[j] = signed(rng, level / (block.len() as f64).sqrt());
        }
        let q = setup.v(i, &x);
        let mut cap = vec![radius; setup.k()];
        for (j, c) in cap.iter_mut().enumerate() {
            *c = premise_radius(setup.gains.get(i, j), q, radius) * (1.0 - 1e-12);
        }
        for (j, b) in setup.blocks.iter().enumerate() {
            let m = cap[j] / (b.len() as f64).sqrt();
            for &c in b {
                if j != i {
                    x[c] = within(rng, m);
                }
                w[c] = within(rng, m);
            }
        }
        u = within(rng, input_radius(&setup.zeta, q, radius) * (1.0 - 1e-12));
    } else {
        for v in x.iter_mut().chain(w.iter_mut()) {
            let m = log_uniform(rng, 1e-6 * radius, radius);
            *v = signed(rng, m);
        }
        u = within(rng, radius);
    }
    if !field.is_delay() {
        w.clear();
    }
    let mut xh = Vec::new();
    let mut uh = 0.0;
    if let Field::Sampled { h_max, .. } = field {
        // Conservative reach estimate: |x(τᵢ) − x(t)|∞ ≤ h_max·B with B from two evaluations.
        let mut f = vec![0.0; n];
        let mut b = 0.0_f64;
        let probe = Point {
            x: x.clone(),
            w: Vec::new(),
            xh: x.clone(),
            u,
            uh: u,
        };
        for &d in adversaries {
            field.eval(&probe, d, &mut f);
            b = b.max(max_abs(&f));
        }
        let doubled = Point {
            xh: x.iter().map(|v| 2.0 * v).collect(),
            ..probe
        };
        for &d in adversaries {
            field.eval(&doubled, d, &mut f);
            b = b.max(max_abs(&f));
        }
        let reach = h_max * b;
        xh = x.iter().map(|v| v + within(rng, reach)).collect();
        uh = if targeted {
            within(rng, u.abs().max(f64::MIN_POSITIVE))
        } else {
            u
        };
    }
    if !targeted && rng.gen_bool(0.25) {
        u = 0.0;
    }
    Point { x, w, xh, u, uh }
}

/// Samples states, delayed values, held values and inputs; wherever the
/// premise `max{ζ(|u|), maxⱼ γᵢⱼ(Vⱼ)} ≤ Vᵢ` holds, compares `sup_d ∇Vᵢ·f`
/// against `−ρᵢ(Vᵢ) + tol_impl`.
///
/// Half the samples target the premise region of a channel; the other half are
/// free log-uniform draws. Delay systems sample the delayed arguments
/// independently with `Vⱼ` taken as the max over current and delayed values.
/// The biochemical circuit is checked in log coordinates around `X*`.
pub fn check_implication(
    setup: &LyapunovSetup,
    spec: &SystemSpec,
    opts: &ImplicationOptions,
    exec: Exec,
) -> Result<ImplicationReport> {
    let field = Field::from_spec(spec)?;
    let n = spec.dim();
    setup.validate(n)?;
    if !(opts.radius.is_finite() && opts.radius > 0.0) {
        return Err(Error::Config("implication radius must be positive".into()));
    }
    let adversaries = field.adversaries(spec);
    let k = setup.k();
    let chunks = opts.samples.div_ceil(CHUNK);
    let parts = exec.map_range(chunks, |c| {
        let mut rng = item_rng(opts.seed, c as u64);
        let mut hits = 0;
        let mut count = 0;
        let mut found = Vec::new();
        let mut excess = f64::NEG_INFINITY;
        let start = c * CHUNK;
        for s in start..(start + CHUNK).min(opts.samples) {
            let i = s % k;
            let targeted = (s / k).is_multiple_of(2);
            let p = draw_point(&mut rng, setup, &field, &adversaries, n, opts.radius, i, targeted);
            let e = evaluate(setup, &field, &adversaries, &p, i);
            if !e.premise_holds {
                continue;
            }
            hits += 1;
            excess = excess.max(e.derivative - e.bound);
            if e.derivative > e.bound + opts.tol_impl {
                count += 1;
                if found.len() < MAX_STORED_VIOLATIONS {
                    found.push(Violation {
                        channel: i + 1,
                        state: p.x,
                        delayed: p.w,
                        held: p.xh,
                        input: p.u,
                        held_input: p.uh,
                        v_i: e.v_i,
                        premise: e.premise,
                        derivative: e.derivative,
                        bound: e.bound,
                        disturbance: e.disturbance,
                    });
                }
            }
        }
        (hits, count, found, excess)
    });
    let mut report = ImplicationReport {
        samples: opts.samples,
        premise_hits: 0,
        violation_count: 0,
        violations: Vec::new(),
        max_excess: f64::NEG_INFINITY,
    };
    for (hits, count, found, excess) in parts {
        report.premise_hits += hits;
        report.violation_count += count;
        report.max_excess = report.max_excess.max(excess);
        let room = MAX_STORED_VIOLATIONS - report.violations.len();
        report.violations.extend(found.into_iter().take(room));
    }
    Ok(report)
}

/// Re-evaluates a reported violation on its own; `true` if it still violates.
pub fn recheck(setup: &LyapunovSetup, spec: &SystemSpec, v: &Violation, tol_impl: f64) -> Result<bool> {
    let field = Field::from_spec(spec)?;
    setup.validate(spec.dim())?;
    if v.channel == 0 || v.channel > setup.k() || v.state.len() != spec.dim() {
        return Err(Error::Config("violation does not match this setup".into()));
    }
    let p = Point {
        x: v.state.clone(),
        w: v.delayed.clone(),
        xh: v.held.clone(),
        u: v.input,
        uh: v.held_input,
    };
    let e = evaluate(setup, &field, &field.adversaries(spec), &p, v.channel - 1);
    Ok(e.premise_holds && e.derivative > e.bound + tol_impl)
}

/// `Vᵢ` along a trajectory as a running sup over a trailing window of length `window`
/// (zero for pointwise functions).
pub fn lyapunov_channels(traj: &Trajectory, blocks: &[Vec<usize>], window: f64) -> Result<Vec<Vec<f64>>> {
    let n = traj.dim();
    if blocks.iter().flatten().any(|&j| j >= n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: blocks.iter().flatten().max().map_or(0, |m| m + 1),
        });
    }
    let lag = (window / traj.dt).round() as usize;
    let history: &[Vec<f64>] = traj.history.as_deref().unwrap_or(&[]);
    // history ends at t0, which is also states[0]
    let pre: Vec<&Vec<f64>> = history.iter().take(history.len().saturating_sub(1)).collect();
    let all: Vec<&Vec<f64>> = pre.iter().copied().chain(traj.states.iter()).collect();
    let offset = pre.len();
    let mut out = Vec::with_capacity(blocks.len());
    for b in blocks {
        let q: Vec<f64> = all
            .iter()
            .map(|x| 0.5 * b.iter().map(|&j| x[j] * x[j]).sum::<f64>())
            .collect();
        let mut v = Vec::with_capacity(traj.len());
        let mut dq: VecDeque<usize> = VecDeque::new();
        let mut next = 0;
        for k in 0..traj.len() {
            let hi = offset + k;
            let lo = hi.saturating_sub(lag);
            while next <= hi {
                while dq.back().is_some_and(|&m| q[m] <= q[next]) {
                    dq.pop_back();
                }
                dq.push_back(next);
                next += 1;
            }
            while dq.front().is_some_and(|&m| m < lo) {
                dq.pop_front();
            }
            v.push(q[*dq.front().expect("window is non-empty")]);
        }
        out.push(v);
    }
    Ok(out)
}

fn tail_start(traj: &Trajectory, tail_fraction: f64) -> Result<usize> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "tail fraction must be in (0, 1], got {tail_fraction}"
        )));
    }
    let len = traj.len();
    let start = ((1.0 - tail_fraction) * (len.saturating_sub(1)) as f64).ceil() as usize;
    if len.saturating_sub(start) < MIN_TAIL_SAMPLES {
        return Err(Error::Inconclusive(format!(
            "tail has {} samples, need at least {MIN_TAIL_SAMPLES}",
            len.saturating_sub(start)
        )));
    }
    Ok(start)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum ChannelConvergence {
    Converged { tail_sup: f64 },
    NotConverged { tail_sup: f64 },
}

impl ChannelConvergence {
    pub fn converged(&self) -> bool {
        matches!(self, ChannelConvergence::Converged { .. })
    }

    pub fn tail_sup(&self) -> f64 {
        match self {
            ChannelConvergence::Converged { tail_sup } | ChannelConvergence::NotConverged { tail_sup } => *tail_sup,
        }
    }
}

/// `Converged` iff the sup of `Vᵢ` over the trailing `tail_fraction` of the horizon is below `tol_tail`.
pub fn check_convergence(
    traj: &Trajectory,
    channels: &[Vec<f64>],
    tol_tail: f64,
    tail_fraction: f64,
) -> Result<Vec<ChannelConvergence>> {
    let start = tail_start(traj, tail_fraction)?;
    Ok(channels
        .iter()
        .map(|v| {
            let tail_sup = v[start..].iter().fold(0.0_f64, |m, x| m.max(*x));
            if tail_sup < tol_tail {
                ChannelConvergence::Converged { tail_sup }
            } else {
                ChannelConvergence::NotConverged { tail_sup }
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum GainBound {
    /// `margin = bound − tail sup`.
    Satisfied { margin: f64, tail_sup: f64, bound: f64 },
    /// First tail time at which `Vᵢ` exceeds the bound.
    Violated { t: f64, v: f64, bound: f64 },
}

impl GainBound {
    pub fn satisfied(&self) -> bool {
        matches!(self, GainBound::Satisfied { .. })
    }
}

/// `Satisfied` iff the tail sup of `Vᵢ` is at most `(1 + tol_gain)·Gᵢ(u_sup) + tol_tail`.
pub fn check_asymptotic_gain(
    traj: &Trajectory,
    channels: &[Vec<f64>],
    gmap: &[GainFn],
    u_sup: f64,
    tol_gain: f64,
    tol_tail: f64,
    tail_fraction: f64,
) -> Result<Vec<GainBound>> {
    if gmap.len() != channels.len() {
        return Err(Error::DimensionMismatch {
            expected: channels.len(),
            got: gmap.len(),
        });
    }
    if !(u_sup.is_finite() && u_sup >= 0.0) {
        return Err(Error::Config(format!("u_sup must be ≥ 0, got {u_sup}")));
    }
    let start = tail_start(traj, tail_fraction)?;
    Ok(channels
        .iter()
        .zip(gmap)
        .map(|(v, g)| {
            let bound = (1.0 + tol_gain) * g.eval(u_sup) + tol_tail;
            match v[start..].iter().position(|x| *x > bound) {
                Some(k) => GainBound::Violated {
                    t: traj.time(start + k),
                    v: v[start + k],
                    bound,
                },
                None => {
                    let tail_sup = v[start..].iter().fold(0.0_f64, |m, x| m.max(*x));
                    GainBound::Satisfied {
                        margin: bound - tail_sup,
                        tail_sup,
                        bound,
                    }
                }
            }
        })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub implication: Option<ImplicationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<Vec<ChannelConvergence>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asymptotic_bound: Option<Vec<GainBound>>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.implication.as_ref().is_none_or(|r| !r.falsified())
            && self
                .convergence
                .as_ref()
                .is_none_or(|c| c.iter().all(ChannelConvergence::converged))
            && self
                .asymptotic_bound
                .as_ref()
                .is_none_or(|b| b.iter().all(GainBound::satisfied))
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "horizon {}", self.horizon);
        if let Some(r) = &self.implication {
            let _ = writeln!(
                s,
                "implication: {} samples, {} premise hits, {} violations, max excess {:.3e}",
                r.samples, r.premise_hits, r.violation_count, r.max_excess
            );
        }
        if let Some(c) = &self.convergence {
            for (i, v) in c.iter().enumerate() {
                let tag = if v.converged() { "converged" } else { "NOT converged" };
                let _ = writeln!(s, "V{}: {tag} (tail sup {:.3e})", i + 1, v.tail_sup());
            }
        }
        if let Some(b) = &self.asymptotic_bound {
            for (i, v) in b.iter().enumerate() {
                let _ = match v {
                    GainBound::Satisfied { margin, .. } => writeln!(s, "G{}: satisfied (margin {margin:.3e})", i + 1),
                    GainBound::Violated { t, v, bound } => {
                        writeln!(s, "G{}: VIOLATED at t = {t} (V = {v:.3e} > {bound:.3e})", i + 1)
                    }
                };
            }
        }
        s
    }
}
