//! Scalar gain functions of class N₁ (continuous, zero at zero, non-decreasing)
//! represented as a closed expression algebra.
//!
//! A [`GainFn`] is immutable and cheap to clone. Construction validates every
//! numeric parameter, so evaluation never fails.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used by [`invert`].
pub const TOL_INV: f64 = 1e-10;
/// Bisection iteration cap used by [`invert`].
pub const MAX_BISECTION_ITERS: usize = 200;
/// Beyond this value of √(2s) the log-exp-square family is evaluated in log space.
const LOG_SPACE_THRESHOLD: f64 = 700.0;

/// The expression node behind a [`GainFn`].
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Zero,
    /// `k·s`
    Linear {
        k: f64,
    },
    /// `k·s^p`
    Power {
        k: f64,
        p: f64,
    },
    /// `c·[ln(1 + th·(e^{√(2s)} − 1))]²`
    LogExpSq {
        c: f64,
        th: f64,
    },
    Max(GainFn, GainFn),
    /// `outer(inner(s))`
    Compose {
        outer: GainFn,
        inner: GainFn,
    },
    /// `k·inner(s)`
    Scale {
        k: f64,
        inner: GainFn,
    },
}

/// A validated class-N₁ gain function.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GainExpr", into = "GainExpr")]
pub struct GainFn(Arc<Node>);

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidGain(format!(
            "{name} must be finite and non-negative, got {v}"
        )));
    }
    Ok(())
}

fn check_pos(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::InvalidGain(format!(
            "{name} must be finite and positive, got {v}"
        )));
    }
    Ok(())
}

impl GainFn {
    fn from_node(node: Node) -> Self {
        GainFn(Arc::new(node))
    }

    pub fn zero() -> Self {
        Self::from_node(Node::Zero)
    }

    /// The identity `s ↦ s`.
    pub fn identity() -> Self {
        Self::from_node(Node::Linear { k: 1.0 })
    }

    pub fn linear(k: f64) -> Result<Self> {
        check_nonneg("linear coefficient", k)?;
        Ok(Self::from_node(Node::Linear { k }))
    }

    pub fn power(k: f64, p: f64) -> Result<Self> {
        check_nonneg("power coefficient", k)?;
        check_pos("power exponent", p)?;
        Ok(Self::from_node(Node::Power { k, p }))
    }

    pub fn log_exp_sq(c: f64, th: f64) -> Result<Self> {
        check_pos("logexpsq scale", c)?;
        check_pos("logexpsq parameter", th)?;
        Ok(Self::from_node(Node::LogExpSq { c, th }))
    }

    pub fn max(a: GainFn, b: GainFn) -> Self {
        Self::from_node(Node::Max(a, b))
    }

    pub fn compose(outer: GainFn, inner: GainFn) -> Self {
        Self::from_node(Node::Compose { outer, inner })
    }

    pub fn scale(k: f64, inner: GainFn) -> Result<Self> {
        check_nonneg("scale factor", k)?;
        Ok(Self::from_node(Node::Scale { k, inner }))
    }

    /// Pointwise maximum of a non-empty list, built as a balanced tree so the
    /// evaluation depth stays logarithmic. An empty list yields `None`.
    pub fn max_of(mut gs: Vec<GainFn>) -> Option<GainFn> {
        if gs.is_empty() {
            return None;
        }
        while gs.len() > 1 {
            let mut next = Vec::with_capacity(gs.len().div_ceil(2));
            let mut it = gs.into_iter();
            while let Some(a) = it.next() {
                match it.next() {
                    Some(b) => next.push(GainFn::max(a, b)),
                    None => next.push(a),
                }
            }
            gs = next;
        }
        gs.pop()
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.node(), Node::Zero)
    }

    /// Evaluates the gain at `s ≥ 0`. Negative or NaN arguments are treated as zero.
    pub fn eval(&self, s: f64) -> f64 {
        let s = if s > 0.0 { s } else { 0.0 };
        match self.node() {
            Node::Zero => 0.0,
            Node::Linear { k } => k * s,
            Node::Power { k, p } => {
                if s == 0.0 {
                    0.0
                } else {
                    k * s.powf(*p)
                }
            }
            Node::LogExpSq { c, th } => c * log_one_plus_th_expm1((2.0 * s).sqrt(), *th).powi(2),
            Node::Max(a, b) => a.eval(s).max(b.eval(s)),
            Node::Compose { outer, inner } => outer.eval(inner.eval(s)),
            Node::Scale { k, inner } => k * inner.eval(s),
        }
    }

    /// Number of nodes in the expression tree.
    pub fn size(&self) -> usize {
        match self.node() {
            Node::Zero | Node::Linear { .. } | Node::Power { .. } | Node::LogExpSq { .. } => 1,
            Node::Max(a, b) => 1 + a.size() + b.size(),
            Node::Compose { outer, inner } => 1 + outer.size() + inner.size(),
            Node::Scale { inner, .. } => 1 + inner.size(),
        }
    }

    /// Returns an algebraically equivalent, simplified expression.
    ///
    /// Fuses linear/power chains, collapses compositions of `LogExpSq(½, ·)`
    /// (their parameters multiply), and drops zero branches. Results agree
    /// with [`GainFn::eval`] up to floating-point reassociation.
    pub fn normalize(&self) -> GainFn {
        match self.node() {
            Node::Zero => GainFn::zero(),
            Node::Linear { k } => {
                if *k == 0.0 {
                    GainFn::zero()
                } else {
                    self.clone()
                }
            }
            Node::Power { k, p } => {
                if *k == 0.0 {
                    GainFn::zero()
                } else if *p == 1.0 {
                    GainFn::from_node(Node::Linear { k: *k })
                } else {
                    self.clone()
                }
            }
            Node::LogExpSq { c, th } => {
                if *c == 0.5 && *th == 1.0 {
                    GainFn::identity()
                } else {
                    self.clone()
                }
            }
            Node::Max(a, b) => {
                let (a, b) = (a.normalize(), b.normalize());
                match (a.node(), b.node()) {
                    (Node::Zero, _) => b,
                    (_, Node::Zero) => a,
                    (Node::Linear { k: ka }, Node::Linear { k: kb }) => {
                        GainFn::from_node(Node::Linear { k: ka.max(*kb) })
                    }
                    _ if a == b => a,
                    _ => GainFn::max(a, b),
                }
            }
            Node::Scale { k, inner } => scale_normalized(*k, inner.normalize()),
            Node::Compose { outer, inner } => compose_normalized(outer.normalize(), inner.normalize()),
        }
    }
}

/// `ln(1 + th·(e^t − 1))` for `t ≥ 0`, switching to log space for large `t`.
fn log_one_plus_th_expm1(t: f64, th: f64) -> f64 {
    if t > LOG_SPACE_THRESHOLD {
        // ln(1 + th(e^t − 1)) = t + ln(th + (1 − th)e^{−t})
        t + (th + (1.0 - th) * (-t).exp()).ln()
    } else {
        (th * t.exp_m1()).ln_1p()
    }
}

fn scale_normalized(k: f64, inner: GainFn) -> GainFn {
    if k == 0.0 {
        return GainFn::zero();
    }
    if k == 1.0 {
        return inner;
    }
    match inner.node() {
        Node::Zero => GainFn::zero(),
        Node::Linear { k: m } => GainFn::from_node(Node::Linear { k: k * m }),
        Node::Power { k: m, p } => GainFn::from_node(Node::Power { k: k * m, p: *p }),
        Node::Scale { k: m, inner } => scale_normalized(k * m, inner.clone()),
        _ => GainFn::from_node(Node::Scale { k, inner }),
    }
}

/// Fuses two normalized leaves `outer ∘ inner` when a closed form exists.
fn fuse(outer: &GainFn, inner: &GainFn) -> Option<GainFn> {
    match (outer.node(), inner.node()) {
        (Node::Zero, _) | (_, Node::Zero) => Some(GainFn::zero()),
        (Node::Linear { k }, _) => Some(scale_normalized(*k, inner.clone())),
        (Node::Power { k, p }, Node::Linear { k: m }) => Some(
            GainFn::from_node(Node::Power {
                k: k * m.powf(*p),
                p: *p,
            })
            .normalize(),
        ),
        (Node::Power { k, p }, Node::Power { k: m, p: q }) => Some(
            GainFn::from_node(Node::Power {
                k: k * m.powf(*p),
                p: p * q,
            })
            .normalize(),
        ),
        (Node::LogExpSq { c: c1, th: a }, Node::LogExpSq { c: c2, th: b }) if *c1 == 0.5 && *c2 == 0.5 => {
            Some(GainFn::from_node(Node::LogExpSq { c: 0.5, th: a * b }).normalize())
        }
        _ => None,
    }
}

fn compose_normalized(outer: GainFn, inner: GainFn) -> GainFn {
    if let Some(g) = fuse(&outer, &inner) {
        return g;
    }
    // Re-associate outer ∘ (b ∘ c) as (outer ∘ b) ∘ c when outer ∘ b fuses.
    if let Node::Compose { outer: b, inner: c } = inner.node() {
        if let Some(ob) = fuse(&outer, b) {
            return compose_normalized(ob, c.clone());
        }
    }
    GainFn::compose(outer, inner)
}

impl fmt::Debug for GainFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for GainFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Zero => write!(f, "0"),
            Node::Linear { k } => write!(f, "{k}·s"),
            Node::Power { k, p } => write!(f, "{k}·s^{p}"),
            Node::LogExpSq { c, th } => write!(f, "{c}·ln²(1+{th}(e^√(2s)−1))"),
            Node::Max(a, b) => write!(f, "max({a}, {b})"),
            Node::Compose { outer, inner } => write!(f, "({outer})∘({inner})"),
            Node::Scale { k, inner } => write!(f, "{k}·({inner})"),
        }
    }
}

/// Serialized form of a [`GainFn`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GainExpr {
    Zero,
    Linear {
        k: f64,
    },
    Power {
        k: f64,
        p: f64,
    },
    #[serde(rename = "logexpsq")]
    LogExpSq {
        c: f64,
        th: f64,
    },
    Max {
        left: Box<GainExpr>,
        right: Box<GainExpr>,
    },
    Compose {
        outer: Box<GainExpr>,
        inner: Box<GainExpr>,
    },
    Scale {
        k: f64,
        inner: Box<GainExpr>,
    },
}

impl TryFrom<GainExpr> for GainFn {
    type Error = Error;

    fn try_from(e: GainExpr) -> Result<Self> {
        Ok(match e {
            GainExpr::Zero => GainFn::zero(),
            GainExpr::Linear { k } => GainFn::linear(k)?,
            GainExpr::Power { k, p } => GainFn::power(k, p)?,
            GainExpr::LogExpSq { c, th } => GainFn::log_exp_sq(c, th)?,
            GainExpr::Max { left, right } => GainFn::max((*left).try_into()?, (*right).try_into()?),
            GainExpr::Compose { outer, inner } => GainFn::compose((*outer).try_into()?, (*inner).try_into()?),
            GainExpr::Scale { k, inner } => GainFn::scale(k, (*inner).try_into()?)?,
        })
    }
}

impl From<GainFn> for GainExpr {
    fn from(g: GainFn) -> Self {
        match g.node() {
            Node::Zero => GainExpr::Zero,
            Node::Linear { k } => GainExpr::Linear { k: *k },
            Node::Power { k, p } => GainExpr::Power { k: *k, p: *p },
            Node::LogExpSq { c, th } => GainExpr::LogExpSq { c: *c, th: *th },
            Node::Max(a, b) => GainExpr::Max {
                left: Box::new(a.clone().into()),
                right: Box::new(b.clone().into()),
            },
            Node::Compose { outer, inner } => GainExpr::Compose {
                outer: Box::new(outer.clone().into()),
                inner: Box::new(inner.clone().into()),
            },
            Node::Scale { k, inner } => GainExpr::Scale {
                k: *k,
                inner: Box::new(inner.clone().into()),
            },
        }
    }
}

/// Left-to-right composition `g₁ ∘ g₂ ∘ … ∘ g_m`.
pub fn compose_chain(gs: &[GainFn]) -> Result<GainFn> {
    let (last, rest) = gs.split_last().ok_or(Error::EmptyChain)?;
    Ok(rest
        .iter()
        .rev()
        .fold(last.clone(), |inner, outer| GainFn::compose(outer.clone(), inner)))
}

/// Log-spaced evaluation grid for contraction checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub s_min: f64,
    pub s_max: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            s_min: 1e-12,
            s_max: 1e12,
            points: 2048,
        }
    }
}

impl GridSpec {
    pub fn new(s_min: f64, s_max: f64, points: usize) -> Result<Self> {
        let g = GridSpec { s_min, s_max, points };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_min > 0.0 && self.s_min.is_finite()) {
            return Err(Error::Config(format!(
                "grid s_min must be positive, got {}",
                self.s_min
            )));
        }
        if !(self.s_max > self.s_min && self.s_max.is_finite()) {
            return Err(Error::Config(format!(
                "grid s_max must exceed s_min, got [{}, {}]",
                self.s_min, self.s_max
            )));
        }
        if self.points < 2 {
            return Err(Error::Config("grid needs at least 2 points".into()));
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        let (lo, hi) = (self.s_min.ln(), self.s_max.ln());
        let step = (hi - lo) / (self.points - 1) as f64;
        (0..self.points).map(move |i| {
            if i + 1 == self.points {
                self.s_max
            } else {
                (lo + step * i as f64).exp()
            }
        })
    }
}

/// Outcome of testing `g(s) < s` for all `s > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ContractionStatus {
    ExactTrue,
    ExactFalse {
        witness: f64,
    },
    /// Grid-level evidence only, not a proof.
    GridVerified {
        grid: GridSpec,
    },
    GridRefuted {
        witness: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionVerdict {
    pub status: ContractionStatus,
    pub detail: String,
}

impl ContractionVerdict {
    pub fn holds(&self) -> bool {
        matches!(
            self.status,
            ContractionStatus::ExactTrue | ContractionStatus::GridVerified { .. }
        )
    }

    pub fn is_exact(&self) -> bool {
        matches!(
            self.status,
            ContractionStatus::ExactTrue | ContractionStatus::ExactFalse { .. }
        )
    }

    pub fn witness(&self) -> Option<f64> {
        match self.status {
            ContractionStatus::ExactFalse { witness } | ContractionStatus::GridRefuted { witness } => Some(witness),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.status {
            ContractionStatus::ExactTrue => "exact-true",
            ContractionStatus::ExactFalse { .. } => "exact-false",
            ContractionStatus::GridVerified { .. } => "grid-verified",
            ContractionStatus::GridRefuted { .. } => "grid-refuted",
        }
    }
}

enum Exact {
    True(String),
    False(f64, String),
}

fn exact_rule(g: &GainFn) -> Option<Exact> {
    match g.node() {
        Node::Zero => Some(Exact::True("zero gain".into())),
        Node::Linear { k } => Some(if *k < 1.0 {
            Exact::True(format!("linear coefficient {k} < 1"))
        } else {
            Exact::False(1.0, format!("linear coefficient {k} ≥ 1"))
        }),
        Node::Power { k, p } => {
            // p ≠ 1 after normalization; k > 0.
            let w = if *p > 1.0 {
                k.powf(-1.0 / (p - 1.0))
            } else {
                k.powf(1.0 / (1.0 - p)) * 0.5
            };
            Some(Exact::False(w, format!("power exponent {p} ≠ 1 crosses the identity")))
        }
        Node::LogExpSq { c, th } if *c == 0.5 => Some(if *th < 1.0 {
            Exact::True(format!("log-exp-square parameter {th} < 1"))
        } else {
            Exact::False(1.0, format!("log-exp-square parameter {th} ≥ 1"))
        }),
        Node::Max(a, b) => match (exact_rule(a)?, exact_rule(b)?) {
            (Exact::True(da), Exact::True(db)) => Some(Exact::True(format!("max of [{da}] and [{db}]"))),
            (Exact::False(w, d), _) | (_, Exact::False(w, d)) => Some(Exact::False(w, d)),
        },
        _ => None,
    }
}

/// Decides `g(s) < s ∀ s > 0`, exactly where a closed-form rule applies and on
/// the log-spaced `grid` otherwise.
pub fn check_contraction(g: &GainFn, grid: &GridSpec) -> ContractionVerdict {
    let normalized = g.normalize();
    match exact_rule(&normalized) {
        Some(Exact::True(detail)) => ContractionVerdict {
            status: ContractionStatus::ExactTrue,
            detail,
        },
        Some(Exact::False(analytic, detail)) => {
            // Prefer a witness that the unnormalized expression confirms in floating point.
            let witness = std::iter::once(analytic)
                .chain([analytic * 2.0, analytic * 0.5])
                .chain(grid.iter())
                .find(|&s| s > 0.0 && g.eval(s) >= s)
                .unwrap_or(analytic);
            ContractionVerdict {
                status: ContractionStatus::ExactFalse { witness },
                detail,
            }
        }
        None => match grid.iter().find(|&s| g.eval(s) >= s) {
            Some(witness) => ContractionVerdict {
                status: ContractionStatus::GridRefuted { witness },
                detail: format!("g({witness:e}) ≥ {witness:e} on the grid"),
            },
            None => ContractionVerdict {
                status: ContractionStatus::GridVerified { grid: *grid },
                detail: format!(
                    "g(s) < s at {} log-spaced points on [{:e}, {:e}] (grid evidence, not proof)",
                    grid.points, grid.s_min, grid.s_max
                ),
            },
        },
    }
}

/// Solves `g(s) = y` on `[0, bracket]` for strictly increasing `g`.
///
/// Linear and power gains (after normalization) are inverted analytically;
/// everything else by bisection.
pub fn invert(g: &GainFn, y: f64, bracket: f64) -> Result<f64> {
    if !(y.is_finite() && y >= 0.0) {
        return Err(Error::InversionDomain(format!(
            "target must be finite and ≥ 0, got {y}"
        )));
    }
    if !(bracket.is_finite() && bracket > 0.0) {
        return Err(Error::InversionDomain(format!(
            "bracket must be positive, got {bracket}"
        )));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let g_bracket = g.eval(bracket);
    if g_bracket == 0.0 {
        return Err(Error::InversionDomain(format!(
            "gain is identically zero on [0, {bracket}], not strictly increasing"
        )));
    }
    if y > g_bracket {
        return Err(Error::BracketTooSmall { y, bracket, g_bracket });
    }
    match g.normalize().node() {
        Node::Linear { k } => return Ok(y / k),
        Node::Power { k, p } => return Ok((y / k).powf(1.0 / p)),
        _ => {}
    }
    let (mut lo, mut hi) = (0.0_f64, bracket);
    for _ in 0..MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g.eval(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (glo, ghi) = (g.eval(lo), g.eval(hi));
    let s = if (y - glo).abs() <= (ghi - y).abs() { lo } else { hi };
    let err = (g.eval(s) - y).abs();
    if err > TOL_INV && glo == ghi {
        return Err(Error::InversionDomain(format!(
            "gain is flat near s = {s:e}; cannot reach y = {y:e}"
        )));
    }
    Ok(s)
}

/// Like [`invert`] but grows the bracket geometrically from 1 until it covers `y`.
pub fn invert_auto(g: &GainFn, y: f64) -> Result<f64> {
    let mut bracket = 1.0_f64;
    for _ in 0..2000 {
        if g.eval(bracket) >= y {
            return invert(g, y, bracket);
        }
        bracket *= 2.0;
        if !bracket.is_finite() {
            break;
        }
    }
    Err(Error::BracketTooSmall {
        y,
        bracket,
        g_bracket: g.eval(f64::MAX),
    })
}
