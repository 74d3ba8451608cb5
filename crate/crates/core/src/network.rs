//! MAX-preserving gain maps `Γᵢ(x) = maxⱼ γᵢ,ⱼ(xⱼ)`, the Q-operator, and the
//! cyclic small-gain test.
//!
//! Indices are 0-based in the Rust API. The JSON forms (matrix entries and
//! cycle lists in reports) are 1-based.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::{check_contraction, compose_chain, ContractionVerdict, GainFn, GridSpec};
use crate::par::{item_rng, Exec};

/// A vector in ℝⁿ₊ with the componentwise order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PlusVec(Vec<f64>);

impl PlusVec {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidVector("dimension must be at least 1".into()));
        }
        if let Some(bad) = entries.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidVector(format!(
                "entries must be finite and non-negative, got {bad}"
            )));
        }
        Ok(PlusVec(entries))
    }

    pub fn zeros(n: usize) -> Self {
        PlusVec(vec![0.0; n.max(1)])
    }

    pub fn filled(n: usize, v: f64) -> Result<Self> {
        Self::new(vec![v; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `self ≤ other` componentwise.
    pub fn leq(&self, other: &PlusVec) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

impl TryFrom<Vec<f64>> for PlusVec {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        PlusVec::new(v)
    }
}

impl From<PlusVec> for Vec<f64> {
    fn from(v: PlusVec) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for PlusVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Componentwise maximum of a non-empty list.
pub fn vec_max(xs: &[PlusVec]) -> Result<PlusVec> {
    let (first, rest) = xs.split_first().ok_or(Error::EmptyList)?;
    let mut out = first.clone();
    for x in rest {
        if x.dim() != out.dim() {
            return Err(Error::DimensionMismatch {
                expected: out.dim(),
                got: x.dim(),
            });
        }
        for (o, v) in out.0.iter_mut().zip(&x.0) {
            *o = o.max(*v);
        }
    }
    Ok(out)
}

/// An n×n matrix of gains defining `Γ`.
#[derive(Clone, PartialEq)]
pub struct GainMatrix {
    n: usize,
    entries: Vec<GainFn>,
}

impl GainMatrix {
    /// All-zero matrix.
    pub fn zeros(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMatrix("dimension must be at least 1".into()));
        }
        Ok(GainMatrix {
            n,
            entries: vec![GainFn::zero(); n * n],
        })
    }

    /// Matrix with `γᵢ,ⱼ(s) = cᵢⱼ·s`.
    pub fn from_linear(coeffs: &[Vec<f64>]) -> Result<Self> {
        let n = coeffs.len();
        let mut m = Self::zeros(n)?;
        for (i, row) in coeffs.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidMatrix(format!(
                    "row {} has {} entries, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &c) in row.iter().enumerate() {
                if c != 0.0 {
                    m.set(i, j, GainFn::linear(c)?)?;
                }
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &GainFn {
        &self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, g: GainFn) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::InvalidMatrix(format!(
                "index ({}, {}) out of range for n = {}",
                i + 1,
                j + 1,
                self.n
            )));
        }
        self.entries[i * self.n + j] = g;
        Ok(())
    }

    pub fn with(mut self, i: usize, j: usize, g: GainFn) -> Result<Self> {
        self.set(i, j, g)?;
        Ok(self)
    }

    /// `Γ(x)` on raw slices. Caller guarantees `x.len() == n`.
    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.entries[i * self.n..(i + 1) * self.n];
            *o = row
                .iter()
                .zip(x)
                .filter(|(g, _)| !g.is_zero())
                .map(|(g, &xj)| g.eval(xj))
                .fold(0.0, f64::max);
        }
    }

    fn check_dim(&self, x: &PlusVec) -> Result<()> {
        if x.dim() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.dim(),
            });
        }
        Ok(())
    }

    /// Gains along a cycle `(i₁, …, i_r)`: `[γ_{i₁,i₂}, …, γ_{i_r,i₁}]`.
    pub fn cycle_gains(&self, cycle: &[usize]) -> Vec<GainFn> {
        (0..cycle.len())
            .map(|k| self.get(cycle[k], cycle[(k + 1) % cycle.len()]).clone())
            .collect()
    }
}

impl fmt::Debug for GainMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for i in 0..self.n {
            for j in 0..self.n {
                let g = self.get(i, j);
                if !g.is_zero() {
                    m.entry(&(i + 1, j + 1), g);
                }
            }
        }
        m.finish()
    }
}

#[derive(Serialize, Deserialize)]
struct GainEntry {
    i: usize,
    j: usize,
    #[serde(rename = "fn")]
    gain: GainFn,
}

#[derive(Serialize, Deserialize)]
struct GainMatrixRepr {
    n: usize,
    #[serde(default)]
    gains: Vec<GainEntry>,
}

impl Serialize for GainMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut gains = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                let g = self.get(i, j);
                if !g.is_zero() {
                    gains.push(GainEntry {
                        i: i + 1,
                        j: j + 1,
                        gain: g.clone(),
                    });
                }
            }
        }
        GainMatrixRepr { n: self.n, gains }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GainMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = GainMatrixRepr::deserialize(d)?;
        let mut m = GainMatrix::zeros(repr.n).map_err(D::Error::custom)?;
        for e in repr.gains {
            if e.i == 0 || e.j == 0 {
                return Err(D::Error::custom("gain indices are 1-based"));
            }
            m.set(e.i - 1, e.j - 1, e.gain).map_err(D::Error::custom)?;
        }
        Ok(m)
    }
}

/// `Γ(x)` with `Γᵢ(x) = maxⱼ γᵢ,ⱼ(xⱼ)`.
pub fn gamma_apply(g: &GainMatrix, x: &PlusVec) -> Result<PlusVec> {
    g.check_dim(x)?;
    let mut out = vec![0.0; g.n];
    g.apply_into(&x.0, &mut out);
    Ok(PlusVec(out))
}

/// `Q(x) = MAX{x, Γ(x), …, Γ⁽ⁿ⁻¹⁾(x)}`.
pub fn q_operator(g: &GainMatrix, x: &PlusVec) -> Result<PlusVec> {
    g.check_dim(x)?;
    let mut q = x.0.clone();
    let mut cur = x.0.clone();
    let mut next = vec![0.0; g.n];
    for _ in 1..g.n {
        g.apply_into(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        for (qi, ci) in q.iter_mut().zip(&cur) {
            *qi = qi.max(*ci);
        }
    }
    Ok(PlusVec(q))
}

/// All simple cycles up to rotation, smallest index first, ordered by length.
pub fn enumerate_cycles(n: usize) -> Vec<Vec<usize>> {
    fn extend(start: usize, n: usize, len: usize, path: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if path.len() == len {
            out.push(path.clone());
            return;
        }
        for j in start + 1..n {
            if !used[j] {
                used[j] = true;
                path.push(j);
                extend(start, n, len, path, used, out);
                path.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    for len in 1..=n {
        for start in 0..n {
            let mut used = vec![false; n];
            used[start] = true;
            extend(start, n, len, &mut vec![start], &mut used, &mut out);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleCheck {
    /// 1-based node sequence.
    pub nodes: Vec<usize>,
    /// `None` when the cycle contains a zero gain and was skipped.
    pub verdict: Option<ContractionVerdict>,
    /// Rotations examined (more than one only for grid-level verdicts).
    pub rotations_checked: usize,
}

impl CycleCheck {
    pub fn holds(&self) -> bool {
        self.verdict.as_ref().is_none_or(|v| v.holds())
    }

    pub fn label(&self) -> &'static str {
        match &self.verdict {
            None => "skipped (zero gain)",
            Some(v) => v.label(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailingCycle {
    /// 1-based node sequence.
    pub nodes: Vec<usize>,
    pub witness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallGainReport {
    pub holds: bool,
    /// True when every non-skipped verdict came from a closed-form rule.
    pub exact: bool,
    pub cycles: Vec<CycleCheck>,
    pub failing_cycle: Option<FailingCycle>,
}

impl SmallGainReport {
    /// Plain-text table for terminal output.
    pub fn table(&self) -> String {
        let mut s = format!("{:<24} {:<20} {}\n", "cycle", "verdict", "detail");
        for c in &self.cycles {
            let nodes = c.nodes.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
            let detail = c.verdict.as_ref().map(|v| v.detail.as_str()).unwrap_or("");
            s.push_str(&format!("{:<24} {:<20} {}\n", format!("({nodes})"), c.label(), detail));
        }
        s.push_str(&format!(
            "small-gain: {}{}\n",
            if self.holds { "holds" } else { "FAILS" },
            if self.exact { " (exact)" } else { " (grid evidence)" }
        ));
        if let Some(f) = &self.failing_cycle {
            s.push_str(&format!(
                "failing cycle {:?} with witness s* = {:e}\n",
                f.nodes, f.witness
            ));
        }
        s
    }
}

fn check_cycle(g: &GainMatrix, cycle: &[usize], grid: &GridSpec) -> CycleCheck {
    let nodes = cycle.iter().map(|i| i + 1).collect();
    let gains = g.cycle_gains(cycle);
    if gains.iter().any(GainFn::is_zero) {
        return CycleCheck {
            nodes,
            verdict: None,
            rotations_checked: 0,
        };
    }
    let chain = compose_chain(&gains).expect("cycle is non-empty");
    let verdict = check_contraction(&chain, grid);
    if verdict.is_exact() || cycle.len() == 1 {
        return CycleCheck {
            nodes,
            verdict: Some(verdict),
            rotations_checked: 1,
        };
    }
    // Grid verdicts are not rotation invariant in floating point; inspect every rotation.
    let mut rotations = 1;
    for shift in 1..cycle.len() {
        let rotated: Vec<usize> = (0..cycle.len()).map(|k| cycle[(k + shift) % cycle.len()]).collect();
        let chain = compose_chain(&g.cycle_gains(&rotated)).expect("cycle is non-empty");
        let v = check_contraction(&chain, grid);
        rotations += 1;
        if !v.holds() {
            return CycleCheck {
                nodes: rotated.iter().map(|i| i + 1).collect(),
                verdict: Some(v),
                rotations_checked: rotations,
            };
        }
    }
    CycleCheck {
        nodes,
        verdict: Some(verdict),
        rotations_checked: rotations,
    }
}

/// Checks `(γ_{i₁,i₂} ∘ … ∘ γ_{i_r,i₁})(s) < s ∀ s > 0` on every simple cycle.
pub fn check_small_gain(g: &GainMatrix, grid: &GridSpec) -> SmallGainReport {
    check_small_gain_with(g, grid, Exec::Sequential)
}

pub fn check_small_gain_with(g: &GainMatrix, grid: &GridSpec, exec: Exec) -> SmallGainReport {
    let cycles = enumerate_cycles(g.n());
    let checks = exec.map_slice(&cycles, |c| check_cycle(g, c, grid));
    let failing_cycle = checks.iter().find(|c| !c.holds()).map(|c| FailingCycle {
        nodes: c.nodes.clone(),
        witness: c.verdict.as_ref().and_then(|v| v.witness()).unwrap_or(f64::NAN),
    });
    SmallGainReport {
        holds: failing_cycle.is_none(),
        exact: checks.iter().all(|c| c.verdict.as_ref().is_none_or(|v| v.is_exact())),
        cycles: checks,
        failing_cycle,
    }
}

/// Builds the nonzero `x` with `Γ(x) ≥ x` from a cycle whose composition does
/// not contract at `s`: `x_{i₁} = s`, `x_{i_k} = γ_{i_k,i_{k+1}}(x_{i_{k+1}})`.
pub fn cycle_witness(g: &GainMatrix, cycle: &[usize], s: f64) -> PlusVec {
    let mut x = vec![0.0; g.n()];
    let r = cycle.len();
    x[cycle[0]] = s;
    let mut next = s;
    for k in (1..r).rev() {
        let node = cycle[k];
        let succ = cycle[(k + 1) % r];
        next = g.get(node, succ).eval(if succ == cycle[0] { s } else { next });
        x[node] = next;
    }
    PlusVec(x)
}

/// Settings for [`gas_witness_search`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessSearch {
    pub samples: usize,
    pub radius: f64,
    pub seed: u64,
}

impl Default for WitnessSearch {
    fn default() -> Self {
        WitnessSearch {
            samples: 100_000,
            radius: 1e6,
            seed: 0,
        }
    }
}

const WITNESS_CHUNK: usize = 1024;

/// Looks for a nonzero `x ∈ ℝⁿ₊` with `Γ(x) ≥ x`, which refutes GAS of
/// `x_{k+1} = Γ(x_k)`.
///
/// Failing cycles of the small-gain test are tried first (deterministic
/// construction), then log-uniform random samples over
/// `[10⁻⁶·radius, radius]` per component.
pub fn gas_witness_search(g: &GainMatrix, opts: &WitnessSearch, exec: Exec) -> Option<PlusVec> {
    let report = check_small_gain(g, &GridSpec::default());
    for c in report.cycles.iter().filter(|c| !c.holds()) {
        let Some(s) = c.verdict.as_ref().and_then(|v| v.witness()) else {
            continue;
        };
        let cycle: Vec<usize> = c.nodes.iter().map(|v| v - 1).collect();
        let x = cycle_witness(g, &cycle, s);
        if !x.is_zero() && gamma_apply(g, &x).map(|y| x.leq(&y)).unwrap_or(false) {
            return Some(x);
        }
    }

    let n = g.n();
    let (lo, hi) = ((1e-6 * opts.radius).ln(), opts.radius.ln());
    let chunks = opts.samples.div_ceil(WITNESS_CHUNK);
    let found = exec.map_range(chunks, |chunk| {
        let mut rng = item_rng(opts.seed, chunk as u64);
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        let count = WITNESS_CHUNK.min(opts.samples - chunk * WITNESS_CHUNK);
        for _ in 0..count {
            for v in x.iter_mut() {
                *v = rng.gen_range(lo..=hi).exp();
            }
            g.apply_into(&x, &mut y);
            if x.iter().zip(&y).all(|(a, b)| a <= b) {
                return Some(PlusVec(x));
            }
        }
        None
    });
    found.into_iter().flatten().next()
}
