//! Iteration of the monotone discrete-time system `x_{k+1} = Γ(x_k)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::{GridSpec, Node};
use crate::network::{check_small_gain, gamma_apply, q_operator, vec_max, GainMatrix, PlusVec};
use crate::par::{item_rng, Exec};

pub const DEFAULT_TOL_CONV: f64 = 1e-9;
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum IterationStatus {
    ConvergedToZero { steps: usize },
    StalledAbove { final_norm: f64 },
    Diverged { bound: f64, steps: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub iterates: Vec<PlusVec>,
    pub status: IterationStatus,
    pub sup_norm_trace: Vec<f64>,
}

impl IterationResult {
    pub fn converged(&self) -> bool {
        matches!(self.status, IterationStatus::ConvergedToZero { .. })
    }

    /// CSV with header `k,x1,…,xn,sup_norm`.
    pub fn to_csv(&self) -> String {
        let n = self.iterates.first().map_or(0, PlusVec::dim);
        let mut s = String::from("k");
        for i in 1..=n {
            s.push_str(&format!(",x{i}"));
        }
        s.push_str(",sup_norm\n");
        for (k, (x, norm)) in self.iterates.iter().zip(&self.sup_norm_trace).enumerate() {
            s.push_str(&k.to_string());
            for v in x.as_slice() {
                s.push_str(&format!(",{v:e}"));
            }
            s.push_str(&format!(",{norm:e}\n"));
        }
        s
    }
}

/// Applies `Γ` from `x0` until the max-norm drops below `tol_conv`, exceeds
/// [`DIVERGENCE_BOUND`], or `max_steps` applications have been made.
pub fn iterate(g: &GainMatrix, x0: &PlusVec, max_steps: usize, tol_conv: f64) -> Result<IterationResult> {
    if x0.dim() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            got: x0.dim(),
        });
    }
    if max_steps == 0 {
        return Err(Error::Config("max_steps must be at least 1".into()));
    }
    let mut iterates = vec![x0.clone()];
    let mut trace = vec![x0.max_norm()];
    if trace[0] < tol_conv {
        return Ok(IterationResult {
            iterates,
            status: IterationStatus::ConvergedToZero { steps: 0 },
            sup_norm_trace: trace,
        });
    }
    for step in 1..=max_steps {
        let next = gamma_apply(g, iterates.last().expect("non-empty"))?;
        let norm = next.max_norm();
        iterates.push(next);
        trace.push(norm);
        if norm < tol_conv {
            return Ok(IterationResult {
                iterates,
                status: IterationStatus::ConvergedToZero { steps: step },
                sup_norm_trace: trace,
            });
        }
        if norm > DIVERGENCE_BOUND {
            return Ok(IterationResult {
                iterates,
                status: IterationStatus::Diverged {
                    bound: DIVERGENCE_BOUND,
                    steps: step,
                },
                sup_norm_trace: trace,
            });
        }
    }
    let final_norm = *trace.last().expect("non-empty");
    Ok(IterationResult {
        iterates,
        status: IterationStatus::StalledAbove { final_norm },
        sup_norm_trace: trace,
    })
}

/// Iterates from `y ≤ x` where `Γ(x) ≤ x`, checking `Γ⁽ᵏ⁾(y) ≤ Γ⁽ᵏ⁾(x)` at every
/// step. Returns whether the iterates from `y` reach zero.
pub fn lemma22_oracle(g: &GainMatrix, x: &PlusVec, y: &PlusVec, max_steps: usize, tol_conv: f64) -> Result<bool> {
    let gx = gamma_apply(g, x)?;
    if !gx.leq(x) {
        return Err(Error::Precondition("Γ(x) ≤ x does not hold".into()));
    }
    if !y.leq(x) {
        return Err(Error::Precondition("y ≤ x does not hold".into()));
    }
    if !check_small_gain(g, &GridSpec::default()).holds {
        return Err(Error::SmallGainNotEstablished(
            "lemma oracle requires the small-gain conditions".into(),
        ));
    }
    let (mut xs, mut ys) = (x.clone(), y.clone());
    for k in 0..=max_steps {
        if !ys.leq(&xs) {
            return Err(Error::Precondition(format!(
                "sandwich Γ⁽ᵏ⁾(y) ≤ Γ⁽ᵏ⁾(x) broken at k = {k}"
            )));
        }
        if ys.max_norm() < tol_conv {
            return Ok(true);
        }
        xs = gamma_apply(g, &xs)?;
        ys = gamma_apply(g, &ys)?;
    }
    Ok(false)
}

/// Least fixed point of `x ↦ MAX{a, Γ(x)}` by monotone iteration from `a`.
pub fn least_fixed_point(g: &GainMatrix, a: &PlusVec, max_steps: usize, tol_conv: f64) -> Result<PlusVec> {
    let mut x = a.clone();
    for _ in 0..max_steps {
        let next = vec_max(&[a.clone(), gamma_apply(g, &x)?])?;
        let delta = next
            .as_slice()
            .iter()
            .zip(x.as_slice())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        x = next;
        if delta <= tol_conv {
            return Ok(x);
        }
    }
    Err(Error::Inconclusive(format!(
        "fixed-point iteration did not settle within {max_steps} steps"
    )))
}

/// Checks that the least fixed point of `x = MAX{a, Γ(x)}` satisfies `x ≤ Q(a)`
/// (within `tol_conv` per component).
pub fn prop29_bound_check(g: &GainMatrix, a: &PlusVec, max_steps: usize, tol_conv: f64) -> Result<bool> {
    if !check_small_gain(g, &GridSpec::default()).holds {
        return Err(Error::SmallGainNotEstablished(
            "fixed-point bound requires the small-gain conditions".into(),
        ));
    }
    let x = least_fixed_point(g, a, max_steps, tol_conv)?;
    let q = q_operator(g, a)?;
    Ok(x.as_slice()
        .iter()
        .zip(q.as_slice())
        .all(|(xi, qi)| *xi <= qi + tol_conv))
}

/// Outcome of the brute-force GAS test by iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum IterationVerdict {
    /// Every start reached the tolerance or produced a contraction certificate.
    Converges,
    /// Some start produced `Γ⁽ᵏ⁻ᵐ⁾(x_m) ≥ x_m ≠ 0` or blew up.
    NonConvergent { start: usize, step: usize },
    /// Neither outcome was observed within the step budget.
    Inconclusive { start: usize },
}

impl IterationVerdict {
    pub fn converges(&self) -> bool {
        matches!(self, IterationVerdict::Converges)
    }
}

/// Settings for [`gas_by_iteration`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationOracle {
    pub starts: usize,
    pub steps: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for IterationOracle {
    fn default() -> Self {
        IterationOracle {
            starts: 20,
            steps: 200,
            tol: 1e-8,
            seed: 0,
        }
    }
}

fn is_homogeneous(g: &GainMatrix) -> bool {
    (0..g.n()).all(|i| (0..g.n()).all(|j| matches!(g.get(i, j).normalize().node(), Node::Zero | Node::Linear { .. })))
}

enum StartOutcome {
    Converged,
    Recurrent(usize),
    Undecided,
}

fn run_start(g: &GainMatrix, x0: Vec<f64>, opts: &IterationOracle, homogeneous: bool) -> StartOutcome {
    let n = g.n();
    let mut history: Vec<Vec<f64>> = vec![x0];
    for step in 1..=opts.steps {
        let mut next = vec![0.0; n];
        g.apply_into(history.last().expect("non-empty"), &mut next);
        let norm = next.iter().copied().fold(0.0, f64::max);
        if norm < opts.tol {
            return StartOutcome::Converged;
        }
        if !norm.is_finite() || norm > DIVERGENCE_BOUND {
            return StartOutcome::Recurrent(step);
        }
        for prev in &history {
            // Γ⁽ᵖ⁾(prev) ≥ prev with prev ≠ 0 is a fixed-point witness for Γ⁽ᵖ⁾.
            if prev.iter().any(|v| *v > 0.0) && next.iter().zip(prev).all(|(a, b)| a >= b) {
                return StartOutcome::Recurrent(step);
            }
            // For positively homogeneous Γ, Γ⁽ᵖ⁾(prev) ≤ c·prev with c < 1 and prev > 0
            // forces geometric decay from every start dominated by a multiple of prev.
            if homogeneous && prev.iter().all(|v| *v > 0.0) {
                let c = next.iter().zip(prev).map(|(a, b)| a / b).fold(0.0, f64::max);
                if c < 1.0 {
                    return StartOutcome::Converged;
                }
            }
        }
        history.push(next);
    }
    StartOutcome::Undecided
}

/// Decides GAS of `x_{k+1} = Γ(x_k)` by iterating from random starts in `(0, 1]ⁿ`,
/// independently of the cycle test.
pub fn gas_by_iteration(g: &GainMatrix, opts: &IterationOracle) -> IterationVerdict {
    let homogeneous = is_homogeneous(g);
    let mut rng = item_rng(opts.seed, 0);
    let mut undecided = None;
    for start in 0..opts.starts {
        let x0: Vec<f64> = (0..g.n()).map(|_| 1.0 - rng.gen::<f64>()).collect();
        match run_start(g, x0, opts, homogeneous) {
            StartOutcome::Converged => {}
            StartOutcome::Recurrent(step) => return IterationVerdict::NonConvergent { start, step },
            StartOutcome::Undecided => {
                undecided.get_or_insert(start);
            }
        }
    }
    match undecided {
        Some(start) => IterationVerdict::Inconclusive { start },
        None => IterationVerdict::Converges,
    }
}

/// Runs [`gas_by_iteration`] over a batch of matrices.
pub fn gas_by_iteration_batch(gs: &[GainMatrix], opts: &IterationOracle, exec: Exec) -> Vec<IterationVerdict> {
    exec.map_range(gs.len(), |i| {
        gas_by_iteration(
            &gs[i],
            &IterationOracle {
                seed: opts.seed.wrapping_add(i as u64),
                ..*opts
            },
        )
    })
}
