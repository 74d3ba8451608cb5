//! Equilibrium, hypothesis (H) and log coordinates for the biochemical circuit.

use serde::{Deserialize, Serialize};

use super::model::{FeedbackFn, Model, SystemSpec};
use super::Trajectory;
use crate::error::{Error, Result};

const ROOT_TOL: f64 = 1e-10;
const H_REL_TOL: f64 = 1e-9;

fn circuit(spec: &SystemSpec) -> Result<(&[f64], &FeedbackFn)> {
    match &spec.model {
        Model::BiochemCircuit { a, g, .. } => Ok((a, g)),
        _ => Err(Error::InvalidSpec("expected a biochem_circuit model".into())),
    }
}

/// Product of all degradation rates.
pub fn total_rate(a: &[f64]) -> f64 {
    a.iter().product()
}

/// The equilibrium `X*` with `a·Xₙ* = g(Xₙ*)` and `(a₁⋯aᵢ)Xᵢ* = g(Xₙ*)`.
pub fn biochem_equilibrium(spec: &SystemSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let (a, g) = circuit(spec)?;
    equilibrium(a, g)
}

pub fn equilibrium(a: &[f64], g: &FeedbackFn) -> Result<Vec<f64>> {
    let rate = total_rate(a);
    let f = |x: f64| g.eval(x) - rate * x;
    // scan a log grid for the first sign change from + to −
    let grid: Vec<f64> = (0..=1600).map(|k| 10f64.powf(-8.0 + k as f64 * 0.01)).collect();
    let mut bracket = None;
    for w in grid.windows(2) {
        let (fl, fh) = (f(w[0]), f(w[1]));
        if fl == 0.0 {
            bracket = Some((w[0], w[0]));
            break;
        }
        if fl > 0.0 && fh <= 0.0 {
            bracket = Some((w[0], w[1]));
            break;
        }
    }
    let (mut lo, mut hi) = bracket
        .ok_or_else(|| Error::HypothesisViolated(format!("no positive root of g(X) = {rate}·X in [1e-8, 1e8]")))?;
    for _ in 0..300 {
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let xn = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    let residual = f(xn).abs();
    if residual > ROOT_TOL * xn.max(1.0) {
        return Err(Error::HypothesisViolated(format!(
            "equilibrium residual {residual:e} too large"
        )));
    }
    let gx = g.eval(xn);
    let mut partial = 1.0;
    let mut out = Vec::with_capacity(a.len());
    for ai in a {
        partial *= ai;
        out.push(gx / partial);
    }
    // keep the closing identity exact for the last component
    let last = out.len() - 1;
    out[last] = xn;
    Ok(out)
}

/// `xᵢ = ln(Xᵢ / Xᵢ*)`.
pub fn log_transform(x: &[f64], xstar: &[f64]) -> Result<Vec<f64>> {
    if x.len() != xstar.len() {
        return Err(Error::DimensionMismatch {
            expected: xstar.len(),
            got: x.len(),
        });
    }
    x.iter()
        .zip(xstar)
        .map(|(v, s)| {
            if *v > 0.0 && *s > 0.0 {
                Ok((v / s).ln())
            } else {
                Err(Error::Domain(format!(
                    "log transform needs positive entries, got {v} / {s}"
                )))
            }
        })
        .collect()
}

/// `Xᵢ = Xᵢ*·exp(xᵢ)`.
pub fn log_transform_inverse(x: &[f64], xstar: &[f64]) -> Vec<f64> {
    x.iter().zip(xstar).map(|(v, s)| s * v.exp()).collect()
}

pub fn log_transform_trajectory(traj: &Trajectory, xstar: &[f64]) -> Result<Trajectory> {
    let map = |rows: &[Vec<f64>]| rows.iter().map(|x| log_transform(x, xstar)).collect::<Result<Vec<_>>>();
    Ok(Trajectory {
        t0: traj.t0,
        dt: traj.dt,
        states: map(&traj.states)?,
        sampling_times: traj.sampling_times.clone(),
        history: traj.history.as_deref().map(map).transpose()?,
    })
}

/// Log-coordinate right-hand side:
/// `ẋ₁ = a₁(g(Xₙ*e^{wₙ})/g(Xₙ*)·e^{−x₁} − 1)`, `ẋᵢ = aᵢ(e^{wᵢ₋₁ − xᵢ} − 1)`,
/// where `wⱼ` is the delayed value read by equation `j + 1`.
pub fn log_rhs(a: &[f64], g: &FeedbackFn, xstar: &[f64], x: &[f64], w: &[f64], out: &mut [f64]) {
    let n = a.len();
    let gstar = g.eval(xstar[n - 1]);
    out[0] = a[0] * (g.eval(xstar[n - 1] * w[n - 1].exp()) / gstar * (-x[0]).exp() - 1.0);
    for i in 1..n {
        out[i] = a[i] * ((w[i - 1] - x[i]).exp() - 1.0);
    }
}

/// Which inequality of (H) fails first on the grid, if any.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub holds: bool,
    pub k: f64,
    pub lambda: f64,
    /// `(X, lhs, a⁻¹g(X))` where `(K + Xₙ*)X/(K + X) > a⁻¹g(X)`.
    pub left_violation: Option<(f64, f64, f64)>,
    /// `(X, a⁻¹g(X), rhs)` where `a⁻¹g(X) > Xₙ* + λ|X − Xₙ*|`.
    pub right_violation: Option<(f64, f64, f64)>,
}

fn h_grid(xn: f64) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..=2400).map(|k| xn * 10f64.powf(-6.0 + k as f64 * 0.005)).collect();
    xs.push(0.0);
    xs.sort_by(|a, b| a.total_cmp(b));
    xs
}

/// Checks `(K + Xₙ*)X/(K + X) ≤ a⁻¹g(X) ≤ Xₙ* + λ|X − Xₙ*|` on a grid over `[0, 10⁶Xₙ*]`.
pub fn check_hypothesis(g: &FeedbackFn, rate: f64, xn: f64, k: f64, lambda: f64) -> HypothesisReport {
    let mut left = None;
    let mut right = None;
    for x in h_grid(xn) {
        let q = g.eval(x) / rate;
        let lhs = (k + xn) * x / (k + x);
        if left.is_none() && lhs > q + H_REL_TOL * q.abs().max(xn) {
            left = Some((x, lhs, q));
        }
        let rhs = xn + lambda * (x - xn).abs();
        if right.is_none() && q > rhs + H_REL_TOL * rhs.abs().max(xn) {
            right = Some((x, q, rhs));
        }
    }
    HypothesisReport {
        holds: left.is_none() && right.is_none() && k > 0.0 && (0.0..1.0).contains(&lambda),
        k,
        lambda,
        left_violation: left,
        right_violation: right,
    }
}

/// Constants of (H) derived from the grid: the smallest feasible `K` and the infimum `λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFit {
    pub xn_star: f64,
    pub k: f64,
    pub k_upper: f64,
    pub lambda_min: f64,
    /// `b = K / Xₙ*`
    pub b: f64,
}

impl HypothesisFit {
    /// Lower end of the admissible `θ` window, `max{b/(b+1), λ}`.
    pub fn theta_floor(&self, lambda: f64) -> f64 {
        (self.b / (self.b + 1.0)).max(lambda)
    }
}

pub fn fit_hypothesis(g: &FeedbackFn, rate: f64, xn: f64) -> Result<HypothesisFit> {
    let mut k_lo = 0.0_f64;
    let mut k_hi = f64::INFINITY;
    let mut lambda_min = 0.0_f64;
    for x in h_grid(xn) {
        let q = g.eval(x) / rate;
        let gap = x - q;
        let need = x * (q - xn);
        // K·(X − q) ≤ X(q − Xₙ*)
        if gap.abs() <= H_REL_TOL * x.max(xn) {
            if need < -H_REL_TOL * xn * x.max(xn) {
                return Err(Error::HypothesisViolated(format!(
                    "left inequality fails at X = {x} for every K > 0"
                )));
            }
        } else if gap > 0.0 {
            k_hi = k_hi.min(need / gap);
        } else {
            k_lo = k_lo.max(need / gap);
        }
        let dist = (x - xn).abs();
        if dist > H_REL_TOL * xn {
            lambda_min = lambda_min.max((q - xn) / dist);
        }
    }
    if k_hi <= 0.0 || k_lo > k_hi * (1.0 + 1e-6) {
        return Err(Error::HypothesisViolated(format!(
            "left inequality needs K ≥ {k_lo} and K ≤ {k_hi}"
        )));
    }
    if lambda_min >= 1.0 {
        return Err(Error::HypothesisViolated(format!(
            "right inequality needs λ ≥ {lambda_min}"
        )));
    }
    let k = if k_lo > 0.0 {
        k_lo.min(k_hi)
    } else {
        (1e-3 * xn).min(0.5 * k_hi)
    };
    Ok(HypothesisFit {
        xn_star: xn,
        k,
        k_upper: k_hi,
        lambda_min,
        b: k / xn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::model::SystemSpec;

    fn spec(a: Vec<f64>, scale: f64) -> SystemSpec {
        let n = a.len();
        SystemSpec::new(Model::BiochemCircuit {
            a,
            tau: vec![0.5; n],
            g: FeedbackFn::Hill { scale, p: 1.0 },
        })
    }

    #[test]
    fn equilibrium_of_doubling_hill() {
        // g = 2aX/(1+X) ⟹ Xₙ* = 1
        let a = vec![1.5, 2.0];
        let xs = biochem_equilibrium(&spec(a.clone(), 2.0 * 3.0)).unwrap();
        assert!((xs[1] - 1.0).abs() < 1e-10);
        let g = 6.0 * xs[1] / (1.0 + xs[1]);
        assert!((1.5 * xs[0] - g).abs() < 1e-10);
    }

    #[test]
    fn single_node_equilibrium() {
        let xs = biochem_equilibrium(&spec(vec![2.0], 6.0)).unwrap();
        assert_eq!(xs.len(), 1);
        assert!((xs[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn no_root_is_a_hypothesis_violation() {
        // g(X) = ½aX/(1+X) < aX everywhere
        assert!(matches!(
            biochem_equilibrium(&spec(vec![1.0], 0.5)),
            Err(Error::HypothesisViolated(_))
        ));
    }

    #[test]
    fn log_round_trip() {
        let xs = [2.0, 0.5, 3.0];
        assert_eq!(log_transform(&xs, &xs).unwrap(), vec![0.0; 3]);
        let e: Vec<f64> = xs.iter().map(|v| v * std::f64::consts::E).collect();
        for v in log_transform(&e, &xs).unwrap() {
            assert!((v - 1.0).abs() < 1e-15);
        }
        let x = [0.3, -1.2, 4.0];
        let back = log_transform(&log_transform_inverse(&x, &xs), &xs).unwrap();
        for (a, b) in back.iter().zip(x) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
        assert!(matches!(log_transform(&[0.0, 1.0, 1.0], &xs), Err(Error::Domain(_))));
    }

    #[test]
    fn hypothesis_fit_for_tripling_hill() {
        // q(X) = 3X/(1+X): K = 1 forced, λ → 1/3
        let g = FeedbackFn::Hill { scale: 3.0, p: 1.0 };
        let fit = fit_hypothesis(&g, 1.0, 2.0).unwrap();
        assert!((fit.k - 1.0).abs() < 1e-6);
        assert!(fit.lambda_min < 1.0 / 3.0 && fit.lambda_min > 0.33);
        assert!(check_hypothesis(&g, 1.0, 2.0, 1.0, 0.35).holds);
        let r = check_hypothesis(&g, 1.0, 2.0, 1.0, 0.2);
        assert!(!r.holds && r.right_violation.is_some() && r.left_violation.is_none());
        let l = check_hypothesis(&g, 1.0, 2.0, 3.0, 0.35);
        assert!(!l.holds && l.left_violation.is_some());
    }

    #[test]
    fn steep_hill_reports_failing_side() {
        // p = 4 with X* = 1: left side fails for small X
        let g = FeedbackFn::Hill { scale: 2.0, p: 4.0 };
        let rate = 1.0;
        let xs = equilibrium(&[rate], &g).unwrap();
        assert!(fit_hypothesis(&g, rate, xs[0]).is_err());
    }
}
