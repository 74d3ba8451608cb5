//! Ready-made gain data for the delay network and the biochemical circuit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::GainFn;
use crate::network::GainMatrix;
use crate::sim::biochem::{check_hypothesis, equilibrium, fit_hypothesis, total_rate, HypothesisFit, HypothesisReport};
use crate::sim::{DisturbanceMode, FeedbackFn, Model, SystemSpec};
use crate::validation::{LyapunovSetup, RateFn};

/// `a₁(s) = s²/(2n)`, the lower bound of `maxᵢ Vᵢ` for `Vᵢ = ½xᵢ²`.
pub fn quadratic_a1(n: usize) -> GainFn {
    GainFn::power(1.0 / (2.0 * n as f64), 2.0).expect("positive coefficient")
}

/// `ẋᵢ = −aᵢxᵢ(t) + gᵢ` with `|gᵢ| ≤ maxⱼ cᵢⱼ‖xⱼ‖_r`, analysed with `Vᵢ = ½‖xᵢ‖²_r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayNetwork {
    pub a: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub r: f64,
    pub lambda: f64,
}

impl DelayNetwork {
    pub fn new(a: Vec<f64>, c: Vec<Vec<f64>>, r: f64, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Config(format!("λ must lie in (0, 1), got {lambda}")));
        }
        let net = DelayNetwork { a, c, r, lambda };
        net.spec(DisturbanceMode::Aligned).validate()?;
        Ok(net)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// `γᵢⱼ(s) = cᵢⱼ²/(λ²aᵢ²)·s`
    pub fn gains(&self) -> Result<GainMatrix> {
        let l2 = self.lambda * self.lambda;
        let k: Vec<Vec<f64>> = self
            .c
            .iter()
            .zip(&self.a)
            .map(|(row, ai)| row.iter().map(|c| c * c / (l2 * ai * ai)).collect())
            .collect();
        GainMatrix::from_linear(&k)
    }

    /// `ρᵢ(s) = 2(1 − λ)aᵢs`
    pub fn rho(&self) -> Vec<RateFn> {
        self.a
            .iter()
            .map(|ai| RateFn::Linear {
                k: 2.0 * (1.0 - self.lambda) * ai,
            })
            .collect()
    }

    pub fn a1(&self) -> GainFn {
        quadratic_a1(self.n())
    }

    pub fn spec(&self, mode: DisturbanceMode) -> SystemSpec {
        SystemSpec::new(Model::LinearDelayNetwork {
            a: self.a.clone(),
            c: self.c.clone(),
            r: self.r,
            disturbance: mode,
            input: Vec::new(),
        })
    }

    pub fn lyapunov(&self) -> Result<LyapunovSetup> {
        Ok(LyapunovSetup::scalar_blocks(self.rho(), self.gains()?, GainFn::zero()))
    }
}

/// `γ₁ₙ = ½[ln(1 + θ(e^{√2s} − 1))]²`, `γᵢ,ᵢ₋₁ = ½[ln(1 + μ(e^{√2s} − 1))]²`, all others zero.
pub fn biochem_gains(n: usize, theta: f64, mu: f64) -> Result<GainMatrix> {
    let mut g = GainMatrix::zeros(n)?;
    g.set(0, n - 1, GainFn::log_exp_sq(0.5, theta)?)?;
    for i in 1..n {
        g.set(i, i - 1, GainFn::log_exp_sq(0.5, mu)?)?;
    }
    Ok(g)
}

/// The circuit `Ẋ₁ = g(Xₙ(t − τₙ)) − a₁X₁`, `Ẋᵢ = Xᵢ₋₁(t − τᵢ₋₁) − aᵢXᵢ`, analysed in
/// log coordinates `Xᵢ = Xᵢ*·e^{xᵢ}` with `Vᵢ = ½‖xᵢ‖²_r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiochemCircuit {
    pub a: Vec<f64>,
    pub tau: Vec<f64>,
    pub g: FeedbackFn,
    pub theta: f64,
    pub mu: f64,
    pub lambda: f64,
    pub xstar: Vec<f64>,
    pub fit: HypothesisFit,
    pub hypothesis: HypothesisReport,
}

impl BiochemCircuit {
    /// Solves for `X*`, derives `K` from the grid and checks (H) with the given `λ`,
    /// then checks `θ ∈ (max{b/(b+1), λ}, 1)` and `μ ∈ (1, θ^{−1/(n−1)})`.
    pub fn new(a: Vec<f64>, tau: Vec<f64>, g: FeedbackFn, theta: f64, mu: f64, lambda: f64) -> Result<Self> {
        let n = a.len();
        let spec = SystemSpec::new(Model::BiochemCircuit {
            a: a.clone(),
            tau: tau.clone(),
            g: g.clone(),
        });
        spec.validate()?;
        let xstar = equilibrium(&a, &g)?;
        let rate = total_rate(&a);
        let fit = fit_hypothesis(&g, rate, xstar[n - 1])?;
        if lambda < fit.lambda_min || lambda >= 1.0 {
            return Err(Error::HypothesisViolated(format!(
                "λ = {lambda} outside [{}, 1)",
                fit.lambda_min
            )));
        }
        let hypothesis = check_hypothesis(&g, rate, xstar[n - 1], fit.k, lambda);
        if !hypothesis.holds {
            return Err(Error::HypothesisViolated(format!("{hypothesis:?}")));
        }
        let floor = fit.theta_floor(lambda);
        if !(theta > floor && theta < 1.0) {
            return Err(Error::Precondition(format!("θ = {theta} outside ({floor}, 1)")));
        }
        if n > 1 {
            let cap = theta.powf(-1.0 / (n as f64 - 1.0));
            if !(mu > 1.0 && mu < cap) {
                return Err(Error::Precondition(format!("μ = {mu} outside (1, {cap})")));
            }
        }
        Ok(BiochemCircuit {
            a,
            tau,
            g,
            theta,
            mu,
            lambda,
            xstar,
            fit,
            hypothesis,
        })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn spec(&self) -> SystemSpec {
        SystemSpec::new(Model::BiochemCircuit {
            a: self.a.clone(),
            tau: self.tau.clone(),
            g: self.g.clone(),
        })
    }

    pub fn gains(&self) -> Result<GainMatrix> {
        biochem_gains(self.n(), self.theta, self.mu)
    }

    pub fn rho(&self) -> Vec<RateFn> {
        let mut out = vec![RateFn::BiochemHead {
            a: self.a[0],
            lambda: self.lambda,
            theta: self.theta,
            b: self.fit.b,
        }];
        out.extend(self.a[1..].iter().map(|ai| RateFn::BiochemLink { a: *ai, mu: self.mu }));
        out
    }

    pub fn a1(&self) -> GainFn {
        quadratic_a1(self.n())
    }

    pub fn lyapunov(&self) -> Result<LyapunovSetup> {
        Ok(LyapunovSetup::scalar_blocks(self.rho(), self.gains()?, GainFn::zero()))
    }
}
