//! System descriptions and their right-hand sides.

use serde::{Deserialize, Serialize};

use super::signal::Signal;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Ode,
    Delay,
    SampledData,
}

/// How the bounded coupling term of the linear delay network is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceMode {
    /// `dᵢ = sign(xᵢ(t))`: the coupling always pushes away from the origin.
    #[default]
    Aligned,
    /// `dᵢ = clamp(d(t), −1, 1)` from the disturbance signal.
    Signal,
}

/// The production nonlinearity of the biochemical circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackFn {
    /// `scale·Xᵖ/(1 + Xᵖ)`
    Hill { scale: f64, p: f64 },
    /// Piecewise-linear through `(x, y)`, constant beyond the ends.
    Tabulated { x: Vec<f64>, y: Vec<f64> },
}

impl FeedbackFn {
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            FeedbackFn::Hill { scale, p } => {
                let vp = v.powf(*p);
                scale * vp / (1.0 + vp)
            }
            FeedbackFn::Tabulated { x, y } => {
                if v <= x[0] {
                    return y[0];
                }
                let last = x.len() - 1;
                if v >= x[last] {
                    return y[last];
                }
                let k = x.partition_point(|xi| *xi <= v) - 1;
                let w = (v - x[k]) / (x[k + 1] - x[k]);
                y[k] + w * (y[k + 1] - y[k])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            FeedbackFn::Hill { scale, p } => {
                if !(scale.is_finite() && *scale > 0.0 && p.is_finite() && *p > 0.0) {
                    return Err(Error::InvalidSpec("hill feedback needs scale > 0 and p > 0".into()));
                }
            }
            FeedbackFn::Tabulated { x, y } => {
                if x.len() < 2 || x.len() != y.len() {
                    return Err(Error::InvalidSpec(
                        "tabulated feedback needs ≥ 2 matching x/y points".into(),
                    ));
                }
                if x.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidSpec(
                        "tabulated feedback x must be strictly increasing".into(),
                    ));
                }
                if y.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidSpec("tabulated feedback y must be non-negative".into()));
                }
            }
        }
        Ok(())
    }
}

/// Built-in models, keyed by `name` in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Model {
    /// `ẋ = A x + b u + e d`
    LinearOde {
        a: Vec<Vec<f64>>,
        #[serde(default)]
        b: Vec<f64>,
        #[serde(default)]
        e: Vec<f64>,
    },
    /// `ẋ = 0`
    ZeroField { n: usize },
    /// `ẋᵢ = −aᵢxᵢ(t) + dᵢ·maxⱼ cᵢⱼ|xⱼ(t − r)| + bᵢu(t)`
    LinearDelayNetwork {
        a: Vec<f64>,
        c: Vec<Vec<f64>>,
        r: f64,
        #[serde(default)]
        disturbance: DisturbanceMode,
        #[serde(default)]
        input: Vec<f64>,
    },
    /// `Ẋ₁ = g(Xₙ(t − τₙ)) − a₁X₁`, `Ẋᵢ = Xᵢ₋₁(t − τᵢ₋₁) − aᵢXᵢ`
    BiochemCircuit { a: Vec<f64>, tau: Vec<f64>, g: FeedbackFn },
    /// `ẋ = A x(t) + B x(τᵢ) + b u(t) + b_held u(τᵢ) + e d(t)`
    SampledLinear {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        #[serde(default)]
        input: Vec<f64>,
        #[serde(default)]
        input_held: Vec<f64>,
        #[serde(default)]
        e: Vec<f64>,
    },
}

fn square(m: &[Vec<f64>], n: usize, what: &str) -> Result<()> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidSpec(format!("{what} must be {n}×{n}")));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSpec(format!("{what} must be finite")));
    }
    Ok(())
}

fn optional_vec(v: &[f64], n: usize, what: &str) -> Result<()> {
    if !v.is_empty() && v.len() != n {
        return Err(Error::InvalidSpec(format!(
            "{what} must have {n} entries or be omitted"
        )));
    }
    Ok(())
}

fn entry(v: &[f64], i: usize) -> f64 {
    v.get(i).copied().unwrap_or(0.0)
}

fn matvec_add(m: &[Vec<f64>], x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

impl Model {
    pub fn kind(&self) -> SystemKind {
        match self {
            Model::LinearOde { .. } | Model::ZeroField { .. } => SystemKind::Ode,
            Model::LinearDelayNetwork { .. } | Model::BiochemCircuit { .. } => SystemKind::Delay,
            Model::SampledLinear { .. } => SystemKind::SampledData,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::LinearOde { a, .. } | Model::SampledLinear { a, .. } => a.len(),
            Model::ZeroField { n } => *n,
            Model::LinearDelayNetwork { a, .. } | Model::BiochemCircuit { a, .. } => a.len(),
        }
    }

    /// Delays read by the right-hand side, one slot each.
    pub fn delays(&self) -> Vec<f64> {
        match self {
            Model::LinearDelayNetwork { r, .. } => vec![*r],
            Model::BiochemCircuit { tau, .. } => tau.clone(),
            _ => Vec::new(),
        }
    }

    pub fn max_delay(&self) -> f64 {
        self.delays().into_iter().fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::InvalidSpec("state dimension must be at least 1".into()));
        }
        match self {
            Model::LinearOde { a, b, e } => {
                square(a, n, "a")?;
                optional_vec(b, n, "b")?;
                optional_vec(e, n, "e")?;
            }
            Model::ZeroField { .. } => {}
            Model::LinearDelayNetwork { a, c, r, input, .. } => {
                if a.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidSpec("all aᵢ must be positive".into()));
                }
                square(c, n, "c")?;
                if c.iter().flatten().any(|v| *v < 0.0) {
                    return Err(Error::InvalidSpec("all cᵢⱼ must be non-negative".into()));
                }
                if !(r.is_finite() && *r >= 0.0) {
                    return Err(Error::InvalidSpec(format!("delay r must be ≥ 0, got {r}")));
                }
                optional_vec(input, n, "input")?;
            }
            Model::BiochemCircuit { a, tau, g } => {
                if a.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidSpec("all aᵢ must be positive".into()));
                }
                if tau.len() != n || tau.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidSpec(format!("tau must have {n} entries, all ≥ 0")));
                }
                g.validate()?;
            }
            Model::SampledLinear {
                a,
                b,
                input,
                input_held,
                e,
            } => {
                square(a, n, "a")?;
                square(b, n, "b")?;
                optional_vec(input, n, "input")?;
                optional_vec(input_held, n, "input_held")?;
                optional_vec(e, n, "e")?;
            }
        }
        Ok(())
    }

    /// ODE right-hand side.
    pub fn rhs_ode(&self, _t: f64, x: &[f64], u: f64, d: f64, out: &mut [f64]) {
        match self {
            Model::LinearOde { a, b, e } => {
                out.fill(0.0);
                matvec_add(a, x, out);
                for (i, o) in out.iter_mut().enumerate() {
                    *o += entry(b, i) * u + entry(e, i) * d;
                }
            }
            Model::ZeroField { .. } => out.fill(0.0),
            _ => unreachable!("rhs_ode called on a non-ODE model"),
        }
    }

    /// Delay right-hand side; `delayed[k]` is the full state at `t − delays()[k]`.
    pub fn rhs_delay(&self, _t: f64, x: &[f64], delayed: &[Vec<f64>], u: f64, d: f64, out: &mut [f64]) {
        match self {
            Model::LinearDelayNetwork {
                a,
                c,
                disturbance,
                input,
                ..
            } => {
                let w = &delayed[0];
                for i in 0..a.len() {
                    let bound = c[i].iter().zip(w).map(|(cij, wj)| cij * wj.abs()).fold(0.0, f64::max);
                    let di = match disturbance {
                        DisturbanceMode::Aligned => {
                            if x[i] >= 0.0 {
                                1.0
                            } else {
                                -1.0
                            }
                        }
                        DisturbanceMode::Signal => d.clamp(-1.0, 1.0),
                    };
                    out[i] = -a[i] * x[i] + di * bound + entry(input, i) * u;
                }
            }
            Model::BiochemCircuit { a, g, .. } => {
                let n = a.len();
                out[0] = g.eval(delayed[n - 1][n - 1]) - a[0] * x[0];
                for i in 1..n {
                    out[i] = delayed[i - 1][i - 1] - a[i] * x[i];
                }
            }
            _ => unreachable!("rhs_delay called on a non-delay model"),
        }
    }

    /// Sampled-data right-hand side with held state `xh` and held input `uh`.
    pub fn rhs_sampled(&self, x: &[f64], xh: &[f64], d: f64, u: f64, uh: f64, out: &mut [f64]) {
        match self {
            Model::SampledLinear {
                a,
                b,
                input,
                input_held,
                e,
            } => {
                out.fill(0.0);
                matvec_add(a, x, out);
                matvec_add(b, xh, out);
                for (i, o) in out.iter_mut().enumerate() {
                    *o += entry(input, i) * u + entry(input_held, i) * uh + entry(e, i) * d;
                }
            }
            _ => unreachable!("rhs_sampled called on a non-sampled model"),
        }
    }
}

/// Sampling-period function `h(x, u) ∈ (0, h_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingFn {
    Constant {
        h0: f64,
    },
    /// `h_max / (1 + kappa·(|x|∞ + |u|))`
    InverseNorm {
        h_max: f64,
        kappa: f64,
    },
}

impl SamplingFn {
    pub fn eval(&self, x: &[f64], u: f64) -> f64 {
        match self {
            SamplingFn::Constant { h0 } => *h0,
            SamplingFn::InverseNorm { h_max, kappa } => {
                let norm = x.iter().fold(0.0_f64, |m, v| m.max(v.abs())) + u.abs();
                h_max / (1.0 + kappa * norm)
            }
        }
    }

    pub fn h_max(&self) -> f64 {
        match self {
            SamplingFn::Constant { h0 } => *h0,
            SamplingFn::InverseNorm { h_max, .. } => *h_max,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            SamplingFn::Constant { h0 } => h0.is_finite() && *h0 > 0.0,
            SamplingFn::InverseNorm { h_max, kappa } => {
                h_max.is_finite() && *h_max > 0.0 && kappa.is_finite() && *kappa >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec("sampling period must map into (0, h_max]".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub h: SamplingFn,
    #[serde(default)]
    pub dtilde: Signal,
}

/// A complete continuous-time system description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub model: Model,
    #[serde(default)]
    pub input: Signal,
    #[serde(default)]
    pub disturbance: Signal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<Sampling>,
}

impl SystemSpec {
    pub fn new(model: Model) -> Self {
        SystemSpec {
            kind: model.kind(),
            model,
            input: Signal::Zero,
            disturbance: Signal::Zero,
            sampling: None,
        }
    }

    pub fn with_input(mut self, input: Signal) -> Self {
        self.input = input;
        self
    }

    pub fn with_disturbance(mut self, d: Signal) -> Self {
        self.disturbance = d;
        self
    }

    pub fn with_sampling(mut self, h: SamplingFn, dtilde: Signal) -> Self {
        self.sampling = Some(Sampling { h, dtilde });
        self
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != self.model.kind() {
            return Err(Error::InvalidSpec(format!(
                "kind {:?} does not match model kind {:?}",
                self.kind,
                self.model.kind()
            )));
        }
        self.model.validate()?;
        self.input.validate().map_err(Error::InvalidSpec)?;
        self.disturbance.validate().map_err(Error::InvalidSpec)?;
        match (&self.sampling, self.kind) {
            (Some(s), SystemKind::SampledData) => {
                s.h.validate()?;
                s.dtilde.validate().map_err(Error::InvalidSpec)?;
            }
            (None, SystemKind::SampledData) => {
                return Err(Error::InvalidSpec(
                    "sampled-data systems need a sampling section".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Initial segment on `[−r, 0]` for delay systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum History {
    Constant {
        values: Vec<f64>,
    },
    /// `offsetᵢ + amplitudeᵢ·sin(2π·freq·θ + phaseᵢ)`
    Sinusoid {
        offset: Vec<f64>,
        amplitude: Vec<f64>,
        freq: f64,
        phase: Vec<f64>,
    },
    /// Piecewise-linear through `(times[k], values[k])`, `times` increasing and ending at 0.
    PiecewiseLinear {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl History {
    pub fn dim(&self) -> usize {
        match self {
            History::Constant { values } => values.len(),
            History::Sinusoid { offset, .. } => offset.len(),
            History::PiecewiseLinear { values, .. } => values.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self, n: usize, r: f64) -> Result<()> {
        if self.dim() != n {
            return Err(Error::InvalidSpec(format!(
                "history has dimension {}, expected {n}",
                self.dim()
            )));
        }
        match self {
            History::Constant { .. } => {}
            History::Sinusoid { amplitude, phase, .. } => {
                if amplitude.len() != n || phase.len() != n {
                    return Err(Error::InvalidSpec(
                        "sinusoid history vectors must all have length n".into(),
                    ));
                }
            }
            History::PiecewiseLinear { times, values } => {
                if times.len() != values.len() || times.is_empty() || values.iter().any(|v| v.len() != n) {
                    return Err(Error::InvalidSpec(
                        "piecewise-linear history needs matching times/values".into(),
                    ));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidSpec("history times must be strictly increasing".into()));
                }
                if times[0] > -r + 1e-12 || times[times.len() - 1].abs() > 1e-12 {
                    return Err(Error::InvalidSpec(format!("history must cover [−{r}, 0]")));
                }
            }
        }
        Ok(())
    }

    /// Value at `θ ∈ [−r, 0]`.
    pub fn eval(&self, theta: f64) -> Vec<f64> {
        match self {
            History::Constant { values } => values.clone(),
            History::Sinusoid {
                offset,
                amplitude,
                freq,
                phase,
            } => offset
                .iter()
                .zip(amplitude)
                .zip(phase)
                .map(|((o, a), p)| o + a * (std::f64::consts::TAU * freq * theta + p).sin())
                .collect(),
            History::PiecewiseLinear { times, values } => {
                if theta <= times[0] {
                    return values[0].clone();
                }
                let last = times.len() - 1;
                if theta >= times[last] {
                    return values[last].clone();
                }
                let k = times.partition_point(|t| *t <= theta) - 1;
                let w = (theta - times[k]) / (times[k + 1] - times[k]);
                values[k]
                    .iter()
                    .zip(&values[k + 1])
                    .map(|(a, b)| a + w * (b - a))
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_roundtrip() {
        let json = r#"{
            "kind": "delay",
            "model": {"name": "linear_delay_network", "a": [1.0, 1.0], "c": [[0.5, 0.3], [0.2, 0.5]], "r": 0.5},
            "disturbance": {"kind": "square", "amplitude": 1.0, "period": 2.0}
        }"#;
        let spec: SystemSpec = serde_json::from_str(json).unwrap();
        spec.validate().unwrap();
        assert_eq!(spec.dim(), 2);
        assert_eq!(spec.model.delays(), vec![0.5]);
        let back: SystemSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn validation_catches_bad_parameters() {
        let bad_a = Model::LinearDelayNetwork {
            a: vec![-1.0],
            c: vec![vec![0.5]],
            r: 0.5,
            disturbance: DisturbanceMode::Aligned,
            input: vec![],
        };
        assert!(SystemSpec::new(bad_a).validate().is_err());
        let bad_tau = Model::BiochemCircuit {
            a: vec![1.0, 1.0],
            tau: vec![0.5, -0.1],
            g: FeedbackFn::Hill { scale: 3.0, p: 1.0 },
        };
        assert!(SystemSpec::new(bad_tau).validate().is_err());
        let mut mismatched = SystemSpec::new(Model::ZeroField { n: 2 });
        mismatched.kind = SystemKind::Delay;
        assert!(mismatched.validate().is_err());
        let sampled = SystemSpec::new(Model::SampledLinear {
            a: vec![vec![0.0]],
            b: vec![vec![-1.0]],
            input: vec![],
            input_held: vec![],
            e: vec![],
        });
        assert!(sampled.validate().is_err());
        assert!(sampled
            .clone()
            .with_sampling(SamplingFn::Constant { h0: 0.0 }, Signal::Zero)
            .validate()
            .is_err());
        sampled
            .with_sampling(SamplingFn::Constant { h0: 0.1 }, Signal::Zero)
            .validate()
            .unwrap();
    }

    #[test]
    fn feedback_functions() {
        let hill = FeedbackFn::Hill { scale: 3.0, p: 1.0 };
        assert_eq!(hill.eval(2.0), 2.0);
        let tab = FeedbackFn::Tabulated {
            x: vec![0.0, 1.0, 2.0],
            y: vec![0.0, 2.0, 3.0],
        };
        assert_eq!(tab.eval(0.5), 1.0);
        assert_eq!(tab.eval(1.5), 2.5);
        assert_eq!(tab.eval(10.0), 3.0);
    }

    #[test]
    fn history_interpolation() {
        let h = History::PiecewiseLinear {
            times: vec![-1.0, 0.0],
            values: vec![vec![0.0, 2.0], vec![1.0, 4.0]],
        };
        h.validate(2, 1.0).unwrap();
        assert_eq!(h.eval(-0.5), vec![0.5, 3.0]);
        assert!(h.validate(2, 2.0).is_err());
    }

    #[test]
    fn aligned_coupling_pushes_outward() {
        let m = Model::LinearDelayNetwork {
            a: vec![1.0],
            c: vec![vec![0.5]],
            r: 1.0,
            disturbance: DisturbanceMode::Aligned,
            input: vec![],
        };
        let mut out = [0.0];
        m.rhs_delay(0.0, &[-2.0], &[vec![4.0]], 0.0, 0.0, &mut out);
        assert_eq!(out[0], 2.0 - 2.0);
        m.rhs_delay(0.0, &[1.0], &[vec![-4.0]], 0.0, 0.0, &mut out);
        assert_eq!(out[0], -1.0 + 2.0);
    }
}
