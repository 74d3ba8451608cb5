use super::model::{History, SystemKind, SystemSpec};
use super::Trajectory;
use crate::error::{Error, Result};

/// Trajectories whose max-norm exceeds this are reported as finite escape.
pub const ESCAPE_BOUND: f64 = 1e12;

const ALIGN_TOL: f64 = 1e-12;
const MIN_SAMPLING_STEP: f64 = 1e-14;

fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::Config(format!("horizon must be ≥ 0, got {horizon}")));
    }
    Ok((horizon / dt - 1e-9).ceil().max(0.0) as usize)
}

fn check_escape(t: f64, x: &[f64]) -> Result<()> {
    let norm = x.iter().fold(
        0.0_f64,
        |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY },
    );
    if norm > ESCAPE_BOUND {
        return Err(Error::FiniteEscape { t, norm });
    }
    Ok(())
}

fn check_dim(spec: &SystemSpec, got: usize) -> Result<()> {
    let expected = spec.dim();
    if got != expected {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn axpy(x: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn rk4_combine(x: &[f64], h: f64, k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Dispatch on `spec.kind`. Delay systems use `history` when given, else the constant segment `x0`.
pub fn integrate(
    spec: &SystemSpec,
    x0: &[f64],
    history: Option<&History>,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    match spec.kind {
        SystemKind::Ode => integrate_ode(spec, x0, horizon, dt),
        SystemKind::Delay => match history {
            Some(h) => integrate_delay(spec, h, horizon, dt),
            None => integrate_delay(spec, &History::Constant { values: x0.to_vec() }, horizon, dt),
        },
        SystemKind::SampledData => integrate_sampled(spec, x0, horizon, dt),
    }
}

/// Classical RK4 on `ẋ = f(t, x, u(t), d(t))`.
pub fn integrate_ode(spec: &SystemSpec, x0: &[f64], horizon: f64, dt: f64) -> Result<Trajectory> {
    spec.validate()?;
    if spec.kind != SystemKind::Ode {
        return Err(Error::InvalidSpec("integrate_ode needs an ODE system".into()));
    }
    check_dim(spec, x0.len())?;
    let steps = step_count(horizon, dt)?;
    let n = x0.len();
    let f = |t: f64, x: &[f64]| {
        let mut out = vec![0.0; n];
        spec.model
            .rhs_ode(t, x, spec.input.eval(t), spec.disturbance.eval(t), &mut out);
        out
    };
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.to_vec());
    check_escape(0.0, x0)?;
    for k in 0..steps {
        let t = k as f64 * dt;
        let x = &states[k];
        let k1 = f(t, x);
        let k2 = f(t + dt / 2.0, &axpy(x, dt / 2.0, &k1));
        let k3 = f(t + dt / 2.0, &axpy(x, dt / 2.0, &k2));
        let k4 = f(t + dt, &axpy(x, dt, &k3));
        let next = rk4_combine(x, dt, &k1, &k2, &k3, &k4);
        check_escape(t + dt, &next)?;
        states.push(next);
    }
    Ok(Trajectory {
        t0: 0.0,
        dt,
        states,
        sampling_times: None,
        history: None,
    })
}

/// RK4 by the method of steps. Every delay must be a multiple of `dt`;
/// midpoint stages read delayed states by linear interpolation between grid nodes.
pub fn integrate_delay(spec: &SystemSpec, history: &History, horizon: f64, dt: f64) -> Result<Trajectory> {
    spec.validate()?;
    if spec.kind != SystemKind::Delay {
        return Err(Error::InvalidSpec("integrate_delay needs a delay system".into()));
    }
    let n = spec.dim();
    let r = spec.model.max_delay();
    history.validate(n, r)?;
    let steps = step_count(horizon, dt)?;

    let mut lags = Vec::new();
    for tau in spec.model.delays() {
        let d = (tau / dt).round();
        if (d * dt - tau).abs() > ALIGN_TOL * tau.max(1.0) {
            return Err(Error::Config(format!("delay {tau} is not a multiple of dt = {dt}")));
        }
        lags.push(d as usize);
    }
    let h = lags.iter().copied().max().unwrap_or(0);

    let mut all: Vec<Vec<f64>> = (0..=h).map(|m| history.eval(-((h - m) as f64) * dt)).collect();
    for (m, x) in all.iter().enumerate() {
        check_escape(-((h - m) as f64) * dt, x)?;
    }
    all.reserve(steps);

    let f = |t: f64, x: &[f64], delayed: &[Vec<f64>]| {
        let mut out = vec![0.0; n];
        spec.model
            .rhs_delay(t, x, delayed, spec.input.eval(t), spec.disturbance.eval(t), &mut out);
        out
    };

    for k in 0..steps {
        let c = h + k;
        let t = k as f64 * dt;
        // stage 0: t, stage 1: t + dt/2, stage 2: t + dt
        let delayed_at = |all: &[Vec<f64>], stage: usize, current: &[f64]| -> Vec<Vec<f64>> {
            lags.iter()
                .map(|&d| {
                    if d == 0 {
                        return current.to_vec();
                    }
                    let lo = &all[c - d];
                    let hi = &all[c - d + 1];
                    match stage {
                        0 => lo.clone(),
                        1 => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
                        _ => hi.clone(),
                    }
                })
                .collect()
        };
        let x = all[c].clone();
        let k1 = f(t, &x, &delayed_at(&all, 0, &x));
        let x2 = axpy(&x, dt / 2.0, &k1);
        let k2 = f(t + dt / 2.0, &x2, &delayed_at(&all, 1, &x2));
        let x3 = axpy(&x, dt / 2.0, &k2);
        let k3 = f(t + dt / 2.0, &x3, &delayed_at(&all, 1, &x3));
        let x4 = axpy(&x, dt, &k3);
        let k4 = f(t + dt, &x4, &delayed_at(&all, 2, &x4));
        let next = rk4_combine(&x, dt, &k1, &k2, &k3, &k4);
        check_escape(t + dt, &next)?;
        all.push(next);
    }
    let history = all[..=h].to_vec();
    let states = all.split_off(h);
    Ok(Trajectory {
        t0: 0.0,
        dt,
        states,
        sampling_times: None,
        history: Some(history),
    })
}

/// RK4 between grid nodes and sampling instants `τᵢ₊₁ = τᵢ + exp(−d̃(τᵢ))·h(x(τᵢ), u(τᵢ))`,
/// holding `x(τᵢ)` and `u(τᵢ)` on each sampling interval.
pub fn integrate_sampled(spec: &SystemSpec, x0: &[f64], horizon: f64, dt: f64) -> Result<Trajectory> {
    spec.validate()?;
    if spec.kind != SystemKind::SampledData {
        return Err(Error::InvalidSpec(
            "integrate_sampled needs a sampled-data system".into(),
        ));
    }
    check_dim(spec, x0.len())?;
    let sampling = spec.sampling.as_ref().expect("validated");
    let steps = step_count(horizon, dt)?;
    let n = x0.len();
    let f = |t: f64, x: &[f64], xh: &[f64], uh: f64| {
        let mut out = vec![0.0; n];
        spec.model
            .rhs_sampled(x, xh, spec.disturbance.eval(t), spec.input.eval(t), uh, &mut out);
        out
    };
    let next_instant = |tau: f64, xh: &[f64], uh: f64| -> Result<f64> {
        let dtilde = sampling.dtilde.eval(tau);
        if !(dtilde.is_finite() && dtilde >= 0.0) {
            return Err(Error::InvalidSpec(format!("d̃({tau}) = {dtilde} must be ≥ 0")));
        }
        let h = sampling.h.eval(xh, uh);
        if !(h > 0.0 && h <= sampling.h.h_max() * (1.0 + 1e-12)) {
            return Err(Error::InvalidSpec(format!("sampling period {h} outside (0, h_max]")));
        }
        let step = (-dtilde).exp() * h;
        if step < MIN_SAMPLING_STEP {
            return Err(Error::Config(format!(
                "sampling interval collapsed to {step:e} at t = {tau}"
            )));
        }
        Ok(tau + step)
    };

    check_escape(0.0, x0)?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.to_vec());
    let mut taus = vec![0.0];
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut xh = x0.to_vec();
    let mut uh = spec.input.eval(0.0);
    let mut tau_next = next_instant(0.0, &xh, uh)?;
    let mut k = 1;
    while k <= steps {
        let node = k as f64 * dt;
        let (target, at_node, at_sample) = if (tau_next - node).abs() <= ALIGN_TOL {
            (node, true, true)
        } else if tau_next < node {
            (tau_next, false, true)
        } else {
            (node, true, false)
        };
        let h = target - t;
        if h > 0.0 {
            let k1 = f(t, &x, &xh, uh);
            let k2 = f(t + h / 2.0, &axpy(&x, h / 2.0, &k1), &xh, uh);
            let k3 = f(t + h / 2.0, &axpy(&x, h / 2.0, &k2), &xh, uh);
            let k4 = f(t + h, &axpy(&x, h, &k3), &xh, uh);
            x = rk4_combine(&x, h, &k1, &k2, &k3, &k4);
            check_escape(target, &x)?;
        }
        t = target;
        if at_node {
            states.push(x.clone());
            k += 1;
        }
        if at_sample {
            taus.push(tau_next);
            xh = x.clone();
            uh = spec.input.eval(tau_next);
            tau_next = next_instant(tau_next, &xh, uh)?;
        }
    }
    Ok(Trajectory {
        t0: 0.0,
        dt,
        states,
        sampling_times: Some(taus),
        history: None,
    })
}
