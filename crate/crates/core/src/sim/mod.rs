//! Fixed-step simulation of ODE, delay and sampled-data systems.

pub mod biochem;
mod integrate;
pub mod model;
pub mod signal;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use integrate::{integrate, integrate_delay, integrate_ode, integrate_sampled, ESCAPE_BOUND};
pub use model::{DisturbanceMode, FeedbackFn, History, Model, Sampling, SamplingFn, SystemKind, SystemSpec};
pub use signal::Signal;

/// States on the uniform grid `t0 + k·dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
    /// Sampling instants `τ₀ = t0 < τ₁ < …` for sampled-data runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_times: Option<Vec<f64>>,
    /// The initial segment on the grid `t0 − m·dt, …, t0` for delay runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|k| self.time(k)).collect()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    pub fn norms(&self) -> Vec<f64> {
        self.states
            .iter()
            .map(|x| x.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .collect()
    }

    /// State at `t`, or from the stored history when `t < t0`; linear between grid nodes.
    pub fn state_at(&self, t: f64) -> Option<Vec<f64>> {
        let pos = (t - self.t0) / self.dt;
        let (nodes, offset): (Vec<&Vec<f64>>, f64) = match &self.history {
            Some(h) if pos < 0.0 => {
                let m = h.len() as f64 - 1.0;
                (h.iter().collect(), m)
            }
            _ => (self.states.iter().collect(), 0.0),
        };
        let p = pos + offset;
        if p < -1e-9 || p > nodes.len() as f64 - 1.0 + 1e-9 {
            return None;
        }
        let k = (p.floor().max(0.0) as usize).min(nodes.len() - 1);
        let w = p - k as f64;
        if w < 1e-9 || k + 1 >= nodes.len() {
            return Some(nodes[k].clone());
        }
        Some(
            nodes[k]
                .iter()
                .zip(nodes[k + 1])
                .map(|(a, b)| a + w * (b - a))
                .collect(),
        )
    }

    /// CSV with header `t,x1,…,xn`.
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut s = String::from("t");
        for i in 1..=n {
            let _ = write!(s, ",x{i}");
        }
        s.push('\n');
        for (k, x) in self.states.iter().enumerate() {
            let _ = write!(s, "{}", self.time(k));
            for v in x {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn sampling_csv(&self) -> Option<String> {
        self.sampling_times.as_ref().map(|ts| {
            let mut s = String::from("tau\n");
            for t in ts {
                let _ = writeln!(s, "{t}");
            }
            s
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let tr = Trajectory {
            t0: 0.0,
            dt: 0.5,
            states: vec![vec![1.0, 2.0], vec![0.5, 1.0]],
            sampling_times: None,
            history: None,
        };
        assert_eq!(tr.to_csv(), "t,x1,x2\n0,1,2\n0.5,0.5,1\n");
        assert_eq!(tr.state_at(0.25).unwrap(), vec![0.75, 1.5]);
        assert!(tr.state_at(2.0).is_none());
        assert!(tr.sampling_csv().is_none());
    }

    #[test]
    fn history_lookup() {
        let tr = Trajectory {
            t0: 0.0,
            dt: 1.0,
            states: vec![vec![3.0], vec![4.0]],
            sampling_times: None,
            history: Some(vec![vec![1.0], vec![2.0], vec![3.0]]),
        };
        assert_eq!(tr.state_at(-2.0).unwrap(), vec![1.0]);
        assert_eq!(tr.state_at(-0.5).unwrap(), vec![2.5]);
        assert_eq!(tr.state_at(0.5).unwrap(), vec![3.5]);
    }
}
