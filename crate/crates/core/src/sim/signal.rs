use serde::{Deserialize, Serialize};

/// Deterministic scalar signal `t ↦ s(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Signal {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// Cycles through `values`, each held for `period`.
    PiecewiseConstant {
        values: Vec<f64>,
        period: f64,
    },
    /// `offset ± amplitude`, switching every half period.
    Square {
        amplitude: f64,
        period: f64,
        #[serde(default)]
        offset: f64,
    },
    Sinusoid {
        amplitude: f64,
        freq: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Piecewise-constant values drawn uniformly from `[−amplitude, amplitude]`, one per period.
    Noise {
        amplitude: f64,
        period: f64,
        seed: u64,
    },
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Signal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Constant { value } => *value,
            Signal::PiecewiseConstant { values, period } => {
                if values.is_empty() {
                    return 0.0;
                }
                let k = (t / period).floor().max(0.0) as usize;
                values[k % values.len()]
            }
            Signal::Square {
                amplitude,
                period,
                offset,
            } => {
                let phase = (t / period).rem_euclid(1.0);
                offset + if phase < 0.5 { *amplitude } else { -amplitude }
            }
            Signal::Sinusoid {
                amplitude,
                freq,
                phase,
                offset,
            } => offset + amplitude * (std::f64::consts::TAU * freq * t + phase).sin(),
            Signal::Noise {
                amplitude,
                period,
                seed,
            } => {
                let k = (t / period).floor() as i64 as u64;
                let bits = splitmix64(seed ^ splitmix64(k));
                let unit = (bits >> 11) as f64 / (1u64 << 53) as f64;
                amplitude * (2.0 * unit - 1.0)
            }
        }
    }

    /// Upper bound on `|s(t)|` over all `t`.
    pub fn sup_abs(&self) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Constant { value } => value.abs(),
            Signal::PiecewiseConstant { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
            Signal::Square { amplitude, offset, .. } => (offset + amplitude).abs().max((offset - amplitude).abs()),
            Signal::Sinusoid { amplitude, offset, .. } => offset.abs() + amplitude.abs(),
            Signal::Noise { amplitude, .. } => amplitude.abs(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("signal {what} must be finite"))
            }
        };
        let period = |p: f64| {
            if p.is_finite() && p > 0.0 {
                Ok(())
            } else {
                Err(format!("signal period must be positive, got {p}"))
            }
        };
        match self {
            Signal::Zero => Ok(()),
            Signal::Constant { value } => finite(*value, "value"),
            Signal::PiecewiseConstant { values, period: p } => {
                period(*p)?;
                values.iter().try_for_each(|v| finite(*v, "value"))
            }
            Signal::Square {
                amplitude,
                period: p,
                offset,
            } => {
                period(*p)?;
                finite(*amplitude, "amplitude")?;
                finite(*offset, "offset")
            }
            Signal::Sinusoid {
                amplitude,
                freq,
                phase,
                offset,
            } => [*amplitude, *freq, *phase, *offset]
                .iter()
                .try_for_each(|v| finite(*v, "parameter")),
            Signal::Noise {
                amplitude, period: p, ..
            } => {
                period(*p)?;
                finite(*amplitude, "amplitude")
            }
        }
    }
}
