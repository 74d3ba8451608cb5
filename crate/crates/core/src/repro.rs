//! Pinned end-to-end recipes shared by the command-line tool and the test suites.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::builtin::{BiochemCircuit, DelayNetwork};
use crate::error::{Error, Result};
use crate::gain::GridSpec;
use crate::iteration::{gas_by_iteration, IterationOracle, IterationVerdict};
use crate::network::{check_small_gain, GainMatrix};
use crate::par::{item_rng, Exec};
use crate::sim::biochem::log_transform_trajectory;
use crate::sim::{integrate_delay, integrate_ode, DisturbanceMode, FeedbackFn, History, Model, SystemSpec, Trajectory};
use crate::validation::{check_convergence, check_implication, lyapunov_channels, ImplicationOptions, TAIL_FRACTION};

pub const RECIPES: [&str; 4] = ["example51", "example52", "prop27-sweep", "rk4-order"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecipeReport {
    pub name: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// A representative trajectory, if the recipe simulates.
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

impl RecipeReport {
    fn new(name: &str, seed: u64) -> Self {
        RecipeReport {
            name: name.into(),
            seed,
            passed: true,
            checks: Vec::new(),
            trajectory: None,
        }
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.passed &= passed;
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let _ = writeln!(s, "{}: {}", self.name, if self.passed { "PASS" } else { "FAIL" });
        s
    }
}

pub fn run(name: &str, seed: u64, exec: Exec) -> Result<RecipeReport> {
    match name {
        "example51" => example51(seed, exec),
        "example52" => example52(seed, exec),
        "prop27-sweep" => Ok(prop27_sweep(seed, 500, exec).into_report(seed)),
        "rk4-order" => Ok(rk4_order()?.into_report(seed)),
        other => Err(Error::Config(format!(
            "unknown recipe {other:?}; available: {}",
            RECIPES.join(", ")
        ))),
    }
}

/// Random max-linear matrix with `n ∈ {2, 3, 4}` and coefficients uniform in `[0, 1.5]`.
pub fn random_linear_matrix<R: Rng>(rng: &mut R) -> GainMatrix {
    let n = rng.gen_range(2..=4);
    let k: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.gen_range(0.0..=1.5)).collect())
        .collect();
    GainMatrix::from_linear(&k).expect("valid coefficients")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub total: usize,
    pub agree: usize,
    pub small_gain_holds: usize,
    /// Instance indices where the two verdicts differ or iteration was inconclusive.
    pub disagreements: Vec<usize>,
}

impl SweepReport {
    fn into_report(self, seed: u64) -> RecipeReport {
        let mut r = RecipeReport::new("prop27-sweep", seed);
        r.push(
            "cycle test vs iteration",
            self.agree == self.total,
            format!(
                "{}/{} agree ({} small-gain, {} not)",
                self.agree,
                self.total,
                self.small_gain_holds,
                self.total - self.small_gain_holds
            ),
        );
        r
    }
}

/// Cycle test against brute-force iteration on `count` random matrices.
pub fn prop27_sweep(seed: u64, count: usize, exec: Exec) -> SweepReport {
    let grid = GridSpec::default();
    let outcomes = exec.map_range(count, |k| {
        let mut rng = item_rng(seed, k as u64);
        let g = random_linear_matrix(&mut rng);
        let holds = check_small_gain(&g, &grid).holds;
        let oracle = IterationOracle {
            seed: rng.gen(),
            ..Default::default()
        };
        let verdict = gas_by_iteration(&g, &oracle);
        let agree = match verdict {
            IterationVerdict::Converges => holds,
            IterationVerdict::NonConvergent { .. } => !holds,
            IterationVerdict::Inconclusive { .. } => false,
        };
        (holds, agree)
    });
    SweepReport {
        total: count,
        agree: outcomes.iter().filter(|o| o.1).count(),
        small_gain_holds: outcomes.iter().filter(|o| o.0).count(),
        disagreements: outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.1)
            .map(|(k, _)| k)
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub dts: [f64; 3],
    /// `|x_dt(1) − e⁻¹|`
    pub errors: [f64; 3],
    /// `(x_dt − x_{dt/2}) / (x_{dt/2} − x_{dt/4})`
    pub richardson_ratio: f64,
    /// `log₂` of the Richardson ratio.
    pub order: f64,
    /// `log₂(e₁/e₂)` and `log₂(e₂/e₃)` against the exact solution.
    pub exact_orders: [f64; 2],
}

impl OrderReport {
    pub fn passed(&self) -> bool {
        (3.5..=4.5).contains(&self.order)
    }

    fn into_report(self, seed: u64) -> RecipeReport {
        let mut r = RecipeReport::new("rk4-order", seed);
        r.push(
            "richardson order",
            self.passed(),
            format!(
                "ratio {:.4}, order {:.4} (exact-solution orders {:.4}, {:.4})",
                self.richardson_ratio, self.order, self.exact_orders[0], self.exact_orders[1]
            ),
        );
        r
    }
}

/// RK4 on `ẋ = −x`, `x(0) = 1` up to `t = 1` at `dt ∈ {10⁻², 5·10⁻³, 2.5·10⁻³}`.
pub fn rk4_order() -> Result<OrderReport> {
    let spec = SystemSpec::new(Model::LinearOde {
        a: vec![vec![-1.0]],
        b: Vec::new(),
        e: Vec::new(),
    });
    let dts = [1e-2, 5e-3, 2.5e-3];
    let mut finals = [0.0; 3];
    for (f, dt) in finals.iter_mut().zip(dts) {
        *f = integrate_ode(&spec, &[1.0], 1.0, dt)?.final_state()[0];
    }
    let exact = (-1.0_f64).exp();
    let errors = finals.map(|v| (v - exact).abs());
    let ratio = (finals[0] - finals[1]) / (finals[1] - finals[2]);
    Ok(OrderReport {
        dts,
        errors,
        richardson_ratio: ratio,
        order: ratio.abs().log2(),
        exact_orders: [(errors[0] / errors[1]).log2(), (errors[1] / errors[2]).log2()],
    })
}

/// Three-node network used by the delay-network recipe: every cycle product of `c`
/// is at most 0.42 while all `aᵢ = 1`.
pub fn example51_network() -> DelayNetwork {
    DelayNetwork::new(
        vec![1.0; 3],
        vec![vec![0.5, 0.6, 0.3], vec![0.7, 0.5, 0.4], vec![0.5, 0.6, 0.5]],
        0.5,
        0.95,
    )
    .expect("valid parameters")
}

/// Same network with `c₁₂ = c₂₁ = √1.2`, so the 2-cycle product is 1.2·a₁a₂.
pub fn example51_converse() -> DelayNetwork {
    let s = 1.2_f64.sqrt();
    DelayNetwork::new(
        vec![1.0; 3],
        vec![vec![0.5, s, 0.3], vec![s, 0.5, 0.4], vec![0.5, 0.6, 0.5]],
        0.5,
        0.95,
    )
    .expect("valid parameters")
}

/// Seeded sinusoidal initial segment with components in `[−2, 2] ± 1`.
pub fn random_history<R: Rng>(rng: &mut R, n: usize) -> History {
    History::Sinusoid {
        offset: (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect(),
        amplitude: (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect(),
        freq: rng.gen_range(0.2..=2.0),
        phase: (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect(),
    }
}

/// Seeded positive initial segment around `X*`, bounded away from zero.
pub fn random_positive_history<R: Rng>(rng: &mut R, xstar: &[f64]) -> History {
    let offset: Vec<f64> = xstar.iter().map(|x| x * rng.gen_range(0.2..=5.0)).collect();
    History::Sinusoid {
        amplitude: offset.iter().map(|o| o * rng.gen_range(0.0..=0.5)).collect(),
        offset,
        freq: rng.gen_range(0.2..=2.0),
        phase: (0..xstar.len())
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect(),
    }
}

fn sup_norm(rows: &[Vec<f64>]) -> f64 {
    rows.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub const EXAMPLE51_HORIZON: f64 = 60.0;
pub const EXAMPLE51_DT: f64 = 1e-3;

/// Small-gain, implication, decay from 10 histories under sign-aligned coupling, and the converse.
pub fn example51(seed: u64, exec: Exec) -> Result<RecipeReport> {
    let mut rep = RecipeReport::new("example51", seed);
    let net = example51_network();
    let sg = check_small_gain(&net.gains()?, &GridSpec::default());
    rep.push("small-gain", sg.holds, format!("{} cycles checked", sg.cycles.len()));

    let imp = check_implication(
        &net.lyapunov()?,
        &net.spec(DisturbanceMode::Aligned),
        &ImplicationOptions {
            seed,
            ..Default::default()
        },
        exec,
    )?;
    rep.push(
        "implication",
        !imp.falsified(),
        format!("{} premise hits, {} violations", imp.premise_hits, imp.violation_count),
    );

    let spec = net.spec(DisturbanceMode::Aligned);
    let runs = exec.map_range(10, |k| {
        let mut rng = item_rng(seed, k as u64);
        let h = random_history(&mut rng, 3);
        integrate_delay(&spec, &h, EXAMPLE51_HORIZON, EXAMPLE51_DT)
    });
    let mut worst = 0.0_f64;
    let mut first = None;
    for run in runs {
        let tr = run?;
        let init = sup_norm(tr.history.as_deref().unwrap_or(&[]));
        worst = worst.max(sup_norm(&[tr.final_state().to_vec()]) / init);
        let ch = lyapunov_channels(&tr, &[vec![0], vec![1], vec![2]], net.r)?;
        let conv = check_convergence(&tr, &ch, 1e-6 * init * init, TAIL_FRACTION)?;
        worst = if conv.iter().all(|c| c.converged()) {
            worst
        } else {
            worst.max(1.0)
        };
        first.get_or_insert(tr);
    }
    rep.push(
        "decay from 10 histories",
        worst < 1e-4,
        format!("worst |x(60)|/‖x₀‖_r = {worst:.3e}"),
    );
    rep.trajectory = first;

    let bad = example51_converse();
    let bad_sg = check_small_gain(&bad.gains()?, &GridSpec::default());
    rep.push(
        "converse small-gain fails",
        !bad_sg.holds,
        format!("failing cycle {:?}", bad_sg.failing_cycle.as_ref().map(|f| &f.nodes)),
    );
    let h = History::Constant { values: vec![1.0; 3] };
    let grows = match integrate_delay(&bad.spec(DisturbanceMode::Aligned), &h, EXAMPLE51_HORIZON, 1e-2) {
        Ok(tr) => sup_norm(&[tr.final_state().to_vec()]) >= 1.0,
        Err(Error::FiniteEscape { .. }) => true,
        Err(e) => return Err(e),
    };
    rep.push("converse does not decay", grows, "constant history 1".into());
    Ok(rep)
}

/// The circuit used by the biochemical recipe: `n = 3`, `g(X) = 3aX/(1 + X)` with `a = ∏aⱼ`.
pub fn example52_circuit() -> Result<BiochemCircuit> {
    let a = vec![1.0, 0.8, 1.25];
    let rate: f64 = a.iter().product();
    BiochemCircuit::new(
        a,
        vec![0.5, 0.25, 0.75],
        FeedbackFn::Hill {
            scale: 3.0 * rate,
            p: 1.0,
        },
        0.9,
        1.02,
        0.35,
    )
}

pub const EXAMPLE52_HORIZON: f64 = 100.0;
pub const EXAMPLE52_DT: f64 = 0.01;

/// Equilibrium, (H), small-gain, log-coordinate implication and convergence to `X*`.
pub fn example52(seed: u64, exec: Exec) -> Result<RecipeReport> {
    let mut rep = RecipeReport::new("example52", seed);
    let circ = example52_circuit()?;
    let n = circ.n();
    rep.push(
        "equilibrium and (H)",
        circ.hypothesis.holds,
        format!(
            "X* = {:?}, K = {:.6}, λ_min = {:.6}, λ = {}",
            circ.xstar, circ.fit.k, circ.fit.lambda_min, circ.lambda
        ),
    );
    let sg = check_small_gain(&circ.gains()?, &GridSpec::default());
    rep.push(
        "small-gain",
        sg.holds,
        format!(
            "θ = {}, μ = {}, μⁿ⁻¹θ = {:.6}",
            circ.theta,
            circ.mu,
            circ.mu.powi(n as i32 - 1) * circ.theta
        ),
    );
    let imp = check_implication(
        &circ.lyapunov()?,
        &circ.spec(),
        &ImplicationOptions {
            seed,
            radius: 5.0,
            ..Default::default()
        },
        exec,
    )?;
    rep.push(
        "implication (log coordinates)",
        !imp.falsified(),
        format!("{} premise hits, {} violations", imp.premise_hits, imp.violation_count),
    );

    let spec = circ.spec();
    let runs = exec.map_range(10, |k| {
        let mut rng = item_rng(seed, k as u64);
        let h = random_positive_history(&mut rng, &circ.xstar);
        integrate_delay(&spec, &h, EXAMPLE52_HORIZON, EXAMPLE52_DT)
    });
    let mut rel = 0.0_f64;
    let mut tail = 0.0_f64;
    let mut positive = true;
    let mut first = None;
    let blocks: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let r = circ.tau.iter().fold(0.0_f64, |m, t| m.max(*t));
    for run in runs {
        let tr = run?;
        positive &= tr.states.iter().flatten().all(|v| *v > 0.0);
        for (x, s) in tr.final_state().iter().zip(&circ.xstar) {
            rel = rel.max((x - s).abs() / s);
        }
        let logs = log_transform_trajectory(&tr, &circ.xstar)?;
        let ch = lyapunov_channels(&logs, &blocks, r)?;
        let conv = check_convergence(&logs, &ch, 1e-6, TAIL_FRACTION)?;
        tail = conv.iter().fold(tail, |m, c| m.max(c.tail_sup()));
        first.get_or_insert(tr);
    }
    rep.push("positivity", positive, "all states stay in int(ℝⁿ₊)".into());
    rep.push(
        "convergence to X*",
        rel < 1e-3,
        format!("worst relative error {rel:.3e}"),
    );
    rep.push("log channels", tail < 1e-6, format!("worst tail sup of Vᵢ {tail:.3e}"));
    rep.trajectory = first;
    Ok(rep)
}
