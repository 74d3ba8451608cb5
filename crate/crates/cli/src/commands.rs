//! One function per subcommand. Each returns the report, any CSV side files and
//! whether the verdicts came out positive.

use serde::Serialize;
use serde_json::{json, Value};
use smallgain::iteration::{gas_by_iteration, iterate, IterationOracle};
use smallgain::network::{check_small_gain, cycle_witness, GainMatrix, PlusVec};
use smallgain::repro;
use smallgain::sim::biochem::{biochem_equilibrium, log_transform_trajectory};
use smallgain::sim::{integrate, Model, SystemSpec, Trajectory};
use smallgain::validation::{
    check_asymptotic_gain, check_convergence, check_implication, lyapunov_channels, ImplicationOptions, LyapunovSetup,
    ValidationReport,
};
use smallgain::{overall_gain, Error, Exec, GridSpec};

use crate::config::RunConfig;

pub struct Outcome {
    pub report: Value,
    pub files: Vec<(&'static str, String)>,
    pub positive: bool,
    pub summary: String,
}

impl Outcome {
    fn new(report: impl Serialize, positive: bool, summary: String) -> Result<Self, String> {
        Ok(Outcome {
            report: serde_json::to_value(report).map_err(|e| e.to_string())?,
            files: Vec::new(),
            positive,
            summary,
        })
    }
}

fn ctx(what: &str) -> impl Fn(Error) -> String + '_ {
    move |e| format!("{what}: {e}")
}

fn gains_of(cfg: &RunConfig) -> Result<&GainMatrix, String> {
    cfg.gains
        .as_ref()
        .or(cfg.synthesis.as_ref().map(|s| &s.gains))
        .ok_or_else(|| "config needs `gains` (or `synthesis.gains`)".to_string())
}

fn system_of(cfg: &RunConfig) -> Result<&SystemSpec, String> {
    let spec = cfg.system.as_ref().ok_or("config needs `system`")?;
    spec.validate().map_err(ctx("system"))?;
    Ok(spec)
}

fn initial_state(cfg: &RunConfig, spec: &SystemSpec) -> Result<Vec<f64>, String> {
    match (&cfg.x0, &cfg.history) {
        (Some(x0), _) => Ok(x0.clone()),
        (None, Some(h)) => Ok(h.eval(0.0)),
        (None, None) => Err(format!(
            "config needs `x0` or `history` for a {}-state system",
            spec.dim()
        )),
    }
}

pub fn check_sg(cfg: &RunConfig) -> Result<Outcome, String> {
    let g = gains_of(cfg)?;
    cfg.analysis.grid.validate().map_err(ctx("analysis.grid"))?;
    let report = check_small_gain(g, &cfg.analysis.grid);
    let witness = report.failing_cycle.as_ref().map(|f| {
        let cycle: Vec<usize> = f.nodes.iter().map(|v| v - 1).collect();
        cycle_witness(g, &cycle, f.witness)
    });
    let summary = report.table();
    let holds = report.holds;
    let mut value = serde_json::to_value(&report).map_err(|e| e.to_string())?;
    if let Some(w) = witness {
        value["witness_vector"] = json!(w);
    }
    Outcome::new(value, holds, summary)
}

pub fn synth(cfg: &RunConfig) -> Result<Outcome, String> {
    let inp = cfg.synthesis.as_ref().ok_or("config needs `synthesis`")?;
    match overall_gain(inp) {
        Ok(c) => {
            let table = c
                .table_csv(&GridSpec::new(1e-6, 1e6, 121).expect("valid grid"))
                .map_err(ctx("gain table"))?;
            let summary = format!(
                "composite gain built for n = {}; θ(1) = {:e}, overall(1) = {:e}\n",
                inp.gains.n(),
                c.theta.eval(1.0),
                c.overall.eval(1.0).map_err(ctx("overall gain"))?
            );
            let mut out = Outcome::new(&c, true, summary)?;
            out.files.push(("gain_table.csv", table));
            Ok(out)
        }
        Err(Error::SmallGainNotEstablished(msg)) => {
            let sg = check_small_gain(&inp.gains, &cfg.analysis.grid);
            let summary = format!("{}no composite gain: {msg}\n", sg.table());
            Outcome::new(json!({ "small_gain": sg, "error": msg }), false, summary)
        }
        Err(e) => Err(format!("synthesis: {e}")),
    }
}

pub fn iterate_cmd(cfg: &RunConfig) -> Result<Outcome, String> {
    let g = gains_of(cfg)?;
    let x0 = cfg.x0.as_ref().ok_or("config needs `x0`")?;
    let x0 = PlusVec::new(x0.clone()).map_err(ctx("x0"))?;
    let a = &cfg.analysis;
    let result = iterate(g, &x0, a.steps, a.tolerances.conv).map_err(ctx("iterate"))?;
    let oracle = gas_by_iteration(
        g,
        &IterationOracle {
            starts: a.oracle_starts,
            steps: a.oracle_steps,
            tol: a.tolerances.oracle,
            seed: a.seed,
        },
    );
    let small_gain = check_small_gain(g, &a.grid).holds;
    let summary = format!(
        "{:?} after {} iterates; random-start oracle: {:?}; small-gain {}\n",
        result.status,
        result.iterates.len() - 1,
        oracle,
        if small_gain { "holds" } else { "fails" }
    );
    let report = json!({
        "status": result.status,
        "final": result.iterates.last(),
        "oracle": oracle,
        "small_gain_holds": small_gain,
    });
    let mut out = Outcome::new(report, result.converged() && oracle.converges(), summary)?;
    out.files.push(("iterates.csv", result.to_csv()));
    Ok(out)
}

fn simulate_spec(cfg: &RunConfig, spec: &SystemSpec) -> Result<Trajectory, Error> {
    let x0 = initial_state(cfg, spec).map_err(Error::Config)?;
    integrate(spec, &x0, cfg.history.as_ref(), cfg.analysis.horizon, cfg.analysis.dt)
}

fn trajectory_files(out: &mut Outcome, tr: &Trajectory) {
    out.files.push(("trajectory.csv", tr.to_csv()));
    if let Some(s) = tr.sampling_csv() {
        out.files.push(("sampling_times.csv", s));
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome, String> {
    let spec = system_of(cfg)?;
    match simulate_spec(cfg, spec) {
        Ok(tr) => {
            let peak = tr.norms().into_iter().fold(0.0_f64, f64::max);
            let report = json!({
                "kind": spec.kind,
                "dim": spec.dim(),
                "steps": tr.len() - 1,
                "t_end": tr.time(tr.len() - 1),
                "final_state": tr.final_state(),
                "max_norm": peak,
                "sampling_instants": tr.sampling_times.as_ref().map(Vec::len),
            });
            let summary = format!(
                "{} steps to t = {}; final state {:?}; max norm {peak:e}\n",
                tr.len() - 1,
                tr.time(tr.len() - 1),
                tr.final_state()
            );
            let mut out = Outcome::new(report, true, summary)?;
            trajectory_files(&mut out, &tr);
            Ok(out)
        }
        Err(Error::FiniteEscape { t, norm }) => Outcome::new(
            json!({ "finite_escape": { "t": t, "norm": norm } }),
            false,
            format!("finite escape at t = {t} (norm {norm:e})\n"),
        ),
        Err(e) => Err(format!("simulate: {e}")),
    }
}

pub fn validate(cfg: &RunConfig, exec: Exec) -> Result<Outcome, String> {
    let spec = system_of(cfg)?;
    let setup: &LyapunovSetup = cfg.lyapunov.as_ref().ok_or("config needs `lyapunov`")?;
    let a = &cfg.analysis;
    let tol = &a.tolerances;
    let implication = check_implication(
        setup,
        spec,
        &ImplicationOptions {
            samples: a.samples,
            radius: a.radius,
            seed: a.seed,
            tol_impl: tol.implication,
        },
        exec,
    )
    .map_err(ctx("implication"))?;

    let tr = simulate_spec(cfg, spec).map_err(ctx("simulate"))?;
    let coords = match spec.model {
        Model::BiochemCircuit { .. } => {
            let xstar = biochem_equilibrium(spec).map_err(ctx("equilibrium"))?;
            log_transform_trajectory(&tr, &xstar).map_err(ctx("log transform"))?
        }
        _ => tr.clone(),
    };
    let channels = lyapunov_channels(&coords, &setup.blocks, spec.model.max_delay()).map_err(ctx("channels"))?;
    let u_sup = spec.input.sup_abs();
    let convergence = if u_sup == 0.0 {
        Some(check_convergence(&coords, &channels, tol.tail, tol.tail_fraction).map_err(ctx("convergence"))?)
    } else {
        None
    };
    let asymptotic_bound = match &cfg.synthesis {
        Some(inp) => {
            let c = overall_gain(inp).map_err(ctx("synthesis"))?;
            Some(
                check_asymptotic_gain(
                    &coords,
                    &channels,
                    &c.gmap,
                    u_sup,
                    tol.gain,
                    tol.tail,
                    tol.tail_fraction,
                )
                .map_err(ctx("asymptotic gain"))?,
            )
        }
        None => None,
    };
    let report = ValidationReport {
        horizon: a.horizon,
        implication: Some(implication),
        convergence,
        asymptotic_bound,
    };
    let mut out = Outcome::new(&report, report.passed(), report.summary())?;
    trajectory_files(&mut out, &tr);
    Ok(out)
}

pub fn repro_cmd(name: &str, seed: u64, exec: Exec) -> Result<Outcome, String> {
    let rep = repro::run(name, seed, exec).map_err(|e| e.to_string())?;
    let mut out = Outcome::new(&rep, rep.passed, rep.summary())?;
    if let Some(tr) = &rep.trajectory {
        trajectory_files(&mut out, tr);
    }
    Ok(out)
}
