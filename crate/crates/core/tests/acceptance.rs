//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest harness
//! so the lines are always printed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::Rng;
use smallgain::builtin::{biochem_gains, DelayNetwork};
use smallgain::iteration::least_fixed_point;
use smallgain::network::{check_small_gain, gamma_apply, q_operator, GainMatrix, PlusVec};
use smallgain::par::{item_rng, Exec};
use smallgain::repro::{
    example51_converse, example51_network, example52_circuit, prop27_sweep, random_history, random_positive_history,
};
use smallgain::sim::biochem::log_transform_trajectory;
use smallgain::sim::{
    integrate_delay, integrate_ode, integrate_sampled, DisturbanceMode, History, Model, SamplingFn, Signal, SystemSpec,
};
use smallgain::synthesis::{build_theta, overall_gain, SynthesisInput};
use smallgain::validation::{
    check_asymptotic_gain, check_convergence, check_implication, lyapunov_channels, recheck, ImplicationOptions,
    LyapunovSetup, RateFn, TAIL_FRACTION, TOL_GAIN, TOL_IMPL, TOL_TAIL,
};
use smallgain::{compose_chain, Error, GainFn, GridSpec};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn sup_abs<'a>(rows: impl IntoIterator<Item = &'a Vec<f64>>) -> f64 {
    rows.into_iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn criterion_1() -> Outcome {
    let r = prop27_sweep(2718, 500, Exec::Parallel);
    ensure(r.total == 500, format!("swept {} matrices", r.total))?;
    ensure(
        r.agree == 500,
        format!("{}/500 agree, disagreements at {:?}", r.agree, r.disagreements),
    )?;
    Ok(format!(
        "500/500 agree ({} small-gain, {} not)",
        r.small_gain_holds,
        500 - r.small_gain_holds
    ))
}

fn random_mixed_matrix<R: Rng>(rng: &mut R, n: usize) -> GainMatrix {
    let mut g = GainMatrix::zeros(n).unwrap();
    for i in 0..n {
        for j in 0..n {
            let u: f64 = rng.gen();
            let gain = if u < 0.2 {
                GainFn::zero()
            } else if u < 0.7 {
                GainFn::linear(rng.gen_range(0.0..=1.5)).unwrap()
            } else {
                GainFn::log_exp_sq(0.5, rng.gen_range(0.2..=1.5)).unwrap()
            };
            g.set(i, j, gain).unwrap();
        }
    }
    g
}

fn random_point<R: Rng>(rng: &mut R, n: usize) -> PlusVec {
    PlusVec::new(
        (0..n)
            .map(|_| {
                if rng.gen_bool(0.15) {
                    0.0
                } else {
                    10f64.powf(rng.gen_range(-3.0..=3.0))
                }
            })
            .collect(),
    )
    .unwrap()
}

/// Draws until the small-gain conditions hold.
fn verified_instance(seed: u64, k: u64) -> (GainMatrix, PlusVec) {
    let mut rng = item_rng(seed, k);
    loop {
        let n = rng.gen_range(2..=4);
        let g = random_mixed_matrix(&mut rng, n);
        if check_small_gain(&g, &GridSpec::default()).holds {
            let x = random_point(&mut rng, n);
            return (g, x);
        }
    }
}

fn criterion_2() -> Outcome {
    for k in 0..1000 {
        let (g, x) = verified_instance(31, k);
        let n = g.n();
        let q = q_operator(&g, &x).unwrap();
        ensure(x.leq(&q), format!("pair {k}: x ≤ Q(x) fails"))?;
        ensure(
            gamma_apply(&g, &q).unwrap().leq(&q),
            format!("pair {k}: Γ(Q(x)) ≤ Q(x) fails"),
        )?;
        let mut it = x.clone();
        for step in 1..=3 * n {
            it = gamma_apply(&g, &it).unwrap();
            ensure(it.leq(&q), format!("pair {k}: Γ^{step}(x) ≤ Q(x) fails"))?;
        }
    }
    Ok("1000 verified pairs, all three laws hold with exact comparisons".into())
}

fn criterion_3() -> Outcome {
    for k in 0..500 {
        let (g, a) = verified_instance(59, k);
        let x = least_fixed_point(&g, &a, 10_000, 0.0).map_err(|e| format!("instance {k}: {e}"))?;
        let q = q_operator(&g, &a).unwrap();
        for (xi, qi) in x.as_slice().iter().zip(q.as_slice()) {
            ensure(*xi <= qi + 1e-9, format!("instance {k}: {xi} > Q(a) = {qi}"))?;
        }
    }
    Ok("500 instances, least fixed point ≤ Q(a) + 1e-9".into())
}

fn closed_form_chain(n: usize, theta: f64, mu: f64, s: f64) -> f64 {
    let k = mu.powi(n as i32 - 1) * theta;
    0.5 * (1.0 + k * ((2.0 * s).sqrt().exp() - 1.0)).ln().powi(2)
}

fn criterion_4() -> Outcome {
    let (theta, mu) = (0.9, 1.02);
    let mut worst = 0.0_f64;
    for n in 2..=4 {
        let g = biochem_gains(n, theta, mu).unwrap();
        // γ₁ₙ ∘ γₙ,ₙ₋₁ ∘ … ∘ γ₂₁
        let mut chain = vec![g.get(0, n - 1).clone()];
        for i in (1..n).rev() {
            chain.push(g.get(i, i - 1).clone());
        }
        let f = compose_chain(&chain).unwrap();
        for k in 0..200 {
            let s = 10f64.powf(-6.0 + 8.0 * k as f64 / 199.0);
            let want = closed_form_chain(n, theta, mu, s);
            let rel = (f.eval(s) - want).abs() / want;
            worst = worst.max(rel);
            ensure(rel <= 1e-9, format!("n = {n}, s = {s:e}: relative error {rel:e}"))?;
        }
    }
    let mut cases = 0;
    for n in 2..=4 {
        for (th, m) in [
            (0.9_f64, 1.02_f64),
            (0.9, 1.05),
            (0.9, 1.1),
            (0.9, 1.2),
            (0.5, 1.3),
            (0.8, 1.25),
        ] {
            let product = m.powi(n as i32 - 1) * th;
            let report = check_small_gain(&biochem_gains(n, th, m).unwrap(), &GridSpec::default());
            ensure(
                report.holds == (product < 1.0),
                format!(
                    "n = {n}, θ = {th}, μ = {m}: μⁿ⁻¹θ = {product}, verdict {}",
                    report.holds
                ),
            )?;
            cases += 1;
        }
    }
    Ok(format!(
        "worst relative error {worst:.2e}; {cases} window cases agree with μⁿ⁻¹θ < 1"
    ))
}

/// All tuples `(j₁, …, jₗ) ∈ {0..n−1}ˡ` for `l = 1..n−1`, evaluated as nested chains.
fn phi_all_chains(g: &GainMatrix, i: usize, s: f64) -> f64 {
    let n = g.n();
    let mut best = s;
    for l in 1..n {
        let mut tuple = vec![0usize; l];
        let mut done = false;
        while !done {
            let mut v = s;
            for m in (0..l).rev() {
                let from = if m == 0 { i } else { tuple[m - 1] };
                v = g.get(from, tuple[m]).eval(v);
            }
            best = best.max(v);
            done = true;
            for pos in (0..l).rev() {
                tuple[pos] += 1;
                if tuple[pos] < n {
                    done = false;
                    break;
                }
                tuple[pos] = 0;
            }
        }
    }
    best
}

fn theta_direct(g: &GainMatrix, p: &[f64], zeta: f64, s: f64) -> f64 {
    let n = g.n();
    let z = zeta * s;
    let mut inner = z;
    for pi in p {
        inner = inner.max(pi * z);
    }
    for (i, pi) in p.iter().enumerate() {
        for j in 0..n {
            let v = g.get(i, j).eval(phi_all_chains(g, j, z));
            inner = inner.max(v).max(pi * v);
        }
    }
    (0..n).map(|i| phi_all_chains(g, i, inner)).fold(0.0, f64::max)
}

fn criterion_5() -> Outcome {
    let mut worst = 0.0_f64;
    let mut instances = 0;
    let mut rng = item_rng(97, 0);
    while instances < 40 {
        let n = 1 + instances % 4;
        let k: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        if rng.gen_bool(0.3) {
                            0.0
                        } else {
                            rng.gen_range(0.0..=1.2)
                        }
                    })
                    .collect()
            })
            .collect();
        let g = GainMatrix::from_linear(&k).unwrap();
        if !check_small_gain(&g, &GridSpec::default()).holds {
            continue;
        }
        let zeta = rng.gen_range(0.1..=3.0);
        let p: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.4) {
                    0.0
                } else {
                    rng.gen_range(0.0..=2.0)
                }
            })
            .collect();
        let mut inp = SynthesisInput::new(
            g.clone(),
            GainFn::linear(zeta).unwrap(),
            GainFn::power(0.5, 2.0).unwrap(),
        );
        inp.p_list = p.iter().map(|v| GainFn::linear(*v).unwrap()).collect();
        let theta = build_theta(&inp).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let s = 10f64.powf(rng.gen_range(-6.0..=6.0));
            let want = theta_direct(&g, &p, zeta, s);
            let got = theta.eval(s);
            let rel = (got - want).abs() / want;
            worst = worst.max(rel);
            ensure(rel <= 1e-12, format!("n = {n}, s = {s:e}: θ = {got}, direct {want}"))?;
        }
        instances += 1;
    }
    Ok(format!(
        "{instances} inputs × 100 points, worst relative error {worst:.2e}"
    ))
}

fn criterion_6() -> Outcome {
    let net = example51_network();
    let (a, c) = (&net.a, &net.c);
    ensure(a.iter().all(|v| *v == 1.0) && net.r == 0.5, "network parameters")?;
    for i in 0..3 {
        ensure(c[i][i] <= 0.5, format!("c{0}{0} = {1}", i + 1, c[i][i]))?;
        for j in 0..3 {
            if i != j {
                ensure(
                    c[i][j] * c[j][i] <= 0.7 * a[i] * a[j],
                    format!("2-cycle ({}, {})", i + 1, j + 1),
                )?;
            }
        }
    }
    for (i, j, k) in [(0, 1, 2), (0, 2, 1)] {
        ensure(
            c[i][j] * c[j][k] * c[k][i] <= 0.7 * a[i] * a[j] * a[k],
            "3-cycle product",
        )?;
    }
    let sg = check_small_gain(&net.gains().unwrap(), &GridSpec::default());
    ensure(sg.holds, "small-gain fails for the network")?;

    let spec = net.spec(DisturbanceMode::Aligned);
    let runs = Exec::Parallel.map_range(10, |k| {
        let mut rng = item_rng(51, k as u64);
        integrate_delay(&spec, &random_history(&mut rng, 3), 60.0, 1e-3)
    });
    let mut worst = 0.0_f64;
    for run in runs {
        let tr = run.map_err(|e| e.to_string())?;
        let init = sup_abs(tr.history.as_ref().unwrap());
        worst = worst.max(sup_abs([&tr.final_state().to_vec()]) / init);
    }
    ensure(worst < 1e-4, format!("worst |x(60)|/‖x₀‖ = {worst:e}"))?;

    let bad = example51_converse();
    let (ab, cb) = (&bad.a, &bad.c);
    ensure(
        (cb[0][1] * cb[1][0] / (ab[0] * ab[1]) - 1.2).abs() < 1e-12,
        "converse 2-cycle product is not 1.2",
    )?;
    let bad_sg = check_small_gain(&bad.gains().unwrap(), &GridSpec::default());
    ensure(!bad_sg.holds, "converse passes the small-gain check")?;
    let h = History::Constant { values: vec![1.0; 3] };
    let grows = match integrate_delay(&bad.spec(DisturbanceMode::Aligned), &h, 60.0, 1e-2) {
        Ok(tr) => sup_abs([&tr.final_state().to_vec()]) >= 1.0,
        Err(Error::FiniteEscape { .. }) => true,
        Err(e) => return Err(e.to_string()),
    };
    ensure(grows, "converse decays from the constant history")?;
    Ok(format!(
        "worst decay ratio {worst:.2e}; converse fails on cycle {:?} and does not decay",
        bad_sg.failing_cycle.map(|f| f.nodes)
    ))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let circ = example52_circuit().map_err(|e| e.to_string())?;
    let n = circ.n();
    let rate: f64 = circ.a.iter().product();
    let (x, a) = (&circ.xstar, &circ.a);
    let res0 = (circ.g.eval(x[n - 1]) - a[0] * x[0]).abs();
    let res = (1..n).fold(res0, |m, i| m.max((x[i - 1] - a[i] * x[i]).abs()));
    ensure(res < 1e-9, format!("equilibrium residual {res:e}"))?;

    // (H) on an independent grid.
    let (xn, k, lambda) = (x[n - 1], circ.fit.k, circ.lambda);
    for m in 0..=20_000 {
        let v = xn * 10f64.powf(-6.0 + 10.0 * m as f64 / 20_000.0);
        let q = circ.g.eval(v) / rate;
        let lower = (k + xn) * v / (k + v);
        let upper = xn + lambda * (v - xn).abs();
        ensure(q >= lower * (1.0 - 1e-9), format!("(H) lower side fails at X = {v:e}"))?;
        ensure(q <= upper * (1.0 + 1e-9), format!("(H) upper side fails at X = {v:e}"))?;
    }
    let b = k / xn;
    let floor = (b / (b + 1.0)).max(lambda);
    ensure(circ.theta > floor && circ.theta < 1.0, "θ outside its window")?;
    ensure(
        circ.mu > 1.0 && circ.mu < circ.theta.powf(-1.0 / (n as f64 - 1.0)),
        "μ outside its window",
    )?;
    ensure(
        check_small_gain(&circ.gains().unwrap(), &GridSpec::default()).holds,
        "small-gain fails",
    )?;

    let spec = circ.spec();
    let runs = Exec::Parallel.map_range(10, |k| {
        let mut rng = item_rng(52, k as u64);
        integrate_delay(&spec, &random_positive_history(&mut rng, x), 100.0, 0.01)
    });
    let blocks: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let r = circ.tau.iter().fold(0.0_f64, |m, t| m.max(*t));
    let (mut rel, mut tail) = (0.0_f64, 0.0_f64);
    for run in runs {
        let tr = run.map_err(|e| e.to_string())?;
        ensure(
            tr.states.iter().flatten().all(|v| *v > 0.0),
            "state left the positive orthant",
        )?;
        for (xi, si) in tr.final_state().iter().zip(x) {
            rel = rel.max((xi - si).abs() / si);
        }
        let logs = log_transform_trajectory(&tr, x).map_err(|e| e.to_string())?;
        let ch = lyapunov_channels(&logs, &blocks, r).map_err(|e| e.to_string())?;
        let conv = check_convergence(&logs, &ch, 1e-6, TAIL_FRACTION).map_err(|e| e.to_string())?;
        tail = conv.iter().fold(tail, |m, c| m.max(c.tail_sup()));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(rel < 1e-3, format!("worst relative error {rel:e}"))?;
    ensure(tail < 1e-6, format!("worst tail V {tail:e}"))?;
    ensure(secs <= 300.0, format!("took {secs:.1} s"))?;
    Ok(format!(
        "X* = {x:?}, K = {k}, λ = {lambda}; relative error {rel:.1e}, tail V {tail:.1e}, {secs:.1} s"
    ))
}

fn criterion_8() -> Outcome {
    let net = DelayNetwork::new(vec![1.0], vec![vec![0.5]], 0.5, 0.9).map_err(|e| e.to_string())?;
    let spec = net.spec(DisturbanceMode::Aligned);
    let opts = ImplicationOptions {
        seed: 8,
        ..Default::default()
    };
    let setup = net.lyapunov().unwrap();
    let rep = check_implication(&setup, &spec, &opts, Exec::Parallel).map_err(|e| e.to_string())?;
    ensure(rep.samples == 100_000, "sample count")?;
    ensure(rep.premise_hits > 0, "premise never held")?;
    ensure(
        !rep.falsified(),
        format!("{} violations with the true gains", rep.violation_count),
    )?;

    let k = net.gains().unwrap().get(0, 0).eval(1.0);
    let shrunk = LyapunovSetup::scalar_blocks(
        net.rho(),
        GainMatrix::from_linear(&[vec![k / 10.0]]).unwrap(),
        GainFn::zero(),
    );
    let bad = check_implication(&shrunk, &spec, &opts, Exec::Parallel).map_err(|e| e.to_string())?;
    ensure(bad.falsified(), "no violation with γ/10")?;
    for v in bad.violations.iter().take(20) {
        ensure(
            recheck(&shrunk, &spec, v, TOL_IMPL).map_err(|e| e.to_string())?,
            format!("violation at {:?} does not reproduce", v.state),
        )?;
    }
    let again = check_implication(&shrunk, &spec, &opts, Exec::Sequential).map_err(|e| e.to_string())?;
    ensure(again == bad, "rerun differs")?;
    Ok(format!(
        "{} premise hits, 0 violations; γ/10 gives {} violations, each rechecked",
        rep.premise_hits, bad.violation_count
    ))
}

fn criterion_9() -> Outcome {
    let spec = SystemSpec::new(Model::LinearOde {
        a: vec![vec![-1.0]],
        b: vec![],
        e: vec![],
    });
    let dts = [0.1, 0.05, 0.025];
    let mut f = [0.0; 3];
    for (v, dt) in f.iter_mut().zip(dts) {
        *v = integrate_ode(&spec, &[1.0], 1.0, dt)
            .map_err(|e| e.to_string())?
            .final_state()[0];
    }
    let order = ((f[0] - f[1]) / (f[1] - f[2])).abs().log2();
    ensure((3.5..=4.5).contains(&order), format!("order {order}"))?;
    Ok(format!("Richardson order {order:.4}"))
}

fn sampled_spec(h0: f64, dtilde: f64) -> SystemSpec {
    SystemSpec::new(Model::SampledLinear {
        a: vec![vec![-0.5]],
        b: vec![vec![-0.5]],
        input: vec![],
        input_held: vec![],
        e: vec![],
    })
    .with_sampling(SamplingFn::Constant { h0 }, Signal::Constant { value: dtilde })
}

fn criterion_10() -> Outcome {
    let h0 = 0.25;
    let dt = 2f64.powi(-10);
    let tr = integrate_sampled(&sampled_spec(h0, 0.0), &[1.0], 10.0, dt).map_err(|e| e.to_string())?;
    let taus = tr.sampling_times.unwrap();
    let aligned = taus.len();
    ensure(taus.len() >= 40, format!("only {} sampling times", taus.len()))?;
    for (i, t) in taus.iter().enumerate() {
        ensure(*t == tr.t0 + i as f64 * h0, format!("τ{i} = {t}"))?;
    }
    let tr = integrate_sampled(&sampled_spec(h0, 2f64.ln()), &[1.0], 10.0, dt).map_err(|e| e.to_string())?;
    let taus = tr.sampling_times.unwrap();
    ensure(
        taus.len() >= 80,
        format!("only {} sampling times with d̃ = ln 2", taus.len()),
    )?;
    let worst = taus
        .windows(2)
        .map(|w| (w[1] - w[0] - h0 / 2.0).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-12, format!("gap error {worst:e}"))?;
    Ok(format!(
        "{aligned} grid-aligned instants; d̃ = ln 2 gap error {worst:.1e}"
    ))
}

fn criterion_11() -> Outcome {
    let lambda = 0.9;
    let zeta = GainFn::power(1.0 / (2.0 * lambda * lambda), 2.0).unwrap();
    let inp = SynthesisInput::new(
        GainMatrix::zeros(1).unwrap(),
        zeta.clone(),
        GainFn::power(0.5, 2.0).unwrap(),
    );
    let composite = overall_gain(&inp).map_err(|e| e.to_string())?;
    let setup = LyapunovSetup::scalar_blocks(
        vec![RateFn::Linear {
            k: 2.0 * (1.0 - lambda),
        }],
        GainMatrix::zeros(1).unwrap(),
        zeta,
    );
    let mut lines = Vec::new();
    for c in [0.1, 1.0, 10.0] {
        let spec = SystemSpec::new(Model::LinearOde {
            a: vec![vec![-1.0]],
            b: vec![1.0],
            e: vec![],
        })
        .with_input(Signal::Constant { value: c });
        let imp = check_implication(
            &setup,
            &spec,
            &ImplicationOptions {
                samples: 20_000,
                seed: 11,
                ..Default::default()
            },
            Exec::Parallel,
        )
        .map_err(|e| e.to_string())?;
        ensure(!imp.falsified(), format!("c = {c}: implication falsified"))?;
        let tr = integrate_ode(&spec, &[0.0], 40.0, 1e-2).map_err(|e| e.to_string())?;
        let ch = lyapunov_channels(&tr, &[vec![0]], 0.0).map_err(|e| e.to_string())?;
        let tail_v = *ch[0].last().unwrap();
        ensure(
            (tail_v - 0.5 * c * c).abs() <= 1e-6 * (0.5 * c * c),
            format!("c = {c}: tail V = {tail_v}, expected {}", 0.5 * c * c),
        )?;
        let bound = check_asymptotic_gain(&tr, &ch, &composite.gmap, c, TOL_GAIN, TOL_TAIL, TAIL_FRACTION)
            .map_err(|e| e.to_string())?;
        ensure(bound[0].satisfied(), format!("c = {c}: {:?}", bound[0]))?;
        lines.push(format!(
            "c = {c}: V = {tail_v:.4e} ≤ {:.4e}",
            1.05 * composite.gmap[0].eval(c)
        ));
    }
    Ok(lines.join("; "))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("cycle test agrees with iteration", criterion_1),
        ("Q-operator laws", criterion_2),
        ("fixed point below Q(a)", criterion_3),
        ("closed-form chain composition", criterion_4),
        ("θ against all-chain evaluation", criterion_5),
        ("delay network reproduction", criterion_6),
        ("biochemical circuit reproduction", criterion_7),
        ("implication checker soundness", criterion_8),
        ("RK4 order", criterion_9),
        ("sampled-data instants", criterion_10),
        ("asymptotic gain bound", criterion_11),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1} s): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1} s): {detail}", k + 1);
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
