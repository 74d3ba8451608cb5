use smallgain::builtin::biochem_gains;
use smallgain::network::{check_small_gain, cycle_witness, gamma_apply, GainMatrix};
use smallgain::{build_phi, overall_gain, Error, GainFn, GridSpec, SynthesisInput};

/// max over every chain γ_{i,j₁}∘…∘γ_{j_{l−1},j_l} with l < n, by recursion on l.
fn phi_oracle(g: &GainMatrix, i: usize, s: f64, depth: usize) -> f64 {
    let mut best = s;
    if depth == 0 {
        return best;
    }
    for j in 0..g.n() {
        let inner = phi_oracle_exact_len(g, j, s, depth - 1);
        best = best.max(inner.iter().map(|v| g.get(i, j).eval(*v)).fold(0.0, f64::max));
    }
    best.max(phi_oracle(g, i, s, depth - 1))
}

/// Values of all chains of exactly `len` steps starting at `j`, applied to `s`.
fn phi_oracle_exact_len(g: &GainMatrix, j: usize, s: f64, len: usize) -> Vec<f64> {
    if len == 0 {
        return vec![s];
    }
    let mut out = Vec::new();
    for k in 0..g.n() {
        for v in phi_oracle_exact_len(g, k, s, len - 1) {
            out.push(g.get(j, k).eval(v));
        }
    }
    out
}

#[test]
fn simple_paths_cover_all_chains_for_nonlinear_gains() {
    let g = biochem_gains(4, 0.9, 1.02).unwrap();
    let phi = build_phi(&g).unwrap();
    for (i, f) in phi.iter().enumerate() {
        for e in -6..=3 {
            let s = 10f64.powi(e);
            let want = phi_oracle(&g, i, s, 3);
            assert!((f.eval(s) - want).abs() <= 1e-12 * want, "φ{i}({s})");
        }
    }
}

#[test]
fn overall_gain_inverts_a1() {
    let g = GainMatrix::from_linear(&[vec![0.0, 0.5], vec![0.8, 0.0]]).unwrap();
    let inp = SynthesisInput::new(g, GainFn::linear(2.0).unwrap(), GainFn::log_exp_sq(1.0, 0.5).unwrap());
    let c = overall_gain(&inp).unwrap();
    for e in -4..=4 {
        let s = 10f64.powi(e);
        let y = c.overall.eval(s).unwrap();
        let back = inp.a1.eval(y);
        assert!((back - c.theta.eval(s)).abs() <= 1e-9 * back.max(1.0));
    }
    assert_eq!(c.gmap.len(), 2);
    assert!(c
        .table_csv(&GridSpec::new(1e-2, 1e2, 5).unwrap())
        .unwrap()
        .starts_with("s,theta,overall\n"));
}

#[test]
fn synthesis_refuses_without_small_gain() {
    let g = GainMatrix::from_linear(&[vec![0.0, 2.0], vec![0.6, 0.0]]).unwrap();
    assert!(matches!(build_phi(&g), Err(Error::SmallGainNotEstablished(_))));
}

#[test]
fn failing_cycle_yields_a_fixed_point_witness() {
    let g = GainMatrix::from_linear(&[vec![0.2, 0.0, 1.5], vec![1.1, 0.0, 0.0], vec![0.0, 0.9, 0.3]]).unwrap();
    let rep = check_small_gain(&g, &GridSpec::default());
    let f = rep.failing_cycle.expect("3-cycle product 1.485");
    let cycle: Vec<usize> = f.nodes.iter().map(|v| v - 1).collect();
    let x = cycle_witness(&g, &cycle, f.witness);
    assert!(!x.is_zero());
    assert!(x.leq(&gamma_apply(&g, &x).unwrap()));
}

#[test]
fn diagonal_gain_counts_as_a_cycle() {
    let g = GainMatrix::from_linear(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
    let rep = check_small_gain(&g, &GridSpec::default());
    assert!(!rep.holds);
    assert_eq!(rep.failing_cycle.unwrap().nodes, vec![1]);
}
