//! Closed-loop gain synthesis: the chain envelopes `φᵢ`, the composite gain
//! `θ`, the overall ISS gain `a₁⁻¹ ∘ θ`, and the per-channel asymptotic gains `Gᵢ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::{invert_auto, GainFn, GridSpec};
use crate::network::{check_small_gain, GainMatrix, PlusVec};

fn default_m() -> f64 {
    1.0
}

/// Data the composite gain is assembled from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisInput {
    pub gains: GainMatrix,
    pub zeta: GainFn,
    /// Coupling gains `pᵢ`; empty means all zero.
    #[serde(default, rename = "p")]
    pub p_list: Vec<GainFn>,
    pub a1: GainFn,
    #[serde(default = "default_m", rename = "M")]
    pub m: f64,
}

impl SynthesisInput {
    pub fn new(gains: GainMatrix, zeta: GainFn, a1: GainFn) -> Self {
        SynthesisInput {
            gains,
            zeta,
            p_list: Vec::new(),
            a1,
            m: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.gains.n();
        if !self.p_list.is_empty() && self.p_list.len() != n {
            return Err(Error::Config(format!(
                "expected {n} coupling gains p, got {}",
                self.p_list.len()
            )));
        }
        if !(self.m.is_finite() && self.m >= 1.0) {
            return Err(Error::Config(format!("M must be ≥ 1, got {}", self.m)));
        }
        // Strict increase of a₁ can only be sampled; a plateau anywhere on this grid is fatal.
        let grid = GridSpec::new(1e-8, 1e8, 257)?;
        let mut prev = 0.0;
        for s in grid.iter() {
            let v = self.a1.eval(s);
            if v <= prev {
                return Err(Error::Config(format!("a1 is not strictly increasing near s = {s:e}")));
            }
            prev = v;
        }
        Ok(())
    }

    fn p(&self, i: usize) -> GainFn {
        self.p_list.get(i).cloned().unwrap_or_else(GainFn::zero)
    }

    /// `pᵘ(s) = max{ζ(s), maxᵢ pᵢ(ζ(s))}`.
    pub fn p_upper(&self) -> GainFn {
        let mut terms = vec![self.zeta.clone()];
        for i in 0..self.gains.n() {
            let p = self.p(i);
            if !p.is_zero() {
                terms.push(GainFn::compose(p, self.zeta.clone()));
            }
        }
        GainFn::max_of(terms).expect("non-empty")
    }

    /// `p(x) = max{maxᵢ,ⱼ γᵢ,ⱼ(xⱼ), maxᵢ,ⱼ pᵢ(γᵢ,ⱼ(xⱼ))}`.
    pub fn p_map(&self, x: &PlusVec) -> Result<f64> {
        let n = self.gains.n();
        if x.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.dim(),
            });
        }
        let mut best = 0.0_f64;
        for i in 0..n {
            let p = self.p(i);
            for j in 0..n {
                let v = self.gains.get(i, j).eval(x[j]);
                best = best.max(v).max(p.eval(v));
            }
        }
        Ok(best)
    }
}

fn require_small_gain(g: &GainMatrix) -> Result<()> {
    let report = check_small_gain(g, &GridSpec::default());
    if report.holds {
        return Ok(());
    }
    let detail = match report.failing_cycle {
        Some(f) => format!("cycle {:?} fails with witness s* = {:e}", f.nodes, f.witness),
        None => "small-gain conditions fail".into(),
    };
    Err(Error::SmallGainNotEstablished(detail))
}

/// `φᵢ(s) = max{s, chain compositions along simple paths of length 1..n−1 from i}`.
///
/// Chains that revisit a node are dominated once the small-gain conditions hold,
/// so only simple paths are enumerated.
pub fn build_phi(g: &GainMatrix) -> Result<Vec<GainFn>> {
    require_small_gain(g)?;
    let n = g.n();
    let mut phis = Vec::with_capacity(n);
    for i in 0..n {
        let mut chains = vec![GainFn::identity()];
        let mut visited = vec![false; n];
        visited[i] = true;
        collect_paths(g, i, None, &mut visited, &mut chains);
        phis.push(GainFn::max_of(chains).expect("non-empty"));
    }
    Ok(phis)
}

fn collect_paths(g: &GainMatrix, node: usize, prefix: Option<GainFn>, visited: &mut [bool], out: &mut Vec<GainFn>) {
    for next in 0..g.n() {
        if visited[next] {
            continue;
        }
        let gain = g.get(node, next);
        if gain.is_zero() {
            continue;
        }
        // prefix ∘ γ_{node,next} evaluates as nested application, same as compose_chain.
        let chain = match &prefix {
            None => gain.clone(),
            Some(p) => GainFn::compose(p.clone(), gain.clone()),
        };
        out.push(chain.clone());
        visited[next] = true;
        collect_paths(g, next, Some(chain), visited, out);
        visited[next] = false;
    }
}

/// `Gᵢ = φᵢ ∘ max{M·pᵘ, M·p(φ₁∘ζ, …, φₙ∘ζ), ζ}` for each channel.
pub fn build_gmap(inp: &SynthesisInput, phi: &[GainFn]) -> Result<Vec<GainFn>> {
    let n = inp.gains.n();
    if inp.zeta.normalize().is_zero() {
        return Ok(vec![GainFn::zero(); n]);
    }
    let zeta = &inp.zeta;
    let phi_zeta: Vec<GainFn> = phi.iter().map(|f| GainFn::compose(f.clone(), zeta.clone())).collect();

    let mut p_terms = Vec::new();
    for i in 0..n {
        let p = inp.p(i);
        for (j, pz) in phi_zeta.iter().enumerate() {
            let gij = inp.gains.get(i, j);
            if gij.is_zero() {
                continue;
            }
            let branch = GainFn::compose(gij.clone(), pz.clone());
            if !p.is_zero() {
                p_terms.push(GainFn::compose(p.clone(), branch.clone()));
            }
            p_terms.push(branch);
        }
    }

    let scale = |g: GainFn| -> Result<GainFn> {
        if inp.m == 1.0 {
            Ok(g)
        } else {
            GainFn::scale(inp.m, g)
        }
    };
    let mut inner_terms = vec![scale(inp.p_upper())?];
    if let Some(p) = GainFn::max_of(p_terms) {
        inner_terms.push(scale(p)?);
    }
    inner_terms.push(zeta.clone());
    let inner = GainFn::max_of(inner_terms).expect("non-empty");
    Ok(phi.iter().map(|f| GainFn::compose(f.clone(), inner.clone())).collect())
}

/// `θ(s) = maxᵢ φᵢ(max{maxᵢ pᵢ(ζ), maxᵢⱼ γᵢⱼ(φⱼ(ζ)), maxᵢⱼ pᵢ(γᵢⱼ(φⱼ(ζ))), ζ})`,
/// with `M` folded into the non-identity branches when `M > 1`.
pub fn build_theta(inp: &SynthesisInput) -> Result<GainFn> {
    inp.validate()?;
    let phi = build_phi(&inp.gains)?;
    theta_from(inp, &phi)
}

fn theta_from(inp: &SynthesisInput, phi: &[GainFn]) -> Result<GainFn> {
    let gmap = build_gmap(inp, phi)?;
    if gmap.iter().all(GainFn::is_zero) {
        return Ok(GainFn::zero());
    }
    Ok(GainFn::max_of(gmap).expect("n ≥ 1"))
}

/// `a₁⁻¹ ∘ θ`, with the inverse evaluated lazily.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverallGain {
    #[serde(rename = "inverse_of")]
    pub a1: GainFn,
    #[serde(rename = "after")]
    pub theta: GainFn,
}

impl OverallGain {
    pub fn eval(&self, s: f64) -> Result<f64> {
        let y = self.theta.eval(s);
        invert_auto(&self.a1, y).map_err(|e| e.context(format!("inverting a1 at y = {y:e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeGain {
    pub phi: Vec<GainFn>,
    pub theta: GainFn,
    pub overall: OverallGain,
    pub gmap: Vec<GainFn>,
    pub p_upper: GainFn,
}

impl CompositeGain {
    /// CSV rows `s,theta,overall` on the given grid.
    pub fn table_csv(&self, grid: &GridSpec) -> Result<String> {
        let mut out = String::from("s,theta,overall\n");
        for s in grid.iter() {
            out.push_str(&format!("{s:e},{:e},{:e}\n", self.theta.eval(s), self.overall.eval(s)?));
        }
        Ok(out)
    }
}

/// Packages `φ`, `θ`, `a₁⁻¹ ∘ θ`, `Gᵢ` and `pᵘ`.
pub fn overall_gain(inp: &SynthesisInput) -> Result<CompositeGain> {
    inp.validate()?;
    let phi = build_phi(&inp.gains)?;
    let gmap = build_gmap(inp, &phi)?;
    let theta = theta_from(inp, &phi)?;
    Ok(CompositeGain {
        overall: OverallGain {
            a1: inp.a1.clone(),
            theta: theta.clone(),
        },
        phi,
        theta,
        gmap,
        p_upper: inp.p_upper(),
    })
}
