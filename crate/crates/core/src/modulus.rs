//! Moduli of continuity as concave piecewise-linear polylines.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{dist, ScalarField};
use crate::pairs::PairSampler;

const HULL_TOL: f64 = 1e-12;

/// Concave, nondecreasing polyline through `(0, 0)`, constant past its last breakpoint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModulusOfContinuity {
    breakpoints: Vec<(f64, f64)>,
}

impl ModulusOfContinuity {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("modulus breakpoints: {m}")));
        if breakpoints.first() != Some(&(0.0, 0.0)) {
            return bad("must start at (0, 0)");
        }
        if breakpoints.iter().any(|&(r, w)| !r.is_finite() || !w.is_finite()) {
            return bad("non-finite value");
        }
        let mut prev_slope = f64::INFINITY;
        for win in breakpoints.windows(2) {
            let ((r0, w0), (r1, w1)) = (win[0], win[1]);
            if r1 <= r0 {
                return bad("radii must increase");
            }
            let s = (w1 - w0) / (r1 - r0);
            let tol = HULL_TOL * s.abs().max(1.0);
            if s < -tol {
                return bad("must be nondecreasing");
            }
            if s > prev_slope + tol * prev_slope.abs().max(1.0) {
                return bad("must be concave");
            }
            prev_slope = s;
        }
        Ok(Self { breakpoints })
    }

    /// `ω(t) = slope · t` on `[0, r_max]`, constant beyond.
    pub fn linear(slope: f64, r_max: f64) -> Result<Self> {
        if !(slope >= 0.0 && r_max > 0.0) {
            return Err(Error::InvalidArgument("linear modulus needs slope >= 0, r_max > 0".into()));
        }
        Self::new(vec![(0.0, 0.0), (r_max, slope * r_max)])
    }

    /// The identity polyline, reaching far past any test domain.
    pub fn identity() -> Self {
        Self {
            breakpoints: vec![(0.0, 0.0), (1e6, 1e6)],
        }
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if r < 0.0 || r.is_nan() {
            return Err(Error::InvalidArgument(format!("modulus evaluated at r = {r}")));
        }
        Ok(self.eval_unchecked(r))
    }

    pub(crate) fn eval_unchecked(&self, r: f64) -> f64 {
        let b = &self.breakpoints;
        let last = b[b.len() - 1];
        if r >= last.0 {
            return last.1;
        }
        let k = b.partition_point(|&(x, _)| x <= r);
        let (r0, w0) = b[k - 1];
        let (r1, w1) = b[k];
        w0 + (w1 - w0) * (r - r0) / (r1 - r0)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.breakpoints.iter().map(|&(r, w)| (r, c * w)).collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,omega")?;
        for (r, o) in &self.breakpoints {
            writeln!(w, "{r:.16e},{o:.16e}")?;
        }
        Ok(())
    }
}

/// Upper concave hull of `samples ∪ {(0,0)}`, cut off after its highest vertex.
pub fn least_concave_majorant(samples: &[(f64, f64)]) -> Result<ModulusOfContinuity> {
    if let Some(&(r, w)) = samples.iter().find(|&&(r, w)| r < 0.0 || w < 0.0 || !r.is_finite() || !w.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid modulus sample ({r}, {w})")));
    }
    let mut pts: Vec<(f64, f64)> = samples.to_vec();
    pts.push((0.0, 0.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    pts.dedup_by(|b, a| a.0 == b.0);
    // (0, 0) must stay the first vertex even if a sample at r = 0 is positive.
    if pts[0] != (0.0, 0.0) {
        return Err(Error::InvalidArgument("sample at r = 0 must be 0".into()));
    }

    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            let scale = ((a.0 - o.0).abs() + (p.0 - o.0).abs()) * ((a.1 - o.1).abs() + (p.1 - o.1).abs());
            if cross >= -HULL_TOL * scale.max(f64::MIN_POSITIVE) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let top = hull
        .iter()
        .enumerate()
        .fold(0, |best, (i, p)| if p.1 > hull[best].1 { i } else { best });
    hull.truncate(top + 1);
    if hull.len() == 1 {
        // All samples vanish: the zero modulus.
        hull.push((1.0, 0.0));
    }
    ModulusOfContinuity::new(hull)
}

/// Polyline interpolating `t^ε` on 64 geometric radii in `[2^-12, 2^5]`.
pub fn holder_modulus(eps: f64) -> Result<ModulusOfContinuity> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("Hölder exponent {eps} outside (0, 1]")));
    }
    if eps == 1.0 {
        return Ok(ModulusOfContinuity::new(vec![(0.0, 0.0), (32.0, 32.0)])?);
    }
    let (lo, hi) = (-12.0f64, 5.0f64);
    let mut b = vec![(0.0, 0.0)];
    for k in 0..64 {
        let r = (lo + (hi - lo) * k as f64 / 63.0).exp2();
        b.push((r, r.powf(eps)));
    }
    least_concave_majorant(&b[1..])
}

/// Pair distances and absolute value differences over sampled closure-point pairs.
fn pair_table(field: &ScalarField, sampler: &PairSampler) -> Vec<(f64, f64)> {
    let dom = field.domain();
    let pairs = sampler.pairs(dom);
    let vals = field.closure_values();
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let d = dist(dom.closure_point(i as usize), dom.closure_point(j as usize));
            (d, (vals[i as usize] - vals[j as usize]).abs())
        })
        .collect()
}

fn oscillation(field: &ScalarField) -> f64 {
    let v = field.closure_values();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if v.is_empty() {
        0.0
    } else {
        max - min
    }
}

/// Sampled `sup{|ρ(x) − ρ(y)| : ‖x − y‖ ≤ r}` at each radius, made nondecreasing.
/// Radii at or beyond the sampled diameter get the global oscillation.
pub fn empirical_modulus(rho: &ScalarField, radii: &[f64], sampler: &PairSampler) -> Result<Vec<(f64, f64)>> {
    if radii.iter().any(|&r| !(r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("radii must be positive and increasing".into()));
    }
    let mut table = pair_table(rho, sampler);
    table.sort_by(|a, b| a.0.total_cmp(&b.0));
    let diam = table.last().map_or(0.0, |t| t.0);
    let osc = oscillation(rho);
    let mut prefix = Vec::with_capacity(table.len());
    let mut run = 0.0f64;
    for &(_, v) in &table {
        run = run.max(v);
        prefix.push(run);
    }
    let mut out = Vec::with_capacity(radii.len());
    let mut run = 0.0f64;
    for &r in radii {
        let k = table.partition_point(|t| t.0 <= r);
        let s = if r >= diam { osc } else if k == 0 { 0.0 } else { prefix[k - 1] };
        run = run.max(s);
        out.push((r, run));
    }
    Ok(out)
}

/// Same supremum, sampled at exactly the pair distances where it increases.
pub fn empirical_modulus_records(rho: &ScalarField, sampler: &PairSampler) -> Vec<(f64, f64)> {
    let mut table = pair_table(rho, sampler);
    table.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut run = 0.0f64;
    for (d, v) in table {
        if v > run && d > 0.0 {
            run = v;
            out.push((d, v));
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct CMembership {
    pub pass: bool,
    pub constant: f64,
    pub c_max: f64,
    pub pair_count: usize,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
}

/// Least sampled `C` with `|ψ(x) − ψ(y)| ≤ C ω(‖x − y‖)`.
pub fn comega_membership(
    psi: &ScalarField,
    omega: &ModulusOfContinuity,
    sampler: &PairSampler,
    c_max: f64,
) -> CMembership {
    let dom = psi.domain();
    let pairs = sampler.pairs(dom);
    let vals = psi.closure_values();
    let worst = pairs
        .par_iter()
        .map(|&(i, j)| {
            let d = dist(dom.closure_point(i as usize), dom.closure_point(j as usize));
            let diff = (vals[i as usize] - vals[j as usize]).abs();
            let w = omega.eval_unchecked(d);
            let ratio = if diff == 0.0 {
                0.0
            } else if w > 0.0 {
                diff / w
            } else {
                f64::INFINITY
            };
            (ratio, i, j)
        })
        .reduce(|| (0.0, 0, 0), |a, b| if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) { b } else { a });
    CMembership {
        pass: worst.0 <= c_max,
        constant: worst.0,
        c_max,
        pair_count: pairs.len(),
        worst_pair: (worst.0 > 0.0).then(|| {
            (
                dom.closure_point(worst.1 as usize).to_vec(),
                dom.closure_point(worst.2 as usize).to_vec(),
            )
        }),
    }
}
