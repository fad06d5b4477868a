//! Modulus-of-continuity verification for envelope solutions: constants,
//! translated competitors `v_tau`, their gluing with `u`, the global
//! modulus bound, Hölder exponent fitting, and defining-function extraction.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{dist, norm2, GridDomain, RealFn, ScalarField, Site};
use crate::modulus::ModulusOfContinuity;
use crate::operator::{ma_normalization, ma_pointwise};
use crate::pairs::PairSampler;
use crate::psh::psh_report;
use crate::report::{finite_or_max, Check};
use crate::solver::{family_membership, solve, DirichletData, SolveConfig};

/// Safety factor on sampled (estimated) constants.
pub const ESTIMATE_MARGIN: f64 = 1.05;
/// Margin realizing strict inequalities.
pub const STRICT_MARGIN: f64 = 1.01;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityConstants {
    #[serde(rename = "A_n")]
    pub a_n: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K_prime")]
    pub k_prime: f64,
    pub c_f: f64,
    #[serde(rename = "C_f")]
    pub big_c_f: f64,
}

impl RegularityConstants {
    /// `K' = 1.01 C_f S` with `S` the largest `|z|^2` over non-Exterior nodes
    /// and anchors (a small positive floor when `C_f S = 0`).
    pub fn new(domain: &GridDomain, k: f64, k1: f64, c_f: f64, big_c_f: f64) -> Result<Self> {
        if [k, k1, c_f, big_c_f].iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::InvalidArgument("regularity constants must be >= 0".into()));
        }
        let s = sup_norm2(domain);
        let k_prime = (STRICT_MARGIN * big_c_f * s).max(1e-12);
        Ok(Self {
            a_n: ma_normalization(domain.n()),
            k,
            k1,
            k_prime,
            c_f,
            big_c_f,
        })
    }
}

fn sup_norm2(domain: &GridDomain) -> f64 {
    let nodes = (0..domain.active_len()).map(|s| norm2(&domain.slot_point(s)));
    let anchors = (0..domain.closure_len()).map(|j| norm2(domain.closure_point(j)));
    nodes.chain(anchors).fold(0.0, f64::max)
}

fn root(f: f64, n: usize) -> f64 {
    f.max(0.0).powf(1.0 / n as f64)
}

/// `1.05 max |f^{1/n}(x) - f^{1/n}(y)| / omega(|x - y|)` over sampled closure pairs.
pub fn estimate_cf(f: &RealFn, omega: &ModulusOfContinuity, domain: &GridDomain, sampler: &PairSampler) -> Result<f64> {
    if omega.breakpoints().get(1).map_or(true, |b| b.1 <= 0.0) {
        return Err(Error::InvalidArgument("modulus must be positive for r > 0".into()));
    }
    let n = domain.n();
    let vals: Vec<f64> = (0..domain.closure_len())
        .into_par_iter()
        .map(|j| root(f(domain.closure_point(j)), n))
        .collect();
    let best = sampler
        .pairs(domain)
        .par_iter()
        .map(|&(i, j)| {
            let d = dist(domain.closure_point(i as usize), domain.closure_point(j as usize));
            let diff = (vals[i as usize] - vals[j as usize]).abs();
            if diff == 0.0 {
                0.0
            } else {
                diff / omega.eval_unchecked(d)
            }
        })
        .reduce(|| 0.0, f64::max);
    Ok(ESTIMATE_MARGIN * best)
}

/// `1.01 max_k binom(n, k)^{1/k} A_n^{-1/n} c_f`, or `1e-6` when `c_f = 0`.
pub fn compute_cf(n: usize, c_f: f64) -> Result<f64> {
    if !(c_f >= 0.0) {
        return Err(Error::InvalidArgument("c_f must be >= 0".into()));
    }
    if c_f == 0.0 {
        return Ok(1e-6);
    }
    let a = ma_normalization(n).powf(-1.0 / n as f64);
    let best = (1..=n)
        .map(|k| binom(n, k).powf(1.0 / k as f64))
        .fold(0.0, f64::max);
    Ok(STRICT_MARGIN * best * a * c_f)
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `v_tau(z) = u(z + tau) + C_f w |z|^2 - (K_1 + K') w`, `w = omega(|tau|)`,
/// on closure points `z` with `z + tau` in the closure. Values outside the
/// overlap are copied from `u`.
#[derive(Clone, Debug)]
pub struct VTau {
    pub field: ScalarField,
    pub tau: Vec<f64>,
    pub omega_tau: f64,
    /// Per slot: node inside the closure with its translate inside too.
    pub node_mask: Vec<bool>,
    /// Per boundary ordinal: anchor translate inside the closure.
    pub trace_mask: Vec<bool>,
}

fn in_closure(def: &RealFn, p: &[f64]) -> bool {
    def(p) <= 1e-12
}

pub fn build_vtau(u: &ScalarField, tau: &[f64], consts: &RegularityConstants, omega: &ModulusOfContinuity) -> Result<VTau> {
    let dom = u.domain().clone();
    let h = dom.h();
    if tau.len() != dom.dim() {
        return Err(Error::InvalidArgument("translation has the wrong dimension".into()));
    }
    let t = norm2(tau).sqrt();
    if t > 4.0 * h + 1e-12 {
        return Err(Error::InvalidArgument(format!("|tau| = {t} exceeds 4h")));
    }
    let w = omega.eval(t)?;
    let def = dom.defining_fn().clone();
    let shift = |p: &[f64]| -> Vec<f64> { p.iter().zip(tau).map(|(a, b)| a + b).collect() };
    let value = |p: &[f64]| -> Result<f64> {
        Ok(u.interpolate(&shift(p))? + consts.big_c_f * w * norm2(p) - (consts.k1 + consts.k_prime) * w)
    };

    let mut values = u.values().to_vec();
    let mut node_mask = vec![false; dom.active_len()];
    for &s in dom.interior_slots() {
        let p = dom.slot_point(s);
        let q = shift(&p);
        if in_closure(&def, &q) {
            values[s] = value(&p)?;
            node_mask[s] = true;
        }
    }
    let mut trace = u.trace().to_vec();
    let mut trace_mask = vec![false; dom.boundary_slots().len()];
    for ord in 0..trace.len() {
        if let Some(a) = dom.anchor_of_ord(ord) {
            if in_closure(&def, &shift(a)) {
                trace[ord] = value(a)?;
                trace_mask[ord] = true;
            }
        }
    }
    if !node_mask.iter().any(|&m| m) && !trace_mask.iter().any(|&m| m) {
        return Err(Error::EmptyOverlap(tau.to_vec()));
    }
    Ok(VTau {
        field: ScalarField::from_parts(&dom, values, trace)?,
        tau: tau.to_vec(),
        omega_tau: w,
        node_mask,
        trace_mask,
    })
}

/// `max(u, v_tau)` on the overlap, `u` elsewhere.
pub fn glue_vtau(u: &ScalarField, vt: &VTau) -> Result<ScalarField> {
    if !u.same_domain(&vt.field) {
        return Err(Error::DomainMismatch);
    }
    let values = u
        .values()
        .iter()
        .zip(vt.field.values())
        .zip(&vt.node_mask)
        .map(|((&a, &b), &m)| if m { a.max(b) } else { a })
        .collect();
    let trace = u
        .trace()
        .iter()
        .zip(vt.field.trace())
        .zip(&vt.trace_mask)
        .map(|((&a, &b), &m)| if m { a.max(b) } else { a })
        .collect();
    ScalarField::from_parts(u.domain(), values, trace)
}

#[derive(Clone, Debug, Serialize)]
pub struct TauReport {
    pub tau: Vec<f64>,
    pub omega_tau: f64,
    pub checks: Vec<Check>,
}

impl TauReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Step3Report {
    pub pass: bool,
    pub tolerance: f64,
    pub taus: Vec<TauReport>,
}

/// For each translation: the Monge-Ampère lower bound for `v_tau`, the
/// density chain linking `f(z)` to `f(z + tau)`, the rim inequality
/// `v_tau <= u` where `z` or `z + tau` lies on the boundary, and membership
/// of the glued field.
pub fn verify_step3(
    u: &ScalarField,
    data: &DirichletData,
    consts: &RegularityConstants,
    omega: &ModulusOfContinuity,
    taus: &[Vec<f64>],
) -> Result<Step3Report> {
    let dom = u.domain().clone();
    let n = dom.n();
    let a_n = consts.a_n;
    let h = dom.h();
    let fmax = (0..dom.closure_len())
        .map(|j| (data.f)(dom.closure_point(j)))
        .fold(0.0, f64::max);
    let tol = 20.0 * h * (1.0 + fmax);
    let def = dom.defining_fn().clone();
    let mut out = Vec::new();
    for tau in taus {
        let vt = build_vtau(u, tau, consts, omega)?;
        let w = vt.omega_tau;
        let shift = |p: &[f64]| -> Vec<f64> { p.iter().zip(tau).map(|(a, b)| a + b).collect() };
        let mut checks = Vec::new();

        // Nodes whose whole 3^{2n} neighbourhood lies in the overlap.
        let offsets = crate::grid::moore_offsets(dom.dim());
        let full: Vec<usize> = dom
            .interior_slots()
            .iter()
            .copied()
            .filter(|&s| {
                vt.node_mask[s]
                    && offsets.iter().all(|o| {
                        dom.offset_node(dom.node_of_slot(s), o)
                            .and_then(|m| dom.slot(m))
                            .is_some_and(|q| vt.node_mask[q])
                    })
            })
            .collect();

        let lower = |ft: f64| -> f64 {
            ft + a_n
                * (1..=n)
                    .map(|k| {
                        a_n.powf(k as f64 / n as f64 - 1.0)
                            * consts.big_c_f.powi(k as i32)
                            * w.powi(k as i32)
                            * ft.max(0.0).powf((n - k) as f64 / n as f64)
                    })
                    .sum::<f64>()
        };
        let (mut worst_ma, mut worst_ma_p) = (f64::INFINITY, Vec::new());
        let (mut worst_target, mut worst_target_p) = (f64::INFINITY, Vec::new());
        let (mut worst_c1, mut worst_c1_p) = (f64::INFINITY, Vec::new());
        let (mut worst_c2, mut worst_c2_p) = (f64::INFINITY, Vec::new());
        for &s in &full {
            let p = dom.slot_point(s);
            let fz = (data.f)(&p);
            let ft = (data.f)(&shift(&p));
            let ma = ma_pointwise(&vt.field, dom.node_of_slot(s))?;
            let g = ma - lower(ft);
            if g < worst_ma {
                worst_ma = g;
                worst_ma_p = p.clone();
            }
            let g = ma - fz;
            if g < worst_target {
                worst_target = g;
                worst_target_p = p.clone();
            }
        }
        // The density chain holds pointwise at every overlap node.
        for &s in dom.interior_slots().iter().filter(|&&s| vt.node_mask[s]) {
            let p = dom.slot_point(s);
            let fz = (data.f)(&p);
            let ft = (data.f)(&shift(&p));
            let mid: f64 = ft + (1..=n)
                .map(|k| binom(n, k) * consts.c_f.powi(k as i32) * w.powi(k as i32) * ft.max(0.0).powf((n - k) as f64 / n as f64))
                .sum::<f64>();
            let top: f64 = ft + (1..=n)
                .map(|k| a_n.powf(k as f64 / n as f64) * consts.big_c_f.powi(k as i32) * w.powi(k as i32) * ft.max(0.0).powf((n - k) as f64 / n as f64))
                .sum::<f64>();
            let slack = 1e-9 * (1.0 + fz.abs());
            if mid - fz + slack < worst_c1 {
                worst_c1 = mid - fz + slack;
                worst_c1_p = p.clone();
            }
            if top - fz + slack < worst_c2 {
                worst_c2 = top - fz + slack;
                worst_c2_p = p.clone();
            }
        }
        checks.push(Check::new("ma_vtau_lower_bound", worst_ma >= -tol, worst_ma, tol).at(worst_ma_p));
        checks.push(Check::new("ma_vtau_target", worst_target >= -tol, worst_target, tol).at(worst_target_p));
        checks.push(Check::new("density_chain_modulus", worst_c1 >= 0.0, worst_c1, 1e-9).at(worst_c1_p));
        checks.push(Check::new("density_chain_constants", worst_c2 >= 0.0, worst_c2, 1e-9).at(worst_c2_p));

        // Rim: z on the boundary, or z + tau on the boundary.
        let rim_tol = 1e-9 + h * h;
        let (mut rim, mut rim_p) = (f64::NEG_INFINITY, Vec::new());
        for ord in 0..dom.boundary_slots().len() {
            let Some(a) = dom.anchor_of_ord(ord) else { continue };
            if vt.trace_mask[ord] {
                let g = vt.field.trace()[ord] - u.trace()[ord];
                if g > rim {
                    rim = g;
                    rim_p = a.to_vec();
                }
            }
            let z: Vec<f64> = a.iter().zip(tau).map(|(x, t)| x - t).collect();
            if in_closure(&def, &z) {
                let uz = u.interpolate(&z)?;
                let g = u.trace()[ord] + consts.big_c_f * w * norm2(&z) - (consts.k1 + consts.k_prime) * w - uz;
                if g > rim {
                    rim = g;
                    rim_p = z;
                }
            }
        }
        checks.push(Check::new("rim_vtau_below_u", rim <= rim_tol, rim, rim_tol).at(rim_p));

        let glued = glue_vtau(u, &vt)?;
        let m = family_membership(&glued, data, tol);
        checks.push(Check::new("glued_psh", m.psh, m.worst_eigenvalue, tol).at(m.worst_psh_point.clone()));
        checks.push(Check::new("glued_boundary", m.boundary, m.worst_boundary_gap, tol));
        checks.push(Check::new("glued_density", m.density, m.worst_density_gap, tol).at(m.worst_density_point.clone()));
        out.push(TauReport {
            tau: tau.clone(),
            omega_tau: w,
            checks,
        });
    }
    Ok(Step3Report {
        pass: out.iter().all(|t| t.pass()),
        tolerance: tol,
        taus: out,
    })
}

/// `±h e_1`, `±h e_2`: along the real axes of z_1 and z_2 in C^2, along the
/// real and imaginary axes in C^1.
pub fn axis_translations(domain: &GridDomain) -> Vec<Vec<f64>> {
    let d = domain.dim();
    let h = domain.h();
    let second = if domain.n() >= 2 { 2 } else { 1 };
    let mut out = Vec::new();
    for axis in [0, second] {
        for sign in [1.0, -1.0] {
            let mut t = vec![0.0; d];
            t[axis] = sign * h;
            out.push(t);
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryModulus {
    #[serde(rename = "K1")]
    pub k1: f64,
    pub raw_ratio: f64,
    pub pair_count: usize,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
    pub sandwich_excess: f64,
    pub sandwich_point: Vec<f64>,
}

/// `K_1 = 1.05 max |u(z) - u(zeta)| / omega(|z - zeta|)` over sampled pairs of
/// a closure point `z` and a boundary anchor `zeta`, after checking
/// `sub <= u <= sup` within `10h` at every closure point.
pub fn verify_boundary_modulus(
    u: &ScalarField,
    sub: &ScalarField,
    sup: &ScalarField,
    omega: &ModulusOfContinuity,
    sampler: &PairSampler,
) -> Result<BoundaryModulus> {
    if !u.same_domain(sub) || !u.same_domain(sup) {
        return Err(Error::DomainMismatch);
    }
    let dom = u.domain().clone();
    let (mut excess, mut at) = (0.0f64, 0usize);
    for j in 0..dom.closure_len() {
        let v = u.closure_value(j);
        let e = (sub.closure_value(j) - v).max(v - sup.closure_value(j));
        if e > excess {
            excess = e;
            at = j;
        }
    }
    let point = dom.closure_point(at).to_vec();
    if excess > 10.0 * dom.h() {
        return Err(Error::SandwichViolated { excess, point });
    }
    let all: Vec<u32> = (0..dom.closure_len() as u32).collect();
    let anchors: Vec<u32> = dom
        .closure_sites()
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, Site::Anchor(_)))
        .map(|(j, _)| j as u32)
        .collect();
    let pairs = sampler.cross_pairs(&dom, &all, &anchors);
    let vals = u.closure_values();
    let worst = pairs
        .par_iter()
        .map(|&(i, j)| {
            let d = dist(dom.closure_point(i as usize), dom.closure_point(j as usize));
            let diff = (vals[i as usize] - vals[j as usize]).abs();
            let r = if diff == 0.0 { 0.0 } else { diff / omega.eval_unchecked(d) };
            (r, i, j)
        })
        .reduce(|| (0.0, 0, 0), |a, b| if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) { b } else { a });
    Ok(BoundaryModulus {
        k1: ESTIMATE_MARGIN * worst.0,
        raw_ratio: worst.0,
        pair_count: pairs.len(),
        worst_pair: (worst.0 > 0.0).then(|| {
            (
                dom.closure_point(worst.1 as usize).to_vec(),
                dom.closure_point(worst.2 as usize).to_vec(),
            )
        }),
        sandwich_excess: excess,
        sandwich_point: point,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GlobalModulus {
    pub pass: bool,
    pub ratio: f64,
    pub bound: f64,
    pub pair_count: usize,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
}

/// `max (u(z') - u(z)) / omega(|z - z'|)` over sampled closure pairs in both
/// orders, against `(K_1 + K')(1 + 10h)`.
pub fn verify_global_modulus(
    u: &ScalarField,
    consts: &RegularityConstants,
    omega: &ModulusOfContinuity,
    sampler: &PairSampler,
) -> GlobalModulus {
    let dom = u.domain();
    let m = crate::modulus::comega_membership(u, omega, sampler, f64::INFINITY);
    let bound = (consts.k1 + consts.k_prime) * (1.0 + 10.0 * dom.h());
    GlobalModulus {
        pass: m.constant <= bound,
        ratio: m.constant,
        bound,
        pair_count: m.pair_count,
        worst_pair: m.worst_pair,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderFit {
    pub epsilon: f64,
    #[serde(rename = "C")]
    pub coefficient: f64,
    pub residual: f64,
    pub pair_count: usize,
    /// Fitted exponent before clamping to (0, 1].
    pub raw_slope: f64,
    /// `(d, M(d))` per nonempty bin, `d` the distance of the maximizing pair.
    pub bins: Vec<(f64, f64)>,
}

const LOG_FLOOR: f64 = 1e-30;

/// Fits `log M(d) = log C + eps log d - beta d` to the per-bin maxima
/// `M(d)` of `|u(x) - u(y)|` over dyadic distance bins `[h 2^k, h 2^{k+1})`
/// covering `[h, diam / 2]`; past half the diameter the maxima shrink as
/// the admissible pairs crowd toward the boundary. The linear term absorbs the large-scale
/// bending of smooth profiles so that `eps` reflects the small-scale rate.
pub fn holder_fit(u: &ScalarField, sampler: &PairSampler) -> Result<HolderFit> {
    let dom = u.domain();
    let h = dom.h();
    let pairs = sampler.pairs(dom);
    let vals = u.closure_values();
    let table: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            (
                dist(dom.closure_point(i as usize), dom.closure_point(j as usize)),
                (vals[i as usize] - vals[j as usize]).abs(),
            )
        })
        .collect();
    let diam = table.iter().map(|t| t.0).fold(0.0, f64::max);
    let mut edges = vec![h];
    while edges[edges.len() - 1] * 2.0 <= 0.5 * diam * (1.0 + 1e-12) {
        let e = edges[edges.len() - 1] * 2.0;
        edges.push(e);
    }
    let nb = edges.len() - 1;
    let mut best: Vec<Option<(f64, f64)>> = vec![None; nb];
    for &(d, m) in &table {
        if d < h * (1.0 - 1e-12) {
            continue;
        }
        let k = ((d / h).log2().floor().max(0.0)) as usize;
        if k >= nb {
            continue;
        }
        let slot = &mut best[k];
        if slot.map_or(true, |(bd, bm)| m > bm || (m == bm && d < bd)) {
            *slot = Some((d, m));
        }
    }
    let bins: Vec<(f64, f64)> = best.into_iter().flatten().collect();
    if bins.len() < 3 {
        return Err(Error::TooFewBins(bins.len()));
    }
    if bins.iter().all(|b| b.1 <= LOG_FLOOR) {
        return Ok(HolderFit {
            epsilon: 1.0,
            coefficient: LOG_FLOOR,
            residual: 0.0,
            pair_count: pairs.len(),
            raw_slope: 0.0,
            bins,
        });
    }
    let a = DMatrix::from_fn(bins.len(), 3, |r, c| match c {
        0 => 1.0,
        1 => bins[r].0.ln(),
        _ => -bins[r].0,
    });
    let y = DVector::from_iterator(bins.len(), bins.iter().map(|b| b.1.max(LOG_FLOOR).ln()));
    let sol = a
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::InvalidArgument(format!("Hölder fit: {e}")))?;
    let fit = &a * &sol;
    let residual = (0..bins.len()).map(|r| (y[r] - fit[r]).abs()).fold(0.0, f64::max);
    let raw = sol[1];
    Ok(HolderFit {
        epsilon: raw.clamp(1e-6, 1.0),
        coefficient: sol[0].exp(),
        residual,
        pair_count: pairs.len(),
        raw_slope: raw,
        bins,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtractionReport {
    pub pass: bool,
    pub checks: Vec<Check>,
    pub sweeps: usize,
}

/// Solves with `phi = -|z|^2`, `f = 0`, and returns `u + |z|^2` as a
/// candidate defining function. `rho_ref` only supplies the sub/supersolutions.
pub fn defining_function_from_solution(
    domain: &Arc<GridDomain>,
    rho_ref: &ScalarField,
    cfg: &SolveConfig,
) -> Result<(ScalarField, ExtractionReport)> {
    let data = DirichletData::new(Arc::new(|p: &[f64]| -norm2(p)), Arc::new(|_: &[f64]| 0.0));
    let sol = solve(domain, &data, rho_ref, cfg)?;
    let sq = ScalarField::sample(domain, norm2);
    let rho_new = sol.u.add_scaled(&sq, 1.0)?;
    let h = domain.h();
    let tol = 10.0 * h;

    let (mut imax, mut ip) = (f64::NEG_INFINITY, Vec::new());
    for &s in domain.interior_slots() {
        let v = rho_new.values()[s];
        if v > imax {
            imax = v;
            ip = domain.slot_point(s);
        }
    }
    let (mut bmax, mut bp) = (0.0f64, Vec::new());
    for (ord, &s) in domain.boundary_slots().iter().enumerate() {
        let v = rho_new.values()[s].abs().max(rho_new.trace()[ord].abs());
        if v > bmax {
            bmax = v;
            bp = domain.slot_point(s);
        }
    }
    let rep = psh_report(&sol.u, tol);
    let checks = vec![
        Check::new("rho_new_negative_inside", imax < 0.0, imax, 0.0).at(ip),
        Check::new("rho_new_small_on_boundary", bmax <= tol, bmax, tol).at(bp),
        Check::new("rho_new_minus_norm2_psh", rep.passes(), finite_or_max(rep.worst_eigenvalue), tol).at(rep.worst_point),
    ];
    Ok((
        rho_new,
        ExtractionReport {
            pass: checks.iter().all(|c| c.pass),
            checks,
            sweeps: sol.sweeps,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{classify_nodes, BoundingBox};

    #[test]
    fn compute_cf_examples() {
        assert!((compute_cf(2, 1.0).unwrap() - 1.01 * 2.0 / 32f64.sqrt()).abs() < 1e-12);
        assert!((compute_cf(2, 1.0).unwrap() - 0.35709).abs() < 1e-5);
        assert_eq!(compute_cf(2, 0.0).unwrap(), 1e-6);
        assert!((compute_cf(1, 1.0).unwrap() - 0.2525).abs() < 1e-12);
    }

    fn disc(h: f64) -> Arc<GridDomain> {
        let f: RealFn = Arc::new(|p: &[f64]| norm2(p) - 1.0);
        classify_nodes(1, f, &BoundingBox::cube(1, 1.25), h).unwrap()
    }

    #[test]
    fn vtau_at_zero_is_u() {
        let dom = disc(0.1);
        let u = ScalarField::sample(&dom, |p| norm2(p) - 1.0);
        let c = RegularityConstants::new(&dom, 1.0, 2.0, 0.0, 1e-6).unwrap();
        let vt = build_vtau(&u, &[0.0, 0.0], &c, &ModulusOfContinuity::identity()).unwrap();
        assert_eq!(vt.field.values(), u.values());
        assert_eq!(glue_vtau(&u, &vt).unwrap().values(), u.values());
        assert!(build_vtau(&u, &[0.5, 0.0], &c, &ModulusOfContinuity::identity()).is_err());
    }

    #[test]
    fn vtau_at_origin() {
        let dom = disc(0.125);
        let u = ScalarField::sample(&dom, |p| norm2(p) - 1.0);
        let c = RegularityConstants::new(&dom, 1.0, 2.0, 1.0, 0.3).unwrap();
        let vt = build_vtau(&u, &[0.125, 0.0], &c, &ModulusOfContinuity::identity()).unwrap();
        let o = dom.nearest_node(&[0.0, 0.0]).unwrap();
        assert!(norm2(&dom.point(o)) < 1e-24);
        let expect = (0.125f64.powi(2) - 1.0) - (c.k1 + c.k_prime) * 0.125;
        assert!((vt.field.value(o).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn holder_fit_constant_field() {
        let dom = disc(0.1);
        let u = ScalarField::constant(&dom, 3.0);
        let fit = holder_fit(&u, &PairSampler::default()).unwrap();
        assert_eq!(fit.epsilon, 1.0);
        assert!(fit.coefficient <= 1e-12);
        assert_eq!(fit.residual, 0.0);
    }

    #[test]
    fn holder_fit_needs_three_bins() {
        let dom = disc(0.4);
        let u = ScalarField::sample(&dom, |p| p[0]);
        assert!(matches!(holder_fit(&u, &PairSampler::default()), Err(Error::TooFewBins(_))));
    }
}
