//! Discrete plurisubharmonicity checks, barriers, the constant search for
//! `psi + K rho`, and mollification.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{dist, norm2, ScalarField};
use crate::operator::complex_hessian;

#[derive(Clone, Debug, Serialize)]
pub struct PshReport {
    pub checked_nodes: usize,
    pub violating_nodes: usize,
    /// Most negative eigenvalue over Interior nodes (or the smallest one seen).
    pub worst_eigenvalue: f64,
    pub worst_point: Vec<f64>,
    /// Points of the violating nodes, in lattice order.
    #[serde(skip)]
    pub violations: Vec<Vec<f64>>,
}

impl PshReport {
    pub fn passes(&self) -> bool {
        self.violating_nodes == 0
    }
}

/// Counts Interior nodes whose complex Hessian has an eigenvalue below `-tol`.
pub fn psh_report(u: &ScalarField, tol: f64) -> PshReport {
    let dom = u.domain();
    let nodes: Vec<_> = dom.interior_nodes().collect();
    let mins: Vec<f64> = nodes
        .par_iter()
        .map(|&nd| {
            complex_hessian(u, nd)
                .map(|m| m.min_eigenvalue())
                .unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    let mut worst = f64::INFINITY;
    let mut worst_point = Vec::new();
    let mut violations = Vec::new();
    for (nd, &ev) in nodes.iter().zip(&mins) {
        if ev < worst {
            worst = ev;
            worst_point = dom.point(*nd);
        }
        if ev < -tol {
            violations.push(dom.point(*nd));
        }
    }
    PshReport {
        checked_nodes: nodes.len(),
        violating_nodes: violations.len(),
        worst_eigenvalue: worst,
        worst_point,
        violations,
    }
}

/// `psh_report(rho - |z|^2)`: the complex Hessian of `rho` dominates `I`.
pub fn strict_psh_report(rho: &ScalarField, tol: f64) -> PshReport {
    let shifted = subtract_norm2(rho);
    psh_report(&shifted, tol)
}

pub fn uniformly_strictly_psh(rho: &ScalarField, tol: f64) -> bool {
    strict_psh_report(rho, tol).passes()
}

fn subtract_norm2(u: &ScalarField) -> ScalarField {
    let q = ScalarField::sample(u.domain(), norm2);
    u.sub(&q).expect("same domain")
}

/// `v(z) = -|z - zeta|^2 + rho(z)`.
pub fn barrier(rho: &ScalarField, zeta: &[f64]) -> Result<ScalarField> {
    let dom = rho.domain();
    if zeta.len() != dom.dim() {
        return Err(Error::InvalidArgument("boundary point has wrong dimension".into()));
    }
    let g = (dom.defining_fn())(zeta);
    if g.abs() > 1e-6 {
        return Err(Error::Precondition(format!(
            "point is not on the boundary (defining function {g:e})"
        )));
    }
    let bump = ScalarField::sample(dom, |p| -dist(p, zeta).powi(2));
    rho.zip_with(&bump, |a, b| a + b)
}

#[derive(Clone, Debug, Serialize)]
pub struct BarrierReport {
    pub pass: bool,
    /// Value at the closure point nearest to zeta.
    pub value_near_zeta: f64,
    pub zero_tolerance: f64,
    /// Sup over closure points outside B(zeta, delta).
    pub sup_outside: f64,
    pub sup_point: Vec<f64>,
    pub delta: f64,
}

/// Checks that `v` vanishes at `zeta` (through the nearest closure point,
/// to within `1e-6 + h`) and is negative on closure points outside
/// `B(zeta, delta)`.
pub fn verify_barrier(v: &ScalarField, zeta: &[f64], delta: f64) -> Result<BarrierReport> {
    let dom = v.domain();
    let h = dom.h();
    if !(delta >= 2.0 * h) {
        return Err(Error::Precondition(format!("delta = {delta} is below 2h = {}", 2.0 * h)));
    }
    let mut nearest = (f64::INFINITY, 0.0);
    let mut sup = (f64::NEG_INFINITY, Vec::new());
    for j in 0..dom.closure_len() {
        let p = dom.closure_point(j);
        let r = dist(p, zeta);
        let val = v.closure_value(j);
        if r < nearest.0 {
            nearest = (r, val);
        }
        if r > delta && val > sup.0 {
            sup = (val, p.to_vec());
        }
    }
    let zero_tolerance = 1e-6 + h;
    Ok(BarrierReport {
        pass: nearest.1.abs() <= zero_tolerance && sup.0 < 0.0,
        value_near_zeta: nearest.1,
        zero_tolerance,
        sup_outside: sup.0,
        sup_point: sup.1,
        delta,
    })
}

/// Outcome of a failed constant search: the worst node at `k_max`.
#[derive(Clone, Debug)]
pub struct SearchFailure {
    pub worst: f64,
    pub point: Vec<f64>,
}

/// Smallest K on the sequence 0, 1/16, 2/16, 4/16, ... accepted by `ok`,
/// refined by bisection to relative width 1e-3. `ok` returns `Err` with the
/// worst node when it rejects.
pub fn search_constant(
    k_max: f64,
    mut ok: impl FnMut(f64) -> std::result::Result<(), SearchFailure>,
) -> Result<f64> {
    let fail = |k_max: f64, f: SearchFailure| Error::ConstantNotFound {
        k_max,
        worst: f.worst,
        point: f.point,
    };
    let mut last_fail = match ok(0.0) {
        Ok(()) => return Ok(0.0),
        Err(f) => f,
    };
    let mut lo = 0.0;
    let mut hi = 1.0 / 16.0;
    loop {
        if hi > k_max {
            return Err(fail(k_max, last_fail));
        }
        match ok(hi) {
            Ok(()) => break,
            Err(f) => {
                last_fail = f;
                lo = hi;
                hi *= 2.0;
            }
        }
    }
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if ok(mid).is_ok() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Smallest K with `psi + K rho` passing `psh_report` at tolerance 1e-8.
pub fn find_psh_k(psi: &ScalarField, rho: &ScalarField, k_max: f64) -> Result<f64> {
    if !psi.same_domain(rho) {
        return Err(Error::DomainMismatch);
    }
    search_constant(k_max, |k| {
        let rep = psh_report(&psi.add_scaled(rho, k).expect("same domain"), 1e-8);
        if rep.passes() {
            Ok(())
        } else {
            Err(SearchFailure {
                worst: rep.worst_eigenvalue,
                point: rep.worst_point,
            })
        }
    })
}

/// Convolution with the normalized bump `(1 - (r/eps)^2)^3` over lattice
/// offsets with `r < eps`. Nodes whose kernel support leaves the
/// non-Exterior set keep their value; the trace is unchanged.
pub fn mollify(u: &ScalarField, eps: f64) -> Result<ScalarField> {
    let dom = u.domain();
    let h = dom.h();
    if !(eps >= h) {
        return Err(Error::Precondition(format!("mollifier radius {eps} is below h = {h}")));
    }
    let d = dom.dim();
    let reach = (eps / h).ceil() as i64;
    let side = (2 * reach + 1) as usize;
    let mut kernel: Vec<(Vec<i64>, f64)> = Vec::new();
    for code in 0..side.pow(d as u32) {
        let mut c = code;
        let mut off = vec![0i64; d];
        for k in (0..d).rev() {
            off[k] = (c % side) as i64 - reach;
            c /= side;
        }
        let r = (off.iter().map(|o| (o * o) as f64).sum::<f64>()).sqrt() * h;
        if r < eps {
            let t = 1.0 - (r / eps).powi(2);
            kernel.push((off, t * t * t));
        }
    }
    let total: f64 = kernel.iter().map(|k| k.1).sum();
    let values: Vec<f64> = (0..dom.active_len())
        .into_par_iter()
        .map(|slot| {
            let nd = dom.node_of_slot(slot);
            let mut acc = 0.0;
            for (off, w) in &kernel {
                match dom.offset_node(nd, off).and_then(|m| u.value(m)) {
                    Some(v) => acc += w * v,
                    None => return u.values()[slot],
                }
            }
            acc / total
        })
        .collect();
    ScalarField::from_parts(dom, values, u.trace().to_vec())
}
