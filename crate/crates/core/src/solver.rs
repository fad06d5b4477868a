//! Envelope solver: monotone nonlinear Gauss-Seidel for
//! `A_n min_frames prod_j (v_j* H v_j) = f`, `u = phi` on the boundary,
//! started from a psh subsolution and capped by a supersolution.
//!
//! Each frame direction is a Gaussian integer vector `k`, so the four
//! samples `z ± hk`, `z ± ihk` are lattice nodes. A sample beyond the
//! boundary is replaced by the crossing point on the segment, carrying the
//! boundary datum, and the three-point difference on that line uses the
//! shortened arm. Quadratics are reproduced exactly.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{bisect_fraction, moore_offsets, GridDomain, NodeKind, RealFn, ScalarField};
use crate::modulus::ModulusOfContinuity;
use crate::operator::{ma_normalization, ma_pointwise, FrameSet};
use crate::psh::{find_psh_k, mollify, psh_report, search_constant, SearchFailure};

/// Boundary datum `phi` (defined near the boundary) and density `f >= 0`.
#[derive(Clone)]
pub struct DirichletData {
    pub phi: RealFn,
    pub f: RealFn,
    /// Modulus of continuity asserted for `f^{1/n}`.
    pub f_root_modulus: Option<ModulusOfContinuity>,
}

impl DirichletData {
    pub fn new(phi: RealFn, f: RealFn) -> Self {
        Self {
            phi,
            f,
            f_root_modulus: None,
        }
    }

    pub fn with_modulus(mut self, m: ModulusOfContinuity) -> Self {
        self.f_root_modulus = Some(m);
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepOrder {
    #[default]
    Lexicographic,
    /// Two colours by parity of the lattice index sum; each colour is
    /// updated from a snapshot in parallel.
    RedBlack,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub frame_radius: usize,
    pub tol_res: f64,
    pub max_sweeps: usize,
    pub order: SweepOrder,
    /// Upper limit for the sub/supersolution constant search.
    pub k_max: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            frame_radius: 2,
            tol_res: 1e-8,
            max_sweeps: 20_000,
            order: SweepOrder::Lexicographic,
            k_max: 1e6,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_res > 0.0) {
            return Err(Error::InvalidArgument("tol_res must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidArgument("max_sweeps must be at least 1".into()));
        }
        if self.frame_radius == 0 {
            return Err(Error::InvalidArgument("frame_radius must be at least 1".into()));
        }
        Ok(())
    }
}

/// Samples `f` at interior nodes; every closure point must give `f >= 0`.
pub fn sample_density(domain: &Arc<GridDomain>, f: &RealFn) -> Result<Vec<f64>> {
    let field = ScalarField::sample(domain, |p| f(p));
    for j in 0..domain.closure_len() {
        let v = field.closure_value(j);
        if !(v >= 0.0) {
            return Err(Error::NegativeDensity {
                value: v,
                point: domain.closure_point(j).to_vec(),
            });
        }
    }
    Ok(domain.interior_slots().iter().map(|&s| field.values()[s]).collect())
}

fn require_same(domain: &Arc<GridDomain>, rho: &ScalarField) -> Result<()> {
    if Arc::ptr_eq(domain, rho.domain()) {
        Ok(())
    } else {
        Err(Error::DomainMismatch)
    }
}

/// `v = phi + K rho` with the least searched `K` making `v` psh with
/// `ma_pointwise(v) >= f - 1e-8` at interior nodes.
pub fn subsolution(data: &DirichletData, rho: &ScalarField, k_max: f64) -> Result<(ScalarField, f64)> {
    let dom = rho.domain().clone();
    let phi = ScalarField::sample(&dom, |p| (data.phi)(p));
    let f = sample_density(&dom, &data.f)?;
    let k = search_constant(k_max, |k| {
        let v = phi.add_scaled(rho, k).expect("same domain");
        let rep = psh_report(&v, 1e-8);
        if !rep.passes() {
            return Err(SearchFailure {
                worst: rep.worst_eigenvalue,
                point: rep.worst_point,
            });
        }
        let worst = dom
            .interior_slots()
            .par_iter()
            .zip(f.par_iter())
            .map(|(&s, &fv)| {
                let m = ma_pointwise(&v, dom.node_of_slot(s)).unwrap_or(f64::NEG_INFINITY);
                (m - fv, s)
            })
            .reduce(|| (f64::INFINITY, usize::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
        if worst.0 >= -1e-8 {
            Ok(())
        } else {
            Err(SearchFailure {
                worst: worst.0,
                point: dom.slot_point(worst.1),
            })
        }
    })?;
    Ok((phi.add_scaled(rho, k)?, k))
}

/// `-ṽ = phi - K rho` with `K` the least searched constant making `-phi + K rho` psh.
pub fn supersolution(data: &DirichletData, rho: &ScalarField, k_max: f64) -> Result<(ScalarField, f64)> {
    let dom = rho.domain().clone();
    let phi = ScalarField::sample(&dom, |p| (data.phi)(p));
    let k = find_psh_k(&phi.map(|x| -x), rho, k_max)?;
    Ok((phi.add_scaled(rho, -k)?, k))
}

#[derive(Clone, Copy, Debug)]
enum Sample {
    Slot(u32),
    /// Boundary crossing at fraction `frac` of the arm, with value `phi` there.
    Fixed { frac: f64, value: f64 },
}

/// The discrete operator with boundary-aware stencils, for one domain,
/// boundary datum and frame set.
pub struct Scheme {
    domain: Arc<GridDomain>,
    frames: FrameSet,
    /// `(h |k|)^2` per direction.
    s2: Vec<f64>,
    /// Per interior node: per direction, samples at `+k, -k, +ik, -ik`.
    samples: Vec<Sample>,
    width: usize,
    a_n: f64,
}

impl Scheme {
    pub fn new(domain: &Arc<GridDomain>, phi: &RealFn, frame_radius: usize) -> Result<Self> {
        let frames = FrameSet::new(domain.n(), frame_radius)?;
        let h = domain.h();
        let mut steps: Vec<[Vec<i64>; 2]> = Vec::new();
        for dir in frames.directions() {
            match (&dir.step, dir.rotated_step()) {
                (Some(k), Some(ik)) => steps.push([k.clone(), ik]),
                _ => {
                    return Err(Error::InvalidArgument(
                        "frame direction is not a lattice direction".into(),
                    ))
                }
            }
        }
        let s2: Vec<f64> = steps
            .iter()
            .map(|[k, _]| h * h * k.iter().map(|x| (x * x) as f64).sum::<f64>())
            .collect();
        let width = 4 * steps.len();
        let def = domain.defining_fn().clone();
        let dim = domain.dim();

        let per_node: Vec<Vec<Sample>> = domain
            .interior_slots()
            .par_iter()
            .map(|&slot| {
                let node = domain.node_of_slot(slot);
                let idx = domain.lattice_index(node);
                let x = domain.point(node);
                let mut out = Vec::with_capacity(width);
                let mut target = vec![0i64; dim];
                let mut p = vec![0.0; dim];
                for pair in &steps {
                    for k in pair {
                        for sign in [1i64, -1] {
                            for j in 0..dim {
                                target[j] = idx[j] + sign * k[j];
                                p[j] = x[j] + (sign * k[j]) as f64 * h;
                            }
                            let hit = domain
                                .node_at(&target)
                                .filter(|&m| domain.kind(m) == NodeKind::Interior);
                            let s = match hit {
                                Some(m) => Sample::Slot(domain.slot(m).expect("interior node has a slot") as u32),
                                None if def(&p) >= 0.0 => {
                                    let frac = bisect_fraction(def.as_ref(), &x, &p).max(1e-12);
                                    let q: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + frac * (b - a)).collect();
                                    Sample::Fixed { frac, value: phi(&q) }
                                }
                                None => Sample::Fixed { frac: 1.0, value: phi(&p) },
                            };
                            out.push(s);
                        }
                    }
                }
                out
            })
            .collect();
        Ok(Self {
            domain: domain.clone(),
            a_n: ma_normalization(domain.n()),
            frames,
            s2,
            samples: per_node.into_iter().flatten().collect(),
            width,
        })
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn frames(&self) -> &FrameSet {
        &self.frames
    }

    /// Number of interior nodes whose stencil reaches the boundary.
    pub fn cut_nodes(&self) -> usize {
        self.samples
            .chunks(self.width)
            .filter(|c| c.iter().any(|s| matches!(s, Sample::Fixed { .. })))
            .count()
    }

    /// Directional differences at interior node `q` as `alpha + beta t`,
    /// `t` the value at the node, given the slot values `vals`.
    fn coefficients(&self, q: usize, vals: &[f64], alpha: &mut [f64], beta: &mut [f64]) {
        let row = &self.samples[q * self.width..(q + 1) * self.width];
        for (d, s2) in self.s2.iter().enumerate() {
            let mut a_sum = 0.0;
            let mut b_sum = 0.0;
            for line in 0..2 {
                let (up, a) = read(row[4 * d + 2 * line], vals);
                let (um, b) = read(row[4 * d + 2 * line + 1], vals);
                if a == 1.0 && b == 1.0 {
                    a_sum += (up + um) / s2;
                    b_sum -= 2.0 / s2;
                } else {
                    let c = 2.0 / ((a + b) * s2);
                    a_sum += c * (up / a + um / b);
                    b_sum -= c * (1.0 / a + 1.0 / b);
                }
            }
            alpha[d] = 0.25 * a_sum;
            beta[d] = 0.25 * b_sum;
        }
    }

    fn frame_min(&self, alpha: &[f64], beta: &[f64], t: f64) -> f64 {
        self.frames
            .frames()
            .iter()
            .map(|fr| fr.iter().map(|&d| (alpha[d] + beta[d] * t).max(0.0)).product::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    /// The value at the node solving `A_n frame_min(t) = f`, clamped by `cap`.
    /// Every directional difference is `alpha + beta t` with `beta < 0`, so
    /// each frame product decreases in `t` left of its first zero and the
    /// root is the least of the per-frame roots.
    fn solve_node(&self, alpha: &[f64], beta: &[f64], f: f64, cap: f64) -> f64 {
        let zero = |d: usize| alpha[d] / -beta[d];
        let mut t = (0..alpha.len()).map(zero).fold(f64::INFINITY, f64::min);
        let target = f / self.a_n;
        if target > 0.0 {
            for fr in self.frames.frames() {
                let r = match fr.as_slice() {
                    &[d] => zero(d) - target / -beta[d],
                    &[d1, d2] => {
                        let (t1, t2) = (zero(d1), zero(d2));
                        let c = target / (beta[d1] * beta[d2]);
                        let gap = (t1 - t2).abs();
                        t1.min(t2) - 2.0 * c / (gap + (gap * gap + 4.0 * c).sqrt())
                    }
                    ds => self.bisect_frame(ds, alpha, beta, target),
                };
                t = t.min(r);
            }
        }
        t.min(cap)
    }

    fn bisect_frame(&self, ds: &[usize], alpha: &[f64], beta: &[f64], target: f64) -> f64 {
        let prod = |t: f64| ds.iter().map(|&d| (alpha[d] + beta[d] * t).max(0.0)).product::<f64>();
        let mut hi = ds.iter().map(|&d| alpha[d] / -beta[d]).fold(f64::INFINITY, f64::min);
        let mut step = self.domain.h().powi(2);
        let mut lo = hi - step;
        while prod(lo) < target {
            step *= 2.0;
            lo = hi - step;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if prod(mid) >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// `A_n min_frames prod max(d, 0)` at interior node `q` for slot values `vals`.
    fn apply_at(&self, q: usize, vals: &[f64], alpha: &mut [f64], beta: &mut [f64]) -> f64 {
        self.coefficients(q, vals, alpha, beta);
        let t = vals[self.domain.interior_slots()[q]];
        self.a_n * self.frame_min(alpha, beta, t)
    }

    /// The discrete operator at every interior node, in interior order.
    pub fn apply(&self, u: &ScalarField) -> Result<Vec<f64>> {
        if !Arc::ptr_eq(&self.domain, u.domain()) {
            return Err(Error::DomainMismatch);
        }
        let nd = self.s2.len();
        Ok((0..self.domain.interior_slots().len())
            .into_par_iter()
            .map_init(
                || (vec![0.0; nd], vec![0.0; nd]),
                |(a, b), q| self.apply_at(q, u.values(), a, b),
            )
            .collect())
    }

    /// One Gauss-Seidel pass in slot order; returns the largest update and
    /// the interior position where it happened.
    fn lexicographic_sweep(&self, vals: &mut [f64], f: &[f64], caps: &[f64]) -> (f64, usize) {
        let nd = self.s2.len();
        let (mut a, mut b) = (vec![0.0; nd], vec![0.0; nd]);
        let mut best = (0.0f64, 0usize);
        for (q, &slot) in self.domain.interior_slots().iter().enumerate() {
            self.coefficients(q, vals, &mut a, &mut b);
            let t = self.solve_node(&a, &b, f[q], caps[q]);
            let du = (t - vals[slot]).abs();
            if du > best.0 {
                best = (du, q);
            }
            vals[slot] = t;
        }
        best
    }

    fn residuals(&self, vals: &[f64], f: &[f64]) -> Vec<f64> {
        let nd = self.s2.len();
        (0..f.len())
            .into_par_iter()
            .map_init(
                || (vec![0.0; nd], vec![0.0; nd]),
                |(a, b), q| (self.apply_at(q, vals, a, b) - f[q]).abs(),
            )
            .collect()
    }
}

fn read(s: Sample, vals: &[f64]) -> (f64, f64) {
    match s {
        Sample::Slot(i) => (vals[i as usize], 1.0),
        Sample::Fixed { frac, value } => (value, frac),
    }
}

/// One line of the per-sweep log.
#[derive(Clone, Debug, Serialize)]
pub struct SweepLog {
    pub sweep: usize,
    /// Lattice linear index of the node with the largest update.
    pub index: usize,
    pub max_update: f64,
    /// Evaluated only on sweeps whose update is below the stopping threshold.
    pub max_residual: Option<f64>,
}

pub fn write_sweep_log<W: Write>(log: &[SweepLog], mut w: W) -> Result<()> {
    writeln!(w, "sweep,index,max_update,max_residual")?;
    for l in log {
        let r = l.max_residual.map_or(String::new(), |r| format!("{r:.6e}"));
        writeln!(w, "{},{},{:.6e},{}", l.sweep, l.index, l.max_update, r)?;
    }
    Ok(())
}

pub struct Solution {
    pub u: ScalarField,
    pub sweeps: usize,
    pub max_update: f64,
    pub max_residual: f64,
    /// Operator residual `|F(u) - f|` at interior nodes, zero elsewhere.
    pub residual: ScalarField,
    pub log: Vec<SweepLog>,
    pub subsolution: ScalarField,
    pub k_sub: f64,
    pub supersolution: ScalarField,
    pub k_super: f64,
    /// Largest `max(sub - u, u - super, 0)` over interior nodes.
    pub sandwich_excess: f64,
}

/// Solves the Dirichlet problem on `domain` using the uniformly strictly psh
/// `rho` for the sub- and supersolution.
pub fn solve(domain: &Arc<GridDomain>, data: &DirichletData, rho: &ScalarField, cfg: &SolveConfig) -> Result<Solution> {
    cfg.validate()?;
    require_same(domain, rho)?;
    let f = sample_density(domain, &data.f)?;
    let (sub, k_sub) = subsolution(data, rho, cfg.k_max)?;
    let (sup, k_super) = supersolution(data, rho, cfg.k_max)?;
    let scheme = Scheme::new(domain, &data.phi, cfg.frame_radius)?;
    let interior = domain.interior_slots();
    let nd = scheme.s2.len();
    let caps: Vec<f64> = interior.iter().map(|&s| sup.values()[s]).collect();

    let mut vals = sub.values().to_vec();
    let colour: Vec<u8> = match cfg.order {
        SweepOrder::Lexicographic => Vec::new(),
        SweepOrder::RedBlack => interior
            .iter()
            .map(|&s| (domain.lattice_index(domain.node_of_slot(s)).iter().sum::<i64>().rem_euclid(2)) as u8)
            .collect(),
    };
    let h2 = domain.h() * domain.h();
    let mut log = Vec::new();
    let mut converged = false;
    let (mut max_update, mut max_residual) = (f64::INFINITY, f64::INFINITY);
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let (upd, worst_q) = match cfg.order {
            SweepOrder::Lexicographic => scheme.lexicographic_sweep(&mut vals, &f, &caps),
            SweepOrder::RedBlack => {
                let mut best = (0.0f64, 0usize);
                for c in 0..2u8 {
                    let snapshot = &vals;
                    let new: Vec<(usize, f64)> = (0..interior.len())
                        .into_par_iter()
                        .filter(|&q| colour[q] == c)
                        .map_init(
                            || (vec![0.0; nd], vec![0.0; nd]),
                            |(a, b), q| {
                                scheme.coefficients(q, snapshot, a, b);
                                (q, scheme.solve_node(a, b, f[q], caps[q]))
                            },
                        )
                        .collect();
                    for (q, t) in new {
                        let slot = interior[q];
                        let du = (t - vals[slot]).abs();
                        if du > best.0 || (du == best.0 && q < best.1 && du > 0.0) {
                            best = (du, q);
                        }
                        vals[slot] = t;
                    }
                }
                best
            }
        };
        max_update = upd;
        // The residual costs a full sweep; evaluate it once updates are small.
        let settled = max_update < cfg.tol_res * h2;
        let residual = (settled || sweeps == cfg.max_sweeps)
            .then(|| scheme.residuals(&vals, &f).into_iter().fold(0.0, f64::max));
        if let Some(r) = residual {
            max_residual = r;
        }
        log.push(SweepLog {
            sweep: sweeps,
            index: interior.get(worst_q).map_or(0, |&s| domain.node_of_slot(s).0),
            max_update,
            max_residual: residual,
        });
        if settled && max_residual <= cfg.tol_res {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            sweeps,
            max_update,
            residual: max_residual,
        });
    }

    fill_ghosts(domain, &data.phi, &mut vals);
    let trace: Vec<f64> = (0..domain.boundary_slots().len())
        .map(|ord| match domain.anchor_of_ord(ord) {
            Some(a) => (data.phi)(a),
            None => vals[domain.boundary_slots()[ord]],
        })
        .collect();
    let u = ScalarField::from_parts(domain, vals, trace)?;
    let res = scheme.residuals(u.values(), &f);
    let mut res_vals = vec![0.0; domain.active_len()];
    for (q, &s) in interior.iter().enumerate() {
        res_vals[s] = res[q];
    }
    let residual = ScalarField::from_parts(domain, res_vals, vec![0.0; domain.boundary_slots().len()])?;
    let sandwich_excess = interior
        .iter()
        .map(|&s| {
            let v = u.values()[s];
            (sub.values()[s] - v).max(v - sup.values()[s]).max(0.0)
        })
        .fold(0.0, f64::max);
    Ok(Solution {
        u,
        sweeps,
        max_update,
        max_residual,
        residual,
        log,
        subsolution: sub,
        k_sub,
        supersolution: sup,
        k_super,
        sandwich_excess,
    })
}

/// Sets Boundary node values by extrapolating from interior values through
/// the boundary datum along the lattice segment that crosses the boundary
/// latest: quadratic when a second interior node is available on the line,
/// linear otherwise. Only central-difference diagnostics read these values.
fn fill_ghosts(domain: &Arc<GridDomain>, phi: &RealFn, vals: &mut [f64]) {
    let def = domain.defining_fn().clone();
    let offsets = moore_offsets(domain.dim());
    let rho_at = |slot: usize| def(&domain.slot_point(slot));
    let ghosts: Vec<(usize, f64)> = domain
        .boundary_slots()
        .par_iter()
        .map(|&b| {
            let nb = domain.node_of_slot(b);
            let xb = domain.point(nb);
            let rb = def(&xb);
            if rb < 0.0 {
                return (b, phi(&xb));
            }
            // Ranked by (second interior node on the line, estimated crossing fraction).
            let mut best: Option<((bool, f64), usize, Vec<i64>)> = None;
            for off in &offsets {
                if let Some(m) = domain.offset_node(nb, off) {
                    if domain.kind(m) == NodeKind::Interior {
                        let s = domain.slot(m).expect("interior slot");
                        let deep = domain
                            .offset_node(m, off)
                            .is_some_and(|m2| domain.kind(m2) == NodeKind::Interior);
                        let ri = rho_at(s);
                        let key = (deep, ri / (ri - rb));
                        if best.as_ref().map_or(true, |(k, _, _)| key.0 > k.0 || (key.0 == k.0 && key.1 > k.1)) {
                            best = Some((key, s, off.clone()));
                        }
                    }
                }
            }
            let Some((_, si, off)) = best else {
                return (b, phi(domain.boundary_anchor(nb).expect("boundary anchor")));
            };
            let xi = domain.slot_point(si);
            let theta = bisect_fraction(def.as_ref(), &xi, &xb).max(1e-12);
            let a: Vec<f64> = xi.iter().zip(&xb).map(|(p, q)| p + theta * (q - p)).collect();
            let pa = phi(&a);
            let ui = vals[si];
            let i2 = domain
                .offset_node(domain.node_of_slot(si), &off)
                .filter(|&m| domain.kind(m) == NodeKind::Interior);
            let g = match i2 {
                Some(m) => {
                    let u2 = vals[domain.slot(m).expect("interior slot")];
                    (1.0 - theta) / (1.0 + theta) * u2 - 2.0 * (1.0 - theta) / theta * ui
                        + 2.0 / (theta * (1.0 + theta)) * pa
                }
                None => pa / theta - ui * (1.0 - theta) / theta,
            };
            (b, g)
        })
        .collect();
    for (b, g) in ghosts {
        vals[b] = g;
    }
}

/// Discrete membership in the family of psh subsolutions with boundary values `phi`.
#[derive(Clone, Debug, Serialize)]
pub struct MembershipReport {
    pub psh: bool,
    pub boundary: bool,
    pub density: bool,
    pub tol: f64,
    pub worst_eigenvalue: f64,
    pub worst_psh_point: Vec<f64>,
    /// Largest `|v - phi|` over boundary anchors.
    pub worst_boundary_gap: f64,
    /// Largest `v - phi` over boundary anchors.
    pub boundary_excess: f64,
    /// Smallest `ma_pointwise(v) - f` over interior nodes.
    pub worst_density_gap: f64,
    pub worst_density_point: Vec<f64>,
}

impl MembershipReport {
    pub fn all(&self) -> bool {
        self.psh && self.boundary && self.density
    }

    /// Membership in the larger family with `v <= phi` on the boundary.
    pub fn subfamily(&self) -> bool {
        self.psh && self.density && self.boundary_excess <= self.tol
    }
}

pub fn family_membership(v: &ScalarField, data: &DirichletData, tol: f64) -> MembershipReport {
    let dom = v.domain();
    let rep = psh_report(v, tol);
    let (mut gap, mut excess) = (0.0f64, f64::NEG_INFINITY);
    for (ord, &t) in v.trace().iter().enumerate() {
        if let Some(a) = dom.anchor_of_ord(ord) {
            let d = t - (data.phi)(a);
            gap = gap.max(d.abs());
            excess = excess.max(d);
        }
    }
    let (dgap, dslot) = dom
        .interior_slots()
        .par_iter()
        .map(|&s| {
            let x = dom.slot_point(s);
            let m = ma_pointwise(v, dom.node_of_slot(s)).unwrap_or(f64::NEG_INFINITY);
            (m - (data.f)(&x), s)
        })
        .reduce(|| (f64::INFINITY, usize::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    MembershipReport {
        psh: rep.passes(),
        boundary: gap <= tol,
        density: dgap >= -tol,
        tol,
        worst_eigenvalue: rep.worst_eigenvalue,
        worst_psh_point: rep.worst_point,
        worst_boundary_gap: gap,
        boundary_excess: excess.max(0.0),
        worst_density_gap: dgap,
        worst_density_point: if dslot == usize::MAX { Vec::new() } else { dom.slot_point(dslot) },
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DominanceReport {
    pub pass: bool,
    pub max_defect: f64,
    pub tolerance: f64,
    pub members_tested: usize,
    pub members_rejected: usize,
    pub worst_point: Vec<f64>,
}

/// Largest `member - u` over closure points.
pub fn defect(member: &ScalarField, u: &ScalarField) -> Result<(f64, usize)> {
    if !member.same_domain(u) {
        return Err(Error::DomainMismatch);
    }
    let dom = u.domain();
    Ok((0..dom.closure_len())
        .map(|j| (member.closure_value(j) - u.closure_value(j), j))
        .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a }))
}

/// Samples members of the subsolution families and reports how far any of
/// them rises above `u`. Candidates are `phi + K rho - c` with `K` above the
/// subsolution constant, pairwise maxima, and mollified variants pushed down
/// by their boundary excess; each is checked for membership at tolerance
/// `10h` before comparison.
pub fn envelope_dominance(
    u: &ScalarField,
    data: &DirichletData,
    rho: &ScalarField,
    n_samples: usize,
    seed: u64,
) -> Result<DominanceReport> {
    if !u.same_domain(rho) {
        return Err(Error::DomainMismatch);
    }
    let dom = u.domain().clone();
    let h = dom.h();
    let tol = 10.0 * h;
    let (_, k_min) = subsolution(data, rho, 1e6)?;
    let phi = ScalarField::sample(&dom, |p| (data.phi)(p));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basic = |rng: &mut ChaCha8Rng| -> Result<ScalarField> {
        let k = if k_min > 0.0 { k_min * (1.0 + 2.0 * rng.gen::<f64>()) } else { rng.gen::<f64>() };
        let c = 0.5 * rng.gen::<f64>();
        Ok(phi.add_scaled(rho, k)?.map(|x| x - c))
    };
    let (mut worst, mut worst_j, mut tested, mut rejected) = (f64::NEG_INFINITY, 0usize, 0usize, 0usize);
    for s in 0..n_samples {
        let member = match s % 3 {
            0 => basic(&mut rng)?,
            1 => {
                let a = basic(&mut rng)?;
                let b = basic(&mut rng)?;
                a.max(&b)?
            }
            _ => {
                let a = basic(&mut rng)?;
                let eps = h * (1.0 + rng.gen::<f64>());
                let m = mollify(&a, eps)?;
                let rep = family_membership(&m, data, tol);
                m.map(|x| x - rep.boundary_excess)
            }
        };
        let rep = family_membership(&member, data, tol);
        if !rep.subfamily() {
            rejected += 1;
            continue;
        }
        tested += 1;
        let (d, j) = defect(&member, u)?;
        if d > worst {
            worst = d;
            worst_j = j;
        }
    }
    Ok(DominanceReport {
        pass: tested == 0 || worst <= tol,
        max_defect: if tested == 0 { 0.0 } else { worst },
        tolerance: tol,
        members_tested: tested,
        members_rejected: rejected,
        worst_point: dom.closure_point(worst_j).to_vec(),
    })
}
