//! Uniform lattices over a box in R^{2n}, node classification against a
//! defining function, and scalar fields carrying a boundary trace.
//!
//! Axes are ordered (x1, y1, x2, y2, ...). Lattice points are `lo + k*h`,
//! so halving `h` keeps every old point on the lattice.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub type RealFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone, Debug, PartialEq)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() % 2 != 0 {
            return Err(Error::InvalidArgument(
                "bounding box needs matching bounds in an even dimension".into(),
            ));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidArgument("bounding box is empty".into()));
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[-half, half]^{2n}`.
    pub fn cube(n: usize, half: f64) -> Self {
        Self {
            lo: vec![-half; 2 * n],
            hi: vec![half; 2 * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    Boundary,
    Exterior,
}

/// A lattice node, identified by its linear index (axis 0 varies slowest).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Node(pub usize);

const NO_SLOT: u32 = u32::MAX;

pub struct GridDomain {
    n: usize,
    h: f64,
    bbox: BoundingBox,
    shape: Vec<usize>,
    strides: Vec<usize>,
    kinds: Vec<NodeKind>,
    slot_of: Vec<u32>,
    active: Vec<usize>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    boundary_ord: Vec<u32>,
    anchors: Vec<Option<Vec<f64>>>,
    closure_pts: Vec<f64>,
    closure_sites: Vec<Site>,
    defining_fn: RealFn,
}

/// A point of the discrete closure: an Interior node or the anchor of a
/// Boundary node. Both are indexed by the node's slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Site {
    Node(usize),
    Anchor(usize),
}

impl std::fmt::Debug for GridDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridDomain")
            .field("n", &self.n)
            .field("h", &self.h)
            .field("shape", &self.shape)
            .field("interior", &self.interior.len())
            .field("boundary", &self.boundary.len())
            .finish()
    }
}

/// All offsets in `{-1,0,1}^d` except the origin, in lexicographic order.
pub fn moore_offsets(d: usize) -> Vec<Vec<i64>> {
    let total = 3usize.pow(d as u32);
    let mut out = Vec::with_capacity(total - 1);
    for code in 0..total {
        let mut c = code;
        let mut off = vec![0i64; d];
        for k in (0..d).rev() {
            off[k] = (c % 3) as i64 - 1;
            c /= 3;
        }
        if off.iter().any(|&o| o != 0) {
            out.push(off);
        }
    }
    out
}

/// Classifies lattice nodes of `bbox` with spacing `h` against `defining_fn`.
///
/// Nodes with a negative value start as Interior candidates. Non-negative
/// nodes touching a candidate through the 3^{2n} neighbourhood become
/// Boundary, the rest Exterior. Candidates whose neighbourhood leaves the
/// lattice are demoted to Boundary.
pub fn classify_nodes(
    n: usize,
    defining_fn: RealFn,
    bbox: &BoundingBox,
    h: f64,
) -> Result<Arc<GridDomain>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {h}")));
    }
    let d = 2 * n;
    if n == 0 || bbox.dim() != d {
        return Err(Error::InvalidArgument(format!(
            "bounding box has dimension {} but n = {n}",
            bbox.dim()
        )));
    }
    let shape: Vec<usize> = (0..d)
        .map(|k| ((bbox.hi[k] - bbox.lo[k]) / h + 1e-9).floor() as usize + 1)
        .collect();
    let mut strides = vec![1usize; d];
    for k in (0..d.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    let total: usize = shape.iter().product();
    if total >= NO_SLOT as usize {
        return Err(Error::InvalidArgument("lattice too large".into()));
    }

    let lattice = Lattice {
        lo: bbox.lo.clone(),
        h,
        shape: shape.clone(),
        strides: strides.clone(),
    };
    let rho: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|lin| (defining_fn)(&lattice.point(lin)))
        .collect();
    let candidate: Vec<bool> = rho.iter().map(|&r| r < 0.0).collect();
    if !candidate.iter().any(|&c| c) {
        return Err(Error::NoInteriorNodes { h });
    }

    let offsets = moore_offsets(d);
    let mut kinds: Vec<NodeKind> = (0..total)
        .into_par_iter()
        .map(|lin| {
            let touches = |want_candidate: bool| {
                offsets.iter().any(|off| match lattice.offset(lin, off) {
                    Some(m) => candidate[m] == want_candidate,
                    None => !want_candidate,
                })
            };
            if candidate[lin] {
                // Off-lattice neighbours count as Exterior.
                let off_lattice = offsets.iter().any(|off| lattice.offset(lin, off).is_none());
                if off_lattice {
                    NodeKind::Boundary
                } else {
                    NodeKind::Interior
                }
            } else if touches(true) {
                NodeKind::Boundary
            } else {
                NodeKind::Exterior
            }
        })
        .collect();
    // A candidate can only meet Exterior through the lattice edge, handled
    // above; this pass keeps the rule explicit for any defining function.
    let demote: Vec<usize> = (0..total)
        .filter(|&lin| kinds[lin] == NodeKind::Interior)
        .filter(|&lin| {
            offsets.iter().any(|off| match lattice.offset(lin, off) {
                Some(m) => kinds[m] == NodeKind::Exterior,
                None => true,
            })
        })
        .collect();
    for lin in demote {
        kinds[lin] = NodeKind::Boundary;
    }
    if !kinds.iter().any(|&k| k == NodeKind::Interior) {
        return Err(Error::NoInteriorNodes { h });
    }

    let mut slot_of = vec![NO_SLOT; total];
    let mut active = Vec::new();
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for lin in 0..total {
        match kinds[lin] {
            NodeKind::Exterior => {}
            kind => {
                let slot = active.len();
                slot_of[lin] = slot as u32;
                active.push(lin);
                if kind == NodeKind::Interior {
                    interior.push(slot);
                } else {
                    boundary.push(slot);
                }
            }
        }
    }
    let mut boundary_ord = vec![NO_SLOT; active.len()];
    for (ord, &slot) in boundary.iter().enumerate() {
        boundary_ord[slot] = ord as u32;
    }

    let anchors: Vec<Option<Vec<f64>>> = boundary
        .par_iter()
        .map(|&slot| {
            let lin = active[slot];
            if rho[lin] < 0.0 {
                return None;
            }
            let p = lattice.point(lin);
            if rho[lin] == 0.0 {
                return Some(p);
            }
            // Nearest neighbour on the negative side, preferring final
            // Interior nodes; ties go to the first offset in Moore order.
            let mut best: Option<(bool, i64, usize)> = None;
            for off in &offsets {
                if let Some(m) = lattice.offset(lin, off) {
                    if rho[m] < 0.0 {
                        let key = (
                            kinds[m] != NodeKind::Interior,
                            off.iter().map(|o| o * o).sum::<i64>(),
                            m,
                        );
                        if best.map_or(true, |b| (key.0, key.1) < (b.0, b.1)) {
                            best = Some(key);
                        }
                    }
                }
            }
            let (_, _, m) = best?;
            Some(bisect_zero(&*defining_fn, &lattice.point(m), &p))
        })
        .collect();

    let mut closure_pts = Vec::new();
    let mut closure_sites = Vec::new();
    for slot in 0..active.len() {
        match kinds[active[slot]] {
            NodeKind::Interior => {
                closure_pts.extend(lattice.point(active[slot]));
                closure_sites.push(Site::Node(slot));
            }
            NodeKind::Boundary => {
                if let Some(a) = &anchors[boundary_ord[slot] as usize] {
                    closure_pts.extend_from_slice(a);
                    closure_sites.push(Site::Anchor(slot));
                }
            }
            NodeKind::Exterior => unreachable!(),
        }
    }

    Ok(Arc::new(GridDomain {
        n,
        h,
        bbox: bbox.clone(),
        shape,
        strides,
        kinds,
        slot_of,
        active,
        interior,
        boundary,
        boundary_ord,
        anchors,
        closure_pts,
        closure_sites,
        defining_fn,
    }))
}

/// Bisection for a zero of `g` on the segment from `inside` (g < 0) to
/// `outside` (g >= 0). Returns the end of the final bracket on the
/// non-negative side.
pub fn bisect_zero(g: &(dyn Fn(&[f64]) -> f64 + Send + Sync), inside: &[f64], outside: &[f64]) -> Vec<f64> {
    let mut a = 0.0f64;
    let mut b = 1.0f64;
    let mut p = vec![0.0; inside.len()];
    let at = |t: f64, p: &mut Vec<f64>| {
        for k in 0..inside.len() {
            p[k] = inside[k] + t * (outside[k] - inside[k]);
        }
    };
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        at(mid, &mut p);
        if g(&p) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    at(b, &mut p);
    p
}

/// Fraction `t` in (0, 1] at which `g` first reaches zero along
/// `inside + t (outside - inside)`, assuming a single crossing.
pub fn bisect_fraction(
    g: &(dyn Fn(&[f64]) -> f64 + Send + Sync),
    inside: &[f64],
    outside: &[f64],
) -> f64 {
    let mut a = 0.0f64;
    let mut b = 1.0f64;
    let mut p = vec![0.0; inside.len()];
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        for k in 0..inside.len() {
            p[k] = inside[k] + mid * (outside[k] - inside[k]);
        }
        if g(&p) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    b
}

struct Lattice {
    lo: Vec<f64>,
    h: f64,
    shape: Vec<usize>,
    strides: Vec<usize>,
}

impl Lattice {
    fn point(&self, lin: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.shape.len()];
        let mut rem = lin;
        for k in 0..self.shape.len() {
            let i = rem / self.strides[k];
            rem %= self.strides[k];
            p[k] = self.lo[k] + i as f64 * self.h;
        }
        p
    }

    fn offset(&self, lin: usize, off: &[i64]) -> Option<usize> {
        let mut rem = lin;
        let mut out = 0usize;
        for k in 0..self.shape.len() {
            let i = (rem / self.strides[k]) as i64 + off[k];
            rem %= self.strides[k];
            if i < 0 || i >= self.shape[k] as i64 {
                return None;
            }
            out += i as usize * self.strides[k];
        }
        Some(out)
    }
}

impl GridDomain {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Real dimension 2n.
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn lattice_len(&self) -> usize {
        self.kinds.len()
    }

    /// Number of non-Exterior nodes; fields store one value per slot.
    pub fn active_len(&self) -> usize {
        self.active.len()
    }

    pub fn defining_fn(&self) -> &RealFn {
        &self.defining_fn
    }

    pub fn kind(&self, node: Node) -> NodeKind {
        self.kinds[node.0]
    }

    pub fn slot(&self, node: Node) -> Option<usize> {
        match self.slot_of.get(node.0) {
            Some(&s) if s != NO_SLOT => Some(s as usize),
            _ => None,
        }
    }

    pub fn node_of_slot(&self, slot: usize) -> Node {
        Node(self.active[slot])
    }

    pub fn slot_kind(&self, slot: usize) -> NodeKind {
        self.kinds[self.active[slot]]
    }

    /// Slots of Interior nodes in lattice order.
    pub fn interior_slots(&self) -> &[usize] {
        &self.interior
    }

    /// Slots of Boundary nodes in lattice order.
    pub fn boundary_slots(&self) -> &[usize] {
        &self.boundary
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = Node> + '_ {
        self.interior.iter().map(|&s| Node(self.active[s]))
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = Node> + '_ {
        self.boundary.iter().map(|&s| Node(self.active[s]))
    }

    /// Position of a slot in the boundary list, if it is a Boundary node.
    pub fn boundary_ord(&self, slot: usize) -> Option<usize> {
        match self.boundary_ord[slot] {
            NO_SLOT => None,
            o => Some(o as usize),
        }
    }

    pub fn lattice_index(&self, node: Node) -> Vec<i64> {
        let mut rem = node.0;
        self.strides
            .iter()
            .map(|&s| {
                let i = rem / s;
                rem %= s;
                i as i64
            })
            .collect()
    }

    pub fn node_at(&self, index: &[i64]) -> Option<Node> {
        let mut lin = 0usize;
        for k in 0..self.shape.len() {
            if index[k] < 0 || index[k] >= self.shape[k] as i64 {
                return None;
            }
            lin += index[k] as usize * self.strides[k];
        }
        Some(Node(lin))
    }

    pub fn offset_node(&self, node: Node, off: &[i64]) -> Option<Node> {
        let mut idx = self.lattice_index(node);
        for k in 0..idx.len() {
            idx[k] += off[k];
        }
        self.node_at(&idx)
    }

    pub fn point(&self, node: Node) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.point_into(node, &mut p);
        p
    }

    pub fn point_into(&self, node: Node, p: &mut [f64]) {
        let mut rem = node.0;
        for k in 0..self.shape.len() {
            let i = rem / self.strides[k];
            rem %= self.strides[k];
            p[k] = self.bbox.lo[k] + i as f64 * self.h;
        }
    }

    pub fn slot_point(&self, slot: usize) -> Vec<f64> {
        self.point(Node(self.active[slot]))
    }

    /// Nearest lattice node to `p` (rounded per axis), if on the lattice.
    pub fn nearest_node(&self, p: &[f64]) -> Option<Node> {
        let idx: Vec<i64> = (0..self.dim())
            .map(|k| ((p[k] - self.bbox.lo[k]) / self.h).round() as i64)
            .collect();
        self.node_at(&idx)
    }

    pub fn boundary_anchor(&self, node: Node) -> Result<&[f64]> {
        if self.kinds.get(node.0) != Some(&NodeKind::Boundary) {
            return Err(Error::NotBoundary(node.0));
        }
        let slot = self.slot_of[node.0] as usize;
        let ord = self.boundary_ord[slot] as usize;
        self.anchors[ord]
            .as_deref()
            .ok_or(Error::InconsistentClassification(node.0))
    }

    /// Anchor by boundary position; `None` for nodes demoted at the lattice edge.
    pub fn anchor_of_ord(&self, ord: usize) -> Option<&[f64]> {
        self.anchors[ord].as_deref()
    }

    /// Closure points: Interior node positions followed, in slot order, by
    /// Boundary anchors. Flat with stride `dim()`.
    pub fn closure_points(&self) -> &[f64] {
        &self.closure_pts
    }

    pub fn closure_sites(&self) -> &[Site] {
        &self.closure_sites
    }

    pub fn closure_len(&self) -> usize {
        self.closure_sites.len()
    }

    pub fn closure_point(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.closure_pts[j * d..(j + 1) * d]
    }
}

/// Real values on the non-Exterior nodes of a domain plus a boundary trace:
/// one value per Boundary node standing for the field at that node's anchor.
#[derive(Clone)]
pub struct ScalarField {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
    trace: Vec<f64>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("domain", &self.domain)
            .field("len", &self.values.len())
            .finish()
    }
}

impl ScalarField {
    /// Samples `g` at node positions and at boundary anchors.
    pub fn sample(domain: &Arc<GridDomain>, g: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let values: Vec<f64> = (0..domain.active_len())
            .into_par_iter()
            .map(|slot| g(&domain.slot_point(slot)))
            .collect();
        let trace = domain
            .boundary
            .iter()
            .enumerate()
            .map(|(ord, &slot)| match domain.anchor_of_ord(ord) {
                Some(a) => g(a),
                None => values[slot],
            })
            .collect();
        Self {
            domain: Arc::clone(domain),
            values,
            trace,
        }
    }

    pub fn constant(domain: &Arc<GridDomain>, c: f64) -> Self {
        Self {
            domain: Arc::clone(domain),
            values: vec![c; domain.active_len()],
            trace: vec![c; domain.boundary.len()],
        }
    }

    pub fn from_parts(domain: &Arc<GridDomain>, values: Vec<f64>, trace: Vec<f64>) -> Result<Self> {
        if values.len() != domain.active_len() || trace.len() != domain.boundary.len() {
            return Err(Error::InvalidArgument("field length does not match domain".into()));
        }
        if values.iter().chain(&trace).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("field values must be finite".into()));
        }
        Ok(Self {
            domain: Arc::clone(domain),
            values,
            trace,
        })
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn trace_mut(&mut self) -> &mut [f64] {
        &mut self.trace
    }

    pub fn value(&self, node: Node) -> Option<f64> {
        self.domain.slot(node).map(|s| self.values[s])
    }

    /// Value at closure point `j` (see [`GridDomain::closure_points`]).
    pub fn closure_value(&self, j: usize) -> f64 {
        match self.domain.closure_sites[j] {
            Site::Node(slot) => self.values[slot],
            Site::Anchor(slot) => self.trace[self.domain.boundary_ord[slot] as usize],
        }
    }

    pub fn closure_values(&self) -> Vec<f64> {
        (0..self.domain.closure_len()).map(|j| self.closure_value(j)).collect()
    }

    pub fn same_domain(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain)
    }

    pub fn map(&self, g: impl Fn(f64) -> f64) -> Self {
        Self {
            domain: Arc::clone(&self.domain),
            values: self.values.iter().map(|&v| g(v)).collect(),
            trace: self.trace.iter().map(|&v| g(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &ScalarField, g: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.same_domain(other) {
            return Err(Error::DomainMismatch);
        }
        Ok(Self {
            domain: Arc::clone(&self.domain),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| g(a, b)).collect(),
            trace: self.trace.iter().zip(&other.trace).map(|(&a, &b)| g(a, b)).collect(),
        })
    }

    /// `self + k * other`.
    pub fn add_scaled(&self, other: &ScalarField, k: f64) -> Result<Self> {
        self.zip_with(other, |a, b| a + k * b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn max(&self, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, f64::max)
    }

    /// Multilinear interpolation of node values at `p`. Corners with
    /// positive weight must be non-Exterior lattice nodes.
    pub fn interpolate(&self, p: &[f64]) -> Result<f64> {
        let dom = &*self.domain;
        let d = dom.dim();
        let mut base = vec![0i64; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let s = (p[k] - dom.bbox.lo[k]) / dom.h;
            let mut b = s.floor();
            let mut t = s - b;
            if t > 1.0 - 1e-12 {
                b += 1.0;
                t = 0.0;
            } else if t < 1e-12 {
                t = 0.0;
            }
            base[k] = b as i64;
            frac[k] = t;
        }
        let mut acc = 0.0;
        let mut idx = vec![0i64; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for k in 0..d {
                let up = (corner >> (d - 1 - k)) & 1 == 1;
                w *= if up { frac[k] } else { 1.0 - frac[k] };
                idx[k] = base[k] + up as i64;
            }
            if w == 0.0 {
                continue;
            }
            let v = dom
                .node_at(&idx)
                .and_then(|nd| self.value(nd))
                .ok_or_else(|| Error::OutsideHull(p.to_vec()))?;
            acc += w * v;
        }
        Ok(acc)
    }

    /// CSV with header `x1,y1,...,value`, nodes in lattice order.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let dom = &*self.domain;
        let mut header = String::new();
        for j in 1..=dom.n {
            header.push_str(&format!("x{j},y{j},"));
        }
        header.push_str("value\n");
        w.write_all(header.as_bytes())?;
        let mut line = String::new();
        for slot in 0..dom.active_len() {
            line.clear();
            for c in dom.slot_point(slot) {
                line.push_str(&format!("{c:.16e},"));
            }
            line.push_str(&format!("{:.16e}\n", self.values[slot]));
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

/// Max over non-Exterior nodes of `|a - b|`.
pub fn sup_norm_diff(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    if !a.same_domain(b) {
        return Err(Error::DomainMismatch);
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

pub fn norm2(p: &[f64]) -> f64 {
    p.iter().map(|x| x * x).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
