use std::sync::{Arc, OnceLock};

use cmalab_core::domains::{make_ball, make_egg, make_ellipsoid};
use cmalab_core::grid::{classify_nodes, BoundingBox, GridDomain, Node, NodeKind, RealFn, ScalarField};
use cmalab_core::operator::{ma_monotone, ma_normalization, ma_pointwise, FrameSet};
use num_complex::Complex64;
use proptest::prelude::*;

/// Classification recomputed from its definition on an independently built lattice.
fn classify_oracle(f: &RealFn, bbox: &BoundingBox, h: f64) -> (Vec<Vec<f64>>, Vec<NodeKind>) {
    let d = bbox.dim();
    let shape: Vec<i64> = (0..d).map(|k| ((bbox.hi[k] - bbox.lo[k]) / h + 1e-9).floor() as i64 + 1).collect();
    let total: i64 = shape.iter().product();
    let index = |mut lin: i64| {
        let mut idx = vec![0i64; d];
        for k in (0..d).rev() {
            idx[k] = lin % shape[k];
            lin /= shape[k];
        }
        idx
    };
    let linear = |idx: &[i64]| idx.iter().zip(&shape).fold(0i64, |acc, (i, s)| acc * s + i);
    let points: Vec<Vec<f64>> = (0..total)
        .map(|lin| index(lin).iter().enumerate().map(|(k, &i)| bbox.lo[k] + i as f64 * h).collect())
        .collect();
    let neg: Vec<bool> = points.iter().map(|p| f(p) < 0.0).collect();
    // Neighbour linear indices, None when off the lattice.
    let neighbours = |lin: i64| -> Vec<Option<i64>> {
        let idx = index(lin);
        let mut out = Vec::new();
        for code in 0..3i64.pow(d as u32) {
            let mut c = code;
            let mut m = idx.clone();
            let mut origin = true;
            for k in 0..d {
                let o = c % 3 - 1;
                c /= 3;
                origin &= o == 0;
                m[k] += o;
            }
            if origin {
                continue;
            }
            out.push(if m.iter().zip(&shape).all(|(i, s)| *i >= 0 && i < s) { Some(linear(&m)) } else { None });
        }
        out
    };
    let kinds = (0..total)
        .map(|lin| {
            let nb = neighbours(lin);
            if neg[lin as usize] {
                if nb.iter().all(|m| m.is_some()) {
                    NodeKind::Interior
                } else {
                    NodeKind::Boundary
                }
            } else if nb.iter().flatten().any(|&m| neg[m as usize]) {
                NodeKind::Boundary
            } else {
                NodeKind::Exterior
            }
        })
        .collect();
    (points, kinds)
}

fn assert_matches_oracle(dom: &GridDomain, f: &RealFn, bbox: &BoundingBox, h: f64) {
    let (points, kinds) = classify_oracle(f, bbox, h);
    assert_eq!(points.len(), dom.lattice_len());
    for (lin, (p, k)) in points.iter().zip(&kinds).enumerate() {
        let q = dom.point(Node(lin));
        assert!(p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-12), "node {lin}: {p:?} vs {q:?}");
        assert_eq!(dom.kind(Node(lin)), *k, "node {lin} at {p:?}");
    }
}

#[test]
fn egg_classification_matches_oracle() {
    let spec = make_egg(2).unwrap();
    let dom = classify_nodes(2, spec.defining_fn.clone(), &spec.bbox, 0.25).unwrap();
    assert_matches_oracle(&dom, &spec.defining_fn, &spec.bbox, 0.25);
}

#[test]
fn classification_is_deterministic() {
    let spec = make_ellipsoid(&[1.0, 0.6]).unwrap();
    let a = classify_nodes(2, spec.defining_fn.clone(), &spec.bbox, 0.25).unwrap();
    let b = classify_nodes(2, spec.defining_fn.clone(), &spec.bbox, 0.25).unwrap();
    assert_eq!(a.lattice_len(), b.lattice_len());
    assert!((0..a.lattice_len()).all(|i| a.kind(Node(i)) == b.kind(Node(i))));
    assert_eq!(a.closure_points(), b.closure_points());
}

fn ellipse(a: f64, b: f64, cx: f64) -> RealFn {
    Arc::new(move |p: &[f64]| ((p[0] - cx) / a).powi(2) + (p[1] / b).powi(2) - 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn planar_classification_matches_oracle(a in 0.3f64..1.0, b in 0.3f64..1.0, cx in -0.2f64..0.2, h in 0.04f64..0.2) {
        let f = ellipse(a, b, cx);
        let bbox = BoundingBox::cube(1, 1.25);
        let dom = classify_nodes(1, f.clone(), &bbox, h).unwrap();
        assert_matches_oracle(&dom, &f, &bbox, h);
    }

    #[test]
    fn refinement_keeps_interior_points(a in 0.3f64..1.0, b in 0.3f64..1.0, cx in -0.2f64..0.2, h in 0.05f64..0.2) {
        let f = ellipse(a, b, cx);
        let bbox = BoundingBox::cube(1, 1.25);
        let coarse = classify_nodes(1, f.clone(), &bbox, h).unwrap();
        let fine = classify_nodes(1, f, &bbox, h / 2.0).unwrap();
        for node in coarse.interior_nodes() {
            let idx: Vec<i64> = coarse.lattice_index(node).iter().map(|i| 2 * i).collect();
            let m = fine.node_at(&idx).expect("coarse lattice points stay on the fine lattice");
            prop_assert_ne!(fine.kind(m), NodeKind::Exterior);
        }
    }

    #[test]
    fn anchors_stay_near_their_nodes(r in 0.5f64..1.0, h in 0.05f64..0.25) {
        let spec = make_ball(1, r, &[0.1, -0.05]).unwrap();
        let dom = classify_nodes(1, spec.defining_fn.clone(), &spec.bbox, h).unwrap();
        let bound = h * 2f64.sqrt();
        for node in dom.boundary_nodes() {
            if let Ok(a) = dom.boundary_anchor(node) {
                let p = dom.point(node);
                let dist = p.iter().zip(a).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                prop_assert!(dist <= bound + 1e-12, "anchor {a:?} is {dist} from {p:?}");
                prop_assert!((spec.defining_fn)(a).abs() < 1e-9);
            }
        }
    }
}

/// A large ball so that wide stencils around the origin stay inside.
fn wide_domain() -> &'static Arc<GridDomain> {
    static DOM: OnceLock<Arc<GridDomain>> = OnceLock::new();
    DOM.get_or_init(|| {
        let spec = make_ball(2, 3.0, &[0.0; 4]).unwrap();
        classify_nodes(2, spec.defining_fn, &spec.bbox, 0.5).unwrap()
    })
}

fn frames(r: usize) -> &'static FrameSet {
    static F1: OnceLock<FrameSet> = OnceLock::new();
    static F2: OnceLock<FrameSet> = OnceLock::new();
    let cell = if r == 1 { &F1 } else { &F2 };
    cell.get_or_init(|| FrameSet::new(2, r).unwrap())
}

/// `[[a, b], [conj b, c]]`.
#[derive(Clone, Copy, Debug)]
struct Herm2 {
    a: f64,
    b: Complex64,
    c: f64,
}

impl Herm2 {
    fn from_factor(g: [f64; 8]) -> Self {
        // M = G* G for G = [[g0 + i g1, g2 + i g3], [g4 + i g5, g6 + i g7]].
        let c0 = [Complex64::new(g[0], g[1]), Complex64::new(g[4], g[5])];
        let c1 = [Complex64::new(g[2], g[3]), Complex64::new(g[6], g[7])];
        Self {
            a: c0.iter().map(|z| z.norm_sqr()).sum(),
            b: c0[0].conj() * c1[0] + c0[1].conj() * c1[1],
            c: c1.iter().map(|z| z.norm_sqr()).sum(),
        }
    }

    fn det(&self) -> f64 {
        self.a * self.c - self.b.norm_sqr()
    }

    fn form(&self, v: &[Complex64]) -> f64 {
        (v[0].conj() * (self.a * v[0] + self.b * v[1]) + v[1].conj() * (self.b.conj() * v[0] + self.c * v[1])).re
    }

    /// Closed-form eigenpairs.
    fn eigen(&self) -> [(f64, [Complex64; 2]); 2] {
        let mean = 0.5 * (self.a + self.c);
        let rad = (0.25 * (self.a - self.c).powi(2) + self.b.norm_sqr()).sqrt();
        let vec = |l: f64| -> [Complex64; 2] {
            if self.b.norm() < 1e-14 {
                if (l - self.a).abs() <= (l - self.c).abs() {
                    [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
                } else {
                    [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]
                }
            } else {
                let v = [self.b, Complex64::new(l - self.a, 0.0)];
                let nv = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
                [v[0] / nv, v[1] / nv]
            }
        };
        [(mean - rad, vec(mean - rad)), (mean + rad, vec(mean + rad))]
    }

    /// `u(z) = z* M z` plus a pluriharmonic part, as a function of real coordinates.
    fn quadratic(self, lin: [f64; 4]) -> impl Fn(&[f64]) -> f64 + Sync {
        move |p: &[f64]| {
            let z = [Complex64::new(p[0], p[1]), Complex64::new(p[2], p[3])];
            self.form(&z) + lin[0] * p[0] + lin[1] * p[1] + lin[2] * p[2] + lin[3] * p[3]
        }
    }
}

fn unitary_frame(theta: f64, phi: f64, psi: f64) -> [[Complex64; 2]; 2] {
    let e = |t: f64| Complex64::from_polar(1.0, t);
    let (s, c) = theta.sin_cos();
    [[c * e(psi), s * e(phi + psi)], [-s * e(-phi), c * Complex64::new(1.0, 0.0)]]
}

fn near_origin(dom: &GridDomain) -> Vec<Node> {
    dom.interior_nodes()
        .filter(|&nd| dom.point(nd).iter().map(|x| x * x).sum::<f64>() <= 0.5 + 1e-9)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frame_products_bound_the_determinant(g in prop::array::uniform8(-1.0f64..1.0), t in prop::array::uniform3(0.0f64..6.3)) {
        let m = Herm2::from_factor(g);
        let det = m.det();
        let slack = 1e-9 * (1.0 + m.a + m.c).powi(2);
        let fr = unitary_frame(t[0], t[1], t[2]);
        prop_assert!(m.form(&fr[0]) * m.form(&fr[1]) >= det - slack);
        let [(l0, v0), (l1, v1)] = m.eigen();
        prop_assert!((l0 * l1 - det).abs() <= slack);
        prop_assert!((m.form(&v0) * m.form(&v1) - det).abs() <= slack);
        for r in [1, 2] {
            let fs = frames(r);
            let best = (0..fs.frames().len())
                .map(|k| fs.frame_vectors(k).iter().map(|v| m.form(v)).product::<f64>())
                .fold(f64::INFINITY, f64::min);
            prop_assert!(best >= det - slack, "r = {r}: frame min {best} below det {det}");
        }
    }

    #[test]
    fn quadratics_are_reproduced(g in prop::array::uniform8(-1.0f64..1.0), lin in prop::array::uniform4(-1.0f64..1.0)) {
        let m = Herm2::from_factor(g);
        let dom = wide_domain();
        let u = ScalarField::sample(dom, m.quadratic(lin));
        let a2 = ma_normalization(2);
        let scale = 1e-9 * (1.0 + a2 * (m.a + m.c).powi(2));
        for nd in near_origin(dom) {
            prop_assert!((ma_pointwise(&u, nd).unwrap() - a2 * m.det()).abs() <= scale);
            for r in [1, 2] {
                let fs = frames(r);
                let oracle = (0..fs.frames().len())
                    .map(|k| fs.frame_vectors(k).iter().map(|v| m.form(v).max(0.0)).product::<f64>())
                    .fold(f64::INFINITY, f64::min);
                let mono = ma_monotone(&u, nd, fs).unwrap();
                prop_assert!((mono - a2 * oracle).abs() <= scale, "r = {r}: {mono} vs {}", a2 * oracle);
                prop_assert!(mono >= ma_pointwise(&u, nd).unwrap() - 1e-8);
            }
        }
    }
}

#[test]
fn isotropic_hessians_make_the_frame_minimum_exact() {
    let dom = wide_domain();
    let u = ScalarField::sample(dom, |p: &[f64]| 3.0 * p.iter().map(|x| x * x).sum::<f64>());
    for nd in near_origin(dom) {
        let mono = ma_monotone(&u, nd, frames(2)).unwrap();
        assert!((mono - ma_pointwise(&u, nd).unwrap()).abs() < 1e-9);
        assert!((mono - 32.0 * 9.0).abs() < 1e-9);
    }
}

#[test]
fn monotone_operator_is_nonincreasing_in_the_node_value() {
    let dom = wide_domain();
    let u = ScalarField::sample(dom, |p: &[f64]| {
        let r2 = p.iter().map(|x| x * x).sum::<f64>();
        (0.3 * r2).exp() + 0.2 * p[0] * p[2]
    });
    let fs = frames(2);
    let mut nodes = near_origin(dom);
    nodes.truncate(100);
    for nd in nodes {
        let slot = dom.slot(nd).unwrap();
        let base = ma_monotone(&u, nd, fs).unwrap();
        for (delta, rises) in [(1e-6, false), (-1e-6, true)] {
            let mut v = u.clone();
            v.values_mut()[slot] += delta;
            let m = ma_monotone(&v, nd, fs).unwrap();
            if rises {
                assert!(m >= base);
            } else {
                assert!(m <= base);
            }
        }
    }
}
