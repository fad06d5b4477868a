use std::sync::Arc;

use cmalab_core::domains::{by_name, make_ball, DomainParams, DomainSpec};
use cmalab_core::grid::{classify_nodes, norm2, GridDomain, RealFn, ScalarField};
use cmalab_core::psh::{barrier, find_psh_k, uniformly_strictly_psh, verify_barrier};
use cmalab_core::solver::{envelope_dominance, solve, DirichletData, SolveConfig, Solution};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setup(spec: &DomainSpec, h: f64) -> (Arc<GridDomain>, ScalarField) {
    let dom = classify_nodes(spec.n, spec.defining_fn.clone(), &spec.bbox, h).unwrap();
    let rho_fn = spec.rho.clone().unwrap();
    let rho = ScalarField::sample(&dom, |p| rho_fn(p));
    (dom, rho)
}

fn data(phi: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> DirichletData {
    let phi: RealFn = Arc::new(phi);
    let f: RealFn = Arc::new(f);
    DirichletData::new(phi, f)
}

fn run(dom: &Arc<GridDomain>, rho: &ScalarField, d: &DirichletData) -> Solution {
    solve(dom, d, rho, &SolveConfig::default()).unwrap()
}

fn gap(a: &Solution, b: &Solution, g: impl Fn(f64, f64) -> f64) -> f64 {
    a.u.domain()
        .interior_slots()
        .iter()
        .map(|&s| g(a.u.values()[s], b.u.values()[s]))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn disc() -> (Arc<GridDomain>, ScalarField) {
    setup(&make_ball(1, 1.0, &[0.0, 0.0]).unwrap(), 0.1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn larger_density_gives_a_smaller_solution(
        a in 0.5f64..4.0, b in 0.0f64..4.0, c in 0.0f64..4.0, al in -1.0f64..1.0, be in -1.0f64..1.0,
    ) {
        let (dom, rho) = disc();
        let phi = move |p: &[f64]| al * p[0] + be * p[0] * p[1];
        let d1 = data(phi, move |p| a + b * p[0] * p[0]);
        let d2 = data(phi, move |p| a + b * p[0] * p[0] + c * (1.0 + p[1] * p[1]));
        let (u1, u2) = (run(&dom, &rho, &d1), run(&dom, &rho, &d2));
        prop_assert!(gap(&u1, &u2, |x, y| y - x) <= 1e-6);
    }

    #[test]
    fn boundary_trace_equals_phi_at_anchors(al in -1.0f64..1.0, be in -1.0f64..1.0, a in 0.5f64..4.0) {
        let (dom, rho) = disc();
        let phi = move |p: &[f64]| al * p[0] * p[0] + be * p[1];
        let sol = run(&dom, &rho, &data(phi, move |_| a));
        for (ord, &t) in sol.u.trace().iter().enumerate() {
            if let Some(anchor) = dom.anchor_of_ord(ord) {
                prop_assert_eq!(t, phi(anchor));
            }
        }
    }
}

#[test]
fn comparison_on_the_ball() {
    let (dom, rho) = setup(&make_ball(2, 1.0, &[0.0; 4]).unwrap(), 0.25);
    let u1 = run(&dom, &rho, &data(|_| 0.0, |_| 32.0));
    let u2 = run(&dom, &rho, &data(|_| 0.0, |p| 32.0 * (1.0 + p[0] * p[0] + p[1] * p[1])));
    assert!(gap(&u1, &u2, |x, y| y - x) <= 1e-6);
}

#[test]
fn solutions_scale_with_the_data() {
    let cases: Vec<(DomainSpec, f64, RealFn, RealFn)> = vec![
        (
            make_ball(1, 1.0, &[0.0, 0.0]).unwrap(),
            0.1,
            Arc::new(|p: &[f64]| p[0] * p[1]),
            Arc::new(|p: &[f64]| 1.0 + p[0] * p[0]),
        ),
        (
            make_ball(2, 1.0, &[0.0; 4]).unwrap(),
            0.25,
            Arc::new(|p: &[f64]| 0.5 * p[0]),
            Arc::new(|p: &[f64]| 32.0 * (1.0 + p[0] * p[0] + p[1] * p[1])),
        ),
    ];
    for (spec, h, phi, f) in cases {
        let (dom, rho) = setup(&spec, h);
        let scale = 2f64.powi(spec.n as i32);
        let (p1, f1) = (phi.clone(), f.clone());
        let base = run(&dom, &rho, &DirichletData::new(phi, f));
        let scaled = run(
            &dom,
            &rho,
            &data(move |p| 2.0 * p1(p), move |p| scale * f1(p)),
        );
        let g = gap(&base, &scaled, |x, y| (2.0 * x - y).abs());
        assert!(g <= 1e-6, "n = {}: |2u - u_scaled| = {g}", spec.n);
    }
}

#[test]
fn no_sampled_subsolution_rises_above_the_solution() {
    let (dom, rho) = setup(&make_ball(2, 1.0, &[0.0; 4]).unwrap(), 0.25);
    let d = data(|_| 0.0, |_| 32.0);
    let sol = run(&dom, &rho, &d);
    let rep = envelope_dominance(&sol.u, &d, &rho, 60, 11).unwrap();
    assert!(rep.members_tested > 0);
    assert!(rep.pass, "defect {} above tolerance {}", rep.max_defect, rep.tolerance);
}

#[test]
fn barriers_at_random_anchors() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for name in ["ball", "ellipsoid"] {
        let spec = by_name(name, &DomainParams::default()).unwrap();
        let h = 0.25;
        let (dom, rho) = setup(&spec, h);
        assert!(uniformly_strictly_psh(&rho, 1e-8));
        let anchors: Vec<usize> = (0..dom.boundary_slots().len())
            .filter(|&o| dom.anchor_of_ord(o).is_some())
            .collect();
        for &ord in anchors.choose_multiple(&mut rng, 20) {
            let zeta = dom.anchor_of_ord(ord).unwrap().to_vec();
            let v = barrier(&rho, &zeta).unwrap();
            let rep = verify_barrier(&v, &zeta, 4.0 * h).unwrap();
            assert!(rep.pass, "{name} at {zeta:?}: {rep:?}");
        }
    }
}

#[test]
fn psh_constant_grows_with_the_scale_of_psi() {
    let (dom, rho) = setup(&make_ball(2, 1.0, &[0.0; 4]).unwrap(), 0.25);
    let psi = ScalarField::sample(&dom, |p| -p[0] * p[0] - 0.5 * norm2(p).powi(2) + p[3]);
    let ks: Vec<f64> = [1.0, 2.0, 4.0]
        .iter()
        .map(|&c| find_psh_k(&psi.map(|x| c * x), &rho, 1e6).unwrap())
        .collect();
    assert!(ks[0] > 0.0);
    assert!(ks[0] <= ks[1] && ks[1] <= ks[2], "{ks:?}");
}
