//! Test domains with analytic defining functions and candidate
//! uniformly strictly psh defining functions.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{BoundingBox, RealFn};

#[derive(Clone)]
pub struct DomainSpec {
    pub name: &'static str,
    pub n: usize,
    /// Negative exactly on the domain.
    pub defining_fn: RealFn,
    /// Candidate for a uniformly strictly psh defining function, if any.
    pub rho: Option<RealFn>,
    /// False when the candidate is shipped as a negative control.
    pub rho_expected_to_pass: bool,
    pub bbox: BoundingBox,
    pub note: Option<&'static str>,
}

impl std::fmt::Debug for DomainSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DomainSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("has_rho", &self.rho.is_some())
            .field("rho_expected_to_pass", &self.rho_expected_to_pass)
            .finish()
    }
}

fn abs2(p: &[f64], j: usize) -> f64 {
    p[2 * j] * p[2 * j] + p[2 * j + 1] * p[2 * j + 1]
}

/// `|z - c|^2 - R^2`, which is also its own candidate (complex Hessian `I`).
pub fn make_ball(n: usize, radius: f64, center: &[f64]) -> Result<DomainSpec> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("ball radius {radius} must be positive")));
    }
    if center.len() != 2 * n {
        return Err(Error::InvalidArgument("ball center has the wrong dimension".into()));
    }
    let c = center.to_vec();
    let r2 = radius * radius;
    let f: RealFn = Arc::new(move |p: &[f64]| p.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() - r2);
    let lo = center.iter().map(|x| x - 1.25 * radius).collect();
    let hi = center.iter().map(|x| x + 1.25 * radius).collect();
    Ok(DomainSpec {
        name: "ball",
        n,
        defining_fn: f.clone(),
        rho: Some(f),
        rho_expected_to_pass: true,
        bbox: BoundingBox::new(lo, hi)?,
        note: None,
    })
}

/// `sum |z_j|^2 / a_j^2 - 1`; the candidate is scaled by `max a_j^2` so that
/// its complex Hessian dominates the identity.
pub fn make_ellipsoid(semiaxes: &[f64]) -> Result<DomainSpec> {
    if semiaxes.is_empty() || semiaxes.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidArgument("ellipsoid semiaxes must be positive".into()));
    }
    let n = semiaxes.len();
    let inv: Vec<f64> = semiaxes.iter().map(|a| 1.0 / (a * a)).collect();
    let scale = semiaxes.iter().map(|a| a * a).fold(0.0, f64::max);
    let inv2 = inv.clone();
    let f: RealFn = Arc::new(move |p: &[f64]| (0..inv.len()).map(|j| abs2(p, j) * inv[j]).sum::<f64>() - 1.0);
    let rho: RealFn = Arc::new(move |p: &[f64]| scale * ((0..inv2.len()).map(|j| abs2(p, j) * inv2[j]).sum::<f64>() - 1.0));
    let hi: Vec<f64> = semiaxes.iter().flat_map(|a| [1.25 * a, 1.25 * a]).collect();
    let lo = hi.iter().map(|x| -x).collect();
    Ok(DomainSpec {
        name: "ellipsoid",
        n,
        defining_fn: f,
        rho: Some(rho),
        rho_expected_to_pass: true,
        bbox: BoundingBox::new(lo, hi)?,
        note: None,
    })
}

/// `|z_1|^2 + |z_2|^{2m} - 1` in C^2. The candidate is the same function,
/// whose complex Hessian `diag(1, m^2 |z_2|^{2m-2})` degenerates at `z_2 = 0`:
/// a negative control for uniform strict plurisubharmonicity.
pub fn make_egg(m: u32) -> Result<DomainSpec> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("egg exponent {m} must be >= 2")));
    }
    let f: RealFn = Arc::new(move |p: &[f64]| abs2(p, 0) + abs2(p, 1).powi(m as i32) - 1.0);
    Ok(DomainSpec {
        name: "egg",
        n: 2,
        defining_fn: f.clone(),
        rho: Some(f),
        rho_expected_to_pass: false,
        bbox: BoundingBox::cube(2, 1.25),
        note: Some("naive defining function is psh but not uniformly strictly psh near z2 = 0"),
    })
}

/// Experimental candidate for the egg:
/// `(lambda rho_naive + (1 - lambda)(|z|^2 - 1)) / (1 - lambda)`.
/// Uniformly strictly psh, but its zero set is not the egg boundary, so it is
/// not a defining function of the egg.
pub fn egg_blend_rho(m: u32, lambda: f64) -> Result<RealFn> {
    if m < 2 || !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidArgument("egg blend needs m >= 2 and lambda in [0, 1)".into()));
    }
    Ok(Arc::new(move |p: &[f64]| {
        let naive = abs2(p, 0) + abs2(p, 1).powi(m as i32) - 1.0;
        let ball = abs2(p, 0) + abs2(p, 1) - 1.0;
        (lambda * naive + (1.0 - lambda) * ball) / (1.0 - lambda)
    }))
}

/// `max(|z_1|, |z_2|) - 1`. No candidate: the boundary contains analytic disks.
pub fn make_bidisc() -> DomainSpec {
    let f: RealFn = Arc::new(|p: &[f64]| abs2(p, 0).max(abs2(p, 1)).sqrt() - 1.0);
    DomainSpec {
        name: "bidisc",
        n: 2,
        defining_fn: f,
        rho: None,
        rho_expected_to_pass: false,
        bbox: BoundingBox::cube(2, 1.25),
        note: Some("negative control: no strong psh barrier at boundary points on analytic disks"),
    }
}

/// Optional parameters for [`by_name`].
#[derive(Clone, Debug, Default)]
pub struct DomainParams {
    pub n: Option<usize>,
    pub radius: Option<f64>,
    pub center: Option<Vec<f64>>,
    pub semiaxes: Option<Vec<f64>>,
    pub m: Option<u32>,
}

/// Registry: `ball`, `ellipsoid`, `egg`, `bidisc`.
pub fn by_name(name: &str, params: &DomainParams) -> Result<DomainSpec> {
    match name {
        "ball" => {
            let n = params.n.unwrap_or(2);
            let center = params.center.clone().unwrap_or_else(|| vec![0.0; 2 * n]);
            make_ball(n, params.radius.unwrap_or(1.0), &center)
        }
        "ellipsoid" => make_ellipsoid(params.semiaxes.as_deref().unwrap_or(&[1.0, 0.5])),
        "egg" => make_egg(params.m.unwrap_or(2)),
        "bidisc" => Ok(make_bidisc()),
        other => Err(Error::InvalidArgument(format!("unknown domain `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{classify_nodes, ScalarField};
    use crate::psh::{psh_report, strict_psh_report, uniformly_strictly_psh};
    use rand::{Rng, SeedableRng};

    fn field(spec: &DomainSpec, h: f64) -> ScalarField {
        let dom = classify_nodes(spec.n, spec.defining_fn.clone(), &spec.bbox, h).unwrap();
        let rho = spec.rho.clone().unwrap();
        ScalarField::sample(&dom, |p| rho(p))
    }

    #[test]
    fn ball_candidates_pass() {
        for r in [1.0, 2.0] {
            let s = make_ball(2, r, &[0.0; 4]).unwrap();
            assert!(uniformly_strictly_psh(&field(&s, 0.25 * r), 1e-8));
        }
        assert!(make_ball(2, 0.0, &[0.0; 4]).is_err());
    }

    #[test]
    fn ellipsoid_candidate_passes() {
        let s = make_ellipsoid(&[1.0, 0.5]).unwrap();
        assert!(uniformly_strictly_psh(&field(&s, 0.125), 1e-8));
        assert!(make_ellipsoid(&[1.0, -0.5]).is_err());
        let b = make_ellipsoid(&[1.0, 1.0]).unwrap();
        let p = [0.3, -0.2, 0.5, 0.1];
        assert!(((b.defining_fn)(&p) - (make_ball(2, 1.0, &[0.0; 4]).unwrap().defining_fn)(&p)).abs() < 1e-15);
    }

    #[test]
    fn egg_naive_candidate_is_psh_but_not_strict() {
        let s = make_egg(2).unwrap();
        let rho = field(&s, 0.125);
        assert_eq!(psh_report(&rho, 1e-8).violating_nodes, 0);
        let rep = strict_psh_report(&rho, 1e-8);
        assert!(rep.violating_nodes > 0);
        for v in &rep.violations {
            let z2 = (v[2] * v[2] + v[3] * v[3]).sqrt();
            assert!(z2 < 0.5 + 1e-9, "violation at |z2| = {z2}");
        }
        assert!(make_egg(1).is_err());
    }

    #[test]
    fn egg_blend_is_strict() {
        let s = make_egg(2).unwrap();
        let dom = classify_nodes(2, s.defining_fn.clone(), &s.bbox, 0.125).unwrap();
        let blend = egg_blend_rho(2, 0.5).unwrap();
        assert!(uniformly_strictly_psh(&ScalarField::sample(&dom, |p| blend(p)), 1e-8));
    }

    #[test]
    fn sign_matches_advertised_sets() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let ball = make_ball(2, 1.0, &[0.0; 4]).unwrap();
        let ell = make_ellipsoid(&[1.0, 0.5]).unwrap();
        let egg = make_egg(2).unwrap();
        let bi = make_bidisc();
        for _ in 0..10_000 {
            let p: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.3..1.3)).collect();
            let a1 = p[0] * p[0] + p[1] * p[1];
            let a2 = p[2] * p[2] + p[3] * p[3];
            assert_eq!((ball.defining_fn)(&p) < 0.0, a1 + a2 < 1.0);
            assert_eq!((ell.defining_fn)(&p) < 0.0, a1 + 4.0 * a2 < 1.0);
            assert_eq!((egg.defining_fn)(&p) < 0.0, a1 + a2 * a2 < 1.0);
            assert_eq!((bi.defining_fn)(&p) < 0.0, a1 < 1.0 && a2 < 1.0);
        }
    }

    #[test]
    fn registry() {
        for name in ["ball", "ellipsoid", "egg", "bidisc"] {
            assert_eq!(by_name(name, &DomainParams::default()).unwrap().name, name);
        }
        assert!(by_name("torus", &DomainParams::default()).is_err());
        assert!(make_bidisc().rho.is_none());
    }
}
