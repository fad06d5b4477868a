//! Small complex Hermitian matrices: determinant, spectrum, PSD tests and
//! the lower bound for `det(M + beta I)` in terms of `det M`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct HermitianForm {
    n: usize,
    entries: Vec<Complex64>,
}

impl HermitianForm {
    /// Row-major entries; rejects input that is not Hermitian to 1e-12
    /// relative to the largest entry.
    pub fn new(n: usize, entries: Vec<Complex64>) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::InvalidArgument(format!("expected {} entries", n * n)));
        }
        let scale = entries.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for j in 0..n {
            for k in 0..n {
                if (entries[j * n + k] - entries[k * n + j].conj()).norm() > 1e-12 * scale {
                    return Err(Error::InvalidArgument("matrix is not Hermitian".into()));
                }
            }
        }
        Ok(Self::hermitian_part(n, &entries))
    }

    /// `(A + A*) / 2`.
    pub fn hermitian_part(n: usize, entries: &[Complex64]) -> Self {
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            for k in 0..n {
                out[j * n + k] = 0.5 * (entries[j * n + k] + entries[k * n + j].conj());
            }
        }
        Self { n, entries: out }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for j in 0..n {
            m.entries[j * n + j] = Complex64::new(d[j], 0.0);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.entries[j * self.n + k]
    }

    pub fn add_identity(&self, beta: f64) -> Self {
        let mut m = self.clone();
        for j in 0..self.n {
            m.entries[j * self.n + j] += beta;
        }
        m
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|z| z * c).collect(),
        }
    }

    /// `v* M v`, real for Hermitian `M`.
    pub fn quadratic_form(&self, v: &[Complex64]) -> f64 {
        let n = self.n;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            for k in 0..n {
                acc += v[j].conj() * self.entries[j * n + k] * v[k];
            }
        }
        acc.re
    }

    /// `U* M U` for a square `U` given row-major.
    pub fn conjugate_by(&self, u: &[Complex64]) -> Self {
        let n = self.n;
        let mut mu = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    mu[j * n + k] += self.entries[j * n + l] * u[l * n + k];
                }
            }
        }
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    out[j * n + k] += u[l * n + j].conj() * mu[l * n + k];
                }
            }
        }
        Self::hermitian_part(n, &out)
    }

    pub fn det(&self) -> f64 {
        let n = self.n;
        match n {
            1 => self.entries[0].re,
            2 => self.entries[0].re * self.entries[3].re - self.entries[1].norm_sqr(),
            _ => lu_det(n, &self.entries).re,
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        match n {
            1 => vec![self.entries[0].re],
            2 => {
                let a = self.entries[0].re;
                let d = self.entries[3].re;
                let half = 0.5 * (a + d);
                let r = (0.25 * (a - d) * (a - d) + self.entries[1].norm_sqr()).sqrt();
                vec![half - r, half + r]
            }
            _ => {
                let m = DMatrix::from_row_slice(n, n, &self.entries);
                let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
                ev.sort_by(f64::total_cmp);
                ev
            }
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }
}

fn lu_det(n: usize, entries: &[Complex64]) -> Complex64 {
    let mut a = entries.to_vec();
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].norm().total_cmp(&a[j * n + col].norm()))
            .unwrap();
        if a[piv * n + col].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        for i in col + 1..n {
            let f = a[i * n + col] / p;
            for k in col..n {
                let v = a[col * n + k];
                a[i * n + k] -= f * v;
            }
        }
    }
    det
}

/// `sum_{k=0}^{n} beta^k (det M)^{(n-k)/n}`, a lower bound for
/// `det(M + beta I)` when `M` is PSD. The `k = n` term is `beta^n` even
/// when `det M = 0`.
pub fn det_perturb_lower_bound(m: &HermitianForm, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::Precondition(format!("beta must be non-negative, got {beta}")));
    }
    if !m.is_psd(1e-10) {
        return Err(Error::Precondition("matrix is not positive semidefinite".into()));
    }
    let n = m.n() as i32;
    let d = m.det().max(0.0);
    let mut sum = 0.0;
    for k in 0..=n {
        let root = if k == n {
            1.0
        } else {
            d.powf((n - k) as f64 / n as f64)
        };
        sum += beta.powi(k) * root;
    }
    Ok(sum)
}

/// Random PSD matrix `A* A` with uniform entries in [-1, 1]; every fourth
/// draw is made rank-deficient.
pub fn random_psd(n: usize, rng: &mut impl Rng) -> HermitianForm {
    let rank = if rng.gen_range(0..4) == 0 { rng.gen_range(0..n) } else { n };
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..rank {
        for k in 0..n {
            a[j * n + k] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        for k in 0..n {
            for l in 0..n {
                m[j * n + k] += a[l * n + j].conj() * a[l * n + k];
            }
        }
    }
    HermitianForm::hermitian_part(n, &m)
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationRow {
    pub n: usize,
    pub samples: usize,
    /// Smallest `(det(M + beta I) - bound) / (1 + |det(M + beta I)|)`.
    pub worst_relative_slack: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationSuite {
    pub rows: Vec<PerturbationRow>,
    /// `|det(beta I) - bound|` at `M = 0`, maximized over the sampled betas.
    pub zero_matrix_gap: f64,
    pub pass: bool,
}

/// Checks the perturbation bound on `samples` random PSD matrices split
/// across n = 1, 2, 3 with beta uniform in [0, 10].
pub fn perturbation_suite(samples: usize, seed: u64) -> PerturbationSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for n in 1..=3usize {
        let count = samples / 3 + usize::from(n <= samples % 3);
        let mut worst = f64::INFINITY;
        for _ in 0..count {
            let m = random_psd(n, &mut rng);
            let beta = rng.gen_range(0.0..=10.0);
            let lhs = m.add_identity(beta).det();
            let rhs = det_perturb_lower_bound(&m, beta).expect("sampled matrix is PSD");
            worst = worst.min((lhs - rhs) / (1.0 + lhs.abs()));
        }
        rows.push(PerturbationRow {
            n,
            samples: count,
            worst_relative_slack: worst,
            pass: worst >= -1e-9,
        });
    }
    let mut zero_gap: f64 = 0.0;
    for n in 1..=3usize {
        for beta in [0.0, 0.5, 2.0, 10.0] {
            let m = HermitianForm::zeros(n);
            let lhs = m.add_identity(beta).det();
            let rhs = det_perturb_lower_bound(&m, beta).unwrap();
            zero_gap = zero_gap.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        }
    }
    let pass = rows.iter().all(|r| r.pass) && zero_gap <= 1e-9;
    PerturbationSuite {
        rows,
        zero_matrix_gap: zero_gap,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn det_examples() {
        assert_eq!(HermitianForm::identity(2).det(), 1.0);
        assert_eq!(HermitianForm::diag(&[2.0, 3.0]).det(), 6.0);
        let m = HermitianForm::new(2, vec![c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]).unwrap();
        assert!((m.det() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn lu_matches_closed_form() {
        let m = HermitianForm::new(2, vec![c(2.0, 0.0), c(0.5, 1.0), c(0.5, -1.0), c(3.0, 0.0)]).unwrap();
        assert!((lu_det(2, m.entries()).re - m.det()).abs() < 1e-14);
        let d3 = HermitianForm::diag(&[2.0, 3.0, 0.5]);
        assert!((d3.det() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn psd_examples() {
        assert!(HermitianForm::identity(2).is_psd(0.0));
        let d = HermitianForm::diag(&[1.0, -0.1]);
        assert!(!d.is_psd(0.0));
        assert!(d.is_psd(0.2));
        let m = HermitianForm::new(2, vec![c(1.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(1.0, 0.0)]).unwrap();
        assert!(!m.is_psd(0.0));
        let ev = m.eigenvalues();
        assert!((ev[0] - (1.0 - 2f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_hermitian() {
        assert!(HermitianForm::new(2, vec![c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn general_n_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = random_psd(3, &mut rng);
            let prod: f64 = m.eigenvalues().iter().product();
            assert!((prod - m.det()).abs() < 1e-10 * (1.0 + m.det().abs()));
        }
    }

    #[test]
    fn bound_examples() {
        let i2 = HermitianForm::identity(2);
        assert_eq!(det_perturb_lower_bound(&i2, 1.0).unwrap(), 3.0);
        assert_eq!(i2.add_identity(1.0).det(), 4.0);
        let z = HermitianForm::zeros(2);
        assert_eq!(det_perturb_lower_bound(&z, 2.0).unwrap(), 4.0);
        assert_eq!(z.add_identity(2.0).det(), 4.0);
        let d = HermitianForm::diag(&[1.0, 4.0]);
        assert_eq!(det_perturb_lower_bound(&d, 0.0).unwrap(), 4.0);
        assert!(det_perturb_lower_bound(&d, -1.0).is_err());
        assert!(det_perturb_lower_bound(&HermitianForm::diag(&[1.0, -1.0]), 1.0).is_err());
    }

    #[test]
    fn suite_small_run_passes() {
        let s = perturbation_suite(600, 11);
        assert!(s.pass, "{s:?}");
        assert_eq!(s.rows.iter().map(|r| r.samples).sum::<usize>(), 600);
    }

    fn unitary2(a: f64, b: f64, c0: f64, d: f64) -> Vec<Complex64> {
        // exp(i d) [[e^{ia} cos t, e^{ib} sin t], [-e^{-ib} sin t, e^{-ia} cos t]]
        let (s, co) = c0.sin_cos();
        let ph = Complex64::from_polar(1.0, d);
        vec![
            ph * Complex64::from_polar(co, a),
            ph * Complex64::from_polar(s, b),
            -ph * Complex64::from_polar(s, -b),
            ph * Complex64::from_polar(co, -a),
        ]
    }

    proptest! {
        #[test]
        fn perturbation_bound_holds(seed in any::<u64>(), n in 1usize..=3, beta in 0.0f64..=10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_psd(n, &mut rng);
            let lhs = m.add_identity(beta).det();
            let rhs = det_perturb_lower_bound(&m, beta).unwrap();
            prop_assert!(lhs >= rhs - 1e-9 * (1.0 + lhs.abs()));
        }

        #[test]
        fn det_unitary_invariant(seed in any::<u64>(), a in 0.0f64..6.3, b in 0.0f64..6.3, t in 0.0f64..6.3, d in 0.0f64..6.3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_psd(2, &mut rng).add_identity(rng.gen_range(-1.0..1.0));
            let u = unitary2(a, b, t, d);
            let lhs = m.conjugate_by(&u).det();
            prop_assert!((lhs - m.det()).abs() <= 1e-10 * (1.0 + m.det().abs()));
        }

        #[test]
        fn psd_implies_nonnegative_det(seed in any::<u64>(), n in 1usize..=3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_psd(n, &mut rng);
            if m.is_psd(0.0) {
                prop_assert!(m.det() >= -1e-10);
            }
        }
    }
}
