//! Discrete complex Hessian, the pointwise Monge-Ampere operator and its
//! monotone frame-minimum variant.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Node, ScalarField};
use crate::hermitian::HermitianForm;

/// `A_n = 4^n n!`, so that `(dd^c u)^n = A_n det(complex Hessian) dV`.
pub fn ma_normalization(n: usize) -> f64 {
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    4f64.powi(n as i32) * fact
}

fn stencil_value(u: &ScalarField, node: Node, off: &[i64]) -> Result<f64> {
    let dom = u.domain();
    dom.offset_node(node, off)
        .and_then(|m| u.value(m))
        .ok_or_else(|| {
            let mut p = dom.point(node);
            for k in 0..p.len() {
                p[k] += off[k] as f64 * dom.h();
            }
            Error::OutsideHull(p)
        })
}

/// Matrix of `d^2 u / dz_j dz̄_k` from central differences: 3-point pure
/// seconds and the 4-point diagonal stencil for mixed ones.
pub fn complex_hessian(u: &ScalarField, node: Node) -> Result<HermitianForm> {
    let dom = u.domain();
    let d = dom.dim();
    let n = dom.n();
    let h2 = dom.h() * dom.h();
    let center = u
        .value(node)
        .ok_or_else(|| Error::OutsideHull(dom.point(node)))?;
    let mut real = vec![0.0; d * d];
    let mut off = vec![0i64; d];
    for a in 0..d {
        off[a] = 1;
        let plus = stencil_value(u, node, &off)?;
        off[a] = -1;
        let minus = stencil_value(u, node, &off)?;
        off[a] = 0;
        real[a * d + a] = (plus + minus - 2.0 * center) / h2;
        for b in a + 1..d {
            let mut s = 0.0;
            for (sa, sb, sign) in [(1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
                off[a] = sa;
                off[b] = sb;
                s += sign * stencil_value(u, node, &off)?;
            }
            off[a] = 0;
            off[b] = 0;
            real[a * d + b] = s / (4.0 * h2);
            real[b * d + a] = real[a * d + b];
        }
    }
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        for k in 0..n {
            let (xj, yj, xk, yk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
            m[j * n + k] = Complex64::new(
                0.25 * (real[xj * d + xk] + real[yj * d + yk]),
                0.25 * (real[xj * d + yk] - real[yj * d + xk]),
            );
        }
    }
    Ok(HermitianForm::hermitian_part(n, &m))
}

/// `A_n det` of the central-difference complex Hessian.
pub fn ma_pointwise(u: &ScalarField, node: Node) -> Result<f64> {
    let n = u.domain().n();
    Ok(ma_normalization(n) * complex_hessian(u, node)?.det())
}

/// A unit direction in C^n. When it is a unimodular multiple of a Gaussian
/// integer vector `k`, `step` holds `k` in real coordinates (re, im per
/// component) and the stencil samples lattice nodes at `z ± h k`, `z ± i h k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Direction {
    pub v: Vec<Complex64>,
    pub step: Option<Vec<i64>>,
}

impl Direction {
    pub fn new(v: Vec<Complex64>) -> Self {
        let step = lattice_step(&v, 64);
        Self { v, step }
    }

    /// Real offsets of the `i k` sample, the complex rotation of `step`.
    pub fn rotated_step(&self) -> Option<Vec<i64>> {
        self.step.as_ref().map(|k| times_i(k))
    }
}

fn times_i(k: &[i64]) -> Vec<i64> {
    let mut out = vec![0; k.len()];
    for j in 0..k.len() / 2 {
        out[2 * j] = -k[2 * j + 1];
        out[2 * j + 1] = k[2 * j];
    }
    out
}

fn to_complex(k: &[i64]) -> Vec<Complex64> {
    (0..k.len() / 2)
        .map(|j| Complex64::new(k[2 * j] as f64, k[2 * j + 1] as f64))
        .collect()
}

fn norm_c(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Finds a Gaussian integer vector `k` with `|k|^2 <= max_norm2` and `v`
/// a unimodular multiple of `k / |k|`.
fn lattice_step(v: &[Complex64], max_norm2: i64) -> Option<Vec<i64>> {
    let (_, vmax) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))?;
    if vmax.norm() < 1e-12 {
        return None;
    }
    for nn in 1..=max_norm2 {
        let s = (nn as f64).sqrt();
        let target = vmax.norm_sqr() * nn as f64;
        let t = target.round() as i64;
        if t == 0 || (target - t as f64).abs() > 1e-8 {
            continue;
        }
        // Gaussian integers g with |g|^2 = t.
        let bound = (t as f64).sqrt() as i64 + 1;
        for a in -bound..=bound {
            for b in -bound..=bound {
                if a * a + b * b != t {
                    continue;
                }
                let g = Complex64::new(a as f64, b as f64);
                let phase = vmax * s / g;
                let mut k = vec![0i64; 2 * v.len()];
                let mut ok = true;
                for (j, z) in v.iter().enumerate() {
                    let w = z * s / phase;
                    let (re, im) = (w.re.round(), w.im.round());
                    if (w.re - re).abs() > 1e-8 || (w.im - im).abs() > 1e-8 {
                        ok = false;
                        break;
                    }
                    k[2 * j] = re as i64;
                    k[2 * j + 1] = im as i64;
                }
                if ok && k.iter().map(|x| x * x).sum::<i64>() == nn {
                    return Some(k);
                }
            }
        }
    }
    None
}

/// Orthonormal frames built from lattice directions of radius `r`. The
/// directions are stored once; each frame lists indices into them.
#[derive(Clone, Debug)]
pub struct FrameSet {
    n: usize,
    radius: usize,
    directions: Vec<Direction>,
    frames: Vec<Vec<usize>>,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Representative of `k` modulo multiplication by 1, i, -1, -i.
fn unit_class(k: &[i64]) -> Vec<i64> {
    let mut best = k.to_vec();
    let mut cur = k.to_vec();
    for _ in 0..3 {
        cur = times_i(&cur);
        if cur > best {
            best = cur.clone();
        }
    }
    best
}

impl FrameSet {
    /// Frames whose first vector is `k/|k|` for a primitive Gaussian integer
    /// vector with real and imaginary parts in `[-r, r]`, completed by
    /// Gram-Schmidt against the canonical basis. The coordinate frame comes
    /// first. Completed vectors are rotated by a unit phase onto a lattice
    /// direction whenever one exists, which leaves `v* M v` unchanged.
    pub fn new(n: usize, r: usize) -> Result<Self> {
        if n == 0 || r == 0 {
            return Err(Error::InvalidArgument("frame set needs n >= 1 and r >= 1".into()));
        }
        let d = 2 * n;
        let r = r as i64;
        let side = (2 * r + 1) as usize;
        let mut classes: Vec<Vec<i64>> = Vec::new();
        for code in 0..side.pow(d as u32) {
            let mut c = code;
            let mut k = vec![0i64; d];
            for j in (0..d).rev() {
                k[j] = (c % side) as i64 - r;
                c /= side;
            }
            if k.iter().all(|&x| x == 0) || k.iter().fold(0, |g, &x| gcd(g, x)) != 1 {
                continue;
            }
            classes.push(unit_class(&k));
        }
        classes.sort();
        classes.dedup();
        classes.sort_by_key(|k| (k.iter().map(|x| x * x).sum::<i64>(), std::cmp::Reverse(k.clone())));

        let mut set = FrameSet {
            n,
            radius: r as usize,
            directions: Vec::new(),
            frames: Vec::new(),
        };
        let mut seen: Vec<Vec<Vec<i64>>> = Vec::new();
        let mut coord = Vec::new();
        for j in 0..n {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            coord.push(e);
        }
        set.push_frame(coord, &mut seen);
        for k in &classes {
            let v1: Vec<Complex64> = {
                let kc = to_complex(k);
                let nk = norm_c(&kc);
                kc.iter().map(|z| z / nk).collect()
            };
            set.push_frame(complete_frame(v1), &mut seen);
        }
        Ok(set)
    }

    fn push_frame(&mut self, vectors: Vec<Vec<Complex64>>, seen: &mut Vec<Vec<Vec<i64>>>) {
        let dirs: Vec<Direction> = vectors.into_iter().map(Direction::new).collect();
        let mut key: Vec<Vec<i64>> = dirs
            .iter()
            .map(|dir| match &dir.step {
                Some(k) => unit_class(k),
                None => dir
                    .v
                    .iter()
                    .flat_map(|z| [(z.re * 1e9).round() as i64, (z.im * 1e9).round() as i64])
                    .collect(),
            })
            .collect();
        key.sort();
        if seen.contains(&key) {
            return;
        }
        seen.push(key);
        let mut idx = Vec::new();
        for dir in dirs {
            let pos = self.directions.iter().position(|e| match (&e.step, &dir.step) {
                (Some(a), Some(b)) => unit_class(a) == unit_class(b),
                _ => e.v == dir.v,
            });
            idx.push(pos.unwrap_or_else(|| {
                self.directions.push(dir);
                self.directions.len() - 1
            }));
        }
        self.frames.push(idx);
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    /// Frames as index lists into [`FrameSet::directions`].
    pub fn frames(&self) -> &[Vec<usize>] {
        &self.frames
    }

    pub fn frame_vectors(&self, f: usize) -> Vec<&[Complex64]> {
        self.frames[f].iter().map(|&i| self.directions[i].v.as_slice()).collect()
    }

    /// Largest lattice offset used by any direction, in lattice units.
    pub fn reach(&self) -> i64 {
        self.directions
            .iter()
            .filter_map(|d| d.step.as_ref())
            .flat_map(|k| k.iter().map(|x| x.abs()))
            .max()
            .unwrap_or(1)
            .max(1)
    }
}

fn complete_frame(v1: Vec<Complex64>) -> Vec<Vec<Complex64>> {
    let n = v1.len();
    let mut frame = vec![v1];
    for j in 0..n {
        if frame.len() == n {
            break;
        }
        let mut w = vec![Complex64::new(0.0, 0.0); n];
        w[j] = Complex64::new(1.0, 0.0);
        for _ in 0..2 {
            for q in &frame {
                let ip: Complex64 = q.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                for t in 0..n {
                    w[t] -= ip * q[t];
                }
            }
        }
        let nw = norm_c(&w);
        if nw < 1e-3 {
            continue;
        }
        let w: Vec<Complex64> = w.iter().map(|z| z / nw).collect();
        frame.push(align_phase(w));
    }
    frame
}

/// Multiplies `w` by a unit phase that makes it a lattice direction, if any.
fn align_phase(w: Vec<Complex64>) -> Vec<Complex64> {
    match lattice_step(&w, 64) {
        Some(k) => {
            let kc = to_complex(&k);
            let nk = norm_c(&kc);
            kc.iter().map(|z| z / nk).collect()
        }
        None => w,
    }
}

/// Discrete `v* H v` at `node`: `[u(z+s) + u(z-s) + u(z+is) + u(z-is) - 4u(z)] / (4|s|^2)`.
/// For lattice directions `s = h k` and the samples are nodes; otherwise
/// `s = h v` and samples are interpolated.
pub fn directional_second_difference(u: &ScalarField, node: Node, v: &[Complex64]) -> Result<f64> {
    directional_with(u, node, &Direction::new(v.to_vec()))
}

fn directional_with(u: &ScalarField, node: Node, dir: &Direction) -> Result<f64> {
    let dom = u.domain();
    let h = dom.h();
    let center = u
        .value(node)
        .ok_or_else(|| Error::OutsideHull(dom.point(node)))?;
    match (&dir.step, dir.rotated_step()) {
        (Some(k), Some(ik)) => {
            let neg = |s: &[i64]| s.iter().map(|x| -x).collect::<Vec<_>>();
            let s = stencil_value(u, node, k)?
                + stencil_value(u, node, &neg(k))?
                + stencil_value(u, node, &ik)?
                + stencil_value(u, node, &neg(&ik))?;
            let k2 = k.iter().map(|x| x * x).sum::<i64>() as f64;
            Ok((s - 4.0 * center) / (4.0 * h * h * k2))
        }
        _ => {
            let z = dom.point(node);
            let nv = norm_c(&dir.v);
            let real: Vec<f64> = dir.v.iter().flat_map(|c| [c.re / nv, c.im / nv]).collect();
            let rot: Vec<f64> = dir.v.iter().flat_map(|c| [-c.im / nv, c.re / nv]).collect();
            let mut s = 0.0;
            for (vec, sign) in [(&real, 1.0), (&real, -1.0), (&rot, 1.0), (&rot, -1.0)] {
                let p: Vec<f64> = z.iter().zip(vec.iter()).map(|(a, b)| a + sign * h * b).collect();
                s += u.interpolate(&p)?;
            }
            Ok((s - 4.0 * center) / (4.0 * h * h))
        }
    }
}

/// `A_n` times the minimum over frames of the product of clamped
/// directional second differences.
pub fn ma_monotone(u: &ScalarField, node: Node, frames: &FrameSet) -> Result<f64> {
    let vals = frames
        .directions
        .iter()
        .map(|dir| directional_with(u, node, dir).map(|x| x.max(0.0)))
        .collect::<Result<Vec<f64>>>()?;
    let best = frames
        .frames
        .iter()
        .map(|fr| fr.iter().map(|&i| vals[i]).product::<f64>())
        .fold(f64::INFINITY, f64::min);
    Ok(ma_normalization(frames.n) * best)
}
