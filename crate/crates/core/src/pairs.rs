//! Deterministic pair sampling over the closure points of a domain.
//!
//! Small point sets are scanned exhaustively. Larger ones get all pairs on a
//! coarsened sub-lattice, all pairs between lattice neighbours, and
//! low-discrepancy global pairs seeded from `CMA_SEED`.

use std::collections::HashMap;

use crate::grid::{moore_offsets, GridDomain, Site};

pub const DEFAULT_BUDGET: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairSampler {
    pub budget: usize,
    pub seed: u64,
}

impl Default for PairSampler {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            seed: 0,
        }
    }
}

/// Reads `CMA_SEED` (decimal), defaulting to 0.
pub fn seed_from_env() -> u64 {
    std::env::var("CMA_SEED")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(0)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl PairSampler {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self {
            budget: budget.max(10_000),
            seed,
        }
    }

    pub fn from_env(budget: usize) -> Self {
        Self::new(budget, seed_from_env())
    }

    /// Pairs `(i, j)`, `i < j`, of closure point indices.
    pub fn pairs(&self, dom: &GridDomain) -> Vec<(u32, u32)> {
        let all: Vec<u32> = (0..dom.closure_len() as u32).collect();
        self.sample(dom, &all, &all, true)
    }

    /// Pairs `(a, b)` with `a` drawn from `left` and `b` from `right`.
    pub fn cross_pairs(&self, dom: &GridDomain, left: &[u32], right: &[u32]) -> Vec<(u32, u32)> {
        self.sample(dom, left, right, false)
    }

    fn sample(&self, dom: &GridDomain, left: &[u32], right: &[u32], same: bool) -> Vec<(u32, u32)> {
        let nl = left.len();
        let nr = right.len();
        if nl == 0 || nr == 0 {
            return Vec::new();
        }
        let full = if same { nl * (nl - 1) / 2 } else { nl * nr };
        if full <= self.budget {
            return exhaustive(left, right, same);
        }

        let mut out: Vec<(u32, u32)> = Vec::with_capacity(self.budget + self.budget / 2);

        // All pairs on the coarsest sub-lattice that fits in half the budget.
        let index_of = |j: u32| -> Vec<i64> {
            let slot = match dom.closure_sites()[j as usize] {
                Site::Node(s) | Site::Anchor(s) => s,
            };
            dom.lattice_index(dom.node_of_slot(slot))
        };
        let mut stride = 2i64;
        loop {
            let keep = |set: &[u32]| -> Vec<u32> {
                set.iter()
                    .copied()
                    .filter(|&j| index_of(j).iter().all(|i| i % stride == 0))
                    .collect()
            };
            let cl = keep(left);
            let cr = if same { cl.clone() } else { keep(right) };
            let count = if same {
                cl.len() * cl.len().saturating_sub(1) / 2
            } else {
                cl.len() * cr.len()
            };
            if count <= self.budget / 2 {
                out.extend(exhaustive(&cl, &cr, same));
                break;
            }
            stride += 1;
        }

        // Lattice neighbours (3^{2n} neighbourhood), capped at a quarter budget.
        let mut by_node: HashMap<usize, u32> = HashMap::with_capacity(nr);
        for &j in right {
            let slot = match dom.closure_sites()[j as usize] {
                Site::Node(s) | Site::Anchor(s) => s,
            };
            by_node.insert(dom.node_of_slot(slot).0, j);
        }
        let offsets = moore_offsets(dom.dim());
        let mut local = Vec::new();
        for &i in left {
            let slot = match dom.closure_sites()[i as usize] {
                Site::Node(s) | Site::Anchor(s) => s,
            };
            let nd = dom.node_of_slot(slot);
            for off in &offsets {
                if let Some(m) = dom.offset_node(nd, off) {
                    if let Some(&j) = by_node.get(&m.0) {
                        if !same || i < j {
                            local.push((i, j));
                        }
                    }
                }
            }
        }
        let cap = self.budget / 4;
        if local.len() > cap {
            let step = local.len() as f64 / cap as f64;
            out.extend((0..cap).map(|k| local[(k as f64 * step) as usize]));
        } else {
            out.extend(local);
        }

        // Additive recurrence on the plastic-number lattice (R2 sequence).
        let g = 1.324_717_957_244_746_f64;
        let (a1, a2) = (1.0 / g, 1.0 / (g * g));
        let s = splitmix(self.seed);
        let mut x = (s >> 11) as f64 / (1u64 << 53) as f64;
        let mut y = (splitmix(s) >> 11) as f64 / (1u64 << 53) as f64;
        let target = self.budget.saturating_sub(out.len()).max(self.budget / 4);
        let mut added = 0;
        while added < target {
            x = (x + a1).fract();
            y = (y + a2).fract();
            let i = left[((x * nl as f64) as usize).min(nl - 1)];
            let j = right[((y * nr as f64) as usize).min(nr - 1)];
            if i == j {
                continue;
            }
            out.push(if same && i > j { (j, i) } else { (i, j) });
            added += 1;
        }
        out
    }
}

fn exhaustive(left: &[u32], right: &[u32], same: bool) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    if same {
        for a in 0..left.len() {
            for b in a + 1..left.len() {
                out.push((left[a], left[b]));
            }
        }
    } else {
        for &a in left {
            for &b in right {
                out.push((a, b));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{classify_nodes, norm2, BoundingBox, RealFn};
    use std::sync::Arc;

    #[test]
    fn small_sets_are_exhaustive() {
        let f: RealFn = Arc::new(|p: &[f64]| norm2(p) - 1.0);
        let dom = classify_nodes(1, f, &BoundingBox::cube(1, 1.25), 0.25).unwrap();
        let n = dom.closure_len();
        let pairs = PairSampler::default().pairs(&dom);
        assert_eq!(pairs.len(), n * (n - 1) / 2);
    }

    #[test]
    fn large_sets_are_sampled_deterministically() {
        let f: RealFn = Arc::new(|p: &[f64]| norm2(p) - 1.0);
        let dom = classify_nodes(2, f, &BoundingBox::cube(2, 1.25), 0.25).unwrap();
        let s = PairSampler::new(20_000, 7);
        let a = s.pairs(&dom);
        let b = s.pairs(&dom);
        assert_eq!(a, b);
        assert!(a.len() >= 20_000 / 2 && a.len() <= 2 * 20_000);
        assert!(a.iter().all(|&(i, j)| i < j));
        let c = PairSampler::new(20_000, 8).pairs(&dom);
        assert_ne!(a, c);
    }
}
