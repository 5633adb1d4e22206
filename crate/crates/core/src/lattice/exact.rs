use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use super::{binomial, support_cap, GmdParams, ParamMatrix, Point, SparsePmf};
use crate::{Error, Result};

const DENSE_LIMIT: usize = 2_000_000;

/// Exact PMF of a PMD by dynamic programming over the rows.
pub fn pmd_pmf_exact(pm: &ParamMatrix) -> Result<SparsePmf> {
    let (n, k) = (pm.n(), pm.k());
    let size = binomial((n + k - 1) as u64, (k - 1) as u64);
    let cap = support_cap();
    if size > cap {
        return Err(Error::SupportCapExceeded { size, cap });
    }
    if k == 1 {
        return Ok(SparsePmf::point_mass(vec![n as i64]));
    }
    let dense = (n as f64 + 1.0).powi(k as i32 - 1);
    if dense <= DENSE_LIMIT as f64 {
        Ok(dense_dp(pm))
    } else {
        Ok(sparse_dp(pm))
    }
}

/// The last coordinate is implied by `n - sum(others)`, so the table indexes k−1 coordinates.
fn dense_dp(pm: &ParamMatrix) -> SparsePmf {
    let (n, k) = (pm.n(), pm.k());
    let d = k - 1;
    let side = n + 1;
    let strides: Vec<usize> = (0..d).map(|j| side.pow(j as u32)).collect();
    let size = side.pow(d as u32);
    let mut cur = vec![0.0; size];
    let mut next = vec![0.0; size];
    cur[0] = 1.0;
    // only cells with coordinate sum <= i can be reached after i rows
    let mut live: Vec<usize> = vec![0];
    let mut mark = vec![false; size];
    for row in pm.rows() {
        let mut new_live = Vec::with_capacity(live.len() * 2);
        for &idx in &live {
            let v = cur[idx];
            if v == 0.0 {
                continue;
            }
            let last = row[d];
            if last > 0.0 {
                next[idx] += v * last;
                if !mark[idx] {
                    mark[idx] = true;
                    new_live.push(idx);
                }
            }
            for j in 0..d {
                if row[j] > 0.0 {
                    let t = idx + strides[j];
                    next[t] += v * row[j];
                    if !mark[t] {
                        mark[t] = true;
                        new_live.push(t);
                    }
                }
            }
        }
        for &idx in &live {
            cur[idx] = 0.0;
        }
        for &idx in &new_live {
            mark[idx] = false;
        }
        std::mem::swap(&mut cur, &mut next);
        live = new_live;
    }
    let mut points = BTreeMap::new();
    for idx in live {
        let v = cur[idx];
        if v == 0.0 {
            continue;
        }
        let mut x = Vec::with_capacity(k);
        let mut rem = idx;
        let mut s = 0;
        for _ in 0..d {
            let c = rem % side;
            rem /= side;
            s += c;
            x.push(c as i64);
        }
        x.push((n - s) as i64);
        points.insert(x, v);
    }
    SparsePmf::from_map(k, points, 0.0)
}

fn sparse_dp(pm: &ParamMatrix) -> SparsePmf {
    let k = pm.k();
    let mut cur: HashMap<Point, f64> = HashMap::from([(vec![0; k], 1.0)]);
    for row in pm.rows() {
        let mut next: HashMap<Point, f64> = HashMap::with_capacity(cur.len() * 2);
        for (x, v) in &cur {
            for (j, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    let mut y = x.clone();
                    y[j] += 1;
                    *next.entry(y).or_insert(0.0) += v * p;
                }
            }
        }
        cur = next;
    }
    SparsePmf::from_map(k, cur.into_iter().collect(), 0.0)
}

/// Exact PMF of a GMD over its visible coordinates.
pub fn gmd_pmf_exact(g: &GmdParams) -> Result<SparsePmf> {
    let full = pmd_pmf_exact(&g.to_pmd())?;
    let coords: Vec<usize> = (0..g.dims()).collect();
    Ok(full.project(&coords))
}

/// Exact PMF of the k-SIIRV `(0, 1, …, k−1)·Y`.
pub fn siirv_pmf_exact(pm: &ParamMatrix) -> Result<SparsePmf> {
    let k = pm.k();
    let top = (k - 1) * pm.n();
    let mut cur = vec![0.0; top + 1];
    cur[0] = 1.0;
    let mut reach = 0;
    for row in pm.rows() {
        let mut next = vec![0.0; top + 1];
        for s in 0..=reach {
            let v = cur[s];
            if v == 0.0 {
                continue;
            }
            for (j, &p) in row.iter().enumerate() {
                next[s + j] += v * p;
            }
        }
        reach += k - 1;
        cur = next;
    }
    let points = cur.into_iter().enumerate().filter(|(_, v)| *v > 0.0).map(|(s, v)| (vec![s as i64], v)).collect();
    Ok(SparsePmf::from_map(1, points, 0.0))
}

/// Draw one point from the PMD.
pub fn pmd_sample<R: Rng + ?Sized>(pm: &ParamMatrix, rng: &mut R) -> Point {
    PmdSampler::new(pm).sample(rng)
}

/// Row-wise categorical sampler with precomputed cumulative sums.
#[derive(Debug, Clone)]
pub struct PmdSampler {
    k: usize,
    cum: Vec<Vec<f64>>,
}

impl PmdSampler {
    pub fn new(pm: &ParamMatrix) -> Self {
        let cum = pm
            .rows()
            .iter()
            .map(|r| {
                let mut acc = 0.0;
                r.iter()
                    .map(|v| {
                        acc += v;
                        acc
                    })
                    .collect()
            })
            .collect();
        PmdSampler { k: pm.k(), cum }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let mut x = vec![0i64; self.k];
        for c in &self.cum {
            let u = rng.random::<f64>() * c[self.k - 1];
            let j = c.partition_point(|&v| v <= u).min(self.k - 1);
            x[j] += 1;
        }
        x
    }

    /// Projection `(0..k)·x` of a draw, for SIIRV sampling.
    pub fn sample_siirv<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.sample(rng).iter().enumerate().map(|(j, c)| j as i64 * c).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::tv_distance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_rows() {
        let m = ParamMatrix::new(3, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let p = pmd_pmf_exact(&m).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.prob(&[1, 1, 0]), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(pmd_sample(&m, &mut rng), vec![1, 1, 0]);
        }
    }

    #[test]
    fn binomial_two_half() {
        let m = ParamMatrix::repeated(&[0.5, 0.5], 2).unwrap();
        let p = pmd_pmf_exact(&m).unwrap();
        assert_eq!(p.prob(&[2, 0]), 0.25);
        assert_eq!(p.prob(&[1, 1]), 0.5);
        assert_eq!(p.prob(&[0, 2]), 0.25);
    }

    #[test]
    fn empty_matrix_is_origin() {
        let m = ParamMatrix::empty(3);
        let p = pmd_pmf_exact(&m).unwrap();
        assert_eq!(p.prob(&[0, 0, 0]), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(pmd_sample(&m, &mut rng), vec![0, 0, 0]);
    }

    #[test]
    fn dense_and_sparse_paths_agree() {
        let m = ParamMatrix::new(3, vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.0, 0.4], vec![0.1, 0.8, 0.1], vec![0.0, 0.0, 1.0]])
            .unwrap();
        let a = dense_dp(&m);
        let b = sparse_dp(&m);
        assert!(tv_distance(&a, &b) < 1e-15);
    }

    #[test]
    fn support_cap_is_enforced() {
        let m = ParamMatrix::repeated(&[0.25; 4], 400).unwrap();
        // binom(403, 3) ≈ 1.09e7 > default cap
        assert!(matches!(pmd_pmf_exact(&m), Err(Error::SupportCapExceeded { .. })));
    }

    #[test]
    fn siirv_matches_projection() {
        let m = ParamMatrix::new(3, vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.1, 0.3], vec![0.3, 0.3, 0.4]]).unwrap();
        let s = siirv_pmf_exact(&m).unwrap();
        let proj = pmd_pmf_exact(&m).unwrap().map_points(1, |x| vec![x[1] + 2 * x[2]]);
        assert!(tv_distance(&s, &proj) < 1e-15);
        let det = ParamMatrix::repeated(&[0.0, 0.0, 1.0], 4).unwrap();
        assert_eq!(siirv_pmf_exact(&det).unwrap().prob(&[8]), 1.0);
        let one = ParamMatrix::new(3, vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let p = siirv_pmf_exact(&one).unwrap();
        assert_eq!((p.prob(&[0]), p.prob(&[1]), p.prob(&[2])), (0.2, 0.3, 0.5));
    }

    #[test]
    fn sampler_matches_binomial() {
        let m = ParamMatrix::repeated(&[0.5, 0.5], 2).unwrap();
        let s = PmdSampler::new(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let mut counts: BTreeMap<Point, f64> = BTreeMap::new();
        for _ in 0..draws {
            *counts.entry(s.sample(&mut rng)).or_insert(0.0) += 1.0 / draws as f64;
        }
        let emp = SparsePmf::new(2, counts).unwrap();
        assert!(tv_distance(&emp, &pmd_pmf_exact(&m).unwrap()) < 0.02);
    }
}
