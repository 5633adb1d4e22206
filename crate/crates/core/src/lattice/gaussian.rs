use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{support_cap, Point, SparsePmf};
use crate::linalg::{cholesky, min_eigenvalue, symmetrize};
use crate::quadrature::{std_normal_interval, BoxIntegral};
use crate::{Error, Result};

/// Smallest admissible covariance eigenvalue.
pub const EIGEN_FLOOR: f64 = 1e-8;
/// Diagonal entries at or below this are treated as exactly degenerate.
const ZERO_VARIANCE: f64 = 1e-12;
const ADAPTIVE_TOL: f64 = 1e-12;
const TAB_RADIUS: f64 = 9.0;
const QMC_SEED: u64 = 0x5eed;

/// Round to the nearest integer, ties to even.
pub fn round_half_even(v: f64) -> i64 {
    v.round_ties_even() as i64
}

/// Split coordinates into those with positive variance and those with exactly
/// zero variance (which are deterministic at the rounded mean).
pub fn reduce_degenerate(mu: &[f64], sigma: &DMatrix<f64>) -> (Vec<usize>, Vec<(usize, i64)>) {
    let mut kept = Vec::new();
    let mut fixed = Vec::new();
    for i in 0..mu.len() {
        if sigma[(i, i)] <= ZERO_VARIANCE {
            fixed.push((i, round_half_even(mu[i])));
        } else {
            kept.push(i);
        }
    }
    (kept, fixed)
}

/// The law of `⌊N(μ, Σ)⌉` with its Cholesky factor cached.
#[derive(Debug, Clone)]
pub struct DiscretizedGaussian {
    mu: Vec<f64>,
    sigma: DMatrix<f64>,
    kept: Vec<usize>,
    fixed: Vec<(usize, i64)>,
    l: Vec<Vec<f64>>,
}

impl DiscretizedGaussian {
    /// Requires every eigenvalue of `sigma` to be at least [`EIGEN_FLOOR`].
    pub fn new(mu: &[f64], sigma: &DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        check_shape(d, sigma)?;
        let kept: Vec<usize> = (0..d).collect();
        Self::build(mu, sigma, kept, Vec::new())
    }

    /// Like [`DiscretizedGaussian::new`] but coordinates with zero variance are
    /// removed first and pinned to their rounded means.
    pub fn reduced(mu: &[f64], sigma: &DMatrix<f64>) -> Result<Self> {
        check_shape(mu.len(), sigma)?;
        let (kept, fixed) = reduce_degenerate(mu, sigma);
        Self::build(mu, sigma, kept, fixed)
    }

    fn build(mu: &[f64], sigma: &DMatrix<f64>, kept: Vec<usize>, fixed: Vec<(usize, i64)>) -> Result<Self> {
        let sigma = symmetrize(sigma);
        let sub = DMatrix::from_fn(kept.len(), kept.len(), |a, b| sigma[(kept[a], kept[b])]);
        let l = if kept.is_empty() {
            Vec::new()
        } else {
            let min_eig = min_eigenvalue(&sub);
            if min_eig < EIGEN_FLOOR {
                return Err(Error::SingularCovariance { min_eig, floor: EIGEN_FLOOR });
            }
            let f = cholesky(&sub).ok_or(Error::SingularCovariance { min_eig, floor: EIGEN_FLOOR })?;
            (0..kept.len()).map(|i| (0..kept.len()).map(|j| f[(i, j)]).collect()).collect()
        };
        Ok(DiscretizedGaussian { mu: mu.to_vec(), sigma, kept, fixed, l })
    }

    pub fn dims(&self) -> usize {
        self.mu.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mu
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Box probability together with an error estimate (zero for the deterministic rules).
    pub fn pmf_with_error(&self, x: &[i64]) -> (f64, f64) {
        for &(i, v) in &self.fixed {
            if x[i] != v {
                return (0.0, 0.0);
            }
        }
        let d = self.kept.len();
        match d {
            0 => (1.0, 0.0),
            1 => {
                let i = self.kept[0];
                let s = self.l[0][0];
                let c = x[i] as f64 - self.mu[i];
                (std_normal_interval((c - 0.5) / s, (c + 0.5) / s), 0.0)
            }
            _ => {
                let mean: Vec<f64> = self.kept.iter().map(|&i| self.mu[i]).collect();
                let lo: Vec<f64> = self.kept.iter().map(|&i| x[i] as f64 - 0.5).collect();
                let hi: Vec<f64> = self.kept.iter().map(|&i| x[i] as f64 + 0.5).collect();
                let b = BoxIntegral { mean: &mean, l: &self.l, lo: &lo, hi: &hi };
                if d <= 3 {
                    (b.adaptive(ADAPTIVE_TOL), 0.0)
                } else {
                    b.lattice(QMC_SEED)
                }
            }
        }
    }

    pub fn pmf(&self, x: &[i64]) -> f64 {
        self.pmf_with_error(x).0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let mut out: Vec<i64> = vec![0; self.mu.len()];
        for &(i, v) in &self.fixed {
            out[i] = v;
        }
        let z: Vec<f64> = (0..self.kept.len()).map(|_| rng.sample(StandardNormal)).collect();
        for (a, &i) in self.kept.iter().enumerate() {
            let v = self.mu[i] + (0..=a).map(|b| self.l[a][b] * z[b]).sum::<f64>();
            out[i] = round_half_even(v);
        }
        out
    }

    /// Per-coordinate window `[lo, hi]` holding all but a negligible tail.
    pub fn window(&self) -> Vec<(i64, i64)> {
        (0..self.mu.len())
            .map(|i| {
                let s = self.sigma[(i, i)].max(0.0).sqrt();
                let lo = (self.mu[i] - TAB_RADIUS * s - 1.0).floor() as i64;
                let hi = (self.mu[i] + TAB_RADIUS * s + 1.0).ceil() as i64;
                (lo, hi)
            })
            .collect()
    }

    /// Tabulate over the window; mass outside it is below 1e-15 per axis.
    pub fn tabulate(&self) -> Result<SparsePmf> {
        let win = self.window();
        let size: u128 = win.iter().map(|(a, b)| (b - a + 1) as u128).product();
        let cap = support_cap();
        if size > cap {
            return Err(Error::SupportCapExceeded { size, cap });
        }
        let mut points = BTreeMap::new();
        let mut x: Vec<i64> = win.iter().map(|w| w.0).collect();
        let pinned: BTreeMap<usize, i64> = self.fixed.iter().copied().collect();
        for (i, v) in &pinned {
            x[*i] = *v;
        }
        loop {
            let p = self.pmf(&x);
            if p > 0.0 {
                points.insert(x.clone(), p);
            }
            let mut i = 0;
            loop {
                if i == x.len() {
                    return Ok(SparsePmf::from_map(self.mu.len(), points, 0.0));
                }
                if pinned.contains_key(&i) {
                    i += 1;
                    continue;
                }
                if x[i] < win[i].1 {
                    x[i] += 1;
                    break;
                }
                x[i] = win[i].0;
                i += 1;
            }
        }
    }
}

fn check_shape(d: usize, sigma: &DMatrix<f64>) -> Result<()> {
    if sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: sigma.nrows() });
    }
    Ok(())
}

/// `P(⌊N(μ,Σ)⌉ = x)`: the Gaussian mass of the unit box centred at `x`.
pub fn discretized_gaussian_pmf(mu: &[f64], sigma: &DMatrix<f64>, x: &[i64]) -> Result<f64> {
    if x.len() != mu.len() {
        return Err(Error::DimensionMismatch { expected: mu.len(), got: x.len() });
    }
    Ok(DiscretizedGaussian::new(mu, sigma)?.pmf(x))
}
