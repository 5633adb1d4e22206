//! Moment estimation from samples, directional accuracy checks and the
//! spectral cover of PSD matrices used to recover a Gaussian component.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::lattice::Point;
use crate::linalg::{inv_sqrt, min_eigenvalue, sym_eigen, symmetrize};
use crate::{Error, Result};

/// Sample mean and unbiased sample covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMoments {
    pub m: usize,
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

pub fn empirical_moments(samples: &[Point]) -> Result<EmpiricalMoments> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::arg("samples", format!("need at least 2 samples, got {m}")));
    }
    let d = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    // shift by the first sample to keep sums small
    let origin = &samples[0];
    let mut sum = vec![0.0; d];
    for s in samples {
        for j in 0..d {
            sum[j] += (s[j] - origin[j]) as f64;
        }
    }
    let shift: Vec<f64> = sum.iter().map(|v| v / m as f64).collect();
    let mut cov = DMatrix::zeros(d, d);
    let mut dev = vec![0.0; d];
    for s in samples {
        for j in 0..d {
            dev[j] = (s[j] - origin[j]) as f64 - shift[j];
        }
        for a in 0..d {
            for b in 0..=a {
                cov[(a, b)] += dev[a] * dev[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            cov[(a, b)] /= (m - 1) as f64;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    let mean = shift.iter().zip(origin).map(|(s, &o)| s + o as f64).collect();
    Ok(EmpiricalMoments { m, mean, cov })
}

/// Directions `v_i/√λ_i` and `v_i/√λ_i + v_j/√λ_j` (`i < j`) of a positive definite matrix.
pub fn eigen_directions(sigma: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
    let (vals, vecs) = sym_eigen(sigma);
    if vals.first().is_some_and(|&v| v <= 1e-12) {
        return Err(Error::SingularCovariance { min_eig: vals[0], floor: 1e-12 });
    }
    let scaled: Vec<DVector<f64>> = (0..vals.len()).map(|i| vecs.column(i) / vals[i].sqrt()).collect();
    let mut out = scaled.clone();
    for i in 0..scaled.len() {
        for j in i + 1..scaled.len() {
            out.push(&scaled[i] + &scaled[j]);
        }
    }
    Ok(out)
}

/// Per-direction outcome of a directional accuracy check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionalReport {
    pub mean_ratio: Vec<f64>,
    pub cov_ratio: Vec<f64>,
    pub eps: f64,
}

impl DirectionalReport {
    pub fn mean_ok(&self) -> Vec<bool> {
        self.mean_ratio.iter().map(|&r| r <= self.eps).collect()
    }

    pub fn cov_ok(&self) -> Vec<bool> {
        self.cov_ratio.iter().map(|&r| r <= self.eps).collect()
    }

    pub fn passed(&self) -> bool {
        self.mean_ratio.iter().chain(&self.cov_ratio).all(|&r| r <= self.eps)
    }

    pub fn worst(&self) -> f64 {
        self.mean_ratio.iter().chain(&self.cov_ratio).fold(0.0, |a, &b| a.max(b))
    }
}

/// `|yᵀ(μ̂−μ)| ≤ ε√(yᵀΣy)` and `|yᵀ(Σ̂−Σ)y| ≤ ε yᵀΣy` on each direction.
pub fn directional_error_check(
    est: &EmpiricalMoments,
    mu: &[f64],
    sigma: &DMatrix<f64>,
    directions: &[DVector<f64>],
    eps: f64,
) -> Result<DirectionalReport> {
    let min = min_eigenvalue(sigma);
    if min < 1.0 - 1e-9 {
        return Err(Error::Precondition(format!("covariance minimum eigenvalue {min} below 1")));
    }
    let d = DVector::from_iterator(mu.len(), est.mean.iter().zip(mu).map(|(a, b)| a - b));
    let diff = &est.cov - sigma;
    let mut mean_ratio = Vec::with_capacity(directions.len());
    let mut cov_ratio = Vec::with_capacity(directions.len());
    for y in directions {
        let var = (y.transpose() * sigma * y)[(0, 0)];
        mean_ratio.push(y.dot(&d).abs() / var.sqrt());
        cov_ratio.push((y.transpose() * &diff * y)[(0, 0)].abs() / var);
    }
    Ok(DirectionalReport { mean_ratio, cov_ratio, eps })
}

/// Smallest `ε` with `|yᵀ(μ′−μ)| ≤ ε√(yᵀΣy)` and `|yᵀ(Σ′−Σ)y| ≤ ε yᵀΣy` for every `y`.
pub fn directional_eps(mu: &[f64], sigma: &DMatrix<f64>, mu2: &[f64], sigma2: &DMatrix<f64>) -> Result<f64> {
    let min = min_eigenvalue(sigma);
    if min <= 1e-12 {
        return Err(Error::SingularCovariance { min_eig: min, floor: 1e-12 });
    }
    let w = inv_sqrt(sigma);
    let d = DVector::from_iterator(mu.len(), mu2.iter().zip(mu).map(|(a, b)| a - b));
    let mean = (&w * d).norm();
    let rel = symmetrize(&(&w * (sigma2 - sigma) * &w));
    let (vals, _) = sym_eigen(&rel);
    let cov = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(mean.max(cov))
}

/// TV bound `2εk` from the tightest directional closeness `ε`.
pub fn directional_gaussian_tv_bound(mu: &[f64], sigma: &DMatrix<f64>, mu2: &[f64], sigma2: &DMatrix<f64>) -> Result<f64> {
    Ok(2.0 * directional_eps(mu, sigma, mu2, sigma2)? * mu.len() as f64)
}

/// Outcome of comparing a covariance with its rounded counterpart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub ratio: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `sup_y |yᵀ(Σ₁−Σ₂)y| / yᵀΣ₁y` against `9ε`. Requires `λ_min(Σ₁) ≥ 1/ε³`.
pub fn rounding_drift_check(s1: &DMatrix<f64>, s2: &DMatrix<f64>, eps: f64) -> Result<DriftReport> {
    let min = min_eigenvalue(s1);
    if min < eps.powi(-3) {
        return Err(Error::Precondition(format!("minimum eigenvalue {min} below 1/ε³ = {}", eps.powi(-3))));
    }
    let w = inv_sqrt(s1);
    let (vals, _) = sym_eigen(&symmetrize(&(&w * (s1 - s2) * &w)));
    let ratio = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(DriftReport { ratio, bound: 9.0 * eps, pass: ratio <= 9.0 * eps })
}

/// Parameters of the PSD cover around a reference matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsdCoverSpec {
    pub eps1: f64,
    pub eps2: f64,
    pub eps: f64,
    pub eps_prime: f64,
}

impl PsdCoverSpec {
    /// Eigenvector grid accuracy `ε′ = √ε·((1+ε₂)k)^{−3/2}/8`.
    pub fn new(eps1: f64, eps2: f64, eps: f64, k: usize) -> Result<Self> {
        let spec = PsdCoverSpec { eps1, eps2, eps, eps_prime: eps.sqrt() * ((1.0 + eps2) * k as f64).powf(-1.5) / 8.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.25).contains(&self.eps1) {
            return Err(Error::arg("eps1", format!("{} outside [0, 1/4)", self.eps1)));
        }
        if !(self.eps2 >= 0.0) {
            return Err(Error::arg("eps2", "must be nonnegative"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::arg("eps", format!("{} outside (0, 1)", self.eps)));
        }
        if !(self.eps_prime > 0.0) {
            return Err(Error::arg("eps_prime", "must be positive"));
        }
        Ok(())
    }
}

/// Candidate eigenvalues per index: additive shifts in `[−ε₂, ε₂]` at step ¼,
/// each scaled by powers of `1+ε` within a `[½, 3/2]` factor. Values are floored
/// at 1 and restricted to the band `(1±ε₁)μ ± ε₂` widened by one grid step.
pub fn eigen_candidates(vals: &[f64], eps1: f64, eps2: f64, eps: f64) -> Vec<Vec<f64>> {
    let steps = (4.0 * eps2 + 1e-9).floor() as i64;
    let up = (1.5f64.ln() / (1.0 + eps).ln()).floor() as i64;
    let down = (2.0f64.ln() / (1.0 + eps).ln()).floor() as i64;
    vals.iter()
        .map(|&mu| {
            let lo = ((1.0 - eps1) * mu - eps2).max(1.0) / (1.0 + eps);
            let hi = ((1.0 + eps1) * mu + eps2) * (1.0 + eps);
            let mut out = Vec::new();
            for s in -steps..=steps {
                let base = mu - 0.25 * s as f64;
                if base <= 0.0 {
                    continue;
                }
                for j in -down..=up {
                    let v = (base * (1.0 + eps).powi(j as i32)).max(1.0);
                    if v >= lo && v <= hi {
                        out.push(v);
                    }
                }
            }
            out.sort_by(f64::total_cmp);
            out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
            out
        })
        .collect()
}

/// The cover: eigenvalue candidates crossed with a grid of eigenvector
/// projections onto the reference eigenbasis.
#[derive(Debug, Clone)]
pub struct PsdCover {
    spec: PsdCoverSpec,
    vals: Vec<f64>,
    basis: DMatrix<f64>,
    candidates: Vec<Vec<f64>>,
    /// `grids[z][i]`: values for the projection of eigenvector `z` on reference direction `i`.
    grids: Vec<Vec<Vec<f64>>>,
}

fn projection_grid(step: f64, radius: f64) -> Vec<f64> {
    let n = (radius / step).ceil() as i64;
    (-n..=n).map(|j| (j as f64 * step).clamp(-radius, radius)).collect::<Vec<_>>().into_iter().fold(Vec::new(), |mut acc, v| {
        if acc.last().is_none_or(|&l: &f64| (v - l).abs() > 1e-15) {
            acc.push(v);
        }
        acc
    })
}

fn nearest(grid: &[f64], v: f64) -> f64 {
    let i = grid.partition_point(|&g| g < v);
    let mut best = grid[i.min(grid.len() - 1)];
    if i > 0 && (grid[i - 1] - v).abs() < (best - v).abs() {
        best = grid[i - 1];
    }
    best
}

pub fn psd_cover(a: &DMatrix<f64>, spec: &PsdCoverSpec) -> Result<PsdCover> {
    spec.validate()?;
    let (vals, basis) = sym_eigen(&symmetrize(a));
    if vals.first().is_some_and(|&v| v < 1.0 - 1e-9) {
        return Err(Error::Precondition(format!("reference minimum eigenvalue {} below 1", vals[0])));
    }
    let k = vals.len();
    let candidates = eigen_candidates(&vals, spec.eps1, spec.eps2, spec.eps);
    let e2 = spec.eps2;
    let grids = (0..k)
        .map(|z| {
            (0..k)
                .map(|i| {
                    let r = (2.0 * ((vals[i] + e2) / (vals[z] - 2.0 * e2).max(1.0)).sqrt()).min(1.0);
                    projection_grid(spec.eps_prime * r, r)
                })
                .collect()
        })
        .collect();
    Ok(PsdCover { spec: *spec, vals, basis, candidates, grids })
}

impl PsdCover {
    pub fn spec(&self) -> &PsdCoverSpec {
        &self.spec
    }

    pub fn reference_eigenvalues(&self) -> &[f64] {
        &self.vals
    }

    pub fn reference_basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn eigenvalue_candidates(&self) -> &[Vec<f64>] {
        &self.candidates
    }

    /// Number of grid combinations; degenerate combinations are skipped by the stream.
    pub fn len_bound(&self) -> u128 {
        let mut n: u128 = 1;
        for c in &self.candidates {
            n = n.saturating_mul(c.len() as u128);
        }
        for row in &self.grids {
            for g in row {
                n = n.saturating_mul(g.len() as u128);
            }
        }
        n
    }

    /// Build `Σ_z λ′_z w_z w_zᵀ` from gridded projections (columns of `proj`,
    /// in reference coordinates). Vectors are orthonormalized from the largest
    /// eigenvalue down so small-variance directions absorb the corrections.
    pub fn assemble(&self, lambdas: &[f64], proj: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let k = self.vals.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]).then(b.cmp(&a)));
        let mut done: Vec<DVector<f64>> = Vec::with_capacity(k);
        let mut w = DMatrix::zeros(k, k);
        for &z in &order {
            let mut v: DVector<f64> = proj.column(z).into_owned();
            for u in &done {
                let c = u.dot(&v);
                v -= u * c;
            }
            let norm = v.norm();
            if norm < 1e-6 {
                return None;
            }
            v /= norm;
            w.set_column(z, &v);
            done.push(v);
        }
        let vecs = &self.basis * w;
        let b = crate::linalg::compose(lambdas, &vecs);
        Some(symmetrize(&b))
    }

    /// The cover element nearest to `b`: eigenvalues snapped multiplicatively,
    /// eigenvector projections snapped to their grids.
    pub fn snap(&self, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let k = self.vals.len();
        let (bv, bvec) = sym_eigen(&symmetrize(b));
        let lambdas: Vec<f64> = (0..k)
            .map(|z| {
                let c = &self.candidates[z];
                let target = bv[z].max(1e-300).ln();
                *c.iter().min_by(|x, y| (x.ln() - target).abs().total_cmp(&(y.ln() - target).abs())).unwrap()
            })
            .collect();
        let mut proj = self.basis.transpose() * bvec;
        for z in 0..k {
            if proj[(z, z)] < 0.0 {
                for i in 0..k {
                    proj[(i, z)] = -proj[(i, z)];
                }
            }
            for i in 0..k {
                proj[(i, z)] = nearest(&self.grids[z][i], proj[(i, z)]);
            }
        }
        self.assemble(&lambdas, &proj)
    }

    /// Elements with the reference eigenvectors and every eigenvalue combination.
    pub fn eigenvalue_subcover(&self) -> Vec<DMatrix<f64>> {
        let k = self.vals.len();
        let mut out = Vec::new();
        let mut idx = vec![0usize; k];
        if self.candidates.iter().any(|c| c.is_empty()) {
            return out;
        }
        loop {
            let lambdas: Vec<f64> = (0..k).map(|z| self.candidates[z][idx[z]]).collect();
            out.push(symmetrize(&crate::linalg::compose(&lambdas, &self.basis)));
            let Some(p) = (0..k).find(|&p| idx[p] + 1 < self.candidates[p].len()) else { break };
            idx[p] += 1;
            for q in idx.iter_mut().take(p) {
                *q = 0;
            }
        }
        out
    }

    /// Lazy enumeration of every cover element.
    pub fn iter(&self) -> PsdCoverIter<'_> {
        let k = self.vals.len();
        let mut radices: Vec<usize> = self.candidates.iter().map(|c| c.len()).collect();
        for z in 0..k {
            for i in 0..k {
                radices.push(self.grids[z][i].len());
            }
        }
        let done = radices.contains(&0);
        PsdCoverIter { cover: self, counter: vec![0; radices.len()], radices, done }
    }
}

pub struct PsdCoverIter<'a> {
    cover: &'a PsdCover,
    radices: Vec<usize>,
    counter: Vec<usize>,
    done: bool,
}

impl Iterator for PsdCoverIter<'_> {
    type Item = DMatrix<f64>;

    fn next(&mut self) -> Option<DMatrix<f64>> {
        let k = self.cover.vals.len();
        while !self.done {
            let lambdas: Vec<f64> = (0..k).map(|z| self.cover.candidates[z][self.counter[z]]).collect();
            let proj = DMatrix::from_fn(k, k, |i, z| self.cover.grids[z][i][self.counter[k + z * k + i]]);
            let item = self.cover.assemble(&lambdas, &proj);
            let mut p = 0;
            loop {
                if p == self.radices.len() {
                    self.done = true;
                    break;
                }
                self.counter[p] += 1;
                if self.counter[p] < self.radices[p] {
                    break;
                }
                self.counter[p] = 0;
                p += 1;
            }
            if item.is_some() {
                return item;
            }
        }
        None
    }
}

/// Whether `b` lies in the band `|yᵀ(A−B)y| ≤ ε₁yᵀAy + ε₂yᵀy` on every direction given.
pub fn in_band(a: &DMatrix<f64>, b: &DMatrix<f64>, eps1: f64, eps2: f64, directions: &[DVector<f64>]) -> bool {
    let d = a - b;
    directions.iter().all(|y| {
        let lhs = (y.transpose() * &d * y)[(0, 0)].abs();
        lhs <= eps1 * (y.transpose() * a * y)[(0, 0)] + eps2 * y.norm_squared() + 1e-12
    })
}

/// Largest `|yᵀ(B−B̂)y| / yᵀBy` over the directions.
pub fn max_directional_ratio(b: &DMatrix<f64>, bhat: &DMatrix<f64>, directions: &[DVector<f64>]) -> f64 {
    let d = b - bhat;
    directions.iter().map(|y| (y.transpose() * &d * y)[(0, 0)].abs() / (y.transpose() * b * y)[(0, 0)]).fold(0.0, f64::max)
}

/// Unit directions: half uniform on the sphere, half perturbations of the eigenvectors of `a`.
pub fn sample_directions<R: Rng + ?Sized>(a: &DMatrix<f64>, count: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let k = a.nrows();
    let (_, vecs) = sym_eigen(a);
    let gauss = |rng: &mut R| DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
    (0..count)
        .map(|i| {
            let v = if i % 2 == 0 || k == 0 {
                gauss(rng)
            } else {
                let scale = 10f64.powf(-rng.random_range(1.0..4.0));
                vecs.column(rng.random_range(0..k)).into_owned() + gauss(rng) * scale
            };
            let n = v.norm();
            if n > 0.0 {
                v / n
            } else {
                v
            }
        })
        .collect()
}

/// Candidate means: projections onto the eigenbasis of a covariance candidate,
/// gridded at `√λ_z·ε/k` within `±radius` of the center.
pub fn mean_cover(center: &[f64], cov: &DMatrix<f64>, eps: f64, radius: f64) -> Vec<Vec<f64>> {
    let k = center.len();
    if k == 0 {
        return vec![Vec::new()];
    }
    let (vals, vecs) = sym_eigen(cov);
    let axes: Vec<Vec<f64>> = vals
        .iter()
        .map(|&l| {
            let step = l.max(1e-12).sqrt() * eps / k as f64;
            let n = (radius / step).floor().min(1e4) as i64;
            (-n..=n).map(|j| j as f64 * step).collect()
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; k];
    loop {
        let mut v = DVector::from_column_slice(center);
        for z in 0..k {
            v += vecs.column(z) * axes[z][idx[z]];
        }
        out.push(v.iter().copied().collect());
        let Some(p) = (0..k).find(|&p| idx[p] + 1 < axes[p].len()) else { break };
        idx[p] += 1;
        for q in idx.iter_mut().take(p) {
            *q = 0;
        }
    }
    out
}

/// Set partitions of `0..k` with one pivot per block.
pub fn block_structure_guesses(k: usize) -> Vec<Vec<(Vec<usize>, usize)>> {
    fn partitions(k: usize) -> Vec<Vec<Vec<usize>>> {
        let mut out: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
        for e in 0..k {
            let mut next = Vec::new();
            for p in out {
                for b in 0..p.len() {
                    let mut q = p.clone();
                    q[b].push(e);
                    next.push(q);
                }
                let mut q = p;
                q.push(vec![e]);
                next.push(q);
            }
            out = next;
        }
        out
    }
    let mut guesses = Vec::new();
    for p in partitions(k) {
        let mut acc: Vec<Vec<(Vec<usize>, usize)>> = vec![Vec::new()];
        for block in &p {
            acc = acc
                .into_iter()
                .flat_map(|g| {
                    block.iter().map(move |&piv| {
                        let mut g = g.clone();
                        g.push((block.clone(), piv));
                        g
                    })
                })
                .collect();
        }
        guesses.extend(acc);
    }
    guesses
}

/// Per-block totals `Σ_{i∈B} x_i − ℓ` for `0 ≤ ℓ ≤ sparse_cap`, clipped at 0,
/// crossed over blocks.
pub fn block_total_guesses(x: &[i64], blocks: &[Vec<usize>], sparse_cap: usize) -> Vec<Vec<i64>> {
    let per: Vec<Vec<i64>> = blocks
        .iter()
        .map(|b| {
            let s: i64 = b.iter().map(|&i| x[i]).sum();
            let mut c: Vec<i64> = (0..=sparse_cap as i64).map(|l| (s - l).max(0)).collect();
            c.dedup();
            c
        })
        .collect();
    let mut out: Vec<Vec<i64>> = vec![Vec::new()];
    for c in per {
        out = out.into_iter().flat_map(|g| c.iter().map(move |&v| [g.clone(), vec![v]].concat())).collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ParamMatrix;
    use crate::quadrature::std_normal_cdf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rotation(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    #[test]
    fn moments_of_small_samples() {
        let e = empirical_moments(&vec![vec![3, 1]; 5]).unwrap();
        assert_eq!(e.cov, DMatrix::zeros(2, 2));
        assert_eq!(e.mean, vec![3.0, 1.0]);
        let e = empirical_moments(&[vec![0, 2], vec![2, 6]]).unwrap();
        assert_eq!(e.cov, DMatrix::from_row_slice(2, 2, &[2.0, 4.0, 4.0, 8.0]));
        assert!(empirical_moments(&[vec![1]]).is_err());
    }

    #[test]
    fn binomial_moment_estimates() {
        let pm = ParamMatrix::repeated(&[0.3, 0.7], 100).unwrap();
        let s = crate::lattice::PmdSampler::new(&pm);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut good = 0;
        for _ in 0..200 {
            let xs: Vec<Point> = (0..10_000).map(|_| vec![s.sample(&mut rng)[0]]).collect();
            let e = empirical_moments(&xs).unwrap();
            if (e.mean[0] - 30.0).abs() <= 1.0 && (e.cov[(0, 0)] - 21.0).abs() <= 3.0 {
                good += 1;
            }
        }
        assert!(good >= 180, "{good}");
    }

    #[test]
    fn directional_checks() {
        let sigma = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let dirs = eigen_directions(&sigma).unwrap();
        assert_eq!(dirs.len(), 3);
        let est = EmpiricalMoments { m: 10, mean: vec![1.0, 2.0], cov: sigma.clone() };
        assert!(directional_error_check(&est, &[1.0, 2.0], &sigma, &dirs, 0.1).unwrap().passed());
        let eps = 0.1;
        let big = EmpiricalMoments { cov: &sigma * (1.0 + 2.0 * eps), ..est.clone() };
        let r = directional_error_check(&big, &[1.0, 2.0], &sigma, &dirs, eps).unwrap();
        assert!(r.cov_ok().iter().all(|&ok| !ok));
        // perturb eigenvalues by at most ε/2 relatively
        let (vals, vecs) = sym_eigen(&sigma);
        let pert = crate::linalg::compose(&[vals[0] * (1.0 + eps / 2.0), vals[1] * (1.0 - eps / 3.0)], &vecs);
        let near = EmpiricalMoments { cov: pert, ..est };
        assert!(directional_error_check(&near, &[1.0, 2.0], &sigma, &dirs, eps).unwrap().passed());
        assert!(directional_error_check(&near, &[1.0, 2.0], &(&sigma * 0.1), &dirs, eps).is_err());
    }

    #[test]
    fn eigen_candidate_grids() {
        let c = eigen_candidates(&[4.0], 0.0, 0.0, 0.1);
        assert!(c[0].iter().any(|&v| (v - 4.0).abs() < 1e-12));
        assert!(c[0].windows(2).all(|w| w[1] / w[0] <= 1.1 + 1e-12));
        let (e1, e2, eps) = (0.2, 2.0, 0.1);
        let mu = 6.0;
        let c = &eigen_candidates(&[mu], e1, e2, eps)[0];
        let steps = (8.0 * e2 + 1.0) * (3f64.ln() / 1.1f64.ln() + 2.0);
        assert!((c.len() as f64) <= steps);
        let mut l = ((1.0 - e1) * mu - e2).max(1.0);
        while l <= (1.0 + e1) * mu + e2 {
            assert!(c.iter().any(|&v| v / l <= 1.0 + eps && l / v <= 1.0 + eps), "{l}");
            l += 0.01;
        }
    }

    #[test]
    fn exact_cover_contains_reference() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.0]);
        let cover = psd_cover(&a, &PsdCoverSpec::new(0.0, 0.0, 0.1, 2).unwrap()).unwrap();
        let snapped = cover.snap(&a).unwrap();
        assert!(crate::linalg::max_abs_diff(&snapped, &a) < 1e-9);
        assert!(cover.len_bound() > 1);
    }

    #[test]
    fn rotated_target_is_covered() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = DMatrix::identity(2, 2);
        let spec = PsdCoverSpec::new(0.2, 0.1, 0.1, 2).unwrap();
        let cover = psd_cover(&a, &spec).unwrap();
        let r = rotation(0.4);
        let b = &r * DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.2])) * r.transpose();
        let dirs = sample_directions(&b, 1000, &mut rng);
        assert!(in_band(&a, &b, spec.eps1, spec.eps2, &dirs));
        let bhat = cover.snap(&b).unwrap();
        assert!(max_directional_ratio(&b, &bhat, &dirs) <= spec.eps);
        let (vals, _) = sym_eigen(&bhat);
        assert!(vals[0] >= 1.0 - 1e-9);
    }

    #[test]
    fn streamed_elements_are_psd_with_grid_eigenvalues() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]);
        let spec = PsdCoverSpec { eps1: 0.0, eps2: 0.0, eps: 0.3, eps_prime: 0.5 };
        let cover = psd_cover(&a, &spec).unwrap();
        let cands: Vec<f64> = cover.eigenvalue_candidates().concat();
        let mut seen = 0;
        for b in cover.iter().take(500) {
            assert!((&b - b.transpose()).abs().max() < 1e-12);
            let (vals, _) = sym_eigen(&b);
            for v in vals {
                assert!(cands.iter().any(|c| (c - v).abs() < 1e-9 * c));
            }
            seen += 1;
        }
        assert!(seen > 0);
        assert_eq!(cover.eigenvalue_subcover().len(), cover.eigenvalue_candidates().iter().map(|c| c.len()).product::<usize>());
    }

    #[test]
    fn drift_check() {
        let s = DMatrix::from_row_slice(2, 2, &[2000.0, 100.0, 100.0, 1500.0]);
        let eps = 0.1;
        let r = rounding_drift_check(&s, &s, eps).unwrap();
        assert_eq!(r.ratio, 0.0);
        let r = rounding_drift_check(&s, &(&s * (1.0 + 9.0 * eps)), eps).unwrap();
        assert!((r.ratio - 9.0 * eps).abs() < 1e-12);
        assert!(rounding_drift_check(&s, &s, 0.01).is_err());
    }

    #[test]
    fn rounded_gmd_covariance_drift() {
        use rand_distr::{Distribution, Gamma};
        let mut rng = ChaCha8Rng::seed_from_u64(500);
        let g = Gamma::new(0.5, 1.0).unwrap();
        let rows = (0..500).map(|_| (0..2).map(|_| g.sample(&mut rng) + 1e-300).collect()).collect();
        let pm = ParamMatrix::normalized(2, rows).unwrap();
        let r = crate::rounding::round_parameters(&pm, 0.01).unwrap();
        let (s1, s2) = (pm.to_gmd(1).covariance(), r.to_gmd(1).covariance());
        let tv = crate::lattice::tv_distance(
            &crate::lattice::pmd_pmf_exact(&pm).unwrap(),
            &crate::lattice::pmd_pmf_exact(&r).unwrap(),
        );
        let eps = tv.max(min_eigenvalue(&s1).powf(-1.0 / 3.0));
        let rep = rounding_drift_check(&s1, &s2, eps).unwrap();
        assert!(rep.pass, "{rep:?}");
        // measured ratio 0.00025 when frozen
        assert!(rep.ratio < 0.0004, "{}", rep.ratio);
    }

    #[test]
    fn gaussian_bound_basics() {
        let s = DMatrix::from_row_slice(1, 1, &[4.0]);
        assert_eq!(directional_gaussian_tv_bound(&[1.0], &s, &[1.0], &s).unwrap(), 0.0);
        let b1 = directional_gaussian_tv_bound(&[0.0], &s, &[0.2], &s).unwrap();
        let b2 = directional_gaussian_tv_bound(&[0.0], &s, &[0.4], &s).unwrap();
        assert!((b2 - 2.0 * b1).abs() < 1e-12);
    }

    #[test]
    fn gaussian_bound_dominates_1d_tv() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let (m1, v1) = (rng.random_range(-2.0..2.0), rng.random_range(1.0..9.0));
            let (m2, v2) = (m1 + rng.random_range(-0.5..0.5), v1 * rng.random_range(0.8..1.25));
            let bound =
                directional_gaussian_tv_bound(&[m1], &DMatrix::from_element(1, 1, v1), &[m2], &DMatrix::from_element(1, 1, v2))
                    .unwrap();
            let (s1, s2) = (v1.sqrt(), v2.sqrt());
            let mut f = |x: f64| {
                0.5 * (crate::quadrature::std_normal_pdf((x - m1) / s1) / s1
                    - crate::quadrature::std_normal_pdf((x - m2) / s2) / s2)
                    .abs()
            };
            let tv = crate::quadrature::integrate(&mut f, -40.0, 40.0, 1e-12);
            assert!(tv <= bound + 1e-9, "{tv} > {bound}");
        }
    }

    #[test]
    fn kolmogorov_gap_of_scaled_gaussians() {
        // sup_x Φ(x/(1−ε)) − Φ(x) behaves like ε·max_x xφ(x) ≈ 0.242ε, below ε/3 for small ε
        let dk = |eps: f64| {
            (0..4000).map(|i| i as f64 * 1e-3).map(|x| std_normal_cdf(x / (1.0 - eps)) - std_normal_cdf(x)).fold(0.0, f64::max)
        };
        for eps in [0.01, 0.05, 0.2, 0.5, 0.9] {
            assert!(dk(eps) >= 0.24 * eps, "{eps}");
        }
        assert!(dk(0.05) < 0.05 / 3.0);
        assert!(dk(0.5) < 0.5 / 3.0 && dk(0.9) >= 0.9 / 3.0);
    }

    #[test]
    fn structure_guesses() {
        assert_eq!(block_structure_guesses(1).len(), 1);
        assert_eq!(block_structure_guesses(2).len(), 3);
        let g3 = block_structure_guesses(3);
        assert_eq!(g3.len(), 10);
        assert!(g3.len() <= 27);
        for g in &g3 {
            let mut all: Vec<usize> = g.iter().flat_map(|(b, _)| b.clone()).collect();
            all.sort();
            assert_eq!(all, vec![0, 1, 2]);
            assert!(g.iter().all(|(b, p)| b.contains(p)));
        }
    }

    #[test]
    fn total_guesses() {
        let x = [3, 5, 1];
        let blocks = vec![vec![0, 1], vec![2]];
        assert_eq!(block_total_guesses(&x, &blocks, 0), vec![vec![8, 1]]);
        let g = block_total_guesses(&x, &blocks, 2);
        assert!(g.len() <= 9);
        assert!(g.contains(&vec![6, 0]));
        assert!(g.iter().all(|t| t.iter().all(|&v| v >= 0)));
    }

    #[test]
    fn mean_cover_contains_center_and_grids() {
        let cov = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let c = mean_cover(&[1.0, 2.0], &cov, 0.5, 1.0);
        assert!(c.iter().any(|m| (m[0] - 1.0).abs() < 1e-12 && (m[1] - 2.0).abs() < 1e-12));
        assert_eq!(c.len(), 9 * 5);
    }
}
