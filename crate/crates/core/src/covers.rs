//! Grid covers of sparse PMDs and block Gaussians, moment profiles, and the
//! Roos approximator behind the moment-matching cover.

use std::collections::{BTreeMap, HashSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::lattice::{Block, BlockGaussian, GmdParams, ParamMatrix, Point};
use crate::{Error, Result};

/// Compositions of `m` into `k` nonnegative parts, in lexicographic order.
fn compositions(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for a in 0..=left {
            cur.push(a);
            rec(left - a, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        rec(m, k, &mut Vec::new(), &mut out);
    }
    out
}

/// Rows of the parameter grid: every row whose entries are multiples of `1/⌈1/g⌉`.
pub fn grid_rows(k: usize, granularity: f64) -> Vec<Vec<f64>> {
    let m = (1.0 / granularity - 1e-9).ceil().max(1.0) as usize;
    compositions(m, k).into_iter().map(|c| c.into_iter().map(|a| a as f64 / m as f64).collect()).collect()
}

/// Lazy enumeration of the `n`-row multisets over a fixed list of rows.
#[derive(Debug, Clone)]
pub struct SparseGridCover {
    k: usize,
    rows: Vec<Vec<f64>>,
    idx: Vec<usize>,
    started: bool,
    done: bool,
}

impl SparseGridCover {
    /// Number of matrices the stream emits in total.
    pub fn total(&self) -> u128 {
        let r = self.rows.len() as u64;
        let n = self.idx.len() as u64;
        if r == 0 {
            return u128::from(n == 0);
        }
        crate::lattice::binomial(r + n - 1, n)
    }
}

impl Iterator for SparseGridCover {
    type Item = ParamMatrix;

    fn next(&mut self) -> Option<ParamMatrix> {
        if self.done {
            return None;
        }
        if self.started {
            let r = self.rows.len();
            match (0..self.idx.len()).rev().find(|&i| self.idx[i] + 1 < r) {
                None => {
                    self.done = true;
                    return None;
                }
                Some(i) => {
                    let v = self.idx[i] + 1;
                    for j in i..self.idx.len() {
                        self.idx[j] = v;
                    }
                }
            }
        }
        self.started = true;
        if self.rows.is_empty() && !self.idx.is_empty() {
            self.done = true;
            return None;
        }
        let rows = self.idx.iter().map(|&i| self.rows[i].clone()).collect();
        Some(ParamMatrix::new(self.k, rows).expect("grid rows are valid"))
    }
}

/// All `(n, k)` parameter matrices with entries on the grid of the given granularity,
/// each multiset of rows emitted once.
pub fn grid_cover_sparse_pmd(n: usize, k: usize, granularity: f64) -> Result<SparseGridCover> {
    if !(granularity > 0.0 && granularity <= 1.0) {
        return Err(Error::arg("granularity", format!("{granularity} outside (0, 1]")));
    }
    if k == 0 {
        return Err(Error::arg("k", "must be positive"));
    }
    Ok(SparseGridCover { k, rows: grid_rows(k, granularity), idx: vec![0; n], started: false, done: false })
}

/// Round a row to the grid, keeping every entry within one grid step.
pub fn snap_row(row: &[f64], granularity: f64) -> Vec<f64> {
    let m = (1.0 / granularity - 1e-9).ceil().max(1.0) as usize;
    let scaled: Vec<f64> = row.iter().map(|v| v * m as f64).collect();
    let mut parts: Vec<usize> = scaled.iter().map(|v| v.floor() as usize).collect();
    let short = m.saturating_sub(parts.iter().sum());
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| (scaled[b] - scaled[b].floor()).total_cmp(&(scaled[a] - scaled[a].floor())).then(a.cmp(&b)));
    for &j in order.iter().take(short) {
        parts[j] += 1;
    }
    parts.into_iter().map(|a| a as f64 / m as f64).collect()
}

/// The grid matrix obtained by snapping every row; it is an element of the grid cover.
pub fn nearest_grid_matrix(pm: &ParamMatrix, granularity: f64) -> Result<ParamMatrix> {
    let mut rows: Vec<Vec<f64>> = pm.rows().iter().map(|r| snap_row(r, granularity)).collect();
    rows.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    ParamMatrix::new(pm.k(), rows)
}

/// Grid resolutions for the Gaussian cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub param_granularity: f64,
    pub mean_cube: f64,
    pub chol_granularity: f64,
    pub total_min: i64,
    pub total_max: i64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("param_granularity", self.param_granularity),
            ("mean_cube", self.mean_cube),
            ("chol_granularity", self.chol_granularity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::arg(name, format!("{v} is not positive")));
            }
        }
        if self.total_min < 0 || self.total_max < self.total_min {
            return Err(Error::arg("totals", format!("bad range {}..={}", self.total_min, self.total_max)));
        }
        Ok(())
    }
}

/// Lazy enumeration of single-block Gaussians over all `k` coordinates, pivot `k−1`.
#[derive(Debug, Clone)]
pub struct GaussianGridCover {
    k: usize,
    totals: Vec<i64>,
    means: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
    radices: Vec<usize>,
    counter: Vec<usize>,
    done: bool,
}

impl GaussianGridCover {
    pub fn total(&self) -> u128 {
        self.radices.iter().try_fold(1u128, |acc, &r| acc.checked_mul(r as u128)).unwrap_or(u128::MAX)
    }

    fn current(&self) -> BlockGaussian {
        let d = self.k - 1;
        let total = self.totals[self.counter[0]];
        let mean: Vec<f64> = (0..d).map(|a| self.means[self.counter[1 + a]]).collect();
        let mut l = DMatrix::zeros(d, d);
        let mut c = 1 + d;
        for a in 0..d {
            l[(a, a)] = self.diag[self.counter[c]];
            c += 1;
        }
        for a in 0..d {
            for b in 0..a {
                l[(a, b)] = self.off[self.counter[c]];
                c += 1;
            }
        }
        let cov = &l * l.transpose();
        let block = Block::new((0..self.k).collect(), self.k - 1, total, mean, cov).expect("grid block is valid");
        BlockGaussian::new(self.k, vec![block]).expect("single block")
    }
}

impl Iterator for GaussianGridCover {
    type Item = BlockGaussian;

    fn next(&mut self) -> Option<BlockGaussian> {
        if self.done {
            return None;
        }
        let out = self.current();
        let mut i = self.radices.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            self.counter[i] += 1;
            if self.counter[i] < self.radices[i] {
                break;
            }
            self.counter[i] = 0;
        }
        Some(out)
    }
}

/// Grid over totals, means and Cholesky factors of a one-block Gaussian.
/// Diagonal factor entries run over `{g, 2g, …, Mg}` and off-diagonal ones over
/// `{−Mg, …, Mg}` with `M = ⌊√n / g⌋`; means run over multiples of the cube side in `[0, n]`.
pub fn grid_cover_gaussian(n: usize, k: usize, spec: &GridSpec) -> Result<GaussianGridCover> {
    spec.validate()?;
    if k == 0 {
        return Err(Error::arg("k", "must be positive"));
    }
    let nf = n as f64;
    let g = spec.chol_granularity;
    let mm = ((nf.sqrt() / g) + 1e-9).floor() as i64;
    let totals: Vec<i64> = (spec.total_min..=spec.total_max.min(n as i64)).collect();
    let means: Vec<f64> = (0..=((nf / spec.mean_cube) + 1e-9).floor() as i64).map(|i| i as f64 * spec.mean_cube).collect();
    let diag: Vec<f64> = (1..=mm).map(|i| i as f64 * g).collect();
    let off: Vec<f64> = (-mm..=mm).map(|i| i as f64 * g).collect();
    let d = k - 1;
    let mut radices = vec![totals.len()];
    radices.extend(std::iter::repeat_n(means.len(), d));
    radices.extend(std::iter::repeat_n(diag.len(), d));
    radices.extend(std::iter::repeat_n(off.len(), d * d.saturating_sub(1) / 2));
    let done = radices.contains(&0);
    Ok(GaussianGridCover { k, counter: vec![0; radices.len()], totals, means, diag, off, radices, done })
}

/// Multi-indices `u ∈ ℕ^d` with `|u| ≤ w`, ordered by degree then lexicographically.
pub fn multi_indices(d: usize, w: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for deg in 0..=w {
        if d == 0 {
            if deg == 0 {
                out.push(Vec::new());
            }
            continue;
        }
        let mut c = compositions(deg, d);
        c.reverse();
        out.extend(c);
    }
    out
}

/// How profile entries are quantized before comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantizer {
    /// Entries compared to 1e-9.
    Exact,
    /// Entries at degree `i` floored to multiples of `g^i`.
    Grid(f64),
}

impl Quantizer {
    fn apply(&self, v: f64, degree: usize) -> i64 {
        match *self {
            Quantizer::Exact => (v * 1e9).round() as i64,
            Quantizer::Grid(g) => (v / g.powi(degree as i32) + 1e-9).floor() as i64,
        }
    }
}

/// Power sums `Σ_i Π_j ρ(i,j)^{u_j}` for every `|u| ≤ w`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentProfile {
    pub order: usize,
    pub dims: usize,
    pub indices: Vec<Vec<usize>>,
    pub exact: Vec<f64>,
    pub quantized: Vec<i64>,
}

impl MomentProfile {
    pub fn entry(&self, u: &[usize]) -> Option<f64> {
        self.indices.iter().position(|v| v == u).map(|i| self.exact[i])
    }
}

pub fn moment_profile(g: &GmdParams, w: usize, quantizer: Quantizer) -> MomentProfile {
    let indices = multi_indices(g.dims(), w);
    let exact: Vec<f64> = indices
        .iter()
        .map(|u| g.rows().iter().map(|r| r.iter().zip(u).map(|(p, &e)| p.powi(e as i32)).product::<f64>()).sum())
        .collect();
    let quantized = indices.iter().zip(&exact).map(|(u, &v)| quantizer.apply(v, u.iter().sum())).collect();
    MomentProfile { order: w, dims: g.dims(), indices, exact, quantized }
}

/// Number of mean boxes per coordinate, `⌈4ek³⌉`.
pub fn mean_box_count(k: usize) -> usize {
    (4.0 * std::f64::consts::E * (k as f64).powi(3)).ceil() as usize
}

/// Box index of an entry: `v` with `p ∈ ((v−1)/B, v/B]`, zero in box 1.
pub fn mean_box(p: f64, boxes: usize) -> usize {
    ((p * boxes as f64 - 1e-9).ceil() as usize).clamp(1, boxes)
}

/// Group rows by the box vector of their entries.
pub fn group_by_mean_box(pm: &ParamMatrix) -> BTreeMap<Vec<usize>, Vec<usize>> {
    let b = mean_box_count(pm.k());
    let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (i, row) in pm.rows().iter().enumerate() {
        groups.entry(row.iter().map(|&p| mean_box(p, b)).collect()).or_default().push(i);
    }
    groups
}

/// Key identifying a matrix up to equal quantized profiles per mean-box group.
/// Each group's heaviest box coordinate plays the invisible role.
pub fn profile_signature(pm: &ParamMatrix, w: usize, quantizer: Quantizer) -> Vec<(Vec<usize>, Vec<i64>)> {
    group_by_mean_box(pm)
        .into_iter()
        .map(|(boxes, rows)| {
            let drop = crate::rounding::heaviest(&boxes.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let g = pm.select(&rows).to_gmd(drop);
            (boxes, moment_profile(&g, w, quantizer).quantized)
        })
        .collect()
}

/// Keep the first candidate of every profile signature.
pub fn moment_matching_cover(
    candidates: impl IntoIterator<Item = ParamMatrix>,
    w: usize,
    quantizer: Quantizer,
) -> Vec<ParamMatrix> {
    let mut seen = HashSet::new();
    candidates.into_iter().filter(|pm| seen.insert(profile_signature(pm, w, quantizer))).collect()
}

fn check_q(q: &[f64]) -> Result<f64> {
    if q.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::arg("q", "entries must be nonnegative"));
    }
    let q0 = 1.0 - q.iter().sum::<f64>();
    if q0 < -1e-12 {
        return Err(Error::arg("q", format!("entries sum to {} > 1", 1.0 - q0)));
    }
    Ok(q0.max(0.0))
}

fn multinomial_unchecked(n: i64, q: &[f64], q0: f64, x: &[i64]) -> f64 {
    if n < 0 || x.iter().any(|&v| v < 0) {
        return 0.0;
    }
    let x0 = n - x.iter().sum::<i64>();
    if x0 < 0 {
        return 0.0;
    }
    let mut ln = ln_gamma(n as f64 + 1.0);
    for (&c, &p) in x.iter().chain([x0].iter()).zip(q.iter().chain([q0].iter())) {
        if c == 0 {
            continue;
        }
        if p == 0.0 {
            return 0.0;
        }
        ln += c as f64 * p.ln() - ln_gamma(c as f64 + 1.0);
    }
    ln.exp()
}

/// Multinomial mass with visible probabilities `q` and invisible `q₀ = 1 − Σq`.
pub fn multinomial_pmf(n: usize, q: &[f64], x: &[i64]) -> Result<f64> {
    if x.len() != q.len() {
        return Err(Error::DimensionMismatch { expected: q.len(), got: x.len() });
    }
    let q0 = check_q(q)?;
    Ok(multinomial_unchecked(n as i64, q, q0, x))
}

/// Coefficients `a_u(q)` of `Π_i (1 + Σ_j (ρ(i,j) − q_j) z_j)` for `|u| ≤ w`.
pub fn roos_coefficients(rho: &GmdParams, q: &[f64], w: usize) -> Result<BTreeMap<Vec<usize>, f64>> {
    if q.len() != rho.dims() {
        return Err(Error::DimensionMismatch { expected: rho.dims(), got: q.len() });
    }
    check_q(q)?;
    let d = rho.dims();
    let mut poly: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    poly.insert(vec![0; d], 1.0);
    for row in rho.rows() {
        let mut next = poly.clone();
        for (u, &a) in &poly {
            if u.iter().sum::<usize>() == w {
                continue;
            }
            for j in 0..d {
                let c = row[j] - q[j];
                if c == 0.0 {
                    continue;
                }
                let mut v = u.clone();
                v[j] += 1;
                *next.entry(v).or_insert(0.0) += a * c;
            }
        }
        poly = next;
    }
    for u in multi_indices(d, w) {
        poly.entry(u).or_insert(0.0);
    }
    Ok(poly)
}

/// Direction of the finite difference `Δ_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DifferenceConvention {
    /// `h(x − e_j) − h(x)`: multiplication of the generating function by `z_j − 1`.
    Roos,
    /// `h(x) − h(x − e_j)`.
    Backward,
    /// `h(x + e_j) − h(x)`.
    Forward,
}

/// Truncated expansion of a GMD around a multinomial base.
#[derive(Debug, Clone)]
pub struct RoosApproximator {
    n: usize,
    q: Vec<f64>,
    q0: f64,
    coeffs: Vec<(Vec<usize>, f64)>,
    convention: DifferenceConvention,
}

impl RoosApproximator {
    pub fn new(rho: &GmdParams, q: &[f64], w: usize) -> Result<Self> {
        if w > rho.n() {
            return Err(Error::arg("w", format!("order {w} exceeds n = {}", rho.n())));
        }
        let q0 = check_q(q)?;
        let coeffs = roos_coefficients(rho, q, w)?.into_iter().filter(|(_, a)| *a != 0.0).collect();
        Ok(RoosApproximator { n: rho.n(), q: q.to_vec(), q0, coeffs, convention: DifferenceConvention::Roos })
    }

    pub fn with_convention(mut self, convention: DifferenceConvention) -> Self {
        self.convention = convention;
        self
    }

    fn roos_difference(&self, m: i64, u: &[usize], x: &[i64]) -> f64 {
        // Σ_{v ≤ u} Π_j C(u_j, v_j) (−1)^{u_j − v_j} M(m, q, x − v)
        let mut total = 0.0;
        let mut v = vec![0usize; u.len()];
        loop {
            let mut coef = 1.0;
            for (&uj, &vj) in u.iter().zip(&v) {
                coef *= crate::lattice::binomial(uj as u64, vj as u64) as f64;
                if (uj - vj) % 2 == 1 {
                    coef = -coef;
                }
            }
            let y: Point = x.iter().zip(&v).map(|(&a, &b)| a - b as i64).collect();
            total += coef * multinomial_unchecked(m, &self.q, self.q0, &y);
            let Some(j) = (0..u.len()).find(|&j| v[j] < u[j]) else { break };
            v[j] += 1;
            for vi in v.iter_mut().take(j) {
                *vi = 0;
            }
        }
        total
    }

    /// Signed approximator value at `x`.
    pub fn pmf(&self, x: &[i64]) -> f64 {
        self.coeffs
            .iter()
            .map(|(u, a)| {
                let deg: usize = u.iter().sum();
                let m = self.n as i64 - deg as i64;
                let sign = if deg % 2 == 1 { -1.0 } else { 1.0 };
                let h = match self.convention {
                    DifferenceConvention::Roos => self.roos_difference(m, u, x),
                    DifferenceConvention::Backward => sign * self.roos_difference(m, u, x),
                    DifferenceConvention::Forward => {
                        let shifted: Point = x.iter().zip(u).map(|(&a, &b)| a + b as i64).collect();
                        sign * self.roos_difference(m, u, &shifted)
                    }
                };
                a * h
            })
            .sum()
    }

    /// `Σ_x |M^ρ(x) − m(x)|` over the support of the GMD.
    pub fn l1_gap(&self, exact: &crate::lattice::SparsePmf) -> f64 {
        let d = self.q.len();
        let mut total = 0.0;
        for x in multi_indices(d, self.n) {
            let x: Point = x.into_iter().map(|v| v as i64).collect();
            total += (exact.prob(&x) - self.pmf(&x)).abs();
        }
        total
    }
}

pub fn roos_approximator_pmf(rho: &GmdParams, q: &[f64], w: usize, x: &[i64]) -> Result<f64> {
    Ok(RoosApproximator::new(rho, q, w)?.pmf(x))
}

/// Column means of the GMD parameters.
pub fn mean_matched_q(rho: &GmdParams) -> Vec<f64> {
    let n = rho.n().max(1) as f64;
    rho.mean().into_iter().map(|m| m / n).collect()
}

/// Convergence ratio of the expansion; the ℓ₁ tail after order `w` is at most `α^{w+1}/(1−α)`.
pub fn roos_alpha(rho: &GmdParams, q: &[f64]) -> Result<f64> {
    let q0 = check_q(q)?;
    if q0 <= 0.0 {
        return Err(Error::arg("q", "invisible probability q0 must be positive"));
    }
    let n = rho.n() as f64;
    let mut sum = 0.0;
    for (j, &qj) in q.iter().enumerate() {
        let sq: f64 = rho.rows().iter().map(|r| (r[j] - qj).powi(2)).sum();
        let lin: f64 = rho.rows().iter().map(|r| r[j] - qj).sum();
        let num = 2.0 * sq + lin * lin;
        if num == 0.0 {
            continue;
        }
        if qj == 0.0 {
            return Ok(f64::INFINITY);
        }
        sum += (num / (2.0 * n * q0 * qj)).sqrt();
    }
    Ok(0.5f64.exp() * sum)
}

/// The α of a mean-matched `q`, where the linear term vanishes.
pub fn roos_alpha_centered(rho: &GmdParams) -> Result<f64> {
    let q = mean_matched_q(rho);
    let q0 = check_q(&q)?;
    if q0 <= 0.0 {
        return Err(Error::arg("q", "invisible probability q0 must be positive"));
    }
    let n = rho.n() as f64;
    let mut sum = 0.0;
    for (j, &qj) in q.iter().enumerate() {
        let sq: f64 = rho.rows().iter().map(|r| (r[j] - qj).powi(2)).sum();
        if sq > 0.0 {
            sum += (sq / (n * q0 * qj)).sqrt();
        }
    }
    Ok(0.5f64.exp() * sum)
}

/// Desk-scale expansion order `min(n, ⌈k·log₂(1/ε)⌉)`.
pub fn desk_order(n: usize, k: usize, eps: f64) -> usize {
    n.min((k as f64 * (1.0 / eps).log2()).ceil().max(0.0) as usize)
}
