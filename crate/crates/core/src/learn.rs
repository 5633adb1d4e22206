//! End-to-end learners for PMDs and k-SIIRVs.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::function::erf::erf_inv;

use crate::covers::{grid_cover_sparse_pmd, grid_rows};
use crate::decomposition::extend_to_full_block;
use crate::estimation::{block_structure_guesses, block_total_guesses, empirical_moments, mean_cover, psd_cover, PsdCoverSpec};
use crate::lattice::{
    kolmogorov_distance_1d, siirv_pmf_exact, Block, BlockGaussian, DecompositionConfig, Hypothesis, ParamMatrix, Point,
    SiirvForm, SparsePmf, StructuralDecomposition,
};
use crate::linalg::{inv_sqrt, min_eigenvalue, sym_eigen, symmetrize};
use crate::selection::{fast_tournament, TournamentLog};
use crate::{Error, Result};

/// Additive slack on the estimated covariance when scoring moment consistency.
const SCORE_REGULARIZER: f64 = 0.25;

/// Budgets and cover granularities for the learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LearnConfig {
    pub eps: f64,
    pub delta: f64,
    /// Largest number of sparse rows guessed.
    pub sparse_cap: usize,
    /// Overrides the default moment sample count.
    pub moment_samples: Option<usize>,
    /// Grid granularity of sparse PMD candidates.
    pub sparse_granularity: f64,
    /// Ratio grid of the PSD eigenvalue candidates; defaults to `eps`.
    pub cover_eps: Option<f64>,
    /// Overrides the default SIIRV sample count.
    pub siirv_samples: Option<usize>,
    /// Grid granularity of sparse SIIRV summands.
    pub siirv_granularity: f64,
    /// Largest variance searched by the sparse SIIRV branch.
    pub siirv_variance_threshold: f64,
    pub shift_window: i64,
    /// Hypotheses kept for the tournament after ranking by moment consistency.
    pub max_hypotheses: usize,
    /// Accuracy of the selection tournaments; defaults to `eps/4`.
    pub tournament_eps: Option<f64>,
    /// Cap on assembled PMD combinations.
    pub max_assembled: u64,
    /// Disable moment pruning; every assembled combination enters the tournament.
    pub paranoid: bool,
    /// Seed for the hypothesis draws inside tournaments.
    pub seed: u64,
}

impl LearnConfig {
    pub fn desk(eps: f64, delta: f64) -> Self {
        LearnConfig {
            eps,
            delta,
            sparse_cap: 10,
            moment_samples: None,
            sparse_granularity: 0.5,
            cover_eps: None,
            siirv_samples: None,
            siirv_granularity: 0.5,
            siirv_variance_threshold: 16.0,
            shift_window: 50,
            max_hypotheses: 48,
            tournament_eps: None,
            max_assembled: 5_000_000,
            paranoid: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::arg("eps", format!("{} outside (0, 1)", self.eps)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::arg("delta", format!("{} outside (0, 1)", self.delta)));
        }
        if !(self.sparse_granularity > 0.0 && self.sparse_granularity <= 1.0) {
            return Err(Error::arg("sparse_granularity", "must lie in (0, 1]"));
        }
        if !(self.siirv_granularity > 0.0 && self.siirv_granularity <= 1.0) {
            return Err(Error::arg("siirv_granularity", "must lie in (0, 1]"));
        }
        if self.max_hypotheses == 0 {
            return Err(Error::arg("max_hypotheses", "must be positive"));
        }
        if self.cover_eps.is_some_and(|e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::arg("cover_eps", "must lie in (0, 1)"));
        }
        if self.tournament_eps.is_some_and(|e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::arg("tournament_eps", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `max(500, min(⌈40k⁴/ε²⌉, 10⁶))` unless overridden.
    pub fn moment_sample_count(&self, k: usize) -> usize {
        self.moment_samples.unwrap_or_else(|| {
            let raw = (40.0 * (k as f64).powi(4) / (self.eps * self.eps)).ceil();
            raw.clamp(500.0, 1e6) as usize
        })
    }

    /// `max(20000, ⌈16·ln(2/δ)/ε²⌉)` unless overridden.
    pub fn siirv_sample_count(&self) -> usize {
        self.siirv_samples.unwrap_or_else(|| {
            let raw = (16.0 * (2.0 / self.delta).ln() / (self.eps * self.eps)).ceil();
            raw.max(20000.0) as usize
        })
    }

    fn cover_eps(&self) -> f64 {
        self.cover_eps.unwrap_or(self.eps)
    }

    fn tournament_eps(&self) -> f64 {
        self.tournament_eps.unwrap_or(self.eps / 4.0)
    }
}

/// Asymptotic budgets, reported but never executed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryBudgets {
    pub moment_samples: f64,
    pub sparse_cap: f64,
    pub siirv_variance_threshold: f64,
}

pub fn theory_budgets(k: usize, eps: f64) -> TheoryBudgets {
    let kf = k as f64;
    TheoryBudgets {
        moment_samples: (40.0 * kf.powi(4) / (eps * eps)).ceil(),
        sparse_cap: DecompositionConfig::theory(k, eps).sparse_cap(k),
        siirv_variance_threshold: 15.0 * kf.powi(18) / eps.powi(6) * (1.0 / eps).ln().powi(2),
    }
}

/// Guess accounting for one block structure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureSummary {
    pub blocks: Vec<(Vec<usize>, usize)>,
    pub skipped: Option<String>,
    pub sparse_candidates: usize,
    pub total_guesses: usize,
    /// Sum over (sparse, totals) of the product of per-block cover sizes.
    pub assembled: u64,
    pub consistent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmdReport {
    pub k: usize,
    pub n: i64,
    pub first_sample: Point,
    pub moment_samples: usize,
    pub structures: Vec<StructureSummary>,
    pub assembled: u64,
    pub consistent: usize,
    pub entered: usize,
    pub rejected_unnormalized: usize,
    pub winner_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparseReport {
    pub mean: f64,
    pub variance: f64,
    pub shapes: usize,
    pub candidates: usize,
    pub entered: usize,
    pub shift: i64,
    pub tournament: TournamentLog,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeavyReport {
    pub scale: usize,
    pub mu: f64,
    pub sigma: f64,
    pub residue: Vec<f64>,
    /// Whether `σ̂ ≥ k/ε`; hypotheses failing it still compete.
    pub variance_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiirvReport {
    pub k: usize,
    pub samples: usize,
    pub sparse: SparseReport,
    pub heavy: Vec<HeavyReport>,
    /// 0 for the sparse branch, `ℓ` for the heavy branch with scale `ℓ`.
    pub winner_branch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnReport {
    Pmd(PmdReport),
    Siirv(SiirvReport),
}

/// A learned hypothesis, the report, and the final tournament log.
#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub hypothesis: Hypothesis,
    pub report: LearnReport,
    pub tournament: TournamentLog,
}

/// Empirical mean and covariance with the regularized whitening used for scoring.
struct MomentTarget {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl MomentTarget {
    /// `max(‖W(μ_H − μ̂)‖, ρ(W(Σ_H − Σ̂)W))` with `W = (AᵀΣ̂A + r·AᵀA)^{−1/2}`,
    /// restricted to the column span of `a`.
    fn score(&self, a: &DMatrix<f64>, mu: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        let at = a.transpose();
        let reg = symmetrize(&(&at * &self.cov * a + &at * a * SCORE_REGULARIZER));
        let w = inv_sqrt(&reg);
        let dm = &w * (&at * (mu - &self.mean));
        let dc = symmetrize(&(&w * (&at * (cov - &self.cov) * a) * &w));
        let (vals, _) = sym_eigen(&dc);
        let rho = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        dm.norm().max(rho)
    }
}

struct SparseCandidate {
    pm: ParamMatrix,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// Sparse PMD candidates with `m ≤ cap` rows, unit rows excluded: those are
/// absorbed by the block totals.
fn sparse_candidates(k: usize, cap: usize, granularity: f64) -> Result<Vec<SparseCandidate>> {
    let mut out = Vec::new();
    for m in 0..=cap {
        for pm in grid_cover_sparse_pmd(m, k, granularity)? {
            if pm.rows().iter().any(|r| r.contains(&1.0)) {
                continue;
            }
            let mean = DVector::from_vec(pm.mean());
            let cov = pm.covariance();
            out.push(SparseCandidate { pm, mean, cov });
        }
    }
    Ok(out)
}

/// One `(mean, covariance)` option for a block.
type BlockOption = (Vec<f64>, DMatrix<f64>);

/// `(mean, covariance)` options for one block's free coordinates.
fn block_options(
    free: &[usize],
    target: &MomentTarget,
    sparse: &SparseCandidate,
    eps: f64,
    cover_eps: f64,
) -> Result<Option<Vec<BlockOption>>> {
    let d = free.len();
    if d == 0 {
        return Ok(Some(vec![(Vec::new(), DMatrix::zeros(0, 0))]));
    }
    let sub = |m: &DMatrix<f64>| DMatrix::from_fn(d, d, |a, b| m[(free[a], free[b])]);
    let gauss = symmetrize(&(sub(&target.cov) - sub(&sparse.cov)));
    if min_eigenvalue(&gauss) < 1.0 {
        return Ok(None);
    }
    let spec = PsdCoverSpec::new((2.0 * eps).min(0.24), 0.0, cover_eps, d)?;
    let cover = psd_cover(&gauss, &spec)?;
    let center: Vec<f64> = free.iter().map(|&i| target.mean[i] - sparse.mean[i]).collect();
    let mut out = Vec::new();
    for cov in cover.eigenvalue_subcover() {
        let (vals, _) = sym_eigen(&cov);
        let radius = vals.last().copied().unwrap_or(1.0).sqrt() * eps / d as f64;
        for mean in mean_cover(&center, &cov, eps, radius) {
            out.push((mean, cov.clone()));
        }
    }
    Ok(Some(out))
}

fn indicator_basis(k: usize, blocks: &[Vec<usize>]) -> DMatrix<f64> {
    DMatrix::from_fn(k, blocks.len(), |i, b| if blocks[b].contains(&i) { 1.0 } else { 0.0 })
}

/// Sparse block sums that can occur: at least the rows confined to the block,
/// at most the rows touching it.
fn feasible_sums(pm: &ParamMatrix, blocks: &[Vec<usize>], ls: &[i64]) -> bool {
    blocks.iter().zip(ls).all(|(b, &l)| {
        let touching = pm.rows().iter().filter(|r| b.iter().any(|&i| r[i] > 0.0)).count() as i64;
        let inside = pm.rows().iter().filter(|r| r.iter().enumerate().all(|(i, &p)| p == 0.0 || b.contains(&i))).count() as i64;
        l >= inside && l <= touching
    })
}

struct Scored {
    score: f64,
    sd: StructuralDecomposition,
}

/// Learn a PMD from an oracle returning `k`-dimensional points that sum to a fixed `n`.
///
/// Guesses the block structure with pivots, the block totals from the first
/// draw, Gaussian moments from a PSD cover and a mean cover around the
/// empirical moments, and a sparse component from the grid cover; combinations
/// whose implied moments are inconsistent with the estimates are pruned and
/// the rest compete in a tournament.
pub fn learn_pmd(oracle: &mut dyn FnMut() -> Point, k: usize, cfg: &LearnConfig) -> Result<LearnOutcome> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::arg("k", "must be positive"));
    }
    let m = cfg.moment_sample_count(k);
    let samples: Vec<Point> = (0..m).map(|_| oracle()).collect();
    let x0 = samples[0].clone();
    if x0.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: x0.len() });
    }
    let n: i64 = x0.iter().sum();
    for x in &samples {
        if x.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: x.len() });
        }
        if x.iter().sum::<i64>() != n || x.iter().any(|&v| v < 0) {
            return Err(Error::Precondition(format!("oracle point {x:?} is not a composition of {n}")));
        }
    }
    let moments = empirical_moments(&samples)?;
    let target = MomentTarget { mean: DVector::from_vec(moments.mean.clone()), cov: moments.cov.clone() };
    let identity = DMatrix::identity(k, k);
    let threshold = 3.0 * cfg.eps;
    let cover_eps = cfg.cover_eps();
    let sparse = sparse_candidates(k, cfg.sparse_cap, cfg.sparse_granularity)?;

    let mut summaries = Vec::new();
    let mut kept: Vec<Scored> = Vec::new();
    let mut assembled_total: u64 = 0;
    for structure in block_structure_guesses(k) {
        let mut summary = StructureSummary {
            blocks: structure.clone(),
            skipped: None,
            sparse_candidates: 0,
            total_guesses: 0,
            assembled: 0,
            consistent: 0,
        };
        let coords: Vec<Vec<usize>> = structure.iter().map(|(b, _)| b.clone()).collect();
        let frees: Vec<Vec<usize>> = structure.iter().map(|(b, p)| b.iter().copied().filter(|c| c != p).collect()).collect();
        let singular = frees.iter().find(|f| {
            !f.is_empty() && min_eigenvalue(&DMatrix::from_fn(f.len(), f.len(), |a, b| target.cov[(f[a], f[b])])) < 1.0
        });
        if let Some(f) = singular {
            summary.skipped = Some(format!("empirical covariance on {f:?} has an eigenvalue below 1"));
            summaries.push(summary);
            continue;
        }
        let basis = indicator_basis(k, &coords);
        let sums: Vec<i64> = coords.iter().map(|b| b.iter().map(|&i| x0[i]).sum()).collect();
        for s in &sparse {
            let rows = s.pm.n();
            let mut options = Vec::with_capacity(structure.len());
            for free in &frees {
                match block_options(free, &target, s, cfg.eps, cover_eps)? {
                    Some(o) => options.push(o),
                    None => break,
                }
            }
            if options.len() < structure.len() {
                continue;
            }
            summary.sparse_candidates += 1;
            let per: u64 = options.iter().map(|o| o.len() as u64).product();
            for ls in block_total_guesses(&x0, &coords, rows) {
                let ls: Vec<i64> = sums.iter().zip(&ls).map(|(s, t)| s - t).collect();
                if ls.iter().sum::<i64>() != rows as i64 || !feasible_sums(&s.pm, &coords, &ls) {
                    continue;
                }
                summary.total_guesses += 1;
                summary.assembled += per;
                assembled_total += per;
                if assembled_total > cfg.max_assembled {
                    return Err(Error::CoverCapExceeded { count: assembled_total as u128, cap: cfg.max_assembled as u128 });
                }
                let totals: Vec<i64> = sums.iter().zip(&ls).map(|(s, l)| s - l).collect();
                if totals.iter().any(|&t| t < 0) {
                    continue;
                }
                // block sums of the Gaussian part are fixed, so the sparse part alone
                // must explain the spread of block sums
                let mu_sum = DVector::from_fn(k, |i, _| {
                    let b = coords.iter().position(|c| c.contains(&i)).unwrap();
                    if i == structure[b].1 {
                        totals[b] as f64 - frees[b].iter().map(|&f| target.mean[f] - s.mean[f]).sum::<f64>()
                    } else {
                        target.mean[i] - s.mean[i]
                    }
                }) + &s.mean;
                if !cfg.paranoid && target.score(&basis, &mu_sum, &s.cov) > threshold {
                    continue;
                }
                let mut idx = vec![0usize; options.len()];
                loop {
                    let blocks: Vec<Block> = structure
                        .iter()
                        .enumerate()
                        .map(|(b, (c, p))| {
                            let (mean, cov) = &options[b][idx[b]];
                            Block::new(c.clone(), *p, totals[b], mean.clone(), cov.clone())
                        })
                        .collect::<Result<_>>()?;
                    let mut mu = s.mean.clone();
                    let mut cov = s.cov.clone();
                    for b in &blocks {
                        for (&c, v) in b.coords().iter().zip(b.full_mean()) {
                            mu[c] += v;
                        }
                        cov += extend_to_full_block(b).embed(k);
                    }
                    let score = target.score(&identity, &mu, &cov);
                    if cfg.paranoid || score <= threshold {
                        summary.consistent += 1;
                        let sd = StructuralDecomposition::new(BlockGaussian::new(k, blocks)?, s.pm.clone())?;
                        kept.push(Scored { score, sd });
                    }
                    let Some(p) = (0..idx.len()).find(|&p| idx[p] + 1 < options[p].len()) else { break };
                    idx[p] += 1;
                    for q in idx.iter_mut().take(p) {
                        *q = 0;
                    }
                }
            }
        }
        summaries.push(summary);
    }

    let consistent = kept.len();
    if !cfg.paranoid {
        // stable: equal scores keep assembly order
        kept.sort_by(|a, b| a.score.total_cmp(&b.score));
        kept.truncate(cfg.max_hypotheses);
    }
    let mut hypotheses = Vec::with_capacity(kept.len());
    let mut scores = Vec::with_capacity(kept.len());
    let mut rejected = 0;
    for s in kept {
        let h = Hypothesis::decomposition(s.sd)?;
        if h.check_normalized().is_err() {
            rejected += 1;
            continue;
        }
        hypotheses.push(h);
        scores.push(s.score);
    }
    if hypotheses.is_empty() {
        return Err(Error::Precondition("no consistent hypothesis was assembled".into()));
    }
    let teps = cfg.tournament_eps();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let budget = crate::selection::tournament_budget(hypotheses.len(), teps, cfg.delta);
    let xs: Vec<Point> = if hypotheses.len() > 1 { (0..budget).map(|_| oracle()).collect() } else { Vec::new() };
    let t = fast_tournament(&xs, &hypotheses, teps, cfg.delta, &mut rng)?;
    let report = PmdReport {
        k,
        n,
        first_sample: x0,
        moment_samples: m,
        structures: summaries,
        assembled: assembled_total,
        consistent,
        entered: hypotheses.len(),
        rejected_unnormalized: rejected,
        winner_score: scores[t.winner],
    };
    let hypothesis = hypotheses.swap_remove(t.winner);
    Ok(LearnOutcome { hypothesis, report: LearnReport::Pmd(report), tournament: t.log })
}

/// `(median, IQR/(2√2·erf⁻¹(½)))` with linearly interpolated order statistics.
pub fn median_iqr_fit(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 4 {
        return Err(Error::arg("samples", format!("need at least 4 samples, got {}", samples.len())));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("samples", "samples must be finite"));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (s.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    };
    Ok((q(0.5), (q(0.75) - q(0.25)) / iqr_scale()))
}

/// `2√2·erf⁻¹(½) ≈ 1.34898`, the IQR of a standard normal.
pub fn iqr_scale() -> f64 {
    2.0 * std::f64::consts::SQRT_2 * erf_inv(0.5)
}

/// Median/IQR fit of a rounded Gaussian from integer samples: each integer `z`
/// spreads its mass uniformly over `[z−½, z+½]`, and the uniform's variance
/// `1/12` is removed from the fitted variance.
pub fn median_iqr_fit_lattice(samples: &[i64]) -> Result<(f64, f64)> {
    if samples.len() < 4 {
        return Err(Error::arg("samples", format!("need at least 4 samples, got {}", samples.len())));
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in samples {
        *counts.entry(v).or_default() += 1;
    }
    let m = samples.len() as f64;
    let q = |p: f64| {
        let mut below = 0.0;
        for (&z, &c) in &counts {
            let mass = c as f64 / m;
            if below + mass >= p {
                return z as f64 - 0.5 + (p - below) / mass;
            }
            below += mass;
        }
        *counts.keys().next_back().unwrap() as f64 + 0.5
    };
    let sigma = (q(0.75) - q(0.25)) / iqr_scale();
    Ok((q(0.5), (sigma * sigma - 1.0 / 12.0).max(0.0).sqrt()))
}

/// Kolmogorov distance between the empirical law of `samples` and a 1-D reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DkwReport {
    pub m: usize,
    pub d_k: f64,
    pub eps: f64,
    /// `2·exp(−2mε²)`, the chance that an honest sample exceeds `eps`.
    pub tail_bound: f64,
    pub delta: f64,
    pub pass: bool,
}

pub fn empirical_pmf(samples: &[i64]) -> Result<SparsePmf> {
    let w = 1.0 / samples.len() as f64;
    SparsePmf::from_weights(1, samples.iter().map(|&v| (vec![v], w)))
}

pub fn empirical_cdf_check(samples: &[i64], reference: &SparsePmf, eps: f64, delta: f64) -> Result<DkwReport> {
    if samples.is_empty() {
        return Err(Error::arg("samples", "need at least one sample"));
    }
    if reference.dims() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: reference.dims() });
    }
    let d_k = kolmogorov_distance_1d(&empirical_pmf(samples)?, reference);
    let m = samples.len();
    Ok(DkwReport { m, d_k, eps, tail_bound: 2.0 * (-2.0 * m as f64 * eps * eps).exp(), delta, pass: d_k <= eps })
}

fn mean_var(samples: &[i64]) -> (f64, f64) {
    let m = samples.len() as f64;
    let mean = samples.iter().map(|&v| v as f64).sum::<f64>() / m;
    let var = samples.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    (mean, var)
}

fn to_points(samples: &[i64]) -> Vec<Point> {
    samples.iter().map(|&v| vec![v]).collect()
}

/// Shifted sparse SIIRVs. Candidate shapes sum a few summands from the value
/// grid over `{0, …, k−1}` (deterministic summands only shift, so they are left
/// to the shift search) with variance near the empirical one, capped at the
/// configured threshold. Each shape is tried at the shifts within
/// `±shift_window` of the empirical mean that put its mean close to it; a
/// tournament selects.
pub fn learn_sparse(samples: &[i64], k: usize, cfg: &LearnConfig) -> Result<(Hypothesis, SparseReport)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::arg("samples", "need at least one sample"));
    }
    if k < 2 {
        return Err(Error::arg("k", "need k ≥ 2"));
    }
    let (mean, var) = mean_var(samples);
    let m = samples.len() as f64;
    let tau = cfg.eps.max(4.0 * (2.0 / m).sqrt());
    let thr = cfg.siirv_variance_threshold;
    let (lo, hi) = if var <= thr {
        (var * (1.0 - tau) - 0.25, var * (1.0 + tau) + 0.25)
    } else {
        (thr * (1.0 - tau) - 0.25, thr * (1.0 + tau) + 0.25)
    };

    let types: Vec<(Vec<f64>, f64)> = grid_rows(k, cfg.siirv_granularity)
        .into_iter()
        .filter(|r| r.iter().filter(|&&p| p > 0.0).count() > 1)
        .map(|r| {
            let mu: f64 = r.iter().enumerate().map(|(j, p)| j as f64 * p).sum();
            let v = r.iter().enumerate().map(|(j, p)| p * (j as f64 - mu).powi(2)).sum();
            (r, v)
        })
        .collect();

    // count vectors over the summand types with total variance in [lo, hi]
    let mut shapes: BTreeMap<Vec<i64>, SparsePmf> = BTreeMap::new();
    let mut counts = vec![0usize; types.len()];
    fn rec(
        t: usize,
        budget: f64,
        lo: f64,
        hi: f64,
        types: &[(Vec<f64>, f64)],
        counts: &mut Vec<usize>,
        emit: &mut dyn FnMut(&[usize]) -> Result<()>,
    ) -> Result<()> {
        if t == types.len() {
            if hi - budget >= lo {
                emit(counts)?;
            }
            return Ok(());
        }
        let v = types[t].1;
        let mut c = 0;
        loop {
            let used = c as f64 * v;
            if used > budget + 1e-12 {
                break;
            }
            counts[t] = c;
            rec(t + 1, budget - used, lo, hi, types, counts, emit)?;
            c += 1;
        }
        counts[t] = 0;
        Ok(())
    }
    let mut emit = |c: &[usize]| -> Result<()> {
        let rows: Vec<Vec<f64>> = c.iter().zip(&types).flat_map(|(&n, (r, _))| std::iter::repeat_n(r.clone(), n)).collect();
        let pmf = if rows.is_empty() { SparsePmf::point_mass(vec![0]) } else { siirv_pmf_exact(&ParamMatrix::new(k, rows)?)? };
        let base = pmf.iter().next().map(|(x, _)| x[0]).unwrap_or(0);
        let shape = pmf.map_points(1, |x| vec![x[0] - base]);
        let key: Vec<i64> = shape.iter().map(|(x, p)| x[0] * 1_000_003 + (p * 1e12).round() as i64).collect();
        shapes.entry(key).or_insert(shape);
        Ok(())
    };
    rec(0, hi, lo, hi, &types, &mut counts, &mut emit)?;

    let center = mean.round() as i64;
    let slack = 1.0 + 3.0 * (var / m).sqrt();
    let mut cands: Vec<(f64, i64, SparsePmf)> = Vec::new();
    for shape in shapes.values() {
        let mu = shape.mean()[0];
        let v: f64 = shape.iter().map(|(x, p)| p * (x[0] as f64 - mu).powi(2)).sum();
        let first = (mean - mu - slack).ceil() as i64;
        let last = (mean - mu + slack).floor() as i64;
        for c in first..=last {
            if (c - center).abs() > cfg.shift_window {
                continue;
            }
            let score = (c as f64 + mu - mean).abs() / (var + 1.0).sqrt() + (v - var).abs() / (var + 1.0);
            cands.push((score, c, shape.clone()));
        }
    }
    if cands.is_empty() {
        // nothing lands near the empirical mean: fall back to the point mass at it
        cands.push((f64::INFINITY, center, SparsePmf::point_mass(vec![0])));
    }
    let total = cands.len();
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cands.truncate(cfg.max_hypotheses);
    let shifts: Vec<i64> = cands.iter().map(|c| c.1).collect();
    let hyps: Vec<Hypothesis> =
        cands.into_iter().map(|(_, c, s)| Hypothesis::Tabulated(s.map_points(1, |x| vec![x[0] + c]))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5a5e);
    let t = fast_tournament(&to_points(samples), &hyps, cfg.tournament_eps(), cfg.delta, &mut rng)?;
    let report = SparseReport {
        mean,
        variance: var,
        shapes: shapes.len(),
        candidates: total,
        entered: hyps.len(),
        shift: shifts[t.winner],
        tournament: t.log,
    };
    Ok((hyps.into_iter().nth(t.winner).unwrap(), report))
}

/// `ℓ·⌊N(μ̂, σ̂²)⌉ + Y`: the residue law is the empirical law of the samples mod
/// `ℓ`, and `(μ̂, σ̂)` fit `⌊v/ℓ⌋` by median and interquartile range.
pub fn learn_heavy(samples: &[i64], scale: usize, k: usize, cfg: &LearnConfig) -> Result<(Hypothesis, HeavyReport)> {
    if scale == 0 || scale >= k.max(2) {
        return Err(Error::arg("scale", format!("ℓ = {scale} outside [1, k−1] for k = {k}")));
    }
    let l = scale as i64;
    let m = samples.len() as f64;
    let mut residue = vec![0.0; scale];
    for &v in samples {
        residue[v.rem_euclid(l) as usize] += 1.0 / m;
    }
    let s: f64 = residue.iter().sum();
    residue.iter_mut().for_each(|p| *p /= s);
    let z: Vec<i64> = samples.iter().map(|&v| v.div_euclid(l)).collect();
    let (mu, sigma) = median_iqr_fit_lattice(&z)?;
    let form = SiirvForm::new(scale, mu, sigma * sigma, residue.clone())?;
    let report = HeavyReport { scale, mu, sigma, residue, variance_ok: sigma >= k as f64 / cfg.eps };
    Ok((Hypothesis::Siirv(form), report))
}

/// Learn a `k`-SIIRV: the sparse branch once, the heavy branch for every
/// `ℓ ∈ 1..k`, then a tournament among the `k` results.
pub fn learn_siirv(oracle: &mut dyn FnMut() -> i64, k: usize, cfg: &LearnConfig) -> Result<LearnOutcome> {
    cfg.validate()?;
    if k < 2 {
        return Err(Error::arg("k", "need k ≥ 2"));
    }
    let m = cfg.siirv_sample_count();
    let sparse_samples: Vec<i64> = (0..m).map(|_| oracle()).collect();
    let heavy_samples: Vec<i64> = (0..m).map(|_| oracle()).collect();
    let (hs, sparse) = learn_sparse(&sparse_samples, k, cfg)?;
    let mut hyps = vec![hs];
    let mut heavy = Vec::new();
    for l in 1..k {
        let (h, r) = learn_heavy(&heavy_samples, l, k, cfg)?;
        hyps.push(h);
        heavy.push(r);
    }
    let teps = cfg.tournament_eps();
    let budget = crate::selection::tournament_budget(hyps.len(), teps, cfg.delta);
    let xs: Vec<Point> = (0..budget).map(|_| vec![oracle()]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let t = fast_tournament(&xs, &hyps, teps, cfg.delta, &mut rng)?;
    let report = SiirvReport { k, samples: 2 * m + budget, sparse, heavy, winner_branch: t.winner };
    let hypothesis = hyps.swap_remove(t.winner);
    Ok(LearnOutcome { hypothesis, report: LearnReport::Siirv(report), tournament: t.log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{pmd_pmf_exact, tv_distance, PmdSampler};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn pmd_oracle(pm: &ParamMatrix, seed: u64) -> impl FnMut() -> Point {
        let s = PmdSampler::new(pm);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        move || s.sample(&mut rng)
    }

    fn siirv_oracle(pm: &ParamMatrix, seed: u64) -> impl FnMut() -> i64 {
        let s = PmdSampler::new(pm);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        move || s.sample_siirv(&mut rng)
    }

    #[test]
    fn median_iqr_basics() {
        assert_eq!(median_iqr_fit(&[-1.0, 0.0, 0.0, 1.0]).unwrap().0, 0.0);
        assert!(median_iqr_fit(&[1.0, 2.0, 3.0]).is_err());
        assert!((iqr_scale() - 1.34898).abs() < 1e-5);
        let s = [0.3, -1.2, 2.5, 0.7, 0.1, -0.4, 1.9];
        let (mu, sigma) = median_iqr_fit(&s).unwrap();
        for (a, b) in [(2.0, 3.0), (-1.0, 0.0), (-4.0, 0.5)] {
            let t: Vec<f64> = s.iter().map(|v| a * v + b).collect();
            let (m2, s2) = median_iqr_fit(&t).unwrap();
            assert_eq!(m2, a * mu + b);
            assert!((s2 - a.abs() * sigma).abs() <= 1e-15 * s2.abs().max(1.0));
        }
    }

    #[test]
    fn median_iqr_normal_accuracy() {
        let mut ok = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
            let (mu, sigma) = median_iqr_fit(&s).unwrap();
            if mu.abs() <= 0.02 && (sigma - 1.0).abs() <= 0.02 {
                ok += 1;
            }
        }
        assert!(ok >= 19, "{ok}");
    }

    #[test]
    fn lattice_fit_of_rounded_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z: Vec<i64> = (0..200_000).map(|_| (3.3 + 2.0 * rng.sample::<f64, _>(StandardNormal)).round() as i64).collect();
        let (mu, sigma) = median_iqr_fit_lattice(&z).unwrap();
        assert!((mu - 3.3).abs() < 0.02, "{mu}");
        assert!((sigma - 2.0).abs() < 0.03, "{sigma}");
    }

    #[test]
    fn dkw_check() {
        let pm = ParamMatrix::repeated(&[0.6, 0.4], 30).unwrap();
        let truth = siirv_pmf_exact(&pm).unwrap();
        let s: Vec<i64> = {
            let mut o = siirv_oracle(&pm, 3);
            (0..500).map(|_| o()).collect()
        };
        assert_eq!(empirical_cdf_check(&s, &empirical_pmf(&s).unwrap(), 0.01, 0.1).unwrap().d_k, 0.0);
        let r = empirical_cdf_check(&s, &truth, 0.1, 0.1).unwrap();
        assert!(r.pass && r.d_k > 0.0);
        let far = truth.map_points(1, |x| vec![x[0] + 1000]);
        assert!(empirical_cdf_check(&s, &far, 0.1, 0.1).unwrap().d_k > 0.99);
    }

    #[test]
    fn deterministic_pmd_is_recovered() {
        let pm = ParamMatrix::new(3, vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let mut o = pmd_oracle(&pm, 1);
        let out = learn_pmd(&mut o, 3, &LearnConfig::desk(0.1, 0.1)).unwrap();
        let tv = tv_distance(&out.hypothesis.tabulate().unwrap(), &pmd_pmf_exact(&pm).unwrap());
        assert!(tv < 1e-9, "{tv}");
    }

    #[test]
    fn binomial_pmd_is_learned_and_accounted() {
        let pm = ParamMatrix::repeated(&[0.5, 0.5], 200).unwrap();
        let truth = pmd_pmf_exact(&pm).unwrap();
        let mut cfg = LearnConfig::desk(0.1, 0.1);
        cfg.seed = 5;
        let mut o = pmd_oracle(&pm, 5);
        let out = learn_pmd(&mut o, 2, &cfg).unwrap();
        let tv = tv_distance(&out.hypothesis.tabulate().unwrap(), &truth);
        assert!(tv <= 0.15, "{tv}");
        let LearnReport::Pmd(r) = &out.report else { panic!() };
        assert_eq!(r.assembled, r.structures.iter().map(|s| s.assembled).sum::<u64>());
        assert_eq!(r.structures.len(), 3);
        assert!(r.entered <= cfg.max_hypotheses);
        let mut o = pmd_oracle(&pm, 5);
        let again = learn_pmd(&mut o, 2, &cfg).unwrap();
        assert_eq!(again.tournament, out.tournament);
    }

    #[test]
    fn sparse_branch_shift_and_constant() {
        let mut rows = vec![vec![0.5, 0.5]; 30];
        rows.extend(vec![vec![0.0, 1.0]; 1000]);
        let pm = ParamMatrix::new(2, rows).unwrap();
        let truth = siirv_pmf_exact(&pm).unwrap();
        let mut o = siirv_oracle(&pm, 8);
        let s: Vec<i64> = (0..20_000).map(|_| o()).collect();
        let cfg = LearnConfig::desk(0.1, 0.1);
        let (h, r) = learn_sparse(&s, 2, &cfg).unwrap();
        assert!((r.shift - 1000).abs() <= cfg.shift_window);
        let tv = tv_distance(&h.tabulate().unwrap(), &truth);
        assert!(tv <= 0.15, "{tv}");
        let (h, _) = learn_sparse(&[7; 100], 3, &cfg).unwrap();
        assert_eq!(h.tabulate().unwrap(), SparsePmf::point_mass(vec![7]));
    }

    #[test]
    fn heavy_branch_residues() {
        let (h, r) = learn_heavy(&[2, 4, 4, 6, 8, 10], 2, 3, &LearnConfig::desk(0.1, 0.1)).unwrap();
        assert_eq!(r.residue, vec![1.0, 0.0]);
        assert_eq!(h.kind(), "siirv");
        let (_, r) = learn_heavy(&[1, 2, 3, 4], 1, 3, &LearnConfig::desk(0.1, 0.1)).unwrap();
        assert_eq!(r.residue, vec![1.0]);
        assert!(learn_heavy(&[1, 2, 3, 4], 3, 3, &LearnConfig::desk(0.1, 0.1)).is_err());
    }

    #[test]
    fn mod_structure_siirv() {
        let mut rows = vec![vec![0.5, 0.0, 0.5]; 400];
        rows.push(vec![2.0 / 3.0, 1.0 / 3.0, 0.0]);
        let pm = ParamMatrix::new(3, rows).unwrap();
        let truth = siirv_pmf_exact(&pm).unwrap();
        let mut cfg = LearnConfig::desk(0.1, 0.1);
        cfg.seed = 2;
        let mut o = siirv_oracle(&pm, 2);
        let out = learn_siirv(&mut o, 3, &cfg).unwrap();
        let LearnReport::Siirv(r) = &out.report else { panic!() };
        let res = &r.heavy[1].residue;
        assert!(0.5 * ((res[0] - 2.0 / 3.0).abs() + (res[1] - 1.0 / 3.0).abs()) <= 0.05);
        assert_eq!(r.winner_branch, 2);
        let tv = tv_distance(&out.hypothesis.tabulate().unwrap(), &truth);
        assert!(tv <= 0.15, "{tv}");
    }
}
