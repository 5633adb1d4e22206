use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_schema, convolve, pmd_pmf_exact, DiscretizedGaussian, ParamMatrix, PmdSampler, Point, SparsePmf, SCHEMA};
use crate::linalg::{min_eigenvalue, symmetrize};
use crate::{Error, Result};

/// One block of a block Gaussian: a coordinate set with a pivot whose value is
/// the block total minus the rounded values of the other coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    coords: Vec<usize>,
    pivot: usize,
    total: i64,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct BlockJson {
    coords: Vec<usize>,
    pivot: usize,
    total: i64,
    mean: Vec<f64>,
    cov: Vec<f64>,
}

impl Block {
    /// `mean` and `cov` are indexed by the non-pivot coordinates in ascending order.
    pub fn new(mut coords: Vec<usize>, pivot: usize, total: i64, mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        coords.sort_unstable();
        coords.dedup();
        if !coords.contains(&pivot) {
            return Err(Error::arg("pivot", format!("pivot {pivot} not in block {coords:?}")));
        }
        if total < 0 {
            return Err(Error::arg("total", format!("block total {total} is negative")));
        }
        let d = coords.len() - 1;
        if mean.len() != d || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: mean.len() });
        }
        let cov = symmetrize(&cov);
        if d > 0 {
            let m = min_eigenvalue(&cov);
            if m < -1e-9 {
                return Err(Error::arg("cov", format!("covariance not PSD (min eigenvalue {m:e})")));
            }
        }
        Ok(Block { coords, pivot, total, mean, cov })
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    pub fn pivot(&self) -> usize {
        self.pivot
    }

    pub fn total(&self) -> i64 {
        self.total
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Non-pivot coordinates, ascending.
    pub fn free(&self) -> Vec<usize> {
        self.coords.iter().copied().filter(|&c| c != self.pivot).collect()
    }

    /// Mean over every coordinate of the block, the pivot included.
    pub fn full_mean(&self) -> Vec<f64> {
        let s: f64 = self.mean.iter().sum();
        let mut it = self.mean.iter();
        self.coords.iter().map(|&c| if c == self.pivot { self.total as f64 - s } else { *it.next().unwrap() }).collect()
    }

    fn to_json(&self) -> BlockJson {
        let d = self.mean.len();
        let cov = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| self.cov[(i, j)]).collect();
        BlockJson { coords: self.coords.clone(), pivot: self.pivot, total: self.total, mean: self.mean.clone(), cov }
    }

    fn from_json(j: BlockJson) -> Result<Self> {
        let d = j.mean.len();
        if j.cov.len() != d * d {
            return Err(Error::Parse(format!("block covariance has {} entries, expected {}", j.cov.len(), d * d)));
        }
        Block::new(j.coords, j.pivot, j.total, j.mean, DMatrix::from_row_slice(d, d, &j.cov))
    }
}

/// Independent blocks over disjoint coordinate sets of `[k]`; uncovered coordinates are 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "BlockGaussianJson", into = "BlockGaussianJson")]
pub struct BlockGaussian {
    k: usize,
    blocks: Vec<Block>,
    evals: Vec<std::result::Result<DiscretizedGaussian, f64>>,
}

impl PartialEq for BlockGaussian {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.blocks == other.blocks
    }
}

#[derive(Serialize, Deserialize)]
struct BlockGaussianJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema: Option<String>,
    k: usize,
    blocks: Vec<BlockJson>,
}

impl TryFrom<BlockGaussianJson> for BlockGaussian {
    type Error = Error;
    fn try_from(j: BlockGaussianJson) -> Result<Self> {
        check_schema(&j.schema)?;
        let blocks = j.blocks.into_iter().map(Block::from_json).collect::<Result<_>>()?;
        BlockGaussian::new(j.k, blocks)
    }
}

impl From<BlockGaussian> for BlockGaussianJson {
    fn from(b: BlockGaussian) -> Self {
        BlockGaussianJson { schema: Some(SCHEMA.into()), k: b.k, blocks: b.blocks.iter().map(Block::to_json).collect() }
    }
}

impl BlockGaussian {
    pub fn new(k: usize, blocks: Vec<Block>) -> Result<Self> {
        let mut seen = vec![false; k];
        for b in &blocks {
            for &c in &b.coords {
                if c >= k {
                    return Err(Error::arg("coords", format!("coordinate {c} outside [0, {k})")));
                }
                if seen[c] {
                    return Err(Error::arg("coords", format!("coordinate {c} appears in two blocks")));
                }
                seen[c] = true;
            }
        }
        let evals = blocks
            .iter()
            .map(|b| {
                DiscretizedGaussian::reduced(&b.mean, &b.cov).map_err(|e| match e {
                    Error::SingularCovariance { min_eig, .. } => min_eig,
                    _ => f64::NAN,
                })
            })
            .collect();
        Ok(BlockGaussian { k, blocks, evals })
    }

    pub fn empty(k: usize) -> Self {
        BlockGaussian { k, blocks: Vec::new(), evals: Vec::new() }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Block> {
        self.blocks
    }

    /// Whether every block has a usable (non-singular after reduction) covariance.
    pub fn is_evaluable(&self) -> bool {
        self.evals.iter().all(|e| e.is_ok())
    }

    fn eval(&self, i: usize) -> Result<&DiscretizedGaussian> {
        self.evals[i].as_ref().map_err(|&m| Error::SingularCovariance { min_eig: m, floor: super::EIGEN_FLOOR })
    }

    /// Mean over all `k` coordinates.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.k];
        for b in &self.blocks {
            for (c, v) in b.coords.iter().zip(b.full_mean()) {
                m[*c] = v;
            }
        }
        m
    }

    pub fn pmf(&self, x: &[i64]) -> Result<f64> {
        if x.len() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, got: x.len() });
        }
        let mut covered = vec![false; self.k];
        for b in &self.blocks {
            let s: i64 = b.coords.iter().map(|&c| x[c]).sum();
            if s != b.total {
                return Ok(0.0);
            }
            for &c in &b.coords {
                covered[c] = true;
            }
        }
        if (0..self.k).any(|c| !covered[c] && x[c] != 0) {
            return Ok(0.0);
        }
        let mut p = 1.0;
        for (i, b) in self.blocks.iter().enumerate() {
            let free: Vec<i64> = b.free().iter().map(|&c| x[c]).collect();
            p *= self.eval(i)?.pmf(&free);
            if p == 0.0 {
                break;
            }
        }
        Ok(p)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Point> {
        let mut x = vec![0i64; self.k];
        for (i, b) in self.blocks.iter().enumerate() {
            let z = self.eval(i)?.sample(rng);
            let mut s = 0;
            for (c, v) in b.free().into_iter().zip(z) {
                x[c] = v;
                s += v;
            }
            x[b.pivot] = b.total - s;
        }
        Ok(x)
    }

    /// Tabulated law, truncated to a window holding all but ~1e-15 of the mass per axis.
    pub fn tabulate(&self) -> Result<SparsePmf> {
        let mut acc = SparsePmf::point_mass(vec![0; self.k]);
        for (i, b) in self.blocks.iter().enumerate() {
            let t = self.eval(i)?.tabulate()?;
            let free = b.free();
            let lifted = t.map_points(self.k, |z| {
                let mut x = vec![0i64; self.k];
                let mut s = 0;
                for (c, v) in free.iter().zip(z) {
                    x[*c] = *v;
                    s += v;
                }
                x[b.pivot] = b.total - s;
                x
            });
            acc = convolve(&acc, &lifted)?;
        }
        Ok(acc)
    }
}

/// Evaluate a block Gaussian at `x`.
pub fn block_gaussian_pmf(bg: &BlockGaussian, x: &[i64]) -> Result<f64> {
    bg.pmf(x)
}

/// Bucketing and rounding constants for the structural decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionConfig {
    pub c: f64,
    pub t: f64,
    pub gamma: f64,
    pub theory_mode: bool,
}

impl DecompositionConfig {
    pub fn new(k: usize, c: f64, t: f64, gamma: f64) -> Result<Self> {
        let cfg = DecompositionConfig { c, t, gamma, theory_mode: false };
        cfg.validate(k)?;
        Ok(cfg)
    }

    /// Small constants for desk-scale runs.
    pub fn desk(k: usize) -> Self {
        DecompositionConfig { c: (0.01f64).min(1.0 / (2.0 * k as f64)), t: 20.0, gamma: 6.5, theory_mode: false }
    }

    /// The asymptotic constants `c = (ε²/k⁵)^1.1`, `t = (k¹⁹/(c ε⁶))^1.1`, `γ = 6.5`.
    pub fn theory(k: usize, eps: f64) -> Self {
        let kf = k as f64;
        let c = (eps * eps / kf.powi(5)).powf(1.1);
        let t = (kf.powi(19) / (c * eps.powi(6))).powf(1.1);
        DecompositionConfig { c, t, gamma: 6.5, theory_mode: true }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.c > 0.0 && self.c <= 1.0 / (2.0 * k as f64)) {
            return Err(Error::arg("c", format!("rounding floor {} outside (0, 1/(2k)]", self.c)));
        }
        if !(self.t >= 1.0) {
            return Err(Error::arg("t", format!("bucket base {} below 1", self.t)));
        }
        if !(self.gamma > 6.0) {
            return Err(Error::arg("gamma", format!("bucket exponent {} not above 6", self.gamma)));
        }
        Ok(())
    }

    /// Bound on the number of sparse rows, `t·k²`.
    pub fn sparse_cap(&self, k: usize) -> f64 {
        self.t * (k * k) as f64
    }
}

/// A block Gaussian plus an independent sparse PMD.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DecompositionJson", into = "DecompositionJson")]
pub struct StructuralDecomposition {
    gaussian: BlockGaussian,
    sparse: ParamMatrix,
    sparse_pmf: SparsePmf,
    sparse_sampler: PmdSampler,
}

#[derive(Serialize, Deserialize)]
struct DecompositionJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema: Option<String>,
    gaussian: BlockGaussian,
    sparse: ParamMatrix,
}

impl TryFrom<DecompositionJson> for StructuralDecomposition {
    type Error = Error;
    fn try_from(j: DecompositionJson) -> Result<Self> {
        check_schema(&j.schema)?;
        StructuralDecomposition::new(j.gaussian, j.sparse)
    }
}

impl From<StructuralDecomposition> for DecompositionJson {
    fn from(s: StructuralDecomposition) -> Self {
        DecompositionJson { schema: Some(SCHEMA.into()), gaussian: s.gaussian, sparse: s.sparse }
    }
}

impl PartialEq for StructuralDecomposition {
    fn eq(&self, other: &Self) -> bool {
        self.gaussian == other.gaussian && self.sparse == other.sparse
    }
}

impl StructuralDecomposition {
    pub fn new(gaussian: BlockGaussian, sparse: ParamMatrix) -> Result<Self> {
        if gaussian.k() != sparse.k() {
            return Err(Error::DimensionMismatch { expected: gaussian.k(), got: sparse.k() });
        }
        let sparse_pmf = pmd_pmf_exact(&sparse)?;
        let sparse_sampler = PmdSampler::new(&sparse);
        Ok(StructuralDecomposition { gaussian, sparse, sparse_pmf, sparse_sampler })
    }

    pub fn gaussian(&self) -> &BlockGaussian {
        &self.gaussian
    }

    pub fn sparse(&self) -> &ParamMatrix {
        &self.sparse
    }

    pub fn sparse_pmf(&self) -> &SparsePmf {
        &self.sparse_pmf
    }

    pub fn k(&self) -> usize {
        self.gaussian.k()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.gaussian.mean().iter().zip(self.sparse.mean()).map(|(a, b)| a + b).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Point> {
        let g = self.gaussian.sample(rng)?;
        let s = self.sparse_sampler.sample(rng);
        Ok(g.iter().zip(s).map(|(a, b)| a + b).collect())
    }

    pub fn tabulate(&self) -> Result<SparsePmf> {
        convolve(&self.gaussian.tabulate()?, &self.sparse_pmf)
    }
}

/// `Σ_y sparse(y) · G(x − y)` over the sparse support.
pub fn hybrid_pmf_at(sd: &StructuralDecomposition, x: &[i64]) -> Result<f64> {
    let mut acc = 0.0;
    let mut z = vec![0i64; x.len()];
    for (y, p) in sd.sparse_pmf.iter() {
        for i in 0..x.len() {
            z[i] = x[i] - y[i];
        }
        acc += p * sd.gaussian.pmf(&z)?;
    }
    Ok(acc)
}
