use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::pmf::PmfSampler;
use super::{
    check_schema, pmd_pmf_exact, round_half_even, ParamMatrix, PmdSampler, Point, SparsePmf, StructuralDecomposition, SCHEMA,
};
use crate::quadrature::std_normal_interval;
use crate::{Error, Result};

const NORMALIZATION_TOL: f64 = 1e-6;

/// A PMD together with its tabulated exact pmf.
#[derive(Debug, Clone)]
pub struct ExactPmd {
    pm: ParamMatrix,
    pmf: SparsePmf,
}

impl ExactPmd {
    pub fn new(pm: ParamMatrix) -> Result<Self> {
        let pmf = pmd_pmf_exact(&pm)?;
        Ok(ExactPmd { pm, pmf })
    }

    pub fn matrix(&self) -> &ParamMatrix {
        &self.pm
    }

    pub fn pmf(&self) -> &SparsePmf {
        &self.pmf
    }
}

/// `ℓ·⌊N(μ, σ²)⌉ + Y` with `Y` independent on `{0, …, ℓ−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiirvForm {
    pub scale: usize,
    pub mu: f64,
    pub var: f64,
    pub residue: Vec<f64>,
}

impl SiirvForm {
    pub fn new(scale: usize, mu: f64, var: f64, residue: Vec<f64>) -> Result<Self> {
        if scale == 0 || residue.len() != scale {
            return Err(Error::arg("residue", format!("need {scale} residue probabilities, got {}", residue.len())));
        }
        if !(var >= 0.0) || !mu.is_finite() {
            return Err(Error::arg("var", format!("invalid Gaussian ({mu}, {var})")));
        }
        let s: f64 = residue.iter().sum();
        if residue.iter().any(|p| *p < 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::arg("residue", "residue must be a probability vector"));
        }
        Ok(SiirvForm { scale, mu, var, residue })
    }

    /// Probability that the rounded Gaussian equals `z`.
    pub fn gaussian_pmf(&self, z: i64) -> f64 {
        if self.var <= 0.0 {
            return if z == round_half_even(self.mu) { 1.0 } else { 0.0 };
        }
        let s = self.var.sqrt();
        let c = z as f64 - self.mu;
        std_normal_interval((c - 0.5) / s, (c + 0.5) / s)
    }

    pub fn pmf_at(&self, v: i64) -> f64 {
        let l = self.scale as i64;
        self.residue[v.rem_euclid(l) as usize] * self.gaussian_pmf(v.div_euclid(l))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let g: f64 = rng.sample(StandardNormal);
        let z = round_half_even(self.mu + self.var.max(0.0).sqrt() * g);
        let u = rng.random::<f64>();
        let mut acc = 0.0;
        let mut r = self.scale - 1;
        for (i, p) in self.residue.iter().enumerate() {
            acc += p;
            if u < acc {
                r = i;
                break;
            }
        }
        self.scale as i64 * z + r as i64
    }

    pub fn tabulate(&self) -> SparsePmf {
        let s = self.var.max(0.0).sqrt();
        let lo = (self.mu - 10.0 * s - 1.0).floor() as i64;
        let hi = (self.mu + 10.0 * s + 1.0).ceil() as i64;
        let l = self.scale as i64;
        let mut points = BTreeMap::new();
        for z in lo..=hi {
            let g = self.gaussian_pmf(z);
            for (r, p) in self.residue.iter().enumerate() {
                if g * p > 0.0 {
                    points.insert(vec![l * z + r as i64], g * p);
                }
            }
        }
        SparsePmf::from_map(1, points, 0.0)
    }
}

/// A candidate distribution with pointwise pmf evaluation and sampling.
#[derive(Debug, Clone)]
pub enum Hypothesis {
    ExactPmd(ExactPmd),
    GaussianPlusSparse(StructuralDecomposition),
    Siirv(SiirvForm),
    Tabulated(SparsePmf),
}

/// Prepared sampler for one hypothesis.
pub enum HypothesisSampler<'a> {
    Pmd(PmdSampler),
    Decomposition(&'a StructuralDecomposition),
    Siirv(&'a SiirvForm),
    Table(PmfSampler),
}

impl HypothesisSampler<'_> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            HypothesisSampler::Pmd(s) => s.sample(rng),
            HypothesisSampler::Decomposition(sd) => sd.sample(rng).expect("decomposition validated at construction"),
            HypothesisSampler::Siirv(f) => vec![f.sample(rng)],
            HypothesisSampler::Table(s) => s.sample(rng),
        }
    }
}

impl Hypothesis {
    pub fn exact(pm: ParamMatrix) -> Result<Self> {
        Ok(Hypothesis::ExactPmd(ExactPmd::new(pm)?))
    }

    /// Gaussian-plus-sparse hypothesis; fails if a block cannot be evaluated.
    pub fn decomposition(sd: StructuralDecomposition) -> Result<Self> {
        if !sd.gaussian().is_evaluable() {
            return Err(Error::SingularCovariance { min_eig: 0.0, floor: super::EIGEN_FLOOR });
        }
        Ok(Hypothesis::GaussianPlusSparse(sd))
    }

    pub fn dims(&self) -> usize {
        match self {
            Hypothesis::ExactPmd(e) => e.pm.k(),
            Hypothesis::GaussianPlusSparse(sd) => sd.k(),
            Hypothesis::Siirv(_) => 1,
            Hypothesis::Tabulated(p) => p.dims(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Hypothesis::ExactPmd(_) => "exact_pmd",
            Hypothesis::GaussianPlusSparse(_) => "gaussian_plus_sparse",
            Hypothesis::Siirv(_) => "siirv",
            Hypothesis::Tabulated(_) => "tabulated",
        }
    }

    pub fn pmf_at(&self, x: &[i64]) -> f64 {
        match self {
            Hypothesis::ExactPmd(e) => e.pmf.prob(x),
            Hypothesis::GaussianPlusSparse(sd) => super::hybrid_pmf_at(sd, x).unwrap_or(0.0),
            Hypothesis::Siirv(f) => f.pmf_at(x[0]),
            Hypothesis::Tabulated(p) => p.prob(x),
        }
    }

    pub fn sampler(&self) -> HypothesisSampler<'_> {
        match self {
            Hypothesis::ExactPmd(e) => HypothesisSampler::Pmd(PmdSampler::new(&e.pm)),
            Hypothesis::GaussianPlusSparse(sd) => HypothesisSampler::Decomposition(sd),
            Hypothesis::Siirv(f) => HypothesisSampler::Siirv(f),
            Hypothesis::Tabulated(p) => HypothesisSampler::Table(p.sampler()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        self.sampler().sample(rng)
    }

    pub fn draw<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<Point> {
        let s = self.sampler();
        (0..m).map(|_| s.sample(rng)).collect()
    }

    /// Tabulated law (Gaussian parts truncated far in the tails).
    pub fn tabulate(&self) -> Result<SparsePmf> {
        match self {
            Hypothesis::ExactPmd(e) => Ok(e.pmf.clone()),
            Hypothesis::GaussianPlusSparse(sd) => sd.tabulate(),
            Hypothesis::Siirv(f) => Ok(f.tabulate()),
            Hypothesis::Tabulated(p) => Ok(p.clone()),
        }
    }

    /// Check that the pmf is nonnegative and sums to 1 within 1e-6.
    pub fn check_normalized(&self) -> Result<()> {
        let t = self.tabulate()?;
        let m = t.mass() + t.pruned_mass();
        if (m - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Precondition(format!("hypothesis mass {m} differs from 1")));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum HypothesisBody {
    ExactPmd { matrix: ParamMatrix },
    GaussianPlusSparse { decomposition: StructuralDecomposition },
    Siirv(SiirvForm),
    Tabulated { pmf: SparsePmf },
}

#[derive(Serialize, Deserialize)]
struct HypothesisJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema: Option<String>,
    #[serde(flatten)]
    body: HypothesisBody,
}

impl Serialize for Hypothesis {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let body = match self.clone() {
            Hypothesis::ExactPmd(e) => HypothesisBody::ExactPmd { matrix: e.pm },
            Hypothesis::GaussianPlusSparse(d) => HypothesisBody::GaussianPlusSparse { decomposition: d },
            Hypothesis::Siirv(f) => HypothesisBody::Siirv(f),
            Hypothesis::Tabulated(p) => HypothesisBody::Tabulated { pmf: p },
        };
        HypothesisJson { schema: Some(SCHEMA.into()), body }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Hypothesis {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = HypothesisJson::deserialize(d)?;
        check_schema(&j.schema).map_err(D::Error::custom)?;
        match j.body {
            HypothesisBody::ExactPmd { matrix } => Hypothesis::exact(matrix).map_err(D::Error::custom),
            HypothesisBody::GaussianPlusSparse { decomposition } => {
                Hypothesis::decomposition(decomposition).map_err(D::Error::custom)
            }
            HypothesisBody::Siirv(f) => {
                SiirvForm::new(f.scale, f.mu, f.var, f.residue).map(Hypothesis::Siirv).map_err(D::Error::custom)
            }
            HypothesisBody::Tabulated { pmf } => Ok(Hypothesis::Tabulated(pmf)),
        }
    }
}
