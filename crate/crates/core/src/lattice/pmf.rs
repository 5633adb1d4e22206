use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_schema, support_cap, Point, SCHEMA};
use crate::{Error, Result};

/// Entries below this are dropped; their mass is recorded.
pub const PRUNE_THRESHOLD: f64 = 1e-15;
const MASS_TOL: f64 = 1e-9;

/// Finite probability mass function on the integer lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PmfJson", into = "PmfJson")]
pub struct SparsePmf {
    dims: usize,
    points: BTreeMap<Point, f64>,
    pruned: f64,
}

#[derive(Serialize, Deserialize)]
struct PmfJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema: Option<String>,
    k: usize,
    points: Vec<PointJson>,
}

#[derive(Serialize, Deserialize)]
struct PointJson {
    x: Point,
    p: f64,
}

impl TryFrom<PmfJson> for SparsePmf {
    type Error = Error;
    fn try_from(j: PmfJson) -> Result<Self> {
        check_schema(&j.schema)?;
        SparsePmf::new(j.k, j.points.into_iter().map(|e| (e.x, e.p)))
    }
}

impl From<SparsePmf> for PmfJson {
    fn from(p: SparsePmf) -> Self {
        PmfJson {
            schema: Some(SCHEMA.into()),
            k: p.dims,
            points: p.points.into_iter().map(|(x, p)| PointJson { x, p }).collect(),
        }
    }
}

impl SparsePmf {
    /// Collect `(point, probability)` pairs, summing duplicates. Mass must be 1 within 1e-9.
    pub fn new(dims: usize, entries: impl IntoIterator<Item = (Point, f64)>) -> Result<Self> {
        let p = Self::from_weights(dims, entries)?;
        let mass = p.mass() + p.pruned;
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::Parse(format!("pmf mass {mass} differs from 1")));
        }
        Ok(p)
    }

    /// Like [`SparsePmf::new`] without the unit-mass check (sub-probability measures).
    pub fn from_weights(dims: usize, entries: impl IntoIterator<Item = (Point, f64)>) -> Result<Self> {
        let mut points = BTreeMap::new();
        for (x, p) in entries {
            if x.len() != dims {
                return Err(Error::DimensionMismatch { expected: dims, got: x.len() });
            }
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::Parse(format!("invalid probability {p}")));
            }
            *points.entry(x).or_insert(0.0) += p;
        }
        let mut out = SparsePmf { dims, points, pruned: 0.0 };
        out.prune();
        Ok(out)
    }

    pub(crate) fn from_map(dims: usize, points: BTreeMap<Point, f64>, pruned: f64) -> Self {
        let mut out = SparsePmf { dims, points, pruned };
        out.prune();
        out
    }

    fn prune(&mut self) {
        let mut lost = 0.0;
        self.points.retain(|_, p| {
            if *p < PRUNE_THRESHOLD {
                lost += *p;
                false
            } else {
                true
            }
        });
        self.pruned += lost;
    }

    pub fn point_mass(x: Point) -> Self {
        let dims = x.len();
        SparsePmf { dims, points: BTreeMap::from([(x, 1.0)]), pruned: 0.0 }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn prob(&self, x: &[i64]) -> f64 {
        self.points.get(x).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.points.iter().map(|(x, p)| (x, *p))
    }

    /// Stored mass (excludes pruned mass).
    pub fn mass(&self) -> f64 {
        self.points.values().sum()
    }

    /// Mass dropped by pruning.
    pub fn pruned_mass(&self) -> f64 {
        self.pruned
    }

    pub fn mean(&self) -> Vec<f64> {
        let m = self.mass();
        let mut out = vec![0.0; self.dims];
        for (x, p) in self.iter() {
            for (o, xi) in out.iter_mut().zip(x) {
                *o += p * *xi as f64;
            }
        }
        out.iter().map(|v| v / m).collect()
    }

    /// Push forward through a deterministic map.
    pub fn map_points(&self, dims: usize, f: impl Fn(&[i64]) -> Point) -> Self {
        let mut points = BTreeMap::new();
        for (x, p) in self.iter() {
            *points.entry(f(x)).or_insert(0.0) += p;
        }
        SparsePmf::from_map(dims, points, self.pruned)
    }

    /// Keep the listed coordinates.
    pub fn project(&self, coords: &[usize]) -> Self {
        self.map_points(coords.len(), |x| coords.iter().map(|&c| x[c]).collect())
    }

    /// Inverse-CDF sampler over the stored support.
    pub fn sampler(&self) -> PmfSampler {
        let mut cum = Vec::with_capacity(self.points.len());
        let mut pts = Vec::with_capacity(self.points.len());
        let mut acc = 0.0;
        for (x, p) in self.iter() {
            acc += p;
            cum.push(acc);
            pts.push(x.clone());
        }
        PmfSampler { cum, pts }
    }
}

/// Draws from a tabulated pmf by binary search on its cumulative weights.
#[derive(Debug, Clone)]
pub struct PmfSampler {
    cum: Vec<f64>,
    pts: Vec<Point>,
}

impl PmfSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        self.pts[self.sample_index(rng)].clone()
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cum.last().expect("sampling from an empty pmf");
        let u = rng.random::<f64>() * total;
        self.cum.partition_point(|&c| c <= u).min(self.cum.len() - 1)
    }
}

/// Total variation distance `½ Σ |p − q|`.
pub fn tv_distance(p: &SparsePmf, q: &SparsePmf) -> f64 {
    assert_eq!(p.dims, q.dims, "tv_distance: dimension mismatch");
    let mut s = 0.0;
    for (x, a) in p.iter() {
        s += (a - q.prob(x)).abs();
    }
    for (x, b) in q.iter() {
        if !p.points.contains_key(x) {
            s += b;
        }
    }
    (0.5 * s).clamp(0.0, 1.0)
}

/// Largest gap between the CDFs of two 1-D pmfs.
pub fn kolmogorov_distance_1d(p: &SparsePmf, q: &SparsePmf) -> f64 {
    assert!(p.dims == 1 && q.dims == 1, "kolmogorov distance needs 1-D pmfs");
    let mut keys: Vec<i64> = p.points.keys().chain(q.points.keys()).map(|x| x[0]).collect();
    keys.sort_unstable();
    keys.dedup();
    let (mut fp, mut fq, mut best) = (0.0, 0.0, 0.0f64);
    for x in keys {
        fp += p.prob(&[x]);
        fq += q.prob(&[x]);
        best = best.max((fp - fq).abs());
    }
    best
}

/// Exact convolution of two lattice pmfs.
pub fn convolve(p: &SparsePmf, q: &SparsePmf) -> Result<SparsePmf> {
    if p.dims != q.dims {
        return Err(Error::DimensionMismatch { expected: p.dims, got: q.dims });
    }
    let cap = support_cap();
    let bound = p.len() as u128 * q.len() as u128;
    let mut points: BTreeMap<Point, f64> = BTreeMap::new();
    for (x, a) in p.iter() {
        for (y, b) in q.iter() {
            let z: Point = x.iter().zip(y).map(|(u, v)| u + v).collect();
            *points.entry(z).or_insert(0.0) += a * b;
            if points.len() as u128 > cap {
                return Err(Error::SupportCapExceeded { size: bound, cap });
            }
        }
    }
    let pruned = p.pruned + q.pruned - p.pruned * q.pruned;
    Ok(SparsePmf::from_map(p.dims, points, pruned))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin2(p: f64) -> SparsePmf {
        SparsePmf::new(1, [(vec![0], (1.0 - p) * (1.0 - p)), (vec![1], 2.0 * p * (1.0 - p)), (vec![2], p * p)]).unwrap()
    }

    #[test]
    fn tv_hand_expanded_binomials() {
        // |0.25-0.16| + |0.5-0.48| + |0.25-0.36| = 0.22
        assert!((tv_distance(&bin2(0.5), &bin2(0.6)) - 0.11).abs() < 1e-15);
        assert_eq!(tv_distance(&bin2(0.3), &bin2(0.3)), 0.0);
        let a = SparsePmf::point_mass(vec![0]);
        let b = SparsePmf::point_mass(vec![1]);
        assert_eq!(tv_distance(&a, &b), 1.0);
        assert_eq!(kolmogorov_distance_1d(&a, &b), 1.0);
    }

    #[test]
    fn convolution_identities() {
        let b1 = SparsePmf::new(1, [(vec![0], 0.7), (vec![1], 0.3)]).unwrap();
        let c = convolve(&b1, &b1).unwrap();
        assert!(tv_distance(&c, &bin2(0.3)) < 1e-15);
        let id = convolve(&c, &SparsePmf::point_mass(vec![0])).unwrap();
        assert_eq!(id, c);
    }

    #[test]
    fn pruning_records_mass() {
        let p = SparsePmf::new(1, [(vec![0], 1.0 - 1e-16), (vec![1], 1e-16)]).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p.pruned_mass() - 1e-16).abs() < 1e-30);
    }

    #[test]
    fn json_schema() {
        let p = bin2(0.5);
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.starts_with("{\"schema\":\"pmdlab/1\",\"k\":1,\"points\":[{\"x\":[0],\"p\":0.25}"));
        let back: SparsePmf = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<SparsePmf>(r#"{"k":1,"points":[{"x":[0],"p":0.5}]}"#).is_err());
    }

    #[test]
    fn projection_sums_mass() {
        let p = SparsePmf::new(2, [(vec![0, 1], 0.2), (vec![0, 2], 0.3), (vec![1, 1], 0.5)]).unwrap();
        let q = p.project(&[0]);
        assert!((q.prob(&[0]) - 0.5).abs() < 1e-15);
        assert!((q.prob(&[1]) - 0.5).abs() < 1e-15);
    }
}
