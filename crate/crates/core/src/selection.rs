//! Hypothesis selection: the Scheffé comparator and a round-robin tournament.

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::lattice::{Hypothesis, Point};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    First,
    Second,
    Draw,
}

/// Empirical masses of the Scheffé set `W = {x : h1(x) > h2(x)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheffeEstimate {
    pub p_x: f64,
    pub p_1: f64,
    pub p_2: f64,
}

impl ScheffeEstimate {
    /// Draw when `|p̂₁ − p̂₂| ≤ 3ε`; otherwise the first wins if `p̂₁ − p̂_X ≤ p̂_X − p̂₂`.
    pub fn verdict(&self, eps: f64) -> Verdict {
        if (self.p_1 - self.p_2).abs() <= 3.0 * eps {
            Verdict::Draw
        } else if self.p_1 - self.p_x <= self.p_x - self.p_2 {
            Verdict::First
        } else {
            Verdict::Second
        }
    }
}

/// Compare two hypotheses on samples from the unknown law and from each hypothesis.
pub fn scheffe_compare(
    h1: &Hypothesis,
    h2: &Hypothesis,
    x_samples: &[Point],
    h1_samples: &[Point],
    h2_samples: &[Point],
    eps: f64,
) -> Result<(Verdict, ScheffeEstimate)> {
    if x_samples.is_empty() || h1_samples.is_empty() || h2_samples.is_empty() {
        return Err(Error::arg("samples", "every sample set must be nonempty"));
    }
    let mut cache: HashMap<Point, bool> = HashMap::new();
    let mut frequency = |samples: &[Point]| -> f64 {
        let hits = samples.iter().filter(|x| *cache.entry((*x).clone()).or_insert_with(|| h1.pmf_at(x) > h2.pmf_at(x))).count();
        hits as f64 / samples.len() as f64
    };
    let est = ScheffeEstimate { p_x: frequency(x_samples), p_1: frequency(h1_samples), p_2: frequency(h2_samples) };
    Ok((est.verdict(eps), est))
}

/// Draws per hypothesis, `⌈2·ln(1/δ)·max(1, ln N)/ε²⌉`.
pub fn tournament_budget(n: usize, eps: f64, delta: f64) -> usize {
    let log_n = (n.max(1) as f64).ln().max(1.0);
    (2.0 * (1.0 / delta).ln() * log_n / (eps * eps)).ceil() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContestRecord {
    pub first: usize,
    pub second: usize,
    pub estimate: ScheffeEstimate,
    pub verdict: Verdict,
}

/// Everything the tournament measured.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TournamentLog {
    pub hypotheses: usize,
    pub eps: f64,
    pub delta: f64,
    pub draws_per_hypothesis: usize,
    pub budget_per_hypothesis: usize,
    pub x_samples: usize,
    pub distinct_points: usize,
    pub contests: Vec<ContestRecord>,
    pub scores: Vec<f64>,
    pub losses: Vec<usize>,
    pub winner: Option<usize>,
}

/// Outcome of [`fast_tournament`].
#[derive(Debug, Clone)]
pub struct Tournament {
    pub winner: usize,
    pub log: TournamentLog,
}

/// Round-robin Scheffé tournament: every pair is contested once, a win scores 1
/// and a draw ½; the highest score wins with ties to the lowest index. Fails
/// when every hypothesis loses a majority of its contests.
pub fn fast_tournament<R: Rng + ?Sized>(
    x_samples: &[Point],
    hypotheses: &[Hypothesis],
    eps: f64,
    delta: f64,
    rng: &mut R,
) -> Result<Tournament> {
    let n = hypotheses.len();
    if n == 0 {
        return Err(Error::arg("hypotheses", "need at least one hypothesis"));
    }
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::arg("eps/delta", "must lie in (0, 1)"));
    }
    let budget = tournament_budget(n, eps, delta);
    let mut log = TournamentLog {
        hypotheses: n,
        eps,
        delta,
        draws_per_hypothesis: 0,
        budget_per_hypothesis: budget,
        x_samples: x_samples.len(),
        distinct_points: 0,
        contests: Vec::new(),
        scores: vec![0.0; n],
        losses: vec![0; n],
        winner: None,
    };
    if n == 1 {
        log.winner = Some(0);
        return Ok(Tournament { winner: 0, log });
    }
    if x_samples.is_empty() {
        return Err(Error::arg("x_samples", "need samples from the unknown distribution"));
    }
    let dims = x_samples[0].len();

    // intern every distinct point
    let mut index: HashMap<Point, usize> = HashMap::new();
    let mut points: Vec<Point> = Vec::new();
    let intern = |x: Point, index: &mut HashMap<Point, usize>, points: &mut Vec<Point>| -> usize {
        *index.entry(x).or_insert_with_key(|k| {
            points.push(k.clone());
            points.len() - 1
        })
    };
    let x_ids: Vec<usize> = x_samples
        .iter()
        .map(|x| {
            if x.len() != dims {
                return Err(Error::DimensionMismatch { expected: dims, got: x.len() });
            }
            Ok(intern(x.clone(), &mut index, &mut points))
        })
        .collect::<Result<_>>()?;
    let mut h_ids: Vec<Vec<usize>> = Vec::with_capacity(n);
    for h in hypotheses {
        if h.dims() != dims {
            return Err(Error::DimensionMismatch { expected: dims, got: h.dims() });
        }
        let s = h.sampler();
        h_ids.push((0..budget).map(|_| intern(s.sample(rng), &mut index, &mut points)).collect());
    }
    log.draws_per_hypothesis = budget;
    let u = points.len();
    log.distinct_points = u;

    let counts = |ids: &[usize]| {
        let mut c = vec![0u32; u];
        for &i in ids {
            c[i] += 1;
        }
        c
    };
    let cx = counts(&x_ids);
    let ch: Vec<Vec<u32>> = h_ids.iter().map(|ids| counts(ids)).collect();
    let values: Vec<Vec<f64>> = hypotheses.iter().map(|h| points.iter().map(|x| h.pmf_at(x)).collect()).collect();

    let mx = x_ids.len() as f64;
    let mh = budget as f64;
    for i in 0..n {
        for j in i + 1..n {
            let (mut sx, mut s1, mut s2) = (0u64, 0u64, 0u64);
            for p in 0..u {
                if values[i][p] > values[j][p] {
                    sx += cx[p] as u64;
                    s1 += ch[i][p] as u64;
                    s2 += ch[j][p] as u64;
                }
            }
            let estimate = ScheffeEstimate { p_x: sx as f64 / mx, p_1: s1 as f64 / mh, p_2: s2 as f64 / mh };
            let verdict = estimate.verdict(eps);
            match verdict {
                Verdict::First => {
                    log.scores[i] += 1.0;
                    log.losses[j] += 1;
                }
                Verdict::Second => {
                    log.scores[j] += 1.0;
                    log.losses[i] += 1;
                }
                Verdict::Draw => {
                    log.scores[i] += 0.5;
                    log.scores[j] += 0.5;
                }
            }
            log.contests.push(ContestRecord { first: i, second: j, estimate, verdict });
        }
    }
    let majority = (n - 1) as f64 / 2.0;
    if log.losses.iter().all(|&l| l as f64 > majority) {
        return Err(Error::TournamentFailure);
    }
    let mut winner = 0;
    for i in 1..n {
        if log.scores[i] > log.scores[winner] {
            winner = i;
        }
    }
    log.winner = Some(winner);
    Ok(Tournament { winner, log })
}
