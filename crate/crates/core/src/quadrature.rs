//! Gaussian box integrals.
//!
//! Boxes of dimension at most three are integrated in whitened coordinates by
//! nested adaptive Gauss-Legendre rules. Higher dimensions use a randomly
//! shifted rank-1 lattice over the separation-of-variables transform.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::{erfc, erfc_inv};

/// Points in the quasi-random rule.
pub const QMC_POINTS: usize = 1 << 16;
const QMC_SHIFTS: usize = 16;
const CUT: f64 = 12.0;
const GL_ORDER: usize = 15;

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    let p = p.clamp(1e-300, 1.0 - 1e-16);
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// `Phi(b) - Phi(a)` without cancellation in the tails.
pub fn std_normal_interval(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let r = if a >= 0.0 {
        0.5 * (erfc(a * FRAC_1_SQRT_2) - erfc(b * FRAC_1_SQRT_2))
    } else if b <= 0.0 {
        0.5 * (erfc(-b * FRAC_1_SQRT_2) - erfc(-a * FRAC_1_SQRT_2))
    } else {
        1.0 - 0.5 * erfc(b * FRAC_1_SQRT_2) - 0.5 * erfc(-a * FRAC_1_SQRT_2)
    };
    r.max(0.0)
}

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(GL_ORDER))
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn gl(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gauss_legendre();
    let h = 0.5 * (b - a);
    let c = 0.5 * (b + a);
    nodes.iter().zip(weights).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

fn adaptive_piece(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = gl(f, a, m);
    let right = gl(f, m, b);
    let refined = left + right;
    if depth == 0 || (refined - whole).abs() <= tol {
        return refined;
    }
    adaptive_piece(f, a, m, left, 0.5 * tol, depth - 1) + adaptive_piece(f, m, b, right, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss-Legendre integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let pieces = ((b - a) / 0.5).ceil().max(1.0) as usize;
    let h = (b - a) / pieces as f64;
    let per = tol / pieces as f64;
    (0..pieces)
        .map(|i| {
            let lo = a + h * i as f64;
            let hi = if i + 1 == pieces { b } else { lo + h };
            let whole = gl(f, lo, hi);
            adaptive_piece(f, lo, hi, whole, per, 30)
        })
        .sum()
}

/// Probability that `mean + L z` lies in the box `[lo, hi]` for standard normal `z`.
///
/// `l` is a lower-triangular factor stored row-major (`l[i][j]`, `j <= i`) with a
/// strictly positive diagonal.
pub struct BoxIntegral<'a> {
    pub mean: &'a [f64],
    pub l: &'a [Vec<f64>],
    pub lo: &'a [f64],
    pub hi: &'a [f64],
}

impl BoxIntegral<'_> {
    fn bounds(&self, i: usize, z: &[f64]) -> (f64, f64) {
        let s = self.mean[i] + (0..i).map(|j| self.l[i][j] * z[j]).sum::<f64>();
        let d = self.l[i][i];
        ((self.lo[i] - s) / d, (self.hi[i] - s) / d)
    }

    fn level(&self, i: usize, z: &mut Vec<f64>, tol: f64) -> f64 {
        let (a, b) = self.bounds(i, z);
        if i + 1 == self.mean.len() {
            return std_normal_interval(a, b);
        }
        let (a, b) = (a.max(-CUT), b.min(CUT));
        if a >= b {
            return 0.0;
        }
        let mut f = |t: f64| {
            z[i] = t;
            std_normal_pdf(t) * self.level(i + 1, z, tol * 0.1)
        };
        integrate(&mut f, a, b, tol)
    }

    /// Nested adaptive quadrature; intended for dimension at most three.
    pub fn adaptive(&self, tol: f64) -> f64 {
        let d = self.mean.len();
        if d == 0 {
            return 1.0;
        }
        let mut z = vec![0.0; d];
        self.level(0, &mut z, tol).clamp(0.0, 1.0)
    }

    /// Randomly shifted lattice rule on the separation-of-variables transform.
    /// Returns the estimate and a three-standard-error bound.
    pub fn lattice(&self, seed: u64) -> (f64, f64) {
        let d = self.mean.len();
        if d == 0 {
            return (1.0, 0.0);
        }
        let gen: Vec<f64> = first_primes(d).iter().map(|&p| (p as f64).sqrt().fract()).collect();
        let per_shift = QMC_POINTS / QMC_SHIFTS;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut estimates = Vec::with_capacity(QMC_SHIFTS);
        let mut y = vec![0.0; d];
        for _ in 0..QMC_SHIFTS {
            let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let mut acc = 0.0;
            for n in 1..=per_shift {
                let mut f = 1.0;
                for i in 0..d {
                    let (a, b) = self.bounds(i, &y);
                    let e = std_normal_cdf(a);
                    let width = std_normal_interval(a, b);
                    f *= width;
                    if f == 0.0 {
                        break;
                    }
                    if i + 1 < d {
                        // baker's transform keeps the periodized integrand smooth
                        let u = (n as f64 * gen[i] + shift[i]).fract();
                        let w = 1.0 - (2.0 * u - 1.0).abs();
                        y[i] = std_normal_quantile(e + w * width);
                    }
                }
                acc += f;
            }
            estimates.push(acc / per_shift as f64);
        }
        let mean = estimates.iter().sum::<f64>() / QMC_SHIFTS as f64;
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (QMC_SHIFTS - 1) as f64;
        (mean.clamp(0.0, 1.0), 3.0 * (var / QMC_SHIFTS as f64).sqrt())
    }
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if (2..c).take_while(|p| p * p <= c).all(|p| !c.is_multiple_of(p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}
