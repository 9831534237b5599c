#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ultranet::wavelets::CellFunction;
use ultranet::{Basin, Convention, NetworkSpec, Prime, RadialKernel};

pub const PRIMES: [u32; 3] = [2, 3, 5];

pub fn prime(p: u32) -> Prime {
    Prime::new(p).unwrap()
}

/// `w_hat` at `|xi|_p = p^{1-r}` for a kernel on `pZ_p`, summed sphere by
/// sphere: the ball of radius `p^-j` integrates the character to `p^-j`
/// when `j >= 1 - r` and to 0 otherwise.
pub fn symbol_by_spheres(p: u32, levels: &[f64], r: i32) -> f64 {
    let k = 1 - r;
    let pf = p as f64;
    let ball = |j: i32| if j >= k { pf.powi(-j) } else { 0.0 };
    levels
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let j = i as i32 + 1;
            w * (ball(j) - ball(j + 1))
        })
        .sum()
}

/// `int_{pZ_p} w(|x|) dx` as a sum of sphere volumes.
pub fn mass_by_spheres(p: u32, levels: &[f64]) -> f64 {
    let pf = p as f64;
    levels
        .iter()
        .enumerate()
        .map(|(i, w)| w * (pf.powi(-(i as i32 + 1)) - pf.powi(-(i as i32 + 2))))
        .sum()
}

pub struct RawSpec {
    pub p: u32,
    pub digits: Vec<u8>,
    pub w: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Off-diagonal cross rates.
    pub lambda: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
}

impl RawSpec {
    pub fn n(&self) -> usize {
        self.digits.len()
    }

    pub fn build(&self, convention: Convention) -> NetworkSpec {
        let pr = prime(self.p);
        let basins = (0..self.n())
            .map(|a| Basin {
                digit: self.digits[a],
                name: format!("B{a}"),
                w: RadialKernel::new(pr, self.w[a].clone()).unwrap(),
                v: RadialKernel::new(pr, self.v[a].clone()).unwrap(),
            })
            .collect();
        NetworkSpec::new(pr, basins, self.lambda.clone(), self.mu.clone(), convention).unwrap()
    }

    /// `mu_bar_a` from the raw inputs.
    pub fn mu_bar(&self, a: usize) -> f64 {
        let p = self.p as f64;
        p * mass_by_spheres(self.p, &self.v[a])
            + (0..self.n())
                .filter(|&b| b != a)
                .map(|b| self.mu[b][a])
                .sum::<f64>()
    }

    pub fn j_max(&self) -> usize {
        self.w
            .iter()
            .chain(&self.v)
            .map(|l| l.len())
            .max()
            .unwrap_or(0)
    }
}

fn levels(rng: &mut ChaCha8Rng, j: usize) -> Vec<f64> {
    (0..j).map(|_| rng.random_range(0.05..1.5)).collect()
}

/// A spec satisfying `lambda_ab <= mu_ba` and `w <= v`, with positive slack
/// when `slack` is set.
pub fn random_raw(rng: &mut ChaCha8Rng, p: u32, n: usize, j: usize, slack: bool) -> RawSpec {
    let mut digits: Vec<u8> = (0..p as u8).collect();
    for i in (1..digits.len()).rev() {
        digits.swap(i, rng.random_range(0..=i));
    }
    digits.truncate(n);
    let w: Vec<Vec<f64>> = (0..n).map(|_| levels(rng, j)).collect();
    let v = w
        .iter()
        .map(|l| {
            l.iter()
                .map(|x| {
                    x + if slack {
                        rng.random_range(0.0..0.5)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut lambda = vec![vec![0.0; n]; n];
    let mut mu = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..n {
            if a != b {
                lambda[a][b] = rng.random_range(0.0..2.0);
            }
        }
    }
    for a in 0..n {
        for b in 0..n {
            if a != b {
                mu[b][a] = lambda[a][b]
                    + if slack {
                        rng.random_range(0.0..1.0)
                    } else {
                        0.0
                    };
            }
        }
    }
    RawSpec {
        p,
        digits,
        w,
        v,
        lambda,
        mu,
    }
}

pub fn random_datum(rng: &mut ChaCha8Rng, spec: &NetworkSpec, depth: usize) -> CellFunction {
    let p = spec.prime();
    let per = p.pow(depth as u32 - 1).unwrap() as usize;
    let values = spec
        .basins()
        .iter()
        .map(|_| (0..per).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    CellFunction::new(p, depth, spec.basin_digits(), values).unwrap()
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
