//! Jump-process simulation with killing on the discretized state space.
//!
//! The estimator is per start state: `u(I, t) = E_I[u0(X_t); t < kill time]`.
//! Every path owns a ChaCha8 stream seeded from
//! `path_seed(path_seed(master, I), k)`, outcomes are collected in path order
//! and summed with Kahan compensation, so results do not depend on how rayon
//! schedules the paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::DiscreteGenerator;
use crate::wavelets::CellFunction;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output for `master + (index + 1) * golden_gamma`.
pub fn path_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Sorted, nonnegative.
    pub record_times: Vec<f64>,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::usage("n_paths must be at least 1"));
        }
        if self.record_times.is_empty() {
            return Err(Error::usage("record_times is empty"));
        }
        if self
            .record_times
            .iter()
            .any(|t| !(t.is_finite() && *t >= 0.0))
        {
            return Err(Error::usage("record times must be finite and >= 0"));
        }
        if self.record_times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::usage("record times must be sorted"));
        }
        Ok(())
    }

    pub fn t_max(&self) -> f64 {
        self.record_times.last().copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub t: f64,
    pub state: usize,
    pub mean: f64,
    pub stderr: f64,
    pub n_alive: usize,
    pub kill_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimResult {
    pub n_paths: usize,
    /// Ordered by time, then state.
    pub estimates: Vec<Estimate>,
}

impl SimResult {
    pub fn get(&self, time_index: usize, state: usize, n_states: usize) -> &Estimate {
        &self.estimates[time_index * n_states + state]
    }
}

// Jump table of one state: cumulative rates over targets, then the kill rate.
struct Row {
    targets: Vec<usize>,
    cumulative: Vec<f64>,
    total: f64,
}

fn jump_table(gen: &DiscreteGenerator) -> Vec<Row> {
    (0..gen.dim())
        .map(|i| {
            let mut targets = Vec::new();
            let mut cumulative = Vec::new();
            let mut acc = 0.0;
            for j in 0..gen.dim() {
                let r = gen.q[(i, j)];
                if j != i && r > 0.0 {
                    acc += r;
                    targets.push(j);
                    cumulative.push(acc);
                }
            }
            Row {
                targets,
                cumulative,
                total: acc + gen.kill[i],
            }
        })
        .collect()
}

/// State of one path at each record time; `None` once killed.
fn run_path(rows: &[Row], start: usize, times: &[f64], seed: u64) -> Vec<Option<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(times.len());
    let mut state = Some(start);
    let mut t = 0.0;
    let mut next_jump = None;
    for &rec in times {
        while let Some(s) = state {
            let row = &rows[s];
            if row.total <= 0.0 {
                break;
            }
            let tj = *next_jump.get_or_insert_with(|| {
                let u: f64 = rng.random();
                t - (1.0 - u).ln() / row.total
            });
            if tj > rec {
                break;
            }
            t = tj;
            next_jump = None;
            let x = rng.random::<f64>() * row.total;
            let k = row.cumulative.partition_point(|&c| c <= x);
            state = row.targets.get(k).copied();
        }
        out.push(state);
    }
    out
}

/// Outcomes of paths `0..n_paths` started at `start`, in path order.
pub fn path_outcomes(
    gen: &DiscreteGenerator,
    start: usize,
    cfg: &SimConfig,
) -> Result<Vec<Vec<Option<usize>>>> {
    cfg.validate()?;
    if start >= gen.dim() {
        return Err(Error::usage(format!("start state {start} out of range")));
    }
    let rows = jump_table(gen);
    let state_seed = path_seed(cfg.seed, start as u64);
    Ok((0..cfg.n_paths)
        .into_par_iter()
        .map(|k| {
            run_path(
                &rows,
                start,
                &cfg.record_times,
                path_seed(state_seed, k as u64),
            )
        })
        .collect())
}

#[derive(Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

pub fn simulate(gen: &DiscreteGenerator, u0: &CellFunction, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    if u0.depth() != gen.level || u0.basins() != gen.basins.as_slice() {
        return Err(Error::validation(
            "datum does not live on the generator's cells",
        ));
    }
    if !u0.in_unit_interval() {
        return Err(Error::validation("Monte Carlo datum leaves [0, 1]"));
    }
    let values = u0.flatten();
    let n = gen.dim();
    let nt = cfg.record_times.len();
    let mut estimates = vec![None; nt * n];
    for start in 0..n {
        let paths = path_outcomes(gen, start, cfg)?;
        for (ti, &t) in cfg.record_times.iter().enumerate() {
            // killed paths contribute u = 0
            let sample = |p: &Vec<Option<usize>>| p[ti].map_or(0.0, |s| values[s]);
            let m = cfg.n_paths as f64;
            let mut s1 = Kahan::default();
            let mut alive = 0usize;
            for p in &paths {
                alive += p[ti].is_some() as usize;
                s1.add(sample(p));
            }
            let mean = s1.sum / m;
            let mut s2 = Kahan::default();
            for p in &paths {
                let d = sample(p) - mean;
                s2.add(d * d);
            }
            let var = if cfg.n_paths > 1 {
                s2.sum / (m - 1.0)
            } else {
                0.0
            };
            estimates[ti * n + start] = Some(Estimate {
                t,
                state: start,
                mean,
                stderr: (var / m).sqrt(),
                n_alive: alive,
                kill_fraction: 1.0 - alive as f64 / m,
            });
        }
    }
    Ok(SimResult {
        n_paths: cfg.n_paths,
        estimates: estimates.into_iter().map(Option::unwrap).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::RadialKernel;
    use crate::network::{Basin, Convention, NetworkSpec};
    use crate::oracle::{discretize, Orientation};
    use crate::padic::Prime;

    fn p2() -> Prime {
        Prime::new(2).unwrap()
    }

    #[test]
    fn seeds_are_distinct_and_pinned() {
        assert_ne!(path_seed(7, 0), path_seed(7, 1));
        assert_eq!(path_seed(7, 3), path_seed(7, 3));
        assert_eq!(path_seed(0, 0), 0xe220_a839_7b1d_cdaf);
    }

    #[test]
    fn frozen_process_is_exact() {
        let g = DiscreteGenerator {
            prime: p2(),
            level: 2,
            basins: vec![0],
            states: crate::padic::basin_cells(p2(), 0, 2).unwrap(),
            basin_of: vec![0, 0],
            q: nalgebra::DMatrix::zeros(2, 2),
            kill: vec![0.0, 0.0],
        };
        let u0 = CellFunction::new(p2(), 2, vec![0], vec![vec![0.3, 0.8]]).unwrap();
        let cfg = SimConfig {
            n_paths: 50,
            seed: 1,
            record_times: vec![0.0, 10.0],
        };
        let r = simulate(&g, &u0, &cfg).unwrap();
        for e in &r.estimates {
            assert_eq!(e.mean, [0.3, 0.8][e.state]);
            assert_eq!(e.stderr, 0.0);
        }
    }

    #[test]
    fn single_basin_matches_closed_form() {
        let k = RadialKernel::new(p2(), vec![1.0]).unwrap();
        let spec = NetworkSpec::new(
            p2(),
            vec![Basin::symmetric(0, "A", k)],
            vec![vec![0.0]],
            vec![vec![0.0]],
            Convention::Derived,
        )
        .unwrap();
        let g = discretize(&spec, 2, Orientation::Generator).unwrap();
        let u0 = CellFunction::new(p2(), 2, vec![0], vec![vec![1.0, 0.0]]).unwrap();
        let cfg = SimConfig {
            n_paths: 100_000,
            seed: 11,
            record_times: vec![2.0],
        };
        let r = simulate(&g, &u0, &cfg).unwrap();
        let want = 0.5 * (1.0 + (-1.0f64).exp());
        let e = r.get(0, 0, 2);
        assert!(
            (e.mean - want).abs() <= 3.0 * e.stderr,
            "{} vs {want} (se {})",
            e.mean,
            e.stderr
        );
        assert_eq!(e.n_alive, 100_000);
    }

    #[test]
    fn uniform_kill_matches_survival() {
        let z = RadialKernel::zero(p2());
        let v = RadialKernel::new(p2(), vec![2.0]).unwrap();
        let spec = NetworkSpec::new(
            p2(),
            vec![Basin {
                digit: 0,
                name: "A".into(),
                w: z,
                v,
            }],
            vec![vec![0.0]],
            vec![vec![0.0]],
            Convention::Derived,
        )
        .unwrap();
        let g = discretize(&spec, 2, Orientation::Generator).unwrap();
        let kappa = g.kill[0];
        let u0 = CellFunction::constant(p2(), 2, vec![0], 1.0).unwrap();
        let cfg = SimConfig {
            n_paths: 100_000,
            seed: 5,
            record_times: vec![0.0, 1.0, 3.0],
        };
        let r = simulate(&g, &u0, &cfg).unwrap();
        for (ti, &t) in cfg.record_times.iter().enumerate() {
            let e = r.get(ti, 1, 2);
            let want = (-kappa * t).exp();
            assert!(
                (e.mean - want).abs() <= 3.0 * e.stderr.max(1e-12),
                "t = {t}"
            );
        }
    }

    #[test]
    fn doubling_paths_keeps_prefix() {
        let k = RadialKernel::new(p2(), vec![1.0, 0.5]).unwrap();
        let spec = NetworkSpec::new(
            p2(),
            vec![Basin::symmetric(0, "A", k)],
            vec![vec![0.0]],
            vec![vec![0.0]],
            Convention::Derived,
        )
        .unwrap();
        let g = discretize(&spec, 3, Orientation::Generator).unwrap();
        let mut cfg = SimConfig {
            n_paths: 500,
            seed: 99,
            record_times: vec![0.5, 4.0],
        };
        let a = path_outcomes(&g, 2, &cfg).unwrap();
        cfg.n_paths = 1000;
        let b = path_outcomes(&g, 2, &cfg).unwrap();
        assert_eq!(a[..], b[..500]);
    }

    #[test]
    fn rejects_bad_config() {
        let k = RadialKernel::new(p2(), vec![1.0]).unwrap();
        let spec = NetworkSpec::new(
            p2(),
            vec![Basin::symmetric(0, "A", k)],
            vec![vec![0.0]],
            vec![vec![0.0]],
            Convention::Derived,
        )
        .unwrap();
        let g = discretize(&spec, 2, Orientation::Generator).unwrap();
        let u0 = CellFunction::new(p2(), 2, vec![0], vec![vec![1.0, 0.0]]).unwrap();
        let bad = SimConfig {
            n_paths: 10,
            seed: 0,
            record_times: vec![2.0, 1.0],
        };
        assert!(simulate(&g, &u0, &bad).is_err());
        let bad = SimConfig {
            n_paths: 0,
            seed: 0,
            record_times: vec![1.0],
        };
        assert!(simulate(&g, &u0, &bad).is_err());
    }
}
