//! Finite-tree discretization of the integral master equation.
//!
//! States are the depth-`N` cells of every basin. For kernels whose last
//! nonzero level is below `N` the kernel is constant between distinct cells
//! and vanishes inside a cell, so the discrete generator represents the
//! integral operator on depth-`N` step functions exactly. The solution is a
//! plain dense matrix exponential, independent of any wavelet machinery.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expm::expm_t;
use crate::network::{Convention, NetworkSpec};
use crate::padic::{basin_cells, CellAddress, Prime};
use crate::spectral::SpectralSolver;
use crate::wavelets::CellFunction;

pub const MAX_STATES: usize = 4096;

/// Which kernel drives the jumps out of a point `x`.
///
/// `Generator` jumps with `j(x|.)` (the `w`/`lambda` kernels) and kills at
/// the sink rate; this is the backward operator whose semigroup gives
/// `E_x[u0(X_t)]`. `Prose` jumps with `j(.|x)` (the `v`/`mu` kernels)
/// without killing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Generator,
    Prose,
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generator" => Ok(Orientation::Generator),
            "prose" => Ok(Orientation::Prose),
            other => Err(Error::usage(format!(
                "unknown kernel orientation {other:?} (expected generator or prose)"
            ))),
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Generator => "generator",
            Orientation::Prose => "prose",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteGenerator {
    pub prime: Prime,
    pub level: usize,
    pub basins: Vec<u8>,
    pub states: Vec<CellAddress>,
    /// Position of each state's basin in `basins`.
    pub basin_of: Vec<usize>,
    pub q: DMatrix<f64>,
    pub kill: Vec<f64>,
}

impl DiscreteGenerator {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    /// Total jump rate out of state `i` (excluding killing).
    pub fn jump_rate(&self, i: usize) -> f64 {
        (0..self.dim())
            .filter(|&j| j != i)
            .map(|j| self.q[(i, j)])
            .sum()
    }

    /// One row per state: `state,basin,digits,kill,q_0,...,q_{n-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "state,basin,digits,kill")?;
        for j in 0..self.dim() {
            write!(w, ",q_{j}")?;
        }
        writeln!(w)?;
        for (i, s) in self.states.iter().enumerate() {
            write!(
                w,
                "{i},{},{},{:.16e}",
                s.basin(),
                s.digit_label(self.prime),
                self.kill[i]
            )?;
            for j in 0..self.dim() {
                write!(w, ",{:.16e}", self.q[(i, j)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn discretize(
    spec: &NetworkSpec,
    level: usize,
    orientation: Orientation,
) -> Result<DiscreteGenerator> {
    let depth = spec.kernel_depth();
    if level <= depth {
        return Err(Error::usage(format!(
            "level N = {level} must exceed the kernel depth {depth}: within-cell kernel mass nonzero, discretization not exact"
        )));
    }
    let p = spec.prime();
    let per = p.pow(level as u32 - 1)? as usize;
    let n = per
        .checked_mul(spec.basins().len())
        .filter(|&n| n <= MAX_STATES)
        .ok_or_else(|| Error::usage(format!("more than {MAX_STATES} states at level {level}")))?;

    let mut states = Vec::with_capacity(n);
    let mut basin_of = Vec::with_capacity(n);
    for (a, b) in spec.basins().iter().enumerate() {
        states.extend(basin_cells(p, b.digit, level)?);
        basin_of.extend(std::iter::repeat_n(a, per));
    }

    let vol = p.powi(-(level as i32));
    let agg = spec.aggregate_rates();
    let mut q = DMatrix::zeros(n, n);
    let mut kill = vec![0.0; n];
    for i in 0..n {
        let a = basin_of[i];
        let basin = &spec.basins()[a];
        let mut out = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let b = basin_of[j];
            let density = if a == b {
                let k = first_difference(states[i].digits(), states[j].digits());
                match orientation {
                    Orientation::Generator => basin.w.level(k),
                    Orientation::Prose => basin.v.level(k),
                }
            } else {
                match orientation {
                    Orientation::Generator => spec.lambda(a, b),
                    Orientation::Prose => spec.mu(b, a),
                }
            };
            let rate = vol * density;
            q[(i, j)] = rate;
            out += rate;
        }
        if orientation == Orientation::Generator {
            kill[i] = agg.sink[a];
        }
        q[(i, i)] = -(out + kill[i]);
    }
    Ok(DiscreteGenerator {
        prime: p,
        level,
        basins: spec.basin_digits(),
        states,
        basin_of,
        q,
        kill,
    })
}

// 1-based index of the first differing digit, i.e. the valuation of I - J.
fn first_difference(x: &[u8], y: &[u8]) -> usize {
    x.iter()
        .zip(y)
        .position(|(a, b)| a != b)
        .map_or(x.len() + 1, |k| k + 1)
}

fn check_datum(gen: &DiscreteGenerator, u0: &CellFunction) -> Result<()> {
    if u0.depth() != gen.level || u0.basins() != gen.basins.as_slice() || u0.prime() != gen.prime {
        return Err(Error::validation(format!(
            "datum (depth {}) does not live on the level-{} cells of the generator",
            u0.depth(),
            gen.level
        )));
    }
    Ok(())
}

/// `u(t) = e^{tQ} u0`.
pub fn solve(gen: &DiscreteGenerator, u0: &CellFunction, t: f64) -> Result<CellFunction> {
    check_datum(gen, u0)?;
    let e = expm_t(&gen.q, t)?;
    let v = e * DVector::from_vec(u0.flatten());
    CellFunction::from_flat(gen.prime, gen.level, gen.basins.clone(), v.as_slice())
}

/// `e^{tQ} 1`, the probability of surviving to `t` from each state.
pub fn survival(gen: &DiscreteGenerator, t: f64) -> Result<Vec<f64>> {
    let e = expm_t(&gen.q, t)?;
    Ok((e * DVector::from_element(gen.dim(), 1.0))
        .iter()
        .copied()
        .collect())
}

/// Sup-norm gap between the spectral and the discretized solution at each
/// time. Both are run at level `N = datum depth` under the derived
/// convention.
pub fn compare(spec: &NetworkSpec, datum: &CellFunction, times: &[f64]) -> Result<Vec<f64>> {
    if spec.convention() != Convention::Derived {
        return Err(Error::usage(
            "the oracle comparison is defined for the derived convention",
        ));
    }
    let level = datum.depth();
    if level < 2 {
        return Err(Error::usage(
            "oracle comparison needs datum depth at least 2",
        ));
    }
    let solver = SpectralSolver::new(spec, level as u32 - 1)?;
    let state = solver.init(datum, false)?;
    let gen = discretize(spec, level, Orientation::Generator)?;
    let u0 = DVector::from_vec(datum.flatten());
    times
        .iter()
        .map(|&t| {
            let spectral = solver.eval_density(&state, t)?.flatten();
            let oracle = expm_t(&gen.q, t)? * &u0;
            Ok(spectral
                .iter()
                .zip(oracle.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::RadialKernel;
    use crate::network::Basin;

    fn p2() -> Prime {
        Prime::new(2).unwrap()
    }

    fn single(levels: Vec<f64>) -> NetworkSpec {
        let k = RadialKernel::new(p2(), levels).unwrap();
        NetworkSpec::new(
            p2(),
            vec![Basin::symmetric(0, "A", k)],
            vec![vec![0.0]],
            vec![vec![0.0]],
            Convention::Derived,
        )
        .unwrap()
    }

    #[test]
    fn single_basin_generator() {
        let g = discretize(&single(vec![1.0]), 2, Orientation::Generator).unwrap();
        assert_eq!(
            g.q,
            DMatrix::from_row_slice(2, 2, &[-0.25, 0.25, 0.25, -0.25])
        );
        assert_eq!(g.kill, vec![0.0, 0.0]);
    }

    #[test]
    fn depth_precondition() {
        let err = discretize(&single(vec![1.0, 1.0]), 2, Orientation::Generator).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
        // trailing zero levels do not count
        assert!(discretize(&single(vec![1.0, 0.0]), 2, Orientation::Generator).is_ok());
    }

    #[test]
    fn zero_rates_leave_only_killing() {
        let z = RadialKernel::zero(p2());
        let v = RadialKernel::new(p2(), vec![1.0]).unwrap();
        let spec = NetworkSpec::new(
            p2(),
            vec![
                Basin {
                    digit: 0,
                    name: "A".into(),
                    w: z.clone(),
                    v,
                },
                Basin::symmetric(1, "B", z),
            ],
            vec![vec![0.0; 2]; 2],
            vec![vec![0.0; 2]; 2],
            Convention::Derived,
        )
        .unwrap();
        let g = discretize(&spec, 3, Orientation::Generator).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(g.kill.iter().map(|k| -k).collect()));
        assert_eq!(g.q, want);
        assert_eq!(g.kill[0], 0.25);
        assert_eq!(g.kill[4], 0.0);
    }

    #[test]
    fn conservative_two_basin_row_sums() {
        let k = RadialKernel::new(p2(), vec![2.0]).unwrap();
        let spec = NetworkSpec::new(
            p2(),
            vec![
                Basin::symmetric(0, "U", k.clone()),
                Basin::symmetric(1, "N", k),
            ],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            Convention::Derived,
        )
        .unwrap();
        let g = discretize(&spec, 2, Orientation::Generator).unwrap();
        assert_eq!(g.dim(), 4);
        for i in 0..4 {
            assert!(g.q.row(i).sum().abs() < 1e-15);
        }
    }

    #[test]
    fn solve_examples() {
        let g = discretize(&single(vec![1.0]), 2, Orientation::Generator).unwrap();
        let u0 = CellFunction::new(p2(), 2, vec![0], vec![vec![1.0, 0.0]]).unwrap();
        assert_eq!(solve(&g, &u0, 0.0).unwrap(), u0);
        for t in [0.5, 2.0, 9.0] {
            let u = solve(&g, &u0, t).unwrap();
            let e = (-t / 2.0).exp();
            assert!((u.basin_values(0)[0] - 0.5 * (1.0 + e)).abs() < 1e-14);
            assert!((u.basin_values(0)[1] - 0.5 * (1.0 - e)).abs() < 1e-14);
        }
    }

    #[test]
    fn uniform_kill() {
        let z = RadialKernel::zero(p2());
        let v = RadialKernel::new(p2(), vec![1.2]).unwrap();
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
        let g = discretize(&spec, 3, Orientation::Generator).unwrap();
        let kappa = g.kill[0];
        let one = CellFunction::constant(p2(), 3, vec![0], 1.0).unwrap();
        let u = solve(&g, &one, 1.7).unwrap();
        for v in u.basin_values(0) {
            assert!((v - (-kappa * 1.7).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn compare_examples() {
        let spec = single(vec![1.0]);
        let u0 = CellFunction::new(p2(), 2, vec![0], vec![vec![1.0, 0.0]]).unwrap();
        for gap in compare(&spec, &u0, &[0.1, 1.0, 10.0]).unwrap() {
            assert!(gap <= 1e-10);
        }
        let zero = CellFunction::constant(p2(), 2, vec![0], 0.0).unwrap();
        assert_eq!(compare(&spec, &zero, &[1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn prose_orientation_uses_incoming_kernels() {
        let w = RadialKernel::new(p2(), vec![1.0]).unwrap();
        let v = RadialKernel::new(p2(), vec![3.0]).unwrap();
        let spec = NetworkSpec::new(
            p2(),
            vec![Basin {
                digit: 0,
                name: "A".into(),
                w,
                v,
            }],
            vec![vec![0.0]],
            vec![vec![0.0]],
            Convention::Derived,
        )
        .unwrap();
        let g = discretize(&spec, 2, Orientation::Prose).unwrap();
        assert_eq!(g.q[(0, 1)], 0.75);
        assert_eq!(g.kill, vec![0.0, 0.0]);
    }

    #[test]
    fn csv_dump_shape() {
        let g = discretize(&single(vec![1.0]), 3, Orientation::Generator).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "state,basin,digits,kill,q_0,q_1,q_2,q_3");
        assert!(lines[2].starts_with("1,0,01,"));
    }
}
