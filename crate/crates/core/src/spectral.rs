//! Closed-form evolution of the master equation in the wavelet basis.
//!
//! Basin averages couple through `Lambda` and evolve by `e^{t Lambda}`;
//! every wavelet coefficient `C_{rmj}^{(a)}` decays on its own at
//! `s_{a,r} = w_hat_a(p^{1-r}) - mu_bar_a / p`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expm::expm_t;
use crate::network::{LambdaMatrix, NetworkSpec};
use crate::padic::CellAddress;
use crate::wavelets::{enumerate_wavelets, expand, reconstruct, CellFunction, WaveletIndex};

/// Largest matrix accepted by [`matrix_exponential`].
pub const MAX_EXPM_DIM: usize = 16;

/// `e^{tM}` for the small coefficient generators handled here.
pub fn matrix_exponential(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if m.nrows() > MAX_EXPM_DIM {
        return Err(Error::usage(format!(
            "matrix_exponential is limited to dimension {MAX_EXPM_DIM}, got {}",
            m.nrows()
        )));
    }
    expm_t(m, t)
}

/// Coefficients of the solution at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    /// Basin constants, in network basin order.
    pub c0: Vec<f64>,
    /// `coeffs[a][k]` belongs to `wavelets()[k]`.
    pub coeffs: Vec<Vec<Complex64>>,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRate {
    pub basin: String,
    pub r: i32,
    pub rate: f64,
    /// `4 / -rate`, infinite for a zero rate.
    pub sigma: f64,
    /// `1 / -rate`.
    pub inverse_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Tau {
    Finite(f64),
    Infinite,
}

impl Tau {
    pub fn is_finite(&self) -> bool {
        matches!(self, Tau::Finite(_))
    }

    pub fn value(&self) -> f64 {
        match self {
            Tau::Finite(t) => *t,
            Tau::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TauOptions {
    pub threshold: f64,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
}

impl TauOptions {
    pub fn with_threshold(threshold: f64) -> Self {
        TauOptions {
            threshold,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossingCell {
    pub basin: String,
    pub digits: Vec<u8>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominantMode {
    pub basin: String,
    pub index: WaveletIndex,
    /// `Re(C(tau) Psi)` on the crossing cell.
    pub contribution: f64,
    /// The basin-constant part of the density on the same cell.
    pub constant_part: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TauReport {
    pub tau: Tau,
    /// The datum already met the threshold for a full grid step at `t = 0`.
    pub immediate: bool,
    pub threshold: f64,
    pub dt: f64,
    pub horizon: f64,
    pub steps: usize,
    pub crossing: Option<CrossingCell>,
    pub dominant: Option<DominantMode>,
}

const MAX_GRID_STEPS: f64 = 2.0e6;

#[derive(Clone, Debug)]
pub struct SpectralSolver {
    spec: NetworkSpec,
    big_r: u32,
    lambda: LambdaMatrix,
    wavelets: Vec<WaveletIndex>,
    // rates[a][k] for r = -(k + 1)
    rates: Vec<Vec<f64>>,
}

impl SpectralSolver {
    pub fn new(spec: &NetworkSpec, big_r: u32) -> Result<Self> {
        if big_r == 0 {
            return Err(Error::usage("truncation R must be at least 1"));
        }
        spec.prime().pow(big_r)?;
        let p = spec.prime().as_f64();
        let agg = spec.aggregate_rates();
        let rates = spec
            .basins()
            .iter()
            .zip(&agg.mu_bar)
            .map(|(b, mb)| {
                (1..=big_r as i32)
                    .map(|k| b.w.fourier_symbol(-k) - mb / p)
                    .collect()
            })
            .collect();
        Ok(SpectralSolver {
            spec: spec.clone(),
            big_r,
            lambda: spec.build_lambda(),
            wavelets: enumerate_wavelets(spec.prime(), big_r),
            rates,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn truncation(&self) -> u32 {
        self.big_r
    }

    /// Depth `R + 1` of the cells the solver works on.
    pub fn depth(&self) -> usize {
        self.big_r as usize + 1
    }

    pub fn lambda(&self) -> &LambdaMatrix {
        &self.lambda
    }

    pub fn wavelets(&self) -> &[WaveletIndex] {
        &self.wavelets
    }

    /// `s_{a,r}`.
    pub fn rate(&self, basin: usize, r: i32) -> f64 {
        self.rates[basin][(-r - 1) as usize]
    }

    pub fn decay_rates(&self) -> Vec<DecayRate> {
        let mut out = Vec::new();
        for (a, b) in self.spec.basins().iter().enumerate() {
            for k in 1..=self.big_r as i32 {
                let rate = self.rate(a, -k);
                let (sigma, inverse_rate) = if rate == 0.0 {
                    (f64::INFINITY, f64::INFINITY)
                } else {
                    (4.0 / -rate, 1.0 / -rate)
                };
                out.push(DecayRate {
                    basin: b.name.clone(),
                    r: -k,
                    rate,
                    sigma,
                    inverse_rate,
                });
            }
        }
        out
    }

    fn check_datum(&self, datum: &CellFunction) -> Result<()> {
        if datum.prime() != self.spec.prime() {
            return Err(Error::validation("datum is over a different prime"));
        }
        if datum.depth() != self.depth() {
            return Err(Error::validation(format!(
                "datum depth {} does not match truncation R + 1 = {}",
                datum.depth(),
                self.depth()
            )));
        }
        if datum.basins() != self.spec.basin_digits().as_slice() {
            return Err(Error::validation(
                "datum basins differ from the network basins",
            ));
        }
        Ok(())
    }

    /// Expand `datum`; with `probabilistic` set it must lie in `[0, 1]`.
    pub fn init(&self, datum: &CellFunction, probabilistic: bool) -> Result<SpectralState> {
        self.check_datum(datum)?;
        if probabilistic && !datum.in_unit_interval() {
            return Err(Error::validation("datum leaves [0, 1]"));
        }
        let p = self.spec.prime();
        let mut c0 = Vec::with_capacity(datum.basins().len());
        let mut coeffs = Vec::with_capacity(datum.basins().len());
        for k in 0..datum.basins().len() {
            let e = expand(p, self.depth(), datum.basin_values(k))?;
            c0.push(e.c0);
            coeffs.push(e.coeffs.into_iter().map(|(_, c)| c).collect());
        }
        Ok(SpectralState { c0, coeffs, t: 0.0 })
    }

    pub fn evolve(&self, state: &SpectralState, t: f64) -> Result<SpectralState> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::usage(format!(
                "evolution time must be finite and >= 0, got {t}"
            )));
        }
        let e = matrix_exponential(&self.lambda.entries, t)?;
        let c0 = (&e * DVector::from_column_slice(&state.c0))
            .iter()
            .copied()
            .collect();
        let coeffs = state
            .coeffs
            .iter()
            .enumerate()
            .map(|(a, row)| {
                row.iter()
                    .zip(&self.wavelets)
                    .map(|(c, idx)| c * (self.rate(a, idx.r) * t).exp())
                    .collect()
            })
            .collect();
        Ok(SpectralState {
            c0,
            coeffs,
            t: state.t + t,
        })
    }

    /// Cell values of `state` itself.
    pub fn density(&self, state: &SpectralState) -> Result<CellFunction> {
        let p = self.spec.prime();
        let values = state
            .c0
            .iter()
            .zip(&state.coeffs)
            .map(|(c0, row)| {
                let pairs: Vec<(WaveletIndex, Complex64)> = self
                    .wavelets
                    .iter()
                    .cloned()
                    .zip(row.iter().copied())
                    .collect();
                reconstruct(p, self.big_r, *c0, &pairs)
            })
            .collect::<Result<Vec<_>>>()?;
        CellFunction::new(p, self.depth(), self.spec.basin_digits(), values)
    }

    pub fn eval_density(&self, state: &SpectralState, t: f64) -> Result<CellFunction> {
        self.density(&self.evolve(state, t)?)
    }

    /// Characteristic rates used for the default time grid: every nonzero
    /// `|s_{a,r}|` and `|Lambda_{ab}|`.
    fn rate_range(&self) -> Option<(f64, f64)> {
        let all = self
            .rates
            .iter()
            .flatten()
            .chain(self.lambda.entries.iter())
            .map(|x| x.abs())
            .filter(|&x| x > 0.0);
        all.fold(None, |acc, x| match acc {
            None => Some((x, x)),
            Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
        })
    }

    /// First time the maximal cell density reaches `threshold` and stays
    /// there for at least one grid step. Scans a uniform grid, then bisects
    /// the bracketing step to relative `1e-9`.
    pub fn absorbing_time(&self, datum: &CellFunction, opts: &TauOptions) -> Result<TauReport> {
        let theta = opts.threshold;
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::usage(format!(
                "threshold must be positive, got {theta}"
            )));
        }
        let state = self.init(datum, true)?;
        let (lo_rate, hi_rate) = self.rate_range().unwrap_or((1.0, 1.0));
        let horizon = opts.horizon.unwrap_or(100.0 / lo_rate);
        let mut dt = opts.dt.unwrap_or(1e-3 / hi_rate);
        if !(horizon > 0.0) || !(dt > 0.0) || !horizon.is_finite() || !dt.is_finite() {
            return Err(Error::usage(
                "tau horizon and dt must be positive and finite",
            ));
        }
        if horizon / dt > MAX_GRID_STEPS {
            dt = horizon / MAX_GRID_STEPS;
        }
        let steps = (horizon / dt).ceil() as usize;

        let modes = ModeTable::new(self, &state);
        let step_c0 = matrix_exponential(&self.lambda.entries, dt)?;
        let step_decay: Vec<Vec<f64>> = self
            .rates
            .iter()
            .map(|row| row.iter().map(|s| (s * dt).exp()).collect())
            .collect();

        let mut c0 = DVector::from_column_slice(&state.c0);
        let mut decay = vec![vec![1.0; self.big_r as usize]; self.rates.len()];
        let mut prev = modes.max_excess(&c0, &decay, theta).0;
        let mut found = None;
        for k in 0..steps {
            c0 = &step_c0 * &c0;
            for (d, s) in decay.iter_mut().zip(&step_decay) {
                for (x, f) in d.iter_mut().zip(s) {
                    *x *= f;
                }
            }
            let cur = modes.max_excess(&c0, &decay, theta).0;
            if prev >= 0.0 && cur >= 0.0 {
                found = Some(k);
                break;
            }
            prev = cur;
        }

        let mut report = TauReport {
            tau: Tau::Infinite,
            immediate: false,
            threshold: theta,
            dt,
            horizon,
            steps,
            crossing: None,
            dominant: None,
        };
        let Some(k) = found else {
            return Ok(report);
        };
        let tau = if k == 0 {
            report.immediate = true;
            0.0
        } else {
            let f = |t: f64| -> Result<f64> { Ok(self.max_density_at(&state, t)?.0 - theta) };
            let (mut lo, mut hi) = ((k - 1) as f64 * dt, k as f64 * dt);
            while hi - lo > 1e-9 * hi {
                let mid = 0.5 * (lo + hi);
                if f(mid)? >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        report.tau = Tau::Finite(tau);
        let at = self.evolve(&state, tau)?;
        let (value, a, i) = self.max_density_at(&state, tau)?;
        let cell = CellAddress::from_index(
            self.spec.prime(),
            self.spec.basins()[a].digit,
            self.depth(),
            i,
        )?;
        let basin = self.spec.basins()[a].name.clone();
        report.dominant = self.dominant_mode(&at, a, &cell)?;
        report.crossing = Some(CrossingCell {
            basin,
            digits: cell.digits().to_vec(),
            value,
        });
        Ok(report)
    }

    /// `(max value, basin position, cell index)` of the density at `t`.
    fn max_density_at(&self, state: &SpectralState, t: f64) -> Result<(f64, usize, usize)> {
        let f = self.eval_density(state, t)?;
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for (a, row) in f.values().iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if v > best.0 {
                    best = (v, a, i);
                }
            }
        }
        Ok(best)
    }

    fn dominant_mode(
        &self,
        at: &SpectralState,
        a: usize,
        cell: &CellAddress,
    ) -> Result<Option<DominantMode>> {
        let p = self.spec.prime();
        let mut best: Option<(f64, &WaveletIndex)> = None;
        for (idx, c) in self.wavelets.iter().zip(&at.coeffs[a]) {
            let v = (c * crate::wavelets::eval_wavelet(p, idx, cell)?).re;
            if v != 0.0 && best.is_none_or(|(b, _)| v.abs() > b.abs()) {
                best = Some((v, idx));
            }
        }
        Ok(best.map(|(v, idx)| DominantMode {
            basin: self.spec.basins()[a].name.clone(),
            index: idx.clone(),
            contribution: v,
            constant_part: p.as_f64().sqrt() * at.c0[a],
        }))
    }

    /// `p^{1/2} lim_{t -> inf} e^{t Lambda} C_0`: zero when every eigenvalue
    /// has negative real part, the spectral projection onto a semisimple
    /// zero eigenvalue otherwise.
    pub fn long_term_limit(&self, state: &SpectralState) -> Result<Vec<f64>> {
        let l = &self.lambda.entries;
        let n = l.nrows();
        let sqrt_p = self.spec.prime().as_f64().sqrt();
        let scale = l.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if scale == 0.0 {
            return Ok(state.c0.iter().map(|c| sqrt_p * c).collect());
        }
        let tol = 1e-10 * scale;
        let eig = self.lambda.eigenvalues();
        if eig.iter().any(|z| z.re > tol) {
            return Err(Error::Unsupported(
                "Lambda has an eigenvalue with positive real part".into(),
            ));
        }
        if eig.iter().any(|z| z.re.abs() <= tol && z.im.abs() > tol) {
            return Err(Error::Unsupported(
                "Lambda has a purely imaginary eigenvalue pair".into(),
            ));
        }
        let zeros = eig.iter().filter(|z| z.norm() <= tol).count();
        if zeros == 0 {
            return Ok(vec![0.0; n]);
        }
        let right = null_space(l, tol);
        let left = null_space(&l.transpose(), tol);
        if right.ncols() != zeros || left.ncols() != zeros {
            return Err(Error::Unsupported(
                "zero eigenvalue of Lambda is defective; no spectral projection".into(),
            ));
        }
        let gram = left.transpose() * &right;
        let inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Unsupported("zero eigenvalue of Lambda is defective".into()))?;
        let proj = &right * inv * left.transpose();
        let lim = proj * DVector::from_column_slice(&state.c0);
        Ok(lim.iter().map(|c| sqrt_p * c).collect())
    }
}

// Right singular vectors of `m` with singular value below `tol`, as columns.
fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= tol)
        .map(|(k, _)| v_t.row(k).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

// Per-cell wavelet sums grouped by (basin, scale), so the density on a time
// grid costs one multiply-add per (cell, scale).
struct ModeTable {
    sqrt_p: f64,
    // g[a][k][i]: sum over j of Re(C_{r m j} Psi_{r m j}(cell i)), r = -(k+1)
    g: Vec<Vec<Vec<f64>>>,
}

impl ModeTable {
    fn new(solver: &SpectralSolver, state: &SpectralState) -> Self {
        let p = solver.spec.prime();
        let pv = p.get() as usize;
        let big_r = solver.big_r as usize;
        let cells = pv.pow(big_r as u32);
        let g = state
            .coeffs
            .iter()
            .map(|row| {
                let mut per = vec![vec![0.0; cells]; big_r];
                for (idx, c) in solver.wavelets.iter().zip(row) {
                    let k = (-idx.r - 1) as usize;
                    let plen = idx.m_digits.len();
                    let block = pv.pow((big_r - plen - 1) as u32);
                    let base = idx
                        .m_digits
                        .iter()
                        .fold(0usize, |a, &d| a * pv + d as usize)
                        * pv;
                    for d in 0..pv {
                        let v = (c * idx.value_at_digit(p, d as u8)).re;
                        let start = (base + d) * block;
                        for x in &mut per[k][start..start + block] {
                            *x += v;
                        }
                    }
                }
                per
            })
            .collect();
        ModeTable {
            sqrt_p: p.as_f64().sqrt(),
            g,
        }
    }

    fn max_excess(&self, c0: &DVector<f64>, decay: &[Vec<f64>], theta: f64) -> (f64, usize, usize) {
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for (a, per) in self.g.iter().enumerate() {
            let base = self.sqrt_p * c0[a];
            let cells = per.first().map_or(0, Vec::len);
            for i in 0..cells {
                let mut v = base;
                for (k, row) in per.iter().enumerate() {
                    v += decay[a][k] * row[i];
                }
                if v - theta > best.0 {
                    best = (v - theta, a, i);
                }
            }
        }
        best
    }
}
