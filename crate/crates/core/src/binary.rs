//! Two-basin folding model: an unfolded basin `U` feeding a native basin `N`
//! through a symmetric cross rate.
//!
//! The basin constants obey `z' = Gamma z` with
//! `Gamma = [[-beta, alpha], [alpha, -gamma]]`, and the native basin carries
//! one extra wavelet bump whose decay sets the second time scale.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{Convention, NetworkSpec};
use crate::padic::{basin_cells, character_exponent, Prime};
use crate::spectral::{SpectralSolver, Tau, TauOptions, TauReport};
use crate::wavelets::{reconstruct, CellFunction, WaveletIndex};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl GammaParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if ![alpha, beta, gamma]
            .iter()
            .all(|x| x.is_finite() && *x > 0.0)
        {
            return Err(Error::usage(format!(
                "alpha, beta, gamma must be positive, got ({alpha}, {beta}, {gamma})"
            )));
        }
        if beta < alpha || gamma < alpha {
            return Err(Error::usage(format!(
                "need beta >= alpha and gamma >= alpha, got alpha = {alpha}, beta = {beta}, gamma = {gamma}"
            )));
        }
        Ok(GammaParams { alpha, beta, gamma })
    }

    /// `A = sqrt(4 alpha^2 + (beta - gamma)^2)`.
    pub fn a(&self) -> f64 {
        (4.0 * self.alpha * self.alpha + (self.beta - self.gamma).powi(2)).sqrt()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[-self.beta, self.alpha, self.alpha, -self.gamma])
    }

    /// `(beta + gamma - A) / 2`, minus the slow eigenvalue.
    pub fn slow_rate(&self) -> f64 {
        0.5 * (self.beta + self.gamma - self.a())
    }
}

/// `(-(beta + gamma + A)/2, (A - beta - gamma)/2)`.
pub fn gamma_eigenvalues(g: &GammaParams) -> (f64, f64) {
    let a = g.a();
    (-0.5 * (g.beta + g.gamma + a), 0.5 * (a - g.beta - g.gamma))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ExpmMode {
    Exact,
    /// Drop the `e^{-tA}` terms; refused when `A < min_a`.
    LargeA {
        min_a: f64,
    },
}

/// Closed-form `e^{t Gamma}`.
pub fn gamma_expm(g: &GammaParams, t: f64, mode: ExpmMode) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::usage(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    let (al, be, ga) = (g.alpha, g.beta, g.gamma);
    let a = g.a();
    let pre = (t * 0.5 * (a - be - ga)).exp();
    let ea = match mode {
        ExpmMode::Exact => (-t * a).exp(),
        ExpmMode::LargeA { min_a } => {
            if a < min_a {
                return Err(Error::usage(format!("A = {a} is below min-A = {min_a}")));
            }
            0.0
        }
    };
    let m11 = (be - ga + a) / (2.0 * a) * ea + (-be + ga + a) / (2.0 * a);
    let m12 = al / a - al / a * ea;
    let m21 = -al / a * ea + al / a;
    let m22 = (be - ga + a) / (2.0 * a) - (be - ga - a) / (2.0 * a) * ea;
    Ok(DMatrix::from_row_slice(2, 2, &[m11, m12, m21, m22]) * pre)
}

/// Largest `{p^{r-1} x}_p` over the depth-`(1 - r)` cells of `pZ_p`.
pub fn phase_extent(p: Prime, r: i32) -> Result<f64> {
    let mut best = 0.0f64;
    for cell in basin_cells(p, 0, (1 - r) as usize)? {
        best = best.max(character_exponent(p, r, 1, &cell)?.value());
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldingScenario {
    /// Two basins: position 0 is `U`, position 1 is `N`.
    pub spec: NetworkSpec,
    /// Scale of the native-basin bump, `r < -1`.
    pub r: i32,
    /// Peak height of the bump.
    pub amplitude: f64,
    pub threshold: f64,
}

const U: usize = 0;
const N: usize = 1;

impl FoldingScenario {
    pub fn gamma_params(&self) -> Result<GammaParams> {
        let spec = &self.spec;
        if spec.basins().len() != 2 {
            return Err(Error::validation(
                "folding scenario needs exactly two basins",
            ));
        }
        let (luv, lnu) = (spec.lambda(U, N), spec.lambda(N, U));
        if (luv - lnu).abs() > 1e-12 * luv.abs().max(lnu.abs()).max(1.0) {
            return Err(Error::validation(format!(
                "folding scenario needs lambda[U,N] = lambda[N,U], got {luv} and {lnu}"
            )));
        }
        let p = spec.prime().as_f64();
        let agg = spec.aggregate_rates();
        let beta = (agg.mu_bar[U] - spec.lambda(U, U)) / p;
        let gamma = (agg.mu_bar[N] - spec.lambda(N, N)) / p;
        GammaParams::new(luv, beta, gamma)
    }

    pub fn validate(&self) -> Result<GammaParams> {
        if self.r >= -1 {
            return Err(Error::validation(format!(
                "bump scale r must be below -1, got {}",
                self.r
            )));
        }
        if !(self.amplitude > 0.0) || !self.amplitude.is_finite() {
            return Err(Error::validation("bump amplitude must be positive"));
        }
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(Error::validation("threshold must be positive"));
        }
        let g = self.gamma_params()?;
        let top = self.amplitude + g.alpha / g.a();
        if top > 1.0 {
            return Err(Error::validation(format!(
                "C + alpha/A = {top} exceeds 1; the initial datum would leave [0, 1]"
            )));
        }
        Ok(g)
    }

    /// Truncation used for the scenario, `R = -r`.
    pub fn truncation(&self) -> u32 {
        (-self.r) as u32
    }

    /// `s_N = w_hat_N(p^{1-r}) - mu_bar_N / p`.
    pub fn fast_rate(&self) -> f64 {
        let p = self.spec.prime().as_f64();
        self.spec.basins()[N].w.fourier_symbol(self.r) - self.spec.aggregate_rates().mu_bar[N] / p
    }
}

/// The folding initial datum: `U` flat at `(A - beta + gamma) / (2A)`, `N`
/// flat at `alpha / A` plus `Re(c Psi_{r,0,1})` scaled so its peak is
/// `amplitude`. Cells at depth `R + 1`.
pub fn ivp2_datum(
    spec: &NetworkSpec,
    g: &GammaParams,
    r: i32,
    amplitude: f64,
    big_r: u32,
) -> Result<CellFunction> {
    if big_r < (-r) as u32 {
        return Err(Error::usage(format!(
            "truncation R = {big_r} cannot resolve r = {r}"
        )));
    }
    let p = spec.prime();
    let a = g.a();
    let u_level = (a - g.beta + g.gamma) / (2.0 * a);
    let n_level = g.alpha / a;
    let idx = WaveletIndex::new(p, r, vec![0; (-r - 1) as usize], 1)?;
    let coef = Complex64::new(amplitude / idx.amplitude(p), 0.0);
    let bump = reconstruct(p, big_r, 0.0, &[(idx, coef)])?;
    let per = bump.len();
    let values = vec![
        vec![u_level; per],
        bump.iter().map(|b| n_level + b).collect(),
    ];
    CellFunction::new(p, big_r as usize + 1, spec.basin_digits(), values)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldingReport {
    pub convention: Convention,
    pub gamma: GammaParams,
    pub a: f64,
    pub eigenvalues: (f64, f64),
    pub fast_rate: f64,
    /// `ln(C + alpha/A) / min{(beta + gamma - A)/2, -fast_rate}`.
    pub tau_formula: f64,
    pub tau_numeric: Tau,
    pub tau_numeric_derived: Tau,
    pub tau: TauReport,
    /// `1 / ((beta + gamma - A)/2)`.
    pub slow_time_constant: f64,
    /// `1 / -fast_rate`.
    pub fast_time_constant: f64,
    /// Basin averages of the initial datum.
    pub average_u: f64,
    pub average_n: f64,
    /// Supremum of the initial datum.
    pub datum_max: f64,
}

pub fn folding_tau(scenario: &FoldingScenario) -> Result<FoldingReport> {
    let g = scenario.validate()?;
    let spec = &scenario.spec;
    let big_r = scenario.truncation();
    let datum = ivp2_datum(spec, &g, scenario.r, scenario.amplitude, big_r)?;
    let a = g.a();
    let fast = scenario.fast_rate();
    let slow = g.slow_rate();
    let tau_formula = (scenario.amplitude + g.alpha / a).ln() / slow.min(-fast);
    let opts = TauOptions::with_threshold(scenario.threshold);
    let tau = SpectralSolver::new(spec, big_r)?.absorbing_time(&datum, &opts)?;
    let derived = if spec.convention() == Convention::Derived {
        tau.tau
    } else {
        SpectralSolver::new(&spec.with_convention(Convention::Derived), big_r)?
            .absorbing_time(&datum, &opts)?
            .tau
    };
    Ok(FoldingReport {
        convention: spec.convention(),
        gamma: g,
        a,
        eigenvalues: gamma_eigenvalues(&g),
        fast_rate: fast,
        tau_formula,
        tau_numeric: tau.tau,
        tau_numeric_derived: derived,
        tau,
        slow_time_constant: 1.0 / slow,
        fast_time_constant: 1.0 / -fast,
        average_u: datum.integral(U),
        average_n: datum.integral(N),
        datum_max: datum
            .values()
            .iter()
            .flatten()
            .fold(f64::NEG_INFINITY, |m, v| m.max(*v)),
    })
}
