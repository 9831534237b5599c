//! Radial within-basin kernels `w(|x - y|_p)` of finite depth.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::padic::Prime;

/// Levels `w_j = w(p^-j)` for `j = 1..=J_max`; zero beyond.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadialKernel {
    prime: Prime,
    levels: Vec<f64>,
}

impl RadialKernel {
    pub fn new(prime: Prime, levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::validation("kernel needs at least one level"));
        }
        if let Some((j, w)) = levels
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::validation(format!(
                "kernel level {} is {w}; levels must be finite and >= 0",
                j + 1
            )));
        }
        Ok(RadialKernel { prime, levels })
    }

    pub fn zero(prime: Prime) -> Self {
        RadialKernel {
            prime,
            levels: vec![0.0],
        }
    }

    #[inline]
    pub fn prime(&self) -> Prime {
        self.prime
    }

    #[inline]
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    #[inline]
    pub fn j_max(&self) -> usize {
        self.levels.len()
    }

    /// `w_j`, zero outside `1..=J_max`.
    #[inline]
    pub fn level(&self, j: usize) -> f64 {
        j.checked_sub(1)
            .and_then(|k| self.levels.get(k))
            .copied()
            .unwrap_or(0.0)
    }

    /// Index of the last nonzero level, 0 for the zero kernel.
    pub fn effective_depth(&self) -> usize {
        self.levels
            .iter()
            .rposition(|&w| w != 0.0)
            .map_or(0, |k| k + 1)
    }

    pub fn is_zero(&self) -> bool {
        self.effective_depth() == 0
    }

    /// `w_j <= other_j` at every level.
    pub fn dominated_by(&self, other: &RadialKernel) -> bool {
        let n = self.levels.len().max(other.levels.len());
        (1..=n).all(|j| self.level(j) <= other.level(j))
    }

    pub fn mass(&self) -> f64 {
        kernel_mass(self)
    }

    pub fn eigenvalue(&self, r: i32) -> f64 {
        eigenvalue(self, r)
    }

    /// `w_hat(p^{1-r}) = lambda_r + gamma`.
    pub fn fourier_symbol(&self, r: i32) -> f64 {
        self.eigenvalue(r) + self.mass()
    }

    pub fn symbol(&self, big_r: u32) -> KernelSymbol {
        KernelSymbol {
            gamma: self.mass(),
            eigenvalues: (1..=big_r as i32)
                .map(|k| (-k, self.eigenvalue(-k)))
                .collect(),
        }
    }
}

/// `gamma` together with `lambda_r` for `r = -1, ..., -R`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelSymbol {
    pub gamma: f64,
    pub eigenvalues: Vec<(i32, f64)>,
}

/// `gamma = int_{pZ_p} w(|y|_p) dy = sum_j (1 - 1/p) p^-j w_j`.
pub fn kernel_mass(k: &RadialKernel) -> f64 {
    let p = k.prime;
    let shell = 1.0 - 1.0 / p.as_f64();
    k.levels
        .iter()
        .enumerate()
        .map(|(i, w)| shell * p.powi(-(i as i32 + 1)) * w)
        .sum()
}

/// Eigenvalue of `f -> int w(|x - y|)(f(y) - f(x)) dy` on wavelets at scale `r`:
/// `-(1 - 1/p) sum_{j <= -r} p^-j w_j - p^{r-1} w_{-r}`.
pub fn eigenvalue(k: &RadialKernel, r: i32) -> f64 {
    assert!(r <= -1, "eigenvalue needs r <= -1, got {r}");
    let p = k.prime;
    let top = (-r) as usize;
    let shell = 1.0 - 1.0 / p.as_f64();
    let inner: f64 = (1..=top).map(|j| p.powi(-(j as i32)) * k.level(j)).sum();
    -shell * inner - p.powi(r - 1) * k.level(top)
}

/// Levels `exp(-U_j / kT)`.
pub fn arrhenius_kernel(prime: Prime, barriers: &[f64], kt: f64) -> Result<RadialKernel> {
    if !(kt > 0.0) || !kt.is_finite() {
        return Err(Error::usage(format!(
            "kT must be positive and finite, got {kt}"
        )));
    }
    if let Some(u) = barriers.iter().find(|u| !u.is_finite()) {
        return Err(Error::usage(format!("barrier {u} is not finite")));
    }
    RadialKernel::new(prime, barriers.iter().map(|u| (-u / kt).exp()).collect())
}
