//! Networks of basins `a + pZ_p` with radial kernels inside each basin and
//! constant rates between basins.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::RadialKernel;
use crate::padic::Prime;

/// How the cross-basin couplings enter the coefficient generator `Lambda`.
///
/// `Derived` scales off-diagonals by `1/p`, which is what projecting the
/// master equation onto the normalized constant produces. `Paper` keeps the
/// bare rates, under which the row sums vanish exactly on the equality
/// condition of the classification.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    Paper,
    #[default]
    Derived,
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Convention::Paper),
            "derived" => Ok(Convention::Derived),
            other => Err(Error::usage(format!(
                "unknown convention {other:?} (expected paper or derived)"
            ))),
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::Paper => "paper",
            Convention::Derived => "derived",
        })
    }
}

/// One basin: its `p^0` digit, a display name, the outgoing kernel `w` and
/// the incoming kernel `v`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Basin {
    pub digit: u8,
    pub name: String,
    pub w: RadialKernel,
    pub v: RadialKernel,
}

impl Basin {
    /// Basin with `v = w`.
    pub fn symmetric(digit: u8, name: impl Into<String>, w: RadialKernel) -> Self {
        Basin {
            digit,
            name: name.into(),
            v: w.clone(),
            w,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    prime: Prime,
    basins: Vec<Basin>,
    lambda: DMatrix<f64>,
    mu: DMatrix<f64>,
    convention: Convention,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRates {
    pub lambda_bar: Vec<f64>,
    pub mu_bar: Vec<f64>,
    pub sink: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaMatrix {
    pub entries: DMatrix<f64>,
    pub convention: Convention,
}

impl LambdaMatrix {
    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.row_iter().map(|r| r.sum()).collect()
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.entries
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| Complex64::new(z.re, z.im))
            .collect()
    }

    /// `-Lambda` is a Z-matrix, nonsingular, with entrywise nonnegative
    /// inverse (to `-1e-12`).
    pub fn is_m_matrix(&self) -> bool {
        let neg = -&self.entries;
        let n = neg.nrows();
        let z = (0..n).all(|i| (0..n).all(|j| i == j || neg[(i, j)] <= 0.0));
        if !z {
            return false;
        }
        let sv = neg.clone().singular_values();
        let (lo, hi) = sv
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &s| (l.min(s), h.max(s)));
        if hi == 0.0 || lo <= 1e-12 * hi {
            return false;
        }
        match neg.try_inverse() {
            Some(inv) => inv.iter().all(|&x| x >= -1e-12),
            None => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub convention: Convention,
    pub g1: Vec<String>,
    pub g2: Vec<String>,
    pub is_conservative_matrix: bool,
    pub dies_at_infinity: bool,
    pub is_substochastic: bool,
    pub is_m_matrix: bool,
    pub row_sums: Vec<f64>,
    /// `true` when G1/G2 were decided in exact rational arithmetic.
    pub exact: bool,
}

impl Classification {
    pub fn summary(&self) -> String {
        let set = |v: &[String]| format!("{{{}}}", v.join(","));
        let regime = if self.is_conservative_matrix {
            "Markov semigroup"
        } else if self.dies_at_infinity {
            "dies at infinity"
        } else if self.is_substochastic {
            "substochastic semigroup"
        } else {
            "not substochastic"
        };
        let mut parts = Vec::new();
        if !self.g1.is_empty() {
            parts.push(format!("G1 = {}", set(&self.g1)));
        }
        if !self.g2.is_empty() {
            parts.push(format!("G2 = {}", set(&self.g2)));
        }
        parts.push(regime.to_string());
        parts.push(
            if self.is_conservative_matrix {
                "Λ𝟙 = 0"
            } else {
                "Λ𝟙 ≠ 0"
            }
            .to_string(),
        );
        parts.join("; ")
    }
}

fn check_rate(x: f64, what: &str) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::validation(format!(
            "{what} = {x}; rates must be finite and >= 0"
        )));
    }
    Ok(())
}

impl NetworkSpec {
    /// `lambda[a][b]` and `mu[a][b]` for `a != b` are the cross rates; the
    /// diagonals are fixed by the kernels (`p` times their mass) and must be
    /// given as 0 or as that value.
    pub fn new(
        prime: Prime,
        basins: Vec<Basin>,
        lambda: Vec<Vec<f64>>,
        mu: Vec<Vec<f64>>,
        convention: Convention,
    ) -> Result<Self> {
        let n = basins.len();
        if n == 0 {
            return Err(Error::validation("network needs at least one basin"));
        }
        for (i, b) in basins.iter().enumerate() {
            if b.digit as u32 >= prime.get() {
                return Err(Error::validation(format!(
                    "basin {} digit {} is not below p = {prime}",
                    b.name, b.digit
                )));
            }
            if basins[..i].iter().any(|o| o.digit == b.digit) {
                return Err(Error::validation(format!(
                    "basin digit {} used twice",
                    b.digit
                )));
            }
            if basins[..i].iter().any(|o| o.name == b.name) {
                return Err(Error::validation(format!(
                    "basin name {:?} used twice",
                    b.name
                )));
            }
            if b.w.prime() != prime || b.v.prime() != prime {
                return Err(Error::validation(format!(
                    "basin {}: kernel over a different prime",
                    b.name
                )));
            }
        }
        let to_matrix = |m: Vec<Vec<f64>>, what: &str| -> Result<DMatrix<f64>> {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return Err(Error::validation(format!("{what} must be {n}x{n}")));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| m[i][j]))
        };
        let mut lambda = to_matrix(lambda, "lambda")?;
        let mut mu = to_matrix(mu, "mu")?;
        let p = prime.as_f64();
        for a in 0..n {
            for b in 0..n {
                let (na, nb) = (&basins[a].name, &basins[b].name);
                check_rate(lambda[(a, b)], &format!("lambda[{na},{nb}]"))?;
                check_rate(mu[(a, b)], &format!("mu[{na},{nb}]"))?;
            }
            for (m, k, what) in [
                (&mut lambda, &basins[a].w, "lambda"),
                (&mut mu, &basins[a].v, "mu"),
            ] {
                let diag = p * k.mass();
                let given = m[(a, a)];
                if given != 0.0 && (given - diag).abs() > 1e-12 * diag.abs().max(1.0) {
                    return Err(Error::validation(format!(
                        "{what}[{0},{0}] = {given} but the kernel fixes it at {diag}",
                        basins[a].name
                    )));
                }
                m[(a, a)] = diag;
            }
        }
        let spec = NetworkSpec {
            prime,
            basins,
            lambda,
            mu,
            convention,
        };
        spec.check_hypothesis()?;
        Ok(spec)
    }

    fn check_hypothesis(&self) -> Result<()> {
        let n = self.basins.len();
        for a in 0..n {
            for b in 0..n {
                if a != b && self.lambda[(a, b)] > self.mu[(b, a)] {
                    return Err(Error::validation(format!(
                        "lambda[{0},{1}] = {2} exceeds mu[{1},{0}] = {3}",
                        self.basins[a].name,
                        self.basins[b].name,
                        self.lambda[(a, b)],
                        self.mu[(b, a)]
                    )));
                }
            }
            let bs = &self.basins[a];
            if !bs.w.dominated_by(&bs.v) {
                return Err(Error::validation(format!(
                    "basin {}: kernel w exceeds v at some level",
                    bs.name
                )));
            }
        }
        if self.aggregate_rates().mu_bar.iter().all(|&m| m == 0.0) {
            return Err(Error::validation("mu_bar vanishes on every basin"));
        }
        Ok(())
    }

    #[inline]
    pub fn prime(&self) -> Prime {
        self.prime
    }

    #[inline]
    pub fn basins(&self) -> &[Basin] {
        &self.basins
    }

    pub fn basin_digits(&self) -> Vec<u8> {
        self.basins.iter().map(|b| b.digit).collect()
    }

    pub fn basin_names(&self) -> Vec<String> {
        self.basins.iter().map(|b| b.name.clone()).collect()
    }

    pub fn position_of(&self, name: &str) -> Option<usize> {
        self.basins.iter().position(|b| b.name == name)
    }

    #[inline]
    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn with_convention(&self, convention: Convention) -> Self {
        NetworkSpec {
            convention,
            ..self.clone()
        }
    }

    /// `lambda_{a,b}` with the kernel-derived diagonal.
    #[inline]
    pub fn lambda(&self, a: usize, b: usize) -> f64 {
        self.lambda[(a, b)]
    }

    #[inline]
    pub fn mu(&self, a: usize, b: usize) -> f64 {
        self.mu[(a, b)]
    }

    /// Deepest nonzero level over all `w` and `v` kernels.
    pub fn kernel_depth(&self) -> usize {
        self.basins
            .iter()
            .map(|b| b.w.effective_depth().max(b.v.effective_depth()))
            .max()
            .unwrap_or(0)
    }

    pub fn aggregate_rates(&self) -> AggregateRates {
        let n = self.basins.len();
        let p = self.prime.as_f64();
        let mut lambda_bar = vec![0.0; n];
        let mut mu_bar = vec![0.0; n];
        for a in 0..n {
            lambda_bar[a] = (0..n).map(|b| self.lambda[(a, b)]).sum();
            mu_bar[a] = self.mu[(a, a)]
                + (0..n)
                    .filter(|&b| b != a)
                    .map(|b| self.mu[(b, a)])
                    .sum::<f64>();
        }
        let sink = (0..n).map(|a| (mu_bar[a] - lambda_bar[a]) / p).collect();
        AggregateRates {
            lambda_bar,
            mu_bar,
            sink,
        }
    }

    pub fn build_lambda(&self) -> LambdaMatrix {
        let n = self.basins.len();
        let p = self.prime.as_f64();
        let agg = self.aggregate_rates();
        let scale = match self.convention {
            Convention::Paper => 1.0,
            Convention::Derived => 1.0 / p,
        };
        let entries = DMatrix::from_fn(n, n, |a, b| {
            if a == b {
                -(agg.mu_bar[a] - self.lambda[(a, a)]) / p
            } else {
                scale * self.lambda[(a, b)]
            }
        });
        LambdaMatrix {
            entries,
            convention: self.convention,
        }
    }

    fn rate_scale(&self) -> f64 {
        self.lambda
            .iter()
            .chain(self.mu.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(f64::MIN_POSITIVE)
    }

    pub fn classify(&self) -> Result<Classification> {
        let n = self.basins.len();
        let p = self.prime.as_f64();
        let agg = self.aggregate_rates();
        let tol = 1e-12 * self.rate_scale();
        let mut in_g1 = vec![false; n];
        for a in 0..n {
            let lhs = agg.mu_bar[a] / p + (1.0 - 1.0 / p) * self.lambda[(a, a)];
            let rhs = agg.lambda_bar[a];
            if (lhs - rhs).abs() <= tol {
                in_g1[a] = true;
            } else if lhs < rhs {
                return Err(Error::Classification(format!(
                    "basin {}: p^-1 mu_bar + (1 - p^-1) lambda_aa = {lhs} is below lambda_bar = {rhs}",
                    self.basins[a].name
                )));
            }
        }
        let lam = self.build_lambda();
        let row_sums = lam.row_sums();
        let conservative = row_sums.iter().all(|s| s.abs() <= tol);
        Ok(self.finish_classification(in_g1, lam, row_sums, conservative, tol, false))
    }

    fn finish_classification(
        &self,
        in_g1: Vec<bool>,
        lam: LambdaMatrix,
        row_sums: Vec<f64>,
        conservative: bool,
        tol: f64,
        exact: bool,
    ) -> Classification {
        let n = self.basins.len();
        let agg = self.aggregate_rates();
        let names = self.basin_names();
        let g1: Vec<String> = (0..n)
            .filter(|&a| in_g1[a])
            .map(|a| names[a].clone())
            .collect();
        let g2: Vec<String> = (0..n)
            .filter(|&a| !in_g1[a])
            .map(|a| names[a].clone())
            .collect();
        let dies = g1.is_empty() && (0..n).all(|a| agg.mu_bar[a] > self.lambda[(a, a)]);
        let off_ok = (0..n).all(|i| (0..n).all(|j| i == j || lam.entries[(i, j)] >= 0.0));
        let substochastic = off_ok && row_sums.iter().all(|&s| s <= tol);
        Classification {
            convention: self.convention,
            g1,
            g2,
            is_conservative_matrix: conservative,
            dies_at_infinity: dies,
            is_substochastic: substochastic,
            is_m_matrix: lam.is_m_matrix(),
            row_sums,
            exact,
        }
    }
}

/// A network with every rate and kernel level given as an exact rational.
/// Classification is then decided without tolerances.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactNetwork {
    pub prime: Prime,
    pub digits: Vec<u8>,
    pub names: Vec<String>,
    pub w_levels: Vec<Vec<BigRational>>,
    pub v_levels: Vec<Vec<BigRational>>,
    /// Cross rates; diagonals ignored.
    pub lambda: Vec<Vec<BigRational>>,
    pub mu: Vec<Vec<BigRational>>,
    pub convention: Convention,
}

fn rat_to_f64(q: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    q.to_f64().unwrap_or(f64::NAN)
}

impl ExactNetwork {
    fn p(&self) -> BigRational {
        BigRational::from_integer(BigInt::from(self.prime.get()))
    }

    /// `p * mass` of a kernel: `sum_j (p - 1) p^-j w_j`.
    fn diag(&self, levels: &[BigRational]) -> BigRational {
        let p = self.p();
        let mut pw = BigRational::one();
        let mut acc = BigRational::zero();
        for w in levels {
            pw /= &p;
            acc += (&p - BigRational::one()) * &pw * w;
        }
        acc
    }

    pub fn to_spec(&self) -> Result<NetworkSpec> {
        let kern =
            |lv: &[BigRational]| RadialKernel::new(self.prime, lv.iter().map(rat_to_f64).collect());
        let basins = (0..self.digits.len())
            .map(|a| {
                Ok(Basin {
                    digit: self.digits[a],
                    name: self.names[a].clone(),
                    w: kern(&self.w_levels[a])?,
                    v: kern(&self.v_levels[a])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let n = self.digits.len();
        let off = |m: &[Vec<BigRational>]| -> Vec<Vec<f64>> {
            (0..n)
                .map(|a| {
                    (0..n)
                        .map(|b| if a == b { 0.0 } else { rat_to_f64(&m[a][b]) })
                        .collect()
                })
                .collect()
        };
        NetworkSpec::new(
            self.prime,
            basins,
            off(&self.lambda),
            off(&self.mu),
            self.convention,
        )
    }

    pub fn classify(&self) -> Result<Classification> {
        let spec = self.to_spec()?;
        let n = self.digits.len();
        let p = self.p();
        let one = BigRational::one();
        let lam_diag: Vec<BigRational> = self.w_levels.iter().map(|l| self.diag(l)).collect();
        let mu_diag: Vec<BigRational> = self.v_levels.iter().map(|l| self.diag(l)).collect();
        let mut in_g1 = vec![false; n];
        let mut exact_rows = Vec::with_capacity(n);
        for a in 0..n {
            let mut lambda_bar = lam_diag[a].clone();
            let mut mu_bar = mu_diag[a].clone();
            let mut cross = BigRational::zero();
            for b in (0..n).filter(|&b| b != a) {
                lambda_bar += &self.lambda[a][b];
                mu_bar += &self.mu[b][a];
                cross += &self.lambda[a][b];
            }
            let lhs = &mu_bar / &p + (&one - &one / &p) * &lam_diag[a];
            match lhs.cmp(&lambda_bar) {
                std::cmp::Ordering::Equal => in_g1[a] = true,
                std::cmp::Ordering::Greater => {}
                std::cmp::Ordering::Less => {
                    return Err(Error::Classification(format!(
                        "basin {}: p^-1 mu_bar + (1 - p^-1) lambda_aa = {lhs} is below lambda_bar = {lambda_bar}",
                        self.names[a]
                    )))
                }
            }
            let off = match self.convention {
                Convention::Paper => cross,
                Convention::Derived => cross / &p,
            };
            exact_rows.push(off - (&mu_bar - &lam_diag[a]) / &p);
        }
        let conservative = exact_rows.iter().all(|r| r.is_zero());
        let lam = spec.build_lambda();
        let row_sums = lam.row_sums();
        let mut c = spec.finish_classification(in_g1, lam, row_sums, conservative, 0.0, true);
        c.is_substochastic = c.is_substochastic || exact_rows.iter().all(|r| !r.is_positive());
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p2() -> Prime {
        Prime::new(2).unwrap()
    }

    // Two basins U, N with w = v = levels (c), cross lambda 1 and cross mu `m`.
    fn two_basin(c: f64, m: f64, conv: Convention) -> NetworkSpec {
        let k = RadialKernel::new(p2(), vec![c]).unwrap();
        NetworkSpec::new(
            p2(),
            vec![
                Basin::symmetric(0, "U", k.clone()),
                Basin::symmetric(1, "N", k),
            ],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![0.0, m], vec![m, 0.0]],
            conv,
        )
        .unwrap()
    }

    #[test]
    fn aggregate_example() {
        let s = two_basin(2.0, 2.0, Convention::Paper);
        let c = s.lambda(0, 0);
        assert!((c - 1.0).abs() < 1e-15);
        let agg = s.aggregate_rates();
        for a in 0..2 {
            assert!((agg.mu_bar[a] - (c + 2.0)).abs() < 1e-15);
            assert!((agg.lambda_bar[a] - (c + 1.0)).abs() < 1e-15);
            assert!((agg.sink[a] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn single_basin_symmetric_has_no_sink() {
        let k = RadialKernel::new(p2(), vec![1.5, 0.5]).unwrap();
        let s = NetworkSpec::new(
            p2(),
            vec![Basin::symmetric(0, "A", k)],
            vec![vec![0.0]],
            vec![vec![0.0]],
            Convention::Derived,
        )
        .unwrap();
        assert_eq!(s.aggregate_rates().sink, vec![0.0]);
        assert_eq!(s.build_lambda().entries[(0, 0)], 0.0);
        let c = s.classify().unwrap();
        assert_eq!(c.g1, vec!["A".to_string()]);
    }

    #[test]
    fn only_mu_diagonal_is_valid() {
        let z = RadialKernel::zero(p2());
        let v = RadialKernel::new(p2(), vec![1.0]).unwrap();
        let s = NetworkSpec::new(
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
        assert_eq!(s.aggregate_rates().lambda_bar, vec![0.0, 0.0]);
    }

    #[test]
    fn lambda_examples() {
        let s = two_basin(2.0, 2.0, Convention::Paper);
        let l = s.build_lambda().entries;
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));
        let l = s
            .with_convention(Convention::Derived)
            .build_lambda()
            .entries;
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.5, -1.0]));
    }

    #[test]
    fn classification_examples() {
        let c = two_basin(2.0, 2.0, Convention::Paper).classify().unwrap();
        assert_eq!(c.g1, vec!["U", "N"]);
        assert!(c.is_conservative_matrix);
        assert_eq!(c.summary(), "G1 = {U,N}; Markov semigroup; Λ𝟙 = 0");

        let c = two_basin(2.0, 4.0, Convention::Paper).classify().unwrap();
        assert_eq!(c.g2, vec!["U", "N"]);
        assert!(c.dies_at_infinity);
        assert!(!c.is_conservative_matrix);
        assert!(c.is_m_matrix);
    }

    #[test]
    fn classification_error_when_below() {
        let s = two_basin(2.0, 1.0, Convention::Paper);
        assert!(matches!(s.classify(), Err(Error::Classification(_))));
    }

    #[test]
    fn hypothesis_violations_are_named() {
        let k = RadialKernel::new(p2(), vec![1.0]).unwrap();
        let err = NetworkSpec::new(
            p2(),
            vec![
                Basin::symmetric(0, "U", k.clone()),
                Basin::symmetric(1, "N", k.clone()),
            ],
            vec![vec![0.0, 3.0], vec![1.0, 0.0]],
            vec![vec![0.0, 2.0], vec![2.0, 0.0]],
            Convention::Derived,
        )
        .unwrap_err();
        assert!(err.to_string().contains("lambda[U,N]"), "{err}");

        let big = RadialKernel::new(p2(), vec![2.0]).unwrap();
        let err = NetworkSpec::new(
            p2(),
            vec![Basin {
                digit: 0,
                name: "U".into(),
                w: big,
                v: k,
            }],
            vec![vec![0.0]],
            vec![vec![0.0]],
            Convention::Derived,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn derived_row_sums_are_minus_sink() {
        let s = two_basin(1.0, 3.0, Convention::Derived);
        let sums = s.build_lambda().row_sums();
        let sink = s.aggregate_rates().sink;
        for (a, b) in sums.iter().zip(&sink) {
            assert!((a + b).abs() < 1e-15);
        }
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn exact_classification() {
        let net = ExactNetwork {
            prime: p2(),
            digits: vec![0, 1],
            names: vec!["U".into(), "N".into()],
            w_levels: vec![vec![q(1, 3)], vec![q(2, 7)]],
            v_levels: vec![vec![q(1, 3)], vec![q(2, 7)]],
            lambda: vec![vec![q(0, 1), q(1, 3)], vec![q(1, 3), q(0, 1)]],
            mu: vec![vec![q(0, 1), q(2, 3)], vec![q(2, 3), q(0, 1)]],
            convention: Convention::Paper,
        };
        let c = net.classify().unwrap();
        assert!(c.exact);
        assert_eq!(c.g1.len(), 2);
        assert!(c.is_conservative_matrix);

        let mut net2 = net.clone();
        net2.mu[0][1] = q(2, 3) + q(1, 1_000_000_000_000_000);
        let c = net2.classify().unwrap();
        assert_eq!(c.g2, vec!["N"]);
        assert!(!c.is_conservative_matrix);
    }
}
