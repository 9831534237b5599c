//! Truncated p-adic points.
//!
//! A point of a basin `a + pZ_p` is only ever known up to a ball
//! `a + x_1 p + ... + x_{N-1} p^{N-1} + p^N Z_p`. Every function the solver
//! touches is locally constant at some finite radius, so this finite address
//! is all the information there is. Integer arithmetic on addresses is exact
//! and checked; 64 bits cover `p <= 97` up to depth 8.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A prime `2 <= p <= 97`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Prime(u32);

impl Prime {
    pub const MAX: u32 = 97;

    pub fn new(p: u32) -> Result<Self> {
        if !(2..=Self::MAX).contains(&p) {
            return Err(Error::validation(format!(
                "prime must lie in 2..={}, got {p}",
                Self::MAX
            )));
        }
        if (2..p)
            .take_while(|d| d * d <= p)
            .any(|d| p.is_multiple_of(d))
        {
            return Err(Error::validation(format!("{p} is not prime")));
        }
        Ok(Prime(p))
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    /// `p^k` as an exact integer.
    pub fn pow(self, k: u32) -> Result<u64> {
        (self.0 as u64)
            .checked_pow(k)
            .ok_or_else(|| Error::Overflow(format!("{}^{k} exceeds 64 bits", self.0)))
    }

    /// `p^k` in floating point, any sign of `k`.
    #[inline]
    pub fn powi(self, k: i32) -> f64 {
        self.as_f64().powi(k)
    }
}

impl TryFrom<u32> for Prime {
    type Error = Error;

    fn try_from(p: u32) -> Result<Self> {
        Prime::new(p)
    }
}

impl From<Prime> for u32 {
    fn from(p: Prime) -> u32 {
        p.0
    }
}

impl fmt::Display for Prime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// The ball `basin + x_1 p + ... + x_{N-1} p^{N-1} + p^N Z_p`.
///
/// `digits[i - 1]` holds `x_i`; the depth is `digits.len() + 1` because the
/// `p^0` digit is the basin label.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellAddress {
    basin: u8,
    digits: Vec<u8>,
}

impl CellAddress {
    pub fn new(p: Prime, basin: u8, digits: Vec<u8>) -> Result<Self> {
        let pv = p.get();
        if basin as u32 >= pv {
            return Err(Error::usage(format!(
                "basin digit {basin} is not below p = {pv}"
            )));
        }
        if let Some(d) = digits.iter().find(|&&d| d as u32 >= pv) {
            return Err(Error::usage(format!("digit {d} is not below p = {pv}")));
        }
        Ok(CellAddress { basin, digits })
    }

    /// Cell at `depth` inside `basin` whose lexicographic position among the
    /// `p^{depth-1}` cells of that basin is `index`.
    pub fn from_index(p: Prime, basin: u8, depth: usize, index: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::usage("cell depth must be at least 1"));
        }
        let len = depth - 1;
        let count = p.pow(len as u32)? as usize;
        if index >= count {
            return Err(Error::usage(format!(
                "cell index {index} out of range ({count} cells)"
            )));
        }
        let pv = p.get() as usize;
        let mut digits = vec![0u8; len];
        let mut rest = index;
        for slot in digits.iter_mut().rev() {
            *slot = (rest % pv) as u8;
            rest /= pv;
        }
        CellAddress::new(p, basin, digits)
    }

    #[inline]
    pub fn basin(&self) -> u8 {
        self.basin
    }

    /// `N`, with the basin digit counted.
    #[inline]
    pub fn depth(&self) -> usize {
        self.digits.len() + 1
    }

    #[inline]
    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    /// `x_i` for `1 <= i < depth`.
    pub fn digit(&self, i: usize) -> Option<u8> {
        i.checked_sub(1).and_then(|k| self.digits.get(k).copied())
    }

    /// Lexicographic position of the cell among its basin's cells.
    pub fn index(&self, p: Prime) -> usize {
        let pv = p.get() as usize;
        self.digits
            .iter()
            .fold(0usize, |acc, &d| acc * pv + d as usize)
    }

    /// The integer `sum_i x_i p^i`, i.e. the within-basin coordinate with
    /// the basin digit removed.
    pub fn within_basin_value(&self, p: Prime) -> Result<u64> {
        let mut acc = 0u64;
        for (k, &d) in self.digits.iter().enumerate() {
            let term = p
                .pow(k as u32 + 1)?
                .checked_mul(d as u64)
                .ok_or_else(|| Error::Overflow("within-basin coordinate".into()))?;
            acc = acc
                .checked_add(term)
                .ok_or_else(|| Error::Overflow("within-basin coordinate".into()))?;
        }
        Ok(acc)
    }

    /// A deeper cell inside this one.
    pub fn refine(&self, p: Prime, extra: &[u8]) -> Result<Self> {
        let mut digits = self.digits.clone();
        digits.extend_from_slice(extra);
        CellAddress::new(p, self.basin, digits)
    }

    /// Digits as a compact label: concatenated when `p <= 10`, dash-joined
    /// otherwise.
    pub fn digit_label(&self, p: Prime) -> String {
        let sep = if p.get() <= 10 { "" } else { "-" };
        self.digits
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(sep)
    }
}

/// All cells of depth `depth` in `basin`, in lexicographic digit order.
pub fn basin_cells(p: Prime, basin: u8, depth: usize) -> Result<Vec<CellAddress>> {
    if depth == 0 {
        return Err(Error::usage("cell depth must be at least 1"));
    }
    let count = p.pow(depth as u32 - 1)? as usize;
    (0..count)
        .map(|i| CellAddress::from_index(p, basin, depth, i))
        .collect()
}

/// `|x - y|_p` for two cells at equal depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadicDistance {
    /// The cells differ first at digit `valuation`: distance `p^-valuation`.
    Exact { valuation: u32 },
    /// Identical addresses: representatives are within `p^-depth`.
    AtMost { depth: u32 },
}

impl PadicDistance {
    /// Numeric value, with the identical-cell sentinel reported as 0.
    pub fn value(self, p: Prime) -> f64 {
        match self {
            PadicDistance::Exact { valuation } => p.powi(-(valuation as i32)),
            PadicDistance::AtMost { .. } => 0.0,
        }
    }

    /// Upper bound on the distance of representatives.
    pub fn upper_bound(self, p: Prime) -> f64 {
        match self {
            PadicDistance::Exact { valuation } => p.powi(-(valuation as i32)),
            PadicDistance::AtMost { depth } => p.powi(-(depth as i32)),
        }
    }
}

pub fn padic_distance(c1: &CellAddress, c2: &CellAddress, _p: Prime) -> Result<PadicDistance> {
    if c1.depth() != c2.depth() {
        return Err(Error::usage(format!(
            "distance needs equal depths, got {} and {}",
            c1.depth(),
            c2.depth()
        )));
    }
    if c1.basin != c2.basin {
        return Ok(PadicDistance::Exact { valuation: 0 });
    }
    match c1.digits.iter().zip(&c2.digits).position(|(a, b)| a != b) {
        Some(k) => Ok(PadicDistance::Exact {
            valuation: k as u32 + 1,
        }),
        None => Ok(PadicDistance::AtMost {
            depth: c1.depth() as u32,
        }),
    }
}

/// `numerator / p^exponent` in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct UnitFraction {
    prime: Prime,
    numerator: u64,
    exponent: u32,
}

impl UnitFraction {
    pub fn new(prime: Prime, numerator: u64, exponent: u32) -> Result<Self> {
        let den = prime.pow(exponent)?;
        if numerator >= den {
            return Err(Error::usage(format!(
                "{numerator}/{den} is not a fractional part"
            )));
        }
        Ok(UnitFraction {
            prime,
            numerator,
            exponent,
        })
    }

    pub fn zero(prime: Prime) -> Self {
        UnitFraction {
            prime,
            numerator: 0,
            exponent: 0,
        }
    }

    #[inline]
    pub fn numerator(&self) -> u64 {
        self.numerator
    }

    #[inline]
    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.prime.powi(self.exponent as i32)
    }

    /// The sum reduced mod 1.
    pub fn add_mod_one(&self, other: &UnitFraction) -> Result<UnitFraction> {
        if self.prime != other.prime {
            return Err(Error::usage("fractions over different primes"));
        }
        let k = self.exponent.max(other.exponent);
        let den = self.prime.pow(k)?;
        let lift = |u: &UnitFraction| -> Result<u64> {
            let scale = self.prime.pow(k - u.exponent)?;
            u.numerator
                .checked_mul(scale)
                .ok_or_else(|| Error::Overflow("fraction lift".into()))
        };
        let sum = (lift(self)? as u128 + lift(other)? as u128) % den as u128;
        UnitFraction::new(self.prime, sum as u64, k)
    }
}

/// `{p^{r-1} j x}_p` for the within-basin coordinate `x` of `cell`.
///
/// Only digits `x_1 .. x_{-r}` can reach the fractional part, so the cell
/// must have depth at least `1 - r`; deeper digits are ignored.
pub fn character_exponent(p: Prime, r: i32, j: u32, cell: &CellAddress) -> Result<UnitFraction> {
    if r > -1 {
        return Err(Error::usage(format!(
            "character exponent needs r <= -1, got {r}"
        )));
    }
    let k = (1 - r) as u32;
    if cell.depth() < k as usize {
        return Err(Error::usage(format!(
            "cell depth {} is below 1 - r = {k}",
            cell.depth()
        )));
    }
    let modulus = p.pow(k)?;
    let x = cell.within_basin_value(p)? % modulus;
    let y = ((j as u128 * x as u128) % modulus as u128) as u64;
    UnitFraction::new(p, y, k)
}

/// `exp(2 pi i u)`.
pub fn character_value(u: &UnitFraction) -> Complex64 {
    let den = u
        .prime
        .pow(u.exponent)
        .map(|d| d as f64)
        .unwrap_or(f64::INFINITY);
    let (s, c) = (TAU * u.numerator as f64 / den).sin_cos();
    Complex64::new(c, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: u32) -> Prime {
        Prime::new(v).unwrap()
    }

    fn cell(pv: u32, basin: u8, digits: &[u8]) -> CellAddress {
        CellAddress::new(p(pv), basin, digits.to_vec()).unwrap()
    }

    #[test]
    fn prime_validation() {
        assert!(Prime::new(2).is_ok());
        assert!(Prime::new(97).is_ok());
        assert!(Prime::new(1).is_err());
        assert!(Prime::new(9).is_err());
        assert!(Prime::new(101).is_err());
    }

    #[test]
    fn distance_examples() {
        let d = padic_distance(&cell(2, 0, &[0]), &cell(2, 0, &[1]), p(2)).unwrap();
        assert_eq!(d.value(p(2)), 0.5);
        let d = padic_distance(&cell(2, 0, &[0]), &cell(2, 1, &[0]), p(2)).unwrap();
        assert_eq!(d.value(p(2)), 1.0);
        let c = cell(3, 1, &[2, 1]);
        let d = padic_distance(&c, &c, p(3)).unwrap();
        assert_eq!(d, PadicDistance::AtMost { depth: 3 });
        assert_eq!(d.upper_bound(p(3)), 1.0 / 27.0);
    }

    #[test]
    fn distance_depth_mismatch() {
        let err = padic_distance(&cell(2, 0, &[0]), &cell(2, 0, &[0, 1]), p(2));
        assert!(matches!(err, Err(Error::Usage(_))));
    }

    #[test]
    fn character_exponent_examples() {
        let u = character_exponent(p(2), -1, 1, &cell(2, 0, &[1])).unwrap();
        assert_eq!((u.numerator(), u.exponent()), (2, 2));
        assert_eq!(u.value(), 0.5);
        let u = character_exponent(p(2), -1, 1, &cell(2, 0, &[0])).unwrap();
        assert_eq!(u.value(), 0.0);
        let u = character_exponent(p(3), -2, 2, &cell(3, 0, &[1, 2])).unwrap();
        assert_eq!((u.numerator(), u.exponent()), (15, 3));
    }

    #[test]
    fn character_exponent_needs_depth() {
        let err = character_exponent(p(3), -2, 1, &cell(3, 0, &[1]));
        assert!(matches!(err, Err(Error::Usage(_))));
    }

    #[test]
    fn character_values() {
        let one = character_value(&UnitFraction::zero(p(2)));
        assert!((one - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let half = character_value(&UnitFraction::new(p(2), 1, 1).unwrap());
        assert!((half - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        let quarter = character_value(&UnitFraction::new(p(2), 1, 2).unwrap());
        assert!((quarter - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn ultrametric_inequality_exhaustive() {
        for pv in [2u32, 3] {
            let pr = p(pv);
            for depth in 1..=3usize {
                let cells: Vec<_> = (0..pv as u8)
                    .flat_map(|b| basin_cells(pr, b, depth).unwrap())
                    .collect();
                for a in &cells {
                    for b in &cells {
                        let ab = padic_distance(a, b, pr).unwrap().upper_bound(pr);
                        for c in &cells {
                            let ac = padic_distance(a, c, pr).unwrap().upper_bound(pr);
                            let bc = padic_distance(b, c, pr).unwrap().upper_bound(pr);
                            assert!(ac <= ab.max(bc), "{a:?} {b:?} {c:?}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn index_round_trip() {
        let pr = p(5);
        for (i, c) in basin_cells(pr, 2, 3).unwrap().iter().enumerate() {
            assert_eq!(c.index(pr), i);
            assert_eq!(c.basin(), 2);
        }
    }

    #[test]
    fn overflow_is_checked() {
        let pr = p(97);
        assert!(pr.pow(9).is_ok());
        assert!(pr.pow(10).is_err());
    }

    proptest::proptest! {
        #[test]
        fn character_is_additive(pi in 0usize..4, a in 0u64..10_000, b in 0u64..10_000, ka in 0u32..5, kb in 0u32..5) {
            let pr = p([2, 3, 5, 7][pi]);
            let ua = UnitFraction::new(pr, a % pr.pow(ka).unwrap(), ka).unwrap();
            let ub = UnitFraction::new(pr, b % pr.pow(kb).unwrap(), kb).unwrap();
            let lhs = character_value(&ua) * character_value(&ub);
            let rhs = character_value(&ua.add_mod_one(&ub).unwrap());
            proptest::prop_assert!((lhs - rhs).norm() < 1e-12);
            proptest::prop_assert!((character_value(&ua).norm() - 1.0).abs() < 1e-15);
        }

        #[test]
        fn character_exponent_locally_constant(
            pi in 0usize..3, r in -3i32..=-1, j in 1u32..5,
            digits in proptest::collection::vec(0u8..5, 5), extra in proptest::collection::vec(0u8..5, 0..3),
        ) {
            let pr = p([2, 3, 5][pi]);
            let j = 1 + (j - 1) % (pr.get() - 1);
            let fix = |v: &[u8]| v.iter().map(|d| d % pr.get() as u8).collect::<Vec<_>>();
            let base = CellAddress::new(pr, 0, fix(&digits[..(-r) as usize])).unwrap();
            let deep = base.refine(pr, &fix(&extra)).unwrap();
            let u1 = character_exponent(pr, r, j, &base).unwrap();
            let u2 = character_exponent(pr, r, j, &deep).unwrap();
            proptest::prop_assert_eq!(u1, u2);
        }
    }
}
