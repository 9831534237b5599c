//! Wavelets supported in `pZ_p` and expansion of cell functions over them.
//!
//! At truncation `R` the basis is `p^{1/2} Omega` plus every `Psi_{r,m,j}`
//! with `-R <= r <= -1`. That is `p^R` functions, exactly the dimension of
//! the space of functions constant on depth-`R+1` cells, so expansion and
//! reconstruction are exact inverses.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::padic::{CellAddress, Prime};

/// `(r, m, j)` with `m` given by its digits `(m_{r+1}, ..., m_{-1})`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WaveletIndex {
    pub r: i32,
    pub m_digits: Vec<u8>,
    pub j: u8,
}

impl WaveletIndex {
    pub fn new(p: Prime, r: i32, m_digits: Vec<u8>, j: u8) -> Result<Self> {
        if r > -1 {
            return Err(Error::usage(format!(
                "wavelet scale r must be <= -1, got {r}"
            )));
        }
        if m_digits.len() != (-r - 1) as usize {
            return Err(Error::usage(format!(
                "r = {r} needs {} translation digits, got {}",
                -r - 1,
                m_digits.len()
            )));
        }
        if j == 0 || j as u32 >= p.get() {
            return Err(Error::usage(format!(
                "wavelet j must lie in 1..{}, got {j}",
                p.get()
            )));
        }
        if m_digits.iter().any(|&d| d as u32 >= p.get()) {
            return Err(Error::usage("translation digit not below p"));
        }
        Ok(WaveletIndex { r, m_digits, j })
    }

    /// Depth of the support ball, `-r`.
    #[inline]
    pub fn support_depth(&self) -> usize {
        (-self.r) as usize
    }

    /// Within-basin digits `(x_1, ..., x_{-r-1})` of the support ball.
    #[inline]
    pub fn support_digits(&self) -> &[u8] {
        &self.m_digits
    }

    /// `p^{-r/2}`, the modulus of the wavelet on its support.
    #[inline]
    pub fn amplitude(&self, p: Prime) -> f64 {
        p.as_f64().powf(-self.r as f64 / 2.0)
    }

    /// Wavelet value on any cell of the support whose digit `x_{-r}` is `d`.
    pub fn value_at_digit(&self, p: Prime, d: u8) -> Complex64 {
        let (s, c) =
            (TAU * (self.j as u64 * d as u64 % p.get() as u64) as f64 / p.as_f64()).sin_cos();
        Complex64::new(c, s) * self.amplitude(p)
    }

    pub fn label(&self) -> String {
        let m: Vec<String> = self.m_digits.iter().map(|d| d.to_string()).collect();
        format!("r={},m=({}),j={}", self.r, m.join(","), self.j)
    }
}

/// All wavelet indices with `-R <= r <= -1`, ordered by `r` descending, then
/// `m` lexicographic, then `j` ascending. There are `p^R - 1` of them.
pub fn enumerate_wavelets(p: Prime, big_r: u32) -> Vec<WaveletIndex> {
    let pv = p.get() as u8;
    let mut out = Vec::new();
    for depth in 1..=big_r as usize {
        let r = -(depth as i32);
        let len = depth - 1;
        let count = (p.get() as usize).pow(len as u32);
        for idx in 0..count {
            let mut m = vec![0u8; len];
            let mut rest = idx;
            for slot in m.iter_mut().rev() {
                *slot = (rest % pv as usize) as u8;
                rest /= pv as usize;
            }
            for j in 1..pv {
                out.push(WaveletIndex {
                    r,
                    m_digits: m.clone(),
                    j,
                });
            }
        }
    }
    out
}

/// `Psi_{r,m,j}` on a cell, with the basin digit ignored.
pub fn eval_wavelet(p: Prime, idx: &WaveletIndex, cell: &CellAddress) -> Result<Complex64> {
    let need = idx.support_depth() + 1;
    if cell.depth() < need {
        return Err(Error::usage(format!(
            "wavelet at r = {} needs cell depth {need}, got {}",
            idx.r,
            cell.depth()
        )));
    }
    let digits = cell.digits();
    let prefix = idx.m_digits.len();
    if digits[..prefix] != idx.m_digits[..] {
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(idx.value_at_digit(p, digits[prefix]))
}

/// A real function on the basins in `basins`, constant on depth-`depth`
/// cells. `values[k][i]` is the value on the `i`-th cell (lexicographic) of
/// basin `basins[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFunction {
    prime: Prime,
    depth: usize,
    basins: Vec<u8>,
    values: Vec<Vec<f64>>,
}

impl CellFunction {
    pub fn new(prime: Prime, depth: usize, basins: Vec<u8>, values: Vec<Vec<f64>>) -> Result<Self> {
        if depth == 0 {
            return Err(Error::usage("cell depth must be at least 1"));
        }
        if basins.len() != values.len() {
            return Err(Error::validation(format!(
                "{} basins but {} value rows",
                basins.len(),
                values.len()
            )));
        }
        let per = prime.pow(depth as u32 - 1)? as usize;
        for (b, row) in basins.iter().zip(&values) {
            if *b as u32 >= prime.get() {
                return Err(Error::validation(format!("basin digit {b} not below p")));
            }
            if row.len() != per {
                return Err(Error::validation(format!(
                    "basin {b}: expected {per} cell values at depth {depth}, got {}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "basin {b}: non-finite value {v}"
                )));
            }
        }
        Ok(CellFunction {
            prime,
            depth,
            basins,
            values,
        })
    }

    pub fn constant(prime: Prime, depth: usize, basins: Vec<u8>, c: f64) -> Result<Self> {
        let per = prime.pow(depth.max(1) as u32 - 1)? as usize;
        let values = vec![vec![c; per]; basins.len()];
        CellFunction::new(prime, depth, basins, values)
    }

    #[inline]
    pub fn prime(&self) -> Prime {
        self.prime
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.depth
    }

    #[inline]
    pub fn basins(&self) -> &[u8] {
        &self.basins
    }

    #[inline]
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    #[inline]
    pub fn basin_values(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn cells_per_basin(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Cell volume `p^{-depth}`.
    pub fn cell_volume(&self) -> f64 {
        self.prime.powi(-(self.depth as i32))
    }

    /// `int f` over basin `basins[k]`.
    pub fn integral(&self, k: usize) -> f64 {
        self.values[k].iter().sum::<f64>() * self.cell_volume()
    }

    pub fn total_integral(&self) -> f64 {
        (0..self.basins.len()).map(|k| self.integral(k)).sum()
    }

    /// Values stacked basin after basin.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn from_flat(prime: Prime, depth: usize, basins: Vec<u8>, flat: &[f64]) -> Result<Self> {
        let per = prime.pow(depth as u32 - 1)? as usize;
        if flat.len() != per * basins.len() {
            return Err(Error::usage("flat vector length does not match cell count"));
        }
        let values = flat.chunks(per).map(<[f64]>::to_vec).collect();
        CellFunction::new(prime, depth, basins, values)
    }

    pub fn max_abs_diff(&self, other: &CellFunction) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn in_unit_interval(&self) -> bool {
        self.values
            .iter()
            .flatten()
            .all(|v| (0.0..=1.0).contains(v))
    }

    /// Cell address of position `i` in basin `basins[k]`.
    pub fn cell(&self, k: usize, i: usize) -> Result<CellAddress> {
        CellAddress::from_index(self.prime, self.basins[k], self.depth, i)
    }
}

/// Coefficients of one basin's function: `f = p^{1/2} c0 Omega + sum Re(c Psi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Expansion {
    pub c0: f64,
    /// In `enumerate_wavelets` order.
    pub coeffs: Vec<(WaveletIndex, Complex64)>,
}

impl Expansion {
    pub fn coeff(&self, idx: &WaveletIndex) -> Option<Complex64> {
        self.coeffs.iter().find(|(k, _)| k == idx).map(|(_, c)| *c)
    }
}

/// Orthonormal expansion of one basin's values at `depth`.
pub fn expand(p: Prime, depth: usize, values: &[f64]) -> Result<Expansion> {
    if depth == 0 {
        return Err(Error::usage("cell depth must be at least 1"));
    }
    let big_r = depth - 1;
    let pv = p.get() as usize;
    let count = p.pow(big_r as u32)? as usize;
    if values.len() != count {
        return Err(Error::usage(format!(
            "expected {count} cell values at depth {depth}, got {}",
            values.len()
        )));
    }
    let vol = p.powi(-(depth as i32));
    let c0 = p.as_f64().sqrt() * values.iter().sum::<f64>() * vol;

    let mut coeffs = Vec::with_capacity(count.saturating_sub(1));
    for idx in enumerate_wavelets(p, big_r as u32) {
        let plen = idx.m_digits.len();
        let block = pv.pow((big_r - plen - 1) as u32);
        let base = idx
            .m_digits
            .iter()
            .fold(0usize, |a, &d| a * pv + d as usize)
            * pv;
        let mut acc = Complex64::new(0.0, 0.0);
        for d in 0..pv {
            let start = (base + d) * block;
            let s: f64 = values[start..start + block].iter().sum();
            acc += idx.value_at_digit(p, d as u8).conj() * s;
        }
        coeffs.push((idx, acc * vol));
    }
    Ok(Expansion { c0, coeffs })
}

/// Inverse of [`expand`]: cell values at depth `R + 1`, real part taken.
pub fn reconstruct(
    p: Prime,
    big_r: u32,
    c0: f64,
    coeffs: &[(WaveletIndex, Complex64)],
) -> Result<Vec<f64>> {
    let pv = p.get() as usize;
    let count = p.pow(big_r)? as usize;
    let mut out = vec![p.as_f64().sqrt() * c0; count];
    for (idx, c) in coeffs {
        let plen = idx.m_digits.len();
        if plen + 1 > big_r as usize {
            return Err(Error::usage(format!(
                "coefficient at r = {} beyond truncation R = {big_r}",
                idx.r
            )));
        }
        let block = pv.pow(big_r - plen as u32 - 1);
        let base = idx
            .m_digits
            .iter()
            .fold(0usize, |a, &d| a * pv + d as usize)
            * pv;
        for d in 0..pv {
            let v = (c * idx.value_at_digit(p, d as u8)).re;
            let start = (base + d) * block;
            for x in &mut out[start..start + block] {
                *x += v;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: u32) -> Prime {
        Prime::new(v).unwrap()
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(
            enumerate_wavelets(p(2), 1),
            vec![WaveletIndex {
                r: -1,
                m_digits: vec![],
                j: 1
            }]
        );
        assert_eq!(enumerate_wavelets(p(2), 2).len(), 3);
        assert_eq!(enumerate_wavelets(p(3), 2).len(), 8);
        assert_eq!(enumerate_wavelets(p(5), 3).len(), 124);
    }

    #[test]
    fn enumeration_order() {
        let w = enumerate_wavelets(p(3), 2);
        assert_eq!(
            w[0],
            WaveletIndex {
                r: -1,
                m_digits: vec![],
                j: 1
            }
        );
        assert_eq!(
            w[1],
            WaveletIndex {
                r: -1,
                m_digits: vec![],
                j: 2
            }
        );
        assert_eq!(
            w[2],
            WaveletIndex {
                r: -2,
                m_digits: vec![0],
                j: 1
            }
        );
        assert_eq!(
            w[7],
            WaveletIndex {
                r: -2,
                m_digits: vec![2],
                j: 2
            }
        );
    }

    #[test]
    fn eval_examples() {
        let pr = p(2);
        let idx = WaveletIndex::new(pr, -1, vec![], 1).unwrap();
        let c0 = CellAddress::new(pr, 0, vec![0]).unwrap();
        let c1 = CellAddress::new(pr, 0, vec![1]).unwrap();
        assert!(
            (eval_wavelet(pr, &idx, &c0).unwrap() - Complex64::new(2f64.sqrt(), 0.0)).norm()
                < 1e-15
        );
        assert!(
            (eval_wavelet(pr, &idx, &c1).unwrap() + Complex64::new(2f64.sqrt(), 0.0)).norm()
                < 1e-15
        );
        let idx2 = WaveletIndex::new(pr, -2, vec![1], 1).unwrap();
        for d in 0..2 {
            let c = CellAddress::new(pr, 0, vec![0, d]).unwrap();
            assert_eq!(
                eval_wavelet(pr, &idx2, &c).unwrap(),
                Complex64::new(0.0, 0.0)
            );
        }
        assert!(eval_wavelet(pr, &idx2, &c0).is_err());
    }

    #[test]
    fn expand_examples() {
        let pr = p(2);
        let e = expand(pr, 2, &[1.0, 1.0]).unwrap();
        assert!((e.c0 - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(e.coeffs.iter().all(|(_, c)| c.norm() < 1e-15));

        let e = expand(pr, 2, &[1.0, 0.0]).unwrap();
        assert!((e.c0 - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-15);
        assert!((e.coeffs[0].1 - Complex64::new(2f64.sqrt() / 4.0, 0.0)).norm() < 1e-15);

        let e = expand(pr, 3, &[0.0; 4]).unwrap();
        assert_eq!(e.c0, 0.0);
        assert!(e.coeffs.iter().all(|(_, c)| c.norm() == 0.0));
    }

    #[test]
    fn reconstruct_examples() {
        let pr = p(2);
        let v = reconstruct(pr, 1, 1.0 / 2f64.sqrt(), &[]).unwrap();
        assert!(v.iter().all(|x| (x - 1.0).abs() < 1e-15));
        let idx = WaveletIndex::new(pr, -1, vec![], 1).unwrap();
        let v = reconstruct(pr, 1, 0.0, &[(idx, Complex64::new(0.3, 0.0))]).unwrap();
        assert!((v[0] - 0.3 * 2f64.sqrt()).abs() < 1e-15);
        assert!((v[1] + 0.3 * 2f64.sqrt()).abs() < 1e-15);
        assert!(reconstruct(pr, 2, 0.0, &[])
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn fast_paths_match_pointwise_evaluation() {
        let pr = p(3);
        let depth = 4;
        let values: Vec<f64> = (0..27).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
        let e = expand(pr, depth, &values).unwrap();
        let vol = pr.powi(-(depth as i32));
        for (idx, c) in &e.coeffs {
            let mut direct = Complex64::new(0.0, 0.0);
            for (i, v) in values.iter().enumerate() {
                let cell = CellAddress::from_index(pr, 0, depth, i).unwrap();
                direct += eval_wavelet(pr, idx, &cell).unwrap().conj() * *v * vol;
            }
            assert!((direct - c).norm() < 1e-14);
        }
    }

    #[test]
    fn cell_function_validation() {
        let pr = p(2);
        assert!(CellFunction::new(pr, 2, vec![0], vec![vec![1.0]]).is_err());
        assert!(CellFunction::new(pr, 2, vec![0], vec![vec![1.0, f64::NAN]]).is_err());
        let f = CellFunction::constant(pr, 3, vec![0, 1], 1.0).unwrap();
        assert!((f.total_integral() - 1.0).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn round_trip(pi in 0usize..3, depth in 1usize..5, seed in proptest::collection::vec(-5.0f64..5.0, 125)) {
            let pr = p([2, 3, 5][pi]);
            let depth = if pr.get() == 5 { depth.min(4) } else { depth };
            let n = pr.pow(depth as u32 - 1).unwrap() as usize;
            let values = &seed[..n];
            let e = expand(pr, depth, values).unwrap();
            let back = reconstruct(pr, depth as u32 - 1, e.c0, &e.coeffs).unwrap();
            for (a, b) in values.iter().zip(&back) {
                proptest::prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
