//! Direct-summation DCT, DST and DFT.
//!
//! All transforms use the un-normalized classical forms:
//!
//! | type  | coefficient `X_k`                                                          |
//! |-------|----------------------------------------------------------------------------|
//! | DCT-I  | `½(x_0 + (-1)^k x_{N-1}) + Σ_{n=1}^{N-2} x_n cos(π n k / (N-1))`          |
//! | DCT-II | `Σ x_n cos(π (n+½) k / N)`                                                 |
//! | DCT-III| `½ x_0 + Σ_{n=1}^{N-1} x_n cos(π n (k+½) / N)`                             |
//! | DST-I  | `Σ x_n sin(π (n+1)(k+1) / (N+1))`                                          |
//! | DST-II | `Σ x_n sin(π (n+½)(k+1) / N)`                                              |
//! | DST-III| `(-1)^k ½ x_{N-1} + Σ_{n=0}^{N-2} x_n sin(π (n+1)(k+½) / N)`               |
//!
//! and the DFT is `F_k = Σ x_n e^{-2πi kn/N}` without a `1/N` factor.
//! Plans are short (d ≤ a few hundred) so an O(d²) matrix product against a
//! cached basis table is all that is needed.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransformType {
    I,
    II,
    III,
}

impl TransformType {
    pub const ALL: [TransformType; 3] = [TransformType::I, TransformType::II, TransformType::III];

    pub fn from_kind(kind: u8) -> Result<Self> {
        match kind {
            1 => Ok(TransformType::I),
            2 => Ok(TransformType::II),
            3 => Ok(TransformType::III),
            _ => Err(Error::invalid(format!("transform type must be 1, 2 or 3, got {kind}"))),
        }
    }

    pub fn kind(self) -> u8 {
        match self {
            TransformType::I => 1,
            TransformType::II => 2,
            TransformType::III => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Basis {
    Cos(TransformType),
    Sin(TransformType),
    DftRe,
    DftIm,
}

fn basis_entry(basis: Basis, len: usize, k: usize, n: usize) -> f64 {
    let nf = len as f64;
    let (kf, xf) = (k as f64, n as f64);
    let last = n + 1 == len;
    match basis {
        Basis::Cos(TransformType::I) => {
            let w = if n == 0 || last { 0.5 } else { 1.0 };
            w * (PI * xf * kf / (nf - 1.0)).cos()
        }
        Basis::Cos(TransformType::II) => (PI * (xf + 0.5) * kf / nf).cos(),
        Basis::Cos(TransformType::III) => {
            if n == 0 {
                0.5
            } else {
                (PI * xf * (kf + 0.5) / nf).cos()
            }
        }
        Basis::Sin(TransformType::I) => (PI * (xf + 1.0) * (kf + 1.0) / (nf + 1.0)).sin(),
        Basis::Sin(TransformType::II) => (PI * (xf + 0.5) * (kf + 1.0) / nf).sin(),
        Basis::Sin(TransformType::III) => {
            if last {
                if k.is_multiple_of(2) {
                    0.5
                } else {
                    -0.5
                }
            } else {
                (PI * (xf + 1.0) * (kf + 0.5) / nf).sin()
            }
        }
        // Reduce k·n mod N first so large products keep full precision.
        Basis::DftRe => (2.0 * PI * ((k * n) % len) as f64 / nf).cos(),
        Basis::DftIm => -(2.0 * PI * ((k * n) % len) as f64 / nf).sin(),
    }
}

type TableCache = HashMap<(Basis, usize), Rc<Vec<f64>>>;

thread_local! {
    static TABLES: RefCell<TableCache> = RefCell::new(HashMap::new());
}

/// Row-major `len × len` basis matrix, cached per thread.
fn table(basis: Basis, len: usize) -> Rc<Vec<f64>> {
    TABLES.with(|t| {
        t.borrow_mut()
            .entry((basis, len))
            .or_insert_with(|| {
                let mut m = Vec::with_capacity(len * len);
                for k in 0..len {
                    for n in 0..len {
                        m.push(basis_entry(basis, len, k, n));
                    }
                }
                Rc::new(m)
            })
            .clone()
    })
}

fn apply(basis: Basis, x: &[f64]) -> Vec<f64> {
    let len = x.len();
    let m = table(basis, len);
    m.chunks_exact(len)
        .map(|row| row.iter().zip(x).map(|(b, v)| b * v).sum())
        .collect()
}

fn check_len(kind: TransformType, x: &[f64]) -> Result<()> {
    let min = if kind == TransformType::I { 2 } else { 1 };
    if x.len() < min {
        return Err(Error::invalid(format!(
            "type-{} transform needs at least {min} samples, got {}",
            kind.kind(),
            x.len()
        )));
    }
    Ok(())
}

pub fn dct(kind: TransformType, x: &[f64]) -> Result<Vec<f64>> {
    check_len(kind, x)?;
    Ok(apply(Basis::Cos(kind), x))
}

pub fn dst(kind: TransformType, x: &[f64]) -> Result<Vec<f64>> {
    // DST-I is well defined for a single sample: X_0 = x_0 sin(π/2).
    if kind == TransformType::I {
        check_len(TransformType::II, x)?;
    } else {
        check_len(kind, x)?;
    }
    Ok(apply(Basis::Sin(kind), x))
}

pub fn dft(x: &[f64]) -> Result<Vec<Complex64>> {
    if x.is_empty() {
        return Err(Error::invalid("DFT of an empty vector"));
    }
    let re = apply(Basis::DftRe, x);
    let im = apply(Basis::DftIm, x);
    Ok(re.into_iter().zip(im).map(|(r, i)| Complex64::new(r, i)).collect())
}

pub fn dft_magnitudes(x: &[f64]) -> Result<Vec<f64>> {
    Ok(dft(x)?.iter().map(|c| c.norm()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn dct2_of_constant_has_only_dc() {
        let x = vec![2.5; 6];
        let c = dct(TransformType::II, &x).unwrap();
        assert!((c[0] - 15.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
        assert_eq!(dct(TransformType::II, &[3.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn dct3_inverts_dct2_up_to_half_length() {
        let x = [0.3, -1.2, 4.0, 2.2, 0.0, -0.7, 1.1];
        let back = dct(TransformType::III, &dct(TransformType::II, &x).unwrap()).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * x.len() as f64 / 2.0).collect();
        assert!(close(&back, &scaled, 1e-10));
    }

    #[test]
    fn dst3_inverts_dst2_and_dst1_is_self_inverse() {
        let x = [1.0, 2.0, -0.5, 3.0, 0.25];
        let n = x.len() as f64;
        let back = dst(TransformType::III, &dst(TransformType::II, &x).unwrap()).unwrap();
        assert!(close(&back, &x.map(|v| v * n / 2.0), 1e-10));
        let back = dst(TransformType::I, &dst(TransformType::I, &x).unwrap()).unwrap();
        assert!(close(&back, &x.map(|v| v * (n + 1.0) / 2.0), 1e-10));
        let back = dct(TransformType::I, &dct(TransformType::I, &x).unwrap()).unwrap();
        assert!(close(&back, &x.map(|v| v * (n - 1.0) / 2.0), 1e-10));
    }

    #[test]
    fn length_preconditions() {
        assert!(dct(TransformType::I, &[1.0]).is_err());
        assert!(dct(TransformType::II, &[]).is_err());
        assert_eq!(dst(TransformType::I, &[4.0]).unwrap(), vec![4.0]);
        assert!(dft(&[]).is_err());
        assert!(TransformType::from_kind(4).is_err());
    }

    #[test]
    fn dst_zero_and_linear() {
        for t in TransformType::ALL {
            assert!(dst(t, &[0.0; 5]).unwrap().iter().all(|v| *v == 0.0));
            let x = [1.0, -2.0, 0.5, 4.0];
            let y = [0.1, 0.2, -3.0, 1.0];
            let s: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let lhs = dst(t, &s).unwrap();
            let rhs: Vec<f64> = dst(t, &x)
                .unwrap()
                .iter()
                .zip(dst(t, &y).unwrap())
                .map(|(a, b)| a + b)
                .collect();
            assert!(close(&lhs, &rhs, 1e-12));
        }
    }

    #[test]
    fn dft_constant_and_conjugate_symmetry() {
        let m = dft_magnitudes(&[1.0; 4]).unwrap();
        assert!((m[0] - 4.0).abs() < 1e-12);
        assert!(m[1..].iter().all(|v| v.abs() < 1e-12));
        let x = [0.4, -1.0, 2.0, 3.5, -0.25, 1.0, 0.0];
        let m = dft_magnitudes(&x).unwrap();
        for j in 1..x.len() {
            assert!((m[j] - m[x.len() - j]).abs() < 1e-12);
        }
    }

    #[test]
    fn dft_matches_direct_summation() {
        let x = [0.9, -0.3, 1.7, 2.2, -1.1, 0.05, 0.6, -2.4];
        let f = dft(&x).unwrap();
        for (k, fk) in f.iter().enumerate() {
            let direct: Complex64 = x
                .iter()
                .enumerate()
                .map(|(n, v)| {
                    let a = -2.0 * PI * (k * n) as f64 / x.len() as f64;
                    Complex64::new(v * a.cos(), v * a.sin())
                })
                .sum();
            assert!((fk - direct).norm() < 1e-9);
        }
    }
}
