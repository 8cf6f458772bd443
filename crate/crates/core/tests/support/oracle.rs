//! Naive reference evaluation of the 62 ranking metrics, written from the
//! formulas alone and keyed by display name. Slow and deliberately simple.

#![allow(dead_code)]

use std::f64::consts::PI;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

fn sigma(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|v| *v == x[0])
}

fn standardized(x: &[f64]) -> Vec<f64> {
    if is_constant(x) {
        return vec![0.0; x.len()];
    }
    let (m, s) = (mean(x), sigma(x));
    x.iter().map(|v| (v - m) / s).collect()
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    // rank of x_i = 1 + #{x_j < x_i} + (#{x_j == x_i} - 1) / 2
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            1.0 + below + (equal - 1.0) / 2.0
        })
        .collect()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Per-coordinate correlation contributions between two plans.
pub fn contributions(kind: &str, a: &[f64], b: &[f64]) -> Vec<f64> {
    let d = a.len();
    match kind {
        "pearson" => {
            let (za, zb) = (standardized(a), standardized(b));
            (0..d).map(|j| za[j] * zb[j]).collect()
        }
        "spearman" => {
            let (ra, rb) = (average_ranks(a), average_ranks(b));
            let (za, zb) = (standardized(&ra), standardized(&rb));
            (0..d).map(|j| za[j] * zb[j]).collect()
        }
        "kendall" => {
            if d < 2 || is_constant(a) || is_constant(b) {
                return vec![0.0; d];
            }
            (0..d)
                .map(|j| {
                    let s: f64 = (0..d)
                        .filter(|&i| i != j)
                        .map(|i| sign(a[j] - a[i]) * sign(b[j] - b[i]))
                        .sum();
                    s / (d - 1) as f64
                })
                .collect()
        }
        _ => panic!("unknown correlation {kind}"),
    }
}

pub fn dct(t: u8, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let kf = k as f64;
            match t {
                1 => {
                    if n == 1 {
                        return x[0];
                    }
                    let ends = 0.5 * (x[0] + if k % 2 == 0 { x[n - 1] } else { -x[n - 1] });
                    ends + (1..n - 1)
                        .map(|i| x[i] * (PI * i as f64 * kf / (nf - 1.0)).cos())
                        .sum::<f64>()
                }
                2 => (0..n).map(|i| x[i] * (PI * (i as f64 + 0.5) * kf / nf).cos()).sum(),
                3 => {
                    0.5 * x[0]
                        + (1..n)
                            .map(|i| x[i] * (PI * i as f64 * (kf + 0.5) / nf).cos())
                            .sum::<f64>()
                }
                _ => unreachable!(),
            }
        })
        .collect()
}

pub fn dst(t: u8, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let kf = k as f64;
            match t {
                1 => (0..n)
                    .map(|i| x[i] * (PI * (i as f64 + 1.0) * (kf + 1.0) / (nf + 1.0)).sin())
                    .sum(),
                2 => (0..n)
                    .map(|i| x[i] * (PI * (i as f64 + 0.5) * (kf + 1.0) / nf).sin())
                    .sum(),
                3 => {
                    let last = 0.5 * x[n - 1] * if k % 2 == 0 { 1.0 } else { -1.0 };
                    last + (0..n - 1)
                        .map(|i| x[i] * (PI * (i as f64 + 1.0) * (kf + 0.5) / nf).sin())
                        .sum::<f64>()
                }
                _ => unreachable!(),
            }
        })
        .collect()
}

/// `(re, im)` pairs of `Σ x_n e^{-2πi kn/N}`.
pub fn dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (i, v) in x.iter().enumerate() {
                let a = 2.0 * PI * (k * i) as f64 / n as f64;
                re += v * a.cos();
                im -= v * a.sin();
            }
            (re, im)
        })
        .collect()
}

fn modulus((re, im): (f64, f64)) -> f64 {
    (re * re + im * im).sqrt()
}

fn complex_sum<'a>(it: impl Iterator<Item = &'a (f64, f64)>) -> (f64, f64) {
    it.fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d))
}

/// Evaluate the metric called `name` on a plan set.
pub fn evaluate(name: &str, plans: &[Vec<f64>]) -> f64 {
    match name {
        "avg-stdev" => return mean(&plans.iter().map(|p| sigma(p)).collect::<Vec<_>>()),
        "max-stdev" => return max(&plans.iter().map(|p| sigma(p)).collect::<Vec<_>>()),
        "min-stdev" => return min(&plans.iter().map(|p| sigma(p)).collect::<Vec<_>>()),
        "max-value" => return max(&plans.concat()),
        "min-value" => return min(&plans.concat()),
        _ => {}
    }

    if let Some(rest) = name.strip_suffix("-dft-coeff") {
        let spectra: Vec<Vec<(f64, f64)>> = plans.iter().map(|p| dft(p)).collect();
        return match rest {
            "sum-of-0" => modulus(complex_sum(spectra.iter().map(|f| &f[0]))),
            "max-of-0" => max(&spectra.iter().map(|f| f[0].0).collect::<Vec<_>>()).abs(),
            "sum-non0" => modulus(complex_sum(spectra.iter().flat_map(|f| f[1..].iter()))),
            "max-non0" => spectra
                .iter()
                .flat_map(|f| f[1..].iter())
                .map(|&c| modulus(c))
                .fold(0.0, f64::max),
            "sum-all" => modulus(complex_sum(spectra.iter().flatten())),
            "avg-stdev" => {
                let per_plan: Vec<f64> = spectra
                    .iter()
                    .map(|f| {
                        let n = f.len() as f64;
                        let (mr, mi) = complex_sum(f.iter());
                        let (mr, mi) = (mr / n, mi / n);
                        let var = f
                            .iter()
                            .map(|(r, i)| (r - mr).powi(2) + (i - mi).powi(2))
                            .sum::<f64>()
                            / n;
                        var.sqrt()
                    })
                    .collect();
                mean(&per_plan).abs()
            }
            _ => panic!("unknown metric {name}"),
        };
    }

    if let Some(rest) = name.strip_suffix("-coeff") {
        let (shape, family) = rest.rsplit_once('-').expect("shape-family");
        let t: u8 = family[3..].parse().unwrap();
        let coeffs: Vec<Vec<f64>> = plans
            .iter()
            .map(|p| if family.starts_with("dct") { dct(t, p) } else { dst(t, p) })
            .collect();
        let per = |f: fn(&[f64]) -> f64| coeffs.iter().map(|c| f(c)).collect::<Vec<_>>();
        return match shape {
            "avg" => mean(&per(mean)),
            "max" => max(&per(max)),
            "min" => min(&per(min)),
            "avg-max" => mean(&per(max)),
            "avg-min" => mean(&per(min)),
            _ => panic!("unknown metric {name}"),
        };
    }

    let (shape, kind) = name.split_once("-corr-").unwrap_or_else(|| panic!("unknown metric {name}"));
    let mut pair_values: Vec<Vec<f64>> = Vec::new();
    for a in plans {
        for b in plans {
            pair_values.push(contributions(kind, a, b));
        }
    }
    let per = |f: fn(&[f64]) -> f64| pair_values.iter().map(|c| f(c)).collect::<Vec<_>>();
    match shape {
        "avg" => mean(&per(mean)),
        "max-avg" => max(&per(mean)),
        "min-avg" => min(&per(mean)),
        "avg-max" => mean(&per(max)),
        "avg-min" => mean(&per(min)),
        "max" => max(&per(min)),
        "min" => min(&per(min)),
        _ => panic!("unknown metric {name}"),
    }
}
