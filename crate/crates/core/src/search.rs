//! Scalar root finding and one-dimensional maximization.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Maximum {
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iterations = 0;
    while hi - lo > tol && iterations < 200 {
        iterations += 1;
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let (x, value) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    Maximum { x, value, iterations }
}

/// Bisection for a sign change of `f` on `[a, b]`; stops when the bracket
/// is narrower than `tol`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (a, b);
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return Err(Error::BracketFailure(format!(
            "no sign change on [{a}, {b}] (f = {flo}, {fhi})"
        )));
    }
    for _ in 0..300 {
        if (hi - lo).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Grows `hi` geometrically from `lo` until `f` changes sign, then bisects.
pub fn bisect_expanding<F: FnMut(f64) -> f64>(mut f: F, lo: f64, mut hi: f64, limit: f64, tol: f64) -> Result<f64> {
    let flo = f(lo);
    let mut fhi = f(hi);
    while flo.signum() == fhi.signum() {
        if hi >= limit {
            return Err(Error::BracketFailure(format!("no sign change on [{lo}, {limit}]")));
        }
        hi = (2.0 * hi).min(limit);
        fhi = f(hi);
    }
    bisect(f, lo, hi, tol)
}

/// Samples `f` on a uniform grid of `n + 1` points over `[a, b]`.
pub fn sample_grid<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    (0..=n)
        .map(|k| {
            let x = a + (b - a) * k as f64 / n as f64;
            (x, f(x))
        })
        .collect()
}

/// Indices of interior local maxima of a sampled curve, plus the endpoints
/// when they dominate their neighbour.
pub fn local_maxima(samples: &[(f64, f64)]) -> Vec<usize> {
    let n = samples.len();
    let mut out = Vec::new();
    for k in 0..n {
        let left = if k == 0 { f64::NEG_INFINITY } else { samples[k - 1].1 };
        let right = if k + 1 == n {
            f64::NEG_INFINITY
        } else {
            samples[k + 1].1
        };
        if samples[k].1 >= left && samples[k].1 > right {
            out.push(k);
        }
    }
    out
}

/// Multi-start maximization: dense grid scan, then golden-section refinement
/// inside the grid cell pair around each candidate local maximum. Returns all
/// refined local maxima sorted by position.
pub fn refined_maxima<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n_grid: usize, tol: f64) -> Vec<Maximum> {
    let samples = sample_grid(&mut f, a, b, n_grid);
    let h = (b - a) / n_grid as f64;
    let mut out: Vec<Maximum> = local_maxima(&samples)
        .into_iter()
        .map(|k| {
            let x0 = samples[k].0;
            let lo = (x0 - h).max(a.min(b));
            let hi = (x0 + h).min(a.max(b));
            let mut m = golden_section_max(&mut f, lo, hi, tol);
            if samples[k].1 > m.value {
                m.x = x0;
                m.value = samples[k].1;
            }
            m.iterations += n_grid + 1;
            m
        })
        .collect();
    out.sort_by(|p, q| p.x.total_cmp(&q.x));
    out
}

/// Global maximum over `[a, b]` via [`refined_maxima`].
pub fn scan_max<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, n_grid: usize, tol: f64) -> Result<Maximum> {
    refined_maxima(f, a, b, n_grid, tol)
        .into_iter()
        .max_by(|p, q| p.value.total_cmp(&q.value))
        .ok_or_else(|| Error::BracketFailure(format!("no maximum found on [{a}, {b}]")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_peak() {
        let m = golden_section_max(|x| -(x - 1.3).powi(2) + 2.0, 0.0, 4.0, 1e-10);
        assert!((m.x - 1.3).abs() < 1e-6);
        assert!((m.value - 2.0).abs() < 1e-15);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-10).is_err());
    }

    #[test]
    fn expanding_bracket() {
        let r = bisect_expanding(|x| 50.0 - x, 0.0, 1.0, 1e3, 1e-12).unwrap();
        assert!((r - 50.0).abs() < 1e-10);
        assert!(bisect_expanding(|x| 5e3 - x, 0.0, 1.0, 1e3, 1e-12).is_err());
    }

    #[test]
    fn multistart_finds_global_maximum_of_rippled_curve() {
        let f = |x: f64| (-(x - 2.0).powi(2)).exp() + 0.05 * (40.0 * x).cos();
        let all = refined_maxima(f, 0.0, 4.0, 2000, 1e-10);
        assert!(all.len() > 10);
        let best = scan_max(f, 0.0, 4.0, 2000, 1e-10).unwrap();
        let brute = sample_grid(f, 0.0, 4.0, 400_000)
            .into_iter()
            .fold((0.0, f64::NEG_INFINITY), |acc, s| if s.1 > acc.1 { s } else { acc });
        assert!((best.x - brute.0).abs() < 1e-4);
        assert!(best.value >= brute.1 - 1e-12);
    }
}
