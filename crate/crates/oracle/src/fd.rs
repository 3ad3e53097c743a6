//! Central finite differences.

use crate::OracleError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdConfig {
    /// Step `h`; must be positive.
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Coordinates sampled per parameter tensor (all of them when the tensor
    /// is smaller).
    pub samples: usize,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            step: 1e-5,
            rel_tol: 1e-4,
            abs_tol: 1e-7,
            samples: 16,
        }
    }
}

/// `(f(x + h e_i) − f(x − h e_i)) / 2h` for each requested coordinate.
pub fn finite_difference_grad<F>(
    mut f: F,
    x: &[f64],
    coords: &[usize],
    step: f64,
) -> Result<Vec<f64>, OracleError>
where
    F: FnMut(&[f64]) -> f64,
{
    if step.is_nan() || step <= 0.0 {
        return Err(OracleError::Param(format!(
            "step must be positive, got {step}"
        )));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(coords.len());
    for &i in coords {
        if i >= x.len() {
            return Err(OracleError::Param(format!(
                "coordinate {i} out of range {}",
                x.len()
            )));
        }
        probe[i] = x[i] + step;
        let plus = f(&probe);
        probe[i] = x[i] - step;
        let minus = f(&probe);
        probe[i] = x[i];
        for value in [plus, minus] {
            if !value.is_finite() {
                return Err(OracleError::NonFinite { coord: i, value });
            }
        }
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

/// Deterministic sample of at most `count` distinct coordinates out of `len`
/// (splitmix64 stream, sorted).
pub fn sample_coords(len: usize, count: usize, seed: u64) -> Vec<usize> {
    if count >= len {
        return (0..len).collect();
    }
    let mut state = seed;
    let mut next = || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    let mut picked = Vec::with_capacity(count);
    while picked.len() < count {
        let c = (next() % len as u64) as usize;
        if !picked.contains(&c) {
            picked.push(c);
        }
    }
    picked.sort_unstable();
    picked
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradComparison {
    /// Largest `|a − n| / max(|a|, |n|, abs_tol)`.
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub passed: bool,
}

/// An entry passes when its absolute error is within `abs_tol` or its
/// relative error is within `rel_tol`.
pub fn compare_gradients(analytic: &[f64], numeric: &[f64], cfg: &FdConfig) -> GradComparison {
    assert_eq!(analytic.len(), numeric.len());
    let mut max_rel_err: f64 = 0.0;
    let mut max_abs_err: f64 = 0.0;
    let mut passed = true;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(cfg.abs_tol);
        max_abs_err = max_abs_err.max(abs);
        max_rel_err = max_rel_err.max(rel);
        if !(abs <= cfg.abs_tol || rel <= cfg.rel_tol) {
            passed = false;
        }
    }
    GradComparison {
        max_rel_err,
        max_abs_err,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_derivative() {
        let g = finite_difference_grad(|x| x[0] * x[0], &[3.0], &[0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_function() {
        let g = finite_difference_grad(|_| 4.2, &[1.0, 2.0], &[0, 1], 1e-5).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn non_finite_aborts() {
        let r = finite_difference_grad(|x| (x[0]).ln(), &[0.0], &[0], 1e-5);
        assert!(matches!(r, Err(OracleError::NonFinite { coord: 0, .. })));
    }

    #[test]
    fn rejects_nonpositive_step() {
        assert!(finite_difference_grad(|x| x[0], &[0.0], &[0], 0.0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_distinct() {
        let a = sample_coords(1000, 20, 7);
        assert_eq!(a, sample_coords(1000, 20, 7));
        let mut d = a.clone();
        d.dedup();
        assert_eq!(d.len(), 20);
        assert_eq!(sample_coords(5, 20, 1), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn comparison_uses_abs_floor() {
        let cfg = FdConfig::default();
        assert!(compare_gradients(&[1e-9], &[2e-9], &cfg).passed);
        assert!(!compare_gradients(&[1.0], &[1.001], &cfg).passed);
    }
}
