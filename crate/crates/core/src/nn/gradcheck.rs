/// Result of comparing analytic gradients against central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Coordinate with the largest error.
    pub worst: usize,
}

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero gradients from
/// dominating through finite-difference round-off.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Default floor of [`relative_error`] used by [`grad_check`].
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Checks every coordinate of `f`'s analytic gradient at `point`.
pub fn grad_check<F>(f: F, point: &[f64], step: f64) -> GradCheck
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let coords: Vec<usize> = (0..point.len()).collect();
    grad_check_coords(f, point, step, &coords)
}

/// Like [`grad_check`] but only over `coords`.
pub fn grad_check_coords<F>(f: F, point: &[f64], step: f64, coords: &[usize]) -> GradCheck
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, grad) = f(point);
    let mut x = point.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: coords.first().copied().unwrap_or(0),
    };
    for &i in coords {
        let orig = x[i];
        x[i] = orig + step;
        let up = f(&x).0;
        x[i] = orig - step;
        let down = f(&x).0;
        x[i] = orig;
        let fd = (up - down) / (2.0 * step);
        let err = relative_error(grad[i], fd, REL_ERROR_FLOOR);
        if err > report.max_rel_error {
            report = GradCheck {
                max_rel_error: err,
                worst: i,
            };
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let f = |x: &[f64]| (x.iter().map(|v| v * v).sum(), x.iter().map(|v| 2.0 * v).collect());
        let r = grad_check(f, &[1.0, 2.0], 1e-4);
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let f = |x: &[f64]| (4.0, vec![0.0; x.len()]);
        assert_eq!(grad_check(f, &[1.0, -3.0], 1e-4).max_rel_error, 0.0);
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let f = |x: &[f64]| (x[0] * x[0], vec![x[0]]);
        assert!(grad_check(f, &[1.0], 1e-4).max_rel_error > 0.4);
    }
}
