/// Advantages and returns of one trajectory.
///
/// `values[k]` estimates step `k`; `last_value` bootstraps after the final
/// step and is ignored when the trajectory ended in a true terminal (`done`).
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    last_value: f64,
    done: bool,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len(), "one value per reward");
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for k in (0..n).rev() {
        let (next_value, live) = if k + 1 < n {
            (values[k + 1], 1.0)
        } else if done {
            (0.0, 0.0)
        } else {
            (last_value, 1.0)
        };
        let delta = rewards[k] + gamma * next_value * live - values[k];
        adv[k] = delta + gamma * lambda * live * next_adv;
        next_adv = adv[k];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts and scales to zero mean and unit (population) variance.
/// A constant batch becomes all zeros.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = if std > 1e-12 { (*a - mean) / std } else { 0.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_zero_gives_td_errors() {
        let r = [1.0, -0.5, 2.0];
        let v = [0.3, 0.1, -0.2];
        let (a, ret) = compute_gae(&r, &v, 0.7, false, 0.9, 0.0);
        assert_eq!(a[0], 1.0 + 0.9 * 0.1 - 0.3);
        assert_eq!(a[1], -0.5 + 0.9 * -0.2 - 0.1);
        assert_eq!(a[2], 2.0 + 0.9 * 0.7 + 0.2);
        assert_eq!(ret[2], a[2] + v[2]);
    }

    #[test]
    fn undiscounted_zero_values_give_suffix_sums() {
        let (a, _) = compute_gae(&[1.0, 2.0, 3.0], &[0.0; 3], 0.0, true, 1.0, 1.0);
        assert_eq!(a, vec![6.0, 5.0, 3.0]);
    }

    #[test]
    fn single_terminal_step() {
        let (a, ret) = compute_gae(&[10.0], &[2.5], 99.0, true, 0.99, 0.95);
        assert_eq!(a, vec![7.5]);
        assert_eq!(ret, vec![10.0]);
    }

    #[test]
    fn normalization_moments() {
        let mut a = vec![1.0, 2.0, 4.0, 8.0];
        normalize_advantages(&mut a);
        let m = a.iter().sum::<f64>() / 4.0;
        let s = (a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!(m.abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
    }
}
