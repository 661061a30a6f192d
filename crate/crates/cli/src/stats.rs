//! Summary statistics for benchmark results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_interval(xs: &[f64], level: f64, resamples: usize, seed: u64) -> (f64, f64) {
    assert!(!xs.is_empty() && resamples > 0, "bootstrap needs data and resamples");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]).sum::<f64>() / xs.len() as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile(&means, tail), quantile(&means, 1.0 - tail))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub dof: f64,
    /// Two-sided.
    pub p_value: f64,
}

/// Welch's unequal-variance t-test of equal means.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> WelchTest {
    let (va, vb) = (variance(a) / a.len() as f64, variance(b) / b.len() as f64);
    let se2 = va + vb;
    if se2 == 0.0 {
        let equal = mean(a) == mean(b);
        return WelchTest {
            t: if equal { 0.0 } else { f64::INFINITY },
            dof: f64::INFINITY,
            p_value: if equal { 1.0 } else { 0.0 },
        };
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let dof = se2 * se2 / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
    WelchTest {
        t,
        dof,
        p_value: 2.0 * (1.0 - dist.cdf(t.abs())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert!((standard_error(&xs) - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [0.0, 10.0];
        assert_eq!(quantile(&s, 0.25), 2.5);
        assert_eq!(quantile(&[3.0], 0.9), 3.0);
    }

    #[test]
    fn bootstrap_brackets_the_mean_and_is_seeded() {
        let xs = [1.0, 2.0, 4.0];
        let (lo, hi) = bootstrap_interval(&xs, 0.9, 1000, 0);
        assert!(lo <= mean(&xs) && mean(&xs) <= hi);
        assert!(lo >= 1.0 && hi <= 4.0);
        assert_eq!((lo, hi), bootstrap_interval(&xs, 0.9, 1000, 0));
        assert_eq!(bootstrap_interval(&[5.0; 3], 0.9, 1000, 3), (5.0, 5.0));
    }

    #[test]
    fn welch_matches_a_worked_example() {
        // t and dof computed by hand from the textbook formulas
        let a = [27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4];
        let b = [27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 20.5, 24.4];
        let w = welch_t_test(&a, &b);
        let (va, vb) = (variance(&a) / 15.0, variance(&b) / 15.0);
        let t = (mean(&a) - mean(&b)) / (va + vb).sqrt();
        assert!((w.t - t).abs() < 1e-12);
        assert!((w.t - (-2.46)).abs() < 0.01);
        assert!((w.dof - 24.99).abs() < 0.05);
        assert!((w.p_value - 0.021).abs() < 0.002);
    }

    #[test]
    fn identical_samples_are_indistinguishable() {
        let w = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert_eq!(w.t, 0.0);
        assert!((w.p_value - 1.0).abs() < 1e-12);
    }
}
