//! Network-free verification of the DRND math: the closed-form optimal
//! predictor, the pseudo-count statistic y(x), its exact small-case
//! enumeration, two routes to Var[y], and Monte-Carlo checks of the
//! linear-model mean-squared-error identity.

use serde::Serialize;

use crate::error::{DrndError, Result};
use crate::rng::Rng64;

/// A discrete target distribution at one fixed input: the N target output
/// vectors plus element-wise raw moments up to order four.
#[derive(Debug, Clone)]
pub struct DiscreteTargetDist {
    pub values: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub b2: Vec<f64>,
    pub b3: Vec<f64>,
    pub b4: Vec<f64>,
}

impl DiscreteTargetDist {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(DrndError::Argument("distribution needs values".into()));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(DrndError::Shape("inconsistent value dimensions".into()));
        }
        let n = values.len() as f64;
        let mut mu = vec![0.0; dim];
        let mut b2 = vec![0.0; dim];
        let mut b3 = vec![0.0; dim];
        let mut b4 = vec![0.0; dim];
        for v in &values {
            for j in 0..dim {
                let x = v[j];
                mu[j] += x / n;
                b2[j] += x * x / n;
                b3[j] += x * x * x / n;
                b4[j] += x * x * x * x / n;
            }
        }
        Ok(DiscreteTargetDist {
            values,
            mu,
            b2,
            b3,
            b4,
        })
    }

    /// Scalar two-point distribution, the workhorse test case.
    pub fn two_point(a: f64, b: f64) -> Self {
        DiscreteTargetDist::new(vec![vec![a], vec![b]]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn n_targets(&self) -> usize {
        self.values.len()
    }

    /// Pooled target variance sum_j (B2_j - mu_j^2).
    pub fn pooled_variance(&self) -> f64 {
        self.b2
            .iter()
            .zip(&self.mu)
            .map(|(b2, mu)| b2 - mu * mu)
            .sum()
    }

    fn require_non_degenerate(&self) -> Result<()> {
        if self.pooled_variance() <= 1e-12 {
            return Err(DrndError::DegenerateDistribution(
                "all targets agree; pooled variance is zero".into(),
            ));
        }
        Ok(())
    }
}

/// Closed-form optimum of the distillation loss after n occurrences:
/// the element-wise mean of the recorded draws.
pub fn closed_form_fstar(draws: &[Vec<f64>]) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(DrndError::Argument("no draws".into()));
    }
    let dim = draws[0].len();
    let mut mean = vec![0.0; dim];
    for d in draws {
        if d.len() != dim {
            return Err(DrndError::Shape("inconsistent draw dimensions".into()));
        }
        for j in 0..dim {
            mean[j] += d[j];
        }
    }
    for m in &mut mean {
        *m /= draws.len() as f64;
    }
    Ok(mean)
}

/// The raw pseudo-count statistic
/// y = (sum f*_j^2 - sum mu_j^2) / (sum B2_j - sum mu_j^2), unclamped.
pub fn pseudo_count_y(fstar: &[f64], dist: &DiscreteTargetDist) -> Result<f64> {
    dist.require_non_degenerate()?;
    if fstar.len() != dist.dim() {
        return Err(DrndError::Shape(
            "f* dimension does not match distribution".into(),
        ));
    }
    let num: f64 = fstar
        .iter()
        .zip(&dist.mu)
        .map(|(f, mu)| f * f - mu * mu)
        .sum();
    Ok(num / dist.pooled_variance())
}

/// Monte-Carlo verdict against an analytic value at a stated z-threshold.
#[derive(Debug, Clone, Serialize)]
pub struct MCReport {
    pub estimate: f64,
    pub standard_error: f64,
    pub analytic_value: f64,
    pub trials: u64,
    pub z: f64,
    pub pass: bool,
}

impl MCReport {
    fn from_samples(sum: f64, sum_sq: f64, trials: u64, analytic: f64, z: f64) -> Self {
        let n = trials as f64;
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0);
        let se = (var / n).sqrt();
        MCReport {
            estimate: mean,
            standard_error: se,
            analytic_value: analytic,
            trials,
            z,
            pass: (mean - analytic).abs() <= z * se,
        }
    }
}

/// Monte-Carlo check that E[y] = 1/n: each trial draws n values from the
/// distribution, forms f* as their mean, and evaluates y.
pub fn mc_unbiasedness(
    dist: &DiscreteTargetDist,
    n: usize,
    trials: u64,
    rng: &mut Rng64,
) -> Result<MCReport> {
    dist.require_non_degenerate()?;
    if n == 0 {
        return Err(DrndError::Argument("n must be >= 1".into()));
    }
    let dim = dist.dim();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut fstar = vec![0.0; dim];
    for _ in 0..trials {
        fstar.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..n {
            let idx = rng.index(dist.n_targets());
            for j in 0..dim {
                fstar[j] += dist.values[idx][j];
            }
        }
        for v in &mut fstar {
            *v /= n as f64;
        }
        let y = pseudo_count_y(&fstar, dist)?;
        sum += y;
        sum_sq += y * y;
    }
    Ok(MCReport::from_samples(
        sum,
        sum_sq,
        trials,
        1.0 / n as f64,
        3.0,
    ))
}

/// Sample variance of y over `trials` trials (consistency probe).
pub fn mc_variance_of_y(
    dist: &DiscreteTargetDist,
    n: usize,
    trials: u64,
    rng: &mut Rng64,
) -> Result<f64> {
    let report = mc_unbiasedness(dist, n, trials, rng)?;
    // standard_error^2 * trials = sample variance
    Ok(report.standard_error * report.standard_error * trials as f64)
}

/// Which algebraic route computes Var[y].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceRoute {
    /// E[f*^4] and E[f*^2] from the falling-factorial moment expansion,
    /// then Var[f*^2] / (B2 - mu^2)^2.
    UnexpandedMoments,
    /// The K1..K5 polynomial as printed, with K5 = -5n^2 + 10n - 6.
    ExpandedPrintedK5,
    /// The K1..K5 polynomial with the rederived K5 = -4n^2 + 10n - 6.
    ExpandedRederivedK5,
}

/// Falling factorial n!/(n-i)! (0 when i > n).
fn falling(n: usize, i: usize) -> f64 {
    if i > n {
        return 0.0;
    }
    let mut p = 1.0;
    for k in 0..i {
        p *= (n - k) as f64;
    }
    p
}

/// Var[y] for a scalar-output distribution after n occurrences.
pub fn variance_of_y(dist: &DiscreteTargetDist, n: usize, route: VarianceRoute) -> Result<f64> {
    if dist.dim() != 1 {
        return Err(DrndError::Argument(
            "variance_of_y is defined for scalar-output distributions".into(),
        ));
    }
    dist.require_non_degenerate()?;
    if n == 0 {
        return Err(DrndError::Argument("n must be >= 1".into()));
    }
    let (mu, b2, b3, b4) = (dist.mu[0], dist.b2[0], dist.b3[0], dist.b4[0]);
    let denom = (b2 - mu * mu).powi(2);
    let nf = n as f64;
    match route {
        VarianceRoute::UnexpandedMoments => {
            let ef2 = b2 / nf + (nf - 1.0) / nf * mu * mu;
            let a2 = falling(n, 2);
            let a3 = falling(n, 3);
            let a4 = falling(n, 4);
            let ef4 = (nf * b4
                + 4.0 * a2 * mu * b3
                + 3.0 * a2 * b2 * b2
                + 6.0 * a3 * mu * mu * b2
                + a4 * mu.powi(4))
                / nf.powi(4);
            Ok((ef4 - ef2 * ef2) / denom)
        }
        VarianceRoute::ExpandedPrintedK5 | VarianceRoute::ExpandedRederivedK5 => {
            let k1 = 1.0;
            let k2 = 4.0 * nf - 4.0;
            let k3 = 2.0 * nf - 3.0;
            let k4 = 4.0 * nf * nf - 16.0 * nf + 12.0;
            let k5 = match route {
                VarianceRoute::ExpandedPrintedK5 => -5.0 * nf * nf + 10.0 * nf - 6.0,
                _ => -4.0 * nf * nf + 10.0 * nf - 6.0,
            };
            let num = k1 * b4 + k2 * mu * b3 + k3 * b2 * b2 + k4 * mu * mu * b2 + k5 * mu.powi(4);
            Ok(num / (nf.powi(3) * denom))
        }
    }
}

/// Exact mean and variance of y by exhaustive enumeration of all N^n
/// equally likely draw sequences. Small cases only.
pub fn enumerate_y_moments(dist: &DiscreteTargetDist, n: usize) -> Result<(f64, f64)> {
    dist.require_non_degenerate()?;
    if n == 0 {
        return Err(DrndError::Argument("n must be >= 1".into()));
    }
    let n_targets = dist.n_targets();
    let total = (n_targets as f64).powi(n as i32);
    if total > 2e7 {
        return Err(DrndError::Argument(format!(
            "enumeration over {total} sequences is too large"
        )));
    }
    let dim = dist.dim();
    let mut idx = vec![0usize; n];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    loop {
        let mut fstar = vec![0.0; dim];
        for &i in &idx {
            for j in 0..dim {
                fstar[j] += dist.values[i][j];
            }
        }
        for v in &mut fstar {
            *v /= n as f64;
        }
        let y = pseudo_count_y(&fstar, dist)?;
        sum += y;
        sum_sq += y * y;
        // Odometer increment over base-N digits.
        let mut pos = 0;
        loop {
            if pos == n {
                let mean = sum / total;
                let var = sum_sq / total - mean * mean;
                return Ok((mean, var));
            }
            idx[pos] += 1;
            if idx[pos] < n_targets {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Configuration for the linear-model MSE identity check.
#[derive(Debug, Clone)]
pub struct Lemma1Config {
    pub dim: usize,
    pub n_targets: usize,
    pub theta_mean: Vec<f64>,
    /// Row-major d x d covariance, symmetric PSD.
    pub theta_cov: Vec<f64>,
    pub probe: Vec<f64>,
    pub trials: u64,
}

impl Lemma1Config {
    pub fn analytic_value(&self) -> f64 {
        let d = self.dim;
        let mut quad = 0.0;
        for i in 0..d {
            for j in 0..d {
                quad += self.probe[i] * self.theta_cov[i * d + j] * self.probe[j];
            }
        }
        (1.0 + 1.0 / self.n_targets as f64) * quad
    }
}

/// Cholesky factorization of a symmetric PSD matrix (row-major).
/// Returns the lower factor; errors on non-PSD input.
pub fn cholesky(d: usize, a: &[f64]) -> Result<Vec<f64>> {
    if a.len() != d * d {
        return Err(DrndError::Shape("covariance is not d x d".into()));
    }
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s < -1e-12 {
                    return Err(DrndError::Argument(
                        "covariance is not positive semidefinite".into(),
                    ));
                }
                l[i * d + i] = s.max(0.0).sqrt();
            } else {
                let diag = l[j * d + j];
                l[i * d + j] = if diag.abs() < 1e-300 { 0.0 } else { s / diag };
            }
        }
    }
    Ok(l)
}

/// Monte-Carlo check of E||theta~^T x - (1/N) sum theta_i^T x||^2
/// = (1 + 1/N) x^T Sigma x for the scalar linear model.
pub fn mc_lemma1(cfg: &Lemma1Config, rng: &mut Rng64) -> Result<MCReport> {
    if cfg.theta_mean.len() != cfg.dim || cfg.probe.len() != cfg.dim {
        return Err(DrndError::Shape("dim mismatch in Lemma1Config".into()));
    }
    let l = cholesky(cfg.dim, &cfg.theta_cov)?;
    let d = cfg.dim;
    let mut z = vec![0.0; d];
    let sample_proj = |rng: &mut Rng64, z: &mut Vec<f64>| -> f64 {
        for v in z.iter_mut() {
            *v = rng.normal();
        }
        // theta^T x with theta = mean + L z
        let mut proj = 0.0;
        for i in 0..d {
            let mut ti = cfg.theta_mean[i];
            for k in 0..=i {
                ti += l[i * d + k] * z[k];
            }
            proj += ti * cfg.probe[i];
        }
        proj
    };
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..cfg.trials {
        let pred = sample_proj(rng, &mut z);
        let mut target_mean = 0.0;
        for _ in 0..cfg.n_targets {
            target_mean += sample_proj(rng, &mut z);
        }
        target_mean /= cfg.n_targets as f64;
        let e = (pred - target_mean).powi(2);
        sum += e;
        sum_sq += e * e;
    }
    Ok(MCReport::from_samples(
        sum,
        sum_sq,
        cfg.trials,
        cfg.analytic_value(),
        3.0,
    ))
}

/// Expected initial-bonus gap between two probes under the Gaussian linear
/// model: ((1+N)/N) sigma^2 (||x2||^2 - ||x1||^2).
pub fn lemma2_gap(sigma2: f64, n_targets: usize, x1: &[f64], x2: &[f64]) -> f64 {
    let sq = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
    (1.0 + n_targets as f64) * sigma2 / n_targets as f64 * (sq(x2) - sq(x1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fstar_is_mean_of_draws() {
        assert_eq!(closed_form_fstar(&[vec![2.0]]).unwrap(), vec![2.0]);
        assert_eq!(
            closed_form_fstar(&[vec![0.0], vec![2.0]]).unwrap(),
            vec![1.0]
        );
        assert_eq!(
            closed_form_fstar(&[vec![0.0], vec![2.0], vec![2.0], vec![0.0]]).unwrap(),
            vec![1.0]
        );
        assert!(closed_form_fstar(&[]).is_err());
    }

    #[test]
    fn y_substitution_two_point() {
        let dist = DiscreteTargetDist::two_point(0.0, 2.0);
        // n=1, drew 2: y = (4-1)/(2-1) = 3.
        assert_eq!(pseudo_count_y(&[2.0], &dist).unwrap(), 3.0);
        // n=2, one of each: f* = 1, y = 0.
        assert_eq!(pseudo_count_y(&[1.0], &dist).unwrap(), 0.0);
        // f* = mu -> 0.
        assert_eq!(pseudo_count_y(&dist.mu.clone(), &dist).unwrap(), 0.0);
    }

    #[test]
    fn y_exhaustive_two_point_n2() {
        // All 4 sequences: f* in {0, 1, 1, 2}; E[y] = ((0+1+1+4)/4 - 1)/1 = 0.5.
        let dist = DiscreteTargetDist::two_point(0.0, 2.0);
        let (mean, _) = enumerate_y_moments(&dist, 2).unwrap();
        assert!((mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn y_degenerate_dist_rejected() {
        let dist = DiscreteTargetDist::new(vec![vec![1.0], vec![1.0]]).unwrap();
        assert!(pseudo_count_y(&[1.0], &dist).is_err());
    }

    #[test]
    fn enumeration_matches_one_over_n() {
        for n in 1..=3usize {
            for dist in [
                DiscreteTargetDist::two_point(0.0, 2.0),
                DiscreteTargetDist::new(vec![vec![-1.0], vec![0.5], vec![2.0]]).unwrap(),
                DiscreteTargetDist::new(vec![
                    vec![0.0, 1.0],
                    vec![1.0, -1.0],
                    vec![2.0, 0.5],
                    vec![-0.5, 0.0],
                ])
                .unwrap(),
            ] {
                let (mean, _) = enumerate_y_moments(&dist, n).unwrap();
                assert!(
                    (mean - 1.0 / n as f64).abs() < 1e-12,
                    "n={n}: E[y]={mean}"
                );
            }
        }
    }

    #[test]
    fn mc_unbiasedness_two_point() {
        let dist = DiscreteTargetDist::two_point(0.0, 2.0);
        let mut rng = Rng64::new(2024);
        for n in [1usize, 10] {
            let r = mc_unbiasedness(&dist, n, 200_000, &mut rng).unwrap();
            assert!(r.pass, "n={n}: {r:?}");
        }
    }

    #[test]
    fn y_consistency_large_n() {
        let dist = DiscreteTargetDist::two_point(0.0, 2.0);
        let mut rng = Rng64::new(7);
        let var = mc_variance_of_y(&dist, 10_000, 1_000, &mut rng).unwrap();
        assert!(var < 1e-3, "var {var}");
    }

    #[test]
    fn variance_unexpanded_matches_enumeration() {
        let dists = [
            DiscreteTargetDist::two_point(0.0, 2.0),
            DiscreteTargetDist::new(vec![vec![-1.0], vec![0.5], vec![2.0]]).unwrap(),
            DiscreteTargetDist::new(vec![vec![0.3], vec![1.1], vec![-0.7], vec![2.5]]).unwrap(),
        ];
        for dist in &dists {
            for n in 1..=3usize {
                let analytic = variance_of_y(dist, n, VarianceRoute::UnexpandedMoments).unwrap();
                let (_, exact) = enumerate_y_moments(dist, n).unwrap();
                assert!(
                    (analytic - exact).abs() < 1e-10,
                    "n={n}: {analytic} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn printed_k5_disagrees_rederived_agrees() {
        // Two-point {0,2}: mu=1, B2=2, B3=4, B4=8. At n=1 the oracle gives
        // Var = 4 (y in {-1, 3} equiprobable). The printed K5 gives 3.
        let dist = DiscreteTargetDist::two_point(0.0, 2.0);
        let (_, exact) = enumerate_y_moments(&dist, 1).unwrap();
        assert!((exact - 4.0).abs() < 1e-12);
        let unexp = variance_of_y(&dist, 1, VarianceRoute::UnexpandedMoments).unwrap();
        assert!((unexp - 4.0).abs() < 1e-12);
        let printed = variance_of_y(&dist, 1, VarianceRoute::ExpandedPrintedK5).unwrap();
        assert!((printed - 3.0).abs() < 1e-12);
        let rederived = variance_of_y(&dist, 1, VarianceRoute::ExpandedRederivedK5).unwrap();
        assert!((rederived - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rederived_route_matches_unexpanded_everywhere() {
        let dist = DiscreteTargetDist::new(vec![vec![0.3], vec![1.1], vec![-0.7], vec![2.5]]).unwrap();
        for n in 1..=20usize {
            let a = variance_of_y(&dist, n, VarianceRoute::UnexpandedMoments).unwrap();
            let b = variance_of_y(&dist, n, VarianceRoute::ExpandedRederivedK5).unwrap();
            assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn variance_vanishes_for_large_n() {
        let dist = DiscreteTargetDist::two_point(0.0, 2.0);
        let v = variance_of_y(&dist, 1_000_000, VarianceRoute::UnexpandedMoments).unwrap();
        assert!(v.abs() < 1e-5, "var {v}");
    }

    #[test]
    fn lemma1_analytic_values() {
        let cfg = Lemma1Config {
            dim: 2,
            n_targets: 4,
            theta_mean: vec![0.0, 0.0],
            theta_cov: vec![1.0, 0.0, 0.0, 1.0],
            probe: vec![1.0, 0.0],
            trials: 0,
        };
        assert!((cfg.analytic_value() - 1.25).abs() < 1e-12);
    }

    #[test]
    fn lemma1_zero_probe() {
        let cfg = Lemma1Config {
            dim: 2,
            n_targets: 3,
            theta_mean: vec![1.0, -2.0],
            theta_cov: vec![1.0, 0.0, 0.0, 1.0],
            probe: vec![0.0, 0.0],
            trials: 1000,
        };
        let mut rng = Rng64::new(0);
        let r = mc_lemma1(&cfg, &mut rng).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.analytic_value, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn lemma1_mc_diag_cov() {
        let cfg = Lemma1Config {
            dim: 2,
            n_targets: 2,
            theta_mean: vec![0.5, -0.5],
            theta_cov: vec![1.0, 0.0, 0.0, 4.0],
            probe: vec![1.0, 1.0],
            trials: 300_000,
        };
        assert!((cfg.analytic_value() - 7.5).abs() < 1e-12);
        let mut rng = Rng64::new(99);
        let r = mc_lemma1(&cfg, &mut rng).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn cholesky_rejects_non_psd() {
        assert!(cholesky(2, &[1.0, 2.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn lemma2_values() {
        // sigma^2=1, N=1, ||x1||^2=1, ||x2||^2=3 -> gap 4.
        let g = lemma2_gap(1.0, 1, &[1.0], &[3.0f64.sqrt()]);
        assert!((g - 4.0).abs() < 1e-12);
        assert_eq!(lemma2_gap(2.0, 5, &[1.0, 2.0], &[1.0, 2.0]), 0.0);
        // N -> infinity: gap -> sigma^2 * delta.
        let g = lemma2_gap(1.5, 1_000_000, &[0.0], &[1.0]);
        assert!((g - 1.5).abs() < 1e-5);
    }

    #[test]
    fn lemma2_monotone_in_n() {
        let mut prev = f64::INFINITY;
        for n in [1usize, 2, 4, 8, 16, 32] {
            let g = lemma2_gap(1.0, n, &[0.0], &[2.0]);
            assert!(g < prev);
            prev = g;
        }
    }
}
