//! Closed-form predictors for the stability boundaries, dimensionless
//! groups, ordinary least-squares fits with 95% prediction intervals,
//! and the Monte Carlo experiment driver.
//!
//! The two predictors are
//!   w_min  = 4 sqrt(l_eq) / omega_n          (minimum hip width)
//!   omega_s,min = omega_n + omega_p          (minimum stride frequency)
//! with l_eq = l0 - m g / k and omega_p = sqrt(g/l), l = sqrt(l0^2 + rho^2).

use alloc::vec::Vec;
use libm::{exp, fabs, lgamma, log, sqrt};

use crate::params::{random_model, ModelParams, ParamError, ParamRanges};
use crate::sim::IntegratorConfig;
use crate::stability::{self, StabilityError};

/// Predicted minimum hip width [m]: 4 sqrt(l_eq) / omega_n.
pub fn predict_min_hip_width(params: &ModelParams) -> Result<f64, ParamError> {
    let d = params.derive()?;
    Ok(4.0 * sqrt(d.effective_rest_length) / d.natural_frequency)
}

/// Predicted minimum stabilizing stride frequency [rad/s]: omega_n + omega_p.
pub fn predict_min_stride_frequency(params: &ModelParams) -> Result<f64, ParamError> {
    let d = params.derive()?;
    Ok(d.natural_frequency + d.pendulum_frequency)
}

/// A model's coordinates in the dimensionless plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionlessPoint {
    /// k_hat = k l / (m g).
    pub k_hat: f64,
    /// omega_s_hat = omega_s / sqrt(g / l).
    pub omega_s_hat: f64,
}

impl DimensionlessPoint {
    pub fn new(params: &ModelParams, omega_s: f64) -> Result<DimensionlessPoint, ParamError> {
        let d = params.derive()?;
        let l = d.diag_leg_length;
        Ok(DimensionlessPoint {
            k_hat: params.leg_stiffness * l / (params.total_mass * params.gravity),
            omega_s_hat: omega_s / sqrt(params.gravity / l),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitError {
    /// Fewer than three points.
    TooFewPoints,
    /// All abscissae equal: slope undefined.
    DegenerateX,
}

impl core::fmt::Display for FitError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FitError::TooFewPoints => write!(f, "need at least three points"),
            FitError::DegenerateX => write!(f, "abscissae are all equal"),
        }
    }
}

/// Ordinary least-squares line fit with enough retained state to build
/// prediction intervals at arbitrary abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Residual standard deviation, s = sqrt(SS_res / (n - 2)).
    pub residual_std: f64,
    pub n: usize,
    mean_x: f64,
    sxx: f64,
    t_975: f64,
}

impl RegressionFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    /// 95% prediction interval for a new observation at `x`:
    /// y_hat +/- t_{0.975, n-2} * s * sqrt(1 + 1/n + (x - x_bar)^2 / S_xx).
    pub fn prediction_interval_95(&self, x: f64) -> (f64, f64) {
        let y = self.predict(x);
        let dx = x - self.mean_x;
        let half = self.t_975
            * self.residual_std
            * sqrt(1.0 + 1.0 / self.n as f64 + dx * dx / self.sxx);
        (y - half, y + half)
    }
}

pub fn ols_fit(xs: &[f64], ys: &[f64]) -> Result<RegressionFit, FitError> {
    let n = xs.len();
    if n < 3 || ys.len() != n {
        return Err(FitError::TooFewPoints);
    }
    let nf = n as f64;
    let mean_x = xs.iter().sum::<f64>() / nf;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mean_x;
        let dy = ys[i] - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 || !sxx.is_finite() {
        return Err(FitError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let mut ss_res = 0.0;
    for i in 0..n {
        let r = ys[i] - (slope * xs[i] + intercept);
        ss_res += r * r;
    }
    // guard the perfectly collinear case against tiny negative residue
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(RegressionFit {
        slope,
        intercept,
        r_squared,
        residual_std: sqrt(ss_res / (nf - 2.0)),
        n,
        mean_x,
        sxx,
        t_975: student_t_975(n - 2),
    })
}

/// Regularized incomplete beta I_x(a, b) via Lentz's continued fraction.
fn incbeta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log(1.0 - x);
    let front = exp(ln_front);
    // symmetry keeps the continued fraction in its fast-converging region
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - incbeta(b, a, 1.0 - x);
    }
    let tiny = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if fabs(d) < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..200 {
        let m = m as f64;
        // even step
        let num = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        d = 1.0 + num * d;
        if fabs(d) < tiny {
            d = tiny;
        }
        d = 1.0 / d;
        c = 1.0 + num / c;
        if fabs(c) < tiny {
            c = tiny;
        }
        h *= d * c;
        // odd step
        let num = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
        d = 1.0 + num * d;
        if fabs(d) < tiny {
            d = tiny;
        }
        d = 1.0 / d;
        c = 1.0 + num / c;
        if fabs(c) < tiny {
            c = tiny;
        }
        let del = d * c;
        h *= del;
        if fabs(del - 1.0) < 1e-15 {
            break;
        }
    }
    front * h / a
}

/// Two-sided 95% Student-t critical value (CDF = 0.975) for `df` degrees
/// of freedom, from the tail identity P(|T| > t) = I_x(df/2, 1/2) with
/// x = df / (df + t^2), solved by bisection.
pub fn student_t_975(df: usize) -> f64 {
    let nu = df as f64;
    let tail = |t: f64| incbeta(0.5 * nu, 0.5, nu / (nu + t * t));
    let (mut lo, mut hi) = (0.0, 1000.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > 0.05 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Why a Monte Carlo point produced no minimum-frequency estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McFailure {
    InvalidParams,
    NoStableFrequency,
    SearchFailed,
}

/// One successfully evaluated Monte Carlo point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSuccess {
    pub omega_s_min: f64,
    pub spectral_radius: f64,
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct McRecord {
    pub index: usize,
    pub params: ModelParams,
    pub omega_n: f64,
    pub omega_p: f64,
    /// Closed-form omega_n + omega_p.
    pub predicted: f64,
    pub outcome: Result<McSuccess, McFailure>,
}

#[derive(Debug, Clone)]
pub struct McOutcome {
    pub records: Vec<McRecord>,
    /// omega_s_hat vs sqrt(k_hat) over the successful points.
    pub dimensionless_fit: Option<RegressionFit>,
    /// omega_s_min vs omega_n over the successful points.
    pub natural_frequency_fit: Option<RegressionFit>,
    pub failures: usize,
}

/// The models drawn for an experiment; separated out so callers can
/// evaluate them in any execution order and still merge deterministically.
pub fn montecarlo_models(ranges: &ParamRanges, n_models: usize, seed: u64) -> Vec<ModelParams> {
    (0..n_models)
        .map(|i| random_model(ranges, seed.wrapping_add(i as u64)))
        .collect()
}

/// Minimum-frequency search for a single model over the default probe
/// window around the predicted minimum.
pub fn evaluate_model(
    cfg: &IntegratorConfig,
    params: &ModelParams,
    tol: f64,
) -> Result<McSuccess, McFailure> {
    let d = params.derive().map_err(|_| McFailure::InvalidParams)?;
    let profile = crate::profile::StrideProfile::for_frequency(
        d.natural_frequency + d.pendulum_frequency,
        params.rest_length_max,
        params.retraction_fraction * params.rest_length_max,
    );
    let sys = crate::dynamics::BipedSystem::new(*params, profile, Vec::new())
        .map_err(|_| McFailure::InvalidParams)?;
    let (lo, hi) = stability::probe_range(&sys);
    match stability::min_stride_frequency(cfg, &sys, lo, hi, tol) {
        Ok(res) => Ok(McSuccess {
            omega_s_min: res.omega_s_min,
            spectral_radius: res.report_at_min.spectral_radius,
            bracket: res.bracket,
        }),
        Err(StabilityError::NoStableFrequencyInRange) => Err(McFailure::NoStableFrequency),
        Err(_) => Err(McFailure::SearchFailed),
    }
}

/// Assemble records and regression fits from per-model outcomes listed
/// in the same order as `models`.
pub fn montecarlo_outcome(
    models: &[ModelParams],
    outcomes: Vec<Result<McSuccess, McFailure>>,
) -> McOutcome {
    assert_eq!(models.len(), outcomes.len());
    let mut records = Vec::with_capacity(models.len());
    let mut sqrt_k_hat = Vec::new();
    let mut omega_hat = Vec::new();
    let mut omega_n_xs = Vec::new();
    let mut omega_min_ys = Vec::new();
    let mut failures = 0;
    for (i, (params, outcome)) in models.iter().zip(outcomes).enumerate() {
        let d = params.derive().expect("models were validated at draw time");
        if let Ok(s) = &outcome {
            let pt = DimensionlessPoint::new(params, s.omega_s_min)
                .expect("params already derived");
            sqrt_k_hat.push(sqrt(pt.k_hat));
            omega_hat.push(pt.omega_s_hat);
            omega_n_xs.push(d.natural_frequency);
            omega_min_ys.push(s.omega_s_min);
        } else {
            failures += 1;
        }
        records.push(McRecord {
            index: i,
            params: *params,
            omega_n: d.natural_frequency,
            omega_p: d.pendulum_frequency,
            predicted: d.natural_frequency + d.pendulum_frequency,
            outcome,
        });
    }
    McOutcome {
        dimensionless_fit: ols_fit(&sqrt_k_hat, &omega_hat).ok(),
        natural_frequency_fit: ols_fit(&omega_n_xs, &omega_min_ys).ok(),
        records,
        failures,
    }
}

/// Sequential Monte Carlo experiment: draw models, search each one's
/// minimum stabilizing frequency, fit the dimensionless relation.
pub fn montecarlo_experiment(
    ranges: &ParamRanges,
    n_models: usize,
    seed: u64,
    cfg: &IntegratorConfig,
    tol: f64,
) -> McOutcome {
    let models = montecarlo_models(ranges, n_models, seed);
    let outcomes = models.iter().map(|p| evaluate_model(cfg, p, tol)).collect();
    montecarlo_outcome(&models, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelKind;
    use approx::assert_relative_eq;

    #[test]
    fn hip_width_prediction_matches_hand_value() {
        let p = ModelParams::simplified(ModelKind::FixedHip, 80.0, 16_000.0, 0.9, 0.3);
        assert_relative_eq!(predict_min_hip_width(&p).unwrap(), 0.260919, epsilon = 1e-5);
    }

    #[test]
    fn hip_width_prediction_decreases_with_stiffness() {
        let p1 = ModelParams::simplified(ModelKind::FixedHip, 80.0, 10_000.0, 0.9, 0.3);
        let p2 = ModelParams::simplified(ModelKind::FixedHip, 80.0, 20_000.0, 0.9, 0.3);
        assert!(predict_min_hip_width(&p2).unwrap() < predict_min_hip_width(&p1).unwrap());
    }

    #[test]
    fn hip_width_prediction_rejects_bottomed_spring() {
        let p = ModelParams::simplified(ModelKind::FixedHip, 100.0, 1_000.0, 0.9, 0.3);
        assert!(predict_min_hip_width(&p).is_err());
    }

    #[test]
    fn half_width_form_of_the_width_law() {
        // sqrt(l_eq) / rho_min = omega_n / 2 is the same statement
        let p = ModelParams::simplified(ModelKind::FixedHip, 80.0, 16_000.0, 0.9, 0.3);
        let d = p.derive().unwrap();
        let rho_min = 0.5 * predict_min_hip_width(&p).unwrap();
        assert_relative_eq!(
            sqrt(d.effective_rest_length) / rho_min,
            0.5 * d.natural_frequency,
            epsilon = 1e-12
        );
    }

    #[test]
    fn stride_frequency_prediction_matches_hand_value() {
        let p = ModelParams::simplified(ModelKind::FixedHip, 70.0, 12_000.0, 1.0, 0.30);
        assert_relative_eq!(predict_min_stride_frequency(&p).unwrap(), 16.208, epsilon = 1e-3);
    }

    #[test]
    fn dimensionless_form_is_an_identity() {
        // (sqrt(k_hat) + 1) sqrt(g/l) == omega_n + omega_p for any params
        for (m, k, l0, w) in [
            (80.0, 16_000.0, 0.9, 0.36),
            (55.0, 7_500.0, 1.15, 0.5),
            (100.0, 19_000.0, 0.7, 0.28),
        ] {
            let p = ModelParams::simplified(ModelKind::FixedHip, m, k, l0, w);
            let d = p.derive().unwrap();
            let pt = DimensionlessPoint::new(&p, 1.0).unwrap();
            let lhs = (sqrt(pt.k_hat) + 1.0) * sqrt(p.gravity / d.diag_leg_length);
            assert_relative_eq!(lhs, predict_min_stride_frequency(&p).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn dimensionless_groups_are_scale_invariant() {
        // dynamic similarity: lengths x lam, masses x mu, gravity x gam,
        // stiffness x mu gam / lam, frequencies x sqrt(gam / lam)
        let p = ModelParams::simplified(ModelKind::FixedHip, 80.0, 16_000.0, 0.9, 0.36);
        let omega_s = 17.0;
        let (lam, gam, mu) = (2.0, 3.0, 1.7);
        let mut q = p;
        q.total_mass *= mu;
        q.leg_stiffness *= mu * gam / lam;
        q.rest_length_max *= lam;
        q.hip_width *= lam;
        q.torso_offset *= lam;
        q.leg_mass_offset *= lam;
        q.gravity *= gam;
        let a = DimensionlessPoint::new(&p, omega_s).unwrap();
        let b = DimensionlessPoint::new(&q, omega_s * sqrt(gam / lam)).unwrap();
        assert_relative_eq!(a.k_hat, b.k_hat, epsilon = 1e-12);
        assert_relative_eq!(a.omega_s_hat, b.omega_s_hat, epsilon = 1e-12);
    }

    #[test]
    fn ols_recovers_collinear_points() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 0.5).collect();
        let fit = ols_fit(&xs, &ys).unwrap();
        assert_relative_eq!(fit.slope, 3.0, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, -0.5, epsilon = 1e-12);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        assert!(fit.residual_std < 1e-12);
        let (lo, hi) = fit.prediction_interval_95(2.5);
        assert_relative_eq!(lo, hi, epsilon = 1e-9);
    }

    #[test]
    fn ols_symmetric_noise_cancels() {
        let xs = [0.0, 1.0, 2.0, 2.0, 4.0];
        let ys = [1.0, 3.0, 5.0 + 0.3, 5.0 - 0.3, 9.0];
        let fit = ols_fit(&xs, &ys).unwrap();
        assert_relative_eq!(fit.slope, 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 1.0, epsilon = 1e-12);
        assert!(fit.r_squared < 1.0 && fit.r_squared > 0.99);
    }

    #[test]
    fn ols_rejects_degenerate_input() {
        assert_eq!(ols_fit(&[1.0, 2.0], &[1.0, 2.0]), Err(FitError::TooFewPoints));
        assert_eq!(
            ols_fit(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(FitError::DegenerateX)
        );
    }

    #[test]
    fn student_t_critical_values() {
        assert_relative_eq!(student_t_975(1), 12.70620, epsilon = 1e-4);
        assert_relative_eq!(student_t_975(10), 2.228139, epsilon = 1e-5);
        assert_relative_eq!(student_t_975(30), 2.042272, epsilon = 1e-5);
        assert_relative_eq!(student_t_975(1000), 1.962339, epsilon = 1e-5);
    }

    #[test]
    fn prediction_interval_covers_new_points() {
        // synthetic linear data with known gaussian noise; the empirical
        // coverage of the 95% band over many trials must be close to 95%
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut gauss = |rng: &mut rand_chacha::ChaCha8Rng| {
            let (u1, u2): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
            sqrt(-2.0 * log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
        };
        let sigma = 0.4;
        let mut covered = 0;
        for _ in 0..1000 {
            let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
            let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0 + sigma * gauss(&mut rng)).collect();
            let fit = ols_fit(&xs, &ys).unwrap();
            let x_new: f64 = rng.gen_range(0.0..4.75);
            let y_new = 2.0 * x_new + 1.0 + sigma * gauss(&mut rng);
            let (lo, hi) = fit.prediction_interval_95(x_new);
            if (lo..=hi).contains(&y_new) {
                covered += 1;
            }
        }
        let coverage = covered as f64 / 1000.0;
        assert!((0.90..=0.99).contains(&coverage), "coverage {coverage}");
    }

    #[test]
    fn model_draws_are_seed_deterministic() {
        let ranges = ParamRanges::default();
        let a = montecarlo_models(&ranges, 10, 7);
        let b = montecarlo_models(&ranges, 10, 7);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.total_mass, y.total_mass);
            assert_eq!(x.leg_stiffness, y.leg_stiffness);
            assert_eq!(x.rest_length_max, y.rest_length_max);
            assert_eq!(x.hip_width, y.hip_width);
        }
    }
}
