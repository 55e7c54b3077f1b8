//! Linearized return-map stability analysis and boundary searches: the
//! minimum stabilizing stride frequency and the minimum hip width.
//!
//! The return map is differentiated by central finite differences in
//! scaled section coordinates; the reported Jacobian is the scaled one
//! (a diagonal similarity of the physical Jacobian, so the spectrum is
//! unchanged). A gait is accepted as feasible only when the orbit search
//! converges, the orbit is symmetric, no flight phase occurs, and the
//! spectral radius is strictly below one.

use alloc::boxed::Box;
use alloc::vec::Vec;
use nalgebra::{Complex, DMatrix, DVector};

use crate::dynamics::BipedSystem;
use crate::linalg;
use crate::orbit::{
    self, find_fixed_point, poincare_map, section_scales, OrbitError, OrbitResult,
};
use crate::sim::IntegratorConfig;

/// Default finite-difference step in scaled section units.
pub const DEFAULT_PERTURBATION: f64 = 1e-6;
/// Default frequency-boundary tolerance [rad/s].
pub const DEFAULT_FREQ_TOL: f64 = 0.01;
/// Default width-boundary tolerance [m].
pub const DEFAULT_WIDTH_TOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// Return-map Jacobian in scaled section coordinates.
    pub jacobian: DMatrix<f64>,
    pub eigenvalues: Vec<Complex<f64>>,
    pub spectral_radius: f64,
    /// Strictly contractive: spectral radius < 1.
    pub stable: bool,
    /// Scaled step actually used (after any retries).
    pub perturbation_size: f64,
}

#[derive(Debug, Clone)]
pub enum StabilityError {
    /// Map evaluation kept failing even after shrinking the step.
    PerturbationFailed,
    /// Eigenvalue iteration did not converge.
    EigenFailure,
    Orbit(OrbitError),
    /// No stable frequency found up to the upper end of the range.
    NoStableFrequencyInRange,
    /// Both ends of the width range classify the same way.
    BoundaryOutsideRange,
}

impl core::fmt::Display for StabilityError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            StabilityError::PerturbationFailed => write!(f, "perturbed map evaluation failed"),
            StabilityError::EigenFailure => write!(f, "eigenvalue computation failed"),
            StabilityError::Orbit(e) => write!(f, "{e}"),
            StabilityError::NoStableFrequencyInRange => {
                write!(f, "no stable stride frequency in the search range")
            }
            StabilityError::BoundaryOutsideRange => {
                write!(f, "stability boundary not bracketed by the width range")
            }
        }
    }
}

/// Central-difference Jacobian of a generic map in scaled coordinates.
/// `f` returns None when the evaluation fails (e.g. the perturbed state
/// falls); the whole linearization is then retried with a ten times
/// smaller step, twice, before giving up.
pub fn linearize_map(
    f: &mut dyn FnMut(&DVector<f64>) -> Option<DVector<f64>>,
    x: &DVector<f64>,
    scales: &DVector<f64>,
    h_scaled: f64,
    wrap_component: Option<(usize, f64)>,
) -> Result<(DMatrix<f64>, f64), StabilityError> {
    let n = x.len();
    let mut h = h_scaled;
    'retry: for _ in 0..3 {
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            let dx = h * scales[i];
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += dx;
            xm[i] -= dx;
            let (fp, fm) = match (f(&xp), f(&xm)) {
                (Some(a), Some(b)) if a.iter().chain(b.iter()).all(|v| v.is_finite()) => (a, b),
                _ => {
                    h /= 10.0;
                    continue 'retry;
                }
            };
            for r in 0..n {
                let mut d = fp[r] - fm[r];
                if let Some((wc, period)) = wrap_component {
                    if r == wc {
                        d = wrap_half(d, period);
                    }
                }
                jac[(r, i)] = (d / scales[r]) / (2.0 * dx / scales[i]);
            }
        }
        return Ok((jac, h));
    }
    Err(StabilityError::PerturbationFailed)
}

fn wrap_half(d: f64, period: f64) -> f64 {
    let mut d = d % period;
    if d > 0.5 * period {
        d -= period;
    } else if d < -0.5 * period {
        d += period;
    }
    d
}

/// Spectrum of a real matrix packaged as a report.
pub fn report_from_jacobian(jac: DMatrix<f64>, h: f64) -> Result<StabilityReport, StabilityError> {
    let eigs = linalg::eigenvalues(&jac).ok_or(StabilityError::EigenFailure)?;
    let radius = eigs.iter().map(|e| libm::sqrt(e.norm_sqr())).fold(0.0_f64, f64::max);
    Ok(StabilityReport {
        jacobian: jac,
        eigenvalues: eigs,
        spectral_radius: radius,
        stable: radius < 1.0,
        perturbation_size: h,
    })
}

/// Linearize the stride-to-stride return map around a converged orbit.
pub fn linearize_poincare(
    cfg: &IntegratorConfig,
    sys: &BipedSystem,
    orbit: &OrbitResult,
    h_scaled: f64,
) -> Result<StabilityReport, StabilityError> {
    let scales = section_scales(sys);
    let mut f = |x: &DVector<f64>| poincare_map(cfg, sys, x).ok();
    let clock = orbit.fixed_point.len() - 1;
    let (jac, h) = linearize_map(
        &mut f,
        &orbit.fixed_point,
        &scales,
        h_scaled,
        Some((clock, sys.profile.stride_time)),
    )?;
    report_from_jacobian(jac, h)
}

/// Outcome of classifying one (system, frequency) sample.
#[derive(Debug, Clone)]
pub enum Classified {
    Feasible(Box<(OrbitResult, StabilityReport)>),
    /// No converged orbit, asymmetric orbit, flight, or unstable.
    Infeasible,
}

/// Full feasibility pipeline for one stride frequency: orbit search
/// (warm start optional), symmetry, flight, spectral radius.
///
/// `warm` is a section point in fraction form: the clock component holds
/// the fraction of the stride instead of seconds, so the same warm start
/// transfers between frequencies.
pub fn classify_frequency(
    cfg: &IntegratorConfig,
    base: &BipedSystem,
    omega_s: f64,
    warm: Option<&DVector<f64>>,
) -> Classified {
    let sys = base.with_frequency(omega_s);
    let guess = match warm {
        Some(x) => from_warm_fraction(x, &sys),
        None => orbit::default_guess(&sys),
    };
    // simplex search first (finds orbits regardless of their stability),
    // then plain map iteration, which succeeds exactly where the simplex
    // stalls: strongly contracting orbits far from the guess
    let orbit = match find_fixed_point(cfg, &sys, &guess) {
        Ok(o) => o,
        Err(_) => match find_fixed_point(cfg, &sys, &orbit::default_guess(&sys)) {
            Ok(o) => o,
            Err(_) => {
                let iterated = orbit::iterate_fixed_point(cfg, &sys, &guess, 120).or_else(|_| {
                    orbit::iterate_fixed_point(cfg, &sys, &orbit::default_guess(&sys), 120)
                });
                match iterated {
                    Ok(o) => o,
                    Err(_) => return Classified::Infeasible,
                }
            }
        },
    };
    if !orbit.symmetric || orbit.has_flight {
        return Classified::Infeasible;
    }
    match linearize_poincare(cfg, &sys, &orbit, DEFAULT_PERTURBATION) {
        Ok(report) if report.stable => Classified::Feasible(Box::new((orbit, report))),
        _ => Classified::Infeasible,
    }
}

/// Section point with the clock stored as a fraction of the stride.
pub fn to_warm_fraction(x: &DVector<f64>, sys: &BipedSystem) -> DVector<f64> {
    let mut y = x.clone();
    let last = y.len() - 1;
    y[last] = x[last] / sys.profile.stride_time;
    y
}

fn from_warm_fraction(x: &DVector<f64>, sys: &BipedSystem) -> DVector<f64> {
    let mut y = x.clone();
    let last = y.len() - 1;
    y[last] = x[last] * sys.profile.stride_time;
    y
}

#[derive(Debug, Clone)]
pub struct MinFreqResult {
    pub omega_s_min: f64,
    /// (highest infeasible sample, lowest feasible sample); width <= tol.
    pub bracket: (f64, f64),
    pub orbit_at_min: OrbitResult,
    pub report_at_min: StabilityReport,
    pub symmetric: bool,
    pub no_flight: bool,
}

/// Lowest stride frequency in [omega_lo, omega_hi] with a stable,
/// symmetric, flight-free orbit, to within `tol`.
///
/// Coarse upward scan first; once a feasible sample is found the
/// boundary below it is refined by bisection with continuation warm
/// starts from the feasible side.
pub fn min_stride_frequency(
    cfg: &IntegratorConfig,
    base: &BipedSystem,
    omega_lo: f64,
    omega_hi: f64,
    tol: f64,
) -> Result<MinFreqResult, StabilityError> {
    assert!(omega_lo < omega_hi && tol > 0.0);
    let coarse = ((omega_hi - omega_lo) / 24.0).max(2.0 * tol);

    let mut feasible: Option<(f64, Box<(OrbitResult, StabilityReport)>)> = None;
    let mut warm: Option<DVector<f64>> = None;
    let mut omega = omega_lo;
    while omega <= omega_hi + 1e-12 {
        match classify_frequency(cfg, base, omega, warm.as_ref()) {
            Classified::Feasible(found) => {
                warm = Some(to_warm_fraction(&found.0.fixed_point, &base.with_frequency(omega)));
                feasible = Some((omega, found));
                break;
            }
            Classified::Infeasible => {}
        }
        omega += coarse;
    }
    let (mut hi, mut best) = feasible.ok_or(StabilityError::NoStableFrequencyInRange)?;

    // the upward scan ran cold until its first success; frequencies it
    // rejected may hold orbits that only a warm start reaches, so walk
    // back down with continuation before trusting the bracket
    let mut lo = omega_lo; // highest known-infeasible frequency
    loop {
        let next = hi - coarse;
        if next <= omega_lo + 1e-12 {
            match classify_frequency(cfg, base, omega_lo, warm.as_ref()) {
                Classified::Feasible(found) => {
                    hi = omega_lo;
                    best = found;
                }
                Classified::Infeasible => {}
            }
            break;
        }
        match classify_frequency(cfg, base, next, warm.as_ref()) {
            Classified::Feasible(found) => {
                warm = Some(to_warm_fraction(&found.0.fixed_point, &base.with_frequency(next)));
                hi = next;
                best = found;
            }
            Classified::Infeasible => {
                lo = next;
                break;
            }
        }
    }

    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match classify_frequency(cfg, base, mid, warm.as_ref()) {
            Classified::Feasible(found) => {
                warm = Some(to_warm_fraction(&found.0.fixed_point, &base.with_frequency(mid)));
                hi = mid;
                best = found;
            }
            Classified::Infeasible => lo = mid,
        }
    }

    let (orbit_at_min, report_at_min) = *best;
    Ok(MinFreqResult {
        omega_s_min: hi,
        bracket: (lo, hi),
        symmetric: orbit_at_min.symmetric,
        no_flight: !orbit_at_min.has_flight,
        orbit_at_min,
        report_at_min,
    })
}

/// Probe frequency window used when testing whether a hip width is
/// feasible: a multiple of the predicted minimum for that width.
pub fn probe_range(sys: &BipedSystem) -> (f64, f64) {
    let pred = sys.derived.natural_frequency + sys.derived.pendulum_frequency;
    (0.8 * pred, 3.0 * pred)
}

/// Smallest hip width in [w_lo, w_hi] for which some probe frequency
/// stabilizes the gait, to within `tol`.
pub fn min_hip_width(
    cfg: &IntegratorConfig,
    base: &BipedSystem,
    w_lo: f64,
    w_hi: f64,
    tol: f64,
) -> Result<f64, StabilityError> {
    assert!(w_lo < w_hi && tol > 0.0);
    let feasible = |w: f64| -> bool {
        let mut params = base.params;
        params.hip_width = w;
        let sys = match crate::dynamics::BipedSystem::new(params, base.profile, base.gains.clone()) {
            Ok(s) => s,
            Err(_) => return false,
        };
        let (p_lo, p_hi) = probe_range(&sys);
        min_stride_frequency(cfg, &sys, p_lo, p_hi, 10.0 * DEFAULT_FREQ_TOL).is_ok()
    };

    if feasible(w_lo) || !feasible(w_hi) {
        return Err(StabilityError::BoundaryOutsideRange);
    }
    let (mut lo, mut hi) = (w_lo, w_hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
