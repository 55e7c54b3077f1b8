//! Periodic-orbit identification on the left-touchdown Poincare section.
//!
//! The section is the post-reset double-support state right after the
//! left leg lands. Because the forcing is time-periodic the phase clock
//! cannot be eliminated by the event condition, so a section point is
//! the vector [q; q_dot; tau] with tau the left-leg clock at the
//! crossing, dimension 2 n + 1.
//!
//! Fixed points of the stride-to-stride return map are found by
//! derivative-free Nelder-Mead minimization of the squared scaled
//! residual ||P(x) - x||^2; no sensitivity information is required, so
//! the hybrid event structure poses no difficulty.

use alloc::boxed::Box;
use alloc::vec::Vec;
use nalgebra::DVector;

use crate::dynamics::{BipedSystem, EventKind, HybridState, Phase};
use crate::params::ModelKind;
use crate::profile::LegIndex;
use crate::sim::{integrate_until_event, IntegratorConfig, SimError};

#[derive(Debug, Clone, PartialEq)]
pub enum MapError {
    /// Center of mass dropped below the fall threshold.
    Fell,
    /// A loaded leg unloaded completely; the model would leave the ground.
    Flight,
    /// No section crossing within the time horizon.
    NoCrossing,
    Sim(SimError),
}

impl From<SimError> for MapError {
    fn from(e: SimError) -> MapError {
        MapError::Sim(e)
    }
}

impl From<crate::dynamics::DynError> for MapError {
    fn from(e: crate::dynamics::DynError) -> MapError {
        MapError::Sim(SimError::Dynamics(e))
    }
}

impl core::fmt::Display for MapError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MapError::Fell => write!(f, "fell"),
            MapError::Flight => write!(f, "flight phase"),
            MapError::NoCrossing => write!(f, "no section crossing within horizon"),
            MapError::Sim(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum OrbitError {
    Map(MapError),
    /// Simplex exhausted its iteration budget; carries the best iterate.
    NonConvergence(Box<OrbitResult>),
    BadSection(&'static str),
}

impl core::fmt::Display for OrbitError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            OrbitError::Map(e) => write!(f, "map evaluation failed: {e}"),
            OrbitError::NonConvergence(best) => {
                write!(f, "no convergence; best residual {:.3e}", best.residual)
            }
            OrbitError::BadSection(what) => write!(f, "bad section state: {what}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrbitResult {
    /// Section vector [q; q_dot; tau] of the periodic orbit.
    pub fixed_point: DVector<f64>,
    /// Scaled norm of P(x*) - x*.
    pub residual: f64,
    /// Half-stride mirror relation holds within 1e-6 (scaled).
    pub symmetric: bool,
    /// A flight phase occurred on the orbit (always false for an accepted
    /// orbit: unloading aborts the return map).
    pub has_flight: bool,
    pub stride_time: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Section vector length: coordinates, velocities, clock.
pub fn section_dim(sys: &BipedSystem) -> usize {
    2 * sys.dof() + 1
}

/// Per-component scales used for the search objective and convergence
/// metrics: l0 for lengths, 1 rad for angles, omega_p * l0 for length
/// rates, omega_p for angle rates, the stride period for the clock.
pub fn section_scales(sys: &BipedSystem) -> DVector<f64> {
    let n = sys.dof();
    let l0 = sys.params.rest_length_max;
    let wp = sys.derived.pendulum_frequency;
    let mut s = DVector::from_element(2 * n + 1, 1.0);
    let lengths: &[usize] = match sys.params.kind {
        ModelKind::Extended => &[0, 3],
        _ => &[0],
    };
    for i in 0..n {
        let is_len = lengths.contains(&i);
        s[i] = if is_len { l0 } else { 1.0 };
        s[n + i] = if is_len { wp * l0 } else { wp };
    }
    s[2 * n] = sys.profile.stride_time;
    s
}

/// Reconstruct the full hybrid state from a section vector. The chart is
/// anchored at the trailing (right) foot at ground x = 0.
pub fn section_to_state(sys: &BipedSystem, x: &DVector<f64>) -> Result<HybridState, OrbitError> {
    let n = sys.dof();
    if x.len() != 2 * n + 1 {
        return Err(OrbitError::BadSection("wrong section dimension"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(OrbitError::BadSection("non-finite component"));
    }
    let mut st = HybridState {
        q: x.rows(0, n).into_owned(),
        q_dot: x.rows(n, n).into_owned(),
        phase: Phase::DoubleSupport { trailing: LegIndex::Right },
        t: x[2 * n],
        foot_anchor: [None, Some(0.0)],
    };
    let lead_x = sys.ds_leading_foot_x(&st).map_err(|_| OrbitError::BadSection("geometry"))?;
    st.set_anchor(LegIndex::Left, Some(lead_x));
    Ok(st)
}

/// Project a double-support state (trailing right) onto the section
/// vector.
pub fn state_to_section(sys: &BipedSystem, state: &HybridState) -> Result<DVector<f64>, OrbitError> {
    match state.phase {
        Phase::DoubleSupport { trailing: LegIndex::Right } => {}
        _ => return Err(OrbitError::BadSection("not on the left-touchdown section")),
    }
    let n = sys.dof();
    let mut x = DVector::zeros(2 * n + 1);
    x.rows_mut(0, n).copy_from(&state.q);
    x.rows_mut(n, n).copy_from(&state.q_dot);
    x[2 * n] = sys.profile.leg_clock(state.t, LegIndex::Left);
    Ok(x)
}

/// Integrate from `start`, chaining phase resets, until the post-reset
/// state of the first touchdown of `landing`.
pub fn advance_to_landing(
    cfg: &IntegratorConfig,
    sys: &BipedSystem,
    start: &HybridState,
    landing: LegIndex,
) -> Result<HybridState, MapError> {
    advance_observed(cfg, sys, start, landing, &mut |_| {})
}

fn advance_observed(
    cfg: &IntegratorConfig,
    sys: &BipedSystem,
    start: &HybridState,
    landing: LegIndex,
    observer: &mut dyn FnMut(&HybridState),
) -> Result<HybridState, MapError> {
    let horizon = start.t + 2.5 * sys.profile.stride_time;
    let mut state = start.clone();
    let mut transitions = 0usize;
    loop {
        let (st, ev) = integrate_until_event(cfg, sys, &state, horizon, observer)?;
        let record = match ev {
            None => return Err(MapError::NoCrossing),
            Some(r) => r,
        };
        match record.kind {
            EventKind::Fall => return Err(MapError::Fell),
            EventKind::Flight => return Err(MapError::Flight),
            EventKind::Touchdown => {
                let landed = match st.phase {
                    Phase::SingleSupport { stance } => stance.other(),
                    _ => return Err(MapError::Sim(SimError::Dynamics(
                        crate::dynamics::DynError::InvalidState("touchdown outside single support"),
                    ))),
                };
                let next = sys.reset_map(&st, record.kind)?;
                if landed == landing {
                    return Ok(next);
                }
                state = next;
            }
            EventKind::Liftoff => {
                state = sys.reset_map(&st, record.kind)?;
            }
        }
        transitions += 1;
        if transitions > 2 * cfg.max_events_per_stride + 4 {
            return Err(MapError::Sim(SimError::EventStorm(state.t)));
        }
    }
}

/// One application of the stride-to-stride return map.
pub fn poincare_map(
    cfg: &IntegratorConfig,
    sys: &BipedSystem,
    x: &DVector<f64>,
) -> Result<DVector<f64>, MapError> {
    let start = section_to_state(sys, x).map_err(|_| MapError::NoCrossing)?;
    let end = advance_to_landing(cfg, sys, &start, LegIndex::Left)?;
    state_to_section(sys, &end).map_err(|_| MapError::NoCrossing)
}

/// Scaled residual P(x) - x with the clock difference wrapped onto
/// [-T/2, T/2).
fn scaled_residual(sys: &BipedSystem, scales: &DVector<f64>, x: &DVector<f64>, px: &DVector<f64>) -> DVector<f64> {
    let mut r = px - x;
    let last = r.len() - 1;
    let t_len = sys.profile.stride_time;
    r[last] = wrap_half(r[last], t_len);
    for i in 0..r.len() {
        r[i] /= scales[i];
    }
    r
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

pub struct NelderMeadResult {
    pub x: DVector<f64>,
    pub fval: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Standard Nelder-Mead simplex minimization (reflection 1, expansion 2,
/// contraction 1/2, shrink 1/2). Converged when the simplex diameter in
/// the search coordinates falls below `diam_tol` or `accept` approves the
/// best vertex.
pub fn nelder_mead(
    f: &mut dyn FnMut(&DVector<f64>) -> f64,
    x0: &DVector<f64>,
    step: f64,
    max_iter: usize,
    diam_tol: f64,
    accept: &mut dyn FnMut(&DVector<f64>, f64) -> bool,
) -> NelderMeadResult {
    let n = x0.len();
    let mut verts: Vec<DVector<f64>> = Vec::with_capacity(n + 1);
    verts.push(x0.clone());
    for i in 0..n {
        let mut v = x0.clone();
        v[i] += step;
        verts.push(v);
    }
    let mut fvals: Vec<f64> = verts.iter().map(|v| f(v)).collect();

    let mut iters = 0usize;
    let mut converged = false;
    while iters < max_iter {
        iters += 1;
        // order best..worst
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap_or(core::cmp::Ordering::Equal));
        let reordered: Vec<DVector<f64>> = idx.iter().map(|&i| verts[i].clone()).collect();
        let reordered_f: Vec<f64> = idx.iter().map(|&i| fvals[i]).collect();
        verts = reordered;
        fvals = reordered_f;

        let diam = verts[1..]
            .iter()
            .map(|v| (v - &verts[0]).amax())
            .fold(0.0_f64, f64::max);
        if accept(&verts[0], fvals[0]) || diam < diam_tol {
            converged = true;
            break;
        }

        let mut centroid = DVector::zeros(n);
        for v in &verts[..n] {
            centroid += v;
        }
        centroid /= n as f64;

        let worst = verts[n].clone();
        let reflect = &centroid * 2.0 - &worst;
        let f_r = f(&reflect);
        if f_r < fvals[0] {
            let expand = &centroid * 3.0 - &worst * 2.0;
            let f_e = f(&expand);
            if f_e < f_r {
                verts[n] = expand;
                fvals[n] = f_e;
            } else {
                verts[n] = reflect;
                fvals[n] = f_r;
            }
        } else if f_r < fvals[n - 1] {
            verts[n] = reflect;
            fvals[n] = f_r;
        } else {
            let (point, f_ref) = if f_r < fvals[n] { (reflect.clone(), f_r) } else { (worst.clone(), fvals[n]) };
            let contract = (&centroid + &point) * 0.5;
            let f_c = f(&contract);
            if f_c < f_ref {
                verts[n] = contract;
                fvals[n] = f_c;
            } else {
                // shrink toward the best vertex
                for i in 1..=n {
                    verts[i] = (&verts[i] + &verts[0]) * 0.5;
                    fvals[i] = f(&verts[i]);
                }
            }
        }
    }
    NelderMeadResult {
        x: verts[0].clone(),
        fval: fvals[0],
        iterations: iters,
        converged,
    }
}

/// Accepted-orbit thresholds.
pub const RESIDUAL_TOL: f64 = 1e-8;
pub const SIMPLEX_DIAM_TOL: f64 = 1e-10;
pub const SYMMETRY_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 2000;

/// Search for a fixed point of the return map near `x_guess`.
pub fn find_fixed_point(
    cfg: &IntegratorConfig,
    sys: &BipedSystem,
    x_guess: &DVector<f64>,
) -> Result<OrbitResult, OrbitError> {
    let scales = section_scales(sys);
    let horizon_t = 2.5 * sys.profile.stride_time;

    let to_scaled = |x: &DVector<f64>| {
        DVector::from_iterator(x.len(), x.iter().zip(scales.iter()).map(|(v, s)| v / s))
    };
    let from_scaled = |z: &DVector<f64>| {
        DVector::from_iterator(z.len(), z.iter().zip(scales.iter()).map(|(v, s)| v * s))
    };

    let mut objective = |z: &DVector<f64>| -> f64 {
        let x = from_scaled(z);
        match poincare_map(cfg, sys, &x) {
            Ok(px) => scaled_residual(sys, &scales, &x, &px).norm_squared(),
            // failed maps are ranked by how long the trajectory survived
            // so the simplex can climb back toward walkable states
            Err(MapError::Fell) | Err(MapError::Flight) => {
                let survived = section_to_state(sys, &x)
                    .ok()
                    .and_then(|st| last_time_before_failure(cfg, sys, &st))
                    .unwrap_or(0.0);
                1e3 + 10.0 * (1.0 - (survived / horizon_t).min(1.0))
            }
            Err(_) => 1e4,
        }
    };

    let z0 = to_scaled(x_guess);
    // bail out early when every vertex still ends in a fall after many
    // iterations: the simplex has nothing to climb and will not recover
    let mut checks = 0usize;
    let mut accept = |_z: &DVector<f64>, fv: f64| {
        checks += 1;
        libm::sqrt(fv.max(0.0)) < 0.1 * RESIDUAL_TOL || (checks > 200 && fv >= 999.0)
    };
    let nm = nelder_mead(&mut objective, &z0, 1e-2, DEFAULT_MAX_ITER, SIMPLEX_DIAM_TOL, &mut accept);

    let x_best = from_scaled(&nm.x);
    let residual = libm::sqrt(nm.fval.max(0.0));
    let converged = residual < RESIDUAL_TOL;
    let symmetric = converged && check_symmetry(cfg, sys, &scales, &x_best);
    let result = OrbitResult {
        fixed_point: x_best,
        residual,
        symmetric,
        has_flight: false,
        stride_time: sys.profile.stride_time,
        iterations: nm.iterations,
        converged,
    };
    if converged {
        Ok(result)
    } else {
        Err(OrbitError::NonConvergence(Box::new(result)))
    }
}

/// Fixed-point iteration of the return map. Converges precisely when the
/// orbit is strongly attracting, which is where the simplex search tends
/// to stall (the residual landscape is flat far from the fixed point but
/// the map itself contracts fast); used as a fallback after it.
pub fn iterate_fixed_point(
    cfg: &IntegratorConfig,
    sys: &BipedSystem,
    x_guess: &DVector<f64>,
    max_iter: usize,
) -> Result<OrbitResult, OrbitError> {
    let scales = section_scales(sys);
    let mut x = x_guess.clone();
    let mut residual = f64::INFINITY;
    let fail = |x: DVector<f64>, residual: f64, i: usize| {
        OrbitError::NonConvergence(Box::new(OrbitResult {
            fixed_point: x,
            residual,
            symmetric: false,
            has_flight: false,
            stride_time: sys.profile.stride_time,
            iterations: i,
            converged: false,
        }))
    };
    for i in 0..max_iter {
        let px = match poincare_map(cfg, sys, &x) {
            Ok(px) => px,
            Err(_) => return Err(fail(x, residual, i)),
        };
        residual = scaled_residual(sys, &scales, &x, &px).norm();
        x = px;
        if residual < RESIDUAL_TOL {
            let symmetric = check_symmetry(cfg, sys, &scales, &x);
            return Ok(OrbitResult {
                fixed_point: x,
                residual,
                symmetric,
                has_flight: false,
                stride_time: sys.profile.stride_time,
                iterations: i + 1,
                converged: true,
            });
        }
    }
    Err(fail(x, residual, max_iter))
}

/// Survival time of a trajectory that is known to fail; used only to
/// shape the search penalty.
fn last_time_before_failure(cfg: &IntegratorConfig, sys: &BipedSystem, start: &HybridState) -> Option<f64> {
    let mut last = start.t;
    let horizon = start.t + 2.5 * sys.profile.stride_time;
    let mut state = start.clone();
    for _ in 0..(2 * cfg.max_events_per_stride + 4) {
        let res = integrate_until_event(cfg, sys, &state, horizon, &mut |s| last = s.t);
        match res {
            Ok((st, Some(rec))) => match rec.kind {
                EventKind::Touchdown | EventKind::Liftoff => match sys.reset_map(&st, rec.kind) {
                    Ok(next) => state = next,
                    Err(_) => break,
                },
                _ => break,
            },
            _ => break,
        }
    }
    Some(last - start.t)
}

/// Symmetric-gait check: the post-touchdown state half a stride later
/// (right leg landing) must be the mirror image of the section point.
fn check_symmetry(cfg: &IntegratorConfig, sys: &BipedSystem, scales: &DVector<f64>, x: &DVector<f64>) -> bool {
    let start = match section_to_state(sys, x) {
        Ok(s) => s,
        Err(_) => return false,
    };
    let at_right = match advance_to_landing(cfg, sys, &start, LegIndex::Right) {
        Ok(s) => s,
        Err(_) => return false,
    };
    let mirrored = sys.mirrored_state(&at_right);
    let xm = match state_to_section(sys, &mirrored) {
        Ok(v) => v,
        Err(_) => return false,
    };
    let r = scaled_residual(sys, scales, x, &xm);
    r.amax() < SYMMETRY_TOL
}

/// Cold-start section guess: static spring deflection, both legs near
/// vertical, zero velocities, taken at the clock where the landing leg's
/// neutral length passes through the deflected length (so the touchdown
/// geometry closes with a small lean).
pub fn default_guess(sys: &BipedSystem) -> DVector<f64> {
    let p = &sys.params;
    let profile = &sys.profile;
    let l_eq = sys.derived.effective_rest_length;
    let swing = profile.swing_fraction * profile.stride_time;

    // clock in the extension half of the swing window where l_n = l_eq
    let target = l_eq.max(p.rest_length_max - profile.retraction_depth + 1e-9);
    let (mut lo, mut hi) = (0.5 * swing, swing);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let (ln, _) = profile.neutral_length(mid, LegIndex::Left);
        if ln < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    let (ln, _) = profile.neutral_length(tau, LegIndex::Left);

    let n = sys.dof();
    let mut st = HybridState {
        q: DVector::zeros(n),
        q_dot: DVector::zeros(n),
        phase: Phase::SingleSupport { stance: LegIndex::Right },
        t: tau,
        foot_anchor: [None, Some(0.0)],
    };
    match p.kind {
        ModelKind::FixedHip => {
            // guard zero: (l - l_n) cos th + w sin th = 0
            st.q[0] = l_eq;
            st.q[1] = libm::atan((ln - l_eq) / p.hip_width);
        }
        ModelKind::FixedAnkle => {
            // guard zero: l + w sin phi - l_n = 0
            st.q[0] = l_eq;
            st.q[1] = libm::asin(((ln - l_eq) / p.hip_width).clamp(-1.0, 1.0));
        }
        ModelKind::Extended => {
            // both legs vertical and equally compressed puts the swing
            // foot exactly on the ground
            st.q[0] = l_eq;
            st.q[3] = l_eq;
        }
    }
    let ds = sys
        .reset_map(&st, EventKind::Touchdown)
        .expect("guess touchdown reset");
    state_to_section(sys, &ds).expect("guess is on the section")
}
