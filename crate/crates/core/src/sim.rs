//! Adaptive Dormand-Prince (RK45) integration of the hybrid system with
//! event localization, plus stride-level drivers.
//!
//! Guards are armed once they have been seen strictly positive and fire
//! on the first downward zero crossing afterwards; this lets a phase
//! start exactly on a guard zero (e.g. the touchdown guard is zero right
//! after liftoff) without retriggering. Crossings are localized by an
//! Illinois-type false-position iteration where each trial time is
//! reached by a single fifth-order step from the last accepted state, so
//! the event state carries full integration accuracy.

use alloc::vec::Vec;
use nalgebra::DVector;

use crate::dynamics::{BipedSystem, DynError, EventKind, HybridState, Phase};
use crate::profile::LegIndex;

#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// None = one fiftieth of the stride period.
    pub max_step: Option<f64>,
    /// Width of the time bracket around an accepted event [s].
    pub event_tol: f64,
    pub max_events_per_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> IntegratorConfig {
        IntegratorConfig {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: None,
            event_tol: 1e-10,
            max_events_per_stride: 8,
        }
    }
}

impl IntegratorConfig {
    fn max_step_for(&self, sys: &BipedSystem) -> f64 {
        self.max_step.unwrap_or(sys.profile.stride_time / 50.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    Dynamics(DynError),
    /// Step size collapsed below machine resolution at the given time.
    StepUnderflow(f64),
    /// More phase transitions than `max_events_per_stride` without
    /// completing a stride.
    EventStorm(f64),
}

impl From<DynError> for SimError {
    fn from(e: DynError) -> SimError {
        SimError::Dynamics(e)
    }
}

impl core::fmt::Display for SimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SimError::Dynamics(e) => write!(f, "dynamics error: {e}"),
            SimError::StepUnderflow(t) => write!(f, "step size underflow at t = {t}"),
            SimError::EventStorm(t) => write!(f, "too many events near t = {t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub kind: EventKind,
    pub t: f64,
}

/// Why a stride-level run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    CompletedStrides,
    TimeExpired,
    Fell,
    Flight,
}

#[derive(Debug, Clone)]
pub struct SimRun {
    /// Post-touchdown state at every left-leg touchdown (the Poincare
    /// section), in chronological order.
    pub section_states: Vec<HybridState>,
    pub events: Vec<EventRecord>,
    pub final_state: HybridState,
    pub termination: Termination,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn pack(state: &HybridState) -> DVector<f64> {
    let n = state.q.len();
    let mut y = DVector::zeros(2 * n);
    y.rows_mut(0, n).copy_from(&state.q);
    y.rows_mut(n, n).copy_from(&state.q_dot);
    y
}

fn unpack(template: &HybridState, y: &DVector<f64>, t: f64) -> HybridState {
    let n = template.q.len();
    let mut st = template.clone();
    st.q.copy_from(&y.rows(0, n));
    st.q_dot.copy_from(&y.rows(n, n));
    st.t = t;
    st
}

fn derivative(sys: &BipedSystem, template: &HybridState, t: f64, y: &DVector<f64>) -> Result<DVector<f64>, SimError> {
    let n = template.q.len();
    let st = unpack(template, y, t);
    let qdd = sys.vector_field(&st)?;
    let mut dy = DVector::zeros(2 * n);
    dy.rows_mut(0, n).copy_from(&y.rows(n, n));
    dy.rows_mut(n, n).copy_from(&qdd);
    Ok(dy)
}

/// One embedded step; returns the 5th-order solution and the error
/// estimate against the 4th-order one.
fn rk_step(
    sys: &BipedSystem,
    template: &HybridState,
    t: f64,
    y: &DVector<f64>,
    h: f64,
) -> Result<(DVector<f64>, DVector<f64>), SimError> {
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
    for i in 0..7 {
        let mut yi = y.clone();
        for (j, kj) in k.iter().enumerate() {
            if A[i][j] != 0.0 {
                yi += kj * (h * A[i][j]);
            }
        }
        k.push(derivative(sys, template, t + C[i] * h, &yi)?);
    }
    let mut y5 = y.clone();
    let mut err = DVector::zeros(y.len());
    for i in 0..7 {
        if B5[i] != 0.0 {
            y5 += &k[i] * (h * B5[i]);
        }
        let db = B5[i] - B4[i];
        if db != 0.0 {
            err += &k[i] * (h * db);
        }
    }
    Ok((y5, err))
}

fn error_norm(cfg: &IntegratorConfig, y0: &DVector<f64>, y1: &DVector<f64>, err: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..y0.len() {
        let scale = cfg.abs_tol + cfg.rel_tol * libm::fabs(y0[i]).max(libm::fabs(y1[i]));
        let r = err[i] / scale;
        acc += r * r;
    }
    libm::sqrt(acc / y0.len() as f64)
}

/// Guard value at `tau` reached by a single fifth-order step from (t0, y0).
fn guard_at(
    sys: &BipedSystem,
    template: &HybridState,
    t0: f64,
    y0: &DVector<f64>,
    tau: f64,
    guard_index: usize,
) -> Result<(f64, HybridState), SimError> {
    let st = if tau == t0 {
        unpack(template, y0, t0)
    } else {
        let (y, _) = rk_step(sys, template, t0, y0, tau - t0)?;
        unpack(template, &y, tau)
    };
    Ok((sys.guards(&st)[guard_index].1, st))
}

/// Localize a downward crossing of one guard inside (t0, t1] by the
/// Illinois variant of false position.
fn localize(
    cfg: &IntegratorConfig,
    sys: &BipedSystem,
    template: &HybridState,
    t0: f64,
    y0: &DVector<f64>,
    mut g_lo: f64,
    t1: f64,
    mut g_hi: f64,
    guard_index: usize,
) -> Result<(f64, HybridState), SimError> {
    let (mut lo, mut hi) = (t0, t1);
    let mut best = guard_at(sys, template, t0, y0, t1, guard_index)?.1;
    let mut best_t = t1;
    for _ in 0..120 {
        if hi - lo < cfg.event_tol {
            break;
        }
        let denom = g_lo - g_hi;
        let mut mid = if libm::fabs(denom) > 1e-300 {
            lo + (hi - lo) * g_lo / denom
        } else {
            0.5 * (lo + hi)
        };
        // keep strictly inside the bracket
        let margin = 0.05 * (hi - lo);
        mid = mid.max(lo + margin).min(hi - margin);
        let (g_mid, st) = guard_at(sys, template, t0, y0, mid, guard_index)?;
        if g_mid >= 0.0 {
            lo = mid;
            g_lo = g_mid;
            // Illinois trick: halve the stale side to force convergence
            g_hi *= 0.5;
        } else {
            hi = mid;
            g_hi = g_mid;
            g_lo *= 0.5;
            best = st;
            best_t = mid;
        }
    }
    // report the first state past the crossing
    if best_t > hi {
        let (_, st) = guard_at(sys, template, t0, y0, hi, guard_index)?;
        best = st;
    }
    Ok((best.t, best))
}

/// Integrate within the current phase until a guard fires or `t_end`.
/// `observer` sees every accepted step state.
pub fn integrate_until_event(
    cfg: &IntegratorConfig,
    sys: &BipedSystem,
    start: &HybridState,
    t_end: f64,
    observer: &mut dyn FnMut(&HybridState),
) -> Result<(HybridState, Option<EventRecord>), SimError> {
    let max_step = cfg.max_step_for(sys);
    let mut t = start.t;
    let mut y = pack(start);
    let template = start.clone();

    let mut guard_vals: Vec<f64> = sys.guards(start).iter().map(|g| g.1).collect();
    let mut armed: Vec<bool> = guard_vals.iter().map(|&v| v > 1e-9).collect();

    let mut h = max_step.min(t_end - t);
    if h <= 0.0 {
        return Ok((start.clone(), None));
    }

    loop {
        h = h.min(t_end - t).min(max_step);
        if h < 1e-14 * libm::fabs(t).max(1.0) {
            return Err(SimError::StepUnderflow(t));
        }
        let (y1, err) = rk_step(sys, &template, t, &y, h)?;
        let norm = error_norm(cfg, &y, &y1, &err);
        if norm > 1.0 {
            let shrink = (0.9 * libm::pow(norm, -0.2)).max(0.2);
            h *= shrink;
            continue;
        }

        let t1 = t + h;
        let st1 = unpack(&template, &y1, t1);
        let new_vals: Vec<f64> = sys.guards(&st1).iter().map(|g| g.1).collect();

        // earliest armed crossing inside this step wins
        let mut hit: Option<(f64, HybridState, usize)> = None;
        for i in 0..new_vals.len() {
            if armed[i] && guard_vals[i] >= 0.0 && new_vals[i] < 0.0 {
                let (te, ste) = localize(cfg, sys, &template, t, &y, guard_vals[i], t1, new_vals[i], i)?;
                if hit.as_ref().map_or(true, |(tb, _, _)| te < *tb) {
                    hit = Some((te, ste, i));
                }
            }
        }
        if let Some((te, ste, i)) = hit {
            observer(&ste);
            let kind = sys.guards(&ste)[i].0;
            return Ok((ste, Some(EventRecord { kind, t: te })));
        }

        for i in 0..new_vals.len() {
            if !armed[i] && new_vals[i] > 1e-9 {
                armed[i] = true;
            }
        }
        guard_vals = new_vals;
        t = t1;
        y = y1;
        observer(&unpack(&template, &y, t));
        if t >= t_end - 1e-14 * libm::fabs(t_end).max(1.0) {
            return Ok((unpack(&template, &y, t), None));
        }
        let grow = if norm <= 1e-30 { 5.0 } else { (0.9 * libm::pow(norm, -0.2)).min(5.0) };
        h *= grow;
    }
}

/// Run `n_strides` strides (left-leg touchdown to left-leg touchdown),
/// chaining phase transitions, recording section crossings.
pub fn simulate_strides(
    cfg: &IntegratorConfig,
    sys: &BipedSystem,
    state0: &HybridState,
    n_strides: usize,
    observer: &mut dyn FnMut(&HybridState),
) -> Result<SimRun, SimError> {
    let horizon = state0.t + (n_strides as f64 + 2.0) * sys.profile.stride_time;
    let mut state = state0.clone();
    let mut section_states = Vec::with_capacity(n_strides);
    let mut events = Vec::new();
    let mut events_since_section = 0usize;

    loop {
        let (st, ev) = integrate_until_event(cfg, sys, &state, horizon, observer)?;
        match ev {
            None => {
                return Ok(SimRun {
                    section_states,
                    events,
                    final_state: st,
                    termination: Termination::TimeExpired,
                });
            }
            Some(record) => {
                events.push(record);
                match record.kind {
                    EventKind::Fall => {
                        return Ok(SimRun {
                            section_states,
                            events,
                            final_state: st,
                            termination: Termination::Fell,
                        });
                    }
                    EventKind::Flight => {
                        let next = sys.reset_map(&st, record.kind)?;
                        return Ok(SimRun {
                            section_states,
                            events,
                            final_state: next,
                            termination: Termination::Flight,
                        });
                    }
                    EventKind::Touchdown => {
                        let landing_left =
                            matches!(st.phase, Phase::SingleSupport { stance: LegIndex::Right });
                        let next = sys.reset_map(&st, record.kind)?;
                        observer(&next);
                        if landing_left {
                            section_states.push(next.clone());
                            events_since_section = 0;
                            if section_states.len() >= n_strides {
                                return Ok(SimRun {
                                    section_states,
                                    events,
                                    final_state: next,
                                    termination: Termination::CompletedStrides,
                                });
                            }
                        } else {
                            events_since_section += 1;
                        }
                        state = next;
                    }
                    EventKind::Liftoff => {
                        let next = sys.reset_map(&st, record.kind)?;
                        observer(&next);
                        events_since_section += 1;
                        state = next;
                    }
                }
                if events_since_section > cfg.max_events_per_stride {
                    return Err(SimError::EventStorm(state.t));
                }
            }
        }
    }
}
