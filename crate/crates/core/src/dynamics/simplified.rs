//! Closed-form dynamics for the two 2-DoF massless-leg kinds.
//!
//! Single support is a 2x2 manipulator equation in q = [l, angle]. In
//! double support the contact geometry locks the angle (cos(angle) =
//! w / foot spacing), leaving a single translational DoF along the leg
//! axis; the chart keeps the [length, angle] layout with the angle frozen
//! so state vectors stay uniform across phases.

use nalgebra::{DVector, Vector2};

use crate::params::{Joint, ModelKind};
use crate::profile::LegIndex;

use super::{axis, axis_perp, pd_torque, BipedSystem, DynError, EventKind, HybridState, Phase};

/// Reference leg (chart owner), its side sign, and whether the angle is
/// locked.
fn chart(state: &HybridState) -> Result<(LegIndex, bool), DynError> {
    match state.phase {
        Phase::SingleSupport { stance } => Ok((stance, false)),
        Phase::DoubleSupport { trailing } => Ok((trailing, true)),
        Phase::Flight => Err(DynError::InvalidState("flight has no support chart")),
    }
}

/// Leading-minus-trailing leg length difference in double support, fixed
/// by the locked angle.
fn ds_length_offset(sys: &BipedSystem, trailing: LegIndex, angle: f64) -> f64 {
    let s = trailing.side_sign();
    let w = sys.params.hip_width;
    match sys.params.kind {
        ModelKind::FixedHip => -s * w * libm::tan(angle),
        ModelKind::FixedAnkle => -s * w * libm::sin(angle),
        ModelKind::Extended => unreachable!(),
    }
}

pub(super) fn leg_length_rate(sys: &BipedSystem, state: &HybridState, leg: LegIndex) -> (f64, f64) {
    match state.phase {
        Phase::SingleSupport { stance } if stance == leg => (state.q[0], state.q_dot[0]),
        Phase::SingleSupport { .. } | Phase::Flight => {
            // unloaded massless leg: tracks the neutral program exactly
            sys.profile.neutral_length(state.t, leg)
        }
        Phase::DoubleSupport { trailing } => {
            if leg == trailing {
                (state.q[0], state.q_dot[0])
            } else {
                let dl = ds_length_offset(sys, trailing, state.q[1]);
                (state.q[0] + dl, state.q_dot[0])
            }
        }
    }
}

pub(super) fn vector_field(sys: &BipedSystem, state: &HybridState) -> Result<DVector<f64>, DynError> {
    let p = &sys.params;
    let m = p.torso_mass();
    let g = p.gravity;
    let rho = p.half_width();
    let d = p.torso_offset;
    let it = p.torso_inertia();
    let angle = state.q[1];
    let (sin_a, cos_a) = (libm::sin(angle), libm::cos(angle));

    match state.phase {
        Phase::SingleSupport { stance } => {
            let s = stance.side_sign();
            let (l, l_dot) = (state.q[0], state.q_dot[0]);
            let a_dot = state.q_dot[1];
            let force = sys.leg_force(state, stance);

            let (m11, m12, m22, rhs0, mut rhs1) = match p.kind {
                ModelKind::FixedHip => {
                    let arm = l + d;
                    (
                        m,
                        -m * s * rho,
                        m * (arm * arm + rho * rho) + it,
                        force + m * arm * a_dot * a_dot - m * g * cos_a,
                        -2.0 * m * arm * l_dot * a_dot + m * g * (arm * sin_a + s * rho * cos_a),
                    )
                }
                ModelKind::FixedAnkle => (
                    m,
                    -m * (s * rho * cos_a + d * sin_a),
                    m * (rho * rho + d * d) + it,
                    force - m * a_dot * a_dot * (s * rho * sin_a - d * cos_a) - m * g,
                    m * g * (s * rho * cos_a + d * sin_a),
                ),
                ModelKind::Extended => unreachable!(),
            };

            for gains in sys.pd_torques(state.phase) {
                let acts = match (p.kind, gains.target_joint) {
                    (ModelKind::FixedHip, Joint::StanceAnkle) => true,
                    (ModelKind::FixedAnkle, Joint::StanceHip) => true,
                    _ => false,
                };
                if acts {
                    rhs1 += pd_torque(gains, angle, a_dot);
                }
            }

            let det = m11 * m22 - m12 * m12;
            if det.abs() < 1e-12 * m11.abs().max(1.0) {
                return Err(DynError::SingularMassMatrix);
            }
            Ok(DVector::from_column_slice(&[
                (rhs0 * m22 - rhs1 * m12) / det,
                (rhs1 * m11 - rhs0 * m12) / det,
            ]))
        }
        Phase::DoubleSupport { trailing } => {
            let f_tr = sys.leg_force(state, trailing);
            let f_ld = sys.leg_force(state, trailing.other());
            let g_term = match p.kind {
                ModelKind::FixedHip => g * cos_a,
                ModelKind::FixedAnkle => g,
                ModelKind::Extended => unreachable!(),
            };
            Ok(DVector::from_column_slice(&[(f_tr + f_ld) / m - g_term, 0.0]))
        }
        Phase::Flight => Err(DynError::InvalidState("flight is terminal")),
    }
}

pub(super) fn swing_foot_height(sys: &BipedSystem, state: &HybridState) -> f64 {
    let stance = match state.phase {
        Phase::SingleSupport { stance } => stance,
        _ => return f64::NAN,
    };
    let s = stance.side_sign();
    let w = sys.params.hip_width;
    let l = state.q[0];
    let angle = state.q[1];
    let (ln_sw, _) = sys.profile.neutral_length(state.t, stance.other());
    match sys.params.kind {
        ModelKind::FixedHip => (l - ln_sw) * libm::cos(angle) - s * w * libm::sin(angle),
        ModelKind::FixedAnkle => l - s * w * libm::sin(angle) - ln_sw,
        ModelKind::Extended => unreachable!(),
    }
}

pub(super) fn reset_map(sys: &BipedSystem, state: &HybridState, event: EventKind) -> Result<HybridState, DynError> {
    match (event, state.phase) {
        (EventKind::Touchdown, Phase::SingleSupport { stance }) => {
            let s = stance.side_sign();
            let rho = sys.params.half_width();
            let d = sys.params.torso_offset;
            let angle = state.q[1];
            let (sin_a, cos_a) = (libm::sin(angle), libm::cos(angle));
            // no axial impulse can pass through the massless landing leg,
            // so the momentum conjugate to the length coordinate carries
            // over while the angular rate is absorbed by the new contact
            let m12_over_m11 = match sys.params.kind {
                ModelKind::FixedHip => -s * rho,
                ModelKind::FixedAnkle => -(s * rho * cos_a + d * sin_a),
                ModelKind::Extended => unreachable!(),
            };
            let xi_dot = state.q_dot[0] + m12_over_m11 * state.q_dot[1];

            let mut next = state.clone();
            next.q_dot[0] = xi_dot;
            next.q_dot[1] = 0.0;
            next.phase = Phase::DoubleSupport { trailing: stance };
            // plant the new foot at its chart position
            if let Some(x_st) = state.anchor(stance) {
                let w = sys.params.hip_width;
                let (ln_sw, _) = sys.profile.neutral_length(state.t, stance.other());
                let x_sw = match sys.params.kind {
                    ModelKind::FixedHip => (state.q[0] - ln_sw) * sin_a + s * w * cos_a,
                    ModelKind::FixedAnkle => s * w * cos_a,
                    ModelKind::Extended => unreachable!(),
                };
                next.set_anchor(stance.other(), Some(x_st + x_sw));
            }
            Ok(next)
        }
        (EventKind::Liftoff, Phase::DoubleSupport { trailing }) => {
            let leading = trailing.other();
            let dl = ds_length_offset(sys, trailing, state.q[1]);
            let mut next = state.clone();
            next.q[0] = state.q[0] + dl;
            next.q_dot[0] = state.q_dot[0];
            next.q_dot[1] = 0.0;
            next.phase = Phase::SingleSupport { stance: leading };
            next.set_anchor(trailing, None);
            Ok(next)
        }
        _ => Err(DynError::InvalidState("reset event does not match phase")),
    }
}

/// Torso position relative to the reference foot, plus the reference side
/// sign; valid in both support phases.
fn torso_position(sys: &BipedSystem, state: &HybridState) -> Result<(Vector2<f64>, f64), DynError> {
    let (leg, _) = chart(state)?;
    let s = leg.side_sign();
    let rho = sys.params.half_width();
    let d = sys.params.torso_offset;
    let l = state.q[0];
    let angle = state.q[1];
    let up = axis(angle);
    let r = axis_perp(angle);
    let pos = match sys.params.kind {
        ModelKind::FixedHip => up * (l + d) + r * (s * rho),
        ModelKind::FixedAnkle => Vector2::new(0.0, l) + r * (s * rho) + up * d,
        ModelKind::Extended => unreachable!(),
    };
    Ok((pos, s))
}

fn torso_velocity(sys: &BipedSystem, state: &HybridState) -> Result<Vector2<f64>, DynError> {
    let (leg, _) = chart(state)?;
    let s = leg.side_sign();
    let rho = sys.params.half_width();
    let d = sys.params.torso_offset;
    let l = state.q[0];
    let angle = state.q[1];
    let (l_dot, a_dot) = (state.q_dot[0], state.q_dot[1]);
    let up = axis(angle);
    let r = axis_perp(angle);
    Ok(match sys.params.kind {
        ModelKind::FixedHip => up * l_dot + (r * (l + d) - up * (s * rho)) * a_dot,
        ModelKind::FixedAnkle => Vector2::new(0.0, l_dot) + (up * (-s * rho) + r * d) * a_dot,
        ModelKind::Extended => unreachable!(),
    })
}

pub(super) fn com(sys: &BipedSystem, state: &HybridState) -> [f64; 2] {
    let (pos, _) = match torso_position(sys, state) {
        Ok(v) => v,
        Err(_) => return [f64::NAN, f64::NAN],
    };
    let (leg, _) = chart(state).expect("torso_position succeeded");
    let x0 = state.anchor(leg).unwrap_or(0.0);
    [x0 + pos.x, pos.y]
}

pub(super) fn com_velocity(sys: &BipedSystem, state: &HybridState) -> [f64; 2] {
    match torso_velocity(sys, state) {
        Ok(v) => [v.x, v.y],
        Err(_) => [f64::NAN, f64::NAN],
    }
}

fn planted_legs(state: &HybridState) -> ([Option<LegIndex>; 2], usize) {
    match state.phase {
        Phase::SingleSupport { stance } => ([Some(stance), None], 1),
        Phase::DoubleSupport { trailing } => ([Some(trailing), Some(trailing.other())], 2),
        Phase::Flight => ([None, None], 0),
    }
}

pub(super) fn energy(sys: &BipedSystem, state: &HybridState) -> f64 {
    let p = &sys.params;
    let m = p.torso_mass();
    let v = torso_velocity(sys, state).expect("support phase");
    let (pos, _) = torso_position(sys, state).expect("support phase");
    let mut e = 0.5 * m * v.norm_squared() + 0.5 * p.torso_inertia() * state.q_dot[1] * state.q_dot[1]
        + m * p.gravity * pos.y;
    let (legs, n) = planted_legs(state);
    for leg in legs.iter().take(n).flatten() {
        let (l, _) = leg_length_rate(sys, state, *leg);
        let (ln, _) = sys.profile.neutral_length(state.t, *leg);
        e += 0.5 * p.leg_stiffness * (ln - l) * (ln - l);
    }
    e
}

pub(super) fn net_power(sys: &BipedSystem, state: &HybridState) -> f64 {
    let b = sys.derived.damping_coeff;
    let mut power = 0.0;
    let (legs, n) = planted_legs(state);
    for leg in legs.iter().take(n).flatten() {
        let (l, l_dot) = leg_length_rate(sys, state, *leg);
        let (ln, ln_dot) = sys.profile.neutral_length(state.t, *leg);
        let f = super::spring_force(&sys.params, &sys.derived, ln, ln_dot, l, l_dot);
        power += f * ln_dot - b * (ln_dot - l_dot) * (ln_dot - l_dot);
    }
    let angle = state.q[1];
    let a_dot = state.q_dot[1];
    for gains in sys.pd_torques(state.phase) {
        let acts = match (sys.params.kind, gains.target_joint) {
            (ModelKind::FixedHip, Joint::StanceAnkle) => true,
            (ModelKind::FixedAnkle, Joint::StanceHip) => true,
            _ => false,
        };
        if acts && matches!(state.phase, Phase::SingleSupport { .. }) {
            power += pd_torque(gains, angle, a_dot) * a_dot;
        }
    }
    power
}
