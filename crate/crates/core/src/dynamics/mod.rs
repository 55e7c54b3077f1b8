//! Hybrid equations of motion for the three frontal-plane models.
//!
//! Conventions used throughout (x lateral, y up, angles CCW):
//! - leg axis direction from foot to hip: a(psi) = (sin psi, cos psi),
//!   psi measured from vertical;
//! - pelvis left-to-right direction: r(phi) = (cos phi, -sin phi), with
//!   the pelvis normal a(phi); phi is the pelvis roll angle;
//! - `side_sign` s = +1 when the stance (or reference) leg is the left
//!   one, so the hip center sits at +s*rho along r from the stance hip.
//!
//! Charts per kind:
//! - FixedHip: q = [l_st, theta] in single support (theta is the common
//!   body angle, legs welded perpendicular to the pelvis). In double
//!   support the same layout holds with the angle frozen and q[0] the
//!   trailing leg length (1 active DoF).
//! - FixedAnkle: q = [l_st, phi] (legs vertical, pelvis roll free);
//!   double support as above.
//! - Extended: q = [l_st, psi_st, th_h_st, l_sw, th_h_sw] anchored at the
//!   stance foot; double support keeps the chart and pins the other foot
//!   through a holonomic constraint.

mod extended;
mod simplified;

use alloc::vec::Vec;
use nalgebra::DVector;

use crate::params::{DerivedQuantities, Joint, ModelKind, ModelParams, ParamError, PdGains};
use crate::profile::{LegIndex, StrideProfile};

/// Contact phase of the hybrid system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    SingleSupport { stance: LegIndex },
    DoubleSupport { trailing: LegIndex },
    Flight,
}

/// Continuous guard functions; an event fires when its guard, previously
/// armed positive, crosses zero downward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Swing foot height reaches the ground (single -> double support).
    Touchdown,
    /// Trailing foot unloads (double -> single support).
    Liftoff,
    /// The supporting foot unloads in single support; the model would
    /// leave the ground.
    Flight,
    /// Center of mass below the fall threshold.
    Fall,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DynError {
    SingularMassMatrix,
    InconsistentConstraint,
    InvalidState(&'static str),
}

impl core::fmt::Display for DynError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DynError::SingularMassMatrix => write!(f, "singular mass matrix"),
            DynError::InconsistentConstraint => write!(f, "inconsistent contact constraints"),
            DynError::InvalidState(what) => write!(f, "invalid state: {what}"),
        }
    }
}

/// Full mechanical state of the hybrid system.
#[derive(Debug, Clone)]
pub struct HybridState {
    pub q: DVector<f64>,
    pub q_dot: DVector<f64>,
    pub phase: Phase,
    pub t: f64,
    /// Ground x position of each planted foot, indexed [left, right].
    pub foot_anchor: [Option<f64>; 2],
}

impl HybridState {
    pub fn anchor(&self, leg: LegIndex) -> Option<f64> {
        self.foot_anchor[leg_slot(leg)]
    }

    pub fn set_anchor(&mut self, leg: LegIndex, x: Option<f64>) {
        self.foot_anchor[leg_slot(leg)] = x;
    }
}

fn leg_slot(leg: LegIndex) -> usize {
    match leg {
        LegIndex::Left => 0,
        LegIndex::Right => 1,
    }
}

/// One model instance: parameters, neutral-length program, controllers.
#[derive(Debug, Clone)]
pub struct BipedSystem {
    pub params: ModelParams,
    pub derived: DerivedQuantities,
    pub profile: StrideProfile,
    pub gains: Vec<PdGains>,
    /// CoM height below `fall_fraction * l0` counts as a fall.
    pub fall_fraction: f64,
    /// Keep the support foot anchored even when it unloads: the Flight
    /// guard is not armed and the support force may go negative. Used by
    /// the periodic-orbit machinery, which judges flight feasibility on
    /// the converged orbit instead of aborting mid-search.
    pub glue_contact: bool,
}

impl BipedSystem {
    pub fn new(params: ModelParams, profile: StrideProfile, gains: Vec<PdGains>) -> Result<BipedSystem, ParamError> {
        let derived = params.derive()?;
        Ok(BipedSystem {
            params,
            derived,
            profile,
            gains,
            fall_fraction: 0.2,
            glue_contact: false,
        })
    }

    /// Same system with a different stride frequency.
    pub fn with_frequency(&self, omega_s: f64) -> BipedSystem {
        let mut sys = self.clone();
        sys.profile = StrideProfile::for_frequency(
            omega_s,
            self.params.rest_length_max,
            self.params.retraction_fraction * self.params.rest_length_max,
        );
        sys
    }

    /// Coordinate count of the single-support chart.
    pub fn dof(&self) -> usize {
        match self.params.kind {
            ModelKind::FixedHip | ModelKind::FixedAnkle => 2,
            ModelKind::Extended => 5,
        }
    }

    /// Spring-damper force of `leg`, positive pushing foot and hip apart.
    pub fn leg_force(&self, state: &HybridState, leg: LegIndex) -> f64 {
        let (l, l_dot) = self.leg_length_rate(state, leg);
        let (ln, ln_dot) = self.profile.neutral_length(state.t, leg);
        spring_force(&self.params, &self.derived, ln, ln_dot, l, l_dot)
    }

    /// Load carried by the foot of `leg`: the vertical ground reaction
    /// for the extended kind (whose leg mass keeps the foot pressed down
    /// even when the spring unloads), the axial spring force for the
    /// massless-leg kinds where the two coincide.
    pub fn support_force(&self, state: &HybridState, leg: LegIndex) -> f64 {
        match self.params.kind {
            ModelKind::Extended => extended::reference_grf_y(self, state).unwrap_or(-1.0),
            _ => self.leg_force(state, leg),
        }
    }

    /// Length and rate of `leg` in the current chart. Unloaded massless
    /// legs track the neutral program exactly.
    pub fn leg_length_rate(&self, state: &HybridState, leg: LegIndex) -> (f64, f64) {
        match self.params.kind {
            ModelKind::Extended => extended::leg_length_rate(state, leg),
            _ => simplified::leg_length_rate(self, state, leg),
        }
    }

    /// Generalized accelerations for the current phase.
    pub fn vector_field(&self, state: &HybridState) -> Result<DVector<f64>, DynError> {
        match self.params.kind {
            ModelKind::Extended => extended::vector_field(self, state),
            _ => simplified::vector_field(self, state),
        }
    }

    /// Active guard values for the current phase.
    pub fn guards(&self, state: &HybridState) -> Vec<(EventKind, f64)> {
        let mut out = Vec::with_capacity(3);
        let fall = self.com(state)[1] - self.fall_fraction * self.params.rest_length_max;
        match state.phase {
            Phase::SingleSupport { stance } => {
                out.push((EventKind::Touchdown, self.swing_foot_height(state)));
                if !self.glue_contact {
                    out.push((EventKind::Flight, self.support_force(state, stance)));
                }
                out.push((EventKind::Fall, fall));
            }
            Phase::DoubleSupport { trailing } => {
                out.push((EventKind::Liftoff, self.support_force(state, trailing)));
                out.push((EventKind::Fall, fall));
            }
            Phase::Flight => {}
        }
        out
    }

    /// Chart x of the leading planted foot in double support, relative to
    /// the trailing foot.
    pub fn ds_leading_foot_x(&self, state: &HybridState) -> Result<f64, DynError> {
        let trailing = match state.phase {
            Phase::DoubleSupport { trailing } => trailing,
            _ => return Err(DynError::InvalidState("not in double support")),
        };
        let s = trailing.side_sign();
        let w = self.params.hip_width;
        let angle = state.q[1];
        Ok(match self.params.kind {
            ModelKind::FixedHip => s * w / libm::cos(angle),
            ModelKind::FixedAnkle => s * w * libm::cos(angle),
            ModelKind::Extended => extended::planted_foot_x(self, state),
        })
    }

    /// Height of the unplanted foot above the ground (single support only).
    pub fn swing_foot_height(&self, state: &HybridState) -> f64 {
        match self.params.kind {
            ModelKind::Extended => extended::swing_foot_height(self, state),
            _ => simplified::swing_foot_height(self, state),
        }
    }

    /// Apply the discrete transition for `event`. The guard must be at
    /// zero; positions and, where the contact geometry permits, the CoM
    /// velocity are continuous across the reset.
    pub fn reset_map(&self, state: &HybridState, event: EventKind) -> Result<HybridState, DynError> {
        match event {
            EventKind::Flight => {
                let mut next = state.clone();
                next.phase = Phase::Flight;
                Ok(next)
            }
            EventKind::Fall => Err(DynError::InvalidState("fall is terminal, not a reset")),
            EventKind::Touchdown | EventKind::Liftoff => match self.params.kind {
                ModelKind::Extended => extended::reset_map(self, state, event),
                _ => simplified::reset_map(self, state, event),
            },
        }
    }

    /// Center of mass position in chart coordinates (stance anchor at the
    /// stored ground x).
    pub fn com(&self, state: &HybridState) -> [f64; 2] {
        match self.params.kind {
            ModelKind::Extended => extended::com(self, state),
            _ => simplified::com(self, state),
        }
    }

    pub fn com_velocity(&self, state: &HybridState) -> [f64; 2] {
        match self.params.kind {
            ModelKind::Extended => extended::com_velocity(self, state),
            _ => simplified::com_velocity(self, state),
        }
    }

    /// Total mechanical energy: kinetic + gravitational + loaded spring
    /// potential.
    pub fn energy(&self, state: &HybridState) -> f64 {
        match self.params.kind {
            ModelKind::Extended => extended::energy(self, state),
            _ => simplified::energy(self, state),
        }
    }

    /// Instantaneous power flowing into the mechanical system: neutral
    /// length actuation + PD torques - damper dissipation. Integrating
    /// this over a smooth segment balances the change in `energy`.
    pub fn net_power(&self, state: &HybridState) -> f64 {
        match self.params.kind {
            ModelKind::Extended => extended::net_power(self, state),
            _ => simplified::net_power(self, state),
        }
    }

    /// Lateral reflection: mirrors the state through the x = const plane,
    /// swapping legs; the clock shifts by half a stride so each leg picks
    /// up the other's neutral-length program.
    pub fn mirrored_state(&self, state: &HybridState) -> HybridState {
        let mut q = state.q.clone();
        let mut q_dot = state.q_dot.clone();
        match self.params.kind {
            ModelKind::FixedHip | ModelKind::FixedAnkle => {
                q[1] = -q[1];
                q_dot[1] = -q_dot[1];
            }
            ModelKind::Extended => {
                for i in [1usize, 2, 4] {
                    q[i] = -q[i];
                    q_dot[i] = -q_dot[i];
                }
            }
        }
        let phase = match state.phase {
            Phase::SingleSupport { stance } => Phase::SingleSupport { stance: stance.other() },
            Phase::DoubleSupport { trailing } => Phase::DoubleSupport { trailing: trailing.other() },
            Phase::Flight => Phase::Flight,
        };
        let anchors = [state.foot_anchor[1].map(|x| -x), state.foot_anchor[0].map(|x| -x)];
        HybridState {
            q,
            q_dot,
            phase,
            t: state.t + self.profile.phase_offset,
            foot_anchor: anchors,
        }
    }

    pub(crate) fn pd_torques(&self, phase: Phase) -> impl Iterator<Item = &PdGains> {
        let in_ds = matches!(phase, Phase::DoubleSupport { .. });
        self.gains.iter().filter(move |g| {
            // swing-leg tracking only makes sense while a leg is swinging
            !(in_ds && g.target_joint == Joint::SwingHip)
        })
    }
}

/// Eq.-style spring-damper law, positive in extension.
pub fn spring_force(
    params: &ModelParams,
    derived: &DerivedQuantities,
    neutral: f64,
    neutral_rate: f64,
    length: f64,
    rate: f64,
) -> f64 {
    params.leg_stiffness * (neutral - length) + derived.damping_coeff * (neutral_rate - rate)
}

/// PD control law: tau = kp (setpoint - angle) - kd * rate.
pub fn pd_torque(gains: &PdGains, angle: f64, rate: f64) -> f64 {
    gains.kp * (gains.setpoint - angle) - gains.kd * rate
}

/// Leg axis direction a(psi) = (sin psi, cos psi), foot to hip.
#[inline]
pub(crate) fn axis(angle: f64) -> nalgebra::Vector2<f64> {
    nalgebra::Vector2::new(libm::sin(angle), libm::cos(angle))
}

/// d a / d psi; also the pelvis left-to-right direction r(phi).
#[inline]
pub(crate) fn axis_perp(angle: f64) -> nalgebra::Vector2<f64> {
    nalgebra::Vector2::new(libm::cos(angle), -libm::sin(angle))
}
