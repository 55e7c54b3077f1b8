//! Time-periodic neutral leg length program.
//!
//! Each leg's spring neutral length l_n(t) is held at the stance resting
//! length l0 for part of the stride and retracted/extended over the swing
//! window by a pair of mirrored quintic segments. The quintic boundary
//! conditions give zero velocity and acceleration at the window ends, so
//! the damper force vanishes at touchdown.

use core::f64::consts::PI;

/// Left/right leg label. `side_sign` is +1 for the left leg, -1 for the
/// right; it fixes which way the pelvis offset points in the kinematics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegIndex {
    Left,
    Right,
}

impl LegIndex {
    pub fn other(self) -> LegIndex {
        match self {
            LegIndex::Left => LegIndex::Right,
            LegIndex::Right => LegIndex::Left,
        }
    }

    pub fn side_sign(self) -> f64 {
        match self {
            LegIndex::Left => 1.0,
            LegIndex::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StrideProfile {
    /// Full stride period T (one left + one right step).
    pub stride_time: f64,
    /// Stance resting length l0.
    pub rest_length_max: f64,
    /// Maximum retraction depth.
    pub retraction_depth: f64,
    /// Fraction of the stride each leg spends in its swing window.
    pub swing_fraction: f64,
    /// Clock offset of the right leg relative to the left (T/2 for
    /// alternating gaits).
    pub phase_offset: f64,
}

impl StrideProfile {
    /// Alternating-leg profile with the default half-stride swing window.
    pub fn new(stride_time: f64, rest_length_max: f64, retraction_depth: f64) -> StrideProfile {
        StrideProfile {
            stride_time,
            rest_length_max,
            retraction_depth,
            swing_fraction: 0.5,
            phase_offset: 0.5 * stride_time,
        }
    }

    pub fn for_frequency(omega_s: f64, rest_length_max: f64, retraction_depth: f64) -> StrideProfile {
        StrideProfile::new(stride_frequency_to_time(omega_s), rest_length_max, retraction_depth)
    }

    pub fn stride_frequency(&self) -> f64 {
        2.0 * PI / self.stride_time
    }

    /// Neutral length and its rate for `leg` at time `t`.
    ///
    /// The leg clock starts at the beginning of the leg's swing window:
    /// retraction over the first half-window, extension over the second,
    /// then constant l0 for the rest of the stride.
    pub fn neutral_length(&self, t: f64, leg: LegIndex) -> (f64, f64) {
        let tau = self.leg_clock(t, leg);
        let swing = self.swing_fraction * self.stride_time;
        let l0 = self.rest_length_max;
        let depth = self.retraction_depth;
        if tau >= swing {
            return (l0, 0.0);
        }
        let half = 0.5 * swing;
        if tau < half {
            // retracting
            let (s, s_dot) = quintic_step(tau / half);
            (l0 - depth * s, -depth * s_dot / half)
        } else {
            // extending
            let (s, s_dot) = quintic_step((tau - half) / half);
            (l0 - depth + depth * s, depth * s_dot / half)
        }
    }

    /// Time within [0, T) on the given leg's cycle.
    pub fn leg_clock(&self, t: f64, leg: LegIndex) -> f64 {
        let shift = match leg {
            LegIndex::Left => 0.0,
            LegIndex::Right => self.phase_offset,
        };
        let tau = (t - shift) % self.stride_time;
        if tau < 0.0 {
            tau + self.stride_time
        } else {
            tau
        }
    }
}

/// Quintic smoothstep s(u) = 10u^3 - 15u^4 + 6u^5 and derivative,
/// clamped outside [0, 1].
fn quintic_step(u: f64) -> (f64, f64) {
    if u <= 0.0 {
        return (0.0, 0.0);
    }
    if u >= 1.0 {
        return (1.0, 0.0);
    }
    let u2 = u * u;
    let u3 = u2 * u;
    (
        u3 * (10.0 - 15.0 * u + 6.0 * u2),
        30.0 * u2 * (1.0 - 2.0 * u + u2),
    )
}

pub fn stride_frequency_to_time(omega_s: f64) -> f64 {
    2.0 * PI / omega_s
}

pub fn stride_time_to_frequency(stride_time: f64) -> f64 {
    2.0 * PI / stride_time
}
