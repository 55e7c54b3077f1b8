//! Dynamics of the 5-DoF model with leg masses and free ankle/hip joints.
//!
//! Chart (stance foot at the origin): q = [l1, psi1, th_h1, l2, th_h2]
//! where psi1 is the stance leg angle from vertical, th_h1 the stance hip
//! angle (leg relative to pelvis), l2 / th_h2 the other leg's length and
//! hip angle. Derived angles: pelvis roll phi = psi1 - th_h1 and swing leg
//! angle psi2 = phi + th_h2. Mass layout: torso mass at offset d above the
//! hip center with roll inertia I_T, one point mass on each leg at height
//! l_m above its foot.
//!
//! Single support assembles M(q) qdd = Q - C - G from point-mass Jacobians.
//! Double support adds the planted-foot position as a holonomic constraint
//! solved as a KKT system with Baumgarte stabilization.

use nalgebra::{DMatrix, DVector, SMatrix, Vector2};

use crate::linalg;
use crate::params::Joint;
use crate::profile::LegIndex;

use super::{axis, axis_perp, pd_torque, BipedSystem, DynError, EventKind, HybridState, Phase};

type Jac = SMatrix<f64, 2, 5>;

const N: usize = 5;
/// Baumgarte stabilization gain for the double-support foot constraint.
const BAUMGARTE: f64 = 20.0;

/// Chart reference leg: stance in single support, trailing in double.
fn reference_leg(state: &HybridState) -> Result<LegIndex, DynError> {
    match state.phase {
        Phase::SingleSupport { stance } => Ok(stance),
        Phase::DoubleSupport { trailing } => Ok(trailing),
        Phase::Flight => Err(DynError::InvalidState("flight has no support chart")),
    }
}

/// Geometry, Jacobians, and velocity-product accelerations at one state.
struct Kin {
    phi: f64,
    psi2: f64,
    torso: Vector2<f64>,
    p1: Vector2<f64>,
    p2: Vector2<f64>,
    foot_sw: Vector2<f64>,
    j_torso: Jac,
    j_p1: Jac,
    j_p2: Jac,
    j_foot: Jac,
    gamma_torso: Vector2<f64>,
    gamma_p1: Vector2<f64>,
    gamma_p2: Vector2<f64>,
    gamma_foot: Vector2<f64>,
    phi_dot: f64,
    psi1_dot: f64,
    psi2_dot: f64,
}

fn kinematics(sys: &BipedSystem, q: &DVector<f64>, q_dot: &DVector<f64>, side: f64) -> Kin {
    let p = &sys.params;
    let (rho, d, w) = (p.half_width(), p.torso_offset, p.hip_width);
    let lm = p.leg_mass_offset;

    let (l1, psi1, h1, l2, h2) = (q[0], q[1], q[2], q[3], q[4]);
    let phi = psi1 - h1;
    let psi2 = phi + h2;
    let psi1_dot = q_dot[1];
    let phi_dot = q_dot[1] - q_dot[2];
    let psi2_dot = phi_dot + q_dot[4];

    let a1 = axis(psi1);
    let ap1 = axis_perp(psi1);
    let a2 = axis(psi2);
    let ap2 = axis_perp(psi2);
    let af = axis(phi);
    let apf = axis_perp(phi);

    let hip_st = a1 * l1;
    let torso = hip_st + apf * (side * rho) + af * d;
    let p1 = a1 * lm;
    let hip_sw = hip_st + apf * (side * w);
    let p2 = hip_sw - a2 * (l2 - lm);
    let foot_sw = hip_sw - a2 * l2;

    // d(apf)/dphi = -af, d(af)/dphi = apf
    let dtorso_dphi = af * (-side * rho) + apf * d;
    let dhipsw_dphi = af * (-side * w);

    let mut j_torso = Jac::zeros();
    j_torso.set_column(0, &a1);
    j_torso.set_column(1, &(ap1 * l1 + dtorso_dphi));
    j_torso.set_column(2, &(-dtorso_dphi));

    let mut j_p1 = Jac::zeros();
    j_p1.set_column(1, &(ap1 * lm));

    let swing_arm = l2 - lm;
    let mut j_p2 = Jac::zeros();
    j_p2.set_column(0, &a1);
    j_p2.set_column(1, &(ap1 * l1 + dhipsw_dphi - ap2 * swing_arm));
    j_p2.set_column(2, &(-dhipsw_dphi + ap2 * swing_arm));
    j_p2.set_column(3, &(-a2));
    j_p2.set_column(4, &(-(ap2 * swing_arm)));

    let mut j_foot = Jac::zeros();
    j_foot.set_column(0, &a1);
    j_foot.set_column(1, &(ap1 * l1 + dhipsw_dphi - ap2 * l2));
    j_foot.set_column(2, &(-dhipsw_dphi + ap2 * l2));
    j_foot.set_column(3, &(-a2));
    j_foot.set_column(4, &(-(ap2 * l2)));

    let (l1_dot, l2_dot) = (q_dot[0], q_dot[3]);
    let stance_spin = ap1 * (2.0 * l1_dot * psi1_dot) - a1 * (l1 * psi1_dot * psi1_dot);
    let gamma_torso = stance_spin - (apf * (side * rho) + af * d) * (phi_dot * phi_dot);
    let gamma_p1 = -a1 * (lm * psi1_dot * psi1_dot);
    let hip_sw_gamma = stance_spin - apf * (side * w * phi_dot * phi_dot);
    let gamma_p2 =
        hip_sw_gamma - ap2 * (2.0 * l2_dot * psi2_dot) + a2 * (swing_arm * psi2_dot * psi2_dot);
    let gamma_foot =
        hip_sw_gamma - ap2 * (2.0 * l2_dot * psi2_dot) + a2 * (l2 * psi2_dot * psi2_dot);

    Kin {
        phi,
        psi2,
        torso,
        p1,
        p2,
        foot_sw,
        j_torso,
        j_p1,
        j_p2,
        j_foot,
        gamma_torso,
        gamma_p1,
        gamma_p2,
        gamma_foot,
        phi_dot,
        psi1_dot,
        psi2_dot,
    }
}

/// Mass matrix and the right-hand side Q - C - G of the unconstrained
/// manipulator equation.
fn assemble(sys: &BipedSystem, state: &HybridState, kin: &Kin) -> (DMatrix<f64>, DVector<f64>) {
    let p = &sys.params;
    let (m_t, m_l, it, g) = (p.torso_mass(), p.leg_mass(), p.torso_inertia(), p.gravity);

    let mut m = DMatrix::zeros(N, N);
    let mut rhs = DVector::zeros(N);
    let e_y = Vector2::new(0.0, 1.0);

    for (mass, jac, gamma) in [
        (m_t, &kin.j_torso, &kin.gamma_torso),
        (m_l, &kin.j_p1, &kin.gamma_p1),
        (m_l, &kin.j_p2, &kin.gamma_p2),
    ] {
        for i in 0..N {
            let ji = jac.column(i);
            for j in i..N {
                let v = mass * ji.dot(&jac.column(j));
                m[(i, j)] += v;
                if i != j {
                    m[(j, i)] += v;
                }
            }
            rhs[i] -= mass * ji.dot(gamma) + mass * g * ji.dot(&e_y);
        }
    }
    // torso roll inertia: phi_dot = q_dot[1] - q_dot[2]
    m[(1, 1)] += it;
    m[(2, 2)] += it;
    m[(1, 2)] -= it;
    m[(2, 1)] -= it;

    let reference = reference_leg(state).expect("support phase");
    let f1 = sys.leg_force(state, reference);
    let f2 = sys.leg_force(state, reference.other());
    rhs[0] += f1;
    rhs[3] += f2;

    for gains in sys.pd_torques(state.phase) {
        match gains.target_joint {
            Joint::StanceAnkle => rhs[1] += pd_torque(gains, state.q[1], kin.psi1_dot),
            // pelvis-leveling torque acts on phi = psi1 - th_h1; the
            // reaction on the stance leg cancels the psi1 component,
            // leaving -tau on the hip coordinate
            Joint::StanceHip => rhs[2] -= pd_torque(gains, kin.phi, kin.phi_dot),
            Joint::SwingHip => rhs[4] += pd_torque(gains, kin.psi2, kin.psi2_dot),
        }
    }
    (m, rhs)
}

pub(super) fn leg_length_rate(state: &HybridState, leg: LegIndex) -> (f64, f64) {
    let slot = match state.phase {
        Phase::SingleSupport { stance } => {
            if leg == stance {
                0
            } else {
                3
            }
        }
        Phase::DoubleSupport { trailing } => {
            if leg == trailing {
                0
            } else {
                3
            }
        }
        Phase::Flight => {
            if leg == LegIndex::Left {
                0
            } else {
                3
            }
        }
    };
    (state.q[slot], state.q_dot[slot])
}

pub(super) fn vector_field(sys: &BipedSystem, state: &HybridState) -> Result<DVector<f64>, DynError> {
    solve_dynamics(sys, state).map(|(qdd, _)| qdd)
}

/// Accelerations plus, in double support, the leading-foot constraint
/// force (the KKT multiplier).
fn solve_dynamics(
    sys: &BipedSystem,
    state: &HybridState,
) -> Result<(DVector<f64>, Option<Vector2<f64>>), DynError> {
    let reference = reference_leg(state)?;
    let kin = kinematics(sys, &state.q, &state.q_dot, reference.side_sign());
    let (m, rhs) = assemble(sys, state, &kin);

    match state.phase {
        Phase::SingleSupport { .. } => linalg::solve(&m, &rhs)
            .map(|qdd| (qdd, None))
            .ok_or(DynError::SingularMassMatrix),
        Phase::DoubleSupport { trailing } => {
            let x_st = state.anchor(trailing).unwrap_or(0.0);
            let x_sw = state
                .anchor(trailing.other())
                .ok_or(DynError::InvalidState("double support without planted swing foot"))?;
            let target = Vector2::new(x_sw - x_st, 0.0);
            let c = kin.foot_sw - target;
            let mut c_dot = Vector2::zeros();
            for i in 0..N {
                c_dot += kin.j_foot.column(i) * state.q_dot[i];
            }

            // KKT system: [M -J^T; J 0] [qdd; lambda] = [rhs; rhs_c]
            let mut kkt = DMatrix::zeros(N + 2, N + 2);
            let mut full_rhs = DVector::zeros(N + 2);
            kkt.view_mut((0, 0), (N, N)).copy_from(&m);
            for i in 0..N {
                for r in 0..2 {
                    kkt[(i, N + r)] = -kin.j_foot[(r, i)];
                    kkt[(N + r, i)] = kin.j_foot[(r, i)];
                }
                full_rhs[i] = rhs[i];
            }
            let rhs_c = -kin.gamma_foot - c_dot * (2.0 * BAUMGARTE) - c * (BAUMGARTE * BAUMGARTE);
            full_rhs[N] = rhs_c.x;
            full_rhs[N + 1] = rhs_c.y;

            let sol = linalg::solve(&kkt, &full_rhs).ok_or(DynError::SingularMassMatrix)?;
            let lambda = Vector2::new(sol[N], sol[N + 1]);
            Ok((sol.rows(0, N).into_owned(), Some(lambda)))
        }
        Phase::Flight => Err(DynError::InvalidState("flight is terminal")),
    }
}

/// Vertical ground reaction at the reference foot (stance in single
/// support, trailing in double support), from the whole-body momentum
/// balance: internal spring and controller forces cancel, leaving
/// GRF = sum_i m_i (a_i + g e_y) minus the leading-foot reaction.
pub(super) fn reference_grf_y(sys: &BipedSystem, state: &HybridState) -> Result<f64, DynError> {
    let reference = reference_leg(state)?;
    let kin = kinematics(sys, &state.q, &state.q_dot, reference.side_sign());
    let (qdd, lambda) = solve_dynamics(sys, state)?;
    let p = &sys.params;

    let mut grf = 0.0;
    for (mass, jac, gamma) in [
        (p.torso_mass(), &kin.j_torso, &kin.gamma_torso),
        (p.leg_mass(), &kin.j_p1, &kin.gamma_p1),
        (p.leg_mass(), &kin.j_p2, &kin.gamma_p2),
    ] {
        let mut accel_y = gamma.y;
        for i in 0..N {
            accel_y += jac[(1, i)] * qdd[i];
        }
        grf += mass * (accel_y + p.gravity);
    }
    if let Some(lambda) = lambda {
        grf -= lambda.y;
    }
    Ok(grf)
}

/// Chart x of the non-reference foot; in double support this is the
/// leading planted foot.
pub(super) fn planted_foot_x(sys: &BipedSystem, state: &HybridState) -> f64 {
    let reference = match reference_leg(state) {
        Ok(l) => l,
        Err(_) => return f64::NAN,
    };
    let kin = kinematics(sys, &state.q, &state.q_dot, reference.side_sign());
    kin.foot_sw.x
}

pub(super) fn swing_foot_height(sys: &BipedSystem, state: &HybridState) -> f64 {
    let stance = match state.phase {
        Phase::SingleSupport { stance } => stance,
        _ => return f64::NAN,
    };
    let kin = kinematics(sys, &state.q, &state.q_dot, stance.side_sign());
    kin.foot_sw.y
}

pub(super) fn reset_map(sys: &BipedSystem, state: &HybridState, event: EventKind) -> Result<HybridState, DynError> {
    match (event, state.phase) {
        (EventKind::Touchdown, Phase::SingleSupport { stance }) => {
            let kin = kinematics(sys, &state.q, &state.q_dot, stance.side_sign());
            let (m, _) = assemble(sys, state, &kin);

            // project velocities onto the constraint surface: the new foot
            // sticks, the impulse is transmitted through M
            let j = &kin.j_foot;
            let mut jt = DMatrix::zeros(N, 2);
            for i in 0..N {
                for r in 0..2 {
                    jt[(i, r)] = j[(r, i)];
                }
            }
            let m_lu = m.clone().lu();
            let x = m_lu.solve(&jt).ok_or(DynError::SingularMassMatrix)?;
            let mut a = DMatrix::zeros(2, 2);
            for r in 0..2 {
                for c in 0..2 {
                    a[(r, c)] = (0..N).map(|i| j[(r, i)] * x[(i, c)]).sum();
                }
            }
            let mut c_dot = DVector::zeros(2);
            for r in 0..2 {
                c_dot[r] = (0..N).map(|i| j[(r, i)] * state.q_dot[i]).sum();
            }
            let mu = linalg::solve(&a, &c_dot).ok_or(DynError::InconsistentConstraint)?;

            let mut next = state.clone();
            for i in 0..N {
                next.q_dot[i] -= x[(i, 0)] * mu[0] + x[(i, 1)] * mu[1];
            }
            next.phase = Phase::DoubleSupport { trailing: stance };
            let x_st = state.anchor(stance).unwrap_or(0.0);
            next.set_anchor(stance.other(), Some(x_st + kin.foot_sw.x));
            Ok(next)
        }
        (EventKind::Liftoff, Phase::DoubleSupport { trailing }) => {
            // relabel legs so the chart follows the new stance leg:
            // psi2 = psi1 - th_h1 + th_h2 becomes the new psi1, the hip
            // angles swap roles
            let relabel = |v: &DVector<f64>| {
                DVector::from_column_slice(&[v[3], v[1] - v[2] + v[4], v[4], v[0], v[2]])
            };
            let mut next = state.clone();
            next.q = relabel(&state.q);
            next.q_dot = relabel(&state.q_dot);
            next.phase = Phase::SingleSupport { stance: trailing.other() };
            next.set_anchor(trailing, None);
            Ok(next)
        }
        _ => Err(DynError::InvalidState("reset event does not match phase")),
    }
}

pub(super) fn com(sys: &BipedSystem, state: &HybridState) -> [f64; 2] {
    let reference = match reference_leg(state) {
        Ok(l) => l,
        Err(_) => return [f64::NAN, f64::NAN],
    };
    let kin = kinematics(sys, &state.q, &state.q_dot, reference.side_sign());
    let p = &sys.params;
    let total = p.total_mass;
    let pos = (kin.torso * p.torso_mass() + (kin.p1 + kin.p2) * p.leg_mass()) / total;
    let x0 = state.anchor(reference).unwrap_or(0.0);
    [x0 + pos.x, pos.y]
}

pub(super) fn com_velocity(sys: &BipedSystem, state: &HybridState) -> [f64; 2] {
    let reference = match reference_leg(state) {
        Ok(l) => l,
        Err(_) => return [f64::NAN, f64::NAN],
    };
    let kin = kinematics(sys, &state.q, &state.q_dot, reference.side_sign());
    let p = &sys.params;
    let mut v = Vector2::zeros();
    for (mass, jac) in [
        (p.torso_mass(), &kin.j_torso),
        (p.leg_mass(), &kin.j_p1),
        (p.leg_mass(), &kin.j_p2),
    ] {
        for i in 0..N {
            v += jac.column(i) * (mass * state.q_dot[i]);
        }
    }
    v /= p.total_mass;
    [v.x, v.y]
}

pub(super) fn energy(sys: &BipedSystem, state: &HybridState) -> f64 {
    let reference = reference_leg(state).expect("support phase");
    let kin = kinematics(sys, &state.q, &state.q_dot, reference.side_sign());
    let p = &sys.params;

    let mut e = 0.0;
    for (mass, jac, pos) in [
        (p.torso_mass(), &kin.j_torso, &kin.torso),
        (p.leg_mass(), &kin.j_p1, &kin.p1),
        (p.leg_mass(), &kin.j_p2, &kin.p2),
    ] {
        let mut v = Vector2::zeros();
        for i in 0..N {
            v += jac.column(i) * state.q_dot[i];
        }
        e += 0.5 * mass * v.norm_squared() + mass * p.gravity * pos.y;
    }
    e += 0.5 * p.torso_inertia() * kin.phi_dot * kin.phi_dot;

    for leg in [reference, reference.other()] {
        let (l, _) = leg_length_rate(state, leg);
        let (ln, _) = sys.profile.neutral_length(state.t, leg);
        e += 0.5 * p.leg_stiffness * (ln - l) * (ln - l);
    }
    e
}

pub(super) fn net_power(sys: &BipedSystem, state: &HybridState) -> f64 {
    let reference = reference_leg(state).expect("support phase");
    let kin = kinematics(sys, &state.q, &state.q_dot, reference.side_sign());
    let b = sys.derived.damping_coeff;

    let mut power = 0.0;
    for leg in [reference, reference.other()] {
        let (l, l_dot) = leg_length_rate(state, leg);
        let (ln, ln_dot) = sys.profile.neutral_length(state.t, leg);
        let f = super::spring_force(&sys.params, &sys.derived, ln, ln_dot, l, l_dot);
        power += f * ln_dot - b * (ln_dot - l_dot) * (ln_dot - l_dot);
    }
    for gains in sys.pd_torques(state.phase) {
        power += match gains.target_joint {
            Joint::StanceAnkle => pd_torque(gains, state.q[1], kin.psi1_dot) * kin.psi1_dot,
            // torque pair between pelvis and stance leg: relative rate is
            // phi_dot - psi1_dot = -th_h1_dot
            Joint::StanceHip => pd_torque(gains, kin.phi, kin.phi_dot) * (kin.phi_dot - kin.psi1_dot),
            Joint::SwingHip => pd_torque(gains, kin.psi2, kin.psi2_dot) * (kin.psi2_dot - kin.phi_dot),
        };
    }
    power
}
