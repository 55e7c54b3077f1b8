//! Model parameters, derived quantities, and random model generation.

use libm::sqrt;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which of the three frontal-plane model variants is being simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Legs welded perpendicular to the pelvis; 2 DoF in single support.
    FixedHip,
    /// Stance ankle locked, legs vertical, hip free; 2 DoF in single support.
    FixedAnkle,
    /// Ankle and hip both free, legs carry mass; 5 DoF in single support.
    Extended,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamError {
    NonPositive(&'static str),
    OutOfRange(&'static str),
    /// Static deflection m*g/k >= rest length: the spring bottoms out.
    StaticDeflectionTooLarge,
}

impl core::fmt::Display for ParamError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ParamError::NonPositive(name) => write!(f, "{name} must be positive"),
            ParamError::OutOfRange(name) => write!(f, "{name} out of range"),
            ParamError::StaticDeflectionTooLarge => {
                write!(f, "static deflection m*g/k exceeds the resting leg length")
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ModelParams {
    pub kind: ModelKind,
    /// Total body mass [kg].
    pub total_mass: f64,
    /// Leg spring stiffness k [N/m].
    pub leg_stiffness: f64,
    /// Leg damping ratio (dimensionless, 0.1 in all reported runs).
    pub damping_ratio: f64,
    /// Stance resting leg length l0 [m].
    pub rest_length_max: f64,
    /// Maximum retraction as a fraction of l0.
    pub retraction_fraction: f64,
    /// Hip width w [m]; the half width rho = w/2.
    pub hip_width: f64,
    /// Offset d of the torso mass above the hip center [m].
    pub torso_offset: f64,
    /// None = point-mass torso; Some(r) adds torso roll inertia m_T * r^2.
    pub torso_radius_of_gyration: Option<f64>,
    /// Fraction of total mass carried by the legs (both together).
    pub leg_mass_fraction: f64,
    /// Distance l_m of each leg's mass point above its foot [m].
    pub leg_mass_offset: f64,
    /// Gravitational acceleration [m/s^2].
    pub gravity: f64,
}

impl ModelParams {
    /// Baseline parameter set for the two massless-leg kinds.
    pub fn simplified(kind: ModelKind, total_mass: f64, leg_stiffness: f64, rest_length_max: f64, hip_width: f64) -> ModelParams {
        ModelParams {
            kind,
            total_mass,
            leg_stiffness,
            damping_ratio: 0.1,
            rest_length_max,
            retraction_fraction: 0.2,
            hip_width,
            torso_offset: 0.2,
            torso_radius_of_gyration: None,
            leg_mass_fraction: 0.0,
            leg_mass_offset: 0.5 * rest_length_max,
            gravity: 9.81,
        }
    }

    /// Baseline extended (7-DoF) parameter set: 30% of the mass in the
    /// legs, anthropometric torso radius of gyration.
    pub fn extended(total_mass: f64, leg_stiffness: f64, rest_length_max: f64, hip_width: f64) -> ModelParams {
        ModelParams {
            kind: ModelKind::Extended,
            leg_mass_fraction: 0.3,
            torso_radius_of_gyration: Some(0.3),
            ..ModelParams::simplified(ModelKind::Extended, total_mass, leg_stiffness, rest_length_max, hip_width)
        }
    }

    pub fn derive(&self) -> Result<DerivedQuantities, ParamError> {
        self.validate()?;
        let m = self.total_mass;
        let k = self.leg_stiffness;
        let l0 = self.rest_length_max;
        let rho = 0.5 * self.hip_width;
        let dl = m * self.gravity / k;
        let l = sqrt(l0 * l0 + rho * rho);
        Ok(DerivedQuantities {
            damping_coeff: 2.0 * self.damping_ratio * sqrt(k * m),
            natural_frequency: sqrt(k / m),
            static_deflection: dl,
            effective_rest_length: l0 - dl,
            diag_leg_length: l,
            pendulum_frequency: sqrt(self.gravity / l),
        })
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.total_mass <= 0.0 {
            return Err(ParamError::NonPositive("total_mass"));
        }
        if self.leg_stiffness <= 0.0 {
            return Err(ParamError::NonPositive("leg_stiffness"));
        }
        if self.rest_length_max <= 0.0 {
            return Err(ParamError::NonPositive("rest_length_max"));
        }
        if self.hip_width < 0.0 {
            return Err(ParamError::OutOfRange("hip_width"));
        }
        if !(0.0..1.0).contains(&self.retraction_fraction) {
            return Err(ParamError::OutOfRange("retraction_fraction"));
        }
        if !(0.0..1.0).contains(&self.leg_mass_fraction) {
            return Err(ParamError::OutOfRange("leg_mass_fraction"));
        }
        if matches!(self.kind, ModelKind::FixedHip | ModelKind::FixedAnkle) && self.leg_mass_fraction != 0.0 {
            return Err(ParamError::OutOfRange("leg_mass_fraction"));
        }
        if self.total_mass * self.gravity / self.leg_stiffness >= self.rest_length_max {
            return Err(ParamError::StaticDeflectionTooLarge);
        }
        Ok(())
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.hip_width
    }

    pub fn torso_mass(&self) -> f64 {
        (1.0 - self.leg_mass_fraction) * self.total_mass
    }

    /// Mass of one leg.
    pub fn leg_mass(&self) -> f64 {
        0.5 * self.leg_mass_fraction * self.total_mass
    }

    /// Torso roll inertia about its own center of mass.
    pub fn torso_inertia(&self) -> f64 {
        match self.torso_radius_of_gyration {
            Some(r) => self.torso_mass() * r * r,
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedQuantities {
    /// b = 2 * zeta * sqrt(k m) [N s/m].
    pub damping_coeff: f64,
    /// omega_n = sqrt(k/m) [rad/s].
    pub natural_frequency: f64,
    /// delta_l = m g / k [m].
    pub static_deflection: f64,
    /// l_eq = l0 - delta_l [m].
    pub effective_rest_length: f64,
    /// l = sqrt(l0^2 + rho^2), hip-to-foot diagonal at full extension [m].
    pub diag_leg_length: f64,
    /// omega_p = sqrt(g/l) [rad/s].
    pub pendulum_frequency: f64,
}

/// Joints a PD controller can act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Joint {
    StanceAnkle,
    StanceHip,
    SwingHip,
}

#[derive(Debug, Clone, Copy)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
    pub target_joint: Joint,
    /// Absolute angle setpoint [rad]; 0 = vertical leg / level pelvis.
    pub setpoint: f64,
}

impl PdGains {
    /// Derivative gain from a damping ratio against the body inertia seen
    /// by the joint at the nominal configuration.
    pub fn with_damping_ratio(kp: f64, zeta: f64, joint: Joint, params: &ModelParams) -> Result<PdGains, ParamError> {
        let inertia = joint_inertia(params, joint)?;
        Ok(PdGains {
            kp,
            kd: 2.0 * zeta * sqrt(kp * inertia),
            target_joint: joint,
            setpoint: 0.0,
        })
    }
}

/// Rotational inertia about a joint at the nominal upright configuration,
/// used to pick PD derivative gains.
pub fn joint_inertia(params: &ModelParams, joint: Joint) -> Result<f64, ParamError> {
    let derived = params.derive()?;
    let rho = params.half_width();
    let d = params.torso_offset;
    let lever_sq = match joint {
        Joint::StanceAnkle => {
            let h = derived.effective_rest_length + d;
            h * h + rho * rho
        }
        Joint::StanceHip => rho * rho + d * d,
        Joint::SwingHip => {
            let r = derived.effective_rest_length - params.leg_mass_offset;
            return Ok(params.leg_mass() * r * r);
        }
    };
    Ok(params.torso_mass() * lever_sq + params.torso_inertia())
}

/// Sampling ranges for random model generation (defaults mirror the
/// Monte Carlo study: m in [50,100] kg, k in [6,20] kN/m, l0 in
/// [0.7,1.2] m, omega_n in [8,20] rad/s).
#[derive(Debug, Clone, Copy)]
pub struct ParamRanges {
    pub kind: ModelKind,
    pub mass: (f64, f64),
    pub stiffness: (f64, f64),
    pub rest_length: (f64, f64),
    pub natural_frequency: (f64, f64),
    /// Hip width is drawn as w_min * factor with factor in this range,
    /// keeping every model strictly above the stability threshold width.
    pub width_factor: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> ParamRanges {
        ParamRanges {
            kind: ModelKind::FixedHip,
            mass: (50.0, 100.0),
            stiffness: (6_000.0, 20_000.0),
            rest_length: (0.7, 1.2),
            natural_frequency: (8.0, 20.0),
            width_factor: (1.5, 2.0),
        }
    }
}

/// Draw one model: omega_n and k uniform, m = k / omega_n^2 with
/// rejection resampling until the mass range is satisfied, hip width
/// strictly above the minimum-width prediction. Deterministic per seed.
pub fn random_model(ranges: &ParamRanges, rng_seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    loop {
        let omega_n = sample(&mut rng, ranges.natural_frequency);
        let k = sample(&mut rng, ranges.stiffness);
        let m = k / (omega_n * omega_n);
        if m < ranges.mass.0 || m > ranges.mass.1 {
            continue;
        }
        let l0 = sample(&mut rng, ranges.rest_length);
        let factor = sample(&mut rng, ranges.width_factor);
        let mut params = ModelParams::simplified(ranges.kind, m, k, l0, 0.0);
        if ranges.kind == ModelKind::Extended {
            params = ModelParams::extended(m, k, l0, 0.0);
        }
        let derived = match params.derive() {
            Ok(d) => d,
            Err(_) => continue,
        };
        let w_min = 4.0 * sqrt(derived.effective_rest_length) / omega_n;
        params.hip_width = w_min * factor;
        if params.validate().is_ok() {
            return params;
        }
    }
}

fn sample(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.gen_range(range.0..=range.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derive_textbook_values() {
        let p = ModelParams::simplified(ModelKind::FixedHip, 100.0, 10_000.0, 0.9, 0.36);
        let d = p.derive().unwrap();
        assert_relative_eq!(d.natural_frequency, 10.0, epsilon = 1e-12);
        assert_relative_eq!(d.damping_coeff, 200.0, epsilon = 1e-12);

        let p = ModelParams::simplified(ModelKind::FixedHip, 70.0, 12_000.0, 1.0, 0.30);
        let d = p.derive().unwrap();
        assert_relative_eq!(d.diag_leg_length, 1.0225f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(d.pendulum_frequency, 3.1147, epsilon = 1e-4);
        assert_relative_eq!(d.natural_frequency, 13.093, epsilon = 1e-3);

        let p = ModelParams::simplified(ModelKind::FixedHip, 80.0, 16_000.0, 0.9, 0.3);
        let d = p.derive().unwrap();
        assert_relative_eq!(d.static_deflection, 0.0490_5, epsilon = 1e-6);
        assert_relative_eq!(d.effective_rest_length, 0.850_95, epsilon = 1e-6);
    }

    #[test]
    fn derive_rejects_bottomed_out_spring() {
        let mut p = ModelParams::simplified(ModelKind::FixedHip, 100.0, 10_000.0, 0.9, 0.36);
        p.leg_stiffness = 900.0; // delta_l = 1.09 m > l0
        assert_eq!(p.derive(), Err(ParamError::StaticDeflectionTooLarge));
    }

    #[test]
    fn derive_scale_consistency() {
        let p = ModelParams::simplified(ModelKind::FixedHip, 80.0, 12_800.0, 0.9, 0.36);
        let mut q = p;
        q.total_mass *= 3.7;
        q.leg_stiffness *= 3.7;
        let (dp, dq) = (p.derive().unwrap(), q.derive().unwrap());
        assert_relative_eq!(dp.natural_frequency, dq.natural_frequency, epsilon = 1e-12);
        assert_relative_eq!(dp.pendulum_frequency, dq.pendulum_frequency, epsilon = 1e-12);
    }

    #[test]
    fn random_model_respects_ranges_and_width() {
        let ranges = ParamRanges::default();
        for seed in 0..200 {
            let p = random_model(&ranges, seed);
            let d = p.derive().unwrap();
            assert!(p.total_mass >= 50.0 && p.total_mass <= 100.0);
            assert!(p.leg_stiffness >= 6_000.0 && p.leg_stiffness <= 20_000.0);
            assert!(p.rest_length_max >= 0.7 && p.rest_length_max <= 1.2);
            assert!(d.natural_frequency >= 8.0 && d.natural_frequency <= 20.0);
            let w_min = 4.0 * d.effective_rest_length.sqrt() / d.natural_frequency;
            assert!(p.hip_width > w_min, "seed {seed}: w={} w_min={}", p.hip_width, w_min);
            p.validate().unwrap();
        }
    }

    #[test]
    fn random_model_degenerate_ranges() {
        let ranges = ParamRanges {
            kind: ModelKind::FixedHip,
            mass: (50.0, 100.0),
            stiffness: (10_000.0, 10_000.0),
            rest_length: (0.9, 0.9),
            natural_frequency: (10.0, 10.0),
            width_factor: (1.5, 1.5),
        };
        let p = random_model(&ranges, 0);
        assert_relative_eq!(p.total_mass, 100.0, epsilon = 1e-12);
        assert_relative_eq!(p.leg_stiffness, 10_000.0, epsilon = 1e-12);
        assert_relative_eq!(p.rest_length_max, 0.9, epsilon = 1e-12);
    }

    #[test]
    fn random_model_deterministic() {
        let ranges = ParamRanges::default();
        for seed in [0u64, 7, 123_456] {
            let a = random_model(&ranges, seed);
            let b = random_model(&ranges, seed);
            assert_eq!(a.total_mass.to_bits(), b.total_mass.to_bits());
            assert_eq!(a.leg_stiffness.to_bits(), b.leg_stiffness.to_bits());
            assert_eq!(a.rest_length_max.to_bits(), b.rest_length_max.to_bits());
            assert_eq!(a.hip_width.to_bits(), b.hip_width.to_bits());
        }
    }

    #[test]
    fn pd_gain_damping_convention() {
        let p = ModelParams::simplified(ModelKind::FixedHip, 80.0, 16_000.0, 0.9, 0.36);
        let g = PdGains::with_damping_ratio(150.0, 0.1, Joint::StanceAnkle, &p).unwrap();
        let i = joint_inertia(&p, Joint::StanceAnkle).unwrap();
        assert_relative_eq!(g.kd, 0.2 * (150.0 * i).sqrt(), epsilon = 1e-12);
        assert!(g.kd > 0.0);
    }
}
