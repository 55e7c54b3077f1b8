//! Experiment drivers shared by the subcommands and the figure
//! replication bundles.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use latstab_core::analysis::{
    self, evaluate_model, montecarlo_models, montecarlo_outcome, McFailure, McSuccess,
};
use latstab_core::dynamics::{BipedSystem, HybridState, Phase};
use latstab_core::orbit::{default_guess, find_fixed_point, OrbitError};
use latstab_core::params::{Joint, ModelKind, ModelParams, ParamRanges, PdGains};
use latstab_core::profile::{LegIndex, StrideProfile};
use latstab_core::sim::{simulate_strides, IntegratorConfig, Termination};
use latstab_core::stability::{self, min_stride_frequency, MinFreqResult, StabilityError};
use nalgebra::DVector;
use rayon::prelude::*;

#[derive(Debug)]
pub enum RunError {
    /// Bad usage or configuration: exit code 2.
    Config(String),
    /// Failure during an otherwise valid run: exit code 3.
    Runtime(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config error: {m}"),
            RunError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> RunError {
        RunError::Runtime(e.to_string())
    }
}

/// Integrator settings used for all searches: tight enough that orbit
/// residuals at 1e-8 are meaningful.
pub fn search_cfg() -> IntegratorConfig {
    IntegratorConfig {
        rel_tol: 1e-10,
        abs_tol: 1e-12,
        event_tol: 1e-12,
        ..Default::default()
    }
}

pub fn build_system(
    params: &ModelParams,
    gains: &[PdGains],
    omega_s: f64,
) -> Result<BipedSystem, RunError> {
    let profile = StrideProfile::for_frequency(
        omega_s,
        params.rest_length_max,
        params.retraction_fraction * params.rest_length_max,
    );
    BipedSystem::new(*params, profile, gains.to_vec())
        .map_err(|e| RunError::Config(e.to_string()))
}

/// Quasi-static single-support start: stance leg vertical at its loaded
/// equilibrium length, swing leg hanging at rest, clock at the swing
/// leg's deepest retraction so its foot clears the ground.
pub fn standing_start(sys: &BipedSystem) -> HybridState {
    let n = sys.dof();
    // left leg swings during the first half-stride; put the clock at its
    // deepest neutral retraction
    let half = 0.5 * sys.profile.stride_time;
    let mut tau = 0.0;
    let mut ln_min = f64::INFINITY;
    for i in 0..=400 {
        let t = half * i as f64 / 400.0;
        let (ln, _) = sys.profile.neutral_length(t, LegIndex::Left);
        if ln < ln_min {
            ln_min = ln;
            tau = t;
        }
    }
    let mut q = DVector::zeros(n);
    q[0] = sys.derived.effective_rest_length;
    if n == 5 {
        // the swing spring only carries its own leg segment, in tension
        q[3] = ln_min + sys.params.leg_mass() * sys.params.gravity / sys.params.leg_stiffness;
    }
    let mut st = HybridState {
        q,
        q_dot: DVector::zeros(n),
        phase: Phase::SingleSupport { stance: LegIndex::Right },
        t: tau,
        foot_anchor: [None, None],
    };
    st.set_anchor(LegIndex::Right, Some(0.0));
    st
}

/// Swing-hip tracking gains used whenever the extended model runs
/// "passive": its legs have mass, so the swing leg needs a tracking
/// torque to stay vertical (kp at the low end of the hip
/// quasi-stiffness range, damping ratio 0.1).
pub fn extended_swing_gains(params: &ModelParams) -> Vec<PdGains> {
    vec![PdGains::with_damping_ratio(300.0, 0.1, Joint::SwingHip, params)
        .expect("valid params")]
}

/// Stance-joint PD set for the active-control study.
pub fn active_gains(params: &ModelParams) -> Vec<PdGains> {
    let g = |kp, joint| PdGains::with_damping_ratio(kp, 0.1, joint, params).expect("valid params");
    match params.kind {
        ModelKind::FixedHip => vec![g(150.0, Joint::StanceAnkle)],
        ModelKind::FixedAnkle => vec![g(300.0, Joint::StanceHip)],
        ModelKind::Extended => vec![
            g(150.0, Joint::StanceAnkle),
            g(300.0, Joint::StanceHip),
            g(500.0, Joint::SwingHip),
        ],
    }
}

/// Default passive gain set for a model kind.
pub fn passive_gains(params: &ModelParams) -> Vec<PdGains> {
    match params.kind {
        ModelKind::Extended => extended_swing_gains(params),
        _ => Vec::new(),
    }
}

/// Minimum-frequency search over a window around the predicted minimum.
/// Active systems stabilize far below the passive prediction, so their
/// window reaches much lower.
pub fn min_freq_search(
    params: &ModelParams,
    gains: &[PdGains],
    tol: f64,
) -> Result<MinFreqResult, StabilityError> {
    let d = params.derive().map_err(|_| StabilityError::NoStableFrequencyInRange)?;
    let pred = d.natural_frequency + d.pendulum_frequency;
    let sys = build_system(params, gains, pred)
        .map_err(|_| StabilityError::NoStableFrequencyInRange)?;
    let (lo, hi) = if gains.iter().any(|g| g.target_joint != Joint::SwingHip) {
        // stance-phase control can stabilize quasi-static stepping far below
        // the passive prediction, so the window floor sits near zero
        (0.02 * pred, 2.0 * pred)
    } else {
        stability::probe_range(&sys)
    };
    min_stride_frequency(&search_cfg(), &sys, lo, hi, tol)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::FixedHip => "fixed_hip",
        ModelKind::FixedAnkle => "fixed_ankle",
        ModelKind::Extended => "extended",
    }
}

fn phase_name(phase: Phase) -> String {
    match phase {
        Phase::SingleSupport { stance: LegIndex::Left } => "single_support_left".into(),
        Phase::SingleSupport { stance: LegIndex::Right } => "single_support_right".into(),
        Phase::DoubleSupport { trailing: LegIndex::Left } => "double_support_trailing_left".into(),
        Phase::DoubleSupport { trailing: LegIndex::Right } => "double_support_trailing_right".into(),
        Phase::Flight => "flight".into(),
    }
}

pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{header}")?;
    for row in rows {
        writeln!(f, "{row}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate / profile / find-orbit

pub fn trajectory_csv(
    params: &ModelParams,
    gains: &[PdGains],
    omega_s: f64,
    strides: usize,
    out: &Path,
) -> Result<Termination, RunError> {
    let sys = build_system(params, gains, omega_s)?;
    let n = sys.dof();
    let mut rows = Vec::new();
    {
        let sys_ref = &sys;
        let mut observer = |st: &HybridState| {
            let mut cols = vec![st.t.to_string(), phase_name(st.phase)];
            cols.extend(st.q.iter().map(|v| v.to_string()));
            cols.extend(st.q_dot.iter().map(|v| v.to_string()));
            cols.push(sys_ref.leg_force(st, LegIndex::Left).to_string());
            cols.push(sys_ref.leg_force(st, LegIndex::Right).to_string());
            cols.push(sys_ref.energy(st).to_string());
            rows.push(cols.join(","));
        };
        let start = standing_start(&sys);
        let run = simulate_strides(&search_cfg(), &sys, &start, strides, &mut observer)
            .map_err(|e| RunError::Runtime(e.to_string()))?;
        let term = run.termination;
        let mut header = vec!["t".to_string(), "phase".to_string()];
        header.extend((0..n).map(|i| format!("q{i}")));
        header.extend((0..n).map(|i| format!("q{i}_dot")));
        header.extend(["F_left".into(), "F_right".into(), "E_total".into()]);
        write_csv(out, &header.join(","), &rows)?;
        return Ok(term);
    }
}

pub fn profile_csv(params: &ModelParams, omega_s: f64, out: &Path) -> Result<(), RunError> {
    let profile = StrideProfile::for_frequency(
        omega_s,
        params.rest_length_max,
        params.retraction_fraction * params.rest_length_max,
    );
    let samples = 400;
    let rows: Vec<String> = (0..=samples)
        .map(|i| {
            let t = profile.stride_time * i as f64 / samples as f64;
            let (ll, lld) = profile.neutral_length(t, LegIndex::Left);
            let (lr, lrd) = profile.neutral_length(t, LegIndex::Right);
            format!("{t},{ll},{lld},{lr},{lrd}")
        })
        .collect();
    write_csv(out, "t,l_n_left,l_n_dot_left,l_n_right,l_n_dot_right", &rows)
}

/// JSON-lines record for the `find-orbit` subcommand.
pub fn find_orbit_record(
    params: &ModelParams,
    gains: &[PdGains],
    omega_s: f64,
) -> Result<serde_json::Value, RunError> {
    let sys = build_system(params, gains, omega_s)?;
    let result = find_fixed_point(&search_cfg(), &sys, &default_guess(&sys));
    let orbit = match result {
        Ok(o) => o,
        Err(OrbitError::NonConvergence(best)) => *best,
        Err(e) => return Err(RunError::Runtime(e.to_string())),
    };
    Ok(serde_json::json!({
        "omega_s": omega_s,
        "fixed_point": orbit.fixed_point.iter().copied().collect::<Vec<f64>>(),
        "residual": orbit.residual,
        "converged": orbit.converged,
        "symmetric": orbit.symmetric,
        "has_flight": orbit.has_flight,
        "iterations": orbit.iterations,
        "stride_time": orbit.stride_time,
    }))
}

// ---------------------------------------------------------------------------
// min-freq and sweeps

pub const MIN_FREQ_HEADER: &str = "kind,total_mass,leg_stiffness,rest_length_max,hip_width,\
r_gyr,omega_n,omega_p,omega_s_min,spectral_radius_at_min,bracket_lo,bracket_hi,status";

/// One CSV row of the `min-freq`/`sweep` schema.
pub fn min_freq_row(params: &ModelParams, gains: &[PdGains], tol: f64) -> String {
    let d = params.derive().expect("validated upstream");
    let (omega, sr, blo, bhi, status) = match min_freq_search(params, gains, tol) {
        Ok(res) => (
            Some(res.omega_s_min),
            Some(res.report_at_min.spectral_radius),
            Some(res.bracket.0),
            Some(res.bracket.1),
            "ok",
        ),
        Err(StabilityError::NoStableFrequencyInRange) => (None, None, None, None, "no_stable_frequency"),
        Err(_) => (None, None, None, None, "search_failed"),
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        kind_name(params.kind),
        params.total_mass,
        params.leg_stiffness,
        params.rest_length_max,
        params.hip_width,
        fmt_opt(params.torso_radius_of_gyration),
        d.natural_frequency,
        d.pendulum_frequency,
        fmt_opt(omega),
        fmt_opt(sr),
        fmt_opt(blo),
        fmt_opt(bhi),
        status
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Mass,
    Stiffness,
    HipWidth,
    RestLength,
}

impl std::str::FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<SweepParam, String> {
        match s {
            "mass" => Ok(SweepParam::Mass),
            "stiffness" => Ok(SweepParam::Stiffness),
            "hip-width" => Ok(SweepParam::HipWidth),
            "rest-length" => Ok(SweepParam::RestLength),
            _ => Err(format!("unknown sweep parameter: {s}")),
        }
    }
}

pub fn sweep_models(base: &ModelParams, param: SweepParam, values: &[f64]) -> Vec<ModelParams> {
    values
        .iter()
        .map(|&v| {
            let mut p = *base;
            match param {
                SweepParam::Mass => p.total_mass = v,
                SweepParam::Stiffness => p.leg_stiffness = v,
                SweepParam::HipWidth => p.hip_width = v,
                SweepParam::RestLength => p.rest_length_max = v,
            }
            p
        })
        .collect()
}

/// Evaluate many models in a parallel map; rows come back in input order.
pub fn sweep_rows(models: &[ModelParams], gains_for: &(dyn Fn(&ModelParams) -> Vec<PdGains> + Sync), tol: f64) -> Vec<String> {
    models
        .par_iter()
        .map(|p| min_freq_row(p, &gains_for(p), tol))
        .collect()
}

// ---------------------------------------------------------------------------
// monte carlo and predict

pub const MC_RECORD_HEADER: &str = "index,kind,total_mass,leg_stiffness,rest_length_max,\
hip_width,omega_n,omega_p,predicted,omega_s_min,spectral_radius,bracket_lo,bracket_hi,status";

pub struct McRun {
    pub outcome: latstab_core::analysis::McOutcome,
    pub record_rows: Vec<String>,
    pub fit_rows: Vec<String>,
}

pub fn montecarlo_run(ranges: &ParamRanges, n_models: usize, seed: u64, tol: f64) -> McRun {
    let cfg = search_cfg();
    let models = montecarlo_models(ranges, n_models, seed);
    let outcomes: Vec<Result<McSuccess, McFailure>> = models
        .par_iter()
        .map(|p| evaluate_model(&cfg, p, tol))
        .collect();
    let outcome = montecarlo_outcome(&models, outcomes);

    let record_rows = outcome
        .records
        .iter()
        .map(|r| {
            let (omega, sr, blo, bhi, status) = match &r.outcome {
                Ok(s) => (
                    Some(s.omega_s_min),
                    Some(s.spectral_radius),
                    Some(s.bracket.0),
                    Some(s.bracket.1),
                    "ok",
                ),
                Err(McFailure::InvalidParams) => (None, None, None, None, "invalid_params"),
                Err(McFailure::NoStableFrequency) => (None, None, None, None, "no_stable_frequency"),
                Err(McFailure::SearchFailed) => (None, None, None, None, "search_failed"),
            };
            format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.index,
                kind_name(r.params.kind),
                r.params.total_mass,
                r.params.leg_stiffness,
                r.params.rest_length_max,
                r.params.hip_width,
                r.omega_n,
                r.omega_p,
                r.predicted,
                fmt_opt(omega),
                fmt_opt(sr),
                fmt_opt(blo),
                fmt_opt(bhi),
                status
            )
        })
        .collect();

    let mut fit_rows = Vec::new();
    if let Some(fit) = &outcome.dimensionless_fit {
        fit_rows.push(format!(
            "omega_s_hat_vs_sqrt_k_hat,{},{},{},{},{}",
            fit.slope, fit.intercept, fit.r_squared, fit.residual_std, fit.n
        ));
    }
    if let Some(fit) = &outcome.natural_frequency_fit {
        fit_rows.push(format!(
            "omega_s_min_vs_omega_n,{},{},{},{},{}",
            fit.slope, fit.intercept, fit.r_squared, fit.residual_std, fit.n
        ));
    }
    McRun {
        outcome,
        record_rows,
        fit_rows,
    }
}

pub const FIT_HEADER: &str = "fit,slope,intercept,r_squared,residual_std,n";

pub fn predict_record(params: &ModelParams) -> Result<serde_json::Value, RunError> {
    let d = params.derive().map_err(|e| RunError::Config(e.to_string()))?;
    let w_min = analysis::predict_min_hip_width(params)
        .map_err(|e| RunError::Config(e.to_string()))?;
    let omega_min = analysis::predict_min_stride_frequency(params)
        .map_err(|e| RunError::Config(e.to_string()))?;
    let pt = analysis::DimensionlessPoint::new(params, omega_min)
        .map_err(|e| RunError::Config(e.to_string()))?;
    Ok(serde_json::json!({
        "kind": kind_name(params.kind),
        "omega_n": d.natural_frequency,
        "omega_p": d.pendulum_frequency,
        "effective_rest_length": d.effective_rest_length,
        "diag_leg_length": d.diag_leg_length,
        "predicted_min_stride_frequency": omega_min,
        "predicted_min_hip_width": w_min,
        "k_hat": pt.k_hat,
        "predicted_omega_s_hat": pt.omega_s_hat,
    }))
}

// ---------------------------------------------------------------------------
// model comparison (passive / active)

/// Five parameter sets spanning the study ranges, hip widths placed
/// comfortably above the width threshold for each.
pub fn comparison_sets() -> Vec<(f64, f64, f64)> {
    vec![
        (60.0, 9_600.0, 0.8),
        (70.0, 11_200.0, 0.9),
        (80.0, 12_800.0, 0.9),
        (90.0, 14_400.0, 1.0),
        (100.0, 16_000.0, 1.1),
    ]
}

pub fn comparison_params(m: f64, k: f64, l0: f64, kind: ModelKind) -> ModelParams {
    let mut p = match kind {
        ModelKind::Extended => ModelParams::extended(m, k, l0, 0.1),
        _ => ModelParams::simplified(kind, m, k, l0, 0.1),
    };
    let d = p.derive().expect("comparison sets are valid");
    // The fixed-ankle kind is only stable over a narrower, lower band of hip
    // widths than the other two (wide hips make the pelvis tip fast enough in
    // single support to unload the stance spring), so it gets a width below
    // the fixed-hip threshold while the others sit comfortably above it.
    let factor = match kind {
        ModelKind::FixedAnkle => 0.7,
        _ => 1.8,
    };
    p.hip_width = factor * 4.0 * d.effective_rest_length.sqrt() / d.natural_frequency;
    p
}

pub const COMPARE_HEADER: &str = "set,kind,control,total_mass,leg_stiffness,rest_length_max,\
hip_width,omega_s_min,spectral_radius_at_min,status";

/// One comparison cell; failures are reported inline, the run continues.
pub fn compare_cell(set: usize, params: &ModelParams, active: bool, tol: f64) -> String {
    let gains = if active { active_gains(params) } else { passive_gains(params) };
    let control = if active { "active" } else { "passive" };
    let (omega, sr, status) = match min_freq_search(params, &gains, tol) {
        Ok(res) => (
            Some(res.omega_s_min),
            Some(res.report_at_min.spectral_radius),
            "ok",
        ),
        Err(StabilityError::NoStableFrequencyInRange) => (None, None, "no_stable_frequency"),
        Err(_) => (None, None, "search_failed"),
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        set,
        kind_name(params.kind),
        control,
        params.total_mass,
        params.leg_stiffness,
        params.rest_length_max,
        params.hip_width,
        fmt_opt(omega),
        fmt_opt(sr),
        status
    )
}

// ---------------------------------------------------------------------------
// figure bundles

pub fn known_figures() -> &'static [&'static str] {
    &[
        "fig3", "fig4", "fig5", "fig6", "fig7", "fig8a", "fig8b", "fig9a", "fig9b", "fig10",
        "fig11",
    ]
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Baseline model for the single-parameter sweeps, hip width wide enough
/// that every point along the sweeps stays above the width threshold.
fn sweep_base(kind: ModelKind) -> ModelParams {
    ModelParams::simplified(kind, 80.0, 12_800.0, 0.9, 0.55)
}

pub fn run_figure(
    id: &str,
    out_dir: &Path,
    fine: bool,
    seed: u64,
    tol: f64,
) -> Result<Vec<PathBuf>, RunError> {
    std::fs::create_dir_all(out_dir)?;
    let both_kinds = [ModelKind::FixedHip, ModelKind::FixedAnkle];
    let mut outputs = Vec::new();
    let emit = |name: &str, header: &str, rows: Vec<String>| -> Result<PathBuf, RunError> {
        let path = out_dir.join(name);
        write_csv(&path, header, &rows)?;
        Ok(path)
    };
    match id {
        "fig3" => {
            // minimum stride frequency vs body mass, both simplified kinds
            let masses = linspace(50.0, 100.0, if fine { 11 } else { 6 });
            let mut rows = Vec::new();
            for kind in both_kinds {
                let models = sweep_models(&sweep_base(kind), SweepParam::Mass, &masses);
                rows.extend(sweep_rows(&models, &passive_gains, tol));
            }
            outputs.push(emit("fig3.csv", MIN_FREQ_HEADER, rows)?);
        }
        "fig4" => {
            // same mass sweep with and without torso roll inertia
            let masses = linspace(50.0, 100.0, if fine { 11 } else { 6 });
            let mut rows = Vec::new();
            for r_gyr in [None, Some(0.3)] {
                let mut base = sweep_base(ModelKind::FixedHip);
                base.torso_radius_of_gyration = r_gyr;
                let models = sweep_models(&base, SweepParam::Mass, &masses);
                rows.extend(sweep_rows(&models, &passive_gains, tol));
            }
            outputs.push(emit("fig4.csv", MIN_FREQ_HEADER, rows)?);
        }
        "fig5" => {
            // minimum stride frequency vs leg stiffness
            let ks = linspace(6_000.0, 20_000.0, if fine { 15 } else { 8 });
            let mut rows = Vec::new();
            for kind in both_kinds {
                let models = sweep_models(&sweep_base(kind), SweepParam::Stiffness, &ks);
                rows.extend(sweep_rows(&models, &passive_gains, tol));
            }
            outputs.push(emit("fig5.csv", MIN_FREQ_HEADER, rows)?);
        }
        "fig6" => {
            // hip width and resting length sweeps
            let widths = linspace(0.30, 0.70, if fine { 9 } else { 5 });
            let lengths = linspace(0.7, 1.2, if fine { 11 } else { 6 });
            let mut width_rows = Vec::new();
            let mut length_rows = Vec::new();
            for kind in both_kinds {
                let wm = sweep_models(&sweep_base(kind), SweepParam::HipWidth, &widths);
                width_rows.extend(sweep_rows(&wm, &passive_gains, tol));
                let lm = sweep_models(&sweep_base(kind), SweepParam::RestLength, &lengths);
                length_rows.extend(sweep_rows(&lm, &passive_gains, tol));
            }
            outputs.push(emit("fig6_width.csv", MIN_FREQ_HEADER, width_rows)?);
            outputs.push(emit("fig6_rest_length.csv", MIN_FREQ_HEADER, length_rows)?);
        }
        "fig7" => {
            let (points, fit) = width_law_points(fine, tol)?;
            let rows = points
                .iter()
                .map(|p| {
                    format!(
                        "{},{},{},{},{},{}",
                        p.l0, p.omega_n, p.w_min_simulated, p.w_min_predicted, p.rho_min,
                        p.sqrt_leq_over_rho
                    )
                })
                .collect();
            outputs.push(emit(
                "fig7_points.csv",
                "l0,omega_n,w_min_simulated,w_min_predicted,rho_min,sqrt_leq_over_rho",
                rows,
            )?);
            if let Some(fit) = fit {
                outputs.push(emit(
                    "fig7_fit.csv",
                    FIT_HEADER,
                    vec![format!(
                        "sqrt_leq_over_rho_vs_omega_n,{},{},{},{},{}",
                        fit.slope, fit.intercept, fit.r_squared, fit.residual_std, fit.n
                    )],
                )?);
            }
        }
        "fig8a" | "fig9a" => {
            let n = if fine { 50 } else { 15 };
            let mc = montecarlo_run(&ParamRanges::default(), n, seed, tol);
            let name = if id == "fig8a" { "fig8a" } else { "fig9a" };
            outputs.push(emit(&format!("{name}_records.csv"), MC_RECORD_HEADER, mc.record_rows)?);
            outputs.push(emit(&format!("{name}_fit.csv"), FIT_HEADER, mc.fit_rows)?);
        }
        "fig8b" => {
            // pairs sharing omega_n but different (m, k)
            let mut rows = Vec::new();
            for (m, k) in [(50.0, 8_000.0), (100.0, 16_000.0), (60.0, 13_500.0), (80.0, 18_000.0)]
            {
                let p = ModelParams::simplified(ModelKind::FixedHip, m, k, 0.9, 0.55);
                rows.push(min_freq_row(&p, &[], tol));
            }
            outputs.push(emit("fig8b.csv", MIN_FREQ_HEADER, rows)?);
        }
        "fig9b" => {
            // predicted vs simulated minimum for 10 random models
            let mc = montecarlo_run(&ParamRanges::default(), 10, seed, tol);
            outputs.push(emit("fig9b_records.csv", MC_RECORD_HEADER, mc.record_rows)?);
        }
        "fig10" | "fig11" => {
            let active = id == "fig11";
            let kinds = [ModelKind::FixedHip, ModelKind::FixedAnkle, ModelKind::Extended];
            let cells: Vec<(usize, ModelParams)> = comparison_sets()
                .iter()
                .enumerate()
                .flat_map(|(i, &(m, k, l0))| {
                    kinds.map(|kind| (i, comparison_params(m, k, l0, kind)))
                })
                .collect();
            let rows: Vec<String> = cells
                .par_iter()
                .map(|(i, p)| compare_cell(*i, p, active, tol))
                .collect();
            outputs.push(emit(&format!("{id}.csv"), COMPARE_HEADER, rows)?);
        }
        _ => {
            return Err(RunError::Config(format!(
                "unknown figure id: {id} (known: {})",
                known_figures().join(", ")
            )))
        }
    }
    Ok(outputs)
}

// ---------------------------------------------------------------------------
// width-law boundary points (fig7 and the hip-width acceptance check)

pub struct WidthLawPoint {
    pub l0: f64,
    pub omega_n: f64,
    pub w_min_simulated: f64,
    pub w_min_predicted: f64,
    pub rho_min: f64,
    pub sqrt_leq_over_rho: f64,
}

pub fn width_law_points(
    fine: bool,
    tol: f64,
) -> Result<(Vec<WidthLawPoint>, Option<latstab_core::analysis::RegressionFit>), RunError> {
    let l0s = if fine {
        vec![0.7, 0.8, 0.9, 1.0, 1.1, 1.2]
    } else {
        vec![0.7, 0.95, 1.2]
    };
    let omega_ns = if fine { vec![12.0, 14.0, 16.0] } else { vec![12.0, 16.0] };
    let grid: Vec<(f64, f64)> = l0s
        .iter()
        .flat_map(|&l0| omega_ns.iter().map(move |&on| (l0, on)))
        .collect();
    let cfg = search_cfg();
    let points: Vec<WidthLawPoint> = grid
        .par_iter()
        .filter_map(|&(l0, omega_n)| {
            // fix m, choose k for the target natural frequency
            let m = 80.0;
            let k = m * omega_n * omega_n;
            let params = ModelParams::simplified(ModelKind::FixedHip, m, k, l0, 0.1);
            let d = params.derive().ok()?;
            let w_pred = 4.0 * d.effective_rest_length.sqrt() / omega_n;
            let sys = build_system(&params, &[], omega_n).ok()?;
            let w_min = latstab_core::stability::min_hip_width(
                &cfg,
                &sys,
                0.9 * w_pred,
                2.2 * w_pred,
                tol.max(2e-3),
            )
            .ok()?;
            let rho_min = 0.5 * w_min;
            Some(WidthLawPoint {
                l0,
                omega_n,
                w_min_simulated: w_min,
                w_min_predicted: w_pred,
                rho_min,
                sqrt_leq_over_rho: d.effective_rest_length.sqrt() / rho_min,
            })
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.omega_n).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.sqrt_leq_over_rho).collect();
    Ok((points, analysis::ols_fit(&xs, &ys).ok()))
}
