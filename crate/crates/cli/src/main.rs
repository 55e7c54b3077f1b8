use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use latstab_cli::config::{load_config, Config};
use latstab_cli::manifest::ManifestBuilder;
use latstab_cli::run::{self, RunError, SweepParam};
use latstab_core::params::ParamRanges;

#[derive(Parser)]
#[command(name = "latstab", version, about = "Frontal-plane biped stability experiments")]
struct Cli {
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the hybrid dynamics and dump the trajectory as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Stride frequency [rad/s]; overrides the config file.
        #[arg(long)]
        freq: Option<f64>,
        #[arg(long, default_value_t = 20)]
        strides: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dump the neutral leg-length program over one stride.
    Profile {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        freq: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Search for a periodic orbit at one stride frequency.
    FindOrbit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        freq: Option<f64>,
    },
    /// Minimum stabilizing stride frequency for one model.
    MinFreq {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Minimum-frequency search along a one-parameter model sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: SweepParam,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 6)]
        steps: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Tight 0.01 rad/s boundary tolerance instead of 0.05.
        #[arg(long)]
        fine: bool,
    },
    /// Random-model Monte Carlo study with regression fits.
    Montecarlo {
        #[arg(long, default_value_t = 50)]
        models: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        fine: bool,
    },
    /// Closed-form predictions for one model, as a JSON record.
    Predict {
        #[arg(long)]
        config: PathBuf,
    },
    /// Replicate one figure's dataset.
    Figures {
        /// fig3..fig7, fig8a, fig8b, fig9a, fig9b, fig10, fig11.
        id: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        fine: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Three-model minimum-frequency comparison, passive or active.
    Compare {
        /// Extra model config files; the built-in five sets run when none given.
        #[arg(long)]
        config: Vec<PathBuf>,
        #[arg(long)]
        active: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        fine: bool,
    },
}

fn load(path: &PathBuf) -> Result<(Config, String), RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    let cfg = load_config(path).map_err(|e| RunError::Config(e.to_string()))?;
    Ok((cfg, text))
}

fn require_freq(cfg: &Config, flag: Option<f64>) -> Result<f64, RunError> {
    flag.or(cfg.stride_frequency).ok_or_else(|| {
        RunError::Config("no stride frequency: pass --freq or set stride_frequency".into())
    })
}

fn dispatch(cli: Cli) -> Result<(), RunError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| RunError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate { config, freq, strides, out, seed } => {
            let (cfg, text) = load(&config)?;
            let omega = require_freq(&cfg, freq)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("trajectory.csv");
            let term = run::trajectory_csv(&cfg.params, &cfg.gains, omega, strides, &path)?;
            let mut mf = ManifestBuilder::new("simulate");
            mf.config_snapshot(&text).output(&path);
            if let Some(seed) = seed {
                mf.seed(seed);
            }
            mf.write(&out, "simulate")?;
            println!("wrote {} (termination: {term:?})", path.display());
            Ok(())
        }
        Command::Profile { config, freq, out } => {
            let (cfg, text) = load(&config)?;
            let omega = require_freq(&cfg, freq)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("profile.csv");
            run::profile_csv(&cfg.params, omega, &path)?;
            ManifestBuilder::new("profile")
                .config_snapshot(&text)
                .output(&path)
                .write(&out, "profile")?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::FindOrbit { config, freq } => {
            let (cfg, _) = load(&config)?;
            let omega = require_freq(&cfg, freq)?;
            let record = run::find_orbit_record(&cfg.params, &cfg.gains, omega)?;
            println!("{record}");
            if record["converged"] == serde_json::json!(false) {
                return Err(RunError::Runtime("orbit search did not converge".into()));
            }
            Ok(())
        }
        Command::MinFreq { config, out } => {
            let (cfg, text) = load(&config)?;
            std::fs::create_dir_all(&out)?;
            let row = run::min_freq_row(&cfg.params, &cfg.gains, 0.01);
            let path = out.join("min_freq.csv");
            run::write_csv(&path, run::MIN_FREQ_HEADER, &[row.clone()])?;
            ManifestBuilder::new("min-freq")
                .config_snapshot(&text)
                .output(&path)
                .write(&out, "min_freq")?;
            println!("{}", run::MIN_FREQ_HEADER);
            println!("{row}");
            if row.ends_with("no_stable_frequency") || row.ends_with("search_failed") {
                return Err(RunError::Runtime("no stable stride frequency found".into()));
            }
            Ok(())
        }
        Command::Sweep { config, param, from, to, steps, out, fine } => {
            if steps < 2 || from >= to {
                return Err(RunError::Config("need from < to and steps >= 2".into()));
            }
            let (cfg, text) = load(&config)?;
            let values: Vec<f64> = (0..steps)
                .map(|i| from + (to - from) * i as f64 / (steps - 1) as f64)
                .collect();
            let models = run::sweep_models(&cfg.params, param, &values);
            let gains = cfg.gains.clone();
            let rows = run::sweep_rows(&models, &move |_| gains.clone(), if fine { 0.01 } else { 0.05 });
            std::fs::create_dir_all(&out)?;
            let path = out.join("sweep.csv");
            run::write_csv(&path, run::MIN_FREQ_HEADER, &rows)?;
            ManifestBuilder::new("sweep")
                .config_snapshot(&text)
                .output(&path)
                .write(&out, "sweep")?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Montecarlo { models, seed, out, fine } => {
            if models < 10 {
                return Err(RunError::Config("need at least 10 models".into()));
            }
            let mc = run::montecarlo_run(
                &ParamRanges::default(),
                models,
                seed,
                if fine { 0.01 } else { 0.05 },
            );
            std::fs::create_dir_all(&out)?;
            let records = out.join("montecarlo_records.csv");
            let fits = out.join("montecarlo_fit.csv");
            run::write_csv(&records, run::MC_RECORD_HEADER, &mc.record_rows)?;
            run::write_csv(&fits, run::FIT_HEADER, &mc.fit_rows)?;
            ManifestBuilder::new("montecarlo")
                .seed(seed)
                .output(&records)
                .output(&fits)
                .write(&out, "montecarlo")?;
            println!(
                "wrote {} and {} ({} failures)",
                records.display(),
                fits.display(),
                mc.outcome.failures
            );
            Ok(())
        }
        Command::Predict { config } => {
            let (cfg, _) = load(&config)?;
            println!("{}", run::predict_record(&cfg.params)?);
            Ok(())
        }
        Command::Figures { id, out, fine, seed } => {
            let outputs = run::run_figure(&id, &out, fine, seed, if fine { 0.01 } else { 0.05 })?;
            let mut mf = ManifestBuilder::new(&format!("figures {id}"));
            mf.seed(seed);
            for p in &outputs {
                mf.output(p);
                println!("wrote {}", p.display());
            }
            mf.write(&out, &id)?;
            Ok(())
        }
        Command::Compare { config, active, out, fine } => {
            let tol = if fine { 0.01 } else { 0.05 };
            let mut cells = Vec::new();
            if config.is_empty() {
                for (i, (m, k, l0)) in run::comparison_sets().into_iter().enumerate() {
                    for kind in [
                        latstab_core::params::ModelKind::FixedHip,
                        latstab_core::params::ModelKind::FixedAnkle,
                        latstab_core::params::ModelKind::Extended,
                    ] {
                        cells.push((i, run::comparison_params(m, k, l0, kind)));
                    }
                }
            } else {
                for (i, path) in config.iter().enumerate() {
                    let (cfg, _) = load(path)?;
                    cells.push((i, cfg.params));
                }
            }
            use rayon::prelude::*;
            let rows: Vec<String> = cells
                .par_iter()
                .map(|(i, p)| run::compare_cell(*i, p, active, tol))
                .collect();
            std::fs::create_dir_all(&out)?;
            let path = out.join(if active { "compare_active.csv" } else { "compare.csv" });
            run::write_csv(&path, run::COMPARE_HEADER, &rows)?;
            ManifestBuilder::new("compare").output(&path).write(&out, "compare")?;
            println!("{}", run::COMPARE_HEADER);
            for row in &rows {
                println!("{row}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ RunError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e @ RunError::Runtime(_)) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    }
}
