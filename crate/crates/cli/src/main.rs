//! `hyleg`: command-line entry point for the compliance lab.
//!
//! Exit codes: 0 on completion, 2 for invalid input, 1 for runtime failures.

mod jobs;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hyleg_core::{
    bundled_case, bundled_cases, ComplianceSplit, ContactMode, ContactModel, DropConfig,
    PendulumParams, QuadrupedConfig, SpringMode, SweepGrid, VerdictThresholds,
};
use serde::de::DeserializeOwned;

use jobs::{DelayScan, Job, StepMethod};
use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "hyleg",
    version,
    about = "Hybrid passive/active knee compliance under sensorimotor delay"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sensorimotor delay predicted from body mass.
    DelayLaw {
        /// Body mass [kg].
        #[arg(long)]
        mass: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Closed-loop poles of the delayed pendulum.
    #[command(allow_negative_numbers = true)]
    Poles {
        #[command(flatten)]
        pendulum: PendulumArgs,
        /// Also scan the dominant pole over delays up to this value [ms].
        #[arg(long)]
        scan_max_ms: Option<f64>,
        /// Delay spacing of the scan [ms].
        #[arg(long, default_value_t = 1.0)]
        scan_step_ms: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Step response of the delayed pendulum.
    #[command(allow_negative_numbers = true)]
    Step {
        #[command(flatten)]
        pendulum: PendulumArgs,
        /// Step in the commanded angle [rad].
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        /// Simulated time [s].
        #[arg(long, default_value_t = 2.0)]
        t_end: f64,
        /// Integration step [s].
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, value_enum, default_value_t = StepMethod::Dde)]
        method: StepMethod,
        #[command(flatten)]
        out: OutArg,
    },
    /// Single-leg drop landing.
    #[command(allow_negative_numbers = true)]
    Drop {
        #[command(flatten)]
        leg: LegArgs,
        /// Release height of the hip [m].
        #[arg(long)]
        height: Option<f64>,
        /// Control update frequency [Hz].
        #[arg(long)]
        freq: Option<f64>,
        /// Duty cycle, fraction of the control period in (0, 1].
        #[arg(long)]
        duty: Option<f64>,
        /// Sensorimotor delay [ms].
        #[arg(long)]
        delay_ms: Option<f64>,
        /// Passive compliance ratio in [0, 1].
        #[arg(long)]
        lambda: Option<f64>,
        /// Total knee stiffness [N·m/rad].
        #[arg(long)]
        k_total: Option<f64>,
        /// Body mass carried by the leg [kg].
        #[arg(long)]
        mass: Option<f64>,
        /// Simulated time [s].
        #[arg(long)]
        duration: Option<f64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Quadruped landing scenarios; all seven when no case is given.
    #[command(allow_negative_numbers = true)]
    Quadruped {
        /// Scenario number, 1-7.
        #[arg(long)]
        case: Option<u32>,
        /// Override the drop height of the selected case [m].
        #[arg(long, requires = "case")]
        height: Option<f64>,
        #[command(flatten)]
        leg: LegArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Viability sweep over λ, delay, frequency and duty cycle.
    Sweep {
        /// JSON grid with any of the arrays `lambda`, `delay_ms`, `freq_hz`, `duty`.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[command(flatten)]
        leg: LegArgs,
        /// Output directory for the CSV, SVG panels and summary.
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalised mean-square difference of two trajectory CSVs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Normalisation length [m].
        #[arg(long, default_value_t = 0.32)]
        norm: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Re-run the job recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Output directory [default: the manifest's directory].
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct OutArg {
    /// Output directory; a manifest is written next to the results.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PendulumArgs {
    /// Passive compliance ratio in [0, 1].
    #[arg(long)]
    lambda: Option<f64>,
    /// Sensorimotor delay [ms].
    #[arg(long)]
    delay_ms: Option<f64>,
    /// Total joint stiffness [N·m/rad].
    #[arg(long)]
    k_total: Option<f64>,
    /// Pendulum mass [kg].
    #[arg(long)]
    mass: Option<f64>,
    /// Joint damping [N·m·s/rad].
    #[arg(long)]
    damping: Option<f64>,
    /// Distance from the joint to the centre of mass [m].
    #[arg(long)]
    com_distance: Option<f64>,
    /// Moment of inertia about the joint [kg·m²]; defaults to m·l².
    #[arg(long)]
    inertia: Option<f64>,
    /// JSON file with pendulum parameters; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ContactArg {
    /// Foot pinned while the leg pushes on the ground.
    Pinned,
    /// Spring-damper ground.
    Penalty,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpringArg {
    OneDirectional,
    Linear,
}

#[derive(Args)]
struct LegArgs {
    /// JSON file with drop parameters; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    contact: Option<ContactArg>,
    #[arg(long, value_enum)]
    spring: Option<SpringArg>,
    /// Settling band as a fraction of the drop-to-final excursion.
    #[arg(long, default_value_t = 0.05)]
    band: f64,
}

enum Failure {
    Usage(String),
    Core(hyleg_core::Error),
}

impl From<hyleg_core::Error> for Failure {
    fn from(e: hyleg_core::Error) -> Self {
        Failure::Core(e)
    }
}

fn usage(flag: &str, value: impl std::fmt::Display, why: &str) -> Failure {
    Failure::Usage(format!("{flag} {value}: {why}"))
}

fn check(
    flag: &str,
    value: Option<f64>,
    ok: impl Fn(f64) -> bool,
    why: &str,
) -> Result<(), Failure> {
    match value {
        Some(v) if !(v.is_finite() && ok(v)) => Err(usage(flag, v, why)),
        _ => Ok(()),
    }
}

fn positive(flag: &str, value: Option<f64>) -> Result<(), Failure> {
    check(flag, value, |v| v > 0.0, "must be positive")
}

fn load_json<T: DeserializeOwned>(flag: &str, path: &Path) -> Result<T, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| usage(flag, path.display(), &e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| usage(flag, path.display(), &e.to_string()))
}

fn pendulum_params(a: &PendulumArgs) -> Result<PendulumParams, Failure> {
    check(
        "--lambda",
        a.lambda,
        |v| (0.0..=1.0).contains(&v),
        "must lie in [0, 1]",
    )?;
    check(
        "--delay-ms",
        a.delay_ms,
        |v| v >= 0.0,
        "must be non-negative",
    )?;
    positive("--k-total", a.k_total)?;
    check("--mass", a.mass, |v| v >= 0.0, "must be non-negative")?;
    check("--damping", a.damping, |v| v >= 0.0, "must be non-negative")?;
    check(
        "--com-distance",
        a.com_distance,
        |v| v >= 0.0,
        "must be non-negative",
    )?;
    positive("--inertia", a.inertia)?;

    let mut p = match &a.config {
        Some(path) => load_json::<PendulumParams>("--config", path)?,
        None => PendulumParams::reference(1.0, 0.0)?,
    };
    if let Some(m) = a.mass {
        p.mass = m;
    }
    if let Some(l) = a.com_distance {
        p.com_distance = l;
    }
    if a.mass.is_some() || a.com_distance.is_some() {
        p.inertia = p.mass * p.com_distance * p.com_distance;
    }
    if let Some(i) = a.inertia {
        p.inertia = i;
    }
    if let Some(b) = a.damping {
        p.damping = b;
    }
    let lambda = a.lambda.unwrap_or(p.split.lambda_passive());
    let k = a.k_total.unwrap_or(p.split.k_total());
    p.split = ComplianceSplit::new(k, lambda)?;
    if let Some(d) = a.delay_ms {
        p.delay = d * 1e-3;
    }
    if p.inertia <= 0.0 {
        return Err(usage(
            "--inertia",
            p.inertia,
            "must be positive (set --mass and --com-distance, or --inertia)",
        ));
    }
    p.validate()?;
    Ok(p)
}

fn base_drop(leg: &LegArgs) -> Result<DropConfig, Failure> {
    check(
        "--band",
        Some(leg.band),
        |v| v > 0.0 && v < 1.0,
        "must lie in (0, 1)",
    )?;
    let mut cfg = match &leg.config {
        Some(path) => load_json::<DropConfig>("--config", path)?,
        None => DropConfig::default(),
    };
    match leg.contact {
        Some(ContactArg::Pinned) => cfg.contact = ContactMode::Pinned,
        Some(ContactArg::Penalty) if !matches!(cfg.contact, ContactMode::Penalty(_)) => {
            cfg.contact = ContactMode::Penalty(ContactModel::default());
        }
        Some(ContactArg::Penalty) => {}
        None => {}
    }
    match leg.spring {
        Some(SpringArg::OneDirectional) => cfg.spring = SpringMode::OneDirectional,
        Some(SpringArg::Linear) => cfg.spring = SpringMode::Linear,
        None => {}
    }
    Ok(cfg)
}

fn thresholds(leg: &LegArgs) -> VerdictThresholds {
    VerdictThresholds::with_band(leg.band)
}

/// The control period must be a whole number of physics steps.
fn check_frequency(freq: f64, physics_dt: f64) -> Result<(), Failure> {
    let steps = 1.0 / (freq * physics_dt);
    if (steps - steps.round()).abs() > 1e-9 || steps.round() < 1.0 {
        return Err(usage(
            "--freq",
            freq,
            &format!(
                "control period must be a whole multiple of the {} s physics step",
                physics_dt
            ),
        ));
    }
    Ok(())
}

fn build(command: Command) -> Result<(Job, Option<PathBuf>), Failure> {
    Ok(match command {
        Command::DelayLaw { mass, out } => {
            positive("--mass", Some(mass))?;
            (Job::DelayLaw { mass }, out.out)
        }
        Command::Poles {
            pendulum,
            scan_max_ms,
            scan_step_ms,
            out,
        } => {
            check(
                "--scan-max-ms",
                scan_max_ms,
                |v| v >= 0.0,
                "must be non-negative",
            )?;
            positive("--scan-step-ms", Some(scan_step_ms))?;
            let scan = scan_max_ms.map(|max_ms| DelayScan {
                max_ms,
                step_ms: scan_step_ms,
            });
            (
                Job::Poles {
                    params: pendulum_params(&pendulum)?,
                    scan,
                },
                out.out,
            )
        }
        Command::Step {
            pendulum,
            step,
            t_end,
            dt,
            method,
            out,
        } => {
            check("--step", Some(step), |v| v != 0.0, "must be non-zero")?;
            positive("--t-end", Some(t_end))?;
            positive("--dt", Some(dt))?;
            let params = pendulum_params(&pendulum)?;
            if method == StepMethod::Dde && params.delay > 0.0 && dt > params.delay {
                return Err(usage("--dt", dt, "must not exceed the delay"));
            }
            (
                Job::Step {
                    params,
                    step,
                    t_end,
                    dt,
                    method,
                },
                out.out,
            )
        }
        Command::Drop {
            leg,
            height,
            freq,
            duty,
            delay_ms,
            lambda,
            k_total,
            mass,
            duration,
            out,
        } => {
            check(
                "--lambda",
                lambda,
                |v| (0.0..=1.0).contains(&v),
                "must lie in [0, 1]",
            )?;
            check("--delay-ms", delay_ms, |v| v >= 0.0, "must be non-negative")?;
            positive("--freq", freq)?;
            check(
                "--duty",
                duty,
                |v| v > 0.0 && v <= 1.0,
                "must lie in (0, 1]",
            )?;
            positive("--height", height)?;
            positive("--k-total", k_total)?;
            positive("--mass", mass)?;
            positive("--duration", duration)?;
            let mut cfg = base_drop(&leg)?;
            if let Some(h) = height {
                cfg.drop_height = h;
            }
            if let Some(f) = freq {
                check_frequency(f, cfg.physics_dt)?;
                cfg.schedule.frequency = f;
            }
            if let Some(d) = duty {
                cfg.schedule.duty_cycle = d;
            }
            if let Some(d) = delay_ms {
                cfg.schedule.delay = d * 1e-3;
            }
            cfg.split = ComplianceSplit::new(
                k_total.unwrap_or(cfg.split.k_total()),
                lambda.unwrap_or(cfg.split.lambda_passive()),
            )?;
            if let Some(m) = mass {
                cfg.body.mass = m;
            }
            if let Some(t) = duration {
                cfg.duration = t;
            }
            cfg.validate()?;
            (
                Job::Drop {
                    config: cfg,
                    thresholds: thresholds(&leg),
                },
                out.out,
            )
        }
        Command::Quadruped {
            case,
            height,
            leg,
            out,
        } => {
            positive("--height", height)?;
            let base = base_drop(&leg)?;
            let selected = match case {
                Some(n) => {
                    vec![bundled_case(n).map_err(|_| usage("--case", n, "must be one of 1-7"))?]
                }
                None => bundled_cases(),
            };
            let cases = selected
                .into_iter()
                .map(|mut c| {
                    if let Some(h) = height {
                        c.drop_height = h;
                    }
                    let mut q = QuadrupedConfig::new(c);
                    q.leg = base;
                    q.drop_config()?;
                    Ok(q)
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            (
                Job::Quadruped {
                    cases,
                    thresholds: thresholds(&leg),
                },
                out.out,
            )
        }
        Command::Sweep { grid, leg, out } => {
            let grid = match grid {
                Some(path) => load_json::<SweepGrid>("--grid", &path)?,
                None => SweepGrid::default(),
            };
            grid.validate()
                .map_err(|e| usage("--grid", "", &e.to_string()))?;
            let base = base_drop(&leg)?;
            for &f in &grid.freq_hz {
                check_frequency(f, base.physics_dt).map_err(|_| {
                    usage(
                        "--grid",
                        format!("freq_hz {f}"),
                        "control period must be a whole number of physics steps",
                    )
                })?;
            }
            (
                Job::Sweep {
                    grid,
                    base,
                    thresholds: thresholds(&leg),
                },
                Some(out),
            )
        }
        Command::Compare { a, b, norm, out } => {
            positive("--norm", Some(norm))?;
            for path in [&a, &b] {
                if !path.is_file() {
                    return Err(usage("compare", path.display(), "no such trajectory file"));
                }
            }
            (Job::Compare { a, b, norm }, out.out)
        }
        Command::Replay { manifest, out } => {
            let m = RunManifest::load(&manifest)
                .map_err(|e| usage("manifest", manifest.display(), &e.to_string()))?;
            let dir = out.or_else(|| manifest.parent().map(Path::to_path_buf));
            (m.params, dir)
        }
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (job, out) = build(cli.command)?;
    let written = job.execute(out.as_deref())?;
    if let Some(dir) = out {
        RunManifest::new(&job, &dir, &written).save(&dir)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_invalid_input() { 2 } else { 1 })
        }
    }
}
