//! Fully resolved runs. A `Job` carries every parameter that affects the
//! output, so the same value both drives execution and is stored in the
//! run manifest for replay.

use std::io::Write;
use std::path::{Path, PathBuf};

use hyleg_core::metrics::{band_sensitivity, settle_metrics_with};
use hyleg_core::pendulum::{self, pade_step_response, step_response, StepClass};
use hyleg_core::quadruped::QuadrupedRun;
use hyleg_core::sweep::{emit_map, run_sweep_with, workers_from_env};
use hyleg_core::trajectory::sig6;
use hyleg_core::{
    biological_delay, run_drop, run_quadruped_table, trajectory_mse, DropConfig, Error,
    PendulumParams, QuadrupedConfig, Result, SweepGrid, Trajectory, VerdictThresholds,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StepMethod {
    /// Direct integration of the delay equation.
    Dde,
    /// Third-order Padé approximation of the delay.
    Pade,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayScan {
    pub max_ms: f64,
    pub step_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    DelayLaw {
        mass: f64,
    },
    Poles {
        params: PendulumParams,
        scan: Option<DelayScan>,
    },
    Step {
        params: PendulumParams,
        step: f64,
        t_end: f64,
        dt: f64,
        method: StepMethod,
    },
    Drop {
        config: DropConfig,
        thresholds: VerdictThresholds,
    },
    Quadruped {
        cases: Vec<QuadrupedConfig>,
        thresholds: VerdictThresholds,
    },
    Sweep {
        grid: SweepGrid,
        base: DropConfig,
        thresholds: VerdictThresholds,
    },
    Compare {
        a: PathBuf,
        b: PathBuf,
        norm: f64,
    },
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::DelayLaw { .. } => "delay-law",
            Job::Poles { .. } => "poles",
            Job::Step { .. } => "step",
            Job::Drop { .. } => "drop",
            Job::Quadruped { .. } => "quadruped",
            Job::Sweep { .. } => "sweep",
            Job::Compare { .. } => "compare",
        }
    }

    /// Runs the job. Files go to `out` when given; otherwise the main
    /// table is written to stdout. Returns the files written.
    pub fn execute(&self, out: Option<&Path>) -> Result<Vec<PathBuf>> {
        let mut files = Files::new(out)?;
        match self {
            Job::DelayLaw { mass } => {
                let delay = biological_delay(*mass)?;
                println!("{:.1} ms", delay * 1e3);
                files.json(
                    "delay.json",
                    &serde_json::json!({ "mass_kg": mass, "delay_s": delay }),
                )?;
            }
            Job::Poles { params, scan } => poles(params, scan.as_ref(), &mut files)?,
            Job::Step {
                params,
                step,
                t_end,
                dt,
                method,
            } => {
                let resp = match method {
                    StepMethod::Dde => step_response(params, *step, *t_end, *dt)?,
                    StepMethod::Pade => pade_step_response(params, *step, *t_end, *dt)?,
                };
                let mut csv = String::from("t,theta\n");
                for (t, th) in resp.t.iter().zip(&resp.theta) {
                    csv.push_str(&format!("{},{}\n", sig6(*t), sig6(*th)));
                }
                files.primary("step.csv", csv.as_bytes())?;
                let class = resp.classify();
                files.note(&match class {
                    StepClass::Unstable => "class: unstable".to_string(),
                    StepClass::Oscillating => "class: oscillating".to_string(),
                    StepClass::Settled { settling_time } => {
                        format!("class: settled (settling time {} s)", sig6(settling_time))
                    }
                });
                files.json("step.json", &class)?;
            }
            Job::Drop { config, thresholds } => {
                let traj = run_drop(config)?;
                let verdict = settle_metrics_with(&traj, thresholds)?;
                let mut csv = Vec::new();
                traj.write_csv(&mut csv)
                    .map_err(|e| Error::io("<buffer>", e))?;
                files.primary("trajectory.csv", &csv)?;
                files.note(&format!(
                    "verdict: {} ({}; settling {} s, final height {} m)",
                    if verdict.viable { "viable" } else { "failed" },
                    verdict.failure_reason,
                    verdict
                        .settling_time
                        .map(sig6)
                        .unwrap_or_else(|| "n/a".into()),
                    sig6(verdict.final_height)
                ));
                let sensitivity = match traj.status.is_failure() {
                    true => Vec::new(),
                    false => band_sensitivity(&traj, &[0.02, 0.05, 0.1])?,
                };
                files.json(
                    "verdict.json",
                    &serde_json::json!({
                        "verdict": verdict,
                        "touchdown_s": traj.touchdown,
                        "status": traj.status,
                        "band_sensitivity": sensitivity
                            .iter()
                            .map(|(f, s)| serde_json::json!({ "band_fraction": f, "settling_s": s }))
                            .collect::<Vec<_>>(),
                    }),
                )?;
            }
            Job::Quadruped { cases, thresholds } => quadruped(cases, thresholds, &mut files)?,
            Job::Sweep {
                grid,
                base,
                thresholds,
            } => {
                let map = run_sweep_with(grid, base, workers_from_env()?, thresholds)?;
                let summary = map.summary();
                for p in &summary.panels {
                    files.note(&format!(
                        "{:>6} Hz  duty {:>4}  viable {:>4} / {}",
                        sig6(p.freq_hz),
                        sig6(p.duty),
                        p.viable,
                        p.cells
                    ));
                }
                files.note(&format!(
                    "total viable {} / {}",
                    summary.viable, summary.cells
                ));
                match files.dir() {
                    Some(dir) => files.written.extend(emit_map(&map, dir, thresholds)?),
                    None => {
                        let mut csv = Vec::new();
                        map.write_csv(&mut csv)
                            .map_err(|e| Error::io("<buffer>", e))?;
                        std::io::stdout()
                            .write_all(&csv)
                            .map_err(|e| Error::io("<stdout>", e))?;
                    }
                }
            }
            Job::Compare { a, b, norm } => {
                let ta = Trajectory::load_csv(a)?;
                let tb = Trajectory::load_csv(b)?;
                let mse = trajectory_mse(&ta, &tb, *norm)?;
                println!("{}", sig6(mse));
                files.json(
                    "compare.json",
                    &serde_json::json!({ "normalized_mse": mse, "normalization_m": norm }),
                )?;
            }
        }
        Ok(files.written)
    }
}

fn poles(params: &PendulumParams, scan: Option<&DelayScan>, files: &mut Files) -> Result<()> {
    let set = pendulum::poles(params)?;
    println!(
        "dominant pole: {} {} {}i  ({})",
        sig6(set.dominant.re),
        if set.dominant.im < 0.0 { '-' } else { '+' },
        sig6(set.dominant.im.abs()),
        if set.is_stable() {
            "stable"
        } else {
            "unstable"
        }
    );
    let mut csv = String::from("re,im\n");
    for r in &set.roots {
        csv.push_str(&format!("{},{}\n", sig6(r.re), sig6(r.im)));
    }
    if files.dir().is_some() {
        files.write("poles.csv", csv.as_bytes())?;
    } else {
        print!("{csv}");
    }

    if let Some(scan) = scan {
        let mut table = String::from("delay_ms,dominant_re,dominant_im\n");
        let n = (scan.max_ms / scan.step_ms + 1e-9).floor() as usize;
        for k in 0..=n {
            let d = k as f64 * scan.step_ms;
            let s = pendulum::poles(&params.with_delay(d * 1e-3)?)?;
            table.push_str(&format!(
                "{},{},{}\n",
                sig6(d),
                sig6(s.dominant.re),
                sig6(s.dominant.im)
            ));
        }
        if files.dir().is_some() {
            files.write("delay_scan.csv", table.as_bytes())?;
        } else {
            print!("{table}");
        }
        match pendulum::critical_delay(params, scan.max_ms * 1e-3, scan.step_ms * 1e-3)? {
            Some(d) => println!("critical delay: {} ms", sig6(d * 1e3)),
            None => println!("critical delay: none up to {} ms", sig6(scan.max_ms)),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CaseReport<'a> {
    #[serde(flatten)]
    run: &'a QuadrupedRun,
    matches_expected: bool,
    trajectory: Option<String>,
}

fn quadruped(
    cases: &[QuadrupedConfig],
    thresholds: &VerdictThresholds,
    files: &mut Files,
) -> Result<()> {
    let mut runs = run_quadruped_table(cases)?;
    // The table runner uses default thresholds; re-judge if they differ.
    if *thresholds != VerdictThresholds::default() {
        for run in &mut runs {
            run.verdict = settle_metrics_with(&run.trajectory, thresholds)?;
            run.outcome = hyleg_core::Outcome::from_verdict(&run.verdict);
        }
    }
    println!("case  expected  simulated  settling_s  final_height_m");
    let mut reports = Vec::new();
    for run in &runs {
        println!(
            "{:>4}  {:<8}  {:<9}  {:>10}  {:>14}{}",
            run.case.case,
            run.case.expected.as_str(),
            run.outcome.as_str(),
            run.verdict
                .settling_time
                .map(sig6)
                .unwrap_or_else(|| "n/a".into()),
            sig6(run.verdict.final_height),
            if run.matches_expected() {
                ""
            } else {
                "  MISMATCH"
            }
        );
        let trajectory = match files.dir() {
            Some(_) => {
                let name = format!("case_{}.csv", run.case.case);
                let mut csv = Vec::new();
                run.trajectory
                    .write_csv(&mut csv)
                    .map_err(|e| Error::io("<buffer>", e))?;
                files.write(&name, &csv)?;
                Some(name)
            }
            None => None,
        };
        reports.push(CaseReport {
            run,
            matches_expected: run.matches_expected(),
            trajectory,
        });
    }
    let matched = runs.iter().filter(|r| r.matches_expected()).count();
    println!(
        "{matched} of {} cases match the expected outcome",
        runs.len()
    );
    let discrepancies: Vec<u32> = runs
        .iter()
        .filter(|r| !r.matches_expected())
        .map(|r| r.case.case)
        .collect();
    files.json(
        "summary.json",
        &serde_json::json!({
            "matched": matched,
            "total": runs.len(),
            "discrepancies": discrepancies,
            "cases": reports,
        }),
    )
}

/// Output sink: a directory when `--out` is given, else stdout/stderr.
struct Files {
    dir: Option<PathBuf>,
    written: Vec<PathBuf>,
}

impl Files {
    fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        Ok(Self {
            dir: dir.map(Path::to_path_buf),
            written: Vec::new(),
        })
    }

    fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = &self.dir {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            self.written.push(path);
        }
        Ok(())
    }

    /// Main tabular output: a file under `--out`, stdout otherwise.
    fn primary(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if self.dir.is_some() {
            self.write(name, bytes)
        } else {
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| Error::io("<stdout>", e))
        }
    }

    /// Human-readable status; on stderr when stdout carries data.
    fn note(&self, line: &str) {
        if self.dir.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        if self.dir.is_none() {
            return Ok(());
        }
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}
