//! Cartesian sweeps over (λ, delay, control frequency, duty cycle) and the
//! viability maps they produce.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::ControlSchedule;
use crate::error::{ensure_non_negative, ensure_positive, ensure_range, Error, Result};
use crate::leg::{run_drop, DropConfig};
use crate::metrics::{settle_metrics_with, FailureReason, LandingVerdict, VerdictThresholds};
use crate::trajectory::sig6;

/// Environment variable capping the number of sweep workers.
pub const WORKERS_ENV: &str = "HYLEG_WORKERS";

pub const CSV_HEADER: &str =
    "lambda,delay_ms,freq_hz,duty,viable,settling_s,final_height_m,failure_reason";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub lambda: Vec<f64>,
    pub delay_ms: Vec<f64>,
    pub freq_hz: Vec<f64>,
    pub duty: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            lambda: steps(0.0, 0.05, 21),
            delay_ms: steps(0.0, 5.0, 13),
            freq_hz: vec![20.0, 50.0, 100.0, 250.0, 1000.0],
            duty: vec![0.25, 0.5, 1.0],
        }
    }
}

/// `n` values `start + k·step`, rounded to clear accumulated binary noise.
fn steps(start: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

impl SweepGrid {
    pub fn single(lambda: f64, delay_ms: f64, freq_hz: f64, duty: f64) -> Self {
        Self {
            lambda: vec![lambda],
            delay_ms: vec![delay_ms],
            freq_hz: vec![freq_hz],
            duty: vec![duty],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, values) in [
            ("lambda", &self.lambda),
            ("delay_ms", &self.delay_ms),
            ("freq_hz", &self.freq_hz),
            ("duty", &self.duty),
        ] {
            if values.is_empty() {
                return Err(Error::Config(format!("grid axis `{name}` is empty")));
            }
        }
        for &l in &self.lambda {
            ensure_range("lambda", l, 0.0, 1.0, "must lie in [0, 1]")?;
        }
        for &d in &self.delay_ms {
            ensure_non_negative("delay_ms", d)?;
        }
        for &f in &self.freq_hz {
            ensure_positive("freq_hz", f)?;
        }
        for &dc in &self.duty {
            ensure_range("duty", dc, f64::MIN_POSITIVE, 1.0, "must lie in (0, 1]")?;
        }
        Ok(())
    }

    pub fn panel_size(&self) -> usize {
        self.lambda.len() * self.delay_ms.len()
    }

    pub fn len(&self) -> usize {
        self.panel_size() * self.freq_hz.len() * self.duty.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All cells sorted by duty cycle, frequency, λ, then delay.
    pub fn cells(&self) -> Vec<Cell> {
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let (lambdas, delays) = (sorted(&self.lambda), sorted(&self.delay_ms));
        let mut out = Vec::with_capacity(self.len());
        for &duty in &sorted(&self.duty) {
            for &freq_hz in &sorted(&self.freq_hz) {
                for &lambda in &lambdas {
                    for &delay_ms in &delays {
                        out.push(Cell {
                            lambda,
                            delay_ms,
                            freq_hz,
                            duty,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lambda: f64,
    pub delay_ms: f64,
    pub freq_hz: f64,
    pub duty: f64,
}

impl Cell {
    pub fn drop_config(&self, base: &DropConfig) -> Result<DropConfig> {
        let mut cfg = *base;
        cfg.split = base.split.with_lambda(self.lambda)?;
        cfg.schedule = ControlSchedule {
            frequency: self.freq_hz,
            duty_cycle: self.duty,
            delay: self.delay_ms * 1e-3,
            ..base.schedule
        };
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub verdict: LandingVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViabilityMap {
    pub grid: SweepGrid,
    /// Canonical cell order, see [`SweepGrid::cells`].
    pub results: Vec<CellResult>,
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "{WORKERS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
    }
}

pub fn run_sweep(grid: &SweepGrid, base: &DropConfig) -> Result<ViabilityMap> {
    run_sweep_with(
        grid,
        base,
        workers_from_env()?,
        &VerdictThresholds::default(),
    )
}

/// Runs every cell on a pool of `workers` threads (all cores when `None`).
/// A cell whose simulation errors is recorded as a diverged verdict.
pub fn run_sweep_with(
    grid: &SweepGrid,
    base: &DropConfig,
    workers: Option<usize>,
    thresholds: &VerdictThresholds,
) -> Result<ViabilityMap> {
    grid.validate()?;
    let cells = grid.cells();
    // Schedules that cannot be realised are configuration errors, not verdicts.
    for cell in &cells {
        let cfg = cell.drop_config(base)?;
        cfg.validate()?;
        crate::controller::DelayedController::new(
            cfg.schedule,
            cfg.split,
            cfg.geometry.rest_knee_angle,
            cfg.physics_dt,
        )?;
    }

    let evaluate = |cell: &Cell| -> CellResult {
        let verdict = cell
            .drop_config(base)
            .and_then(|cfg| run_drop(&cfg))
            .and_then(|traj| settle_metrics_with(&traj, thresholds))
            .unwrap_or(LandingVerdict {
                settling_time: None,
                final_height: f64::NAN,
                viable: false,
                failure_reason: FailureReason::Diverged,
            });
        CellResult {
            cell: *cell,
            verdict,
        }
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results = pool.install(|| cells.par_iter().map(evaluate).collect());
    Ok(ViabilityMap {
        grid: grid.clone(),
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub freq_hz: f64,
    pub duty: f64,
    pub cells: usize,
    pub viable: usize,
}

/// Trend checks reported alongside a sweep. They are soft: a reduced model
/// is not expected to reproduce every cell of a published map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub cells: usize,
    pub viable: usize,
    pub panels: Vec<PanelSummary>,
    /// Per duty cycle: viable counts never grow as the frequency drops.
    pub frequency_monotonic: BTreeMap<String, bool>,
    /// At the highest frequency and duty cycle, (delay_ms, λ) rows where a
    /// viable λ is followed by a failed larger λ.
    pub lambda_monotonic_violations: Vec<(f64, f64)>,
    pub reference_viable_everywhere: bool,
}

impl ViabilityMap {
    pub fn panel(&self, freq_hz: f64, duty: f64) -> impl Iterator<Item = &CellResult> {
        self.results
            .iter()
            .filter(move |r| r.cell.freq_hz == freq_hz && r.cell.duty == duty)
    }

    /// Distinct (frequency, duty) pairs in canonical order.
    pub fn panels(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for r in &self.results {
            let key = (r.cell.freq_hz, r.cell.duty);
            if !out.contains(&key) {
                out.push(key);
            }
        }
        out
    }

    pub fn viable_count(&self, freq_hz: f64, duty: f64) -> usize {
        self.panel(freq_hz, duty)
            .filter(|r| r.verdict.viable)
            .count()
    }

    pub fn get(&self, lambda: f64, delay_ms: f64, freq_hz: f64, duty: f64) -> Option<&CellResult> {
        self.results.iter().find(|r| {
            let c = &r.cell;
            c.lambda == lambda && c.delay_ms == delay_ms && c.freq_hz == freq_hz && c.duty == duty
        })
    }

    pub fn summary(&self) -> SweepSummary {
        let panels: Vec<PanelSummary> = self
            .panels()
            .into_iter()
            .map(|(freq_hz, duty)| PanelSummary {
                freq_hz,
                duty,
                cells: self.panel(freq_hz, duty).count(),
                viable: self.viable_count(freq_hz, duty),
            })
            .collect();

        let mut frequency_monotonic = BTreeMap::new();
        let mut duties: Vec<f64> = panels.iter().map(|p| p.duty).collect();
        duties.dedup();
        for duty in duties {
            // Panels come in ascending frequency within a duty cycle.
            let counts: Vec<usize> = panels
                .iter()
                .filter(|p| p.duty == duty)
                .map(|p| p.viable)
                .collect();
            let ok = counts.windows(2).all(|w| w[0] <= w[1]);
            frequency_monotonic.insert(sig6(duty), ok);
        }

        let mut lambda_monotonic_violations = Vec::new();
        if let (Some(&top_f), Some(&top_dc)) = (
            self.results
                .iter()
                .map(|r| &r.cell.freq_hz)
                .max_by(|a, b| a.total_cmp(b)),
            self.results
                .iter()
                .map(|r| &r.cell.duty)
                .max_by(|a, b| a.total_cmp(b)),
        ) {
            let panel: Vec<&CellResult> = self.panel(top_f, top_dc).collect();
            let mut delays: Vec<f64> = panel.iter().map(|r| r.cell.delay_ms).collect();
            delays.sort_by(f64::total_cmp);
            delays.dedup();
            for d in delays {
                let row: Vec<&&CellResult> =
                    panel.iter().filter(|r| r.cell.delay_ms == d).collect();
                let mut seen_viable = false;
                for r in row {
                    if r.verdict.viable {
                        seen_viable = true;
                    } else if seen_viable {
                        lambda_monotonic_violations.push((d, r.cell.lambda));
                    }
                }
            }
        }

        let references: Vec<&CellResult> = self
            .results
            .iter()
            .filter(|r| r.cell.lambda == 1.0 && r.cell.delay_ms == 0.0)
            .collect();
        SweepSummary {
            cells: self.results.len(),
            viable: self.results.iter().filter(|r| r.verdict.viable).count(),
            panels,
            frequency_monotonic,
            lambda_monotonic_violations,
            reference_viable_everywhere: !references.is_empty()
                && references.iter().all(|r| r.verdict.viable),
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.results {
            let c = &r.cell;
            let v = &r.verdict;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                sig6(c.lambda),
                sig6(c.delay_ms),
                sig6(c.freq_hz),
                sig6(c.duty),
                v.viable,
                v.settling_time.map(sig6).unwrap_or_default(),
                sig6(v.final_height),
                v.failure_reason
            )?;
        }
        Ok(())
    }

    /// Heat map of one panel: delay across, λ down with λ = 1 on top.
    /// Failed cells are grey, viable ones are shaded by settling time.
    pub fn panel_svg(&self, freq_hz: f64, duty: f64, max_settling: f64) -> String {
        const CELL: f64 = 22.0;
        const LEFT: f64 = 56.0;
        const TOP: f64 = 40.0;
        let panel: Vec<&CellResult> = self.panel(freq_hz, duty).collect();
        let axis = |f: fn(&Cell) -> f64| {
            let mut v: Vec<f64> = panel.iter().map(|r| f(&r.cell)).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let delays = axis(|c| c.delay_ms);
        let lambdas = axis(|c| c.lambda);
        let width = LEFT + CELL * delays.len() as f64 + 20.0;
        let height = TOP + CELL * lambdas.len() as f64 + 44.0;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{LEFT}" y="16" font-size="12">{} Hz, duty {} %</text>"#,
            sig6(freq_hz),
            sig6(duty * 100.0)
        );
        for r in &panel {
            let col = delays
                .iter()
                .position(|&d| d == r.cell.delay_ms)
                .unwrap_or(0);
            let row = lambdas.len()
                - 1
                - lambdas
                    .iter()
                    .position(|&l| l == r.cell.lambda)
                    .unwrap_or(0);
            let x = LEFT + CELL * col as f64;
            let y = TOP + CELL * row as f64;
            let (class, fill) = if r.verdict.viable {
                let frac = r.verdict.settling_time.unwrap_or(0.0) / max_settling;
                ("viable", shade(frac))
            } else {
                ("failed", "#b0b0b0".to_string())
            };
            let _ = writeln!(
                svg,
                r#"<rect class="{class}" x="{x}" y="{y}" width="{w}" height="{w}" fill="{fill}" stroke="white"><title>lambda {} delay {} ms: {}</title></rect>"#,
                sig6(r.cell.lambda),
                sig6(r.cell.delay_ms),
                r.verdict.failure_reason,
                w = CELL
            );
        }
        for (row, l) in lambdas.iter().rev().enumerate() {
            let y = TOP + CELL * row as f64 + CELL * 0.65;
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#,
                LEFT - 4.0,
                sig6(*l)
            );
        }
        let base = TOP + CELL * lambdas.len() as f64;
        for (col, d) in delays.iter().enumerate() {
            let x = LEFT + CELL * col as f64 + CELL / 2.0;
            let _ = writeln!(
                svg,
                r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
                base + 12.0,
                sig6(*d)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">delay (ms)</text>"#,
            LEFT + CELL * delays.len() as f64 / 2.0,
            base + 30.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">passive ratio</text>"#,
            TOP + CELL * lambdas.len() as f64 / 2.0,
            TOP + CELL * lambdas.len() as f64 / 2.0
        );
        svg.push_str("</svg>\n");
        svg
    }
}

/// Dark blue for an instant settle through to yellow at the limit.
fn shade(frac: f64) -> String {
    const STOPS: [(f64, [f64; 3]); 3] = [
        (0.0, [38.0, 70.0, 140.0]),
        (0.5, [40.0, 160.0, 130.0]),
        (1.0, [250.0, 220.0, 40.0]),
    ];
    let f = frac.clamp(0.0, 1.0);
    let i = if f <= STOPS[1].0 { 0 } else { 1 };
    let (f0, c0) = STOPS[i];
    let (f1, c1) = STOPS[i + 1];
    let w = (f - f0) / (f1 - f0);
    let ch = |k: usize| (c0[k] + (c1[k] - c0[k]) * w).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}

pub fn panel_file_name(freq_hz: f64, duty: f64) -> String {
    format!("panel_f{}_dc{}.svg", sig6(freq_hz), sig6(duty * 100.0))
}

/// Writes `viability.csv`, one SVG per panel and `summary.json` into `dir`,
/// returning the paths written.
pub fn emit_map(
    map: &ViabilityMap,
    dir: &Path,
    thresholds: &VerdictThresholds,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let csv_path = dir.join("viability.csv");
    let mut buf = Vec::new();
    map.write_csv(&mut buf)
        .map_err(|e| Error::io(&csv_path, e))?;
    write_file(&csv_path, &buf)?;
    written.push(csv_path);

    for (freq, duty) in map.panels() {
        let path = dir.join(panel_file_name(freq, duty));
        write_file(
            &path,
            map.panel_svg(freq, duty, thresholds.max_settling_time)
                .as_bytes(),
        )?;
        written.push(path);
    }

    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&map.summary())?;
    write_file(&path, json.as_bytes())?;
    written.push(path);
    Ok(written)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
