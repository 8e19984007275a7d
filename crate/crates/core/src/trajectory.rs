//! Hip-height time series produced by the drop simulations, and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "t,z,zdot,theta,thetadot,tau_motor,tau_spring,contact";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub z: f64,
    pub zdot: f64,
    pub theta: f64,
    pub thetadot: f64,
    pub tau_motor: f64,
    pub tau_spring: f64,
    pub contact: bool,
}

/// How a simulation ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SimStatus {
    #[default]
    Completed,
    /// The knee folded through π: the hip reached the ground.
    Inverted { t: f64 },
    /// The state became non-finite.
    Diverged { t: f64 },
}

impl SimStatus {
    pub fn is_failure(&self) -> bool {
        !matches!(self, SimStatus::Completed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Hip height at release.
    pub drop_height: f64,
    /// Time of the first ground contact.
    pub touchdown: Option<f64>,
    pub status: SimStatus,
}

impl Trajectory {
    /// A bare height series, e.g. loaded from an external CSV.
    pub fn from_heights(t: &[f64], z: &[f64]) -> Result<Self> {
        if t.len() != z.len() {
            return Err(Error::Trajectory(format!(
                "{} time stamps but {} heights",
                t.len(),
                z.len()
            )));
        }
        let samples = t
            .iter()
            .zip(z)
            .map(|(&t, &z)| Sample {
                t,
                z,
                zdot: 0.0,
                theta: 0.0,
                thetadot: 0.0,
                tau_motor: 0.0,
                tau_spring: 0.0,
                contact: false,
            })
            .collect();
        let traj = Self {
            samples,
            drop_height: z.first().copied().unwrap_or(0.0),
            touchdown: t.first().copied(),
            status: SimStatus::Completed,
        };
        traj.check_times()?;
        Ok(traj)
    }

    fn check_times(&self) -> Result<()> {
        if self.samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Trajectory(
                "time stamps must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    pub fn heights(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.z)
    }

    pub fn start_time(&self) -> Option<f64> {
        self.samples.first().map(|s| s.t)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t)
    }

    pub fn min_height(&self) -> Option<f64> {
        self.heights().reduce(f64::min)
    }

    /// Linearly interpolated hip height at `t`, `None` outside the sampled range.
    pub fn height_at(&self, t: f64) -> Option<f64> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t < first.t || t > last.t {
            return None;
        }
        let hi = self.samples.partition_point(|s| s.t < t);
        if hi == 0 {
            return Some(first.z);
        }
        let (a, b) = (&self.samples[hi - 1], &self.samples[hi]);
        if b.t == t {
            return Some(b.z);
        }
        let w = (t - a.t) / (b.t - a.t);
        Some(a.z + (b.z - a.z) * w)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                sig6(s.t),
                sig6(s.z),
                sig6(s.zdot),
                sig6(s.theta),
                sig6(s.thetadot),
                sig6(s.tau_motor),
                sig6(s.tau_spring),
                u8::from(s.contact)
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a trajectory CSV. Only the `t` and `z` columns are required;
    /// the remaining columns of the native schema are picked up when present.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let t_col = col("t").ok_or_else(|| Error::Trajectory("missing column `t`".into()))?;
        let z_col = col("z").ok_or_else(|| Error::Trajectory("missing column `z`".into()))?;
        let optional = [
            "zdot",
            "theta",
            "thetadot",
            "tau_motor",
            "tau_spring",
            "contact",
        ]
        .map(col);

        let mut samples = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let field = |idx: Option<usize>| -> Result<f64> {
                match idx {
                    None => Ok(0.0),
                    Some(i) => record
                        .get(i)
                        .ok_or_else(|| {
                            Error::Trajectory(format!("row {}: missing field", line + 2))
                        })?
                        .parse::<f64>()
                        .map_err(|e| Error::Trajectory(format!("row {}: {e}", line + 2))),
                }
            };
            samples.push(Sample {
                t: field(Some(t_col))?,
                z: field(Some(z_col))?,
                zdot: field(optional[0])?,
                theta: field(optional[1])?,
                thetadot: field(optional[2])?,
                tau_motor: field(optional[3])?,
                tau_spring: field(optional[4])?,
                contact: field(optional[5])? != 0.0,
            });
        }
        let touchdown = samples.iter().find(|s| s.contact).map(|s| s.t);
        let traj = Self {
            drop_height: samples.first().map_or(0.0, |s| s.z),
            touchdown: touchdown.or_else(|| samples.first().map(|s| s.t)),
            samples,
            status: SimStatus::Completed,
        };
        traj.check_times()?;
        Ok(traj)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Formats with six significant digits, switching to exponent notation
/// outside `[1e-5, 1e6)` like C's `%g`.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!(
            "{}e{}{:02}",
            trim_zeros(mantissa.to_string()),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
