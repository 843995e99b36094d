//! Time-indexed run record and its CSV form.
//!
//! The column layout is fixed; writes format floats with Rust's shortest
//! round-trip representation so identical runs produce byte-identical files.

use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad log format: {0}")]
    Format(String),
}

/// One sampled instant of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub position: [f64; 3],
    pub attitude: [f64; 3],
    pub setpoint: [f64; 3],
    pub xhat1: [f64; 6],
    pub xhat2: [f64; 6],
    pub xhat3: [f64; 6],
    pub thrusts: [f64; 6],
    pub saturated: bool,
    /// Estimated generalized inertial contribution (pseudo-inverse of the
    /// input map applied to the drift term).
    pub gen_inertial: [f64; 6],
    /// Estimated generalized aerodynamic contribution.
    pub gen_aero: [f64; 6],
}

/// Uniformly sampled record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub setpoint: [f64; 3],
    /// Seconds between rows.
    pub sample_period: f64,
    /// False when the run halted on divergence and the log is partial.
    pub complete: bool,
    pub rows: Vec<LogRow>,
}

pub const LOG_HEADER: &str = "time,px,py,pz,roll,pitch,yaw,sp_x,sp_y,sp_z,\
xhat1_0,xhat1_1,xhat1_2,xhat1_3,xhat1_4,xhat1_5,\
xhat2_0,xhat2_1,xhat2_2,xhat2_3,xhat2_4,xhat2_5,\
xhat3_0,xhat3_1,xhat3_2,xhat3_3,xhat3_4,xhat3_5,\
f1,f2,f3,f4,f5,f6,saturated,\
gen_inertial_0,gen_inertial_1,gen_inertial_2,gen_inertial_3,gen_inertial_4,gen_inertial_5,\
gen_aero_0,gen_aero_1,gen_aero_2,gen_aero_3,gen_aero_4,gen_aero_5";

impl RunLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# complete={}", self.complete)?;
        writeln!(w, "{LOG_HEADER}")?;
        for r in &self.rows {
            let mut fields: Vec<String> = Vec::with_capacity(47);
            fields.push(fmt(r.t));
            fields.extend(r.position.iter().map(|v| fmt(*v)));
            fields.extend(r.attitude.iter().map(|v| fmt(*v)));
            fields.extend(r.setpoint.iter().map(|v| fmt(*v)));
            fields.extend(r.xhat1.iter().map(|v| fmt(*v)));
            fields.extend(r.xhat2.iter().map(|v| fmt(*v)));
            fields.extend(r.xhat3.iter().map(|v| fmt(*v)));
            fields.extend(r.thrusts.iter().map(|v| fmt(*v)));
            fields.push(if r.saturated { "1" } else { "0" }.into());
            fields.extend(r.gen_inertial.iter().map(|v| fmt(*v)));
            fields.extend(r.gen_aero.iter().map(|v| fmt(*v)));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), LogError> {
        let file = std::fs::File::create(path).map_err(|source| LogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|source| LogError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn load(path: &Path) -> Result<Self, LogError> {
        let text = std::fs::read_to_string(path).map_err(|source| LogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self, LogError> {
        let mut lines = text.lines();
        let complete = match lines.next() {
            Some(first) if first.starts_with("# complete=") => first
                .trim_start_matches("# complete=")
                .parse::<bool>()
                .map_err(|_| LogError::Format("bad completeness flag".into()))?,
            _ => return Err(LogError::Format("missing completeness header".into())),
        };
        let rest: String = lines.collect::<Vec<_>>().join("\n");
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(rest.as_bytes());
        let header = reader
            .headers()
            .map_err(LogError::Csv)?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if header != LOG_HEADER {
            return Err(LogError::Format("unexpected column layout".into()));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != 47 {
                return Err(LogError::Format(format!(
                    "expected 47 fields, got {}",
                    record.len()
                )));
            }
            let num = |i: usize| -> Result<f64, LogError> {
                record[i]
                    .parse::<f64>()
                    .map_err(|_| LogError::Format(format!("bad number in column {i}")))
            };
            let arr3 = |start: usize| -> Result<[f64; 3], LogError> {
                Ok([num(start)?, num(start + 1)?, num(start + 2)?])
            };
            let arr6 = |start: usize| -> Result<[f64; 6], LogError> {
                Ok([
                    num(start)?,
                    num(start + 1)?,
                    num(start + 2)?,
                    num(start + 3)?,
                    num(start + 4)?,
                    num(start + 5)?,
                ])
            };
            rows.push(LogRow {
                t: num(0)?,
                position: arr3(1)?,
                attitude: arr3(4)?,
                setpoint: arr3(7)?,
                xhat1: arr6(10)?,
                xhat2: arr6(16)?,
                xhat3: arr6(22)?,
                thrusts: arr6(28)?,
                saturated: &record[34] == "1",
                gen_inertial: arr6(35)?,
                gen_aero: arr6(41)?,
            });
        }
        let setpoint = rows.first().map(|r| r.setpoint).unwrap_or_default();
        let sample_period = if rows.len() > 1 {
            rows[1].t - rows[0].t
        } else {
            0.0
        };
        Ok(Self {
            setpoint,
            sample_period,
            complete,
            rows,
        })
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_log() -> RunLog {
        let row = |t: f64| LogRow {
            t,
            position: [0.1 * t, -0.2, 0.2],
            attitude: [0.0, 0.01, -0.02],
            setpoint: [0.0, 0.0, 0.2],
            xhat1: [0.0, 0.0, 0.19, 0.0, 0.0, 0.0],
            xhat2: [0.0; 6],
            xhat3: [0.1; 6],
            thrusts: [0.31; 6],
            saturated: t > 0.0,
            gen_inertial: [0.3; 6],
            gen_aero: [-0.05; 6],
        };
        RunLog {
            setpoint: [0.0, 0.0, 0.2],
            sample_period: 0.005,
            complete: true,
            rows: vec![row(0.0), row(0.005), row(0.01)],
        }
    }

    #[test]
    fn csv_round_trip() {
        let log = sample_log();
        let text = log.to_csv_string();
        let back = RunLog::from_csv_str(&text).unwrap();
        assert_eq!(log, back);
    }

    #[test]
    fn header_mismatch_rejected() {
        let text = "# complete=true\ntime,px\n0.0,0.1\n";
        assert!(matches!(
            RunLog::from_csv_str(text),
            Err(LogError::Format(_))
        ));
    }

    #[test]
    fn missing_banner_rejected() {
        assert!(RunLog::from_csv_str("time,px\n").is_err());
    }

    #[test]
    fn identical_logs_identical_bytes() {
        assert_eq!(sample_log().to_csv_string(), sample_log().to_csv_string());
    }
}
