use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;

use qnbm_core::forecast::QuantileForecast;
use qnbm_core::numkit::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Malformed { path: String, line: usize, message: String },
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Write { path: path.display().to_string(), source }
}

pub fn ensure_dir(dir: &Path) -> Result<(), OutputError> {
    std::fs::create_dir_all(dir).map_err(write_err(dir))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), OutputError> {
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    std::fs::write(path, text).map_err(write_err(path))
}

pub fn write_with<F>(path: &Path, f: F) -> Result<(), OutputError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let file = std::fs::File::create(path).map_err(write_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(write_err(path))?;
    w.flush().map_err(write_err(path))
}

/// Long-format forecast CSV: one row per (day, hour, level).
pub fn write_forecast_long(forecast: &QuantileForecast, path: &Path) -> Result<(), OutputError> {
    write_with(path, |w| {
        writeln!(w, "day,hour,gamma,value")?;
        for d in 0..forecast.days() {
            let day = forecast
                .date_of(d)
                .map(|date| date.to_string())
                .unwrap_or_else(|| d.to_string());
            for h in 0..forecast.horizon() {
                for (qi, gamma) in forecast.levels().iter().enumerate() {
                    writeln!(w, "{day},{h},{gamma},{}", forecast.get(d, h, qi))?;
                }
            }
        }
        Ok(())
    })
}

/// Wide-format forecast CSV: one row per (day, hour), one column per level.
pub fn write_forecast_wide(forecast: &QuantileForecast, path: &Path) -> Result<(), OutputError> {
    write_with(path, |w| {
        write!(w, "day,hour")?;
        for gamma in forecast.levels() {
            write!(w, ",q_{gamma}")?;
        }
        writeln!(w)?;
        for d in 0..forecast.days() {
            let day = forecast
                .date_of(d)
                .map(|date| date.to_string())
                .unwrap_or_else(|| d.to_string());
            for h in 0..forecast.horizon() {
                write!(w, "{day},{h}")?;
                for qi in 0..forecast.levels().len() {
                    write!(w, ",{}", forecast.get(d, h, qi))?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    })
}

/// Read back a long-format forecast CSV written by [`write_forecast_long`].
pub fn read_forecast_long(path: &Path) -> Result<QuantileForecast, OutputError> {
    let file = std::fs::File::open(path).map_err(|source| OutputError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(h))) => h,
        _ => {
            return Err(OutputError::Malformed {
                path: path.display().to_string(),
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    if header.trim() != "day,hour,gamma,value" {
        return Err(OutputError::Malformed {
            path: path.display().to_string(),
            line: 1,
            message: format!("unexpected header '{header}'"),
        });
    }

    let mut days: Vec<NaiveDate> = Vec::new();
    let mut levels: Vec<f64> = Vec::new();
    let mut horizon = 0usize;
    let mut rows: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|source| OutputError::Read {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let malformed = |message: String| OutputError::Malformed {
            path: path.display().to_string(),
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(malformed(format!("expected 4 fields, got {}", fields.len())));
        }
        let date: NaiveDate = fields[0]
            .parse()
            .map_err(|_| malformed(format!("bad date '{}'", fields[0])))?;
        let hour: usize = fields[1]
            .parse()
            .map_err(|_| malformed(format!("bad hour '{}'", fields[1])))?;
        let gamma: f64 = fields[2]
            .parse()
            .map_err(|_| malformed(format!("bad gamma '{}'", fields[2])))?;
        let value: f64 = fields[3]
            .parse()
            .map_err(|_| malformed(format!("bad value '{}'", fields[3])))?;

        let day_idx = match days.iter().position(|&d| d == date) {
            Some(i) => i,
            None => {
                days.push(date);
                days.len() - 1
            }
        };
        let level_idx = match levels.iter().position(|&g| (g - gamma).abs() < 1e-12) {
            Some(i) => i,
            None => {
                levels.push(gamma);
                levels.len() - 1
            }
        };
        horizon = horizon.max(hour + 1);
        rows.push((day_idx, hour, level_idx, value));
    }
    if days.is_empty() {
        return Err(OutputError::Malformed {
            path: path.display().to_string(),
            line: 2,
            message: "no forecast rows".into(),
        });
    }
    if rows.len() != days.len() * horizon * levels.len() {
        return Err(OutputError::Malformed {
            path: path.display().to_string(),
            line: 2,
            message: format!(
                "{} rows do not fill {} day(s) x {} step(s) x {} level(s)",
                rows.len(),
                days.len(),
                horizon,
                levels.len()
            ),
        });
    }
    let mut data = Matrix::zeros(days.len(), horizon * levels.len());
    for (d, h, q, v) in rows {
        data.set(d, h * levels.len() + q, v);
    }
    QuantileForecast::new(levels, horizon, data, days.first().copied()).map_err(|e| {
        OutputError::Malformed {
            path: path.display().to_string(),
            line: 2,
            message: e.to_string(),
        }
    })
}

/// Replay record written once per run: enough to reproduce the outputs.
#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub config_hash: String,
    pub seed: u64,
    pub model: String,
    pub code_version: &'a str,
    pub outputs: Vec<PathBuf>,
}

pub fn write_manifest(manifest: &RunManifest<'_>, dir: &Path) -> Result<(), OutputError> {
    write_json(manifest, &dir.join("run_manifest.json"))
}
