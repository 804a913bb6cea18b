use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use thiserror::Error;

pub const HOURS_PER_DAY: usize = 24;

#[derive(Error, Debug)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("timestamp error: {0}")]
    Timestamps(String),
    #[error("gap of {missing} hour(s) after {after} exceeds the fill limit of {limit}")]
    Gap { after: NaiveDateTime, missing: usize, limit: usize },
    #[error("day alignment: {0}")]
    Alignment(String),
    #[error("insufficient history: need {required_days} day(s), frame has {available_days}")]
    InsufficientHistory { required_days: usize, available_days: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// CSV ingestion contract: which exogenous columns must be present and how
/// long a gap may be linearly interpolated before the file is rejected.
#[derive(Clone, Debug)]
pub struct CsvSchema {
    pub required_exogenous: Vec<String>,
    pub max_fill_hours: usize,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            required_exogenous: vec![
                "load_fcst".to_string(),
                "wind_fcst".to_string(),
                "solar_fcst".to_string(),
            ],
            max_fill_hours: 3,
        }
    }
}

/// Aligned hourly series: price plus named exogenous forecasts, spanning
/// whole days with no missing timestamps.
#[derive(Clone, Debug)]
pub struct TimeSeriesFrame {
    start: NaiveDateTime,
    price: Vec<f64>,
    exogenous: Vec<(String, Vec<f64>)>,
    filled: Vec<NaiveDateTime>,
}

impl TimeSeriesFrame {
    pub fn from_parts(
        start: NaiveDateTime,
        price: Vec<f64>,
        exogenous: Vec<(String, Vec<f64>)>,
    ) -> Result<Self, DataError> {
        if start.hour() != 0 || start.minute() != 0 || start.second() != 0 {
            return Err(DataError::Alignment(format!(
                "frame must start at midnight, got {start}"
            )));
        }
        if price.is_empty() || !price.len().is_multiple_of(HOURS_PER_DAY) {
            return Err(DataError::Alignment(format!(
                "series length {} is not a positive multiple of 24",
                price.len()
            )));
        }
        for (name, series) in &exogenous {
            if series.len() != price.len() {
                return Err(DataError::Schema(format!(
                    "series '{name}' has length {}, expected {}",
                    series.len(),
                    price.len()
                )));
            }
        }
        Ok(Self { start, price, exogenous, filled: Vec::new() })
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn n_hours(&self) -> usize {
        self.price.len()
    }

    pub fn n_days(&self) -> usize {
        self.price.len() / HOURS_PER_DAY
    }

    pub fn timestamp(&self, i: usize) -> NaiveDateTime {
        self.start + chrono::Duration::hours(i as i64)
    }

    pub fn day_date(&self, day: usize) -> NaiveDate {
        self.start.date() + chrono::Duration::days(day as i64)
    }

    /// Frame day index of a calendar date, if it lies inside the frame.
    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        let delta = (date - self.start.date()).num_days();
        if delta >= 0 && (delta as usize) < self.n_days() {
            Some(delta as usize)
        } else {
            None
        }
    }

    pub fn price(&self) -> &[f64] {
        &self.price
    }

    pub fn price_day(&self, day: usize) -> &[f64] {
        &self.price[day * HOURS_PER_DAY..(day + 1) * HOURS_PER_DAY]
    }

    pub fn price_mut(&mut self) -> &mut [f64] {
        &mut self.price
    }

    pub fn exogenous_names(&self) -> Vec<&str> {
        self.exogenous.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn exogenous(&self, name: &str) -> Option<&[f64]> {
        self.exogenous
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s.as_slice())
    }

    pub fn exogenous_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.exogenous
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s.as_mut_slice())
    }

    pub fn exogenous_day(&self, name: &str, day: usize) -> Option<&[f64]> {
        self.exogenous(name)
            .map(|s| &s[day * HOURS_PER_DAY..(day + 1) * HOURS_PER_DAY])
    }

    /// Timestamps that were linearly interpolated during ingestion.
    pub fn filled_timestamps(&self) -> &[NaiveDateTime] {
        &self.filled
    }

    /// Copy of the frame restricted to whole days [from, to).
    pub fn slice_days(&self, from: usize, to: usize) -> Result<Self, DataError> {
        if from >= to || to > self.n_days() {
            return Err(DataError::InvalidConfig(format!(
                "slice_days({from}, {to}) outside frame of {} days",
                self.n_days()
            )));
        }
        let (a, b) = (from * HOURS_PER_DAY, to * HOURS_PER_DAY);
        Ok(Self {
            start: self.start + chrono::Duration::days(from as i64),
            price: self.price[a..b].to_vec(),
            exogenous: self
                .exogenous
                .iter()
                .map(|(n, s)| (n.clone(), s[a..b].to_vec()))
                .collect(),
            filled: Vec::new(),
        })
    }

    /// Write the frame back out in the ingestion CSV format.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "timestamp,price")?;
        for (name, _) in &self.exogenous {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for i in 0..self.n_hours() {
            write!(
                w,
                "{},{}",
                self.timestamp(i).format("%Y-%m-%dT%H:%M:%S"),
                self.price[i]
            )?;
            for (_, series) in &self.exogenous {
                write!(w, ",{}", series[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn parse_timestamp(raw: &str, line: usize) -> Result<(NaiveDateTime, Option<String>), DataError> {
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(raw) {
        return Ok((dt.naive_local(), Some(dt.offset().to_string())));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok((dt, None));
        }
    }
    Err(DataError::Parse {
        line,
        message: format!("unparseable timestamp '{raw}'"),
    })
}

struct RawRows {
    timestamps: Vec<NaiveDateTime>,
    columns: Vec<Vec<f64>>, // one per value column, in header order
}

/// Load an hourly market CSV.
///
/// Header must contain `timestamp`, `price` and every required exogenous
/// column; extra columns are ingested as additional exogenous series.
/// Timestamps must be a fixed-offset hourly clock; gaps up to
/// `schema.max_fill_hours` are linearly interpolated, longer ones rejected.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TimeSeriesFrame, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let header = match lines.next() {
        Some((_, Ok(h))) => h,
        Some((_, Err(source))) => {
            return Err(DataError::Io { path: path.display().to_string(), source })
        }
        None => return Err(DataError::Schema("empty file".to_string())),
    };
    let cols: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if cols.first().map(String::as_str) != Some("timestamp") {
        return Err(DataError::Schema(format!(
            "first column must be 'timestamp', got '{}'",
            cols.first().cloned().unwrap_or_default()
        )));
    }
    let value_names: Vec<String> = cols[1..].to_vec();
    if !value_names.iter().any(|n| n == "price") {
        return Err(DataError::Schema("missing required column 'price'".to_string()));
    }
    for required in &schema.required_exogenous {
        if !value_names.iter().any(|n| n == required) {
            return Err(DataError::Schema(format!("missing required column '{required}'")));
        }
    }

    let mut raw = RawRows {
        timestamps: Vec::new(),
        columns: vec![Vec::new(); value_names.len()],
    };
    let mut offset_seen: Option<String> = None;
    for (idx, line) in lines {
        let line = line.map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != value_names.len() + 1 {
            return Err(DataError::Parse {
                line: lineno,
                message: format!(
                    "expected {} fields, got {}",
                    value_names.len() + 1,
                    fields.len()
                ),
            });
        }
        let (ts, offset) = parse_timestamp(fields[0].trim(), lineno)?;
        match (&offset_seen, &offset) {
            (None, Some(o)) if raw.timestamps.is_empty() => offset_seen = Some(o.clone()),
            (Some(prev), Some(o)) if prev != o => {
                return Err(DataError::Timestamps(format!(
                    "UTC offset changes from {prev} to {o} at line {lineno}; \
                     input must use a fixed-offset clock"
                )));
            }
            (None, Some(_)) => {
                return Err(DataError::Timestamps(format!(
                    "mixed naive and offset timestamps at line {lineno}"
                )));
            }
            (Some(_), None) => {
                return Err(DataError::Timestamps(format!(
                    "mixed naive and offset timestamps at line {lineno}"
                )));
            }
            _ => {}
        }
        raw.timestamps.push(ts);
        for (col, field) in raw.columns.iter_mut().zip(&fields[1..]) {
            let v: f64 = field.trim().parse().map_err(|_| DataError::Parse {
                line: lineno,
                message: format!("unparseable number '{}'", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    line: lineno,
                    message: format!("non-finite value '{}'", field.trim()),
                });
            }
            col.push(v);
        }
    }
    if raw.timestamps.is_empty() {
        return Err(DataError::Schema("file has a header but no rows".to_string()));
    }

    // Validate monotone timestamps, naming every offender.
    let mut offending = Vec::new();
    for (i, w) in raw.timestamps.windows(2).enumerate() {
        if w[1] <= w[0] {
            offending.push(format!("row {} ({} after {})", i + 2, w[1], w[0]));
        }
    }
    if !offending.is_empty() {
        return Err(DataError::Timestamps(format!(
            "non-monotone or duplicate timestamps: {}",
            offending.join("; ")
        )));
    }

    // Fill hourly gaps up to the limit by linear interpolation.
    let hour = chrono::Duration::hours(1);
    let mut timestamps = Vec::with_capacity(raw.timestamps.len());
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); raw.columns.len()];
    let mut filled = Vec::new();
    for i in 0..raw.timestamps.len() {
        if i > 0 {
            let prev = raw.timestamps[i - 1];
            let step = (raw.timestamps[i] - prev).num_hours();
            if step < 1 || (raw.timestamps[i] - prev) != hour * (step as i32) {
                return Err(DataError::Timestamps(format!(
                    "timestamps are not on an hourly grid near {prev}"
                )));
            }
            let missing = (step - 1) as usize;
            if missing > 0 {
                if missing > schema.max_fill_hours {
                    return Err(DataError::Gap {
                        after: prev,
                        missing,
                        limit: schema.max_fill_hours,
                    });
                }
                for k in 1..=missing {
                    let frac = k as f64 / (missing + 1) as f64;
                    timestamps.push(prev + hour * (k as i32));
                    filled.push(prev + hour * (k as i32));
                    for (col, rawcol) in columns.iter_mut().zip(&raw.columns) {
                        let lo = rawcol[i - 1];
                        let hi = rawcol[i];
                        col.push(lo + frac * (hi - lo));
                    }
                }
            }
        }
        timestamps.push(raw.timestamps[i]);
        for (col, rawcol) in columns.iter_mut().zip(&raw.columns) {
            col.push(rawcol[i]);
        }
    }

    let start = timestamps[0];
    if start.hour() != 0 || start.minute() != 0 || start.second() != 0 {
        return Err(DataError::Alignment(format!(
            "first timestamp {start} is not at midnight; frames must cover whole days"
        )));
    }
    if timestamps.len() % HOURS_PER_DAY != 0 {
        return Err(DataError::Alignment(format!(
            "{} hourly rows do not form whole days",
            timestamps.len()
        )));
    }

    let mut price = Vec::new();
    let mut exogenous = Vec::new();
    for (name, col) in value_names.iter().zip(columns) {
        if name == "price" {
            price = col;
        } else {
            exogenous.push((name.clone(), col));
        }
    }
    let mut frame = TimeSeriesFrame::from_parts(start, price, exogenous)?;
    frame.filled = filled;
    Ok(frame)
}
