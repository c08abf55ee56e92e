//! Hourly load/temperature series, resampling from raw meter readings, and
//! calendar decomposition.
//!
//! All instants are UTC. Load is carried as average kW over each hour, which
//! coincides numerically with the hour's energy in kWh.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Unit of the load column in a raw source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadUnit {
    /// Interval energy per reading, in Wh.
    Wh,
    /// Average power over the reading interval, in kW.
    Kw,
}

impl LoadUnit {
    fn label(self) -> &'static str {
        match self {
            LoadUnit::Wh => "Wh",
            LoadUnit::Kw => "kW",
        }
    }

    /// The aggregation policy that matches this unit.
    pub fn aggregation(self) -> Aggregation {
        match self {
            LoadUnit::Wh => Aggregation::SumEnergy,
            LoadUnit::Kw => Aggregation::MeanPower,
        }
    }
}

/// A load reading tagged with its unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Reading<T> {
    /// Energy in Wh accumulated over the reading interval.
    Energy(T),
    /// Average power in kW over the reading interval.
    Power(T),
}

impl<T: Scalar> Reading<T> {
    pub fn unit(&self) -> LoadUnit {
        match self {
            Reading::Energy(_) => LoadUnit::Wh,
            Reading::Power(_) => LoadUnit::Kw,
        }
    }

    pub fn value(&self) -> T {
        match *self {
            Reading::Energy(v) | Reading::Power(v) => v,
        }
    }

    pub fn tagged(unit: LoadUnit, value: T) -> Self {
        match unit {
            LoadUnit::Wh => Reading::Energy(value),
            LoadUnit::Kw => Reading::Power(value),
        }
    }
}

/// One meter reading at native resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord<T> {
    pub timestamp: DateTime<Utc>,
    pub load: Option<Reading<T>>,
    pub temperature: Option<T>,
}

/// How sub-hourly readings collapse into one hour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Sum Wh readings, then divide by 1000 to get average kW.
    SumEnergy,
    /// Arithmetic mean of kW readings.
    MeanPower,
}

impl Aggregation {
    fn unit(self) -> LoadUnit {
        match self {
            Aggregation::SumEnergy => LoadUnit::Wh,
            Aggregation::MeanPower => LoadUnit::Kw,
        }
    }
}

/// Gap-free hourly index with explicit missing markers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HourlySeries<T> {
    start: DateTime<Utc>,
    load: Vec<Option<T>>,
    temperature: Vec<Option<T>>,
}

impl<T: Scalar> HourlySeries<T> {
    pub fn new(
        start: DateTime<Utc>,
        load: Vec<Option<T>>,
        temperature: Vec<Option<T>>,
    ) -> Result<Self> {
        if load.len() != temperature.len() {
            return Err(Error::LengthMismatch {
                expected: load.len(),
                actual: temperature.len(),
            });
        }
        if floor_hour(start) != start {
            return Err(Error::NotHourAligned(start.to_rfc3339()));
        }
        Ok(Self {
            start,
            load,
            temperature,
        })
    }

    /// Builds a fully observed series.
    pub fn from_values(start: DateTime<Utc>, load: &[T], temperature: &[T]) -> Result<Self> {
        Self::new(
            start,
            load.iter().copied().map(Some).collect(),
            temperature.iter().copied().map(Some).collect(),
        )
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    pub fn load(&self) -> &[Option<T>] {
        &self.load
    }

    pub fn temperature(&self) -> &[Option<T>] {
        &self.temperature
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::hours(index as i64)
    }

    /// Index of the hour starting at `ts`, if it lies inside the series.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let hours = (ts - self.start).num_hours();
        if ts < self.start || floor_hour(ts) != ts || hours as usize >= self.len() {
            return None;
        }
        Some(hours as usize)
    }

    pub fn missing_load(&self) -> usize {
        self.load.iter().filter(|v| v.is_none()).count()
    }

    pub fn missing_temperature(&self) -> usize {
        self.temperature.iter().filter(|v| v.is_none()).count()
    }

    /// Load values with missing entries unwrapped, failing on the first gap.
    pub fn complete_load(&self) -> Result<Vec<T>> {
        complete(&self.load, "load")
    }

    pub fn complete_temperature(&self) -> Result<Vec<T>> {
        complete(&self.temperature, "temperature")
    }

    /// Sub-series over an index range.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let start = self.timestamp(range.start);
        Self {
            start,
            load: self.load[range.clone()].to_vec(),
            temperature: self.temperature[range].to_vec(),
        }
    }

    pub fn with_load(&self, load: Vec<Option<T>>) -> Result<Self> {
        Self::new(self.start, load, self.temperature.clone())
    }

    pub fn with_channels(&self, load: Vec<Option<T>>, temperature: Vec<Option<T>>) -> Result<Self> {
        Self::new(self.start, load, temperature)
    }

    /// Emits one power-tagged record per hour; resampling the result with
    /// [`Aggregation::MeanPower`] reproduces this series.
    pub fn to_records(&self) -> Vec<RawRecord<T>> {
        (0..self.len())
            .map(|i| RawRecord {
                timestamp: self.timestamp(i),
                load: self.load[i].map(Reading::Power),
                temperature: self.temperature[i],
            })
            .collect()
    }
}

fn complete<T: Scalar>(values: &[Option<T>], channel: &'static str) -> Result<Vec<T>> {
    values
        .iter()
        .enumerate()
        .map(|(index, v)| v.ok_or(Error::MissingValues { channel, index }))
        .collect()
}

/// Truncates an instant to the start of its UTC hour.
pub fn floor_hour(ts: DateTime<Utc>) -> DateTime<Utc> {
    let secs = ts.timestamp().div_euclid(3600) * 3600;
    Utc.timestamp_opt(secs, 0).single().expect("valid hour")
}

/// Midnight UTC at the start of `date`.
pub fn midnight(date: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight"))
}

/// Calendar decomposition of an instant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarFeatures {
    pub hour_of_day: u32,
    /// Monday = 0.
    pub day_of_week: u32,
    pub day_of_year: u32,
    pub is_weekend: bool,
}

pub fn calendar_of(ts: DateTime<Utc>) -> CalendarFeatures {
    let day_of_week = ts.weekday().num_days_from_monday();
    CalendarFeatures {
        hour_of_day: ts.hour(),
        day_of_week,
        day_of_year: ts.ordinal(),
        is_weekend: day_of_week >= 5,
    }
}

/// Hourly series plus per-hour coverage diagnostics.
#[derive(Clone, Debug)]
pub struct Resampled<T> {
    pub series: HourlySeries<T>,
    /// Fraction of the expected native readings present in each hour.
    pub coverage: Vec<f64>,
}

/// Collapses raw readings into an hourly series.
pub fn resample_to_hourly<T: Scalar>(
    records: &[RawRecord<T>],
    policy: Aggregation,
) -> Result<HourlySeries<T>> {
    resample_with_coverage(records, policy).map(|r| r.series)
}

/// [`resample_to_hourly`] that also reports how much of each hour was covered.
///
/// The native step is taken as the smallest spacing between consecutive
/// records; an hour's coverage is its record count over `3600 s / step`.
pub fn resample_with_coverage<T: Scalar>(
    records: &[RawRecord<T>],
    policy: Aggregation,
) -> Result<Resampled<T>> {
    let first = records.first().ok_or(Error::Empty)?;
    let expected_unit = policy.unit();
    for (index, rec) in records.iter().enumerate() {
        if index > 0 && rec.timestamp <= records[index - 1].timestamp {
            return Err(Error::Unsorted { index });
        }
        if let Some(reading) = rec.load {
            if reading.unit() != expected_unit {
                return Err(Error::MixedUnits {
                    index,
                    expected: expected_unit.label(),
                    found: reading.unit().label(),
                });
            }
        }
    }

    let start = floor_hour(first.timestamp);
    let last = floor_hour(records[records.len() - 1].timestamp);
    let hours = ((last - start).num_hours() + 1) as usize;

    let step_secs = records
        .windows(2)
        .map(|w| (w[1].timestamp - w[0].timestamp).num_seconds())
        .min()
        .unwrap_or(3600)
        .max(1);
    let per_hour = (3600.0 / step_secs as f64).round().max(1.0);

    let mut load_acc = vec![(T::zero(), 0usize); hours];
    let mut temp_acc = vec![(T::zero(), 0usize); hours];
    let mut counts = vec![0usize; hours];
    for rec in records {
        let h = (floor_hour(rec.timestamp) - start).num_hours() as usize;
        counts[h] += 1;
        if let Some(reading) = rec.load {
            load_acc[h].0 += reading.value();
            load_acc[h].1 += 1;
        }
        if let Some(t) = rec.temperature {
            temp_acc[h].0 += t;
            temp_acc[h].1 += 1;
        }
    }

    let thousand = T::of(1000.0);
    let load = load_acc
        .into_iter()
        .map(|(sum, n)| match (n, policy) {
            (0, _) => None,
            (_, Aggregation::SumEnergy) => Some(sum / thousand),
            (n, Aggregation::MeanPower) => Some(sum / T::of_usize(n)),
        })
        .collect();
    let temperature = temp_acc
        .into_iter()
        .map(|(sum, n)| (n > 0).then(|| sum / T::of_usize(n)))
        .collect();
    let coverage = counts
        .into_iter()
        .map(|c| (c as f64 / per_hour).min(1.0))
        .collect();

    Ok(Resampled {
        series: HourlySeries::new(start, load, temperature)?,
        coverage,
    })
}

/// Sidecar metadata declaring how to interpret a raw CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceMeta {
    pub unit: LoadUnit,
    /// Native reading interval in minutes.
    pub resolution_minutes: u32,
}

impl SourceMeta {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, toml::to_string(self)?)?;
        Ok(())
    }
}

const HEADER: [&str; 3] = ["timestamp", "load", "temperature"];

fn parse_cell<T: Scalar>(cell: &str, line: usize) -> Result<Option<T>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: cannot parse `{cell}` as a number")))?;
    Ok(Some(T::of(v)))
}

fn fmt_cell<T: Scalar>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Reads `timestamp,load,temperature` rows; `unit` tags the load column.
pub fn read_records<T: Scalar, R: Read>(reader: R, unit: LoadUnit) -> Result<Vec<RawRecord<T>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).ne(HEADER.iter().copied()) {
        return Err(Error::Config(format!(
            "expected header `timestamp,load,temperature`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let timestamp = DateTime::parse_from_rfc3339(row.get(0).unwrap_or("").trim())
            .map_err(|e| Error::Config(format!("line {line}: bad timestamp: {e}")))?
            .with_timezone(&Utc);
        let load = parse_cell::<T>(row.get(1).unwrap_or(""), line)?.map(|v| Reading::tagged(unit, v));
        let temperature = parse_cell(row.get(2).unwrap_or(""), line)?;
        out.push(RawRecord {
            timestamp,
            load,
            temperature,
        });
    }
    Ok(out)
}

pub fn read_records_file<T: Scalar>(path: &Path, unit: LoadUnit) -> Result<Vec<RawRecord<T>>> {
    read_records(std::fs::File::open(path)?, unit)
}

/// Writes raw records in their native unit.
pub fn write_records<T: Scalar, W: Write>(writer: W, records: &[RawRecord<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for rec in records {
        w.write_record([
            rec.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            fmt_cell(rec.load.map(|r| r.value())),
            fmt_cell(rec.temperature),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes an hourly series (load in kW).
pub fn write_hourly<T: Scalar, W: Write>(writer: W, series: &HourlySeries<T>) -> Result<()> {
    write_records(writer, &series.to_records())
}

/// Serde adapter for dates written either as `"2024-06-01"` or as a bare
/// TOML date.
pub(crate) mod calendar_date {
    use chrono::NaiveDate;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Toml(toml::value::Datetime),
    }

    pub fn serialize<S: Serializer>(date: &NaiveDate, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&date.format("%Y-%m-%d"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
        let text = match Raw::deserialize(d)? {
            Raw::Text(s) => s,
            Raw::Toml(dt) => dt.to_string(),
        };
        NaiveDate::parse_from_str(&text, "%Y-%m-%d").map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
    }

    fn minute_energy(start: &str, minutes: usize, wh: f64) -> Vec<RawRecord<f64>> {
        let t0 = ts(start);
        (0..minutes)
            .map(|m| RawRecord {
                timestamp: t0 + Duration::minutes(m as i64),
                load: Some(Reading::Energy(wh)),
                temperature: Some(10.0 + m as f64),
            })
            .collect()
    }

    #[test]
    fn sixty_minutes_of_ten_wh_is_point_six_kw() {
        let recs = minute_energy("2024-01-01T00:00:00Z", 60, 10.0);
        let s = resample_to_hourly(&recs, Aggregation::SumEnergy).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.load()[0].unwrap() - 0.6).abs() < 1e-12);
        // mean of 10..=69
        assert!((s.temperature()[0].unwrap() - 39.5).abs() < 1e-12);
    }

    #[test]
    fn half_hour_power_is_averaged() {
        let t0 = ts("2024-01-01T05:00:00Z");
        let recs = vec![
            RawRecord { timestamp: t0, load: Some(Reading::Power(1.0)), temperature: None },
            RawRecord {
                timestamp: t0 + Duration::minutes(30),
                load: Some(Reading::Power(2.0)),
                temperature: None,
            },
        ];
        let s = resample_to_hourly(&recs, Aggregation::MeanPower).unwrap();
        assert_eq!(s.load(), &[Some(1.5)]);
        assert_eq!(s.temperature(), &[None]);
        assert_eq!(s.start(), t0);
    }

    #[test]
    fn empty_hour_is_missing_not_zero() {
        let t0 = ts("2024-01-01T00:00:00Z");
        let recs = vec![
            RawRecord { timestamp: t0, load: Some(Reading::Power(1.0)), temperature: Some(5.0) },
            RawRecord {
                timestamp: t0 + Duration::hours(2),
                load: Some(Reading::Power(3.0)),
                temperature: Some(6.0),
            },
        ];
        let s = resample_to_hourly(&recs, Aggregation::MeanPower).unwrap();
        assert_eq!(s.load(), &[Some(1.0), None, Some(3.0)]);
        assert_eq!(s.missing_load(), 1);
    }

    #[test]
    fn rejects_mixed_units_and_unsorted() {
        let t0 = ts("2024-01-01T00:00:00Z");
        let a = RawRecord { timestamp: t0, load: Some(Reading::Power(1.0)), temperature: None };
        let b = RawRecord {
            timestamp: t0 + Duration::minutes(30),
            load: Some(Reading::Energy(1.0)),
            temperature: None,
        };
        assert!(matches!(
            resample_to_hourly(&[a.clone(), b.clone()], Aggregation::MeanPower),
            Err(Error::MixedUnits { index: 1, .. })
        ));
        let mut c = a.clone();
        c.timestamp = t0 - Duration::minutes(1);
        assert!(matches!(
            resample_to_hourly(&[a.clone(), c], Aggregation::MeanPower),
            Err(Error::Unsorted { index: 1 })
        ));
        assert!(matches!(
            resample_to_hourly(&[a.clone(), a], Aggregation::MeanPower),
            Err(Error::Unsorted { index: 1 })
        ));
        assert!(matches!(
            resample_to_hourly::<f64>(&[], Aggregation::MeanPower),
            Err(Error::Empty)
        ));
    }

    #[test]
    fn partial_boundary_hours_are_kept_with_coverage() {
        let recs = minute_energy("2024-01-01T00:30:00Z", 60, 10.0);
        let r = resample_with_coverage(&recs, Aggregation::SumEnergy).unwrap();
        assert_eq!(r.series.len(), 2);
        assert_eq!(r.series.start(), ts("2024-01-01T00:00:00Z"));
        assert_eq!(r.coverage, vec![0.5, 0.5]);
    }

    #[test]
    fn calendar_facts() {
        let c = calendar_of(ts("2024-01-01T00:00:00Z"));
        assert_eq!((c.hour_of_day, c.day_of_week, c.day_of_year, c.is_weekend), (0, 0, 1, false));
        let c = calendar_of(ts("2024-07-06T13:00:00Z"));
        assert_eq!(c.hour_of_day, 13);
        assert_eq!(c.day_of_week, 5);
        assert!(c.is_weekend);
        let c = calendar_of(ts("2024-12-31T23:00:00Z"));
        assert_eq!(c.day_of_year, 366);
    }

    #[test]
    fn csv_round_trip_with_missing_cells() {
        let s = HourlySeries::new(
            ts("2024-03-01T00:00:00Z"),
            vec![Some(0.5), None, Some(0.25)],
            vec![Some(12.0), Some(11.5), None],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_hourly(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp,load,temperature\n2024-03-01T00:00:00Z,0.5,12\n"));
        let recs = read_records::<f64, _>(&buf[..], LoadUnit::Kw).unwrap();
        let back = resample_to_hourly(&recs, Aggregation::MeanPower).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_unaligned_start() {
        let r = HourlySeries::<f64>::new(ts("2024-01-01T00:30:00Z"), vec![], vec![]);
        assert!(matches!(r, Err(Error::NotHourAligned(_))));
    }
}
