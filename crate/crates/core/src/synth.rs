//! Seeded two-climate residential load and temperature generator.
//!
//! An hourly latent process is built first and then expanded into native
//! records (one-minute energy readings or half-hourly power readings) whose
//! hourly aggregate equals the latent value. Injected spikes and gaps are
//! recorded by hour index so tests can check preprocessing against them.

use std::f64::consts::PI;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{mean_std, Scalar};
use crate::seed::derive_seed;
use crate::timeseries::{midnight, HourlySeries, LoadUnit, RawRecord, Reading};

/// Lowest load the generator emits, in kW.
pub const LOAD_FLOOR: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    /// One-minute energy readings in Wh.
    #[serde(rename = "1min")]
    OneMinute,
    /// Half-hourly mean power readings in kW.
    #[serde(rename = "30min")]
    ThirtyMinute,
}

impl Resolution {
    pub fn minutes(self) -> u32 {
        match self {
            Resolution::OneMinute => 1,
            Resolution::ThirtyMinute => 30,
        }
    }

    pub fn unit(self) -> LoadUnit {
        match self {
            Resolution::OneMinute => LoadUnit::Wh,
            Resolution::ThirtyMinute => LoadUnit::Kw,
        }
    }
}

/// Parameters of one household climate profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClimateProfile {
    pub name: String,
    /// kW.
    pub base_load: f64,
    /// Multiplier of the base load for each hour of the day.
    pub daily_shape: Vec<f64>,
    pub weekend_multiplier: f64,
    /// °C.
    pub temp_mean: f64,
    pub temp_annual_amplitude: f64,
    /// Day of year of the warmest point of the annual cycle.
    pub temp_peak_day: f64,
    pub temp_diurnal_amplitude: f64,
    /// Hour of the warmest point of the daily cycle.
    pub temp_peak_hour: f64,
    /// Stationary standard deviation of the AR(1) weather noise, °C.
    pub temp_noise_std: f64,
    pub temp_noise_ar: f64,
    /// kW per °C above the annual mean; negative for heating-driven demand.
    pub coupling: f64,
    /// Stationary standard deviation of the AR(1) load noise, kW.
    pub noise_std: f64,
    pub noise_ar: f64,
    /// Probability per hour that a heavy-tailed demand burst starts.
    pub volatility: f64,
    /// Mean burst height, kW.
    pub burst_scale: f64,
    pub resolution: Resolution,
}

impl ClimateProfile {
    /// Mild oceanic climate: morning and evening peaks, heating-driven
    /// temperature response, changeable weather and bursty demand.
    pub fn maritime() -> Self {
        Self {
            name: "maritime".into(),
            base_load: 0.5,
            daily_shape: vec![
                0.75, 0.7, 0.68, 0.68, 0.68, 0.7, 0.75, 1.35, 1.25, 0.9, 0.8, 0.8, 0.95, 0.85, 0.8, 0.85, 1.05, 1.6,
                2.1, 1.9, 1.5, 1.3, 1.05, 0.8,
            ],
            weekend_multiplier: 1.08,
            temp_mean: 10.0,
            temp_annual_amplitude: 5.0,
            temp_peak_day: 225.0,
            temp_diurnal_amplitude: 1.5,
            temp_peak_hour: 15.0,
            temp_noise_std: 2.5,
            temp_noise_ar: 0.97,
            coupling: -0.01,
            noise_std: 0.08,
            noise_ar: 0.7,
            volatility: 0.002,
            burst_scale: 0.2,
            resolution: Resolution::OneMinute,
        }
    }

    /// Hot humid climate: air-conditioning evening peak, cooling-driven
    /// temperature response and steady weather.
    pub fn tropical() -> Self {
        Self {
            name: "tropical".into(),
            base_load: 0.4,
            daily_shape: vec![
                1.0, 0.95, 0.9, 0.85, 0.8, 0.78, 0.85, 0.8, 0.65, 0.6, 0.6, 0.75, 1.05, 0.8, 0.7, 0.7, 0.8, 1.0,
                1.5, 1.95, 1.8, 1.5, 1.3, 1.1,
            ],
            weekend_multiplier: 1.15,
            temp_mean: 28.0,
            temp_annual_amplitude: 1.0,
            temp_peak_day: 120.0,
            temp_diurnal_amplitude: 3.5,
            temp_peak_hour: 14.0,
            temp_noise_std: 0.6,
            temp_noise_ar: 0.9,
            coupling: 0.01,
            noise_std: 0.045,
            noise_ar: 0.7,
            volatility: 0.0,
            burst_scale: 0.0,
            resolution: Resolution::ThirtyMinute,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "maritime" => Ok(Self::maritime()),
            "tropical" => Ok(Self::tropical()),
            other => Err(Error::Config(format!("unknown climate profile `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if !(self.base_load > 0.0) {
            return bad(format!("base_load must be positive, got {}", self.base_load));
        }
        if self.daily_shape.len() != 24 {
            return bad(format!("daily_shape needs 24 factors, got {}", self.daily_shape.len()));
        }
        if !(self.noise_std >= 0.0 && self.temp_noise_std >= 0.0) {
            return bad("noise standard deviations must be non-negative".into());
        }
        for (name, v) in [("noise_ar", self.noise_ar), ("temp_noise_ar", self.temp_noise_ar)] {
            if !(v.abs() < 1.0) {
                return bad(format!("{name} must lie in (-1, 1), got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.volatility) || !(self.burst_scale >= 0.0) {
            return bad("volatility must lie in [0, 1] and burst_scale be non-negative".into());
        }
        Ok(())
    }
}

/// What to inject on top of the clean process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionSpec {
    pub spikes: usize,
    /// Spike height in standard deviations of the clean hourly load.
    pub spike_sigmas: f64,
    pub gaps: usize,
    pub min_gap_hours: usize,
    pub max_gap_hours: usize,
}

impl Default for InjectionSpec {
    fn default() -> Self {
        Self {
            spikes: 0,
            spike_sigmas: 8.0,
            gaps: 0,
            min_gap_hours: 1,
            max_gap_hours: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub index: usize,
    /// kW added to the hourly load.
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
}

/// Ground truth of what was injected, by hourly index from the series start.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InjectionLog {
    pub hours: usize,
    pub outliers: Vec<Spike>,
    pub gaps: Vec<Gap>,
}

impl InjectionLog {
    pub fn outlier_indices(&self) -> Vec<usize> {
        self.outliers.iter().map(|s| s.index).collect()
    }

    pub fn gap_indices(&self) -> Vec<usize> {
        self.gaps.iter().flat_map(|g| g.start..g.end).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Full generator input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub profile: ClimateProfile,
    pub start: NaiveDate,
    /// Inclusive.
    pub end: NaiveDate,
    pub seed: u64,
    #[serde(default)]
    pub injection: InjectionSpec,
}

impl SynthConfig {
    pub fn new(profile: ClimateProfile, seed: u64) -> Self {
        Self {
            profile,
            start: default_start(),
            end: default_end(),
            seed,
            injection: InjectionSpec::default(),
        }
    }
}

pub fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 9, 23).expect("valid date")
}

pub fn default_end() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 7, 6).expect("valid date")
}

/// Clean hourly load and temperature before injection.
pub struct Latent {
    pub load: Vec<f64>,
    pub temperature: Vec<f64>,
}

fn ar1_step(rng: &mut ChaCha8Rng, prev: f64, phi: f64, std: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    phi * prev + (1.0 - phi * phi).sqrt() * std * z
}

/// The clean hourly process for `hours` hours from `start`.
pub fn latent(profile: &ClimateProfile, start: NaiveDate, hours: usize, seed: u64) -> Latent {
    let mut temp_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "temperature"));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "load-noise"));
    let mut burst_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "bursts"));
    let burst = (profile.burst_scale > 0.0).then(|| Exp::new(1.0 / profile.burst_scale).expect("positive rate"));

    let t0 = midnight(start);
    let mut temp_noise = ar1_step(&mut temp_rng, 0.0, 0.0, profile.temp_noise_std);
    let mut load_noise = ar1_step(&mut noise_rng, 0.0, 0.0, profile.noise_std);
    let mut burst_left = 0usize;
    let mut burst_height = 0.0;
    let mut load = Vec::with_capacity(hours);
    let mut temperature = Vec::with_capacity(hours);
    for i in 0..hours {
        let ts = t0 + Duration::hours(i as i64);
        let hour = ts.hour() as usize;
        let doy = ts.ordinal() as f64;
        let weekend = ts.weekday().num_days_from_monday() >= 5;
        if i > 0 {
            temp_noise = ar1_step(&mut temp_rng, temp_noise, profile.temp_noise_ar, profile.temp_noise_std);
            load_noise = ar1_step(&mut noise_rng, load_noise, profile.noise_ar, profile.noise_std);
        }
        let temp = profile.temp_mean
            + profile.temp_annual_amplitude * (2.0 * PI * (doy - profile.temp_peak_day) / 365.25).cos()
            + profile.temp_diurnal_amplitude * (2.0 * PI * (hour as f64 - profile.temp_peak_hour) / 24.0).cos()
            + temp_noise;

        // draw every hour so the stream does not depend on outcomes
        let u: f64 = burst_rng.random();
        let h = burst.map(|d| d.sample(&mut burst_rng)).unwrap_or(0.0);
        let len = burst_rng.random_range(1..=3usize);
        if burst_left == 0 && u < profile.volatility {
            burst_left = len;
            burst_height = h;
        }
        let extra = if burst_left > 0 {
            burst_left -= 1;
            burst_height
        } else {
            0.0
        };

        let weekly = if weekend { profile.weekend_multiplier } else { 1.0 };
        let value = profile.base_load * profile.daily_shape[hour] * weekly
            + profile.coupling * (temp - profile.temp_mean)
            + load_noise
            + extra;
        load.push(value.max(LOAD_FLOOR));
        temperature.push(temp);
    }
    Latent { load, temperature }
}

fn inject(latent: &mut Latent, spec: &InjectionSpec, seed: u64) -> Result<(InjectionLog, Vec<bool>)> {
    let n = latent.load.len();
    let mut log = InjectionLog {
        hours: n,
        ..Default::default()
    };
    let mut removed = vec![false; n];
    if spec.spikes == 0 && spec.gaps == 0 {
        return Ok((log, removed));
    }
    if spec.min_gap_hours == 0 || spec.min_gap_hours > spec.max_gap_hours {
        return Err(Error::InvalidParam("gap lengths need 1 ≤ min ≤ max".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "injection"));
    let sigma = mean_std(&latent.load).map(|(_, s)| s).unwrap_or(0.0);
    // a week of clean history first, and a buffer between injected events
    let lo = 168;
    let margin = 2;
    if n <= lo + spec.max_gap_hours + margin {
        return Err(Error::TooShort {
            len: n,
            needed: lo + spec.max_gap_hours + margin + 1,
        });
    }
    let mut taken = vec![false; n];
    let free = |taken: &[bool], a: usize, b: usize| {
        let from = a.saturating_sub(margin);
        let to = (b + margin).min(taken.len());
        !taken[from..to].iter().any(|&t| t)
    };
    let attempts = 1000 * (spec.spikes + spec.gaps);
    let mut tries = 0;
    while log.gaps.len() < spec.gaps {
        tries += 1;
        if tries > attempts {
            return Err(Error::InvalidParam("could not place every gap".into()));
        }
        let len = rng.random_range(spec.min_gap_hours..=spec.max_gap_hours);
        let start = rng.random_range(lo..n - len);
        if free(&taken, start, start + len) {
            taken[start..start + len].iter_mut().for_each(|t| *t = true);
            removed[start..start + len].iter_mut().for_each(|t| *t = true);
            log.gaps.push(Gap { start, end: start + len });
        }
    }
    while log.outliers.len() < spec.spikes {
        tries += 1;
        if tries > attempts {
            return Err(Error::InvalidParam("could not place every spike".into()));
        }
        let index = rng.random_range(lo..n);
        if free(&taken, index, index + 1) {
            taken[index] = true;
            let magnitude = spec.spike_sigmas * sigma;
            latent.load[index] += magnitude;
            log.outliers.push(Spike { index, magnitude });
        }
    }
    log.gaps.sort_by_key(|g| g.start);
    log.outliers.sort_by_key(|s| s.index);
    Ok((log, removed))
}

/// Splits one hourly value into `parts` zero-sum perturbed shares.
fn jitter(rng: &mut ChaCha8Rng, parts: usize, spread: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..parts).map(|_| rng.random_range(-spread..=spread)).collect();
    let mean = raw.iter().sum::<f64>() / parts as f64;
    raw.into_iter().map(|v| 1.0 + v - mean).collect()
}

/// Generates native-resolution records and the matching injection log.
pub fn generate<T: Scalar>(config: &SynthConfig) -> Result<(Vec<RawRecord<T>>, InjectionLog)> {
    let profile = &config.profile;
    profile.validate()?;
    if config.start > config.end {
        return Err(Error::InvalidParam(format!(
            "start {} is after end {}",
            config.start, config.end
        )));
    }
    let days = (config.end - config.start).num_days() as usize + 1;
    let hours = days * 24;
    let mut lat = latent(profile, config.start, hours, config.seed);
    let (log, removed) = inject(&mut lat, &config.injection, config.seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "records"));
    let step = profile.resolution.minutes() as i64;
    let parts = (60 / step) as usize;
    let t0 = midnight(config.start);
    let mut records = Vec::with_capacity(hours * parts);
    for (h, &gone) in removed.iter().enumerate() {
        // consume the stream for removed hours too, so gaps do not shift it
        let shares = jitter(&mut rng, parts, 0.2);
        let temp_shares = jitter(&mut rng, parts, 0.01);
        if gone {
            continue;
        }
        let kw = lat.load[h];
        for k in 0..parts {
            let ts = t0 + Duration::hours(h as i64) + Duration::minutes(k as i64 * step);
            let load = match profile.resolution {
                Resolution::OneMinute => Reading::Energy(T::of(kw * 1000.0 / 60.0 * shares[k])),
                Resolution::ThirtyMinute => Reading::Power(T::of(kw * shares[k])),
            };
            records.push(RawRecord {
                timestamp: ts,
                load: Some(load),
                temperature: Some(T::of(lat.temperature[h] * temp_shares[k])),
            });
        }
    }
    Ok((records, log))
}

/// Clean hourly series without injection, for tests and diagnostics.
pub fn generate_hourly<T: Scalar>(config: &SynthConfig) -> Result<HourlySeries<T>> {
    config.profile.validate()?;
    let days = (config.end - config.start).num_days().max(-1) + 1;
    let hours = days.max(0) as usize * 24;
    let lat = latent(&config.profile, config.start, hours, config.seed);
    let load: Vec<T> = lat.load.iter().map(|&v| T::of(v)).collect();
    let temp: Vec<T> = lat.temperature.iter().map(|&v| T::of(v)).collect();
    HourlySeries::from_values(midnight(config.start), &load, &temp)
}
