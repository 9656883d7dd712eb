//! Scenario configuration: plain-text `key=value` files plus presets.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geo::{LonLat, KM_PER_DEGREE};
use crate::iccp::IccpParams;
use crate::insmodel::SensorConfig;
use crate::mapgrid::{synth_map, GravityMap, Roughness, SynthParams};
use crate::matcher::MatchConfig;

/// Noise levels the matcher falls back to when a sensor is configured as
/// noiseless; the likelihoods need a positive spread.
pub const MATCH_SIGMA_Z_FLOOR: f64 = 1e-2;
pub const MATCH_SIGMA_V_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Vbmp,
    Rvbmp,
    Rvbmp2,
    ViterbiExact,
    Iccp,
    /// Dead reckoning only.
    None,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Vbmp => "vbmp",
            Algorithm::Rvbmp => "rvbmp",
            Algorithm::Rvbmp2 => "rvbmp2",
            Algorithm::ViterbiExact => "viterbi_exact",
            Algorithm::Iccp => "iccp",
            Algorithm::None => "none",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "vbmp" => Algorithm::Vbmp,
            "rvbmp" => Algorithm::Rvbmp,
            "rvbmp2" | "rvbmp_2" => Algorithm::Rvbmp2,
            "viterbi_exact" | "viterbi" => Algorithm::ViterbiExact,
            "iccp" => Algorithm::Iccp,
            "none" | "ins" => Algorithm::None,
            other => return Err(Error::Config(format!("unknown algorithm {other:?}"))),
        })
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Named flight paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Short straight leg inside a 1.6 x 1.6 degree tile, for quick experiments.
    Desk,
    MelbourneSydney,
    PerthInland,
}

impl Route {
    pub fn waypoints(self) -> Vec<LonLat> {
        match self {
            Route::Desk => vec![LonLat::new(140.3, -37.7), LonLat::new(141.3, -37.2)],
            Route::MelbourneSydney => vec![LonLat::new(144.9631, -37.8136), LonLat::new(151.2093, -33.8688)],
            // endpoint given as (lat, lon) = (-24.427111, 124.978610)
            Route::PerthInland => vec![LonLat::new(115.8605, -31.9505), LonLat::new(124.978610, -24.427111)],
        }
    }
}

impl FromStr for Route {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "desk" => Ok(Route::Desk),
            "melbourne-sydney" => Ok(Route::MelbourneSydney),
            "perth" | "perth-inland" => Ok(Route::PerthInland),
            other => Err(Error::Config(format!("unknown route {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapSource {
    File(PathBuf),
    Synth(SynthParams),
}

/// Everything needed to reproduce a batch of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Map file; when absent a synthetic map is generated.
    pub map: Option<PathBuf>,
    /// South-west corner of the synthetic map; fitted around the route when absent.
    pub map_origin: Option<LonLat>,
    /// Synthetic map size in degrees (lon, lat); fitted around the route when absent.
    pub map_extent: Option<LonLat>,
    pub map_resolution: f64,
    pub map_roughness: Roughness,
    pub map_seed: u64,
    pub map_bumps: Option<usize>,
    pub waypoints: Vec<LonLat>,
    pub speed_deg_per_hr: f64,
    pub dt_s: f64,
    /// Segment length between corrections.
    #[serde(rename = "T")]
    pub t: usize,
    pub n: usize,
    pub o: usize,
    pub alpha: f64,
    pub sigma_z_mgal: f64,
    pub sigma_v_deg_per_s: f64,
    pub bias_deg_per_hr: LonLat,
    pub n_mc: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Truncates the trajectory to this many steps after the start.
    pub steps: Option<usize>,
    /// Divergence threshold; defaults to the half-window extent.
    pub divergence_km: Option<f64>,
    pub iccp_max_iter: usize,
    pub iccp_tol: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            map: None,
            map_origin: None,
            map_extent: None,
            map_resolution: 0.01,
            map_roughness: Roughness::Rough,
            map_seed: 42,
            map_bumps: None,
            waypoints: Route::Desk.waypoints(),
            speed_deg_per_hr: 7.54,
            dt_s: 12.0,
            t: 6,
            n: 13,
            o: 7,
            alpha: 0.1,
            sigma_z_mgal: 1.0,
            sigma_v_deg_per_s: 9e-6,
            bias_deg_per_hr: LonLat::new(1.0, 0.0),
            n_mc: 100,
            seed: 1,
            algorithm: Algorithm::Rvbmp2,
            steps: None,
            divergence_km: None,
            iccp_max_iter: IccpParams::default().max_iter,
            iccp_tol: IccpParams::default().tol,
            exec: Execution::default(),
        }
    }
}

/// Keys accepted in config files and on the command line.
pub const KEYS: &[&str] = &[
    "map",
    "map_origin",
    "map_extent",
    "map_resolution",
    "map_roughness",
    "map_seed",
    "map_bumps",
    "route",
    "waypoints",
    "speed_deg_per_hr",
    "dt_s",
    "T",
    "n",
    "o",
    "alpha",
    "sigma_z_mgal",
    "sigma_v_deg_per_s",
    "bias_deg_per_hr",
    "n_mc",
    "seed",
    "algorithm",
    "steps",
    "divergence_km",
    "iccp_max_iter",
    "iccp_tol",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn pair(key: &str, value: &str) -> Result<LonLat> {
    let parts: Vec<&str> = value.split(',').collect();
    match parts.as_slice() {
        [a, b] => Ok(LonLat::new(num(key, a)?, num(key, b)?)),
        _ => Err(Error::Config(format!("{key}: expected \"lon,lat\", got {value:?}"))),
    }
}

fn optional(value: &str) -> Option<&str> {
    let v = value.trim();
    (!v.is_empty() && !v.eq_ignore_ascii_case("none") && !v.eq_ignore_ascii_case("auto")).then_some(v)
}

impl Scenario {
    /// Sets one configuration key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "map" => self.map = optional(v).map(PathBuf::from),
            "map_origin" => self.map_origin = optional(v).map(|v| pair(key, v)).transpose()?,
            "map_extent" => {
                self.map_extent = match optional(v) {
                    None => None,
                    Some(v) if v.contains(',') => Some(pair(key, v)?),
                    Some(v) => {
                        let e: f64 = num(key, v)?;
                        Some(LonLat::new(e, e))
                    }
                }
            }
            "map_resolution" => {
                // accepts "0.005" or "1/200"
                self.map_resolution = match v.split_once('/') {
                    Some((a, b)) => num::<f64>(key, a)? / num::<f64>(key, b)?,
                    None => num(key, v)?,
                }
            }
            "map_roughness" => self.map_roughness = v.parse()?,
            "map_seed" => self.map_seed = num(key, v)?,
            "map_bumps" => self.map_bumps = optional(v).map(|v| num(key, v)).transpose()?,
            "route" => self.waypoints = v.parse::<Route>()?.waypoints(),
            "waypoints" => {
                self.waypoints = v
                    .split(';')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| pair(key, s))
                    .collect::<Result<_>>()?
            }
            "speed_deg_per_hr" => self.speed_deg_per_hr = num(key, v)?,
            "dt_s" => self.dt_s = num(key, v)?,
            "T" | "t" | "segment_len" => self.t = num(key, v)?,
            "n" => self.n = num(key, v)?,
            "o" => self.o = num(key, v)?,
            "alpha" => self.alpha = num(key, v)?,
            "sigma_z_mgal" => self.sigma_z_mgal = num(key, v)?,
            "sigma_v_deg_per_s" => self.sigma_v_deg_per_s = num(key, v)?,
            "bias_deg_per_hr" => {
                self.bias_deg_per_hr = if v.contains(',') { pair(key, v)? } else { LonLat::new(num(key, v)?, 0.0) }
            }
            "n_mc" => self.n_mc = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "algorithm" => self.algorithm = v.parse()?,
            "steps" => self.steps = optional(v).map(|v| num(key, v)).transpose()?,
            "divergence_km" => self.divergence_km = optional(v).map(|v| num(key, v)).transpose()?,
            "iccp_max_iter" => self.iccp_max_iter = num(key, v)?,
            "iccp_tol" => self.iccp_tol = num(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every `key=value` line of `text`. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {raw:?}", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut s = Scenario::default();
        s.apply_text(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Config file text that reproduces this scenario.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |o: Option<String>| o.unwrap_or_else(|| "auto".into());
        let ll = |p: LonLat| format!("{},{}", p.lon, p.lat);
        let _ = writeln!(s, "map={}", opt(self.map.as_ref().map(|p| p.display().to_string())));
        let _ = writeln!(s, "map_origin={}", opt(self.map_origin.map(ll)));
        let _ = writeln!(s, "map_extent={}", opt(self.map_extent.map(ll)));
        let _ = writeln!(s, "map_resolution={}", self.map_resolution);
        let _ = writeln!(s, "map_roughness={}", match self.map_roughness {
            Roughness::Rough => "rough",
            Roughness::Smooth => "smooth",
        });
        let _ = writeln!(s, "map_seed={}", self.map_seed);
        let _ = writeln!(s, "map_bumps={}", opt(self.map_bumps.map(|b| b.to_string())));
        let wp: Vec<String> = self.waypoints.iter().map(|&p| ll(p)).collect();
        let _ = writeln!(s, "waypoints={}", wp.join(";"));
        let _ = writeln!(s, "speed_deg_per_hr={}", self.speed_deg_per_hr);
        let _ = writeln!(s, "dt_s={}", self.dt_s);
        let _ = writeln!(s, "T={}", self.t);
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "o={}", self.o);
        let _ = writeln!(s, "alpha={}", self.alpha);
        let _ = writeln!(s, "sigma_z_mgal={}", self.sigma_z_mgal);
        let _ = writeln!(s, "sigma_v_deg_per_s={}", self.sigma_v_deg_per_s);
        let _ = writeln!(s, "bias_deg_per_hr={}", ll(self.bias_deg_per_hr));
        let _ = writeln!(s, "n_mc={}", self.n_mc);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "algorithm={}", self.algorithm);
        let _ = writeln!(s, "steps={}", opt(self.steps.map(|v| v.to_string())));
        let _ = writeln!(s, "divergence_km={}", opt(self.divergence_km.map(|v| v.to_string())));
        let _ = writeln!(s, "iccp_max_iter={}", self.iccp_max_iter);
        let _ = writeln!(s, "iccp_tol={}", self.iccp_tol);
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.match_config().validate()?;
        self.sensor_config().validate()?;
        if self.waypoints.len() < 2 {
            return Err(Error::Config("need at least two waypoints".into()));
        }
        if !(self.speed_deg_per_hr > 0.0) {
            return Err(Error::Config("speed_deg_per_hr must be positive".into()));
        }
        if !(self.map_resolution > 0.0) {
            return Err(Error::Config("map_resolution must be positive".into()));
        }
        if self.n_mc == 0 {
            return Err(Error::Config("n_mc must be at least 1".into()));
        }
        if self.steps == Some(0) {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.iccp_max_iter == 0 || !(self.iccp_tol > 0.0) {
            return Err(Error::Config("iccp_max_iter and iccp_tol must be positive".into()));
        }
        Ok(())
    }

    /// Sensor model used to simulate measurements.
    pub fn sensor_config(&self) -> SensorConfig {
        SensorConfig {
            bias: self.bias_deg_per_hr,
            sigma_v: self.sigma_v_deg_per_s,
            sigma_z: self.sigma_z_mgal,
            dt: self.dt_s,
        }
    }

    /// Matcher settings; noiseless sensors are floored to a small positive spread.
    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            segment_len: self.t,
            n: self.n,
            o: match self.algorithm {
                Algorithm::Rvbmp2 | Algorithm::ViterbiExact => self.o,
                _ => 1,
            },
            alpha: self.alpha,
            sigma_z: self.sigma_z_mgal.max(MATCH_SIGMA_Z_FLOOR),
            sigma_v: self.sigma_v_deg_per_s.max(MATCH_SIGMA_V_FLOOR),
            dt: self.dt_s,
            exec: Execution::Sequential,
        }
    }

    pub fn iccp_params(&self) -> IccpParams {
        IccpParams { max_iter: self.iccp_max_iter, tol: self.iccp_tol }
    }

    /// Divergence threshold for `map`, in km.
    pub fn divergence_threshold_km(&self, map: &GravityMap) -> f64 {
        self.divergence_km
            .unwrap_or_else(|| self.n as f64 / 2.0 * map.res_lon().max(map.res_lat()) * KM_PER_DEGREE)
    }

    /// Synthetic map parameters, fitted around the route with a margin of
    /// two windows plus the worst-case bias drift when origin/extent are unset.
    pub fn synth_params(&self) -> SynthParams {
        let (mut lo, mut hi) = (self.waypoints[0], self.waypoints[0]);
        for p in &self.waypoints {
            lo = LonLat::new(lo.lon.min(p.lon), lo.lat.min(p.lat));
            hi = LonLat::new(hi.lon.max(p.lon), hi.lat.max(p.lat));
        }
        let route_len: f64 = self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        let hours = route_len / self.speed_deg_per_hr;
        let margin = 2.0 * self.n as f64 * self.map_resolution + self.bias_deg_per_hr.norm() * hours;
        let origin = self.map_origin.unwrap_or(LonLat::new(lo.lon - margin, lo.lat - margin));
        let extent = self
            .map_extent
            .unwrap_or(LonLat::new(hi.lon - lo.lon + 2.0 * margin, hi.lat - lo.lat + 2.0 * margin));
        // at least 64 cells a side
        let min = 64.0 * self.map_resolution;
        SynthParams {
            origin,
            extent_lon: extent.lon.max(min),
            extent_lat: extent.lat.max(min),
            resolution: self.map_resolution,
            roughness: self.map_roughness,
            seed: self.map_seed,
            bumps: self.map_bumps,
        }
    }

    pub fn map_source(&self) -> MapSource {
        match &self.map {
            Some(p) => MapSource::File(p.clone()),
            None => MapSource::Synth(self.synth_params()),
        }
    }

    pub fn build_map(&self) -> Result<GravityMap> {
        match self.map_source() {
            MapSource::File(p) => GravityMap::load(&p),
            MapSource::Synth(p) => synth_map(&p),
        }
    }
}
