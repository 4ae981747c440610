//! Domain types, units, and configuration shared by all other modules.
//!
//! Everything is stored in one internal unit system: times in subframes
//! (1 subframe = 1 ms), speed in meters per subframe, density in devices
//! per square meter. The derived quantities `d₀ = v·τ₀` (ring width) and
//! `l = v·T` (disturbance radius) then need no conversion anywhere.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Errors raised by configuration handling and type invariants.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("config line {line}: {reason}")]
    ConfigParse { line: usize, reason: String },
    #[error("invalid device field: {0}")]
    InvalidField(String),
    #[error("invalid metrics: {0}")]
    InvalidMetrics(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ============================================================================
// Scheduler configuration
// ============================================================================

/// All scalar model parameters of the scheme.
///
/// | field     | symbol | unit                  |
/// |-----------|--------|-----------------------|
/// | `sigma`   | σ      | subframes (SR period) |
/// | `y`       | y      | subframes (threshold) |
/// | `beta`    | β      | subframes             |
/// | `delta`   | δ      | subframes             |
/// | `tau0`    | τ₀     | subframes             |
/// | `t_spread`| T      | subframes             |
/// | `v`       | v      | meters per subframe   |
/// | `lambda`  | λ      | devices per m²        |
/// | `n_max`   | N_max  | grants                |
/// | `tau_max` | τ_max  | subframes             |
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerConfig {
    /// SR period σ: each device gets one SR opportunity every σ subframes.
    pub sigma: u32,
    /// Prediction threshold y for the first ring.
    pub y: u32,
    /// SR-to-grant delay β.
    pub beta: f64,
    /// Fixed post-grant delay δ (0.5 mean buffering alignment + 4 grant-to-data).
    pub delta: f64,
    /// Ring-crossing time τ₀; the ring width is d₀ = v·τ₀.
    pub tau0: f64,
    /// Disturbance spreading time T; the region radius is l = v·T.
    pub t_spread: f64,
    /// Disturbance propagation speed v.
    pub v: f64,
    /// Device intensity λ of the Poisson field.
    pub lambda: f64,
    /// Maximum simultaneous uplink grants N_max.
    pub n_max: u32,
    /// Maximum ring-crossing time τ_max satisfying the delay condition.
    pub tau_max: f64,
}

impl Default for SchedulerConfig {
    /// Reference parameter set: σ=40, y=1, β=1, δ=4.5, τ₀=10, T=1000,
    /// v=0.3 m/subframe, λ=0.11 /m², N_max=1000, τ_max=10.
    fn default() -> Self {
        SchedulerConfig {
            sigma: 40,
            y: 1,
            beta: 1.0,
            delta: 4.5,
            tau0: 10.0,
            t_spread: 1000.0,
            v: 0.3,
            lambda: 0.11,
            n_max: 1000,
            tau_max: 10.0,
        }
    }
}

impl SchedulerConfig {
    /// Ring width d₀ = v·τ₀ in meters.
    pub fn d0(&self) -> f64 {
        self.v * self.tau0
    }

    /// Disturbance region radius l = v·T in meters.
    pub fn radius(&self) -> f64 {
        self.v * self.t_spread
    }

    /// Number of rings n = ⌈T/τ₀⌉ (guarded against float ratios such as
    /// 1000/0.1 landing just above an integer).
    pub fn ring_count(&self) -> u32 {
        (self.t_spread / self.tau0 - 1e-9).ceil().max(1.0) as u32
    }

    /// Checks every invariant and returns the config unchanged if all hold.
    pub fn validate(self) -> Result<Self, ModelError> {
        fn err(field: &'static str, reason: impl Into<String>) -> ModelError {
            ModelError::InvalidConfig {
                field,
                reason: reason.into(),
            }
        }
        let finite = [
            ("beta", self.beta),
            ("delta", self.delta),
            ("tau0", self.tau0),
            ("T", self.t_spread),
            ("v", self.v),
            ("lambda", self.lambda),
            ("tau_max", self.tau_max),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return Err(err(name, format!("must be finite, got {value}")));
            }
        }
        if self.sigma < 2 {
            return Err(err("sigma", format!("must be ≥ 2, got {}", self.sigma)));
        }
        if self.y < 1 || self.y > self.sigma - 1 {
            return Err(err(
                "y",
                format!("must be in [1, sigma-1] = [1, {}], got {}", self.sigma - 1, self.y),
            ));
        }
        if self.beta < 1.0 {
            return Err(err("beta", format!("must be ≥ 1, got {}", self.beta)));
        }
        if self.delta <= 0.0 {
            return Err(err("delta", format!("must be positive, got {}", self.delta)));
        }
        if self.tau0 <= 0.0 {
            return Err(err("tau0", format!("must be positive, got {}", self.tau0)));
        }
        if self.t_spread < self.tau0 {
            return Err(err(
                "T",
                format!("must satisfy tau0 ≤ T, got T={} < tau0={}", self.t_spread, self.tau0),
            ));
        }
        if self.v <= 0.0 {
            return Err(err("v", format!("must be positive, got {}", self.v)));
        }
        if self.lambda <= 0.0 {
            return Err(err("lambda", format!("must be positive, got {}", self.lambda)));
        }
        if self.n_max < 1 {
            return Err(err("n_max", "must be ≥ 1".to_string()));
        }
        if self.tau_max <= 0.0 {
            return Err(err("tau_max", format!("must be positive, got {}", self.tau_max)));
        }
        Ok(self)
    }

    /// Applies one `key=value` pair. Key names match the config-file keys
    /// exactly: `sigma, y, beta, delta, tau0, T, v, lambda, n_max, tau_max`.
    fn apply_pair(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn int(value: &str) -> Result<u32, String> {
            value
                .parse::<u32>()
                .map_err(|_| format!("expected a non-negative integer, got {value:?}"))
        }
        fn num(value: &str) -> Result<f64, String> {
            value
                .parse::<f64>()
                .map_err(|_| format!("expected a number, got {value:?}"))
        }
        match key {
            "sigma" => self.sigma = int(value)?,
            "y" => self.y = int(value)?,
            "beta" => self.beta = num(value)?,
            "delta" => self.delta = num(value)?,
            "tau0" => self.tau0 = num(value)?,
            "T" => self.t_spread = num(value)?,
            "v" => self.v = num(value)?,
            "lambda" => self.lambda = num(value)?,
            "n_max" => self.n_max = int(value)?,
            "tau_max" => self.tau_max = num(value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Parses flat `key=value` text (one pair per line, `#` comments and
    /// blank lines allowed) on top of `self` and returns the result.
    /// Unknown and duplicate keys are errors; the result is not validated —
    /// call [`SchedulerConfig::validate`] afterwards.
    pub fn with_config_str(mut self, text: &str) -> Result<Self, ModelError> {
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |reason: String| ModelError::ConfigParse {
                line: idx + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got {line:?}")))?;
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(parse_err(format!("duplicate key {key:?}")));
            }
            self.apply_pair(key, value).map_err(parse_err)?;
            seen.push(key.to_string());
        }
        Ok(self)
    }

    /// Reads a config file (see [`SchedulerConfig::with_config_str`]).
    pub fn with_config_file(self, path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        self.with_config_str(&text)
    }

    /// Serializes every field as `key=value` lines in canonical key order.
    /// Round-trips: applying the output onto any base reproduces `self`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "sigma={}", self.sigma);
        let _ = writeln!(out, "y={}", self.y);
        let _ = writeln!(out, "beta={}", self.beta);
        let _ = writeln!(out, "delta={}", self.delta);
        let _ = writeln!(out, "tau0={}", self.tau0);
        let _ = writeln!(out, "T={}", self.t_spread);
        let _ = writeln!(out, "v={}", self.v);
        let _ = writeln!(out, "lambda={}", self.lambda);
        let _ = writeln!(out, "n_max={}", self.n_max);
        let _ = writeln!(out, "tau_max={}", self.tau_max);
        out
    }
}

// ============================================================================
// Device field
// ============================================================================

/// A sampled device field: positions (meters, relative to the region
/// center), per-device SR offsets in {1,…,σ}, and the index of the
/// event-origin device (the device the disturbance starts at).
#[derive(Debug, Clone)]
pub struct DeviceField {
    pub positions: Vec<(f64, f64)>,
    pub offsets: Vec<u32>,
    pub origin_index: usize,
}

impl DeviceField {
    /// Builds a field after checking the type invariants.
    pub fn new(
        positions: Vec<(f64, f64)>,
        offsets: Vec<u32>,
        origin_index: usize,
        sigma: u32,
    ) -> Result<Self, ModelError> {
        if positions.len() != offsets.len() {
            return Err(ModelError::InvalidField(format!(
                "positions ({}) and offsets ({}) differ in length",
                positions.len(),
                offsets.len()
            )));
        }
        if origin_index >= positions.len() {
            return Err(ModelError::InvalidField(format!(
                "origin_index {} out of range for {} devices",
                origin_index,
                positions.len()
            )));
        }
        if let Some(bad) = offsets.iter().position(|&o| o < 1 || o > sigma) {
            return Err(ModelError::InvalidField(format!(
                "offset {} of device {bad} outside [1, {sigma}]",
                offsets[bad]
            )));
        }
        Ok(DeviceField {
            positions,
            offsets,
            origin_index,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Euclidean distance from device `i` to the origin device.
    pub fn distance_from_origin(&self, i: usize) -> f64 {
        let (ox, oy) = self.positions[self.origin_index];
        let (x, y) = self.positions[i];
        ((x - ox).powi(2) + (y - oy).powi(2)).sqrt()
    }
}

// ============================================================================
// Metrics report
// ============================================================================

/// Whether a report came from the closed forms or from simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Analytic,
    Simulated,
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Source::Analytic => write!(f, "analytic"),
            Source::Simulated => write!(f, "simulated"),
        }
    }
}

/// The three headline metrics: expected uplink delay E(D), the proportion
/// of devices transmitting without an SR (P(SR) = P(S)), and the
/// proportion of wasted proactive grants (P(W) = P(U)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// Mean uplink delay in subframes.
    pub expected_delay: f64,
    /// Proportion of devices served without sending an SR.
    pub sr_saving: f64,
    /// Proportion of devices whose proactive grant was wasted.
    pub wastage: f64,
    pub source: Source,
    /// 95% confidence half-width of the delay estimate (zero for analytic).
    pub ci_half_width_delay: f64,
    /// 95% confidence half-width covering both proportion estimates
    /// (the larger of the two; zero for analytic).
    pub ci_half_width_prob: f64,
}

impl MetricsReport {
    /// Builds a report after checking the invariants: proportions in
    /// [0, 1] (raw values may overshoot by at most 1e-12 and are clamped),
    /// `sr_saving + wastage ≤ 1`, and `expected_delay ≥ 1 + β + δ`
    /// (no device can beat the minimum grant path).
    pub fn new(
        expected_delay: f64,
        sr_saving: f64,
        wastage: f64,
        source: Source,
        ci_half_width_delay: f64,
        ci_half_width_prob: f64,
        beta: f64,
        delta: f64,
    ) -> Result<Self, ModelError> {
        let clamp_prob = |name: &str, p: f64| -> Result<f64, ModelError> {
            if !(-1e-12..=1.0 + 1e-12).contains(&p) {
                return Err(ModelError::InvalidMetrics(format!(
                    "{name} = {p} outside [0, 1]"
                )));
            }
            Ok(p.clamp(0.0, 1.0))
        };
        let sr_saving = clamp_prob("sr_saving", sr_saving)?;
        let wastage = clamp_prob("wastage", wastage)?;
        if sr_saving + wastage > 1.0 + 1e-9 {
            return Err(ModelError::InvalidMetrics(format!(
                "sr_saving + wastage = {} exceeds 1",
                sr_saving + wastage
            )));
        }
        let floor = 1.0 + beta + delta;
        if expected_delay < floor - 1e-9 {
            return Err(ModelError::InvalidMetrics(format!(
                "expected_delay = {expected_delay} below the minimum grant path {floor}"
            )));
        }
        Ok(MetricsReport {
            expected_delay,
            sr_saving,
            wastage,
            source,
            ci_half_width_delay,
            ci_half_width_prob,
        })
    }
}

// ============================================================================
// Tests
// ============================================================================
