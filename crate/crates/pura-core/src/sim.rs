//! Discrete-event Monte Carlo simulator of one disturbance episode.
//!
//! An episode: devices are scattered on a disc by a homogeneous Poisson
//! point process; the disturbance starts at the origin device at a
//! continuous time t₀ uniform within one subframe and spreads outward at
//! speed v, so device i's data arrives at `t_i = t₀ + distance_i/v` —
//! but only for devices within `l = v·T` of the origin; the disturbance
//! never reaches the rest and they take no part in the episode. Data is
//! buffered at the next subframe boundary; a buffered device sends an SR
//! at its first opportunity (subframes ≡ offset mod σ) strictly after
//! buffering, unless it was served by a proactive grant first.
//!
//! Three policies are simulated: `standard` (everyone requests),
//! `two_d_pura` (the ring planner from module [`crate::pura`] runs once
//! when the origin's SR arrives), and `one_d` (a nearest-neighbor
//! one-to-one prediction chain, kept as a sanity companion to the
//! analytic 1-D baseline).
//!
//! The per-subframe cost model matches the analytic module: an SR costs
//! β subframes of scheduling turnaround, and δ covers processing plus
//! the average 0.5-subframe alignment cost that the simulator realizes
//! explicitly through continuous arrival times — hence the constant
//! `δ − 0.5` added to every realized delay.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{DeviceField, MetricsReport, ModelError, SchedulerConfig, Source};
use crate::pura::{cluster, opportunity_phase, plan, DeviceState, GrantStatus};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("sampled zero devices; an episode needs an origin device")]
    EmptyField,
    #[error("invalid simulation parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ============================================================================
// Policies and RNG plumbing
// ============================================================================

/// Scheduling policy simulated for an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Every device sends an SR and waits for its grant.
    Standard,
    /// One-to-one proactive prediction along nearest neighbors.
    OneD,
    /// Ring-based proactive allocation around the origin.
    TwoDPura,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Standard, Policy::OneD, Policy::TwoDPura];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Standard => "standard",
            Policy::OneD => "one_d",
            Policy::TwoDPura => "two_d_pura",
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "standard" => Ok(Policy::Standard),
            "one_d" => Ok(Policy::OneD),
            "two_d_pura" => Ok(Policy::TwoDPura),
            other => Err(SimError::InvalidParameter(format!(
                "unknown policy '{other}' (expected standard, one_d, or two_d_pura)"
            ))),
        }
    }
}

/// Derives one independent random stream per episode from a master seed,
/// so episodes can run in parallel yet reproduce exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngPolicy {
    pub seed: u64,
    /// Offset added to the episode index when picking the stream; lets a
    /// sweep runner give each grid point its own block of streams.
    pub stream_base: u64,
}

impl RngPolicy {
    pub fn new(seed: u64) -> Self {
        RngPolicy {
            seed,
            stream_base: 0,
        }
    }

    pub fn with_stream_base(seed: u64, stream_base: u64) -> Self {
        RngPolicy { seed, stream_base }
    }

    /// The generator for one episode: same (seed, episode) → same stream.
    pub fn episode_rng(&self, episode: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_base.wrapping_add(episode));
        rng
    }
}

// ============================================================================
// Field sampling
// ============================================================================

/// Samples a device field: Poisson(λπr²) devices placed i.i.d. uniformly
/// on the disc of the given radius, offsets i.i.d. uniform on {1..σ},
/// origin = the device nearest the disc center. Draw order is part of
/// the reproducibility contract: count, then per-device position pairs,
/// then all offsets.
pub fn sample_field(
    lambda: f64,
    radius: f64,
    sigma: u32,
    rng: &mut impl Rng,
) -> Result<DeviceField, SimError> {
    if !(lambda > 0.0) || !(radius > 0.0) {
        return Err(SimError::InvalidParameter(format!(
            "need lambda > 0 and radius > 0, got lambda = {lambda}, radius = {radius}"
        )));
    }
    if sigma < 2 {
        return Err(SimError::InvalidParameter(format!(
            "need sigma >= 2, got {sigma}"
        )));
    }
    let mean = lambda * PI * radius * radius;
    let poisson = Poisson::new(mean)
        .map_err(|e| SimError::InvalidParameter(format!("Poisson({mean}): {e}")))?;
    let count = poisson.sample(rng) as usize;
    if count == 0 {
        return Err(SimError::EmptyField);
    }
    let mut positions = Vec::with_capacity(count);
    for _ in 0..count {
        let r = radius * rng.random::<f64>().sqrt();
        let theta = TAU * rng.random::<f64>();
        positions.push((r * theta.cos(), r * theta.sin()));
    }
    let offsets: Vec<u32> = (0..count).map(|_| rng.random_range(1..=sigma)).collect();
    let origin = positions
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = a.1 .0.hypot(a.1 .1);
            let db = b.1 .0.hypot(b.1 .1);
            da.partial_cmp(&db).unwrap().then(a.0.cmp(&b.0))
        })
        .map(|(i, _)| i)
        .expect("count >= 1");
    Ok(DeviceField::new(positions, offsets, origin, sigma)?)
}

// ============================================================================
// Episode simulation
// ============================================================================

/// How a device's uplink data reached the base station.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DevicePath {
    /// Served by a proactive grant; no SR sent.
    ProactiveSuccess,
    /// Granted proactively, but the data missed the grant; fell back to
    /// the standard SR path.
    ProactiveWasteThenStandard,
    /// Plain SR → grant → data.
    Standard,
}

impl std::fmt::Display for DevicePath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DevicePath::ProactiveSuccess => write!(f, "proactive-success"),
            DevicePath::ProactiveWasteThenStandard => write!(f, "proactive-waste-then-standard"),
            DevicePath::Standard => write!(f, "standard"),
        }
    }
}

/// Outcome for one device that received data during the episode.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceRecord {
    pub device_id: usize,
    /// Distance from the origin device, meters.
    pub distance: f64,
    /// Continuous data-arrival time, subframes.
    pub arrival: f64,
    pub path: DevicePath,
    /// Uplink delay, subframes.
    pub delay: f64,
    pub sent_sr: bool,
}

/// One simulated episode: a record per device the disturbance reached
/// (origin included), plus aggregates over those records excluding the
/// origin.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub records: Vec<DeviceRecord>,
    pub origin_device: usize,
    /// Data-holding devices excluding the origin.
    pub device_count: usize,
    pub success_count: usize,
    pub waste_count: usize,
    pub sum_delay: f64,
}

impl EpisodeOutcome {
    /// Mean delay over the counted devices; `None` when only the origin
    /// had data.
    pub fn mean_delay(&self) -> Option<f64> {
        (self.device_count > 0).then(|| self.sum_delay / self.device_count as f64)
    }
}

/// A device the disturbance reaches, with its buffering and SR timing.
struct Participant {
    id: usize,
    distance: f64,
    /// Continuous arrival time t_i.
    arrival: f64,
    /// Buffering subframe d_i = ⌊t_i⌋ + 1.
    buffered: i64,
    /// First SR opportunity strictly after buffering.
    sr_opportunity: i64,
}

/// First subframe strictly after `t` on the lattice ≡ offset (mod σ).
fn first_opportunity_after(t: i64, offset: u32, sigma: u32) -> i64 {
    let s = sigma as i64;
    t + (offset as i64 - t - 1).rem_euclid(s) + 1
}

/// Simulates one episode of the disturbance over `field` under `policy`.
///
/// The rng supplies only the episode's start phase t₀ ∈ [0, 1); all
/// other randomness lives in the field. Devices the disturbance never
/// reaches (farther than `v·T` from the origin) are absent from the
/// outcome entirely.
pub fn run_episode(
    field: &DeviceField,
    config: &SchedulerConfig,
    policy: Policy,
    rng: &mut impl Rng,
) -> EpisodeOutcome {
    let t0: f64 = rng.random();
    let reach = config.radius(); // l = v·T
    let sigma = config.sigma;

    let mut participants = Vec::with_capacity(field.len());
    for i in 0..field.len() {
        let distance = field.distance_from_origin(i);
        if distance > reach {
            continue;
        }
        let arrival = t0 + distance / config.v;
        let buffered = arrival.floor() as i64 + 1;
        participants.push(Participant {
            id: i,
            distance,
            arrival,
            buffered,
            sr_opportunity: first_opportunity_after(buffered, field.offsets[i], sigma),
        });
    }

    // grant subframe per device id, for devices targeted proactively
    let mut grants: Vec<Option<i64>> = vec![None; field.len()];
    match policy {
        Policy::Standard => {}
        Policy::TwoDPura => plan_two_d(field, config, &participants, &mut grants),
        Policy::OneD => plan_one_d(field, config, &participants, &mut grants),
    }

    let standard_extra = config.beta + config.delta - 0.5;
    let proactive_extra = config.delta - 0.5;
    let mut records = Vec::with_capacity(participants.len());
    let mut device_count = 0usize;
    let mut success_count = 0usize;
    let mut waste_count = 0usize;
    let mut sum_delay = 0.0f64;
    for p in &participants {
        let (path, delay, sent_sr) = match grants[p.id] {
            Some(g) if p.buffered < g => (
                DevicePath::ProactiveSuccess,
                (g as f64 - p.arrival) + proactive_extra,
                false,
            ),
            Some(_) => (
                DevicePath::ProactiveWasteThenStandard,
                (p.sr_opportunity as f64 - p.arrival) + standard_extra,
                true,
            ),
            None => (
                DevicePath::Standard,
                (p.sr_opportunity as f64 - p.arrival) + standard_extra,
                true,
            ),
        };
        debug_assert!(delay > 0.0);
        if p.id != field.origin_index {
            device_count += 1;
            sum_delay += delay;
            match path {
                DevicePath::ProactiveSuccess => success_count += 1,
                DevicePath::ProactiveWasteThenStandard => waste_count += 1,
                DevicePath::Standard => {}
            }
        }
        records.push(DeviceRecord {
            device_id: p.id,
            distance: p.distance,
            arrival: p.arrival,
            path,
            delay,
            sent_sr,
        });
    }
    debug_assert!(success_count + waste_count <= device_count);
    EpisodeOutcome {
        records,
        origin_device: field.origin_index,
        device_count,
        success_count,
        waste_count,
        sum_delay,
    }
}

/// Runs the ring planner once, when the origin's SR is received, and
/// collects the grants it schedules. Devices beyond the disturbance's
/// reach keep an empty state (they never buffer, never send an SR) but
/// still appear in the partition, as clustering is purely geometric.
fn plan_two_d(
    field: &DeviceField,
    config: &SchedulerConfig,
    participants: &[Participant],
    grants: &mut [Option<i64>],
) {
    let origin = field.origin_index;
    let sr_rx = participants
        .iter()
        .find(|p| p.id == origin)
        .expect("origin is always reached")
        .sr_opportunity;
    let mut states: Vec<Option<DeviceState>> = (0..field.len())
        .map(|i| {
            Some(DeviceState {
                sr_time: None,
                next_opportunity: first_opportunity_after(sr_rx, field.offsets[i], config.sigma),
            })
        })
        .collect();
    for p in participants {
        states[p.id] = Some(DeviceState {
            sr_time: Some(p.sr_opportunity as f64),
            next_opportunity: first_opportunity_after(sr_rx, field.offsets[p.id], config.sigma),
        });
    }
    let partition = cluster(field, config.d0(), config.ring_count());
    let planned = plan(&partition, config, sr_rx, &states).expect("state built for every device");
    for entry in &planned.entries {
        if entry.status == GrantStatus::Targeted {
            grants[entry.device] = entry.grant_subframe;
        }
    }
}

/// One-to-one prediction chain: each received SR triggers the evaluation
/// of the sender's nearest not-yet-handled neighbor against threshold y;
/// a targeted neighbor gets its grant y subframes after that SR. Every
/// device is evaluated at most once.
fn plan_one_d(
    field: &DeviceField,
    config: &SchedulerConfig,
    participants: &[Participant],
    grants: &mut [Option<i64>],
) {
    let y = config.y as i64;
    // pending SR events in (time, id) order
    let mut queue: BinaryHeap<Reverse<(i64, usize)>> = participants
        .iter()
        .map(|p| Reverse((p.sr_opportunity, p.id)))
        .collect();
    let mut served = vec![false; field.len()]; // proactive success: SR suppressed
    let mut handled = vec![false; field.len()]; // sent an SR or already evaluated
    while let Some(Reverse((sr_rx, sender))) = queue.pop() {
        if served[sender] {
            continue;
        }
        handled[sender] = true;
        let (sx, sy) = field.positions[sender];
        let candidate = participants
            .iter()
            .filter(|p| !handled[p.id])
            .min_by(|a, b| {
                let (ax, ay) = field.positions[a.id];
                let (bx, by) = field.positions[b.id];
                let da = (ax - sx).hypot(ay - sy);
                let db = (bx - sx).hypot(by - sy);
                da.partial_cmp(&db).unwrap().then(a.id.cmp(&b.id))
            });
        let Some(target) = candidate else { continue };
        handled[target.id] = true;
        let eligible = target.sr_opportunity > sr_rx;
        let phase = opportunity_phase(target.sr_opportunity, sr_rx as f64, config.sigma as i64);
        if eligible && phase > y as f64 {
            let grant = sr_rx + y;
            grants[target.id] = Some(grant);
            if target.buffered < grant {
                served[target.id] = true; // no SR from this device
            }
        }
    }
}

// ============================================================================
// Monte Carlo estimation
// ============================================================================

/// Per-episode sums folded into the pooled estimate, in episode order.
#[derive(Debug, Clone, Copy, Default)]
struct EpisodeStats {
    devices: u64,
    successes: u64,
    wastes: u64,
    sum_delay: f64,
    sum_delay_sq: f64,
}

fn episode_stats(outcome: &EpisodeOutcome) -> EpisodeStats {
    let mut stats = EpisodeStats {
        devices: outcome.device_count as u64,
        successes: outcome.success_count as u64,
        wastes: outcome.waste_count as u64,
        ..EpisodeStats::default()
    };
    for r in &outcome.records {
        if r.device_id != outcome.origin_device {
            stats.sum_delay += r.delay;
            stats.sum_delay_sq += r.delay * r.delay;
        }
    }
    stats
}

/// Estimates the per-device metrics of a policy by simulating
/// independent episodes and pooling all counted devices.
///
/// Each episode samples a fresh field and runs from its own random
/// stream, so the result is deterministic for a fixed (seed, episodes)
/// no matter how episodes are scheduled across threads. The 95%
/// confidence half-widths use the normal approximation over the pooled
/// devices; `ci_half_width_prob` is the wider of the success- and
/// waste-proportion intervals.
pub fn monte_carlo(
    config: &SchedulerConfig,
    policy: Policy,
    episodes: u64,
    seed: u64,
) -> Result<MetricsReport, SimError> {
    monte_carlo_streamed(config, policy, episodes, RngPolicy::new(seed))
}

/// [`monte_carlo`] with explicit stream control, for sweep runners that
/// allot each grid point its own block of episode streams.
pub fn monte_carlo_streamed(
    config: &SchedulerConfig,
    policy: Policy,
    episodes: u64,
    rng_policy: RngPolicy,
) -> Result<MetricsReport, SimError> {
    if episodes == 0 {
        return Err(SimError::InvalidParameter("episodes must be >= 1".into()));
    }
    let config = config.validate()?;
    let per_episode: Vec<Result<EpisodeStats, SimError>> = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = rng_policy.episode_rng(e);
            let field = sample_field(config.lambda, config.radius(), config.sigma, &mut rng)?;
            let outcome = run_episode(&field, &config, policy, &mut rng);
            Ok(episode_stats(&outcome))
        })
        .collect();
    // Sequential fold in episode order: float additions happen in the
    // same order regardless of the parallel schedule above.
    let mut total = EpisodeStats::default();
    for stats in per_episode {
        let s = stats?;
        total.devices += s.devices;
        total.successes += s.successes;
        total.wastes += s.wastes;
        total.sum_delay += s.sum_delay;
        total.sum_delay_sq += s.sum_delay_sq;
    }
    if total.devices == 0 {
        return Err(SimError::InvalidParameter(
            "no non-origin devices were reached in any episode; cannot estimate metrics".into(),
        ));
    }
    let n = total.devices as f64;
    let mean = total.sum_delay / n;
    let variance = if total.devices > 1 {
        ((total.sum_delay_sq - total.sum_delay * total.sum_delay / n) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let ci_delay = 1.96 * (variance / n).sqrt();
    let p_success = total.successes as f64 / n;
    let p_waste = total.wastes as f64 / n;
    let ci_prob = |p: f64| 1.96 * (p * (1.0 - p) / n).sqrt();
    Ok(MetricsReport::new(
        mean,
        p_success,
        p_waste,
        Source::Simulated,
        ci_delay,
        ci_prob(p_success).max(ci_prob(p_waste)),
        config.beta,
        config.delta,
    )?)
}

// ============================================================================
// Single-device oracle
// ============================================================================

/// Brute-force estimates from [`single_device_oracle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub expected_delay: f64,
    pub prob_success: f64,
    pub prob_unsuccess: f64,
}

/// Brute-force companion to the closed forms in [`crate::analytic`]:
/// simulates a single device whose data arrives τ subframes after the
/// disturbance passes the reference point, with the reference's SR sent
/// after a uniform 1..σ wait and the proactive grant scheduled y
/// subframes after that SR when the eligibility and timing criteria
/// hold. Nothing here reuses the analytic formulas, so agreement between
/// the two is evidence, not tautology.
pub fn single_device_oracle(
    tau: f64,
    y: u32,
    sigma: u32,
    delta: f64,
    beta: f64,
    trials: u64,
    seed: u64,
) -> Result<OracleEstimate, SimError> {
    if sigma < 2 || y < 1 || y > sigma - 1 {
        return Err(SimError::InvalidParameter(format!(
            "need sigma >= 2 and 1 <= y <= sigma-1, got sigma = {sigma}, y = {y}"
        )));
    }
    if !(0.0..=sigma as f64).contains(&tau) {
        return Err(SimError::InvalidParameter(format!(
            "need 0 <= tau <= sigma, got tau = {tau}"
        )));
    }
    if trials == 0 {
        return Err(SimError::InvalidParameter("trials must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum_delay = 0.0f64;
    let mut successes = 0u64;
    let mut wastes = 0u64;
    for _ in 0..trials {
        let t0: f64 = rng.random();
        let wait: u32 = rng.random_range(1..=sigma); // reference SR wait after buffering
        let offset: u32 = rng.random_range(1..=sigma); // device's own lattice
        let sr = 1 + wait as i64; // reference buffers at subframe ⌊t₀⌋+1 = 1
        let arrival = t0 + tau;
        let buffered = arrival.floor() as i64 + 1;
        let own_sr = first_opportunity_after(buffered, offset, sigma);
        let eligible = own_sr > sr;
        let phase = opportunity_phase(own_sr, sr as f64, sigma as i64);
        let targeted = eligible && phase > y as f64;
        let grant = sr + y as i64;
        if targeted && buffered < grant {
            successes += 1;
            sum_delay += (grant as f64 - arrival) + (delta - 0.5);
        } else {
            if targeted {
                wastes += 1;
            }
            sum_delay += (own_sr as f64 - arrival) + beta + (delta - 0.5);
        }
    }
    let n = trials as f64;
    Ok(OracleEstimate {
        expected_delay: sum_delay / n,
        prob_success: successes as f64 / n,
        prob_unsuccess: wastes as f64 / n,
    })
}

// ============================================================================
// Trace export
// ============================================================================

/// Writes the per-device trace of an episode as CSV with columns
/// `device_id,distance,arrival,path,delay,sent_sr`.
pub fn write_trace_csv<W: Write>(outcome: &EpisodeOutcome, writer: W) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["device_id", "distance", "arrival", "path", "delay", "sent_sr"])?;
    for r in &outcome.records {
        out.write_record([
            r.device_id.to_string(),
            r.distance.to_string(),
            r.arrival.to_string(),
            r.path.to_string(),
            r.delay.to_string(),
            r.sent_sr.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

// ============================================================================
// Tests
// ============================================================================

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_config() -> SchedulerConfig {
        SchedulerConfig::default()
    }

    /// Reduced-density config used by most simulation tests: same time
    /// parameters, ~1.4k devices per episode instead of ~31k.
    fn sparse_config() -> SchedulerConfig {
        SchedulerConfig {
            lambda: 0.005,
            ..SchedulerConfig::default()
        }
    }

    #[test]
    fn first_opportunity_after_is_strictly_later_and_on_lattice() {
        assert_eq!(first_opportunity_after(1, 1, 40), 41);
        assert_eq!(first_opportunity_after(0, 40, 40), 40);
        assert_eq!(first_opportunity_after(5, 3, 40), 43);
        for t in 0..90 {
            for offset in 1..=7 {
                let e = first_opportunity_after(t, offset, 7);
                assert!(e > t && e - t <= 7);
                assert_eq!(e.rem_euclid(7), (offset as i64).rem_euclid(7));
            }
        }
    }

    #[test]
    fn sample_field_empty_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = sample_field(1e-12, 1.0, 40, &mut rng).unwrap_err();
        assert!(matches!(err, SimError::EmptyField));
    }

    #[test]
    fn sample_field_geometry_and_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let field = sample_field(0.005, 300.0, 40, &mut rng).unwrap();
        assert!(field.len() > 1000 && field.len() < 2000); // mean ≈ 1414
        let center_dist = |i: usize| {
            let (x, y) = field.positions[i];
            x.hypot(y)
        };
        for i in 0..field.len() {
            assert!(center_dist(i) <= 300.0);
            assert!((1..=40).contains(&field.offsets[i]));
        }
        let nearest = (0..field.len())
            .min_by(|&a, &b| center_dist(a).partial_cmp(&center_dist(b)).unwrap())
            .unwrap();
        assert_eq!(field.origin_index, nearest);
    }

    #[test]
    fn sample_field_mean_count_matches_intensity() {
        // λπr² = 1, so 400 draws sum to ≈ Poisson(400); ±3σ = ±60.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut total = 0usize;
        for _ in 0..400 {
            match sample_field(1.0 / PI, 1.0, 4, &mut rng) {
                Ok(f) => total += f.len(),
                Err(SimError::EmptyField) => {}
                Err(e) => panic!("{e}"),
            }
        }
        assert!((340..=460).contains(&total), "total = {total}");
    }

    #[test]
    fn standard_policy_everyone_requests() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = sparse_config();
        let field = sample_field(cfg.lambda, cfg.radius(), cfg.sigma, &mut rng).unwrap();
        let out = run_episode(&field, &cfg, Policy::Standard, &mut rng);
        assert_eq!(out.success_count, 0);
        assert_eq!(out.waste_count, 0);
        assert!(out.records.iter().all(|r| r.sent_sr));
        assert!(out.records.iter().all(|r| r.delay > 0.0));
        // delay = SR wait + β + (δ − 0.5), within its hard bounds
        for r in &out.records {
            assert!(r.delay > 1.0 + 0.5 && r.delay < 41.0 + 1.0 + 4.0 + 1.0);
        }
    }

    #[test]
    fn two_d_pura_conservation_and_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = sparse_config();
        let field = sample_field(cfg.lambda, cfg.radius(), cfg.sigma, &mut rng).unwrap();
        let out = run_episode(&field, &cfg, Policy::TwoDPura, &mut rng);
        assert!(out.success_count > 0, "expect some proactive successes");
        assert!(out.success_count + out.waste_count <= out.device_count);
        // every counted device completes by exactly one path
        let mut successes = 0;
        let mut sr_senders = 0;
        for r in &out.records {
            if r.device_id == out.origin_device {
                assert!(r.sent_sr, "the origin always requests");
                continue;
            }
            assert_eq!(r.sent_sr, r.path != DevicePath::ProactiveSuccess);
            if r.path == DevicePath::ProactiveSuccess {
                successes += 1;
            }
            if r.sent_sr {
                sr_senders += 1;
            }
        }
        assert_eq!(successes + sr_senders, out.device_count);
        assert_eq!(successes, out.success_count);
    }

    #[test]
    fn two_d_pura_no_waste_when_y_at_least_tau0() {
        let cfg = SchedulerConfig {
            y: 10,
            tau0: 10.0,
            lambda: 0.005,
            ..SchedulerConfig::default()
        };
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let field = sample_field(cfg.lambda, cfg.radius(), cfg.sigma, &mut rng).unwrap();
            let out = run_episode(&field, &cfg, Policy::TwoDPura, &mut rng);
            assert_eq!(out.waste_count, 0, "seed {seed}");
        }
    }

    #[test]
    fn origin_only_field_has_empty_metrics() {
        let field = DeviceField::new(vec![(0.0, 0.0)], vec![17], 0, 40).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = run_episode(&field, &reference_config(), Policy::TwoDPura, &mut rng);
        assert_eq!(out.device_count, 0);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.mean_delay(), None);
    }

    #[test]
    fn unreached_devices_are_absent() {
        // second device sits beyond v·T from the first (the origin)
        let positions = vec![(0.0, 0.0), (299.0, 0.0), (400.0, 0.0)];
        let field = DeviceField::new(positions, vec![1, 2, 3], 0, 40).unwrap();
        let cfg = reference_config(); // reach = 0.3 · 1000 = 300
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = run_episode(&field, &cfg, Policy::Standard, &mut rng);
        let ids: Vec<usize> = out.records.iter().map(|r| r.device_id).collect();
        assert_eq!(ids, vec![0, 1]);
        assert_eq!(out.device_count, 1);
    }

    #[test]
    fn one_d_chain_grants_some_and_conserves() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = sparse_config();
        let field = sample_field(cfg.lambda, cfg.radius(), cfg.sigma, &mut rng).unwrap();
        let out = run_episode(&field, &cfg, Policy::OneD, &mut rng);
        assert!(out.success_count + out.waste_count <= out.device_count);
        for r in &out.records {
            assert_eq!(r.sent_sr, r.path != DevicePath::ProactiveSuccess);
            assert!(r.delay > 0.0);
        }
        // one-to-one: grants can never exceed the number of SRs received
        let srs = out.records.iter().filter(|r| r.sent_sr).count();
        assert!(out.success_count + out.waste_count <= srs);
    }

    #[test]
    fn run_episode_is_deterministic() {
        let cfg = sparse_config();
        for policy in Policy::ALL {
            let mut rng_a = ChaCha8Rng::seed_from_u64(13);
            let field_a = sample_field(cfg.lambda, cfg.radius(), cfg.sigma, &mut rng_a).unwrap();
            let out_a = run_episode(&field_a, &cfg, policy, &mut rng_a);
            let mut rng_b = ChaCha8Rng::seed_from_u64(13);
            let field_b = sample_field(cfg.lambda, cfg.radius(), cfg.sigma, &mut rng_b).unwrap();
            let out_b = run_episode(&field_b, &cfg, policy, &mut rng_b);
            assert_eq!(out_a, out_b, "{policy}");
        }
    }

    #[test]
    fn monte_carlo_same_seed_same_report() {
        let cfg = sparse_config();
        let a = monte_carlo(&cfg, Policy::TwoDPura, 4, 99).unwrap();
        let b = monte_carlo(&cfg, Policy::TwoDPura, 4, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.source, Source::Simulated);
    }

    #[test]
    fn monte_carlo_ci_shrinks_with_episodes() {
        let cfg = sparse_config();
        let one = monte_carlo(&cfg, Policy::Standard, 1, 21).unwrap();
        let many = monte_carlo(&cfg, Policy::Standard, 64, 21).unwrap();
        let ratio = many.ci_half_width_delay / one.ci_half_width_delay;
        // ≈ 1/8 with some slack for the random device counts
        assert!(ratio > 0.06 && ratio < 0.22, "ratio = {ratio}");
    }

    #[test]
    fn oracle_matches_frozen_closed_form_values() {
        // P(S) at (τ=5, y=1, σ=40) is 1546/3200 and P(U) is 0.095;
        // 2·10⁵ trials give standard errors ≈ 0.0011 and 0.00066.
        let est = single_device_oracle(5.0, 1, 40, 4.5, 1.0, 200_000, 31).unwrap();
        assert!((est.prob_success - 0.483125).abs() < 3.3e-3, "{est:?}");
        assert!((est.prob_unsuccess - 0.095).abs() < 2.0e-3, "{est:?}");
        assert!((est.expected_delay - 18.885).abs() < 0.08, "{est:?}");
    }

    #[test]
    fn oracle_no_waste_when_tau_at_most_y() {
        let est = single_device_oracle(5.0, 5, 40, 4.5, 1.0, 50_000, 8).unwrap();
        assert_eq!(est.prob_unsuccess, 0.0);
    }

    #[test]
    fn oracle_rejects_bad_domain() {
        assert!(single_device_oracle(5.0, 40, 40, 4.5, 1.0, 10, 0).is_err());
        assert!(single_device_oracle(-1.0, 1, 40, 4.5, 1.0, 10, 0).is_err());
        assert!(single_device_oracle(5.0, 1, 40, 4.5, 1.0, 0, 0).is_err());
    }

    #[test]
    fn rng_policy_streams_reproduce_and_differ() {
        let policy = RngPolicy::new(123);
        let a: Vec<u64> = (0..4).map(|_| policy.episode_rng(5).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| policy.episode_rng(5).random()).collect();
        assert_eq!(a, b);
        let c: u64 = policy.episode_rng(6).random();
        assert_ne!(a[0], c);
        let shifted = RngPolicy::with_stream_base(123, 1).episode_rng(5).random::<u64>();
        assert_eq!(shifted, policy.episode_rng(6).random::<u64>());
    }

    #[test]
    fn trace_csv_has_expected_shape() {
        let positions = vec![(0.0, 0.0), (3.0, 0.0)];
        let field = DeviceField::new(positions, vec![10, 20], 0, 40).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let out = run_episode(&field, &reference_config(), Policy::Standard, &mut rng);
        let mut buf = Vec::new();
        write_trace_csv(&out, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "device_id,distance,arrival,path,delay,sent_sr"
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].starts_with("0,0,"));
        assert!(rows[1].starts_with("1,3,"));
        assert!(rows.iter().all(|r| r.contains("standard") && r.ends_with("true")));
    }

    #[test]
    fn policy_names_round_trip() {
        for policy in Policy::ALL {
            assert_eq!(policy.name().parse::<Policy>().unwrap(), policy);
        }
        assert!("ring".parse::<Policy>().is_err());
    }
}
