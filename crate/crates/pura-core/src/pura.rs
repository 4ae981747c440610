//! The 2D-PURA planner: ring clustering of a device field around the
//! event origin and the proactive grant schedule with per-ring thresholds
//! `y_k = (k−1)·τ₀ + y`.
//!
//! Ring k is the annulus between radii `(k−1)·d₀` and `k·d₀` around the
//! origin device. The disturbance needs `(k−1)·τ₀` subframes to reach the
//! ring's inner boundary, so every decision about ring k is made relative
//! to the *virtual reference time* `v_k = sr_rx + (k−1)·τ₀` — the moment
//! an SR from a hypothetical device on that boundary would arrive. A
//! device is targeted iff no SR from it has been received by `v_k`
//! (eligibility) and its first SR opportunity at or after `v_k` lies
//! strictly more than y subframes later (timing). Targeted devices get
//! their grant at `sr_rx + y_k`, rounded up to the subframe grid.
//!
//! Both passes are single loops over the devices: O(N).

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

use crate::model::{DeviceField, SchedulerConfig};

#[derive(Debug, Error)]
pub enum PuraError {
    #[error("no device state for device {0}")]
    MissingState(usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ============================================================================
// Ring clustering
// ============================================================================

/// Assignment of in-region devices to rings 1..n.
#[derive(Debug, Clone, PartialEq)]
pub struct RingPartition {
    /// Ring width in meters.
    pub d0: f64,
    /// Ring count n.
    pub n: u32,
    /// `rings[k-1]` holds the device indices of ring k, ascending.
    pub rings: Vec<Vec<usize>>,
    /// Devices farther than `n·d₀` from the origin (plus any non-origin
    /// device at distance exactly 0, which belongs to no annulus).
    pub excluded: Vec<usize>,
}

impl RingPartition {
    /// Total number of devices assigned to rings.
    pub fn in_region_count(&self) -> usize {
        self.rings.iter().map(Vec::len).sum()
    }
}

/// Clusters a field into `n` rings of width `d0` around the origin
/// device: ring index `k = ⌈distance/d₀⌉`, boundary points belonging to
/// the inner ring. The origin itself (distance 0) is in no ring.
pub fn cluster(field: &DeviceField, d0: f64, n: u32) -> RingPartition {
    assert!(d0 > 0.0, "cluster needs d0 > 0");
    assert!(n >= 1, "cluster needs n ≥ 1");
    let mut rings = vec![Vec::new(); n as usize];
    let mut excluded = Vec::new();
    for i in 0..field.len() {
        if i == field.origin_index {
            continue;
        }
        let k = (field.distance_from_origin(i) / d0).ceil();
        if k >= 1.0 && k <= n as f64 {
            rings[k as usize - 1].push(i);
        } else {
            excluded.push(i);
        }
    }
    RingPartition {
        d0,
        n,
        rings,
        excluded,
    }
}

// ============================================================================
// Grant planning
// ============================================================================

/// What the base station knows about one device at planning time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceState {
    /// Subframe of the device's SR for this disturbance, if one has been
    /// (or is known to be) sent; `None` if the device stays silent.
    pub sr_time: Option<f64>,
    /// The device's first SR opportunity strictly after `sr_rx_time`.
    /// Together with the σ-periodicity this fixes the whole opportunity
    /// lattice.
    pub next_opportunity: i64,
}

/// Outcome of the planning decision for one in-region device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrantStatus {
    Targeted,
    AlreadySentSr,
    TimingCriterionFailed,
}

impl std::fmt::Display for GrantStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GrantStatus::Targeted => write!(f, "targeted"),
            GrantStatus::AlreadySentSr => write!(f, "already-sent-sr"),
            GrantStatus::TimingCriterionFailed => write!(f, "timing-criterion-failed"),
        }
    }
}

/// One planning decision: the device, its ring and threshold, and the
/// scheduled grant subframe (`Some` iff targeted).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry {
    pub device: usize,
    pub ring: u32,
    pub y_k: f64,
    pub grant_subframe: Option<i64>,
    pub status: GrantStatus,
}

/// The full grant schedule for one disturbance episode.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    /// Entries ordered by (ring, device index).
    pub entries: Vec<PlanEntry>,
}

impl AllocationPlan {
    pub fn targeted_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.status == GrantStatus::Targeted)
            .count()
    }

    /// Number of grants scheduled in each subframe, for capacity audits
    /// against N_max.
    pub fn grant_counts_per_subframe(&self) -> BTreeMap<i64, u32> {
        let mut counts = BTreeMap::new();
        for entry in &self.entries {
            if let Some(g) = entry.grant_subframe {
                *counts.entry(g).or_insert(0) += 1;
            }
        }
        counts
    }
}

/// Plans proactive grants for every partitioned device.
///
/// `sr_rx_time` is the subframe the origin device's SR is received;
/// `device_states` must cover every device that appears in a ring
/// (indexed by device id). For ring k with reference `v_k = sr_rx +
/// (k−1)·τ₀`: a device is skipped as `already-sent-sr` if its SR time is
/// at or before `v_k`, skipped as `timing-criterion-failed` if its first
/// opportunity at or after `v_k` is within y subframes of it, and
/// targeted otherwise with grant `⌈sr_rx + y_k⌉`.
pub fn plan(
    partition: &RingPartition,
    config: &SchedulerConfig,
    sr_rx_time: i64,
    device_states: &[Option<DeviceState>],
) -> Result<AllocationPlan, PuraError> {
    let sigma = config.sigma as i64;
    let y = config.y as f64;
    let mut entries = Vec::with_capacity(partition.in_region_count());
    for (ring_idx, members) in partition.rings.iter().enumerate() {
        let k = ring_idx as u32 + 1;
        let y_k = ring_idx as f64 * config.tau0 + y;
        let v_k = sr_rx_time as f64 + ring_idx as f64 * config.tau0;
        let grant = (sr_rx_time as f64 + y_k).ceil() as i64;
        for &device in members {
            let state = device_states
                .get(device)
                .copied()
                .flatten()
                .ok_or(PuraError::MissingState(device))?;
            let status = if state.sr_time.is_some_and(|t| t <= v_k) {
                GrantStatus::AlreadySentSr
            } else if opportunity_phase(state.next_opportunity, v_k, sigma) > y {
                GrantStatus::Targeted
            } else {
                GrantStatus::TimingCriterionFailed
            };
            entries.push(PlanEntry {
                device,
                ring: k,
                y_k,
                grant_subframe: (status == GrantStatus::Targeted).then_some(grant),
                status,
            });
        }
    }
    Ok(AllocationPlan { entries })
}

/// Time from `reference` to the device's first SR opportunity at or after
/// it, given any one opportunity subframe on the device's lattice.
pub(crate) fn opportunity_phase(any_opportunity: i64, reference: f64, sigma: i64) -> f64 {
    let c = reference.ceil() as i64; // first grid subframe ≥ reference
    let first = c + (any_opportunity - c).rem_euclid(sigma);
    first as f64 - reference
}

// ============================================================================
// CSV export
// ============================================================================

/// Writes a plan as CSV with columns
/// `device_id,ring,y_k,grant_subframe,status` (empty grant for skipped
/// devices), in plan order.
pub fn write_plan_csv<W: Write>(plan: &AllocationPlan, writer: W) -> Result<(), PuraError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["device_id", "ring", "y_k", "grant_subframe", "status"])?;
    for e in &plan.entries {
        out.write_record([
            e.device.to_string(),
            e.ring.to_string(),
            e.y_k.to_string(),
            e.grant_subframe.map(|g| g.to_string()).unwrap_or_default(),
            e.status.to_string(),
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
    use crate::model::DeviceField;

    /// Field with the origin at (0,0) and the other devices on the x-axis
    /// at the given distances.
    fn line_field(distances: &[f64]) -> DeviceField {
        let mut positions = vec![(0.0, 0.0)];
        positions.extend(distances.iter().map(|&d| (d, 0.0)));
        let offsets = vec![1; positions.len()];
        DeviceField::new(positions, offsets, 0, 40).unwrap()
    }

    fn cfg(y: u32, tau0: f64) -> SchedulerConfig {
        SchedulerConfig {
            y,
            tau0,
            ..SchedulerConfig::default()
        }
    }

    #[test]
    fn cluster_ceiling_assignment() {
        let field = line_field(&[0.5, 1.0, 1.5]);
        let p = cluster(&field, 1.0, 3);
        assert_eq!(p.rings[0], vec![1, 2]); // 0.5·d₀ and the boundary point 1.0·d₀
        assert_eq!(p.rings[1], vec![3]);
        assert!(p.rings[2].is_empty());
        assert!(p.excluded.is_empty());
    }

    #[test]
    fn cluster_outer_boundary() {
        let field = line_field(&[3.0, 3.1]);
        let p = cluster(&field, 1.0, 3);
        assert_eq!(p.rings[2], vec![1]); // exactly n·d₀ is still ring n
        assert_eq!(p.excluded, vec![2]);
    }

    #[test]
    fn cluster_origin_in_no_ring() {
        let field = line_field(&[0.5]);
        let p = cluster(&field, 1.0, 2);
        let total: usize = p.in_region_count() + p.excluded.len();
        assert_eq!(total, field.len() - 1); // everything but the origin
        assert!(p.rings.iter().all(|r| !r.contains(&0)));
    }

    #[test]
    fn cluster_partition_is_disjoint_and_complete() {
        let distances = [0.3, 0.9, 1.0, 1.7, 2.4, 3.0, 3.2, 5.9];
        let field = line_field(&distances);
        let p = cluster(&field, 1.0, 3);
        let mut seen = vec![false; field.len()];
        for ring in &p.rings {
            for &i in ring {
                assert!(!seen[i], "device {i} in two rings");
                seen[i] = true;
            }
        }
        for &i in &p.excluded {
            assert!(!seen[i], "device {i} both ringed and excluded");
            seen[i] = true;
        }
        let missing: Vec<usize> = (0..field.len())
            .filter(|&i| !seen[i] && i != field.origin_index)
            .collect();
        assert!(missing.is_empty(), "unassigned devices: {missing:?}");
    }

    fn states_with_next_opportunity(len: usize, next: i64) -> Vec<Option<DeviceState>> {
        vec![
            Some(DeviceState {
                sr_time: None,
                next_opportunity: next,
            });
            len
        ]
    }

    #[test]
    fn plan_targets_ring1_device_with_late_opportunity() {
        let field = line_field(&[0.5]);
        let p = cluster(&field, 3.0, 100);
        let states = states_with_next_opportunity(field.len(), 1030);
        let out = plan(&p, &cfg(1, 10.0), 1000, &states).unwrap();
        assert_eq!(out.entries.len(), 1);
        let e = out.entries[0];
        assert_eq!(e.status, GrantStatus::Targeted);
        assert_eq!(e.grant_subframe, Some(1001)); // sr_rx + y₁, y₁ = 1
        assert_eq!(e.y_k, 1.0);
    }

    #[test]
    fn plan_timing_fails_when_opportunity_too_close() {
        let field = line_field(&[0.5]);
        let p = cluster(&field, 3.0, 100);
        // opportunity exactly y after the SR: not strictly greater
        let states = states_with_next_opportunity(field.len(), 1001);
        let out = plan(&p, &cfg(1, 10.0), 1000, &states).unwrap();
        assert_eq!(out.entries[0].status, GrantStatus::TimingCriterionFailed);

        // opportunity lattice hitting the reference itself: phase 0
        let states = states_with_next_opportunity(field.len(), 1040);
        let out = plan(&p, &cfg(1, 10.0), 1000, &states).unwrap();
        assert_eq!(out.entries[0].status, GrantStatus::TimingCriterionFailed);
    }

    #[test]
    fn plan_outer_ring_uses_its_own_reference() {
        // Ring 3's reference sits (k−1)·τ₀ = 20 subframes after the SR. An
        // opportunity 15 subframes after the SR has already passed by then,
        // so the criterion sees the following one — 35 after the reference —
        // and the device is targeted, with its grant at sr_rx + y₃.
        let field = line_field(&[7.5]); // ring 3 for d₀ = 3
        let p = cluster(&field, 3.0, 100);
        let states = states_with_next_opportunity(field.len(), 1015);
        let out = plan(&p, &cfg(1, 10.0), 1000, &states).unwrap();
        let e = out.entries[0];
        assert_eq!(e.ring, 3);
        assert_eq!(e.y_k, 21.0);
        assert_eq!(e.status, GrantStatus::Targeted);
        assert_eq!(e.grant_subframe, Some(1021));
    }

    #[test]
    fn plan_eligibility_is_judged_at_the_ring_reference() {
        let field = line_field(&[4.5]); // ring 2 for d₀ = 3, reference sr_rx + 10
        let p = cluster(&field, 3.0, 100);
        let mut states = states_with_next_opportunity(field.len(), 1025);

        // SR received before the ring-2 reference: skipped
        states[1] = Some(DeviceState {
            sr_time: Some(1005.0),
            next_opportunity: 1025,
        });
        let out = plan(&p, &cfg(1, 10.0), 1000, &states).unwrap();
        assert_eq!(out.entries[0].status, GrantStatus::AlreadySentSr);

        // SR only after the reference: still eligible, timing decides
        states[1] = Some(DeviceState {
            sr_time: Some(1025.0),
            next_opportunity: 1025,
        });
        let out = plan(&p, &cfg(1, 10.0), 1000, &states).unwrap();
        assert_eq!(out.entries[0].status, GrantStatus::Targeted);
    }

    #[test]
    fn plan_missing_state_names_the_device() {
        let field = line_field(&[0.5]);
        let p = cluster(&field, 3.0, 100);
        let states = vec![None; field.len()];
        let err = plan(&p, &cfg(1, 10.0), 1000, &states).unwrap_err();
        assert!(err.to_string().contains("device 1"), "{err}");
    }

    #[test]
    fn plan_grants_ordered_across_rings() {
        let field = line_field(&[1.5, 4.5, 7.5, 10.5]);
        let p = cluster(&field, 3.0, 100);
        let states = states_with_next_opportunity(field.len(), 1039);
        let out = plan(&p, &cfg(1, 10.0), 1000, &states).unwrap();
        let grants: Vec<i64> = out.entries.iter().filter_map(|e| e.grant_subframe).collect();
        assert!(grants.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(out.entries.iter().map(|e| e.y_k).collect::<Vec<_>>(), vec![
            1.0, 11.0, 21.0, 31.0
        ]);
    }

    #[test]
    fn plan_fractional_tau0_rounds_grant_up() {
        let field = line_field(&[4.0]); // ring 2 for d₀ = v·τ₀ = 0.3·10.5
        let p = cluster(&field, 3.15, 100);
        let states = states_with_next_opportunity(field.len(), 1035);
        let out = plan(&p, &cfg(1, 10.5), 1000, &states).unwrap();
        let e = out.entries[0];
        assert_eq!(e.ring, 2);
        assert_eq!(e.y_k, 11.5);
        assert_eq!(e.grant_subframe, Some(1012)); // ⌈1011.5⌉
    }

    #[test]
    fn plan_is_deterministic() {
        let field = line_field(&[0.4, 1.1, 2.2, 3.0, 4.4]);
        let p = cluster(&field, 1.0, 5);
        let states = states_with_next_opportunity(field.len(), 1007);
        let a = plan(&p, &cfg(2, 5.0), 1000, &states).unwrap();
        let b = plan(&p, &cfg(2, 5.0), 1000, &states).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grant_counts_cover_exactly_the_targeted_entries() {
        let field = line_field(&[1.0, 1.5, 2.5, 4.0]);
        let p = cluster(&field, 1.0, 4);
        let mut states = states_with_next_opportunity(field.len(), 1020);
        states[2] = Some(DeviceState {
            sr_time: Some(999.0),
            next_opportunity: 1020,
        });
        let out = plan(&p, &cfg(3, 2.0), 1000, &states).unwrap();
        let total: u32 = out.grant_counts_per_subframe().values().sum();
        assert_eq!(total as usize, out.targeted_count());
    }

    #[test]
    fn plan_csv_format() {
        let field = line_field(&[0.5, 4.5]);
        let p = cluster(&field, 3.0, 100);
        let mut states = states_with_next_opportunity(field.len(), 1030);
        states[2] = Some(DeviceState {
            sr_time: Some(1001.0),
            next_opportunity: 1030,
        });
        let out = plan(&p, &cfg(1, 10.0), 1000, &states).unwrap();
        let mut buf = Vec::new();
        write_plan_csv(&out, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let expected = "device_id,ring,y_k,grant_subframe,status\n\
                        1,1,1,1001,targeted\n\
                        2,2,11,,already-sent-sr\n";
        assert_eq!(text, expected);
    }
}
