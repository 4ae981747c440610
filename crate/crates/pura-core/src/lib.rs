//! 2D proactive uplink resource allocation (2D-PURA) for event-driven
//! machine-type communications.
//!
//! A base station that receives a scheduling request (SR) from the device
//! closest to a spreading disturbance can predict when the surrounding
//! devices will have data of their own, and hand out uplink grants before
//! those devices ever ask. This crate contains the three legs of that
//! scheme and keeps them strictly separate so they can check each other:
//!
//! * [`model`] — scheduler configuration, the sampled device field, and the
//!   metrics report shared by the analytic and simulated paths.
//! * [`analytic`] — exact closed forms: the standard SR-based delay, the
//!   per-device success/wastage/delay expressions, the ring-weighted
//!   region metrics, and the design formulas (ring width, ring population,
//!   1D baseline).
//! * [`pura`] — the planner itself: ring clustering by radial distance and
//!   the per-ring grant schedule with thresholds `y_k = (k-1)·τ₀ + y`.
//! * [`sim`] — an independent discrete-event Monte Carlo simulator built
//!   only on the timing rules, used to cross-validate the closed forms.
//!
//! All times are in subframes (1 subframe = 1 ms) and the disturbance
//! speed is in meters per subframe, so ring width `d₀ = v·τ₀` and region
//! radius `l = v·T` need no unit conversion.

pub mod analytic;
pub mod model;
pub mod pura;
pub mod sim;
