//! Shared sizes for the criterion benches in `benches/`.

/// Four 256×448 views unprojected into one cloud.
pub const FOUR_VIEW_POINTS: usize = 4 * 256 * 448;

/// Smaller sizes swept alongside the full workload.
pub const SWEEP: [usize; 3] = [16_384, 65_536, FOUR_VIEW_POINTS];

/// Measurement noise added to fixture targets.
pub const FIXTURE_NOISE: f64 = 0.01;
