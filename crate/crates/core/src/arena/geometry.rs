//! Relative geometry between aircraft and the sector predicates built on it.

use serde::{Deserialize, Serialize};

use crate::config::ArenaConfig;
use crate::flightdyn::UavState;

/// Distance below which two aircraft are treated as coincident and the
/// geometry degenerates (angles defined as 0).
pub const DEGENERATE_RANGE: f64 = 1e-6;

/// Angular relationship from one aircraft to another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeGeometry {
    /// Angle between own heading and the line of sight, magnitude in [0, pi].
    pub alpha: f64,
    /// Signed horizontal-plane copy of `alpha`, for control use.
    pub alpha_signed: f64,
    /// Alignment angle of the target's heading against the reversed line of
    /// sight (aspect), in [0, pi].
    pub beta: f64,
    /// Range, meters.
    pub d: f64,
}

/// Geometry from `own` to `target`.
///
/// `alpha = 0` means the target sits dead ahead; `beta = 0` means the target
/// flies straight at us, `beta = pi` that it flies directly away.
pub fn relative_geometry(own: &UavState, target: &UavState) -> RelativeGeometry {
    let dx = target.p_x - own.p_x;
    let dy = target.p_y - own.p_y;
    let dz = target.p_z - own.p_z;
    let d = (dx * dx + dy * dy + dz * dz).sqrt();
    if d < DEGENERATE_RANGE {
        return RelativeGeometry { alpha: 0.0, alpha_signed: 0.0, beta: 0.0, d };
    }

    let h_own = own.heading_vector();
    let h_tgt = target.heading_vector();
    let los = [dx / d, dy / d, dz / d];

    let cos_alpha = h_own[0] * los[0] + h_own[1] * los[1] + h_own[2] * los[2];
    let alpha = cos_alpha.clamp(-1.0, 1.0).acos();

    // Target heading against the line of sight pointing back at us.
    let cos_beta = -(h_tgt[0] * los[0] + h_tgt[1] * los[1] + h_tgt[2] * los[2]);
    let beta = cos_beta.clamp(-1.0, 1.0).acos();

    // Signed bearing in the horizontal plane; positive = target to the left.
    let cross_z = h_own[0] * los[1] - h_own[1] * los[0];
    let dot_xy = h_own[0] * los[0] + h_own[1] * los[1];
    let alpha_signed = cross_z.atan2(dot_xy);

    RelativeGeometry { alpha, alpha_signed, beta, d }
}

/// Weapon engagement zone: in range and inside the sector, boundary inclusive.
pub fn in_wez(own: &UavState, target: &UavState, cfg: &ArenaConfig) -> bool {
    let g = relative_geometry(own, target);
    g.d <= cfg.wez_radius_m && g.alpha <= cfg.angle_convention.half_angle(cfg.wez_angle_rad)
}

/// Missile hit predicate: strictly inside the hit range and within the
/// seeker field of view.
pub fn missile_hit(own: &UavState, target: &UavState, cfg: &ArenaConfig) -> bool {
    let g = relative_geometry(own, target);
    g.d < cfg.missile_range_m && g.alpha <= cfg.angle_convention.half_angle(cfg.missile_fov_rad)
}
