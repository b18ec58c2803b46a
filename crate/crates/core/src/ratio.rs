//! Turning fractional ratios into counts.
//!
//! `0.7 * 10.0` is `7.000000000000001` in binary floating point, so a bare
//! `ceil` would give 8. Both helpers snap products within `1e-9` of an
//! integer onto that integer first.

const SNAP: f64 = 1e-9;

fn snapped(ratio: f64, total: usize) -> f64 {
    let x = ratio * total as f64;
    let r = x.round();
    if (x - r).abs() < SNAP {
        r
    } else {
        x
    }
}

/// `floor(ratio * total)`
pub fn floor_count(ratio: f64, total: usize) -> usize {
    snapped(ratio, total).floor().max(0.0) as usize
}

/// `ceil(ratio * total)`
pub fn ceil_count(ratio: f64, total: usize) -> usize {
    snapped(ratio, total).ceil().max(0.0) as usize
}
