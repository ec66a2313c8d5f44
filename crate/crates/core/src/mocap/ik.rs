//! Small analytic solvers for arm chains.

use nalgebra::Vector3;

type V3 = Vector3<f64>;

/// Elbow position for a two-link arm reaching `wrist` from `shoulder`, with
/// the elbow rotated `swivel_deg` about the shoulder-wrist axis from the
/// world-down direction (+Y up). Targets beyond reach put the elbow on the
/// axis at full extension.
pub fn place_elbow(shoulder: &V3, wrist: &V3, upper: f64, fore: f64, swivel_deg: f64) -> V3 {
    let axis = wrist - shoulder;
    let d = axis.norm().clamp(1e-9, upper + fore);
    let a = axis.normalize();
    let x = (upper * upper - fore * fore + d * d) / (2.0 * d);
    let rho = (upper * upper - x * x).max(0.0).sqrt();
    let down = V3::new(0.0, -1.0, 0.0);
    let r = down - a * a.dot(&down);
    let r = if r.norm() < 1e-12 { a.cross(&V3::x()).normalize() } else { r.normalize() };
    let (s, c) = swivel_deg.to_radians().sin_cos();
    let dir = r * c + a.cross(&r) * s;
    shoulder + a * x + dir * rho
}
