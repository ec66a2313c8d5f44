//! Euler-angle helpers for BVH rotation channels.
//!
//! BVH rotation channels are intrinsic: for channels `Zrotation Xrotation
//! Yrotation` the local rotation is `Rz * Rx * Ry`.

use nalgebra::{Matrix3, Vector3};

/// Rotation of `degrees` about coordinate axis `axis` (0 = x, 1 = y, 2 = z).
pub fn axis_rotation(axis: usize, degrees: f64) -> Matrix3<f64> {
    let (s, c) = degrees.to_radians().sin_cos();
    match axis {
        0 => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        1 => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        _ => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
    }
}

/// Composes intrinsic rotations in the given axis order.
pub fn compose(axes: &[usize], degrees: &[f64]) -> Matrix3<f64> {
    axes.iter()
        .zip(degrees)
        .fold(Matrix3::identity(), |acc, (&a, &d)| acc * axis_rotation(a, d))
}

/// Decomposes `r` into intrinsic angles (degrees) for a three-axis order with
/// distinct axes, such that `compose(order, angles) == r`.
pub fn decompose(r: &Matrix3<f64>, order: [usize; 3]) -> [f64; 3] {
    let [i, j, k] = order;
    // +1 for cyclic orders (xyz, yzx, zxy), -1 otherwise.
    let e = if (j + 3 - i) % 3 == 1 { 1.0 } else { -1.0 };
    let sb = (e * r[(i, k)]).clamp(-1.0, 1.0);
    let b = sb.asin();
    let (a, c) = if sb.abs() < 1.0 - 1e-12 {
        (
            (-e * r[(j, k)]).atan2(r[(k, k)]),
            (-e * r[(i, j)]).atan2(r[(i, i)]),
        )
    } else {
        // Gimbal lock: only a +/- c is determined; put it all in a.
        ((e * r[(k, j)]).atan2(r[(j, j)]), 0.0)
    };
    [a.to_degrees(), b.to_degrees(), c.to_degrees()]
}

/// Smallest rotation taking direction `from` onto direction `to`.
pub fn swing(from: &Vector3<f64>, to: &Vector3<f64>) -> Matrix3<f64> {
    let f = from.normalize();
    let t = to.normalize();
    let axis = f.cross(&t);
    let s = axis.norm();
    let c = f.dot(&t);
    if s < 1e-12 {
        if c > 0.0 {
            return Matrix3::identity();
        }
        // Opposite directions: half turn about any perpendicular axis.
        let helper = if f.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let n = f.cross(&helper).normalize();
        return 2.0 * n * n.transpose() - Matrix3::identity();
    }
    rodrigues(&(axis / s), s.atan2(c))
}

/// Rotation by `radians` about unit `axis`.
pub fn rodrigues(axis: &Vector3<f64>, radians: f64) -> Matrix3<f64> {
    let k = Matrix3::new(
        0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0,
    );
    let (s, c) = radians.sin_cos();
    Matrix3::identity() + k * s + k * k * (1.0 - c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ORDERS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

    proptest! {
        #[test]
        fn decompose_inverts_compose(
            a in -179.0..179.0f64, b in -89.0..89.0f64, c in -179.0..179.0f64, o in 0usize..6
        ) {
            let order = ORDERS[o];
            let r = compose(&order, &[a, b, c]);
            let angles = decompose(&r, order);
            let back = compose(&order, &angles);
            prop_assert!((back - r).abs().max() < 1e-10);
            prop_assert!((angles[1] - b).abs() < 1e-8);
        }

        #[test]
        fn swing_aligns_directions(
            x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64,
            u in -1.0..1.0f64, v in -1.0..1.0f64, w in -1.0..1.0f64,
        ) {
            let from = Vector3::new(x, y, z);
            let to = Vector3::new(u, v, w);
            prop_assume!(from.norm() > 1e-3 && to.norm() > 1e-3);
            let r = swing(&from, &to);
            prop_assert!(((r * from.normalize()) - to.normalize()).norm() < 1e-9);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gimbal_lock_still_reconstructs() {
        let r = compose(&[2, 0, 1], &[30.0, 90.0, 10.0]);
        let back = compose(&[2, 0, 1], &decompose(&r, [2, 0, 1]));
        assert!((back - r).abs().max() < 1e-9);
    }

    #[test]
    fn opposite_swing_is_half_turn() {
        let r = swing(&Vector3::x(), &(-Vector3::x()));
        assert!((r * Vector3::x() + Vector3::x()).norm() < 1e-12);
    }
}
