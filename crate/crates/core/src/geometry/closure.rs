use super::{ContactPair, GeometryError, GripperModel, Vec3};

const UNIT_TOLERANCE: f64 = 1e-6;

/// Angles this close to the cone boundary count as inside, so that
/// configurations exactly on it do not flip with rounding.
pub const CONE_TOLERANCE: f64 = 1e-9;

/// Whether a closure angle lies inside the friction cone of `mu`.
pub fn within_cone(angle: f64, mu: f64) -> bool {
    angle <= mu.atan() + CONE_TOLERANCE
}

fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos()
}

/// Worst angular deviation of a contact pair from the closing axis: the
/// largest of the two normal-to-pushing-direction angles and the
/// line-to-axis angle. Infinite for coincident contacts.
pub fn closure_angle(contacts: &ContactPair, closing_axis: &Vec3) -> Result<f64, GeometryError> {
    for n in [&contacts.left.normal, &contacts.right.normal] {
        let len = n.norm();
        if !((len - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(GeometryError::NonUnitNormal(len));
        }
    }
    let axis = closing_axis.normalize();
    let left = angle_between(&contacts.left.normal, &(-axis));
    let right = angle_between(&contacts.right.normal, &axis);
    let line = contacts.right.point - contacts.left.point;
    let line_angle = if line.norm() > 0.0 {
        angle_between(&line, &axis)
    } else {
        f64::INFINITY
    };
    Ok(left.max(right).max(line_angle))
}

/// Two-finger antipodal force closure at friction `mu`.
///
/// Both outward contact normals must lie inside the friction cone around
/// their finger's pushing direction, and the segment joining the contacts
/// must lie inside the cone around the closing axis.
pub fn force_closure(
    contacts: &ContactPair,
    closing_axis: &Vec3,
    mu: f64,
) -> Result<bool, GeometryError> {
    if !(mu > 0.0) {
        return Err(GeometryError::NonPositiveFriction(mu));
    }
    Ok(within_cone(closure_angle(contacts, closing_axis)?, mu))
}

/// Grasp quality `clamp(1.1 - mu, 0, 1)` for a grid friction value.
pub fn score_from_friction(mu: f64, gripper: &GripperModel) -> Result<f64, GeometryError> {
    if gripper.friction_index(mu).is_none() {
        return Err(GeometryError::FrictionOffGrid(mu));
    }
    Ok((1.1 - mu).clamp(0.0, 1.0))
}

/// Six-way score class `round(score / 0.2)`.
pub fn score_class(score: f64) -> u8 {
    (score / 0.2).round().clamp(0.0, 5.0) as u8
}

pub(crate) fn class_of(mu: f64) -> u8 {
    score_class((1.1 - mu).clamp(0.0, 1.0))
}
