//! Internal 6D spatial algebra used by the dynamics algorithms.
//!
//! Motion vectors are (angular, linear) pairs expressed in a body frame;
//! the linear part is the velocity of the body-fixed point at the frame
//! origin. Kept crate-private: the public API speaks in joint-space
//! vectors and world-frame points.

use nalgebra::{Isometry3, Matrix3, Vector3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SpatialVec {
    pub ang: Vector3<f64>,
    pub lin: Vector3<f64>,
}

impl SpatialVec {
    pub fn zero() -> Self {
        Self { ang: Vector3::zeros(), lin: Vector3::zeros() }
    }

    pub fn new(ang: Vector3<f64>, lin: Vector3<f64>) -> Self {
        Self { ang, lin }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { ang: self.ang * s, lin: self.lin * s }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { ang: self.ang + other.ang, lin: self.lin + other.lin }
    }

    /// Motion-cross-motion product v ×ₘ m.
    pub fn cross_motion(&self, m: &Self) -> Self {
        Self {
            ang: self.ang.cross(&m.ang),
            lin: self.ang.cross(&m.lin) + self.lin.cross(&m.ang),
        }
    }

    /// Motion-cross-force product v ×* f.
    pub fn cross_force(&self, f: &Self) -> Self {
        Self {
            ang: self.ang.cross(&f.ang) + self.lin.cross(&f.lin),
            lin: self.ang.cross(&f.lin),
        }
    }

    pub fn dot(&self, f: &Self) -> f64 {
        self.ang.dot(&f.ang) + self.lin.dot(&f.lin)
    }
}

/// Transform a motion vector from frame A to frame B, where `x` maps
/// A-coordinates to B-coordinates (x_B = R x_A + p).
pub(crate) fn transform_motion(x: &Isometry3<f64>, v: &SpatialVec) -> SpatialVec {
    let r = x.rotation;
    let p = x.translation.vector;
    let ang = r * v.ang;
    SpatialVec { ang, lin: r * v.lin + p.cross(&ang) }
}

/// Transform a force vector from frame A to frame B (same `x` convention).
pub(crate) fn transform_force(x: &Isometry3<f64>, f: &SpatialVec) -> SpatialVec {
    let r = x.rotation;
    let p = x.translation.vector;
    let lin = r * f.lin;
    SpatialVec { ang: r * f.ang + p.cross(&lin), lin }
}

/// Rigid-body spatial inertia expressed at a body-frame origin.
///
/// `moment` is the rotational inertia about the frame origin, `first_moment`
/// is mass times the COM offset. Composable by plain addition when both
/// operands share a frame.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SpatialInertia {
    pub mass: f64,
    pub first_moment: Vector3<f64>,
    pub moment: Matrix3<f64>,
}

impl SpatialInertia {
    /// Build from mass, COM offset and rotational inertia about the COM.
    pub fn from_com(mass: f64, com: Vector3<f64>, inertia_com: Matrix3<f64>) -> Self {
        let c = skew(&com);
        // parallel axis: I_O = I_C - m c̃ c̃
        let moment = inertia_com - (c * c) * mass;
        Self { mass, first_moment: com * mass, moment }
    }

    pub fn zero() -> Self {
        Self { mass: 0.0, first_moment: Vector3::zeros(), moment: Matrix3::zeros() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            mass: self.mass + other.mass,
            first_moment: self.first_moment + other.first_moment,
            moment: self.moment + other.moment,
        }
    }

    /// I · v, producing a force-type vector (momentum).
    pub fn apply(&self, v: &SpatialVec) -> SpatialVec {
        SpatialVec {
            ang: self.moment * v.ang + self.first_moment.cross(&v.lin),
            lin: v.lin * self.mass - self.first_moment.cross(&v.ang),
        }
    }

    /// Express this inertia in the parent frame, `x` mapping child
    /// coordinates to parent coordinates.
    pub fn transform(&self, x: &Isometry3<f64>) -> Self {
        let r = x.rotation.to_rotation_matrix();
        let p = x.translation.vector;
        if self.mass == 0.0 {
            return Self::zero();
        }
        let com_child = self.first_moment / self.mass;
        let c_child = skew(&com_child);
        // rotate inertia about COM, then shift to the new origin
        let inertia_com = self.moment + (c_child * c_child) * self.mass;
        let inertia_com_p = r.matrix() * inertia_com * r.matrix().transpose();
        let com_parent = r * com_child + p;
        let c_parent = skew(&com_parent);
        Self {
            mass: self.mass,
            first_moment: com_parent * self.mass,
            moment: inertia_com_p - (c_parent * c_parent) * self.mass,
        }
    }
}

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
