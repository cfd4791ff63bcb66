//! Forward kinematics: world link poses, body-frame twists, world-frame
//! point Jacobians and their velocity-product (bias) terms.

use nalgebra::{DMatrix, DVector, Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};

use super::{ContactSet, Joint, JointKind, RobotModel, RobotState};
use crate::math::{transform_motion, SpatialVec};

/// Pose of the link driven by `joint` in its parent frame.
pub(crate) fn joint_transform(joint: &Joint, q: &DVector<f64>) -> Isometry3<f64> {
    let o = joint.q_offset;
    let motion = match joint.kind {
        JointKind::Floating => {
            let rot = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                q[o + 3],
                q[o + 4],
                q[o + 5],
                q[o + 6],
            ));
            Isometry3::from_parts(Translation3::new(q[o], q[o + 1], q[o + 2]), rot)
        }
        JointKind::Revolute { axis } => Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(&Unit::new_unchecked(axis), q[o]),
        ),
        JointKind::Prismatic { axis } => {
            Isometry3::from_parts(Translation3::from(axis * q[o]), UnitQuaternion::identity())
        }
    };
    joint.placement * motion
}

/// Joint twist S·q̇ expressed in the driven link's frame. Also yields S·q̈
/// when passed an acceleration vector, since S is constant per joint.
pub(crate) fn joint_twist(joint: &Joint, v: &DVector<f64>) -> SpatialVec {
    let o = joint.v_offset;
    match joint.kind {
        JointKind::Floating => SpatialVec::new(
            Vector3::new(v[o], v[o + 1], v[o + 2]),
            Vector3::new(v[o + 3], v[o + 4], v[o + 5]),
        ),
        JointKind::Revolute { axis } => SpatialVec::new(axis * v[o], Vector3::zeros()),
        JointKind::Prismatic { axis } => SpatialVec::new(Vector3::zeros(), axis * v[o]),
    }
}

/// Direction of velocity coordinate `k` of `joint`, in the link frame.
pub(crate) fn subspace_col(kind: &JointKind, k: usize) -> SpatialVec {
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
    match kind {
        JointKind::Floating if k < 3 => SpatialVec::new(axes[k], Vector3::zeros()),
        JointKind::Floating => SpatialVec::new(Vector3::zeros(), axes[k - 3]),
        JointKind::Revolute { axis } => SpatialVec::new(*axis, Vector3::zeros()),
        JointKind::Prismatic { axis } => SpatialVec::new(Vector3::zeros(), *axis),
    }
}

/// Cached forward pass over one state: world poses, body twists, and the
/// spatial acceleration each link would have at zero generalized
/// acceleration (the velocity-product bias).
pub struct Kinematics<'a> {
    model: &'a RobotModel,
    poses: Vec<Isometry3<f64>>,
    vels: Vec<SpatialVec>,
    bias: Vec<SpatialVec>,
}

impl RobotModel {
    pub fn kinematics(&self, state: &RobotState) -> Kinematics<'_> {
        let n = self.joints.len();
        let mut poses = Vec::with_capacity(n);
        let mut vels: Vec<SpatialVec> = Vec::with_capacity(n);
        let mut bias: Vec<SpatialVec> = Vec::with_capacity(n);
        for joint in &self.joints {
            let x_local = joint_transform(joint, &state.q);
            let sqdot = joint_twist(joint, &state.v);
            match joint.parent {
                None => {
                    poses.push(x_local);
                    vels.push(sqdot);
                    bias.push(sqdot.cross_motion(&sqdot));
                }
                Some(p) => {
                    let inv = x_local.inverse();
                    let v = transform_motion(&inv, &vels[p]).add(&sqdot);
                    let a = transform_motion(&inv, &bias[p]).add(&v.cross_motion(&sqdot));
                    poses.push(poses[p] * x_local);
                    vels.push(v);
                    bias.push(a);
                }
            }
        }
        Kinematics { model: self, poses, vels, bias }
    }
}

impl Kinematics<'_> {
    pub fn link_pose(&self, link: usize) -> &Isometry3<f64> {
        &self.poses[link]
    }

    /// Body-frame twist (angular, linear) of a link.
    pub fn link_twist(&self, link: usize) -> (Vector3<f64>, Vector3<f64>) {
        (self.vels[link].ang, self.vels[link].lin)
    }

    /// World position of a point given in a link's frame.
    pub fn point_position(&self, link: usize, offset: &Vector3<f64>) -> Vector3<f64> {
        (self.poses[link] * Point3::from(*offset)).coords
    }

    /// World velocity of a body-fixed point.
    pub fn point_velocity(&self, link: usize, offset: &Vector3<f64>) -> Vector3<f64> {
        let v = &self.vels[link];
        self.poses[link].rotation * (v.lin + v.ang.cross(offset))
    }

    /// 3×n_v Jacobian mapping generalized velocity to the world velocity of
    /// a body-fixed point.
    pub fn point_jacobian(&self, link: usize, offset: &Vector3<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(3, self.model.n_v());
        let p = self.point_position(link, offset);
        let mut cur = Some(link);
        while let Some(i) = cur {
            let joint = &self.model.joints[i];
            let x = &self.poses[i];
            let arm = p - x.translation.vector;
            match joint.kind {
                JointKind::Revolute { axis } => {
                    let z = x.rotation * axis;
                    jac.set_column(joint.v_offset, &z.cross(&arm));
                }
                JointKind::Prismatic { axis } => {
                    jac.set_column(joint.v_offset, &(x.rotation * axis));
                }
                JointKind::Floating => {
                    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
                    for (k, e) in axes.iter().enumerate() {
                        let z = x.rotation * e;
                        jac.set_column(joint.v_offset + k, &z.cross(&arm));
                        jac.set_column(joint.v_offset + 3 + k, &z);
                    }
                }
            }
            cur = joint.parent;
        }
        jac
    }

    /// Velocity-product term J̇·v of a point Jacobian: the world acceleration
    /// the point would have at zero generalized acceleration.
    pub fn point_jacobian_dot_v(&self, link: usize, offset: &Vector3<f64>) -> Vector3<f64> {
        let v = &self.vels[link];
        let a = &self.bias[link];
        // classical acceleration of the body-fixed point at the link origin,
        // then rigid-body shift to the offset point, all in the link frame
        let a_origin = a.lin + v.ang.cross(&v.lin);
        let a_point =
            a_origin + a.ang.cross(offset) + v.ang.cross(&v.ang.cross(offset));
        self.poses[link].rotation * a_point
    }

    pub fn foot_position(&self, foot: usize) -> Vector3<f64> {
        let f = &self.model.feet[foot];
        self.point_position(f.link, &f.offset)
    }

    pub fn foot_velocity(&self, foot: usize) -> Vector3<f64> {
        let f = &self.model.feet[foot];
        self.point_velocity(f.link, &f.offset)
    }

    pub fn foot_jacobian(&self, foot: usize) -> DMatrix<f64> {
        let f = &self.model.feet[foot];
        self.point_jacobian(f.link, &f.offset)
    }

    pub fn foot_jacobian_dot_v(&self, foot: usize) -> Vector3<f64> {
        let f = &self.model.feet[foot];
        self.point_jacobian_dot_v(f.link, &f.offset)
    }

    /// Stacked 3k×n_v Jacobian over the stance feet, rows in contact-set
    /// order.
    pub fn contact_jacobian(&self, contacts: &ContactSet) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(3 * contacts.len(), self.model.n_v());
        for (row, &foot) in contacts.feet().iter().enumerate() {
            jac.view_mut((3 * row, 0), (3, self.model.n_v()))
                .copy_from(&self.foot_jacobian(foot));
        }
        jac
    }

    /// Stacked J̇·v over the stance feet, matching [`Self::contact_jacobian`].
    pub fn contact_jacobian_dot_v(&self, contacts: &ContactSet) -> DVector<f64> {
        let mut out = DVector::zeros(3 * contacts.len());
        for (row, &foot) in contacts.feet().iter().enumerate() {
            out.fixed_rows_mut::<3>(3 * row)
                .copy_from(&self.foot_jacobian_dot_v(foot));
        }
        out
    }

    pub fn com(&self) -> Vector3<f64> {
        let mut weighted = Vector3::zeros();
        let mut mass = 0.0;
        for (link, pose) in self.model.links.iter().zip(&self.poses) {
            weighted += pose.rotation * link.inertia.first_moment
                + pose.translation.vector * link.inertia.mass;
            mass += link.inertia.mass;
        }
        weighted / mass
    }

    /// Kinetic energy summed link by link. Independent of the mass matrix,
    /// so it doubles as an oracle for ½vᵀMv.
    pub fn kinetic_energy(&self) -> f64 {
        self.model
            .links
            .iter()
            .zip(&self.vels)
            .map(|(link, v)| 0.5 * v.dot(&link.inertia.apply(v)))
            .sum()
    }

    /// Gravitational potential relative to the world origin.
    pub fn potential_energy(&self) -> f64 {
        let g = self.model.gravity;
        -self
            .model
            .links
            .iter()
            .zip(&self.poses)
            .map(|(link, pose)| {
                let com_w = pose.rotation * link.inertia.first_moment
                    + pose.translation.vector * link.inertia.mass;
                g.dot(&com_w)
            })
            .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures;
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn pendulum_tip_matches_closed_form() {
        let model = fixtures::pendulum(1.0, 0.7);
        let mut state = model.neutral_state();
        state.q[0] = 0.4;
        state.v[0] = 1.3;
        let kin = model.kinematics(&state);

        let (s, c) = state.q[0].sin_cos();
        let l = 0.7;
        assert_relative_eq!(
            kin.foot_position(0),
            Vector3::new(-l * s, 0.0, -l * c),
            epsilon = 1e-12
        );
        // tip velocity = d/dθ(position) · θ̇
        assert_relative_eq!(
            kin.foot_velocity(0),
            Vector3::new(-l * c, 0.0, l * s) * state.v[0],
            epsilon = 1e-12
        );
        let jac = kin.foot_jacobian(0);
        assert_relative_eq!(
            jac.fixed_view::<3, 1>(0, 0).into_owned(),
            Vector3::new(-l * c, 0.0, l * s),
            epsilon = 1e-12
        );
    }

    #[test]
    fn jacobian_times_v_matches_point_velocity() {
        let model = fixtures::quadruped();
        for seed in 0..20u64 {
            let state = fixtures::random_state(&model, seed);
            let kin = model.kinematics(&state);
            for foot in 0..model.n_feet() {
                let jv = kin.foot_jacobian(foot) * &state.v;
                let v = kin.foot_velocity(foot);
                assert_relative_eq!(jv.fixed_rows::<3>(0).into_owned(), v, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let model = fixtures::quadruped();
        let state = fixtures::random_state(&model, 7);
        let kin = model.kinematics(&state);
        let eps = 1e-6;
        for foot in 0..model.n_feet() {
            let jac = kin.foot_jacobian(foot);
            for k in 0..model.n_v() {
                let mut dir = DVector::zeros(model.n_v());
                dir[k] = 1.0;
                let mut fwd = state.clone();
                fwd.v = dir.clone();
                let plus = model.integrate(&fwd, &DVector::zeros(model.n_v()), eps);
                fwd.v = -dir;
                let minus = model.integrate(&fwd, &DVector::zeros(model.n_v()), eps);
                let dp = (model.kinematics(&plus).foot_position(foot)
                    - model.kinematics(&minus).foot_position(foot))
                    / (2.0 * eps);
                assert_relative_eq!(jac.fixed_view::<3, 1>(0, k).into_owned(), dp, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn jacobian_dot_v_matches_finite_differences() {
        let model = fixtures::quadruped();
        for seed in [3u64, 11, 29] {
            let state = fixtures::random_state(&model, seed);
            let eps = 1e-6;
            let zero = DVector::zeros(model.n_v());
            let plus = model.integrate(&state, &zero, eps);
            let minus = model.integrate(&state, &zero, -eps);
            for foot in 0..model.n_feet() {
                let jv_plus = model.kinematics(&plus).foot_jacobian(foot) * &state.v;
                let jv_minus = model.kinematics(&minus).foot_jacobian(foot) * &state.v;
                let fd = (jv_plus - jv_minus) / (2.0 * eps);
                let jdv = model.kinematics(&state).foot_jacobian_dot_v(foot);
                assert_relative_eq!(jdv, fd.fixed_rows::<3>(0).into_owned(), epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn contact_jacobian_stacks_in_foot_order() {
        let model = fixtures::quadruped();
        let state = fixtures::random_state(&model, 1);
        let kin = model.kinematics(&state);
        let set = crate::model::ContactSet::new(vec![2, 0]);
        let jac = kin.contact_jacobian(&set);
        assert_eq!(jac.nrows(), 6);
        assert_relative_eq!(
            jac.view((0, 0), (3, model.n_v())).clone_owned(),
            kin.foot_jacobian(0),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            jac.view((3, 0), (3, model.n_v())).clone_owned(),
            kin.foot_jacobian(2),
            epsilon = 1e-15
        );
    }
}
