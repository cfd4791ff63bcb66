//! Rigid-body dynamics in velocity coordinates: composite-rigid-body mass
//! matrix, recursive Newton-Euler inverse dynamics, and the semi-implicit
//! Euler step used everywhere a state is advanced in time.

use nalgebra::{DMatrix, DVector, Isometry3, UnitQuaternion, Vector3};

use super::kinematics::{joint_transform, joint_twist, subspace_col};
use super::{JointKind, ModelError, RobotModel, RobotState};
use crate::math::{transform_force, transform_motion, SpatialInertia, SpatialVec};

impl RobotModel {
    /// Joint-space mass matrix M(q), symmetric positive definite for any
    /// model whose links carry rotational inertia.
    pub fn mass_matrix(&self, state: &RobotState) -> DMatrix<f64> {
        let n = self.joints.len();
        let x_local: Vec<Isometry3<f64>> =
            self.joints.iter().map(|j| joint_transform(j, &state.q)).collect();

        // composite inertia of the subtree rooted at each link
        let mut composite: Vec<SpatialInertia> =
            self.links.iter().map(|l| l.inertia).collect();
        for i in (0..n).rev() {
            if let Some(p) = self.joints[i].parent {
                let lifted = composite[i].transform(&x_local[i]);
                composite[p] = composite[p].add(&lifted);
            }
        }

        let mut m = DMatrix::zeros(self.n_v(), self.n_v());
        for i in 0..n {
            let joint = &self.joints[i];
            for k in 0..joint.kind.dof() {
                let s = subspace_col(&joint.kind, k);
                let row = joint.v_offset + k;
                let mut f = composite[i].apply(&s);
                for k2 in 0..joint.kind.dof() {
                    m[(row, joint.v_offset + k2)] = subspace_col(&joint.kind, k2).dot(&f);
                }
                let mut j = i;
                while let Some(p) = self.joints[j].parent {
                    f = transform_force(&x_local[j], &f);
                    j = p;
                    let ancestor = &self.joints[j];
                    for k2 in 0..ancestor.kind.dof() {
                        let col = ancestor.v_offset + k2;
                        let val = subspace_col(&ancestor.kind, k2).dot(&f);
                        m[(row, col)] = val;
                        m[(col, row)] = val;
                    }
                }
            }
        }
        m
    }

    /// Generalized force that produces `vdot`: τ = M(q)·v̇ + H(q, v), with
    /// gravity folded in by giving the base a fictitious upward acceleration.
    pub fn inverse_dynamics(&self, state: &RobotState, vdot: &DVector<f64>) -> DVector<f64> {
        let n = self.joints.len();
        let minus_g = SpatialVec::new(Vector3::zeros(), -self.gravity);

        let mut x_local = Vec::with_capacity(n);
        let mut vels: Vec<SpatialVec> = Vec::with_capacity(n);
        let mut accs: Vec<SpatialVec> = Vec::with_capacity(n);
        let mut forces: Vec<SpatialVec> = Vec::with_capacity(n);
        for (i, joint) in self.joints.iter().enumerate() {
            let x = joint_transform(joint, &state.q);
            let sqdot = joint_twist(joint, &state.v);
            let sqddot = joint_twist(joint, vdot);
            let (v, a) = match joint.parent {
                None => {
                    let inv = x.inverse();
                    let a0 = transform_motion(&inv, &minus_g);
                    let v = sqdot;
                    let a = a0.add(&sqddot).add(&v.cross_motion(&sqdot));
                    (v, a)
                }
                Some(p) => {
                    let inv = x.inverse();
                    let v = transform_motion(&inv, &vels[p]).add(&sqdot);
                    let a = transform_motion(&inv, &accs[p])
                        .add(&sqddot)
                        .add(&v.cross_motion(&sqdot));
                    (v, a)
                }
            };
            let momentum = self.links[i].inertia.apply(&v);
            let f = self.links[i].inertia.apply(&a).add(&v.cross_force(&momentum));
            x_local.push(x);
            vels.push(v);
            accs.push(a);
            forces.push(f);
        }

        let mut tau = DVector::zeros(self.n_v());
        for i in (0..n).rev() {
            let joint = &self.joints[i];
            for k in 0..joint.kind.dof() {
                tau[joint.v_offset + k] = subspace_col(&joint.kind, k).dot(&forces[i]);
            }
            if let Some(p) = joint.parent {
                let lifted = transform_force(&x_local[i], &forces[i]);
                forces[p] = forces[p].add(&lifted);
            }
        }
        tau
    }

    /// Velocity-product and gravity terms H(q, v) = C(q, v)·v + g(q).
    pub fn nonlinear_effects(&self, state: &RobotState) -> DVector<f64> {
        self.inverse_dynamics(state, &DVector::zeros(self.n_v()))
    }

    /// Solve M(q)·v̇ = f − H(q, v) for v̇ given the total generalized force
    /// `f` (actuation plus mapped external forces).
    pub fn forward_dynamics(
        &self,
        state: &RobotState,
        generalized_force: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        let m = self.mass_matrix(state);
        let rhs = generalized_force - self.nonlinear_effects(state);
        let chol = m.cholesky().ok_or(ModelError::SingularMassMatrix)?;
        Ok(chol.solve(&rhs))
    }

    /// Semi-implicit Euler step: the velocity update lands before the
    /// configuration update, and the base quaternion is advanced by the
    /// exponential of the body angular rate, then renormalized.
    pub fn integrate(&self, state: &RobotState, vdot: &DVector<f64>, dt: f64) -> RobotState {
        let v = &state.v + vdot * dt;
        let mut q = state.q.clone();
        for joint in &self.joints {
            let qo = joint.q_offset;
            let vo = joint.v_offset;
            match joint.kind {
                JointKind::Floating => {
                    let rot = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                        q[qo + 3],
                        q[qo + 4],
                        q[qo + 5],
                        q[qo + 6],
                    ));
                    let lin = Vector3::new(v[vo + 3], v[vo + 4], v[vo + 5]);
                    let ang = Vector3::new(v[vo], v[vo + 1], v[vo + 2]);
                    let dp = rot * lin * dt;
                    q[qo] += dp.x;
                    q[qo + 1] += dp.y;
                    q[qo + 2] += dp.z;
                    let next = UnitQuaternion::new_normalize(
                        (rot * UnitQuaternion::from_scaled_axis(ang * dt)).into_inner(),
                    );
                    let quat = next.quaternion();
                    q[qo + 3] = quat.w;
                    q[qo + 4] = quat.i;
                    q[qo + 5] = quat.j;
                    q[qo + 6] = quat.k;
                }
                _ => q[qo] += v[vo] * dt,
            }
        }
        RobotState { q, v, t: state.t + dt }
    }
}
