//! Kinematic-tree robot model and state.
//!
//! A [`RobotModel`] is an immutable tree of links connected by a floating,
//! revolute or prismatic joint each. The root joint attaches the first link
//! to the world; all dynamics quantities (mass matrix, nonlinear effects,
//! Jacobians) are derived from it. Velocity coordinates are ordered joint
//! by joint in tree order, with the floating base contributing the first
//! six (body-frame angular then linear twist).

mod dynamics;
mod kinematics;
mod parse;

pub use kinematics::Kinematics;
pub use parse::ParseError;

use nalgebra::{DVector, Isometry3, Matrix3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::math::SpatialInertia;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model has no joints")]
    Empty,
    #[error("link `{0}` referenced by a joint is not declared")]
    UnknownLink(String),
    #[error("link `{0}` has {1} parent joints; the tree allows exactly one")]
    MultipleParents(String, usize),
    #[error("no root joint: every link has a parent, so the topology contains a cycle")]
    NoRoot,
    #[error("more than one root joint (links `{0}` and `{1}` both lack a parent)")]
    MultipleRoots(String, String),
    #[error("link `{0}` is not reachable from the root")]
    Disconnected(String),
    #[error("floating joint must be the root (joint onto `{0}` has a parent)")]
    FloatingNotRoot(String),
    #[error("link `{0}` has non-positive mass {1}")]
    BadMass(String, f64),
    #[error("link `{0}` inertia tensor is not symmetric positive semidefinite")]
    BadInertia(String),
    #[error("joint onto `{0}` has non-unit axis")]
    BadAxis(String),
    #[error("actuated joint onto `{0}` needs a positive torque limit, got {1:?}")]
    BadTorqueLimit(String, Option<f64>),
    #[error("foot references unknown link `{0}`")]
    UnknownFootLink(String),
    #[error("duplicate link name `{0}`")]
    DuplicateLink(String),
    #[error("state incompatible with model: expected q length {expected_q} and v length {expected_v}, got {got_q} and {got_v}")]
    StateDimensions { expected_q: usize, expected_v: usize, got_q: usize, got_v: usize },
    #[error("base quaternion norm {0} deviates from 1 by more than 1e-9")]
    QuaternionNorm(f64),
    #[error("foot index {0} out of range ({1} feet)")]
    FootIndex(usize, usize),
    #[error("floating joint onto `{0}` cannot be actuated")]
    ActuatedFloating(String),
    #[error("mass matrix is not positive definite (a link without rotational inertia?)")]
    SingularMassMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JointKind {
    Floating,
    Revolute { axis: Vector3<f64> },
    Prismatic { axis: Vector3<f64> },
}

impl JointKind {
    pub fn dof(&self) -> usize {
        match self {
            JointKind::Floating => 6,
            _ => 1,
        }
    }
}

/// Input description of a link, before tree canonicalization.
#[derive(Debug, Clone)]
pub struct LinkSpec {
    pub name: String,
    pub mass: f64,
    /// COM offset in the link frame, metres.
    pub com: Vector3<f64>,
    /// Rotational inertia about the COM, kg·m².
    pub inertia: Matrix3<f64>,
}

/// Input description of a joint, before tree canonicalization.
#[derive(Debug, Clone)]
pub struct JointSpec {
    pub kind: JointKind,
    /// Parent link name; `None` attaches the child to the world.
    pub parent: Option<String>,
    pub child: String,
    /// Pose of the joint frame in the parent link frame.
    pub placement: Isometry3<f64>,
    pub actuated: bool,
    pub torque_limit: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FootSpec {
    pub link: String,
    /// Contact point offset in the link frame, metres.
    pub offset: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Link {
    pub name: String,
    pub inertia: SpatialInertia,
}

#[derive(Debug, Clone)]
pub(crate) struct Joint {
    pub kind: JointKind,
    /// Parent link index; `None` for the root joint.
    pub parent: Option<usize>,
    pub placement: Isometry3<f64>,
    pub actuated: bool,
    pub torque_limit: Option<f64>,
    /// First velocity coordinate of this joint.
    pub v_offset: usize,
    /// First configuration coordinate of this joint.
    pub q_offset: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Foot {
    pub link: usize,
    pub offset: Vector3<f64>,
}

/// Immutable robot description. Joint `i` drives link `i`; parents precede
/// children, so forward passes are plain index loops.
#[derive(Debug, Clone)]
pub struct RobotModel {
    pub name: String,
    pub(crate) links: Vec<Link>,
    pub(crate) joints: Vec<Joint>,
    pub(crate) feet: Vec<Foot>,
    /// Gravity in the world frame, m/s².
    pub gravity: Vector3<f64>,
    n_v: usize,
    n_q: usize,
    /// Velocity coordinate index of each actuated joint, in joint order.
    actuated_v: Vec<usize>,
    torque_limits: DVector<f64>,
}

impl RobotModel {
    pub fn new(
        name: impl Into<String>,
        links: Vec<LinkSpec>,
        joints: Vec<JointSpec>,
        feet: Vec<FootSpec>,
    ) -> Result<Self, ModelError> {
        Self::build(name.into(), links, joints, feet, Vector3::new(0.0, 0.0, -9.81))
    }

    fn build(
        name: String,
        link_specs: Vec<LinkSpec>,
        joint_specs: Vec<JointSpec>,
        feet: Vec<FootSpec>,
        gravity: Vector3<f64>,
    ) -> Result<Self, ModelError> {
        if joint_specs.is_empty() || link_specs.is_empty() {
            return Err(ModelError::Empty);
        }
        let mut by_name = std::collections::HashMap::new();
        for (i, l) in link_specs.iter().enumerate() {
            if by_name.insert(l.name.clone(), i).is_some() {
                return Err(ModelError::DuplicateLink(l.name.clone()));
            }
        }

        // one joint per child link, exactly one root
        let mut parent_joint: Vec<Option<usize>> = vec![None; link_specs.len()];
        let mut root: Option<usize> = None;
        for (j, spec) in joint_specs.iter().enumerate() {
            let child = *by_name
                .get(&spec.child)
                .ok_or_else(|| ModelError::UnknownLink(spec.child.clone()))?;
            if parent_joint[child].is_some() {
                return Err(ModelError::MultipleParents(spec.child.clone(), 2));
            }
            parent_joint[child] = Some(j);
            match &spec.parent {
                None => {
                    if let Some(prev) = root {
                        return Err(ModelError::MultipleRoots(
                            joint_specs[prev].child.clone(),
                            spec.child.clone(),
                        ));
                    }
                    root = Some(j);
                }
                Some(p) => {
                    if !by_name.contains_key(p) {
                        return Err(ModelError::UnknownLink(p.clone()));
                    }
                    if matches!(spec.kind, JointKind::Floating) {
                        return Err(ModelError::FloatingNotRoot(spec.child.clone()));
                    }
                }
            }
        }
        let root = root.ok_or(ModelError::NoRoot)?;

        // depth-first preorder from the root, siblings in declaration order:
        // a leg's joints stay consecutive in the velocity vector. Cycles
        // leave their links unreachable because the root is unique.
        let mut order: Vec<usize> = Vec::with_capacity(joint_specs.len());
        let mut link_new_index: Vec<Option<usize>> = vec![None; link_specs.len()];
        let mut stack = vec![root];
        while let Some(j) = stack.pop() {
            let child = by_name[&joint_specs[j].child];
            link_new_index[child] = Some(order.len());
            order.push(j);
            for (j2, spec) in joint_specs.iter().enumerate().rev() {
                if let Some(p) = &spec.parent {
                    if by_name[p] == child {
                        stack.push(j2);
                    }
                }
            }
        }
        if order.len() != joint_specs.len() {
            let missing = joint_specs
                .iter()
                .find(|s| link_new_index[by_name[&s.child]].is_none())
                .map(|s| s.child.clone())
                .unwrap_or_default();
            return Err(ModelError::Disconnected(missing));
        }

        let mut links = Vec::with_capacity(order.len());
        let mut joints = Vec::with_capacity(order.len());
        let mut v_offset = 0;
        let mut q_offset = 0;
        let mut actuated_v = Vec::new();
        let mut torque_limits = Vec::new();
        for &j in &order {
            let spec = &joint_specs[j];
            let link = &link_specs[by_name[&spec.child]];
            if !(link.mass > 0.0) {
                return Err(ModelError::BadMass(link.name.clone(), link.mass));
            }
            validate_inertia(&link.name, &link.inertia)?;
            let kind = match spec.kind {
                JointKind::Revolute { axis } | JointKind::Prismatic { axis }
                    if (axis.norm() - 1.0).abs() > 1e-9 =>
                {
                    return Err(ModelError::BadAxis(spec.child.clone()));
                }
                k => k,
            };
            if spec.actuated {
                if matches!(kind, JointKind::Floating) {
                    return Err(ModelError::ActuatedFloating(spec.child.clone()));
                }
                match spec.torque_limit {
                    Some(t) if t > 0.0 => {
                        actuated_v.push(v_offset);
                        torque_limits.push(t);
                    }
                    other => return Err(ModelError::BadTorqueLimit(spec.child.clone(), other)),
                }
            }
            links.push(Link {
                name: link.name.clone(),
                inertia: SpatialInertia::from_com(link.mass, link.com, link.inertia),
            });
            joints.push(Joint {
                kind,
                parent: spec.parent.as_ref().map(|p| {
                    link_new_index[by_name[p]].expect("parents precede children in preorder")
                }),
                placement: spec.placement,
                actuated: spec.actuated,
                torque_limit: spec.torque_limit,
                v_offset,
                q_offset,
            });
            v_offset += kind.dof();
            q_offset += match kind {
                JointKind::Floating => 7,
                _ => 1,
            };
        }

        let mut resolved_feet = Vec::with_capacity(feet.len());
        for f in &feet {
            let link = *by_name
                .get(&f.link)
                .ok_or_else(|| ModelError::UnknownFootLink(f.link.clone()))?;
            resolved_feet.push(Foot {
                link: link_new_index[link].expect("all links reachable"),
                offset: f.offset,
            });
        }

        Ok(Self {
            name,
            links,
            joints,
            feet: resolved_feet,
            gravity,
            n_v: v_offset,
            n_q: q_offset,
            actuated_v,
            torque_limits: DVector::from_vec(torque_limits),
        })
    }

    pub fn with_gravity(mut self, gravity: Vector3<f64>) -> Self {
        self.gravity = gravity;
        self
    }

    /// Total velocity coordinates (6 + actuated joints for a floating base).
    pub fn n_v(&self) -> usize {
        self.n_v
    }

    /// Configuration coordinates (quaternion overparameterization included).
    pub fn n_q(&self) -> usize {
        self.n_q
    }

    /// Number of actuated joints.
    pub fn n_va(&self) -> usize {
        self.actuated_v.len()
    }

    pub fn n_feet(&self) -> usize {
        self.feet.len()
    }

    pub fn has_floating_base(&self) -> bool {
        matches!(self.joints[0].kind, JointKind::Floating)
    }

    /// Per-actuated-joint torque limits, N·m.
    pub fn torque_limits(&self) -> &DVector<f64> {
        &self.torque_limits
    }

    /// Velocity coordinate index of each actuated joint.
    pub fn actuated_velocity_indices(&self) -> &[usize] {
        &self.actuated_v
    }

    /// Configuration coordinate index of each actuated joint, in the same
    /// order as `actuated_velocity_indices`. Actuated joints have one
    /// configuration coordinate each, so this is a plain index list.
    pub fn actuated_position_indices(&self) -> Vec<usize> {
        self.joints
            .iter()
            .filter(|j| j.actuated)
            .map(|j| j.q_offset)
            .collect()
    }

    pub fn feet(&self) -> &[Foot] {
        &self.feet
    }

    pub fn link_names(&self) -> impl Iterator<Item = &str> {
        self.links.iter().map(|l| l.name.as_str())
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.inertia.mass).sum()
    }

    /// Selection matrix B mapping actuated torques into generalized forces.
    pub fn selection_matrix(&self) -> nalgebra::DMatrix<f64> {
        let mut b = nalgebra::DMatrix::zeros(self.n_v, self.n_va());
        for (col, &row) in self.actuated_v.iter().enumerate() {
            b[(row, col)] = 1.0;
        }
        b
    }

    /// Extract the actuated-joint part of a velocity-space vector.
    pub fn actuated_part(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n_va(), self.actuated_v.iter().map(|&i| v[i]))
    }

    /// Neutral state: identity base pose, zero joint angles and rates.
    pub fn neutral_state(&self) -> RobotState {
        let mut q = DVector::zeros(self.n_q);
        if self.has_floating_base() {
            q[3] = 1.0; // unit quaternion, w first
        }
        RobotState { q, v: DVector::zeros(self.n_v), t: 0.0 }
    }

    pub fn check_state(&self, state: &RobotState) -> Result<(), ModelError> {
        if state.q.len() != self.n_q || state.v.len() != self.n_v {
            return Err(ModelError::StateDimensions {
                expected_q: self.n_q,
                expected_v: self.n_v,
                got_q: state.q.len(),
                got_v: state.v.len(),
            });
        }
        if self.has_floating_base() {
            let norm = state.base_quaternion().norm();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(ModelError::QuaternionNorm(norm));
            }
        }
        Ok(())
    }
}

fn validate_inertia(name: &str, inertia: &Matrix3<f64>) -> Result<(), ModelError> {
    if (inertia - inertia.transpose()).amax() > 1e-12 {
        return Err(ModelError::BadInertia(name.to_string()));
    }
    // symmetric PSD via eigenvalues; point masses (zero inertia) are allowed
    let eig = inertia.symmetric_eigenvalues();
    if eig.iter().any(|&e| e < -1e-12) {
        return Err(ModelError::BadInertia(name.to_string()));
    }
    Ok(())
}

/// Robot configuration and velocity at a time instant.
///
/// `q` holds the floating-base pose first (position, then unit quaternion
/// w-x-y-z), followed by one angle per 1-DoF joint. `v` holds the base twist
/// in the body frame (angular, then linear), followed by joint rates.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub t: f64,
}

impl RobotState {
    pub fn new(q: DVector<f64>, v: DVector<f64>, t: f64) -> Self {
        Self { q, v, t }
    }

    pub fn base_position(&self) -> Vector3<f64> {
        Vector3::new(self.q[0], self.q[1], self.q[2])
    }

    pub fn base_quaternion(&self) -> nalgebra::Quaternion<f64> {
        nalgebra::Quaternion::new(self.q[3], self.q[4], self.q[5], self.q[6])
    }

    pub fn base_pose(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            nalgebra::Translation3::new(self.q[0], self.q[1], self.q[2]),
            UnitQuaternion::from_quaternion(self.base_quaternion()),
        )
    }

    pub fn set_base_pose(&mut self, pose: &Isometry3<f64>) {
        self.q[0] = pose.translation.x;
        self.q[1] = pose.translation.y;
        self.q[2] = pose.translation.z;
        let q = pose.rotation.quaternion();
        self.q[3] = q.w;
        self.q[4] = q.i;
        self.q[5] = q.j;
        self.q[6] = q.k;
    }
}

/// Ordered set of feet currently in stance, with one world-aligned contact
/// frame per foot (z along the ground normal).
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSet {
    feet: Vec<usize>,
    normals: Vec<Vector3<f64>>,
}

impl ContactSet {
    /// Build from foot indices; duplicates are dropped and the order is
    /// normalized to ascending model-foot index.
    pub fn new(mut feet: Vec<usize>) -> Self {
        feet.sort_unstable();
        feet.dedup();
        let normals = vec![Vector3::z(); feet.len()];
        Self { feet, normals }
    }

    pub fn empty() -> Self {
        Self { feet: Vec::new(), normals: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.feet.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feet.is_empty()
    }

    pub fn feet(&self) -> &[usize] {
        &self.feet
    }

    pub fn contains(&self, foot: usize) -> bool {
        self.feet.binary_search(&foot).is_ok()
    }

    pub fn normal(&self, idx: usize) -> Vector3<f64> {
        self.normals[idx]
    }
}

#[cfg(test)]
pub(crate) mod fixtures;

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Translation3;

    fn unit_link(name: &str) -> LinkSpec {
        LinkSpec {
            name: name.to_string(),
            mass: 1.0,
            com: Vector3::zeros(),
            inertia: Matrix3::identity() * 0.01,
        }
    }

    fn rev_joint(parent: Option<&str>, child: &str) -> JointSpec {
        JointSpec {
            kind: JointKind::Revolute { axis: Vector3::y() },
            parent: parent.map(String::from),
            child: child.to_string(),
            placement: Isometry3::from_parts(
                Translation3::new(0.0, 0.0, -0.1),
                UnitQuaternion::identity(),
            ),
            actuated: true,
            torque_limit: Some(10.0),
        }
    }

    #[test]
    fn builds_simple_chain() {
        let model = RobotModel::new(
            "chain",
            vec![unit_link("a"), unit_link("b")],
            vec![rev_joint(None, "a"), rev_joint(Some("a"), "b")],
            vec![],
        )
        .unwrap();
        assert_eq!(model.n_v(), 2);
        assert_eq!(model.n_q(), 2);
        assert_eq!(model.n_va(), 2);
        assert!(!model.has_floating_base());
    }

    #[test]
    fn rejects_cycle() {
        let err = RobotModel::new(
            "cyclic",
            vec![unit_link("a"), unit_link("b")],
            vec![rev_joint(Some("b"), "a"), rev_joint(Some("a"), "b")],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::NoRoot));
    }

    #[test]
    fn rejects_two_roots() {
        let err = RobotModel::new(
            "forest",
            vec![unit_link("a"), unit_link("b")],
            vec![rev_joint(None, "a"), rev_joint(None, "b")],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::MultipleRoots(..)));
    }

    #[test]
    fn rejects_double_parent() {
        let err = RobotModel::new(
            "dag",
            vec![unit_link("a"), unit_link("b")],
            vec![rev_joint(None, "a"), rev_joint(Some("a"), "b"), rev_joint(Some("a"), "b")],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::MultipleParents(..)));
    }

    #[test]
    fn rejects_bad_mass_and_limits() {
        let mut bad = unit_link("a");
        bad.mass = 0.0;
        assert!(matches!(
            RobotModel::new("m", vec![bad], vec![rev_joint(None, "a")], vec![]),
            Err(ModelError::BadMass(..))
        ));

        let mut no_limit = rev_joint(None, "a");
        no_limit.torque_limit = None;
        assert!(matches!(
            RobotModel::new("t", vec![unit_link("a")], vec![no_limit], vec![]),
            Err(ModelError::BadTorqueLimit(..))
        ));
    }

    #[test]
    fn state_check_catches_dimension_and_quaternion_errors() {
        let model = RobotModel::new(
            "chain",
            vec![unit_link("a")],
            vec![JointSpec {
                kind: JointKind::Floating,
                parent: None,
                child: "a".to_string(),
                placement: Isometry3::identity(),
                actuated: false,
                torque_limit: None,
            }],
            vec![],
        )
        .unwrap();
        let mut state = model.neutral_state();
        model.check_state(&state).unwrap();
        state.q[3] = 1.5;
        assert!(matches!(model.check_state(&state), Err(ModelError::QuaternionNorm(_))));
        let short = RobotState::new(DVector::zeros(3), DVector::zeros(6), 0.0);
        assert!(matches!(model.check_state(&short), Err(ModelError::StateDimensions { .. })));
    }

    #[test]
    fn contact_set_order_is_ascending_and_stable() {
        let set = ContactSet::new(vec![3, 0, 3, 1]);
        assert_eq!(set.feet(), &[0, 1, 3]);
        assert!(set.contains(1));
        assert!(!set.contains(2));
    }
}
