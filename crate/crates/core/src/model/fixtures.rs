//! Shared test models with analytically known properties.

use nalgebra::{DVector, Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FootSpec, JointKind, JointSpec, LinkSpec, RobotModel, RobotState};

/// Point-mass pendulum swinging about the world y axis, mass at the tip,
/// which is also registered as a foot.
pub fn pendulum(mass: f64, length: f64) -> RobotModel {
    RobotModel::new(
        "pendulum",
        vec![LinkSpec {
            name: "rod".into(),
            mass,
            com: Vector3::new(0.0, 0.0, -length),
            inertia: Matrix3::zeros(),
        }],
        vec![JointSpec {
            kind: JointKind::Revolute { axis: Vector3::y() },
            parent: None,
            child: "rod".into(),
            placement: Isometry3::identity(),
            actuated: true,
            torque_limit: Some(50.0),
        }],
        vec![FootSpec { link: "rod".into(), offset: Vector3::new(0.0, 0.0, -length) }],
    )
    .unwrap()
}

/// Two-link arm in the x–z plane (both joints about y) with the constants
/// of the textbook Lagrangian mass matrix attached.
pub struct TwoLinkArm {
    pub model: RobotModel,
    pub m1: f64,
    pub l1: f64,
    pub lc1: f64,
    pub i1: f64,
    pub m2: f64,
    pub lc2: f64,
    pub i2: f64,
}

pub fn two_link_arm() -> TwoLinkArm {
    let (m1, l1, lc1, i1) = (1.4, 0.5, 0.22, 0.031);
    let (m2, l2, lc2, i2) = (0.9, 0.4, 0.18, 0.012);
    let rod = |name: &str, m: f64, lc: f64, i: f64| LinkSpec {
        name: name.into(),
        mass: m,
        com: Vector3::new(0.0, 0.0, -lc),
        inertia: Matrix3::from_diagonal(&Vector3::new(0.0, i, 0.0)),
    };
    let model = RobotModel::new(
        "two-link",
        vec![rod("upper", m1, lc1, i1), rod("lower", m2, lc2, i2)],
        vec![
            JointSpec {
                kind: JointKind::Revolute { axis: Vector3::y() },
                parent: None,
                child: "upper".into(),
                placement: Isometry3::identity(),
                actuated: true,
                torque_limit: Some(50.0),
            },
            JointSpec {
                kind: JointKind::Revolute { axis: Vector3::y() },
                parent: Some("upper".into()),
                child: "lower".into(),
                placement: Isometry3::from_parts(
                    Translation3::new(0.0, 0.0, -l1),
                    UnitQuaternion::identity(),
                ),
                actuated: true,
                torque_limit: Some(50.0),
            },
        ],
        vec![FootSpec { link: "lower".into(), offset: Vector3::new(0.0, 0.0, -l2) }],
    )
    .unwrap();
    TwoLinkArm { model, m1, l1, lc1, i1, m2, lc2, i2 }
}

/// Single floating rigid body with its COM at the frame origin.
pub fn floating_box() -> RobotModel {
    RobotModel::new(
        "box",
        vec![LinkSpec {
            name: "body".into(),
            mass: 2.5,
            com: Vector3::zeros(),
            inertia: Matrix3::from_diagonal(&Vector3::new(0.011, 0.023, 0.031)),
        }],
        vec![JointSpec {
            kind: JointKind::Floating,
            parent: None,
            child: "body".into(),
            placement: Isometry3::identity(),
            actuated: false,
            torque_limit: None,
        }],
        vec![],
    )
    .unwrap()
}

pub fn quadruped() -> RobotModel {
    RobotModel::reference_quadruped()
}

/// Deterministic pseudo-random state: unit-quaternion base pose, joint
/// angles in ±1.5 rad, velocities in ±2.
pub fn random_state(model: &RobotModel, seed: u64) -> RobotState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = model.neutral_state();
    if model.has_floating_base() {
        let pos = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.2..1.2),
        );
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let pose = Isometry3::from_parts(
            Translation3::from(pos),
            UnitQuaternion::from_scaled_axis(axis),
        );
        state.set_base_pose(&pose);
        for k in 7..model.n_q() {
            state.q[k] = rng.gen_range(-1.5..1.5);
        }
    } else {
        for k in 0..model.n_q() {
            state.q[k] = rng.gen_range(-1.5..1.5);
        }
    }
    for k in 0..model.n_v() {
        state.v[k] = rng.gen_range(-2.0..2.0);
    }
    state
}

pub fn random_vector(len: usize, scale: f64, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(len, |_, _| rng.gen_range(-scale..scale))
}
