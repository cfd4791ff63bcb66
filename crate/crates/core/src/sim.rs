//! Compliant-contact simulation and the scenario runner.
//!
//! The ground model is a one-sided spring-damper in the normal direction
//! with a saturated viscous Coulomb law tangentially. It is deliberately
//! simple: smooth enough to integrate with semi-implicit Euler at 1 kHz,
//! rich enough that the filter's certified contact forces can be scored
//! against an independent ground truth.
//!
//! `run_scenario` is the whole closed loop: plan a trot, filter the
//! torques, step the physics, and emit one log record per control tick.

use nalgebra::{DVector, Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::filter::{phase, FilterConfig, FilterError, SafetyFilter};
use crate::gait::{nominal_torque, GaitError, GaitSchedule, PdGains, TrotController};
use crate::log::{FootRecord, StepRecord};
use crate::model::{ModelError, RobotModel, RobotState};
use crate::qp::QpStatus;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Gait(#[from] GaitError),
    #[error("{0}")]
    Config(String),
}

/// Flat ground. The clearance obstacle the filter enforces is virtual, so
/// the surface itself never changes height.
#[derive(Debug, Clone)]
pub struct Terrain {
    /// True Coulomb friction coefficient; the filter only ever sees an
    /// estimate of this.
    pub mu: f64,
    pub ground_height: f64,
}

impl Terrain {
    pub fn flat(mu: f64) -> Self {
        Self { mu, ground_height: 0.0 }
    }

    pub fn height(&self, _x: f64, _y: f64) -> f64 {
        self.ground_height
    }

    pub fn normal(&self, _x: f64, _y: f64) -> Vector3<f64> {
        Vector3::z()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(SimError::Config(format!("friction must be positive, got {}", self.mu)));
        }
        if !self.ground_height.is_finite() {
            return Err(SimError::Config("ground height must be finite".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Physics step, s. Must divide `control_dt`.
    pub dt_sim: f64,
    /// Control (and logging) period, s.
    pub control_dt: f64,
    /// Ground spring stiffness, N/m.
    pub stiffness: f64,
    /// Ground normal damping, N·s/m.
    pub damping: f64,
    /// Tangential viscous slope below the friction saturation, N·s/m.
    pub tangential_gain: f64,
    /// Tangential speed floor that regularizes the sliding direction, m/s.
    pub v_eps: f64,
    /// Simulated time after the gait starts, s.
    pub duration: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_sim: 1e-3,
            control_dt: 2e-3,
            stiffness: 3.0e4,
            damping: 1.0e3,
            tangential_gain: 5.0e3,
            v_eps: 1e-4,
            duration: 1.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Physics steps per control tick; errors unless the periods nest.
    pub fn substeps(&self) -> Result<usize, SimError> {
        let ratio = self.control_dt / self.dt_sim;
        let n = ratio.round();
        if !(n >= 1.0 && (ratio - n).abs() < 1e-6) {
            return Err(SimError::Config(format!(
                "control period {} is not a multiple of the physics step {}",
                self.control_dt, self.dt_sim
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("dt_sim", self.dt_sim),
            ("control_dt", self.control_dt),
            ("stiffness", self.stiffness),
            ("tangential_gain", self.tangential_gain),
            ("v_eps", self.v_eps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(SimError::Config(format!(
                "damping must be nonnegative, got {}",
                self.damping
            )));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(SimError::Config(format!(
                "duration must be nonnegative, got {}",
                self.duration
            )));
        }
        self.substeps().map(|_| ())
    }
}

/// Ground reaction force on one point, world frame. Zero until the point
/// is below the surface; the normal component never pulls. The damper is
/// clamped to the spring force, so touchdown force grows from zero with
/// penetration instead of jumping with approach speed.
pub fn point_contact_force(
    position: &Vector3<f64>,
    velocity: &Vector3<f64>,
    terrain: &Terrain,
    config: &SimConfig,
) -> Vector3<f64> {
    let depth = terrain.height(position.x, position.y) - position.z;
    if depth <= 0.0 {
        return Vector3::zeros();
    }
    let spring = config.stiffness * depth;
    // max/min instead of clamp: a non-finite state must propagate to the
    // integrator's solve (which reports it) rather than panic here
    let damper = (-config.damping * velocity.z).max(-spring).min(spring);
    let normal = (spring + damper).max(0.0);
    let v_t = Vector3::new(velocity.x, velocity.y, 0.0);
    let speed = v_t.norm();
    // viscous at creeping speeds, capped at the Coulomb cone once sliding
    let magnitude = (terrain.mu * normal).min(config.tangential_gain * speed);
    let tangential = -v_t * (magnitude / speed.max(config.v_eps));
    Vector3::new(tangential.x, tangential.y, normal)
}

/// Contact force on every foot at the given state, in foot order.
pub fn contact_forces(
    model: &RobotModel,
    state: &RobotState,
    terrain: &Terrain,
    config: &SimConfig,
) -> Vec<Vector3<f64>> {
    let kin = model.kinematics(state);
    (0..model.n_feet())
        .map(|f| {
            point_contact_force(&kin.foot_position(f), &kin.foot_velocity(f), terrain, config)
        })
        .collect()
}

/// One physics step: actuator torques plus ground forces through the foot
/// Jacobians, then a semi-implicit Euler velocity update.
///
/// The ground springs are orders of magnitude stiffer than the leg
/// inertias they push on, so the contact's velocity feedback (the normal
/// damper and the viscous tangential slope) is folded into the system
/// matrix instead of the right-hand side. That first-order implicit
/// treatment is what keeps a 1 kHz step stable; it vanishes as dt goes to
/// zero, leaving the plain contact law.
pub fn step(
    model: &RobotModel,
    state: &RobotState,
    u: &DVector<f64>,
    terrain: &Terrain,
    config: &SimConfig,
) -> Result<RobotState, ModelError> {
    let dt = config.dt_sim;
    let kin = model.kinematics(state);
    let mut tau = DVector::zeros(model.n_v());
    for (k, &vi) in model.actuated_velocity_indices().iter().enumerate() {
        tau[vi] = u[k];
    }
    let mut a = model.mass_matrix(state);
    for f in 0..model.n_feet() {
        let p = kin.foot_position(f);
        let v = kin.foot_velocity(f);
        let lambda = point_contact_force(&p, &v, terrain, config);
        if lambda.z <= 0.0 {
            continue;
        }
        let jac = kin.foot_jacobian(f);
        tau += jac.transpose() * lambda;
        // upper bound on the tangential law's local slope in every regime:
        // 2·c_t covers the sub-v_eps parabola, μλ_z/‖v_t‖ the saturated cone
        let d_t = (2.0 * config.tangential_gain)
            .min(terrain.mu * lambda.z / v.xy().norm().max(config.v_eps));
        let d = Matrix3::from_diagonal(&Vector3::new(d_t, d_t, config.damping));
        a += jac.transpose() * d * &jac * dt;
    }
    tau -= model.nonlinear_effects(state);
    let chol = a.cholesky().ok_or(ModelError::SingularMassMatrix)?;
    let delta_v = chol.solve(&(tau * dt));
    Ok(model.integrate(state, &(delta_v / dt), dt))
}

/// Everything a closed-loop run needs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub terrain: Terrain,
    pub sim: SimConfig,
    pub schedule: GaitSchedule,
    pub gains: PdGains,
    /// Planned base height above ground, m.
    pub stance_height: f64,
    pub filter: FilterConfig,
    pub filter_enabled: bool,
    /// Gait time at which the filter switches on, s.
    pub filter_start: f64,
    /// Static PD hold before the gait epoch, s; lets the contact springs
    /// reach equilibrium so the trot starts from rest.
    pub settle_time: f64,
    /// Uniform perturbation amplitude on the initial joint angles, rad;
    /// drawn from `sim.seed`. Zero keeps the nominal posture.
    pub initial_joint_noise: f64,
}

impl Scenario {
    /// Walking-trot defaults on dry flat ground, filter on from the start.
    pub fn walk() -> Self {
        Self {
            terrain: Terrain::flat(0.8),
            sim: SimConfig::default(),
            schedule: GaitSchedule::trot(),
            gains: PdGains::default(),
            stance_height: 0.30,
            filter: FilterConfig::new(4),
            filter_enabled: true,
            filter_start: 0.0,
            settle_time: 0.5,
            initial_joint_noise: 0.0,
        }
    }

    pub fn validate(&self, n_feet: usize) -> Result<(), SimError> {
        self.terrain.validate()?;
        self.sim.validate()?;
        self.schedule
            .validate(n_feet)
            .map_err(|e| SimError::Config(e.to_string()))?;
        self.filter
            .validate(n_feet)
            .map_err(|e| SimError::Config(e.to_string()))?;
        if !(self.stance_height.is_finite() && self.stance_height > 0.0) {
            return Err(SimError::Config(format!(
                "stance height must be positive, got {}",
                self.stance_height
            )));
        }
        if !(self.filter_start.is_finite() && self.filter_start >= 0.0) {
            return Err(SimError::Config(format!(
                "filter start must be nonnegative, got {}",
                self.filter_start
            )));
        }
        if !(self.settle_time.is_finite() && self.settle_time >= 0.0) {
            return Err(SimError::Config(format!(
                "settle time must be nonnegative, got {}",
                self.settle_time
            )));
        }
        if !(self.initial_joint_noise.is_finite() && self.initial_joint_noise >= 0.0) {
            return Err(SimError::Config(format!(
                "joint noise must be nonnegative, got {}",
                self.initial_joint_noise
            )));
        }
        Ok(())
    }
}

pub struct ScenarioRun {
    /// One record per control tick, sampled before the tick's physics.
    pub records: Vec<StepRecord>,
    pub final_state: RobotState,
    /// Control ticks where the filter could not certify a torque and fell
    /// back to holding the previous one.
    pub fallback_steps: usize,
}

pub fn run_scenario(model: &RobotModel, scenario: &Scenario) -> Result<ScenarioRun, SimError> {
    scenario.validate(model.n_feet())?;
    let mut controller =
        TrotController::new(model, scenario.schedule.clone(), scenario.stance_height)?;

    // Initial posture: the plan at t = 0, dropped onto the ground with the
    // static spring preload so the stand starts in force equilibrium.
    let weight = model.total_mass() * model.gravity.norm();
    let preload = weight / (model.n_feet() as f64 * scenario.sim.stiffness);
    let mut state = model.neutral_state();
    state.set_base_pose(&Isometry3::from_parts(
        Translation3::new(0.0, 0.0, scenario.stance_height - preload),
        UnitQuaternion::identity(),
    ));
    let cmd0 = controller.command(model, &state);
    let qi = model.actuated_position_indices();
    for (k, &q_idx) in qi.iter().enumerate() {
        state.q[q_idx] = cmd0.q_des[k];
    }
    if scenario.initial_joint_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.sim.seed);
        let a = scenario.initial_joint_noise;
        for &q_idx in &qi {
            state.q[q_idx] += rng.gen_range(-a..=a);
        }
    }

    let substeps = scenario.sim.substeps()?;
    let zero_rate = DVector::zeros(model.n_va());
    let settle_steps = (scenario.settle_time / scenario.sim.dt_sim).round() as usize;
    for _ in 0..settle_steps {
        let u = nominal_torque(model, &state, &cmd0.q_des, &zero_rate, &scenario.gains);
        state = step(model, &state, &u, &scenario.terrain, &scenario.sim)?;
    }
    // gait epoch: the plan and the filter phase both key off state time
    state.t = 0.0;

    let mut filter = scenario
        .filter_enabled
        .then(|| SafetyFilter::new(scenario.filter.clone(), model.n_feet()))
        .transpose()?;
    let filter_start_tick = (scenario.filter_start / scenario.sim.control_dt).round() as usize;
    let control_steps = (scenario.sim.duration / scenario.sim.control_dt).round() as usize;

    let vi = model.actuated_velocity_indices().to_vec();
    let mut records = Vec::with_capacity(control_steps);
    let mut fallback_steps = 0usize;

    for tick in 0..control_steps {
        let cmd = controller.command(model, &state);
        let u_nominal = nominal_torque(model, &state, &cmd.q_des, &cmd.qd_des, &scenario.gains);
        let lambda_true = contact_forces(model, &state, &scenario.terrain, &scenario.sim);

        let decision = match filter.as_mut() {
            Some(f) if tick >= filter_start_tick => {
                Some(f.step(model, &state, &cmd.contacts, &u_nominal)?)
            }
            _ => None,
        };

        let ph = phase(state.t, scenario.filter.gait_period);
        let mut lambda_qp = vec![[0.0; 3]; model.n_feet()];
        let (u_applied, status, iterations, interference, h_values) = match &decision {
            Some(d) => {
                if d.status != QpStatus::Optimal {
                    fallback_steps += 1;
                }
                for (ci, &f) in cmd.contacts.feet().iter().enumerate() {
                    lambda_qp[f] =
                        [d.lambda[3 * ci], d.lambda[3 * ci + 1], d.lambda[3 * ci + 2]];
                }
                (&d.u_filtered, d.status, d.iterations, d.interference, d.h_values.clone())
            }
            None => {
                let kin = model.kinematics(&state);
                let h_values = (0..model.n_feet())
                    .map(|f| {
                        kin.foot_position(f).z - scenario.filter.clearance[f].evaluate(ph.phi).0
                    })
                    .collect();
                (&u_nominal, QpStatus::Optimal, 0, 0.0, h_values)
            }
        };

        let base = state.base_pose().translation;
        records.push(StepRecord {
            t: state.t,
            phi: ph.phi,
            status,
            iterations,
            interference,
            base_position: [base.x, base.y, base.z],
            feet: (0..model.n_feet())
                .map(|f| FootRecord {
                    h: h_values[f],
                    lambda_qp: lambda_qp[f],
                    lambda_true: [lambda_true[f].x, lambda_true[f].y, lambda_true[f].z],
                    stance: cmd.contacts.contains(f),
                })
                .collect(),
            u_nominal: u_nominal.as_slice().to_vec(),
            u_filtered: u_applied.as_slice().to_vec(),
            q: qi.iter().map(|&i| state.q[i]).collect(),
            dq: vi.iter().map(|&i| state.v[i]).collect(),
        });

        for _ in 0..substeps {
            state = step(model, &state, u_applied, &scenario.terrain, &scenario.sim)?;
        }
    }

    Ok(ScenarioRun { records, final_state: state, fallback_steps })
}

#[derive(Debug, Clone, Copy)]
pub struct GrfError {
    /// Mean |certified − simulated| vertical force over counted samples, N.
    pub vertical_mae: f64,
    /// Mean |certified − simulated| over both tangential axes, N.
    pub lateral_mae: f64,
    pub vertical_samples: usize,
    pub lateral_samples: usize,
}

/// Score the filter's certified stance forces against the simulator's.
/// Samples within `blanking` seconds of a touchdown are skipped: the
/// spring impact transient is not the filter's to predict. Records whose
/// QP did not reach an optimum carry no certified force and are skipped
/// too. A foot already in stance on the first record counts as having
/// touched down right there.
pub fn measure_grf_error(records: &[StepRecord], blanking: f64) -> GrfError {
    let n_feet = records.first().map_or(0, |r| r.feet.len());
    let mut touchdown = vec![f64::NEG_INFINITY; n_feet];
    let mut prev_stance = vec![false; n_feet];
    let (mut v_sum, mut v_n) = (0.0, 0usize);
    let (mut l_sum, mut l_n) = (0.0, 0usize);
    for rec in records {
        for f in 0..n_feet {
            let stance = rec.feet[f].stance;
            if stance && !prev_stance[f] {
                touchdown[f] = rec.t;
            }
            prev_stance[f] = stance;
        }
        if rec.status != QpStatus::Optimal {
            continue;
        }
        for f in 0..n_feet {
            let foot = &rec.feet[f];
            if !foot.stance || rec.t - touchdown[f] < blanking {
                continue;
            }
            v_sum += (foot.lambda_qp[2] - foot.lambda_true[2]).abs();
            v_n += 1;
            for axis in 0..2 {
                l_sum += (foot.lambda_qp[axis] - foot.lambda_true[axis]).abs();
                l_n += 1;
            }
        }
    }
    GrfError {
        vertical_mae: if v_n == 0 { 0.0 } else { v_sum / v_n as f64 },
        lateral_mae: if l_n == 0 { 0.0 } else { l_sum / l_n as f64 },
        vertical_samples: v_n,
        lateral_samples: l_n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log;
    use crate::model::fixtures;
    use approx::assert_relative_eq;

    fn actuated_q(model: &RobotModel, state: &RobotState) -> DVector<f64> {
        DVector::from_iterator(
            model.n_va(),
            model.actuated_position_indices().iter().map(|&i| state.q[i]),
        )
    }

    fn crouch_state(model: &RobotModel, base_z: f64) -> RobotState {
        let mut state = model.neutral_state();
        for leg in 0..4 {
            state.q[7 + 3 * leg + 1] = 0.7;
            state.q[7 + 3 * leg + 2] = -1.4;
        }
        state.set_base_pose(&Isometry3::from_parts(
            Translation3::new(0.0, 0.0, base_z),
            UnitQuaternion::identity(),
        ));
        state
    }

    /// Base height that puts every crouch foot at exactly `foot_z`.
    /// Base translation shifts world foot heights one-for-one when the
    /// base is unrotated.
    fn base_z_for_foot_height(model: &RobotModel, foot_z: f64) -> f64 {
        let probe = crouch_state(model, 0.0);
        let z0 = model.kinematics(&probe).foot_position(0).z;
        foot_z - z0
    }

    #[test]
    fn contact_law_matches_the_stated_force_laws() {
        let terrain = Terrain::flat(0.8);
        let config = SimConfig::default();

        // above the surface: nothing, even while moving down
        let up = point_contact_force(
            &Vector3::new(0.0, 0.0, 0.01),
            &Vector3::new(0.0, 0.0, -1.0),
            &terrain,
            &config,
        );
        assert_eq!(up, Vector3::zeros());

        // static penetration: pure spring
        let depth = 2e-3;
        let p = Vector3::new(0.3, -0.1, -depth);
        let stat = point_contact_force(&p, &Vector3::zeros(), &terrain, &config);
        assert_relative_eq!(stat.z, config.stiffness * depth, max_relative = 1e-12);
        assert_eq!((stat.x, stat.y), (0.0, 0.0));

        // gentle descent adds the damper linearly
        let down = point_contact_force(&p, &Vector3::new(0.0, 0.0, -0.01), &terrain, &config);
        assert_relative_eq!(down.z, config.stiffness * depth + 10.0, max_relative = 1e-12);
        // the damper saturates at the spring force in both directions
        let crash = point_contact_force(&p, &Vector3::new(0.0, 0.0, -1.0), &terrain, &config);
        assert_relative_eq!(crash.z, 2.0 * config.stiffness * depth, max_relative = 1e-12);
        let fast_up = point_contact_force(&p, &Vector3::new(0.0, 0.0, 0.1), &terrain, &config);
        assert_eq!(fast_up.z, 0.0);

        // proper sliding sits exactly on the friction cone, opposing motion
        let slide = point_contact_force(&p, &Vector3::new(0.1, 0.0, 0.0), &terrain, &config);
        let normal = config.stiffness * depth;
        assert!((slide.xy().norm() - terrain.mu * normal).abs() < 1e-9);
        assert!(slide.x < 0.0 && slide.y == 0.0);

        // creeping stays viscous: magnitude c_t‖v‖, direction v/v_eps
        let creep = point_contact_force(&p, &Vector3::new(1e-5, 0.0, 0.0), &terrain, &config);
        let expected = -config.tangential_gain * 1e-5 * (1e-5 / config.v_eps);
        assert_relative_eq!(creep.x, expected, max_relative = 1e-12);
    }

    #[test]
    fn foot_forces_follow_the_point_law_through_the_kinematics() {
        let model = fixtures::quadruped();
        let terrain = Terrain::flat(0.8);
        let config = SimConfig::default();
        let depth = 1e-3;
        let state = crouch_state(&model, base_z_for_foot_height(&model, -depth));
        let forces = contact_forces(&model, &state, &terrain, &config);
        assert_eq!(forces.len(), 4);
        for f in forces {
            assert_relative_eq!(f.z, config.stiffness * depth, epsilon = 1e-9);
            assert!(f.xy().norm() < 1e-12);
        }

        // lift the robot clear of the ground: no contact anywhere
        let airborne = crouch_state(&model, base_z_for_foot_height(&model, 0.05));
        for f in contact_forces(&model, &airborne, &terrain, &config) {
            assert_eq!(f, Vector3::zeros());
        }
    }

    #[test]
    fn standing_robot_settles_onto_its_weight() {
        let model = fixtures::quadruped();
        let terrain = Terrain::flat(0.8);
        let config = SimConfig::default();
        let gains = PdGains::default();

        let weight = model.total_mass() * model.gravity.norm();
        let preload = weight / (4.0 * config.stiffness);
        let mut state = crouch_state(&model, base_z_for_foot_height(&model, -preload));
        let q_des = actuated_q(&model, &state);
        let qd_des = DVector::zeros(model.n_va());

        for _ in 0..1000 {
            let u = nominal_torque(&model, &state, &q_des, &qd_des, &gains);
            state = step(&model, &state, &u, &terrain, &config).unwrap();
        }

        let total: f64 = contact_forces(&model, &state, &terrain, &config)
            .iter()
            .map(|f| f.z)
            .sum();
        assert!(
            (total - weight).abs() <= 0.01 * weight,
            "supported {total:.3} N vs weight {weight:.3} N"
        );
        // the sway transient is still dying out at 1 s; just rule out chatter
        assert!(state.v.norm() < 0.1, "still moving at {}", state.v.norm());
    }

    #[test]
    fn halving_the_physics_step_barely_moves_a_smooth_trajectory() {
        let model = fixtures::quadruped();
        let terrain = Terrain::flat(0.8);
        let gains = PdGains::default();
        let coarse = SimConfig::default();
        let fine = SimConfig { dt_sim: 5e-4, ..coarse.clone() };

        let weight = model.total_mass() * model.gravity.norm();
        let preload = weight / (4.0 * coarse.stiffness);
        let start = crouch_state(&model, base_z_for_foot_height(&model, -preload));
        let q_des = actuated_q(&model, &start);
        let qd_des = DVector::zeros(model.n_va());

        let run = |config: &SimConfig, steps: usize| {
            let mut state = start.clone();
            for _ in 0..steps {
                let u = nominal_torque(&model, &state, &q_des, &qd_des, &gains);
                state = step(&model, &state, &u, &terrain, config).unwrap();
            }
            state
        };
        let a = run(&coarse, 1000);
        let b = run(&fine, 2000);
        let diff = (&a.q - &b.q).norm() + (&a.v - &b.v).norm();
        assert!(diff < 1e-3, "endpoint moved by {diff:.2e} under refinement");
    }

    #[test]
    fn scenario_runs_are_bitwise_reproducible() {
        let model = fixtures::quadruped();
        let mut scenario = Scenario::walk();
        scenario.sim.duration = 0.12;
        scenario.settle_time = 0.1;
        scenario.initial_joint_noise = 0.01;
        scenario.sim.seed = 7;

        let a = run_scenario(&model, &scenario).unwrap();
        let b = run_scenario(&model, &scenario).unwrap();
        assert!(!a.records.is_empty());
        let text_a = log::to_string(model.n_feet(), model.n_va(), &a.records);
        let text_b = log::to_string(model.n_feet(), model.n_va(), &b.records);
        assert_eq!(text_a, text_b);
        assert_eq!(a.fallback_steps, b.fallback_steps);
    }

    #[test]
    fn grf_scoring_blanks_touchdowns_and_failed_solves() {
        let foot = |stance: bool, dz: f64| FootRecord {
            h: 0.0,
            lambda_qp: [1.0, 3.0, 10.0 + dz],
            lambda_true: [0.0, 0.0, 10.0],
            stance,
        };
        let rec = |t: f64, stance: bool, dz: f64, status: QpStatus| StepRecord {
            t,
            phi: 0.0,
            status,
            iterations: 1,
            interference: 0.0,
            base_position: [0.0; 3],
            feet: vec![foot(stance, dz)],
            u_nominal: vec![],
            u_filtered: vec![],
            q: vec![],
            dq: vec![],
        };
        let records = vec![
            // stance from the start: touchdown at t = 0, first 20 ms blanked
            rec(0.00, true, 9.0, QpStatus::Optimal),
            rec(0.01, true, 9.0, QpStatus::Optimal),
            rec(0.02, true, 1.0, QpStatus::Optimal),
            rec(0.03, true, 2.0, QpStatus::Optimal),
            // swing break, then a second touchdown with its own blanking
            rec(0.04, false, 9.0, QpStatus::Optimal),
            rec(0.05, true, 9.0, QpStatus::Optimal),
            rec(0.06, true, 9.0, QpStatus::Optimal),
            rec(0.07, true, 3.0, QpStatus::Optimal),
            // failed solve carries no certified force
            rec(0.08, true, 9.0, QpStatus::Infeasible),
        ];
        let score = measure_grf_error(&records, 0.020);
        // counted vertical errors: 1, 2, 3
        assert_eq!(score.vertical_samples, 3);
        assert_relative_eq!(score.vertical_mae, 2.0, max_relative = 1e-12);
        // lateral pools |1| and |3| from each counted record
        assert_eq!(score.lateral_samples, 6);
        assert_relative_eq!(score.lateral_mae, 2.0, max_relative = 1e-12);
    }
}
