//! Nominal trotting controller.
//!
//! Deliberately force-unaware: open-loop swing arcs in the world frame,
//! leg inverse kinematics from a horizontal planning frame, and a
//! joint-space PD on the actuated joints. It knows nothing about
//! friction, contact forces, or obstacles; keeping the motion safe is
//! someone else's job.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Isometry3, Translation3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::filter::{phase, ClearanceProfile, FootClearance};
use crate::model::{ContactSet, RobotModel, RobotState};

#[derive(Debug, Error)]
pub enum GaitError {
    #[error("invalid gait schedule: {0}")]
    Schedule(String),
}

/// Trot timing and stride geometry. The two diagonal pairs alternate
/// stance, half a period apart.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitSchedule {
    /// Full gait cycle, s.
    pub gait_period: f64,
    /// Fraction of the period each foot spends in stance.
    pub duty: f64,
    /// Feet moving together; pair A is in stance first.
    pub pair_a: [usize; 2],
    pub pair_b: [usize; 2],
    /// World-frame stride per swing, m.
    pub step_length: f64,
    /// Apex of the swing arc, m.
    pub step_height: f64,
    /// Forward speed of the body, m/s.
    pub body_velocity_target: f64,
}

impl GaitSchedule {
    /// Diagonal-pair trot at a moderate walk. Stride matches the body speed
    /// so the feet do not drift relative to the hips.
    pub fn trot() -> Self {
        GaitSchedule {
            gait_period: 0.6,
            duty: 0.5,
            pair_a: [0, 3],
            pair_b: [1, 2],
            step_length: 0.18,
            step_height: 0.06,
            body_velocity_target: 0.3,
        }
    }

    pub fn validate(&self, n_feet: usize) -> Result<(), GaitError> {
        if !(self.gait_period.is_finite() && self.gait_period > 0.0) {
            return Err(GaitError::Schedule(format!(
                "gait_period must be positive, got {}",
                self.gait_period
            )));
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(GaitError::Schedule(format!(
                "duty must lie in (0, 1), got {}",
                self.duty
            )));
        }
        for value in [self.step_length, self.step_height, self.body_velocity_target] {
            if !value.is_finite() {
                return Err(GaitError::Schedule("stride parameters must be finite".into()));
            }
        }
        if self.step_height < 0.0 {
            return Err(GaitError::Schedule(format!(
                "step_height must be nonnegative, got {}",
                self.step_height
            )));
        }
        let mut all: Vec<usize> = self.pair_a.iter().chain(&self.pair_b).copied().collect();
        all.sort_unstable();
        let expected: Vec<usize> = (0..n_feet).collect();
        if all != expected {
            return Err(GaitError::Schedule(format!(
                "pairs {:?}/{:?} must partition the {} feet",
                self.pair_a, self.pair_b, n_feet
            )));
        }
        Ok(())
    }

    /// Gait phase at which this foot's stance window opens.
    pub fn stance_start(&self, foot: usize) -> f64 {
        if self.pair_a.contains(&foot) {
            0.0
        } else {
            0.5
        }
    }

    pub fn in_stance(&self, phi: f64, foot: usize) -> bool {
        (phi - self.stance_start(foot)).rem_euclid(1.0) < self.duty
    }

    /// Local swing phase s ∈ [0, 1), or None while the foot is in stance.
    pub fn swing_phase(&self, phi: f64, foot: usize) -> Option<f64> {
        let shifted = (phi - self.stance_start(foot)).rem_euclid(1.0);
        if shifted < self.duty {
            None
        } else {
            Some((shifted - self.duty) / (1.0 - self.duty))
        }
    }

    /// The foot's swing window in global phase. The end can exceed 1 when
    /// the window wraps past the cycle boundary (never with duty = 1/2).
    pub fn swing_window(&self, foot: usize) -> (f64, f64) {
        let start = (self.stance_start(foot) + self.duty).rem_euclid(1.0);
        (start, start + (1.0 - self.duty))
    }
}

/// Stance feet at time t, per the schedule.
pub fn contact_schedule(t: f64, schedule: &GaitSchedule) -> ContactSet {
    let phi = phase(t, schedule.gait_period).phi;
    let feet: Vec<usize> = schedule
        .pair_a
        .iter()
        .chain(&schedule.pair_b)
        .copied()
        .filter(|&f| schedule.in_stance(phi, f))
        .collect();
    ContactSet::new(feet)
}

/// Clearance floors that shadow this schedule's planned swing arcs at a
/// fixed `margin` below, one per foot. A barrier built on these is silent
/// while a foot tracks its arc and only engages when the foot drops more
/// than `margin` under the plan; a floor that does not move with the arc
/// would instead cap the descent half of every swing, because the barrier
/// limits approach acceleration toward the floor and the arc's own descent
/// exceeds that limit long before touchdown. Needs duty ≥ 1/2 so both
/// pairs' swing windows are contiguous in phase.
pub fn swing_clearance(schedule: &GaitSchedule, margin: f64) -> Vec<FootClearance> {
    assert!(schedule.duty >= 0.5, "swing windows wrap for duty < 1/2");
    let arch = ClearanceProfile::Arch { peak: schedule.step_height, offset: -margin };
    let n = 1 + schedule.pair_a.iter().chain(&schedule.pair_b).copied().max().unwrap_or(0);
    let mut out = vec![FootClearance::flat(); n];
    for &f in &schedule.pair_a {
        out[f] = FootClearance { profile: arch.clone(), window: (schedule.duty, 1.0) };
    }
    for &f in &schedule.pair_b {
        out[f] = FootClearance { profile: arch.clone(), window: (schedule.duty - 0.5, 0.5) };
    }
    out
}

/// Desired swing-foot motion, as displacement from the liftoff point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingTarget {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

/// Swing arc at local phase s ∈ [0, 1]: a cubic ramp forward and a sin² lift,
/// so position and velocity are continuous with the stance hold at both ends.
/// Time derivatives use the constant swing rate ṡ = 1/((1 − duty)·period).
pub fn swing_trajectory(s: f64, schedule: &GaitSchedule) -> SwingTarget {
    let l = schedule.step_length;
    let h = schedule.step_height;
    let s_dot = 1.0 / ((1.0 - schedule.duty) * schedule.gait_period);

    let x = l * (3.0 * s * s - 2.0 * s * s * s);
    let dx = l * 6.0 * s * (1.0 - s);
    let ddx = l * (6.0 - 12.0 * s);

    let lift = (PI * s).sin();
    let z = h * lift * lift;
    let dz = h * PI * (2.0 * PI * s).sin();
    let ddz = h * 2.0 * PI * PI * (2.0 * PI * s).cos();

    SwingTarget {
        position: Vector3::new(x, 0.0, z),
        velocity: Vector3::new(dx * s_dot, 0.0, dz * s_dot),
        acceleration: Vector3::new(ddx * s_dot * s_dot, 0.0, ddz * s_dot * s_dot),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IkResult {
    pub converged: bool,
    /// Final foot position error, m.
    pub error: f64,
    pub iterations: usize,
}

/// Joints on the path from a link to the root, excluding the floating base.
fn leg_chain(model: &RobotModel, link: usize) -> Vec<usize> {
    let mut chain = Vec::new();
    let mut cursor = Some(link);
    while let Some(i) = cursor {
        if model.joints[i].kind.dof() == 1 && model.joints[i].actuated {
            chain.push(i);
        }
        cursor = model.joints[i].parent;
    }
    chain.reverse();
    chain
}

/// Damped-least-squares inverse kinematics for one leg, editing `state` in
/// place. The base pose is taken as given; only the leg's own joints move.
/// An unreachable target leaves the nearest-reach posture and comes back
/// with `converged: false`.
pub fn leg_inverse_kinematics(
    model: &RobotModel,
    state: &mut RobotState,
    foot: usize,
    target: &Vector3<f64>,
) -> IkResult {
    const MAX_ITER: usize = 50;
    const TOL: f64 = 1e-6;
    const DAMPING: f64 = 1e-3;
    // keeps a single update from vaulting across the workspace
    const MAX_STEP: f64 = 0.5;

    let chain = leg_chain(model, model.feet()[foot].link);
    let n = chain.len();

    for iter in 0..MAX_ITER {
        let kin = model.kinematics(state);
        let e = target - kin.foot_position(foot);
        if e.norm() <= TOL {
            return IkResult { converged: true, error: e.norm(), iterations: iter };
        }
        let jac = kin.foot_jacobian(foot);
        let mut leg_jac = DMatrix::zeros(3, n);
        for (k, &j) in chain.iter().enumerate() {
            leg_jac.set_column(k, &jac.column(model.joints[j].v_offset));
        }
        let mut normal = leg_jac.transpose() * &leg_jac;
        for d in 0..n {
            normal[(d, d)] += DAMPING * DAMPING;
        }
        let gradient = leg_jac.transpose() * e;
        let Some(chol) = normal.cholesky() else { break };
        let mut delta = chol.solve(&gradient);
        let step = delta.norm();
        if step > MAX_STEP {
            delta *= MAX_STEP / step;
        }
        for (k, &j) in chain.iter().enumerate() {
            state.q[model.joints[j].q_offset] += delta[k];
        }
    }

    let kin = model.kinematics(state);
    let error = (target - kin.foot_position(foot)).norm();
    IkResult { converged: error <= TOL, error, iterations: MAX_ITER }
}

/// Joint-space PD gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdGains {
    /// N·m/rad.
    pub kp: f64,
    /// N·m·s/rad.
    pub kd: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        PdGains { kp: 60.0, kd: 2.0 }
    }
}

/// u = Kp(q_des − q) + Kd(q̇_des − q̇) per actuated joint, clamped to the
/// torque limits.
pub fn nominal_torque(
    model: &RobotModel,
    state: &RobotState,
    q_des: &DVector<f64>,
    qd_des: &DVector<f64>,
    gains: &PdGains,
) -> DVector<f64> {
    let qi = model.actuated_position_indices();
    let vi = model.actuated_velocity_indices();
    let tau = model.torque_limits();
    DVector::from_fn(model.n_va(), |k, _| {
        let u = gains.kp * (q_des[k] - state.q[qi[k]]) + gains.kd * (qd_des[k] - state.v[vi[k]]);
        u.clamp(-tau[k], tau[k])
    })
}

/// One control step's desired motion.
#[derive(Debug, Clone)]
pub struct NominalCommand {
    pub contacts: ContactSet,
    /// Desired actuated joint angles, rad.
    pub q_des: DVector<f64>,
    /// Desired actuated joint rates, rad/s.
    pub qd_des: DVector<f64>,
    /// Desired world foot positions the IK tracked, per foot.
    pub foot_targets: Vec<Vector3<f64>>,
    pub ik_converged: bool,
}

/// Trot planner with open-loop foot trajectories. The stance anchors sit
/// on a world-frame grid advancing at the commanded speed and the swing
/// arcs between them are pure functions of time; the IK that turns those
/// world targets into joint angles runs against the measured base pose.
/// That second part matters: when the body tips or sags, the legs on the
/// low side get longer targets and push back, which is the only attitude
/// feedback this force-unaware controller has.
pub struct TrotController {
    pub schedule: GaitSchedule,
    /// Planned base height the foot workspace is sized around, m.
    pub stance_height: f64,
    /// Foot anchor offsets at zero body travel: under each hip.
    home: Vec<Vector3<f64>>,
    /// IK seed, reused between steps as a warm start.
    seed: RobotState,
    prev: Option<(f64, DVector<f64>, Vec<usize>)>,
    /// Low-passed measured yaw the planning frame partially follows.
    heading: f64,
}

/// Stance foot targets sit this far below the surface, m. The legs
/// cannot pull on the ground, so a position controller only bears
/// weight if its stance targets command compression; the body then
/// rides at the height where leg stiffness balances gravity.
const PUSH_IN: f64 = 0.025;

/// Fraction of stance spent easing from the surface down to the preload
/// depth, half-cosine. An instantaneous step commands the foot through
/// the leg's own lag at more than a metre per second, and the ground
/// damper answers a touchdown at that speed with a force spike that can
/// excite a bounce.
const PUSH_IN_RAMP: f64 = 0.25;

/// Fraction of the measured heading the planning frame follows; the rest
/// acts as a yaw spring through stance friction.
const YAW_FOLLOW: f64 = 0.8;

/// Time constant of the heading follow, s. The frame must track the slow
/// heading drift but not the step-to-step yaw oscillation: following the
/// oscillation turns its rate into commanded foot sweeps through the
/// desired-rate feedforward, and the ground answers those with tangential
/// forces the friction cone cannot certify.
const YAW_FOLLOW_TAU: f64 = 0.25;

impl TrotController {
    pub fn new(
        model: &RobotModel,
        schedule: GaitSchedule,
        stance_height: f64,
    ) -> Result<Self, GaitError> {
        schedule.validate(model.n_feet())?;
        if !(stance_height.is_finite() && stance_height > 0.0) {
            return Err(GaitError::Schedule(format!(
                "stance_height must be positive, got {stance_height}"
            )));
        }
        // home anchors: foot positions with every joint at zero, projected
        // onto the ground
        let neutral = model.neutral_state();
        let kin = model.kinematics(&neutral);
        let mut home: Vec<Vector3<f64>> = (0..model.n_feet())
            .map(|f| {
                let p = kin.foot_position(f);
                Vector3::new(p.x, p.y, 0.0)
            })
            .collect();
        // knee-backward crouch seed so the first IK solve starts away from
        // the straight-leg singularity and on the intended branch
        let mut seed = neutral;
        for foot in 0..model.n_feet() {
            let chain = leg_chain(model, model.feet()[foot].link);
            if chain.len() >= 3 {
                seed.q[model.joints[chain[1]].q_offset] = 0.7;
                seed.q[model.joints[chain[2]].q_offset] = -1.4;
            }
        }
        // Center the grid under the standing center of mass. The bent
        // stance posture carries the CoM away from the hip-grid center,
        // and an off-center grid leaves a standing toppling moment about
        // every diagonal support line that a joint PD cannot hold off
        // indefinitely. One pass is enough; the recentered posture moves
        // the CoM again only at the millimeter scale.
        let mut stand = seed.clone();
        stand.set_base_pose(&Isometry3::from_parts(
            Translation3::new(0.0, 0.0, stance_height),
            UnitQuaternion::identity(),
        ));
        for foot in 0..model.n_feet() {
            leg_inverse_kinematics(model, &mut stand, foot, &home[foot]);
        }
        let com = model.kinematics(&stand).com();
        let n = model.n_feet() as f64;
        let mean: Vector3<f64> = home.iter().sum::<Vector3<f64>>() / n;
        for anchor in &mut home {
            anchor.x += com.x - mean.x;
            anchor.y += com.y - mean.y;
        }
        Ok(TrotController { schedule, stance_height, home, seed, prev: None, heading: 0.0 })
    }

    /// Foot-local gait coordinates at time t: completed cycles and the
    /// phase fraction within the current one, stance first.
    fn foot_phase(&self, foot: usize, t: f64) -> (f64, f64) {
        let s = &self.schedule;
        let periods = t / s.gait_period - s.stance_start(foot);
        let cycle = periods.floor();
        (cycle, periods - cycle)
    }

    /// Preload progress for a stance phase fraction, 0 at touchdown to 1
    /// planted, half-cosine so the touchdown handoff is C¹: the swing arc
    /// arrives at the surface with zero vertical rate and the push-in
    /// picks up from there with zero initial slope. A stance that began
    /// at or before the gait epoch had no touchdown; it holds full
    /// preload so the plan at t = 0 is a symmetric stand and the robot
    /// does not settle lopsided.
    fn preload_progress(&self, frac: f64, t: f64) -> f64 {
        let sg = frac / self.schedule.duty;
        let began_before_epoch = t - frac * self.schedule.gait_period <= 1e-9;
        if began_before_epoch || sg >= PUSH_IN_RAMP {
            1.0
        } else {
            0.5 * (1.0 - (PI * sg / PUSH_IN_RAMP).cos())
        }
    }

    /// Desired world position for a foot at time t.
    ///
    /// Stance: planted on its anchor, easing down to the preload depth,
    /// the anchor chosen so the foot passes under the hip at mid-stance.
    /// Swing: the arc from the anchor it just left toward the next one,
    /// step_length ahead, lifting from the surface and returning to it
    /// with zero vertical rate exactly at the handoff. The arc must not
    /// dive below the surface early: a plan that reaches stance depth
    /// before the schedule flips grinds the swing pair into the ground
    /// and tips the body over the stance diagonal. The residual descent
    /// to the preload depth at touchdown is safe precisely because the
    /// foot is already resting on the surface then; the leg just loads
    /// through its own damping instead of striking with flight speed.
    pub fn desired_foot_position(&self, foot: usize, t: f64) -> Vector3<f64> {
        let s = &self.schedule;
        let (cycle, frac) = self.foot_phase(foot, t);
        let anchor_x = |k: f64| {
            self.home[foot].x
                + s.body_velocity_target * (k + s.stance_start(foot) + 0.5 * s.duty)
                    * s.gait_period
        };
        if frac < s.duty {
            let ramp = self.preload_progress(frac, t);
            Vector3::new(anchor_x(cycle), self.home[foot].y, -PUSH_IN * ramp)
        } else {
            let sw = (frac - s.duty) / (1.0 - s.duty);
            let arc = swing_trajectory(sw, s);
            Vector3::new(
                anchor_x(cycle) + arc.position.x,
                self.home[foot].y + arc.position.y,
                arc.position.z,
            )
        }
    }

    /// Plan the desired joint motion for the state's time. Call with
    /// increasing time; the desired rates come from differencing
    /// consecutive calls.
    ///
    /// The leg IK runs against a level planning frame: measured x and y,
    /// identity orientation, and a height that depends on the leg's job.
    /// Support legs are solved from the planned height, orientation and
    /// height held open loop on purpose, and each choice is load-bearing.
    /// Planning as if the body were level and at height means any actual
    /// rotation or sag presses feet into the ground where the plan did
    /// not put them, and the position loop pushing back turns contact
    /// forces into righting moments: a tipping body carries its swing
    /// legs into the ground early on the low side, a yawing body gets
    /// twisted back by stance friction, a sagging body gets lifted by
    /// stance compression. Following the measured rotation or height on
    /// those legs severs exactly that feedback, and the trot falls
    /// within a few steps of any disturbance. Swing legs are the
    /// opposite case: they carry no load, so there is no feedback to
    /// sever, and solving them from the planned height executes the arc
    /// wherever the body happens to ride. The preload holds the body a
    /// couple of centimeters above the planned height, which is enough
    /// for a plan-frame touchdown to strand the foot mid-air at the
    /// handoff and turn the stance step into an impact. Solving swing
    /// legs from the measured height lands them on the actual ground,
    /// and a fresh stance leg eases from the measured height to the
    /// planned one in lockstep with the preload so its commanded length
    /// is continuous through touchdown. Measured x and y carry no
    /// balance information for either group; following them keeps the
    /// world-frame anchor grid inside the leg workspace as the body
    /// travels.
    pub fn command(&mut self, model: &RobotModel, state: &RobotState) -> NominalCommand {
        let t = state.t;
        let contacts = contact_schedule(t, &self.schedule);
        let measured = state.base_pose();
        // follow most of the measured heading, low-passed. The residual is
        // the yaw spring: stance feet dragged toward unrotated anchors pull
        // the heading back through ground friction. Following none of it
        // makes that spring demand more tangential force than the friction
        // cone certifies whenever the heading swings a few hundredths of a
        // radian, and the filter has nowhere legal to put the torque
        let dt = self.prev.as_ref().map_or(0.0, |(pt, _, _)| (t - pt).max(0.0));
        let blend = dt / (YAW_FOLLOW_TAU + dt);
        self.heading += blend * (measured.rotation.euler_angles().2 - self.heading);
        let heading = UnitQuaternion::from_euler_angles(0.0, 0.0, YAW_FOLLOW * self.heading);

        let mut foot_targets = Vec::with_capacity(model.n_feet());
        let mut ik_converged = true;
        for foot in 0..model.n_feet() {
            let base_z = if contacts.contains(foot) {
                let (_, frac) = self.foot_phase(foot, t);
                let w = self.preload_progress(frac, t);
                measured.translation.z + (self.stance_height - measured.translation.z) * w
            } else {
                measured.translation.z
            };
            let base = Isometry3::from_parts(
                Translation3::new(measured.translation.x, measured.translation.y, base_z),
                heading,
            );
            self.seed.set_base_pose(&base);
            let target = self.desired_foot_position(foot, t);
            let result = leg_inverse_kinematics(model, &mut self.seed, foot, &target);
            ik_converged &= result.converged;
            foot_targets.push(target);
        }

        let qi = model.actuated_position_indices();
        let q_des = DVector::from_iterator(qi.len(), qi.iter().map(|&i| self.seed.q[i]));
        // differencing across a stance handoff would read the target jump
        // between the two leg roles as a huge desired rate for one tick
        // and rail every joint through the damping gain, so desired rates
        // are suppressed on the tick where the contact schedule flips
        let qd_des = match self.prev.take() {
            Some((prev_t, prev_q, prev_feet))
                if t > prev_t && prev_feet == contacts.feet() =>
            {
                (&q_des - &prev_q) / (t - prev_t)
            }
            _ => DVector::zeros(q_des.len()),
        };
        self.prev = Some((t, q_des.clone(), contacts.feet().to_vec()));

        NominalCommand { contacts, q_des, qd_des, foot_targets, ik_converged }
    }
}
