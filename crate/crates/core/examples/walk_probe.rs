//! Scratch probe: trace a walking scenario tick by tick.

use nalgebra::{DVector, Isometry3, Translation3, UnitQuaternion};
use safegait_core::filter::SafetyFilter;
use safegait_core::gait::{nominal_torque, swing_clearance, TrotController};
use safegait_core::qp::QpStatus;
use safegait_core::sim::{contact_forces, step, Scenario};
use safegait_core::RobotModel;

fn main() {
    let model = RobotModel::reference_quadruped();
    let mut scenario = Scenario::walk();
    scenario.sim.duration = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(6.0);
    if let Some(kp) = std::env::args().nth(2).and_then(|s| s.parse::<f64>().ok()) {
        scenario.gains.kp = kp;
    }
    if let Some(kd) = std::env::args().nth(3).and_then(|s| s.parse::<f64>().ok()) {
        scenario.gains.kd = kd;
    }
    if let Some(period) = std::env::args().nth(5).and_then(|s| s.parse::<f64>().ok()) {
        scenario.schedule.gait_period = period;
        scenario.filter.gait_period = period;
    }
    if let Some(duty) = std::env::args().nth(6).and_then(|s| s.parse::<f64>().ok()) {
        scenario.schedule.duty = duty;
    }
    if let Some(h) = std::env::args().nth(7).and_then(|s| s.parse::<f64>().ok()) {
        scenario.schedule.step_height = h;
    }
    if let Some(vel) = std::env::args().nth(4).and_then(|s| s.parse::<f64>().ok()) {
        scenario.schedule.body_velocity_target = vel;
        scenario.schedule.step_length = vel * scenario.schedule.gait_period;
    }

    scenario.filter.gait_period = scenario.schedule.gait_period;
    scenario.filter.clearance = swing_clearance(&scenario.schedule, 0.02);

    let mut controller =
        TrotController::new(&model, scenario.schedule.clone(), scenario.stance_height).unwrap();
    let weight = model.total_mass() * model.gravity.norm();
    let preload = weight / (model.n_feet() as f64 * scenario.sim.stiffness);
    let mut state = model.neutral_state();
    state.set_base_pose(&Isometry3::from_parts(
        Translation3::new(0.0, 0.0, scenario.stance_height - preload),
        UnitQuaternion::identity(),
    ));
    let cmd0 = controller.command(&model, &state);
    for (k, &q_idx) in model.actuated_position_indices().iter().enumerate() {
        state.q[q_idx] = cmd0.q_des[k];
    }
    let substeps = scenario.sim.substeps().unwrap();
    let zero_rate = DVector::zeros(model.n_va());
    let settle_steps = (scenario.settle_time / scenario.sim.dt_sim).round() as usize;
    for _ in 0..settle_steps {
        let u = nominal_torque(&model, &state, &cmd0.q_des, &zero_rate, &scenario.gains);
        state = step(&model, &state, &u, &scenario.terrain, &scenario.sim).unwrap();
    }
    state.t = 0.0;

    let mut filter = scenario
        .filter_enabled
        .then(|| SafetyFilter::new(scenario.filter.clone(), model.n_feet()).unwrap());
    let control_steps = (scenario.sim.duration / scenario.sim.control_dt).round() as usize;

    let mut worst_tilt: f64 = 0.0;
    let mut min_z = f64::INFINITY;
    'outer: for tick in 0..control_steps {
        let cmd = controller.command(&model, &state);
        let u_nominal = nominal_torque(&model, &state, &cmd.q_des, &cmd.qd_des, &scenario.gains);
        let lambda_true = contact_forces(&model, &state, &scenario.terrain, &scenario.sim);

        let decision = match filter.as_mut() {
            Some(f) => match f.step(&model, &state, &cmd.contacts, &u_nominal) {
                Ok(d) => Some(d),
                Err(e) => {
                    println!("tick {tick} t={:.3} FILTER ERR {e}", state.t);
                    break 'outer;
                }
            },
            None => None,
        };
        let (u_applied, status, interference) = match &decision {
            Some(d) => (&d.u_filtered, d.status, d.interference),
            None => (&u_nominal, QpStatus::Optimal, 0.0),
        };

        let pose = state.base_pose();
        let (roll, pitch, yaw) = pose.rotation.euler_angles();
        let tilt = (roll * roll + pitch * pitch).sqrt();
        worst_tilt = worst_tilt.max(tilt);
        min_z = min_z.min(pose.translation.z);
        if tick % 10 == 0 || status != QpStatus::Optimal || tilt > 0.3 {
            let fz: Vec<i64> = lambda_true.iter().map(|l| l.z.round() as i64).collect();
            let kin = model.kinematics(&state);
            let com = pose.translation.vector;
            let mut tau_z = 0.0;
            let mut ft = String::new();
            let mut perr = String::new();
            for f in 0..4 {
                let p = kin.foot_position(f);
                let r = p - com;
                tau_z += r.x * lambda_true[f].y - r.y * lambda_true[f].x;
                ft.push_str(&format!(
                    " ({:+5.1},{:+5.1})",
                    lambda_true[f].x, lambda_true[f].y
                ));
                let e = cmd.foot_targets[f] - p;
                perr.push_str(&format!(" {:4.0}", e.norm() * 1e3));
            }
            println!(
                "{tick:4} t={:.3} st={status:?} intf={interference:6.2} z={:.3} rpy=({:+.3},{:+.3},{:+.3}) Fz={fz:?} c={:?} ik={} tauz={tau_z:+6.2} ft={ft} perr(mm)={perr}",
                state.t, pose.translation.z, roll, pitch, yaw, cmd.contacts.feet(), cmd.ik_converged
            );
        }
        let detail_window = std::env::var("PROBE_DETAIL").is_ok();
        if detail_window && state.t >= 0.396 && state.t <= 0.436 {
            let kin = model.kinematics(&state);
            let mut zs = String::new();
            for f in 0..4 {
                let p = kin.foot_position(f);
                let e = cmd.foot_targets[f] - p;
                zs.push_str(&format!(
                    " f{f}[za={:+5.1} zt={:+5.1} Fz={:4.0} ex={:+5.1} ey={:+5.1}]",
                    p.z * 1e3,
                    cmd.foot_targets[f].z * 1e3,
                    lambda_true[f].z,
                    e.x * 1e3,
                    e.y * 1e3
                ));
            }
            let du = (u_applied - &u_nominal).norm();
            println!(
                "      detail t={:.3} du={du:6.2} un={:5.1} uf={:5.1}{zs}",
                state.t,
                u_nominal.norm(),
                u_applied.norm()
            );
        }
        for _ in 0..substeps {
            match step(&model, &state, u_applied, &scenario.terrain, &scenario.sim) {
                Ok(s) => state = s,
                Err(e) => {
                    println!("tick {tick} t={:.3} STEP ERR {e}", state.t);
                    break 'outer;
                }
            }
        }
    }
    println!(
        "DONE t={:.3} min_z={min_z:.3} worst_tilt={worst_tilt:.3}",
        state.t
    );
}
