//! Torque-level safety filter.
//!
//! Each control step solves a small QP over the stacked unknowns
//! X = (v̇, u, λ): stay as close as possible to the nominal actuated torque
//! while respecting the whole-body dynamics, the no-slip condition at the
//! stance feet, a friction pyramid on every contact force, the joint torque
//! box, and an exponential barrier that keeps each swing foot above a
//! phase-indexed clearance profile. Working at the torque level keeps the
//! dynamics as equality rows, so no mass-matrix inverse ever appears.
//!
//! When the nominal command already satisfies every constraint strictly the
//! QP's optimum is the nominal itself and the filter hands it back unchanged.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ContactSet, Kinematics, RobotModel, RobotState};
use crate::qp::{self, QpError, QpProblem, QpSettings, QpStatus, WarmStart};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("invalid filter config: {0}")]
    Config(String),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Desired clearance height as a function of local swing phase s ∈ [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClearanceProfile {
    /// Constant height.
    Flat { height: f64 },
    /// Quartic arch 16·peak·s²(1−s)²: zero at both ends, peak at s = 1/2.
    Bump { peak: f64 },
    /// Sinusoidal arch peak·sin²(πs) + offset. Same vertical family as the
    /// trot's swing profile, so a clearance floor can shadow a planned arc
    /// at constant distance and the barrier terms cancel the arc's own
    /// descent instead of fighting it.
    Arch { peak: f64, offset: f64 },
    /// Σ coeffs[k]·s^k.
    Polynomial { coeffs: Vec<f64> },
}

impl ClearanceProfile {
    /// (z, dz/ds, d²z/ds²) at local phase s.
    pub fn evaluate(&self, s: f64) -> (f64, f64, f64) {
        match self {
            ClearanceProfile::Flat { height } => (*height, 0.0, 0.0),
            ClearanceProfile::Bump { peak } => {
                let a = s * (1.0 - s);
                let z = 16.0 * peak * a * a;
                let dz = 32.0 * peak * a * (1.0 - 2.0 * s);
                let d2 = 1.0 - 2.0 * s;
                let ddz = 32.0 * peak * (d2 * d2 - 2.0 * a);
                (z, dz, ddz)
            }
            ClearanceProfile::Arch { peak, offset } => {
                let z = peak * (PI * s).sin().powi(2) + offset;
                let dz = peak * PI * (2.0 * PI * s).sin();
                let ddz = 2.0 * peak * PI * PI * (2.0 * PI * s).cos();
                (z, dz, ddz)
            }
            ClearanceProfile::Polynomial { coeffs } => polynomial_eval(coeffs, s),
        }
    }
}

/// Value and first two derivatives of Σ c_k s^k.
fn polynomial_eval(coeffs: &[f64], s: f64) -> (f64, f64, f64) {
    let mut z = 0.0;
    let mut dz = 0.0;
    let mut ddz = 0.0;
    for &c in coeffs.iter().rev() {
        ddz = ddz * s + 2.0 * dz;
        dz = dz * s + z;
        z = z * s + c;
    }
    (z, dz, ddz)
}

/// One foot's clearance shape composed with its swing window.
///
/// The profile spans [window.0, window.1) in global gait phase, remapped
/// affinely to s ∈ [0, 1]; outside the window the desired height is ground
/// level, so stance feet see a zero barrier offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootClearance {
    pub profile: ClearanceProfile,
    pub window: (f64, f64),
}

impl FootClearance {
    /// Zero profile over the whole period.
    pub fn flat() -> Self {
        FootClearance { profile: ClearanceProfile::Flat { height: 0.0 }, window: (0.0, 1.0) }
    }

    /// (z, dz/dφ, d²z/dφ²) at global phase φ. The affine remap contributes
    /// 1/width per derivative order.
    pub fn evaluate(&self, phi: f64) -> (f64, f64, f64) {
        let (a, b) = self.window;
        if phi < a || phi >= b {
            return (0.0, 0.0, 0.0);
        }
        let w = b - a;
        let (z, dz, ddz) = self.profile.evaluate((phi - a) / w);
        (z, dz / w, ddz / (w * w))
    }
}

/// Gait phase and its rates. The phase ramps linearly and wraps, so
/// φ̇ = 1/period and φ̈ = 0 identically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState {
    pub phi: f64,
    pub phi_dot: f64,
    pub phi_ddot: f64,
}

/// φ = (t mod period)/period ∈ [0, 1).
pub fn phase(t: f64, gait_period: f64) -> PhaseState {
    let mut phi = t.rem_euclid(gait_period) / gait_period;
    // roundoff just below a wrap can land exactly on 1
    if phi >= 1.0 {
        phi = 0.0;
    }
    PhaseState { phi, phi_dot: 1.0 / gait_period, phi_ddot: 0.0 }
}

#[derive(Debug, Clone)]
pub struct FilterConfig {
    /// Friction coefficient used by the pyramid rows.
    pub mu: f64,
    /// Barrier gains, 1/s.
    pub alpha1: f64,
    pub alpha2: f64,
    /// Gait period, s.
    pub gait_period: f64,
    /// Per-foot clearance, indexed like RobotModel::feet().
    pub clearance: Vec<FootClearance>,
    pub cbf_enabled: bool,
    pub friction_enabled: bool,
    /// Normal-force floor, N. Strict positivity is not expressible in a QP,
    /// and a small reserve hedges against liftoff.
    pub lambda_z_min: f64,
    pub qp: QpSettings,
}

impl FilterConfig {
    pub fn new(n_feet: usize) -> Self {
        FilterConfig {
            mu: 0.8,
            alpha1: 20.0,
            alpha2: 20.0,
            gait_period: 0.6,
            clearance: vec![FootClearance::flat(); n_feet],
            cbf_enabled: true,
            friction_enabled: true,
            lambda_z_min: 1.0,
            qp: QpSettings::default(),
        }
    }

    pub fn validate(&self, n_feet: usize) -> Result<(), FilterError> {
        let positive = [
            (self.mu, "mu"),
            (self.alpha1, "alpha1"),
            (self.alpha2, "alpha2"),
            (self.gait_period, "gait_period"),
        ];
        for (value, name) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(FilterError::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.lambda_z_min.is_finite() && self.lambda_z_min >= 0.0) {
            return Err(FilterError::Config(format!(
                "lambda_z_min must be nonnegative, got {}",
                self.lambda_z_min
            )));
        }
        if self.clearance.len() != n_feet {
            return Err(FilterError::Config(format!(
                "{} clearance profiles for {} feet",
                self.clearance.len(),
                n_feet
            )));
        }
        for (foot, fc) in self.clearance.iter().enumerate() {
            let (a, b) = fc.window;
            if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b && b <= 1.0) {
                return Err(FilterError::Config(format!(
                    "foot {foot}: window ({a}, {b}) is not inside [0, 1]"
                )));
            }
            for k in 0..=100 {
                let (z, dz, ddz) = fc.evaluate(k as f64 / 100.0);
                if !(z.is_finite() && dz.is_finite() && ddz.is_finite()) {
                    return Err(FilterError::Config(format!(
                        "foot {foot}: clearance profile is not finite at phase {}",
                        k as f64 / 100.0
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Clearance margin h = foot height − desired height, m. h ≥ 0 is safe.
pub fn barrier_value(
    model: &RobotModel,
    state: &RobotState,
    foot: usize,
    config: &FilterConfig,
    phi: f64,
) -> f64 {
    let kin = model.kinematics(state);
    let (z, _, _) = config.clearance[foot].evaluate(phi);
    kin.foot_position(foot).z - z
}

/// Barrier row for a swing foot, over X = (v̇, u, λ).
///
/// h = p_z − z(φ) has relative degree two in torque, so the row enforces
/// ḣ_e + α₂·h_e ≥ 0 with h_e = ḣ + α₁·h: the v̇-dependent part −J_z·v̇ goes
/// on the left, everything measurable at the current state on the right.
///
/// Panics if the foot is in stance; barrier rows only make sense in swing.
pub fn ecbf_row(
    model: &RobotModel,
    state: &RobotState,
    contacts: &ContactSet,
    foot: usize,
    config: &FilterConfig,
    ph: &PhaseState,
) -> (DVector<f64>, f64) {
    assert!(!contacts.contains(foot), "barrier row requested for stance foot {foot}");
    let kin = model.kinematics(state);
    ecbf_row_from(&kin, model, contacts, foot, config, ph)
}

fn ecbf_row_from(
    kin: &Kinematics<'_>,
    model: &RobotModel,
    contacts: &ContactSet,
    foot: usize,
    config: &FilterConfig,
    ph: &PhaseState,
) -> (DVector<f64>, f64) {
    let n_v = model.n_v();
    let n = n_v + model.n_va() + 3 * contacts.len();
    let (z, dz, ddz) = config.clearance[foot].evaluate(ph.phi);

    let h = kin.foot_position(foot).z - z;
    let h_dot = kin.foot_velocity(foot).z - dz * ph.phi_dot;
    let h_e = h_dot + config.alpha1 * h;

    let jac = kin.foot_jacobian(foot);
    let mut row = DVector::zeros(n);
    for col in 0..n_v {
        row[col] = -jac[(2, col)];
    }
    let rhs = config.alpha2 * h_e + config.alpha1 * h_dot + kin.foot_jacobian_dot_v(foot).z
        - ddz * ph.phi_dot * ph.phi_dot;
    (row, rhs)
}

/// Friction pyramid rows over the stacked contact forces.
///
/// Square-pyramid inner approximation of the cone: with the effective
/// coefficient μ̃ = μ/√2 the pyramid's corners stay inside the true cone.
/// Five rows per stance foot: a normal-force floor, then ±x and ±y
/// tangential bounds.
pub fn friction_rows(
    contacts: &ContactSet,
    mu: f64,
    lambda_z_min: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let n_c = contacts.len();
    let mu_eff = mu / f64::sqrt(2.0);
    let mut g = DMatrix::zeros(5 * n_c, 3 * n_c);
    let mut ub = DVector::zeros(5 * n_c);
    for i in 0..n_c {
        let r = 5 * i;
        let c = 3 * i;
        g[(r, c + 2)] = -1.0;
        ub[r] = -lambda_z_min;
        g[(r + 1, c)] = 1.0;
        g[(r + 1, c + 2)] = -mu_eff;
        g[(r + 2, c)] = -1.0;
        g[(r + 2, c + 2)] = -mu_eff;
        g[(r + 3, c + 1)] = 1.0;
        g[(r + 3, c + 2)] = -mu_eff;
        g[(r + 4, c + 1)] = -1.0;
        g[(r + 4, c + 2)] = -mu_eff;
    }
    (g, ub)
}

/// Build the filter QP at one control instant.
///
/// Decision vector X = (v̇, u, λ), objective ½‖u − u_nominal‖². Equalities:
/// M v̇ − B u − J_cᵀ λ = −H and J_c v̇ = −J̇_c v. Inequalities: friction
/// pyramid, one barrier row per swing foot when enabled, torque box.
pub fn assemble(
    model: &RobotModel,
    state: &RobotState,
    contacts: &ContactSet,
    u_nominal: &DVector<f64>,
    config: &FilterConfig,
    ph: &PhaseState,
) -> QpProblem {
    let n_v = model.n_v();
    let n_va = model.n_va();
    let n_c = contacts.len();
    let n = n_v + n_va + 3 * n_c;

    let kin = model.kinematics(state);
    let mass = model.mass_matrix(state);
    let bias = model.nonlinear_effects(state);
    let selection = model.selection_matrix();

    let mut p = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    for k in 0..n_va {
        p[(n_v + k, n_v + k)] = 1.0;
        c[n_v + k] = -u_nominal[k];
    }

    let m_eq = n_v + 3 * n_c;
    let mut a_eq = DMatrix::zeros(m_eq, n);
    let mut b_eq = DVector::zeros(m_eq);
    a_eq.view_mut((0, 0), (n_v, n_v)).copy_from(&mass);
    a_eq.view_mut((0, n_v), (n_v, n_va)).copy_from(&(-&selection));
    b_eq.rows_mut(0, n_v).copy_from(&(-&bias));
    if n_c > 0 {
        let jc = kin.contact_jacobian(contacts);
        let jc_dot_v = kin.contact_jacobian_dot_v(contacts);
        a_eq.view_mut((0, n_v + n_va), (n_v, 3 * n_c)).copy_from(&(-jc.transpose()));
        a_eq.view_mut((n_v, 0), (3 * n_c, n_v)).copy_from(&jc);
        b_eq.rows_mut(n_v, 3 * n_c).copy_from(&(-&jc_dot_v));
    }

    let mut g_rows: Vec<DVector<f64>> = Vec::new();
    let mut ub: Vec<f64> = Vec::new();
    if config.friction_enabled && n_c > 0 {
        let (gf, uf) = friction_rows(contacts, config.mu, config.lambda_z_min);
        for r in 0..gf.nrows() {
            let mut row = DVector::zeros(n);
            for j in 0..3 * n_c {
                row[n_v + n_va + j] = gf[(r, j)];
            }
            g_rows.push(row);
            ub.push(uf[r]);
        }
    }
    if config.cbf_enabled {
        for foot in 0..model.n_feet() {
            if contacts.contains(foot) {
                continue;
            }
            let (row, rhs) = ecbf_row_from(&kin, model, contacts, foot, config, ph);
            g_rows.push(row);
            ub.push(rhs);
        }
    }
    let tau = model.torque_limits();
    for k in 0..n_va {
        let mut upper = DVector::zeros(n);
        upper[n_v + k] = 1.0;
        g_rows.push(upper);
        ub.push(tau[k]);
        let mut lower = DVector::zeros(n);
        lower[n_v + k] = -1.0;
        g_rows.push(lower);
        ub.push(tau[k]);
    }

    let mut g = DMatrix::zeros(g_rows.len(), n);
    for (r, row) in g_rows.iter().enumerate() {
        g.row_mut(r).copy_from_slice(row.as_slice());
    }
    QpProblem { p, c, a_eq, b_eq, g, h_ub: DVector::from_vec(ub) }
}

/// One filter step's outcome.
#[derive(Debug, Clone)]
pub struct FilterDecision {
    /// Torque actually commanded, N·m.
    pub u_filtered: DVector<f64>,
    /// Generalized accelerations certified consistent with that torque.
    pub v_dot: DVector<f64>,
    /// Stacked stance-foot forces, N, in contact-set order.
    pub lambda: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    /// Clearance margin per foot at this instant, m.
    pub h_values: Vec<f64>,
    /// ‖u_filtered − u_nominal‖₂, N·m.
    pub interference: f64,
}

/// Stateful step driver: keeps the warm start between consecutive solves and
/// the last certified torque for the infeasibility fallback.
pub struct SafetyFilter {
    pub config: FilterConfig,
    warm: Option<WarmStart>,
    last_good_u: Option<DVector<f64>>,
}

impl SafetyFilter {
    pub fn new(config: FilterConfig, n_feet: usize) -> Result<Self, FilterError> {
        config.validate(n_feet)?;
        Ok(SafetyFilter { config, warm: None, last_good_u: None })
    }

    /// Feed in an updated friction estimate.
    pub fn set_mu(&mut self, mu: f64) {
        self.config.mu = mu;
    }

    /// Filter one nominal torque command. Non-optimal solves fall back to
    /// the last certified torque (or the nominal on the very first step) and
    /// are flagged through `status`.
    pub fn step(
        &mut self,
        model: &RobotModel,
        state: &RobotState,
        contacts: &ContactSet,
        u_nominal: &DVector<f64>,
    ) -> Result<FilterDecision, FilterError> {
        let ph = phase(state.t, self.config.gait_period);
        let problem = assemble(model, state, contacts, u_nominal, &self.config, &ph);
        let m = problem.b_eq.len() + problem.h_ub.len();
        // contact transitions change the QP shape; stale warm starts are dropped
        let warm = self
            .warm
            .take()
            .filter(|w| w.x.len() == problem.n() && w.y.len() == m);
        let solution = qp::solve(&problem, &self.config.qp, warm.as_ref())?;

        let kin = model.kinematics(state);
        let h_values: Vec<f64> = (0..model.n_feet())
            .map(|f| kin.foot_position(f).z - self.config.clearance[f].evaluate(ph.phi).0)
            .collect();

        let n_v = model.n_v();
        let n_va = model.n_va();
        let n_c = contacts.len();
        match solution.status {
            QpStatus::Optimal => {
                let u = solution.x.rows(n_v, n_va).into_owned();
                let decision = FilterDecision {
                    u_filtered: u.clone(),
                    v_dot: solution.x.rows(0, n_v).into_owned(),
                    lambda: solution.x.rows(n_v + n_va, 3 * n_c).into_owned(),
                    status: solution.status,
                    iterations: solution.iterations,
                    h_values,
                    interference: (&u - u_nominal).norm(),
                };
                self.warm = Some(WarmStart::from_solution(&solution));
                self.last_good_u = Some(u);
                Ok(decision)
            }
            status => {
                let u = self.last_good_u.clone().unwrap_or_else(|| u_nominal.clone());
                self.warm = None;
                Ok(FilterDecision {
                    interference: (&u - u_nominal).norm(),
                    u_filtered: u,
                    v_dot: DVector::zeros(n_v),
                    lambda: DVector::zeros(3 * n_c),
                    status,
                    iterations: solution.iterations,
                    h_values,
                })
            }
        }
    }
}

/// First-order lag, used to smooth the online friction estimate before it
/// reaches the filter.
#[derive(Debug, Clone)]
pub struct ExponentialSmoother {
    tau: f64,
    state: Option<f64>,
}

impl ExponentialSmoother {
    /// `tau` is the time constant, s.
    pub fn new(tau: f64) -> Self {
        ExponentialSmoother { tau, state: None }
    }

    /// Fold in a sample observed `dt` seconds after the previous one. The
    /// first sample passes through unchanged.
    pub fn update(&mut self, sample: f64, dt: f64) -> f64 {
        let next = match self.state {
            None => sample,
            Some(prev) => prev + (1.0 - (-dt / self.tau).exp()) * (sample - prev),
        };
        self.state = Some(next);
        next
    }

    pub fn value(&self) -> Option<f64> {
        self.state
    }
}
