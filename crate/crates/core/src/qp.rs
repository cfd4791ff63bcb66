//! Dense convex QP solver: operator splitting with over-relaxation, KKT
//! polishing on the detected active set, and infeasibility certificates.
//!
//! Problems are stated as
//!
//! ```text
//! minimize   ½ xᵀP x + cᵀx
//! subject to A_eq x = b_eq,   G x ≤ h_ub
//! ```
//!
//! Internally both constraint blocks stack into l ≤ Ax ≤ u with l = u on
//! equality rows. A solve either meets the KKT conditions to the requested
//! tolerances (status `Optimal`) or says why not; infeasibility is a
//! first-class outcome, not an error.

use std::io;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("P is not symmetric (max asymmetry {0:.3e})")]
    Asymmetric(f64),
    #[error("P is not positive semidefinite")]
    NotPsd,
    #[error("non-finite entry in problem data")]
    NonFinite,
    #[error("warm start dimensions do not match the problem")]
    WarmStartDimensions,
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    /// Quadratic cost, symmetric PSD, n×n.
    pub p: DMatrix<f64>,
    /// Linear cost, length n.
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h_ub: DVector<f64>,
}

impl QpProblem {
    /// Problem without constraints (blocks can be filled in afterwards).
    pub fn unconstrained(p: DMatrix<f64>, c: DVector<f64>) -> Self {
        let n = c.len();
        Self {
            p,
            c,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            g: DMatrix::zeros(0, n),
            h_ub: DVector::zeros(0),
        }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.c.dot(x)
    }

    fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        if self.p.nrows() != n || self.p.ncols() != n {
            return Err(QpError::Dimensions(format!(
                "P is {}×{}, expected {n}×{n}",
                self.p.nrows(),
                self.p.ncols()
            )));
        }
        if self.a_eq.ncols() != n || self.g.ncols() != n {
            return Err(QpError::Dimensions(format!(
                "constraint matrices have {} and {} columns, expected {n}",
                self.a_eq.ncols(),
                self.g.ncols()
            )));
        }
        if self.a_eq.nrows() != self.b_eq.len() || self.g.nrows() != self.h_ub.len() {
            return Err(QpError::Dimensions(format!(
                "{} equality rows vs {} bounds, {} inequality rows vs {} bounds",
                self.a_eq.nrows(),
                self.b_eq.len(),
                self.g.nrows(),
                self.h_ub.len()
            )));
        }
        let finite = |m: &[f64]| m.iter().all(|v| v.is_finite());
        if !(finite(self.p.as_slice())
            && finite(self.c.as_slice())
            && finite(self.a_eq.as_slice())
            && finite(self.b_eq.as_slice())
            && finite(self.g.as_slice())
            && finite(self.h_ub.as_slice()))
        {
            return Err(QpError::NonFinite);
        }
        let asym = (&self.p - self.p.transpose()).amax();
        if asym > 1e-9 {
            return Err(QpError::Asymmetric(asym));
        }
        let mut shifted = self.p.clone();
        for i in 0..n {
            shifted[(i, i)] += 1e-10;
        }
        if shifted.cholesky().is_none() {
            return Err(QpError::NotPsd);
        }
        Ok(())
    }

    /// Write the problem in a plain text matrix format for offline
    /// inspection: one `name` line per block, then one line per row.
    pub fn write_text(&self, w: &mut impl io::Write) -> io::Result<()> {
        writeln!(
            w,
            "qp n={} m_e={} m_i={}",
            self.n(),
            self.b_eq.len(),
            self.h_ub.len()
        )?;
        let write_matrix = |w: &mut dyn io::Write, name: &str, m: &DMatrix<f64>| -> io::Result<()> {
            writeln!(w, "{name}")?;
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
                writeln!(w, "{}", row.join(" "))?;
            }
            Ok(())
        };
        let write_vector = |w: &mut dyn io::Write, name: &str, v: &DVector<f64>| -> io::Result<()> {
            writeln!(w, "{name}")?;
            let row: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
            writeln!(w, "{}", row.join(" "))
        };
        write_matrix(w, "P", &self.p)?;
        write_vector(w, "c", &self.c)?;
        write_matrix(w, "A_eq", &self.a_eq)?;
        write_vector(w, "b_eq", &self.b_eq)?;
        write_matrix(w, "G", &self.g)?;
        write_vector(w, "h_ub", &self.h_ub)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of the equality block, free sign.
    pub duals_eq: DVector<f64>,
    /// Multipliers of the inequality block, nonnegative at optima.
    pub duals_ineq: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    /// max(‖A_eq x − b_eq‖∞, max(Gx − h_ub)₊)
    pub primal_residual: f64,
    /// ‖Px + c + A_eqᵀν + Gᵀμ‖∞
    pub dual_residual: f64,
    /// Whether the returned point came from the KKT polish step.
    pub polished: bool,
}

/// Primal and dual iterates carried from one solve to the next.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl WarmStart {
    pub fn from_solution(solution: &QpSolution) -> Self {
        let me = solution.duals_eq.len();
        let mi = solution.duals_ineq.len();
        let mut y = DVector::zeros(me + mi);
        y.rows_mut(0, me).copy_from(&solution.duals_eq);
        y.rows_mut(me, mi).copy_from(&solution.duals_ineq);
        Self { x: solution.x.clone(), y }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    /// Feasibility tolerance on both constraint blocks.
    pub tol_feas: f64,
    /// Tolerance on stationarity, dual signs and complementary slackness.
    pub tol_opt: f64,
    pub max_iter: usize,
    /// ADMM penalty on inequality rows.
    pub rho: f64,
    /// Penalty multiplier on equality rows (they tolerate no slack).
    pub eq_rho_scale: f64,
    pub sigma: f64,
    /// Over-relaxation factor.
    pub alpha: f64,
    /// Infeasibility certificate tolerance.
    pub tol_infeasible: f64,
    /// Residuals and certificates are evaluated every this many iterations.
    pub check_interval: usize,
    pub polish: bool,
    /// Regularization of the polish KKT system.
    pub polish_reg: f64,
    /// A speculative polish runs every this many iterations even before the
    /// splitting residuals converge: the polish is accepted only on a full
    /// KKT check, and the active set often settles long before the iterates.
    pub polish_interval: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol_feas: 1e-6,
            tol_opt: 1e-6,
            max_iter: 4000,
            rho: 0.1,
            eq_rho_scale: 1e3,
            sigma: 1e-6,
            alpha: 1.6,
            tol_infeasible: 1e-5,
            check_interval: 25,
            polish: true,
            polish_reg: 1e-9,
            polish_interval: 100,
        }
    }
}

struct Stacked {
    a: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    rho: DVector<f64>,
    m_eq: usize,
}

fn stack(problem: &QpProblem, settings: &QpSettings) -> Stacked {
    let n = problem.n();
    let me = problem.b_eq.len();
    let mi = problem.h_ub.len();
    let m = me + mi;
    let mut a = DMatrix::zeros(m, n);
    a.view_mut((0, 0), (me, n)).copy_from(&problem.a_eq);
    a.view_mut((me, 0), (mi, n)).copy_from(&problem.g);
    let mut l = DVector::from_element(m, f64::NEG_INFINITY);
    let mut u = DVector::zeros(m);
    l.rows_mut(0, me).copy_from(&problem.b_eq);
    u.rows_mut(0, me).copy_from(&problem.b_eq);
    u.rows_mut(me, mi).copy_from(&problem.h_ub);
    let mut rho = DVector::from_element(m, settings.rho);
    for i in 0..me {
        rho[i] *= settings.eq_rho_scale;
    }
    Stacked { a, l, u, rho, m_eq: me }
}

fn project(v: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| v[i].clamp(l[i], u[i]))
}

/// KKT residuals of a candidate point against the problem's own blocks.
struct KktResiduals {
    eq: f64,
    ineq: f64,
    stationarity: f64,
    dual_sign: f64,
    complementarity: f64,
}

impl KktResiduals {
    fn of(
        problem: &QpProblem,
        x: &DVector<f64>,
        duals_eq: &DVector<f64>,
        duals_ineq: &DVector<f64>,
    ) -> Self {
        let eq = if problem.b_eq.is_empty() {
            0.0
        } else {
            (&problem.a_eq * x - &problem.b_eq).amax()
        };
        let (ineq, complementarity) = if problem.h_ub.is_empty() {
            (0.0, 0.0)
        } else {
            let slack = &problem.g * x - &problem.h_ub;
            let viol = slack.iter().fold(0.0f64, |acc, &s| acc.max(s));
            (viol, duals_ineq.dot(&slack).abs())
        };
        let mut grad = &problem.p * x + &problem.c;
        if !problem.b_eq.is_empty() {
            grad += problem.a_eq.transpose() * duals_eq;
        }
        if !problem.h_ub.is_empty() {
            grad += problem.g.transpose() * duals_ineq;
        }
        let dual_sign = duals_ineq.iter().fold(0.0f64, |acc, &mu| acc.max(-mu));
        Self {
            eq,
            ineq,
            stationarity: grad.amax(),
            dual_sign,
            complementarity,
        }
    }

    fn within(&self, tol_feas: f64, tol_opt: f64) -> bool {
        self.eq <= tol_feas
            && self.ineq <= tol_feas
            && self.stationarity <= tol_opt
            && self.dual_sign <= tol_opt
            && self.complementarity <= tol_opt
    }

    fn primal(&self) -> f64 {
        self.eq.max(self.ineq)
    }
}

/// Solve the KKT system restricted to the given constraint rows, with
/// slight regularization and two rounds of iterative refinement.
fn solve_restricted_kkt(
    problem: &QpProblem,
    stacked: &Stacked,
    rows: &[usize],
    reg: f64,
) -> Option<DVector<f64>> {
    let n = problem.n();
    let na = rows.len();
    let mut kkt = DMatrix::zeros(n + na, n + na);
    kkt.view_mut((0, 0), (n, n)).copy_from(&problem.p);
    for (k, &row) in rows.iter().enumerate() {
        for j in 0..n {
            kkt[(n + k, j)] = stacked.a[(row, j)];
            kkt[(j, n + k)] = stacked.a[(row, j)];
        }
    }
    let mut rhs = DVector::zeros(n + na);
    rhs.rows_mut(0, n).copy_from(&(-&problem.c));
    for (k, &row) in rows.iter().enumerate() {
        rhs[n + k] = stacked.u[row];
    }

    let unregularized = kkt.clone();
    for k in 0..na {
        kkt[(n + k, n + k)] = -reg;
    }
    let lu = kkt.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..2 {
        let residual = &rhs - &unregularized * &sol;
        let correction = lu.solve(&residual)?;
        sol += correction;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(sol)
}

/// Exact solve on a guessed active set: start from the rows whose splitting
/// duals are positive, then drop the most negative polished multiplier
/// until the restricted optimum is dual-feasible. Returns (x, ν, μ).
fn polish(
    problem: &QpProblem,
    stacked: &Stacked,
    y: &DVector<f64>,
    reg: f64,
) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let n = problem.n();
    let me = stacked.m_eq;
    let mi = problem.h_ub.len();
    // roundoff leaves ~1e-18 duals on inactive rows; threshold on the dual
    // scale so they never over-determine the KKT system
    let threshold = 1e-10 * y.amax().max(1.0);
    let mut rows: Vec<usize> = (0..me).collect();
    rows.extend((0..mi).filter(|&i| y[me + i] > threshold).map(|i| me + i));

    loop {
        let sol = solve_restricted_kkt(problem, stacked, &rows, reg)?;
        let dual_scale = sol.rows(n, rows.len()).amax().max(1.0);
        let worst = rows
            .iter()
            .enumerate()
            .skip(me)
            .map(|(k, _)| (k, sol[n + k]))
            .filter(|&(_, mu)| mu < -1e-9 * dual_scale)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match worst {
            Some((k, _)) => {
                rows.remove(k);
            }
            None => {
                let x = sol.rows(0, n).into_owned();
                let duals_eq = sol.rows(n, me).into_owned();
                let mut duals_ineq = DVector::zeros(mi);
                for (k, &row) in rows.iter().enumerate().skip(me) {
                    duals_ineq[row - me] = sol[n + k];
                }
                return Some((x, duals_eq, duals_ineq));
            }
        }
    }
}

/// Try to turn the current iterates into an accepted optimal solution:
/// polish first, fall back to the raw iterates, and accept either only if
/// the full KKT conditions hold at the caller's tolerances.
fn accept(
    problem: &QpProblem,
    stacked: &Stacked,
    x: &DVector<f64>,
    y: &DVector<f64>,
    settings: &QpSettings,
    iterations: usize,
) -> Option<QpSolution> {
    let me = stacked.m_eq;
    let mi = problem.h_ub.len();
    if settings.polish {
        if let Some((px, pv, pm)) = polish(problem, stacked, y, settings.polish_reg) {
            let res = KktResiduals::of(problem, &px, &pv, &pm);
            if res.within(settings.tol_feas, settings.tol_opt) {
                return Some(QpSolution {
                    x: px,
                    duals_eq: pv,
                    duals_ineq: pm,
                    status: QpStatus::Optimal,
                    iterations,
                    primal_residual: res.primal(),
                    dual_residual: res.stationarity,
                    polished: true,
                });
            }
        }
    }
    let duals_eq = y.rows(0, me).into_owned();
    let duals_ineq = y.rows(me, mi).into_owned();
    let res = KktResiduals::of(problem, x, &duals_eq, &duals_ineq);
    if res.within(settings.tol_feas, settings.tol_opt) {
        return Some(QpSolution {
            x: x.clone(),
            duals_eq,
            duals_ineq,
            status: QpStatus::Optimal,
            iterations,
            primal_residual: res.primal(),
            dual_residual: res.stationarity,
            polished: false,
        });
    }
    None
}

fn primal_infeasibility_certificate(stacked: &Stacked, dy: &DVector<f64>, tol: f64) -> bool {
    if dy.is_empty() {
        return false;
    }
    let norm = dy.amax();
    if norm <= 1e-12 {
        return false;
    }
    if (stacked.a.transpose() * dy).amax() > tol * norm {
        return false;
    }
    let mut support = 0.0;
    for i in 0..dy.len() {
        let pos = dy[i].max(0.0);
        let neg = dy[i].min(0.0);
        support += stacked.u[i] * pos;
        if neg < 0.0 {
            if stacked.l[i].is_finite() {
                support += stacked.l[i] * neg;
            } else if -neg > tol * norm {
                // a one-sided row cannot push from below
                return false;
            }
        }
    }
    support <= -tol * norm
}

fn dual_infeasibility_certificate(
    problem: &QpProblem,
    stacked: &Stacked,
    dx: &DVector<f64>,
    tol: f64,
) -> bool {
    let norm = dx.amax();
    if norm <= 1e-12 {
        return false;
    }
    if (&problem.p * dx).amax() > tol * norm {
        return false;
    }
    if problem.c.dot(dx) > -tol * norm {
        return false;
    }
    let adx = &stacked.a * dx;
    for i in 0..adx.len() {
        let within = if i < stacked.m_eq {
            adx[i].abs() <= tol * norm
        } else {
            adx[i] <= tol * norm
        };
        if !within {
            return false;
        }
    }
    true
}

pub fn solve(
    problem: &QpProblem,
    settings: &QpSettings,
    warm: Option<&WarmStart>,
) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let n = problem.n();
    let stacked = stack(problem, settings);
    let m = stacked.a.nrows();

    let mut normal = problem.p.clone();
    for i in 0..n {
        normal[(i, i)] += settings.sigma;
    }
    if m > 0 {
        let mut a_scaled = stacked.a.clone();
        for i in 0..m {
            let r = stacked.rho[i];
            a_scaled.row_mut(i).scale_mut(r);
        }
        normal += stacked.a.transpose() * a_scaled;
    }
    let factor = normal
        .cholesky()
        .expect("P + σI + AᵀRA is positive definite for σ > 0");

    let (mut x, mut y) = match warm {
        Some(w) => {
            if w.x.len() != n || w.y.len() != m {
                return Err(QpError::WarmStartDimensions);
            }
            (w.x.clone(), w.y.clone())
        }
        None => (DVector::zeros(n), DVector::zeros(m)),
    };
    let mut z = project(&(&stacked.a * &x), &stacked.l, &stacked.u);

    // internal targets tighten when an accept attempt fails, so the loop
    // keeps refining instead of re-trying at the same accuracy
    let mut target_feas = settings.tol_feas;
    let mut target_opt = settings.tol_opt;

    let mut rp_checks: Vec<f64> = Vec::new();
    let mut last = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;

    for iter in 1..=settings.max_iter {
        iterations = iter;
        let mut rhs = &x * settings.sigma - &problem.c;
        if m > 0 {
            let weighted = DVector::from_fn(m, |i, _| stacked.rho[i] * z[i] - y[i]);
            rhs += stacked.a.transpose() * weighted;
        }
        let x_tilde = factor.solve(&rhs);
        let z_tilde = &stacked.a * &x_tilde;

        let x_next = &x_tilde * settings.alpha + &x * (1.0 - settings.alpha);
        let z_hat = &z_tilde * settings.alpha + &z * (1.0 - settings.alpha);
        let z_next = DVector::from_fn(m, |i, _| {
            (z_hat[i] + y[i] / stacked.rho[i]).clamp(stacked.l[i], stacked.u[i])
        });
        let y_next = DVector::from_fn(m, |i, _| y[i] + stacked.rho[i] * (z_hat[i] - z_next[i]));

        let dx = &x_next - &x;
        let dy = &y_next - &y;
        x = x_next;
        z = z_next;
        y = y_next;

        if iter % settings.check_interval == 0 || iter == settings.max_iter {
            let rp = if m == 0 { 0.0 } else { (&stacked.a * &x - &z).amax() };
            let rd = {
                let mut grad = &problem.p * &x + &problem.c;
                if m > 0 {
                    grad += stacked.a.transpose() * &y;
                }
                grad.amax()
            };
            last = (rp, rd);
            rp_checks.push(rp);

            let converged = rp <= target_feas && rd <= target_opt;
            let speculative = settings.polish
                && settings.polish_interval > 0
                && iter % settings.polish_interval == 0;
            if converged || speculative {
                if let Some(solution) = accept(problem, &stacked, &x, &y, settings, iter) {
                    return Ok(solution);
                }
                if converged {
                    target_feas *= 0.1;
                    target_opt *= 0.1;
                }
            }

            if primal_infeasibility_certificate(&stacked, &dy, settings.tol_infeasible)
                || dual_infeasibility_certificate(problem, &stacked, &dx, settings.tol_infeasible)
            {
                return Ok(infeasible_solution(&stacked, x, y, iter, last));
            }

            // stagnation: no meaningful primal progress over the trailing
            // 1000 iterations while still far from feasible
            let window = 1000 / settings.check_interval;
            if rp_checks.len() > window {
                let recent = rp_checks[rp_checks.len() - window..]
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                let before = rp_checks[..rp_checks.len() - window]
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                if recent > before * (1.0 - 1e-3) && recent > 100.0 * settings.tol_feas {
                    // a stalled feasible problem is still rescuable by the
                    // exact active-set solve; declare infeasible only when
                    // that also finds no KKT point
                    if let Some(solution) = accept(problem, &stacked, &x, &y, settings, iter) {
                        return Ok(solution);
                    }
                    return Ok(infeasible_solution(&stacked, x, y, iter, last));
                }
            }
        }
    }

    if let Some(solution) = accept(problem, &stacked, &x, &y, settings, iterations) {
        return Ok(solution);
    }
    let me = stacked.m_eq;
    let mi = problem.h_ub.len();
    Ok(QpSolution {
        x: x.clone(),
        duals_eq: y.rows(0, me).into_owned(),
        duals_ineq: y.rows(me, mi).into_owned(),
        status: QpStatus::MaxIterations,
        iterations,
        primal_residual: last.0,
        dual_residual: last.1,
        polished: false,
    })
}

fn infeasible_solution(
    stacked: &Stacked,
    x: DVector<f64>,
    y: DVector<f64>,
    iterations: usize,
    last: (f64, f64),
) -> QpSolution {
    let me = stacked.m_eq;
    let m = y.len();
    QpSolution {
        duals_eq: y.rows(0, me).into_owned(),
        duals_ineq: y.rows(me, m - me).into_owned(),
        x,
        status: QpStatus::Infeasible,
        iterations,
        primal_residual: last.0,
        dual_residual: last.1,
        polished: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let mut p = &b * b.transpose();
        for i in 0..n {
            p[(i, i)] += 0.1;
        }
        p
    }

    /// Random strictly convex QP with a known interior-feasible point.
    fn random_qp(seed: u64) -> QpProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=6);
        let mi = rng.gen_range(1..=8);
        let me = rng.gen_range(0..=2.min(n - 1));
        let p = spd(n, &mut rng);
        let c = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let a_eq = DMatrix::from_fn(me, n, |_, _| rng.gen_range(-1.0..1.0));
        let b_eq = &a_eq * &x0;
        let g = DMatrix::from_fn(mi, n, |_, _| rng.gen_range(-1.0..1.0));
        let h_ub = &g * &x0 + DVector::from_fn(mi, |_, _| rng.gen_range(0.01..1.0));
        QpProblem { p, c, a_eq, b_eq, g, h_ub }
    }

    /// Brute force over every subset of active inequality rows: solve the
    /// subset's KKT system, keep the best primal-feasible, dual-feasible
    /// candidate.
    fn enumeration_oracle(problem: &QpProblem) -> Option<DVector<f64>> {
        let n = problem.n();
        let me = problem.b_eq.len();
        let mi = problem.h_ub.len();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0u32..(1 << mi) {
            let active: Vec<usize> = (0..mi).filter(|i| mask & (1 << i) != 0).collect();
            let na = me + active.len();
            let mut kkt = DMatrix::zeros(n + na, n + na);
            kkt.view_mut((0, 0), (n, n)).copy_from(&problem.p);
            let mut rhs = DVector::zeros(n + na);
            rhs.rows_mut(0, n).copy_from(&(-&problem.c));
            for k in 0..me {
                for j in 0..n {
                    kkt[(n + k, j)] = problem.a_eq[(k, j)];
                    kkt[(j, n + k)] = problem.a_eq[(k, j)];
                }
                rhs[n + k] = problem.b_eq[k];
            }
            for (k, &row) in active.iter().enumerate() {
                for j in 0..n {
                    kkt[(n + me + k, j)] = problem.g[(row, j)];
                    kkt[(j, n + me + k)] = problem.g[(row, j)];
                }
                rhs[n + me + k] = problem.h_ub[row];
            }
            let Some(sol) = kkt.lu().solve(&rhs) else { continue };
            if sol.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let x = sol.rows(0, n).into_owned();
            let duals = sol.rows(n + me, active.len());
            if duals.iter().any(|&mu| mu < -1e-7) {
                continue;
            }
            let slack = &problem.g * &x - &problem.h_ub;
            if slack.iter().any(|&s| s > 1e-7) {
                continue;
            }
            if me > 0 && (&problem.a_eq * &x - &problem.b_eq).amax() > 1e-7 {
                continue;
            }
            let obj = problem.objective(&x);
            if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                best = Some((obj, x));
            }
        }
        best.map(|(_, x)| x)
    }

    #[test]
    fn single_bound_matches_hand_solution() {
        // min ½x² subject to x ≥ 1
        let problem = QpProblem {
            p: DMatrix::from_element(1, 1, 1.0),
            c: DVector::zeros(1),
            a_eq: DMatrix::zeros(0, 1),
            b_eq: DVector::zeros(0),
            g: DMatrix::from_element(1, 1, -1.0),
            h_ub: DVector::from_element(1, -1.0),
        };
        let sol = solve(&problem, &QpSettings::default(), None).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(sol.duals_ineq[0], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn unconstrained_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = spd(5, &mut rng);
        let c = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let expected = -p.clone().cholesky().unwrap().solve(&c);
        let sol = solve(
            &QpProblem::unconstrained(p, c),
            &QpSettings::default(),
            None,
        )
        .unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((&sol.x - &expected).amax() < 1e-8);
    }

    #[test]
    fn matches_active_set_enumeration_on_random_qps() {
        let settings = QpSettings::default();
        let mut solved = 0;
        for seed in 0..200u64 {
            let problem = random_qp(seed);
            let oracle = enumeration_oracle(&problem).expect("feasible by construction");
            let sol = solve(&problem, &settings, None).unwrap();
            assert_eq!(sol.status, QpStatus::Optimal, "seed {seed}");
            assert!(
                (&sol.x - &oracle).amax() < 1e-5,
                "seed {seed}: solver {:?} oracle {:?}",
                sol.x,
                oracle
            );
            solved += 1;
        }
        assert_eq!(solved, 200);
    }

    #[test]
    fn kkt_conditions_hold_at_reported_optima() {
        let settings = QpSettings::default();
        for seed in 200..260u64 {
            let problem = random_qp(seed);
            let sol = solve(&problem, &settings, None).unwrap();
            assert_eq!(sol.status, QpStatus::Optimal, "seed {seed}");
            let res = KktResiduals::of(&problem, &sol.x, &sol.duals_eq, &sol.duals_ineq);
            assert!(res.eq <= settings.tol_feas, "seed {seed} eq {}", res.eq);
            assert!(res.ineq <= settings.tol_feas, "seed {seed} ineq {}", res.ineq);
            assert!(
                res.stationarity <= settings.tol_opt,
                "seed {seed} stationarity {}",
                res.stationarity
            );
            assert!(res.dual_sign <= settings.tol_opt, "seed {seed}");
            assert!(res.complementarity <= settings.tol_opt, "seed {seed}");
        }
    }

    #[test]
    fn contradictory_bounds_report_infeasible() {
        // x ≥ 1 and x ≤ 0
        let problem = QpProblem {
            p: DMatrix::from_element(1, 1, 1.0),
            c: DVector::zeros(1),
            a_eq: DMatrix::zeros(0, 1),
            b_eq: DVector::zeros(0),
            g: DMatrix::from_vec(2, 1, vec![-1.0, 1.0]),
            h_ub: DVector::from_vec(vec![-1.0, 0.0]),
        };
        let sol = solve(&problem, &QpSettings::default(), None).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction_reports_infeasible() {
        // min x₀ with only x₀ ≤ 0: unbounded below
        let problem = QpProblem {
            p: DMatrix::zeros(2, 2),
            c: DVector::from_vec(vec![1.0, 0.0]),
            a_eq: DMatrix::zeros(0, 2),
            b_eq: DVector::zeros(0),
            g: DMatrix::from_vec(1, 2, vec![1.0, 0.0]),
            h_ub: DVector::zeros(1),
        };
        let sol = solve(&problem, &QpSettings::default(), None).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn identical_inputs_give_bitwise_identical_results() {
        let problem = random_qp(42);
        let settings = QpSettings::default();
        let a = solve(&problem, &settings, None).unwrap();
        let b = solve(&problem, &settings, None).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert!(a
            .x
            .iter()
            .zip(b.x.iter())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
        assert!(a
            .duals_ineq
            .iter()
            .zip(b.duals_ineq.iter())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn warm_starts_do_not_cost_iterations_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 8;
        let p = spd(n, &mut rng);
        let g = DMatrix::from_fn(10, n, |_, _| rng.gen_range(-1.0..1.0));
        let h0 = DVector::from_fn(10, |_, _| rng.gen_range(0.5..1.5));
        let settings = QpSettings::default();

        let mut cold_total = 0usize;
        let mut warm_total = 0usize;
        let mut warm: Option<WarmStart> = None;
        for step in 0..500 {
            let t = step as f64 * 0.01;
            let c = DVector::from_fn(n, |i, _| (t + i as f64).sin());
            let h = &h0 + DVector::from_element(10, 0.2 * (0.5 * t).cos());
            let problem = QpProblem {
                p: p.clone(),
                c,
                a_eq: DMatrix::zeros(0, n),
                b_eq: DVector::zeros(0),
                g: g.clone(),
                h_ub: h,
            };
            let cold = solve(&problem, &settings, None).unwrap();
            let warmed = solve(&problem, &settings, warm.as_ref()).unwrap();
            assert_eq!(cold.status, QpStatus::Optimal);
            assert_eq!(warmed.status, QpStatus::Optimal);
            cold_total += cold.iterations;
            warm_total += warmed.iterations;
            warm = Some(WarmStart::from_solution(&warmed));
        }
        assert!(
            warm_total <= cold_total,
            "warm {warm_total} vs cold {cold_total} iterations over 500 steps"
        );
    }

    #[test]
    fn warm_start_with_wrong_dimensions_is_rejected() {
        let problem = random_qp(1);
        let bad = WarmStart { x: DVector::zeros(problem.n() + 1), y: DVector::zeros(0) };
        let err = solve(&problem, &QpSettings::default(), Some(&bad)).unwrap_err();
        assert!(matches!(err, QpError::WarmStartDimensions));
    }

    #[test]
    fn invalid_cost_matrices_are_rejected() {
        let mut problem = random_qp(2);
        problem.p[(0, 1)] += 1e-6;
        assert!(matches!(
            solve(&problem, &QpSettings::default(), None).unwrap_err(),
            QpError::Asymmetric(_)
        ));

        let mut problem = random_qp(2);
        let n = problem.n();
        problem.p = DMatrix::identity(n, n);
        problem.p[(0, 0)] = -1.0;
        assert!(matches!(
            solve(&problem, &QpSettings::default(), None).unwrap_err(),
            QpError::NotPsd
        ));
    }

    #[test]
    fn text_dump_contains_every_block() {
        let problem = random_qp(5);
        let mut buffer = Vec::new();
        problem.write_text(&mut buffer).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        for block in ["P", "c", "A_eq", "b_eq", "G", "h_ub"] {
            assert!(
                text.lines().any(|line| line == block),
                "missing block {block}"
            );
        }
        assert!(text.starts_with(&format!("qp n={}", problem.n())));
    }
}

