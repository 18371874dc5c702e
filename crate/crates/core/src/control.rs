//! Trajectory tracking: kinematic MPC, dynamic lateral MPC with a speed PID,
//! and the state estimator feeding them.

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::geom::{wrap_angle, Pose2D, TrajectoryPoint, VehicleState};
use crate::motion::PlannedTrajectory;
use crate::qp::{self, QpProblem, QpSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlMode {
    Kinematic,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Longitudinal {
    /// Target speed, m/s.
    Speed(f64),
    /// Target acceleration, m/s^2.
    Accel(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub steer_angle: f64,
    pub longitudinal: Longitudinal,
}

impl ControlCommand {
    pub fn mode(&self) -> ControlMode {
        match self.longitudinal {
            Longitudinal::Speed(_) => ControlMode::Kinematic,
            Longitudinal::Accel(_) => ControlMode::Dynamic,
        }
    }

    pub fn is_finite(&self) -> bool {
        let lon = match self.longitudinal {
            Longitudinal::Speed(v) | Longitudinal::Accel(v) => v,
        };
        self.steer_angle.is_finite() && lon.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KinematicModel {
    pub wheelbase: f64,
    pub steer_limit: f64,
    pub steer_rate_limit: f64,
}

impl Default for KinematicModel {
    fn default() -> Self {
        Self {
            wheelbase: 1.8,
            steer_limit: 0.5,
            steer_rate_limit: 1.0,
        }
    }
}

impl KinematicModel {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.wheelbase > 0.0 && self.steer_limit > 0.0 && self.steer_rate_limit > 0.0) {
            return Err(CoreError::InvalidArgument(
                "kinematic model needs positive wheelbase and steering limits".into(),
            ));
        }
        Ok(())
    }
}

/// Linear single-track lateral model; cornering stiffnesses are per axle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicModel {
    pub mass: f64,
    pub yaw_inertia: f64,
    pub cf: f64,
    pub cr: f64,
    pub lf: f64,
    pub lr: f64,
}

impl Default for DynamicModel {
    fn default() -> Self {
        Self {
            mass: 600.0,
            yaw_inertia: 400.0,
            cf: 20_000.0,
            cr: 20_000.0,
            lf: 0.9,
            lr: 0.9,
        }
    }
}

impl DynamicModel {
    pub fn validate(&self, wheelbase: f64) -> Result<(), CoreError> {
        let all_positive = [self.mass, self.yaw_inertia, self.cf, self.cr, self.lf, self.lr]
            .iter()
            .all(|v| *v > 0.0);
        if !all_positive {
            return Err(CoreError::InvalidArgument("dynamic model parameters must be positive".into()));
        }
        if (self.lf + self.lr - wheelbase).abs() > 1e-6 {
            return Err(CoreError::InvalidArgument(format!(
                "lf + lr = {} does not match wheelbase {wheelbase}",
                self.lf + self.lr
            )));
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Kinematic state weights in the reference frame: along-track, cross-track, heading.
    pub q_lon: f64,
    pub q_lat: f64,
    pub q_heading: f64,
    /// Lateral error model weights.
    pub q_e1: f64,
    pub q_e1_rate: f64,
    pub q_e2: f64,
    pub q_e2_rate: f64,
    pub r_steer: f64,
    pub r_speed: f64,
    pub rd_steer: f64,
    pub rd_speed: f64,
    pub steer_limit: f64,
    pub steer_rate_limit: f64,
    pub v_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub v_eps: f64,
    pub max_qp_iters: usize,
    pub qp_tol: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.05,
            q_lon: 1.0,
            q_lat: 20.0,
            q_heading: 5.0,
            q_e1: 20.0,
            q_e1_rate: 0.5,
            q_e2: 5.0,
            q_e2_rate: 0.1,
            r_steer: 1.0,
            r_speed: 0.5,
            rd_steer: 5.0,
            rd_speed: 1.0,
            steer_limit: 0.5,
            steer_rate_limit: 1.0,
            v_max: 6.0,
            a_min: -3.0,
            a_max: 1.5,
            v_eps: 0.5,
            max_qp_iters: 100,
            qp_tol: 1e-6,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.horizon < 2 || !(self.dt > 0.0) {
            return Err(CoreError::InvalidArgument("mpc needs horizon >= 2 and dt > 0".into()));
        }
        let weights = [
            self.q_lon,
            self.q_lat,
            self.q_heading,
            self.q_e1,
            self.q_e1_rate,
            self.q_e2,
            self.q_e2_rate,
            self.r_steer,
            self.r_speed,
            self.rd_steer,
            self.rd_speed,
        ];
        if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().all(|w| *w == 0.0) {
            return Err(CoreError::InvalidArgument("mpc weights must be >= 0 and not all zero".into()));
        }
        if !(self.steer_limit > 0.0 && self.steer_rate_limit > 0.0 && self.v_max > 0.0 && self.a_min < 0.0 && self.a_max > 0.0)
        {
            return Err(CoreError::InvalidArgument("mpc bounds are inconsistent".into()));
        }
        Ok(())
    }

    fn qp_settings(&self) -> QpSettings {
        QpSettings {
            max_iters: self.max_qp_iters,
            tol: self.qp_tol,
        }
    }
}

/// Time-varying linear error model over a horizon, condensed into a QP on
/// input deviations from `u_ref`.
#[derive(Debug, Clone)]
pub struct LinearMpc {
    /// `e[k+1] = a[k] e[k] + b[k] du[k] + c[k]`.
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub c: Vec<DVector<f64>>,
    /// Weight on `e[k+1]`.
    pub q: Vec<DMatrix<f64>>,
    pub r: DMatrix<f64>,
    pub rd: DMatrix<f64>,
    pub u_ref: Vec<DVector<f64>>,
    pub u_lo: DVector<f64>,
    pub u_hi: DVector<f64>,
    /// Bounds on `u[k] - u[k-1]` per step.
    pub rate_lo: DVector<f64>,
    pub rate_hi: DVector<f64>,
    pub u_prev: Option<DVector<f64>>,
    pub e0: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct MpcSolution {
    /// Absolute inputs over the horizon.
    pub inputs: Vec<DVector<f64>>,
    /// Full stage cost including constant terms.
    pub cost: f64,
    pub iterations: usize,
    pub hit_iteration_cap: bool,
    pub kkt_residual: f64,
    pub objective_history: Vec<f64>,
}

impl LinearMpc {
    fn horizon(&self) -> usize {
        self.b.len()
    }

    fn nu(&self) -> usize {
        self.r.nrows()
    }

    /// Condensed QP plus the constant cost offset.
    pub fn build(&self) -> (QpProblem, f64) {
        let (n, nu, nx) = (self.horizon(), self.nu(), self.e0.len());
        let nz = n * nu;
        let mut h = DMatrix::zeros(nz, nz);
        let mut g = DVector::zeros(nz);
        let mut constant = 0.0;

        let mut e_mat = DMatrix::zeros(nx, nz);
        let mut f = self.e0.clone();
        for k in 0..n {
            e_mat = &self.a[k] * e_mat;
            let mut blk = e_mat.columns_mut(k * nu, nu);
            blk += &self.b[k];
            f = &self.a[k] * f + &self.c[k];
            let qe = &self.q[k] * &e_mat;
            h += e_mat.transpose() * &qe * 2.0;
            g += e_mat.transpose() * (&self.q[k] * &f) * 2.0;
            constant += f.dot(&(&self.q[k] * &f));
        }
        for k in 0..n {
            let mut blk = h.view_mut((k * nu, k * nu), (nu, nu));
            blk += &self.r * 2.0;
        }
        for k in 0..n {
            let base = if k == 0 {
                match &self.u_prev {
                    Some(p) => p.clone(),
                    None => continue,
                }
            } else {
                self.u_ref[k - 1].clone()
            };
            let hk = &self.u_ref[k] - base;
            let rd2 = &self.rd * 2.0;
            {
                let mut blk = h.view_mut((k * nu, k * nu), (nu, nu));
                blk += &rd2;
            }
            let gk = &rd2 * &hk;
            {
                let mut seg = g.rows_mut(k * nu, nu);
                seg += &gk;
            }
            if k > 0 {
                let mut blk = h.view_mut(((k - 1) * nu, (k - 1) * nu), (nu, nu));
                blk += &rd2;
                let mut off = h.view_mut((k * nu, (k - 1) * nu), (nu, nu));
                off -= &rd2;
                let mut off_t = h.view_mut(((k - 1) * nu, k * nu), (nu, nu));
                off_t -= &rd2;
                let mut seg = g.rows_mut((k - 1) * nu, nu);
                seg -= &gk;
            }
            constant += hk.dot(&(&self.rd * &hk));
        }

        let n_rate = if self.u_prev.is_some() { n } else { n - 1 };
        let m = 2 * nz + 2 * n_rate * nu;
        let mut cm = DMatrix::zeros(m, nz);
        let mut d = DVector::zeros(m);
        let mut row = 0;
        for k in 0..n {
            for j in 0..nu {
                let col = k * nu + j;
                cm[(row, col)] = 1.0;
                d[row] = self.u_hi[j] - self.u_ref[k][j];
                cm[(row + 1, col)] = -1.0;
                d[row + 1] = self.u_ref[k][j] - self.u_lo[j];
                row += 2;
            }
        }
        for k in 0..n {
            let base = if k == 0 {
                match &self.u_prev {
                    Some(p) => p.iter().copied().collect::<Vec<f64>>(),
                    None => continue,
                }
            } else {
                self.u_ref[k - 1].iter().copied().collect()
            };
            for j in 0..nu {
                let col = k * nu + j;
                let shift = self.u_ref[k][j] - base[j];
                cm[(row, col)] = 1.0;
                cm[(row + 1, col)] = -1.0;
                if k > 0 {
                    cm[(row, col - nu)] = -1.0;
                    cm[(row + 1, col - nu)] = 1.0;
                }
                d[row] = self.rate_hi[j] - shift;
                d[row + 1] = shift - self.rate_lo[j];
                row += 2;
            }
        }
        (QpProblem { h, g, c: cm, d }, constant)
    }

    /// Feasible start: follow the reference input as closely as the box and
    /// rate limits allow.
    fn feasible_start(&self) -> Result<DVector<f64>, CoreError> {
        let (n, nu) = (self.horizon(), self.nu());
        let mut z = DVector::zeros(n * nu);
        let mut last: Option<DVector<f64>> = self.u_prev.clone();
        for k in 0..n {
            let mut u = DVector::zeros(nu);
            for j in 0..nu {
                let (mut lo, mut hi) = (self.u_lo[j], self.u_hi[j]);
                if let Some(prev) = &last {
                    lo = lo.max(prev[j] + self.rate_lo[j]);
                    hi = hi.min(prev[j] + self.rate_hi[j]);
                }
                if lo > hi + 1e-12 {
                    return Err(CoreError::InfeasibleQp(format!(
                        "input {j} cannot reach its bounds at step {k} within the rate limit"
                    )));
                }
                u[j] = self.u_ref[k][j].clamp(lo, hi.max(lo));
            }
            z.rows_mut(k * nu, nu).copy_from(&(&u - &self.u_ref[k]));
            last = Some(u);
        }
        Ok(z)
    }

    pub fn solve(&self, settings: &QpSettings) -> Result<MpcSolution, CoreError> {
        let (problem, constant) = self.build();
        let z0 = self.feasible_start()?;
        let sol = qp::solve(&problem, z0, settings)?;
        let nu = self.nu();
        let inputs = (0..self.horizon())
            .map(|k| {
                let mut u = &self.u_ref[k] + sol.z.rows(k * nu, nu);
                for j in 0..nu {
                    u[j] = u[j].clamp(self.u_lo[j], self.u_hi[j]);
                }
                u
            })
            .collect();
        Ok(MpcSolution {
            inputs,
            cost: sol.objective + constant,
            iterations: sol.iterations,
            hit_iteration_cap: sol.hit_iteration_cap,
            kkt_residual: sol.kkt_residual,
            objective_history: sol.objective_history.iter().map(|o| o + constant).collect(),
        })
    }
}

/// Reference points at `now + k dt`, `k = 0..=n`, holding the last point.
pub fn reference_window(reference: &PlannedTrajectory, now: f64, dt: f64, n: usize) -> Vec<TrajectoryPoint> {
    (0..=n)
        .map(|k| reference.trajectory.sample_clamped(now + k as f64 * dt - reference.stamp))
        .collect()
}

fn kinematic_step(pose: &Pose2D, v: f64, steer: f64, wheelbase: f64, dt: f64) -> [f64; 3] {
    [
        pose.x + dt * v * pose.heading.cos(),
        pose.y + dt * v * pose.heading.sin(),
        pose.heading + dt * v * steer.tan() / wheelbase,
    ]
}

/// Builds the kinematic tracking problem; inputs are `(steer, speed)`.
pub fn kinematic_problem(
    reference: &PlannedTrajectory,
    state: &VehicleState,
    model: &KinematicModel,
    cfg: &MpcConfig,
    prev: Option<(f64, f64)>,
) -> Result<LinearMpc, CoreError> {
    model.validate()?;
    cfg.validate()?;
    let (n, dt, l) = (cfg.horizon, cfg.dt, model.wheelbase);
    let refs = reference_window(reference, state.timestamp, dt, n);
    let steer_limit = cfg.steer_limit.min(model.steer_limit);
    let steer_rate = cfg.steer_rate_limit.min(model.steer_rate_limit) * dt;
    let u_ref: Vec<DVector<f64>> = refs[..n]
        .iter()
        .map(|p| {
            let steer = (l * p.curvature).atan().clamp(-steer_limit, steer_limit);
            DVector::from_vec(vec![steer, p.speed.clamp(0.0, cfg.v_max)])
        })
        .collect();

    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for k in 0..n {
        let p = &refs[k];
        let (th, v, steer) = (p.pose.heading, u_ref[k][1], u_ref[k][0]);
        let (s, co) = th.sin_cos();
        a.push(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.0, -dt * v * s, 0.0, 1.0, dt * v * co, 0.0, 0.0, 1.0],
        ));
        let sec2 = 1.0 / steer.cos().powi(2);
        b.push(DMatrix::from_row_slice(
            3,
            2,
            &[0.0, dt * co, 0.0, dt * s, dt * v * sec2 / l, dt * steer.tan() / l],
        ));
        let next = kinematic_step(&p.pose, v, steer, l, dt);
        let target = &refs[k + 1].pose;
        c.push(DVector::from_vec(vec![
            next[0] - target.x,
            next[1] - target.y,
            wrap_angle(next[2] - target.heading),
        ]));
        let (s1, c1) = refs[k + 1].pose.heading.sin_cos();
        let rot = Matrix3::new(c1, s1, 0.0, -s1, c1, 0.0, 0.0, 0.0, 1.0);
        let w = Matrix3::from_diagonal(&nalgebra::Vector3::new(cfg.q_lon, cfg.q_lat, cfg.q_heading));
        let qk = rot.transpose() * w * rot;
        q.push(DMatrix::from_column_slice(3, 3, qk.as_slice()));
    }
    let r0 = &refs[0].pose;
    let e0 = DVector::from_vec(vec![
        state.pose.x - r0.x,
        state.pose.y - r0.y,
        wrap_angle(state.pose.heading - r0.heading),
    ]);
    Ok(LinearMpc {
        a,
        b,
        c,
        q,
        r: DMatrix::from_diagonal(&DVector::from_vec(vec![cfg.r_steer, cfg.r_speed])),
        rd: DMatrix::from_diagonal(&DVector::from_vec(vec![cfg.rd_steer, cfg.rd_speed])),
        u_ref,
        u_lo: DVector::from_vec(vec![-steer_limit, 0.0]),
        u_hi: DVector::from_vec(vec![steer_limit, cfg.v_max]),
        rate_lo: DVector::from_vec(vec![-steer_rate, cfg.a_min * dt]),
        rate_hi: DVector::from_vec(vec![steer_rate, cfg.a_max * dt]),
        u_prev: prev.map(|(s, v)| DVector::from_vec(vec![s, v])),
        e0,
    })
}

/// Combined steering and speed tracking; `prev` is the last applied
/// `(steer, speed)` command, used for the first-step rate terms.
pub fn mpc_kinematic(
    reference: &PlannedTrajectory,
    state: &VehicleState,
    model: &KinematicModel,
    cfg: &MpcConfig,
    prev: Option<(f64, f64)>,
) -> Result<(ControlCommand, MpcSolution), CoreError> {
    let problem = kinematic_problem(reference, state, model, cfg, prev)?;
    let sol = problem.solve(&cfg.qp_settings())?;
    let u = &sol.inputs[0];
    let cmd = ControlCommand {
        steer_angle: u[0],
        longitudinal: Longitudinal::Speed(u[1]),
    };
    Ok((cmd, sol))
}

/// Continuous lateral error dynamics at longitudinal speed `vx`:
/// returns `(A, B_steer, B_yaw_rate_des)`.
pub fn lateral_error_model(model: &DynamicModel, vx: f64) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let DynamicModel {
        mass: m,
        yaw_inertia: iz,
        cf,
        cr,
        lf,
        lr,
    } = *model;
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0,
            1.0,
            0.0,
            0.0,
            0.0,
            -(cf + cr) / (m * vx),
            (cf + cr) / m,
            (cr * lr - cf * lf) / (m * vx),
            0.0,
            0.0,
            0.0,
            1.0,
            0.0,
            (cr * lr - cf * lf) / (iz * vx),
            (cf * lf - cr * lr) / iz,
            -(cf * lf * lf + cr * lr * lr) / (iz * vx),
        ],
    );
    let b = DVector::from_vec(vec![0.0, cf / m, 0.0, cf * lf / iz]);
    let bd = DVector::from_vec(vec![
        0.0,
        (cr * lr - cf * lf) / (m * vx) - vx,
        0.0,
        -(cf * lf * lf + cr * lr * lr) / (iz * vx),
    ]);
    (a, b, bd)
}

/// Zero-order-hold discretization of `x' = A x + B u`.
pub fn zoh(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (nx, nu) = (a.nrows(), b.ncols());
    let mut aug = DMatrix::zeros(nx + nu, nx + nu);
    aug.view_mut((0, 0), (nx, nx)).copy_from(a);
    aug.view_mut((0, nx), (nx, nu)).copy_from(b);
    let e = (aug * dt).exp();
    (e.view((0, 0), (nx, nx)).into_owned(), e.view((0, nx), (nx, nu)).into_owned())
}

/// Steady-state `(heading error, steer)` holding zero lateral error on a
/// path of curvature `kappa`.
fn lateral_steady_state(a: &DMatrix<f64>, b: &DVector<f64>, bd: &DVector<f64>, yaw_rate_des: f64) -> (f64, f64) {
    // rows 1 and 3 with e1 = e1' = e2' = 0
    let m = nalgebra::Matrix2::new(a[(1, 2)], b[1], a[(3, 2)], b[3]);
    let rhs = nalgebra::Vector2::new(-bd[1] * yaw_rate_des, -bd[3] * yaw_rate_des);
    let sol = m.lu().solve(&rhs).unwrap_or_else(nalgebra::Vector2::zeros);
    (sol[0], sol[1])
}

/// Lateral error state `(e1, e1', e2, e2')` of `state` against a reference point.
pub fn lateral_errors(state: &VehicleState, r: &TrajectoryPoint, wheelbase: f64) -> [f64; 4] {
    let (s, c) = r.pose.heading.sin_cos();
    let dx = state.pose.x - r.pose.x;
    let dy = state.pose.y - r.pose.y;
    let e1 = -s * dx + c * dy;
    let e2 = wrap_angle(state.pose.heading - r.pose.heading);
    let v = state.speed;
    let yaw_rate = v * state.steer_angle.tan() / wheelbase;
    [e1, v * e2.sin(), e2, yaw_rate - v * r.curvature]
}

pub fn dynamic_problem(
    reference: &PlannedTrajectory,
    state: &VehicleState,
    model: &DynamicModel,
    cfg: &MpcConfig,
    prev_steer: Option<f64>,
) -> Result<LinearMpc, CoreError> {
    cfg.validate()?;
    model.validate(model.wheelbase())?;
    let vx = state.speed;
    if vx <= cfg.v_eps {
        return Err(CoreError::LowSpeed {
            speed: vx,
            threshold: cfg.v_eps,
        });
    }
    let (n, dt) = (cfg.horizon, cfg.dt);
    let refs = reference_window(reference, state.timestamp, dt, n);
    let (a, b, bd) = lateral_error_model(model, vx);
    let b_full = DMatrix::from_columns(&[b.clone(), bd.clone()]);
    let (ad, bdisc) = zoh(&a, &b_full, dt);
    let b_steer = bdisc.columns(0, 1).into_owned();

    let steady: Vec<(f64, f64)> = refs
        .iter()
        .map(|p| lateral_steady_state(&a, &b, &bd, vx * p.curvature))
        .collect();
    let e_ss = |k: usize| DVector::from_vec(vec![0.0, 0.0, steady[k].0, 0.0]);
    let steer_limit = cfg.steer_limit;
    let steer_rate = cfg.steer_rate_limit * dt;
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![cfg.q_e1, cfg.q_e1_rate, cfg.q_e2, cfg.q_e2_rate]));
    let e = lateral_errors(state, &refs[0], model.wheelbase());
    Ok(LinearMpc {
        a: vec![ad; n],
        b: vec![b_steer; n],
        c: (0..n).map(|k| e_ss(k) - e_ss(k + 1)).collect(),
        q: vec![q; n],
        r: DMatrix::from_element(1, 1, cfg.r_steer),
        rd: DMatrix::from_element(1, 1, cfg.rd_steer),
        u_ref: (0..n)
            .map(|k| DVector::from_element(1, steady[k].1.clamp(-steer_limit, steer_limit)))
            .collect(),
        u_lo: DVector::from_element(1, -steer_limit),
        u_hi: DVector::from_element(1, steer_limit),
        rate_lo: DVector::from_element(1, -steer_rate),
        rate_hi: DVector::from_element(1, steer_rate),
        u_prev: prev_steer.map(|s| DVector::from_element(1, s)),
        e0: DVector::from_vec(e.to_vec()) - e_ss(0),
    })
}

/// Lateral-only MPC on the linear single-track error model.
pub fn mpc_dynamic_lateral(
    reference: &PlannedTrajectory,
    state: &VehicleState,
    model: &DynamicModel,
    cfg: &MpcConfig,
    prev_steer: Option<f64>,
) -> Result<(f64, MpcSolution), CoreError> {
    let problem = dynamic_problem(reference, state, model, cfg, prev_steer)?;
    let sol = problem.solve(&cfg.qp_settings())?;
    Ok((sol.inputs[0][0], sol))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral_limit: f64,
    pub output_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 0.8,
            ki: 0.2,
            kd: 0.0,
            integral_limit: 5.0,
            output_limit: 2.0,
        }
    }
}

/// Speed PID: derivative on measurement, integrator frozen while the
/// output saturates.
#[derive(Debug, Clone, PartialEq)]
pub struct Pid {
    pub gains: PidGains,
    integral: f64,
    last_measurement: Option<f64>,
}

impl Pid {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            integral: 0.0,
            last_measurement: None,
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.last_measurement = None;
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    pub fn update(&mut self, reference: f64, measurement: f64, dt: f64) -> f64 {
        let g = self.gains;
        let err = reference - measurement;
        let deriv = match self.last_measurement {
            Some(prev) if dt > 0.0 => -(measurement - prev) / dt,
            _ => 0.0,
        };
        self.last_measurement = Some(measurement);
        let trial = (self.integral + err * dt).clamp(-g.integral_limit, g.integral_limit);
        let raw = g.kp * err + g.ki * trial + g.kd * deriv;
        if raw.abs() <= g.output_limit {
            self.integral = trial;
        }
        (g.kp * err + g.ki * self.integral + g.kd * deriv).clamp(-g.output_limit, g.output_limit)
    }
}

/// One PID step from zero history.
pub fn pid_longitudinal(v_ref: f64, v: f64, gains: &PidGains, dt: f64) -> f64 {
    Pid::new(*gains).update(v_ref, v, dt)
}

/// Low-pass filtered speed with constant-velocity extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEstimator {
    pub tau: f64,
    filtered: Option<f64>,
    last: Option<VehicleState>,
}

impl StateEstimator {
    pub fn new(tau: f64) -> Self {
        Self {
            tau,
            filtered: None,
            last: None,
        }
    }

    /// Feeds one sample; samples not newer than the last one are ignored.
    pub fn push(&mut self, sample: &VehicleState) {
        match (&self.last, self.filtered) {
            (Some(last), Some(vf)) => {
                let dt = sample.timestamp - last.timestamp;
                if dt <= 0.0 {
                    return;
                }
                let alpha = 1.0 - (-dt / self.tau).exp();
                self.filtered = Some(vf + alpha * (sample.speed - vf));
            }
            _ => self.filtered = Some(sample.speed),
        }
        self.last = Some(*sample);
    }

    pub fn estimate(&self, now: f64) -> Result<VehicleState, CoreError> {
        let last = self.last.ok_or(CoreError::NoState)?;
        let speed = self.filtered.unwrap_or(last.speed);
        let dt = now - last.timestamp;
        let mut out = last;
        out.speed = speed;
        out.timestamp = now;
        if dt != 0.0 {
            let p = last.pose.position() + last.pose.direction() * (speed * dt);
            out.pose = Pose2D::new(p.x, p.y, last.pose.heading);
        }
        Ok(out)
    }
}

/// Filters `samples` (oldest first) and extrapolates to `now`.
pub fn estimate_state(samples: &[VehicleState], now: f64, tau: f64) -> Result<VehicleState, CoreError> {
    let mut est = StateEstimator::new(tau);
    for s in samples {
        est.push(s);
    }
    est.estimate(now)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub kinematic: KinematicModel,
    pub dynamic: DynamicModel,
    pub mpc: MpcConfig,
    pub pid: PidGains,
    /// Switch to the dynamic controller at or above this speed.
    pub switch_up: f64,
    /// Switch back to the kinematic controller below this speed.
    pub switch_down: f64,
    pub estimator_tau: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kinematic: KinematicModel::default(),
            dynamic: DynamicModel::default(),
            mpc: MpcConfig::default(),
            pid: PidGains::default(),
            switch_up: 3.0,
            switch_down: 2.7,
            estimator_tau: 0.05,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        self.kinematic.validate()?;
        self.dynamic.validate(self.kinematic.wheelbase)?;
        self.mpc.validate()?;
        if !(self.pid.integral_limit > 0.0 && self.pid.output_limit > 0.0) {
            return Err(CoreError::InvalidArgument("pid clamps must be positive".into()));
        }
        if !(self.switch_down <= self.switch_up && self.switch_down > self.mpc.v_eps) {
            return Err(CoreError::InvalidArgument(
                "mode switch speeds must satisfy v_eps < switch_down <= switch_up".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub command: ControlCommand,
    pub qp_iterations: usize,
    pub hit_iteration_cap: bool,
}

/// Stateful tracking controller; one per vehicle, called at the control rate.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    pid: Pid,
    mode: ControlMode,
    prev: Option<ControlCommand>,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Result<Self, CoreError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            pid: Pid::new(cfg.pid),
            mode: ControlMode::Kinematic,
            prev: None,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    fn select_mode(&mut self, speed: f64) {
        self.mode = match self.mode {
            ControlMode::Kinematic if speed >= self.cfg.switch_up => {
                self.pid.reset();
                ControlMode::Dynamic
            }
            ControlMode::Dynamic if speed < self.cfg.switch_down => ControlMode::Kinematic,
            m => m,
        };
    }

    pub fn step(&mut self, reference: &PlannedTrajectory, state: &VehicleState, dt: f64) -> Result<ControlOutput, CoreError> {
        self.select_mode(state.speed);
        let prev_steer = self.prev.map(|c| c.steer_angle).unwrap_or(state.steer_angle);
        let out = match self.mode {
            ControlMode::Dynamic => {
                match mpc_dynamic_lateral(reference, state, &self.cfg.dynamic, &self.cfg.mpc, Some(prev_steer)) {
                    Ok((steer, sol)) => {
                        let r = reference.trajectory.sample_clamped(state.timestamp - reference.stamp);
                        // feedforward of the planned acceleration, PID on the speed error
                        let accel = (r.accel + self.pid.update(r.speed, state.speed, dt))
                            .clamp(self.cfg.mpc.a_min, self.cfg.mpc.a_max);
                        ControlOutput {
                            command: ControlCommand {
                                steer_angle: steer,
                                longitudinal: Longitudinal::Accel(accel),
                            },
                            qp_iterations: sol.iterations,
                            hit_iteration_cap: sol.hit_iteration_cap,
                        }
                    }
                    Err(CoreError::LowSpeed { .. }) => {
                        self.mode = ControlMode::Kinematic;
                        self.kinematic(reference, state, prev_steer)?
                    }
                    Err(e) => return Err(e),
                }
            }
            ControlMode::Kinematic => self.kinematic(reference, state, prev_steer)?,
        };
        self.prev = Some(out.command);
        Ok(out)
    }

    fn kinematic(&mut self, reference: &PlannedTrajectory, state: &VehicleState, prev_steer: f64) -> Result<ControlOutput, CoreError> {
        let prev_speed = match self.prev.map(|c| c.longitudinal) {
            Some(Longitudinal::Speed(v)) => v,
            _ => state.speed.clamp(0.0, self.cfg.mpc.v_max),
        };
        let (command, sol) = mpc_kinematic(
            reference,
            state,
            &self.cfg.kinematic,
            &self.cfg.mpc,
            Some((prev_steer, prev_speed)),
        )?;
        Ok(ControlOutput {
            command,
            qp_iterations: sol.iterations,
            hit_iteration_cap: sol.hit_iteration_cap,
        })
    }
}
