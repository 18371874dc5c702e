//! Dense primal active-set solver for
//! `min 1/2 z'Hz + g'z  s.t.  C z <= d`, with `H` positive definite.

use nalgebra::{DMatrix, DVector};

use crate::error::CoreError;

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// True when the solver stopped on the iteration cap.
    pub hit_iteration_cap: bool,
    /// Infinity norm of the stationarity residual over the final working set.
    pub kkt_residual: f64,
    /// Objective after every iterate, starting with the initial point.
    pub objective_history: Vec<f64>,
    pub active_set: Vec<usize>,
}

impl QpProblem {
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z)
    }

    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        if self.c.nrows() == 0 {
            return 0.0;
        }
        (&self.c * z - &self.d).max().max(0.0)
    }

    fn check(&self) -> Result<(), CoreError> {
        let n = self.h.nrows();
        if self.h.ncols() != n || self.g.len() != n || self.c.ncols() != n || self.c.nrows() != self.d.len() {
            return Err(CoreError::InvalidArgument("qp dimensions mismatch".into()));
        }
        Ok(())
    }
}

/// Solves from a feasible starting point `z0`. The objective never increases
/// between iterates.
pub fn solve(problem: &QpProblem, z0: DVector<f64>, settings: &QpSettings) -> Result<QpSolution, CoreError> {
    problem.check()?;
    let m = problem.c.nrows();
    let feas_tol = 1e-9 * (1.0 + problem.d.amax());
    if problem.max_violation(&z0) > feas_tol {
        return Err(CoreError::InfeasibleQp(format!(
            "starting point violates constraints by {:.3e}",
            problem.max_violation(&z0)
        )));
    }

    let mut z = z0;
    let mut working: Vec<usize> = Vec::new();
    let mut history = vec![problem.objective(&z)];
    let mut iterations = 0;

    while iterations < settings.max_iters {
        iterations += 1;
        let grad = &problem.h * &z + &problem.g;
        let (p, lambda) = solve_eqp(&problem.h, &grad, &problem.c, &working)?;

        if p.amax() <= settings.tol * (1.0 + z.amax()) {
            let residual = stationarity_residual(&grad, &problem.c, &working, &lambda);
            // most negative multiplier leaves the working set
            let worst = lambda
                .iter()
                .enumerate()
                .filter(|(_, &l)| l < -settings.tol)
                .min_by(|a, b| a.1.total_cmp(b.1).then(working[a.0].cmp(&working[b.0])));
            match worst {
                None => {
                    history.push(problem.objective(&z));
                    return Ok(finish(problem, z, iterations, false, residual, history, working));
                }
                Some((pos, _)) => {
                    working.remove(pos);
                    history.push(problem.objective(&z));
                    continue;
                }
            }
        }

        // ratio test over constraints outside the working set
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..m {
            if working.contains(&i) {
                continue;
            }
            let row = problem.c.row(i);
            let cp = row.dot(&p.transpose());
            if cp > 1e-14 {
                let slack = (problem.d[i] - row.dot(&z.transpose())).max(0.0);
                let step = slack / cp;
                if step < alpha {
                    alpha = step;
                    blocking = Some(i);
                }
            }
        }
        let candidate = &z + &p * alpha;
        // guard against round-off pushing the objective up
        if problem.objective(&candidate) <= *history.last().unwrap() {
            z = candidate;
        }
        if let Some(i) = blocking {
            working.push(i);
        }
        history.push(problem.objective(&z));
    }
    let grad = &problem.h * &z + &problem.g;
    let residual = stationarity_residual(&grad, &problem.c, &working, &lambda_for(problem, &z, &working)?);
    Ok(finish(problem, z, iterations, true, residual, history, working))
}

fn finish(
    problem: &QpProblem,
    z: DVector<f64>,
    iterations: usize,
    hit_iteration_cap: bool,
    kkt_residual: f64,
    objective_history: Vec<f64>,
    mut active_set: Vec<usize>,
) -> QpSolution {
    active_set.sort_unstable();
    QpSolution {
        objective: problem.objective(&z),
        z,
        iterations,
        hit_iteration_cap,
        kkt_residual,
        objective_history,
        active_set,
    }
}

fn stationarity_residual(grad: &DVector<f64>, c: &DMatrix<f64>, working: &[usize], lambda: &DVector<f64>) -> f64 {
    let mut r = grad.clone();
    for (k, &i) in working.iter().enumerate() {
        r += c.row(i).transpose() * lambda[k];
    }
    r.amax()
}

/// Least-squares multipliers for the working set at `z`.
fn lambda_for(problem: &QpProblem, z: &DVector<f64>, working: &[usize]) -> Result<DVector<f64>, CoreError> {
    if working.is_empty() {
        return Ok(DVector::zeros(0));
    }
    let grad = &problem.h * z + &problem.g;
    let a = DMatrix::from_fn(problem.h.nrows(), working.len(), |r, k| problem.c[(working[k], r)]);
    let svd = a.svd(true, true);
    svd.solve(&(-grad), 1e-12)
        .map_err(|e| CoreError::InfeasibleQp(format!("multiplier estimate failed: {e}")))
}

/// Equality-constrained step: `H p + C_W' lambda = -grad`, `C_W p = 0`.
fn solve_eqp(
    h: &DMatrix<f64>,
    grad: &DVector<f64>,
    c: &DMatrix<f64>,
    working: &[usize],
) -> Result<(DVector<f64>, DVector<f64>), CoreError> {
    let n = h.nrows();
    let w = working.len();
    let mut kkt = DMatrix::zeros(n + w, n + w);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    for (k, &i) in working.iter().enumerate() {
        for col in 0..n {
            kkt[(n + k, col)] = c[(i, col)];
            kkt[(col, n + k)] = c[(i, col)];
        }
    }
    let mut rhs = DVector::zeros(n + w);
    rhs.rows_mut(0, n).copy_from(&(-grad));
    let sol = match kkt.clone().lu().solve(&rhs) {
        Some(s) if s.iter().all(|v| v.is_finite()) => s,
        _ => kkt
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| CoreError::InfeasibleQp(format!("singular KKT system: {e}")))?,
    };
    Ok((sol.rows(0, n).into_owned(), sol.rows(n, w).into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn boxed(h: DMatrix<f64>, g: DVector<f64>, lo: f64, hi: f64) -> QpProblem {
        let n = h.nrows();
        let mut c = DMatrix::zeros(2 * n, n);
        let mut d = DVector::zeros(2 * n);
        for i in 0..n {
            c[(2 * i, i)] = 1.0;
            d[2 * i] = hi;
            c[(2 * i + 1, i)] = -1.0;
            d[2 * i + 1] = -lo;
        }
        QpProblem { h, g, c, d }
    }

    #[test]
    fn unconstrained_minimum() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = DVector::from_vec(vec![-1.0, 0.3]);
        let p = QpProblem {
            h: h.clone(),
            g: g.clone(),
            c: DMatrix::zeros(0, 2),
            d: DVector::zeros(0),
        };
        let s = solve(&p, DVector::zeros(2), &QpSettings::default()).unwrap();
        let exact = h.lu().solve(&(-g)).unwrap();
        assert!((s.z - exact).amax() < 1e-10);
        assert!(!s.hit_iteration_cap);
        assert!(s.kkt_residual < 1e-9);
    }

    #[test]
    fn separable_box_matches_clamp() {
        // diagonal H: the box solution is the clamped unconstrained solution
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0, 0.5]));
        let g = DVector::from_vec(vec![-3.0, 1.0, -0.2, 0.9]);
        let p = boxed(h.clone(), g.clone(), -1.0, 1.0);
        let s = solve(&p, DVector::zeros(4), &QpSettings::default()).unwrap();
        for i in 0..4 {
            let expect = (-g[i] / h[(i, i)]).clamp(-1.0, 1.0);
            assert!((s.z[i] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_infeasible_start() {
        let p = boxed(DMatrix::identity(2, 2), DVector::zeros(2), -1.0, 1.0);
        let e = solve(&p, DVector::from_vec(vec![2.0, 0.0]), &QpSettings::default()).unwrap_err();
        assert!(matches!(e, CoreError::InfeasibleQp(_)));
    }

    fn random_problem(seed: Vec<f64>, n: usize) -> QpProblem {
        let m = DMatrix::from_fn(n, n, |r, c| seed[(r * n + c) % seed.len()]);
        let h = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
        let g = DVector::from_fn(n, |i, _| seed[(i * 7 + 3) % seed.len()] * 5.0);
        boxed(h, g, -0.5, 0.5)
    }

    proptest! {
        #[test]
        fn objective_is_monotone_and_optimal(seed in prop::collection::vec(-1.0f64..1.0, 16..40)) {
            let p = random_problem(seed, 5);
            let s = solve(&p, DVector::zeros(5), &QpSettings::default()).unwrap();
            for w in s.objective_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
            prop_assert!(p.max_violation(&s.z) < 1e-9);
            // optimality vs random feasible points
            let mut probe = DVector::zeros(5);
            for k in 0..200 {
                for i in 0..5 {
                    probe[i] = (((k * 31 + i * 17) % 101) as f64 / 100.0) - 0.5;
                }
                prop_assert!(s.objective <= p.objective(&probe) + 1e-9);
            }
        }
    }
}
