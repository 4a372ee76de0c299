//! Goldfarb-Idnani dual active-set method.
//!
//! The solver starts from the unconstrained minimizer and adds violated
//! constraints one at a time, keeping dual feasibility throughout. `J` holds
//! `L^-T Q` where `H = L L'` and `Q R` is the QR factorization of the active
//! constraint normals mapped through `L^-1`; both are updated by Givens
//! rotations as constraints enter and leave.

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::{ActiveBound, BoundSide, QpError, QpProblem, QpSolution, QpStatus, INFINITE_BOUND};

/// A single-sided constraint `sign * G[row] x >= rhs` (or `=` for equalities).
#[derive(Debug, Clone, Copy)]
struct Constraint {
    row: usize,
    side: BoundSide,
    sign: f64,
    rhs: f64,
}

impl Constraint {
    fn is_equality(&self) -> bool {
        self.side == BoundSide::Equality
    }
}

/// Reusable workspace; one per control loop.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    d: DVector<f64>,
    z: DVector<f64>,
    rv: DVector<f64>,
    np: DVector<f64>,
    constraints: Vec<Constraint>,
    active: Vec<usize>,
    u: Vec<f64>,
    in_active: Vec<bool>,
    r_norm: f64,
}

impl QpSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, p: &QpProblem) -> Result<QpSolution, QpError> {
        let n = p.num_vars();
        let m = p.num_rows();

        let (chol, _reg) = factorize(&p.h)?;
        let linv = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or(QpError::NotPositiveDefinite)?;
        self.j = linv.transpose();
        self.r = DMatrix::zeros(n, n);
        self.d = DVector::zeros(n);
        self.z = DVector::zeros(n);
        self.rv = DVector::zeros(n);
        self.np = DVector::zeros(n);
        self.active.clear();
        self.u.clear();
        self.r_norm = 1.0;

        self.constraints.clear();
        for i in 0..m {
            let (lo, hi) = (p.lower[i], p.upper[i]);
            if lo == hi && lo.abs() < INFINITE_BOUND {
                self.constraints.push(Constraint { row: i, side: BoundSide::Equality, sign: 1.0, rhs: lo });
                continue;
            }
            if lo > -INFINITE_BOUND {
                self.constraints.push(Constraint { row: i, side: BoundSide::Lower, sign: 1.0, rhs: lo });
            }
            if hi < INFINITE_BOUND {
                self.constraints.push(Constraint { row: i, side: BoundSide::Upper, sign: -1.0, rhs: -hi });
            }
        }
        self.in_active = vec![false; self.constraints.len()];

        let mut x = -chol.solve(&p.g);
        let max_changes = 10 * (n + m);
        let mut changes = 0usize;

        // Equalities enter first and never leave.
        for k in 0..self.constraints.len() {
            if !self.constraints[k].is_equality() {
                continue;
            }
            self.load_normal(p, k);
            self.compute_d();
            self.update_z();
            self.update_r();
            let slack = self.slack(p, k, &x);
            let zz = self.z.dot(&self.z);
            if zz <= f64::EPSILON {
                // Dependent on equalities already active.
                if slack.abs() > 1e-9 * (1.0 + self.constraints[k].rhs.abs()) {
                    return Ok(self.finish(p, x, QpStatus::Infeasible, changes));
                }
                continue;
            }
            let t2 = -slack / self.z.dot(&self.np);
            x.axpy(t2, &self.z, 1.0);
            let iq = self.active.len();
            for i in 0..iq {
                self.u[i] -= t2 * self.rv[i];
            }
            if !self.add_constraint(k, t2) {
                return Ok(self.finish(p, x, QpStatus::Infeasible, changes));
            }
            changes += 1;
        }

        loop {
            // Most violated inequality; lowest index wins ties.
            let mut chosen: Option<(usize, f64)> = None;
            for k in 0..self.constraints.len() {
                let c = self.constraints[k];
                if c.is_equality() || self.in_active[k] {
                    continue;
                }
                let ax = c.sign * p.a.row(c.row).transpose().dot(&x);
                let s = ax - c.rhs;
                let tol = 1e-11 * (1.0 + c.rhs.abs().max(ax.abs()));
                if s < -tol && chosen.is_none_or(|(_, best)| s < best) {
                    chosen = Some((k, s));
                }
            }
            let Some((ip, _)) = chosen else {
                return Ok(self.finish(p, x, QpStatus::Optimal, changes));
            };

            let mut u_plus = 0.0;
            self.load_normal(p, ip);
            loop {
                if changes >= max_changes {
                    return Ok(self.finish(p, x, QpStatus::MaxIterations, changes));
                }
                self.compute_d();
                self.update_z();
                self.update_r();
                let iq = self.active.len();

                // Partial step: first active inequality multiplier to hit zero.
                let mut t1 = f64::INFINITY;
                let mut leave = None;
                for i in 0..iq {
                    if self.constraints[self.active[i]].is_equality() || self.rv[i] <= 0.0 {
                        continue;
                    }
                    let ratio = self.u[i] / self.rv[i];
                    if ratio < t1 {
                        t1 = ratio;
                        leave = Some(i);
                    }
                }
                let s = self.slack(p, ip, &x);
                let zz = self.z.dot(&self.z);
                let t2 = if zz > f64::EPSILON {
                    -s / self.z.dot(&self.np)
                } else {
                    f64::INFINITY
                };
                let t = t1.min(t2);
                if !t.is_finite() {
                    return Ok(self.finish(p, x, QpStatus::Infeasible, changes));
                }

                if t2.is_finite() {
                    x.axpy(t, &self.z, 1.0);
                }
                for i in 0..iq {
                    self.u[i] -= t * self.rv[i];
                }
                u_plus += t;

                if t2.is_finite() && t == t2 {
                    changes += 1;
                    if !self.add_constraint(ip, u_plus) {
                        return Ok(self.finish(p, x, QpStatus::Infeasible, changes));
                    }
                    break;
                }
                let Some(l) = leave else {
                    return Ok(self.finish(p, x, QpStatus::Infeasible, changes));
                };
                changes += 1;
                self.delete_constraint(l);
            }
        }
    }

    fn slack(&self, p: &QpProblem, k: usize, x: &DVector<f64>) -> f64 {
        let c = self.constraints[k];
        c.sign * p.a.row(c.row).transpose().dot(x) - c.rhs
    }

    fn load_normal(&mut self, p: &QpProblem, k: usize) {
        let c = self.constraints[k];
        for (dst, src) in self.np.iter_mut().zip(p.a.row(c.row).iter()) {
            *dst = c.sign * src;
        }
    }

    fn compute_d(&mut self) {
        self.d.gemv_tr(1.0, &self.j, &self.np, 0.0);
    }

    fn update_z(&mut self) {
        let n = self.d.len();
        let iq = self.active.len();
        self.z.fill(0.0);
        for j in iq..n {
            let dj = self.d[j];
            if dj != 0.0 {
                self.z.axpy(dj, &self.j.column(j), 1.0);
            }
        }
    }

    fn update_r(&mut self) {
        let iq = self.active.len();
        for i in (0..iq).rev() {
            let mut sum = self.d[i];
            for j in i + 1..iq {
                sum -= self.r[(i, j)] * self.rv[j];
            }
            self.rv[i] = sum / self.r[(i, i)];
        }
    }

    /// Rotate `d` so entries past the active count vanish, updating `J` to
    /// match, then append `d` as a new column of `R`.
    fn add_constraint(&mut self, k: usize, multiplier: f64) -> bool {
        let n = self.d.len();
        let iq = self.active.len();
        for j in (iq + 1..n).rev() {
            let (mut cc, mut ss) = (self.d[j - 1], self.d[j]);
            let h = cc.hypot(ss);
            if h == 0.0 {
                continue;
            }
            self.d[j] = 0.0;
            ss /= h;
            cc /= h;
            if cc < 0.0 {
                cc = -cc;
                ss = -ss;
                self.d[j - 1] = -h;
            } else {
                self.d[j - 1] = h;
            }
            let xny = ss / (1.0 + cc);
            for row in 0..n {
                let t1 = self.j[(row, j - 1)];
                let t2 = self.j[(row, j)];
                let a = t1 * cc + t2 * ss;
                self.j[(row, j - 1)] = a;
                self.j[(row, j)] = xny * (t1 + a) - t2;
            }
        }
        if iq >= n {
            return false;
        }
        for i in 0..=iq {
            self.r[(i, iq)] = self.d[i];
        }
        if self.d[iq].abs() <= f64::EPSILON * self.r_norm {
            return false;
        }
        self.r_norm = self.r_norm.max(self.d[iq].abs());
        self.active.push(k);
        self.u.push(multiplier);
        self.in_active[k] = true;
        true
    }

    /// Drop active entry `l` and restore `R` to upper-triangular form.
    fn delete_constraint(&mut self, l: usize) {
        let n = self.d.len();
        let iq = self.active.len();
        let k = self.active.remove(l);
        self.u.remove(l);
        self.in_active[k] = false;
        for j in l..iq - 1 {
            for i in 0..n {
                self.r[(i, j)] = self.r[(i, j + 1)];
            }
        }
        for i in 0..n {
            self.r[(i, iq - 1)] = 0.0;
        }
        let iq = iq - 1;
        for j in l..iq {
            let (mut cc, mut ss) = (self.r[(j, j)], self.r[(j + 1, j)]);
            let h = cc.hypot(ss);
            if h == 0.0 {
                continue;
            }
            cc /= h;
            ss /= h;
            self.r[(j + 1, j)] = 0.0;
            if cc < 0.0 {
                self.r[(j, j)] = -h;
                cc = -cc;
                ss = -ss;
            } else {
                self.r[(j, j)] = h;
            }
            let xny = ss / (1.0 + cc);
            for col in j + 1..iq {
                let t1 = self.r[(j, col)];
                let t2 = self.r[(j + 1, col)];
                let a = t1 * cc + t2 * ss;
                self.r[(j, col)] = a;
                self.r[(j + 1, col)] = xny * (t1 + a) - t2;
            }
            for row in 0..n {
                let t1 = self.j[(row, j)];
                let t2 = self.j[(row, j + 1)];
                let a = t1 * cc + t2 * ss;
                self.j[(row, j)] = a;
                self.j[(row, j + 1)] = xny * (a + t1) - t2;
            }
        }
    }

    fn finish(&self, p: &QpProblem, x: DVector<f64>, status: QpStatus, iterations: usize) -> QpSolution {
        let mut multipliers = DVector::zeros(p.num_rows());
        let mut active_set = Vec::with_capacity(self.active.len());
        for (&k, &u) in self.active.iter().zip(&self.u) {
            let c = self.constraints[k];
            multipliers[c.row] += c.sign * u;
            active_set.push(ActiveBound { row: c.row, side: c.side });
        }
        active_set.sort();
        let objective = p.objective(&x);
        QpSolution {
            x,
            multipliers,
            active_set,
            status,
            iterations,
            objective,
        }
    }
}

/// Cholesky factor of `h`, adding a small diagonal shift when `h` is only
/// semidefinite. Returns the shift used.
fn factorize(h: &DMatrix<f64>) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, f64), QpError> {
    if let Some(c) = h.clone().cholesky() {
        return Ok((c, 0.0));
    }
    let n = h.nrows();
    let mut reg = 1e-10;
    while reg <= 1e-4 {
        let shifted = h + DMatrix::identity(n, n) * reg;
        if let Some(c) = shifted.cholesky() {
            warn!("QP hessian not positive definite; regularized with {reg:e} I");
            return Ok((c, reg));
        }
        reg *= 100.0;
    }
    Err(QpError::NotPositiveDefinite)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equality_and_inequality_mix() {
        // min (x-2)^2 + (y-2)^2  s.t. x + y = 1, x >= 0.8
        let p = QpProblem::new(
            DMatrix::identity(2, 2) * 2.0,
            DVector::from_vec(vec![-4.0, -4.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.8]),
            DVector::from_vec(vec![1.0, f64::INFINITY]),
        )
        .unwrap();
        let s = p.solve().unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 0.8).abs() < 1e-12 && (s.x[1] - 0.2).abs() < 1e-12);
        assert!(super::super::kkt_residual(&p, &s.x, &s.multipliers) < 1e-10);
    }

    #[test]
    fn detects_infeasible_bounds() {
        // x >= 1 and x <= 0 expressed on two rows
        let p = QpProblem::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0, -f64::INFINITY]),
            DVector::from_vec(vec![f64::INFINITY, 0.0]),
        )
        .unwrap();
        assert_eq!(p.solve().unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn upper_bound_multiplier_is_negative() {
        // min 1/2 x^2 - 3x s.t. x <= 1
        let p = QpProblem::new(
            DMatrix::identity(1, 1),
            DVector::from_element(1, -3.0),
            DMatrix::identity(1, 1),
            DVector::from_element(1, -1e20),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let s = p.solve().unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-14);
        assert!((s.multipliers[0] + 2.0).abs() < 1e-12);
        assert_eq!(s.active_set[0].side, BoundSide::Upper);
    }

    #[test]
    fn semidefinite_hessian_is_regularized() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p = QpProblem::new(
            h,
            DVector::from_vec(vec![-1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            DVector::from_element(1, 0.5),
            DVector::from_element(1, 2.0),
        )
        .unwrap();
        let s = p.solve().unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-6);
        assert!((0.5 - 1e-9..=2.0 + 1e-9).contains(&s.x[1]));
    }

    #[test]
    fn repeated_solves_are_bitwise_identical() {
        let p = QpProblem::new(
            DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]),
            DVector::from_vec(vec![1.0, -2.0, 0.5]),
            DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 1.0, -1.0, 0.0]),
            DVector::from_vec(vec![1.0, -0.2]),
            DVector::from_vec(vec![2.0, 0.2]),
        )
        .unwrap();
        let mut solver = QpSolver::new();
        let a = solver.solve(&p).unwrap();
        let b = solver.solve(&p).unwrap();
        let c = QpSolver::new().solve(&p).unwrap();
        assert_eq!(a.x.as_slice(), b.x.as_slice());
        assert_eq!(a.x.as_slice(), c.x.as_slice());
    }
}
