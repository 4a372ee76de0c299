//! Dense strictly convex quadratic programs with double-bounded rows:
//!
//! ```text
//!     minimize    1/2 x' H x + g' x
//!     subject to  lower <= G x <= upper
//! ```
//!
//! Rows with `lower == upper` are equalities; bounds beyond `+-1e19` are
//! treated as absent.

mod solver;
mod text;

pub use solver::QpSolver;
pub use text::ParseError;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Bounds with magnitude at or beyond this are ignored.
pub const INFINITE_BOUND: f64 = 1e19;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("hessian is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("row {0}: lower bound exceeds upper bound")]
    CrossedBounds(usize),
    #[error("hessian is not positive definite even after regularization")]
    NotPositiveDefinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        h: DMatrix<f64>,
        g: DVector<f64>,
        a: DMatrix<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self, QpError> {
        let n = g.len();
        if h.nrows() != n || h.ncols() != n {
            return Err(QpError::Dimension(format!(
                "H is {}x{}, expected {n}x{n}",
                h.nrows(),
                h.ncols()
            )));
        }
        let m = a.nrows();
        if a.ncols() != n && m > 0 {
            return Err(QpError::Dimension(format!("G has {} columns, expected {n}", a.ncols())));
        }
        if lower.len() != m || upper.len() != m {
            return Err(QpError::Dimension("bound lengths differ from G rows".into()));
        }
        let asym = (&h - h.transpose()).amax();
        if asym > 1e-12 * (1.0 + h.amax()) {
            return Err(QpError::NotSymmetric(asym));
        }
        if let Some(i) = (0..m).find(|&i| lower[i] > upper[i]) {
            return Err(QpError::CrossedBounds(i));
        }
        Ok(Self { h, g, a, lower, upper })
    }

    /// Problem without constraints.
    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Result<Self, QpError> {
        let n = g.len();
        Self::new(h, g, DMatrix::zeros(0, n), DVector::zeros(0), DVector::zeros(0))
    }

    pub fn num_vars(&self) -> usize {
        self.g.len()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    /// Largest bound violation of `G x` (0 when feasible).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let gx = &self.a * x;
        (0..self.num_rows())
            .map(|i| {
                let lo = if self.lower[i] > -INFINITE_BOUND { self.lower[i] - gx[i] } else { 0.0 };
                let hi = if self.upper[i] < INFINITE_BOUND { gx[i] - self.upper[i] } else { 0.0 };
                lo.max(hi).max(0.0)
            })
            .fold(0.0, f64::max)
    }

    pub fn solve(&self) -> Result<QpSolution, QpError> {
        QpSolver::new().solve(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundSide {
    Lower,
    Upper,
    Equality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActiveBound {
    pub row: usize,
    pub side: BoundSide,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Signed row multipliers: positive when the lower bound binds, negative
    /// for the upper bound, so that `H x + g = G' * multipliers`.
    pub multipliers: DVector<f64>,
    /// Sorted by row.
    pub active_set: Vec<ActiveBound>,
    pub status: QpStatus,
    /// Number of active-set changes.
    pub iterations: usize,
    pub objective: f64,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Max-norm of the stationarity, complementarity and primal-feasibility
/// residuals for a candidate `(x, multipliers)`.
pub fn kkt_residual(problem: &QpProblem, x: &DVector<f64>, multipliers: &DVector<f64>) -> f64 {
    let stationarity = &problem.h * x + &problem.g - problem.a.transpose() * multipliers;
    let mut worst = stationarity.amax();
    let gx = &problem.a * x;
    for i in 0..problem.num_rows() {
        let lam = multipliers[i];
        let comp = if problem.lower[i] == problem.upper[i] {
            0.0
        } else if lam > 0.0 {
            if problem.lower[i] <= -INFINITE_BOUND {
                lam
            } else {
                lam * (gx[i] - problem.lower[i])
            }
        } else if lam < 0.0 {
            if problem.upper[i] >= INFINITE_BOUND {
                -lam
            } else {
                -lam * (problem.upper[i] - gx[i])
            }
        } else {
            0.0
        };
        worst = worst.max(comp.abs());
    }
    worst.max(problem.max_violation(x))
}
