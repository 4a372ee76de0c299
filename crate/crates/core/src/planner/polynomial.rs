//! Quintic segment algebra and the closed-form minimum-derivative spline.
//!
//! Each segment is a quintic in local time `tau = t - T_{j-1}`. A segment is
//! fully described by its endpoint derivatives
//! `d = [s(0), s'(0), s''(0), s(T), s'(T), s''(T)]`, related to the
//! coefficients by `d = M(T) c`. With `W = M^-T Q M^-1` the segment cost is
//! `d' W d`, so the spline cost is a quadratic form in the knot derivatives.
//! Endpoint derivatives and interior positions are fixed; interior
//! velocities and accelerations are free and minimize the cost in closed
//! form.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix6};

use crate::error::PlanError;

/// Quintic coefficients `[c0, ..., c5]` in local time.
pub type Coefficients = [f64; 6];

/// Condition estimate above which the free block is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// `i! / (i - k)!`, zero when `i < k`.
fn falling(i: usize, k: usize) -> f64 {
    if i < k {
        return 0.0;
    }
    ((i - k + 1)..=i).map(|v| v as f64).product()
}

/// Hessian of `integral_0^T (s^(order))^2 dt` with respect to the coefficients.
pub fn build_cost_hessian(t: f64, order: usize) -> Matrix6<f64> {
    Matrix6::from_fn(|i, j| {
        if i < order || j < order {
            return 0.0;
        }
        let p = (i + j + 1 - 2 * order) as i32;
        falling(i, order) * falling(j, order) * t.powi(p) / p as f64
    })
}

/// Squared-jerk cost matrix: `Q[i][j] = i(i-1)(i-2) j(j-1)(j-2) T^(i+j-5) / (i+j-5)`.
pub fn build_jerk_hessian(t: f64) -> Matrix6<f64> {
    build_cost_hessian(t, 3)
}

/// Maps coefficients to `[s(0), s'(0), s''(0), s(T), s'(T), s''(T)]`.
pub fn build_mapping_matrix(t: f64) -> Matrix6<f64> {
    Matrix6::from_fn(|row, i| {
        let (k, at_end) = (row % 3, row >= 3);
        if at_end {
            if i < k {
                0.0
            } else {
                falling(i, k) * t.powi((i - k) as i32)
            }
        } else if i == k {
            falling(i, k)
        } else {
            0.0
        }
    })
}

/// Inverse of [`build_mapping_matrix`]. `M(T) = K^-1 M(1) P^-1` with
/// `K = diag(1, T, T^2, 1, T, T^2)` and `P = diag(T^i)`, so only the unit
/// matrix is inverted numerically; a direct inverse loses digits for short
/// segments.
pub fn mapping_inverse(t: f64) -> Option<Matrix6<f64>> {
    if !(t > 0.0 && t.is_finite()) {
        return None;
    }
    let unit = build_mapping_matrix(1.0).try_inverse()?;
    Some(Matrix6::from_fn(|i, r| unit[(i, r)] * t.powi((r % 3) as i32 - i as i32)))
}

/// Coefficients of the quintic with endpoint derivatives `d` over `[0, t]`.
pub fn quintic_from_endpoints(d: &[f64; 6], t: f64) -> Coefficients {
    let m_inv = mapping_inverse(t).expect("mapping matrix is invertible for t > 0");
    let rel = nalgebra::Vector6::new(0.0, d[1], d[2], d[3] - d[0], d[4], d[5]);
    let mut c: Coefficients = (m_inv * rel).into();
    c[0] = d[0];
    c
}

/// `k`-th derivative of a quintic at local time `tau`.
pub fn eval_poly(c: &Coefficients, tau: f64, k: usize) -> f64 {
    if k > 5 {
        return 0.0;
    }
    // Horner on the differentiated coefficients.
    let mut acc = 0.0;
    for i in (k..6).rev() {
        acc = acc * tau + falling(i, k) * c[i];
    }
    acc
}

/// Cost matrices for a spline with fixed segment durations.
///
/// Knot derivatives are ordered knot-major: `[p0, v0, a0, p1, v1, a1, ...]`.
/// The fixed set is every derivative at the first and last knot plus the
/// position of each interior knot; the free set is the velocity and
/// acceleration of each interior knot.
#[derive(Debug, Clone)]
pub struct JerkCostMatrices {
    pub durations: Vec<f64>,
    pub order: usize,
    /// Per-segment coefficient cost `Q_j`.
    pub q: Vec<Matrix6<f64>>,
    /// Per-segment mapping `M_j`.
    pub m: Vec<Matrix6<f64>>,
    m_inv: Vec<Matrix6<f64>>,
    /// Indices of fixed and free entries in the knot-derivative vector; the
    /// selection `C` stacks fixed entries first.
    pub fixed_idx: Vec<usize>,
    pub free_idx: Vec<usize>,
    pub r_pp: DMatrix<f64>,
    pub r_fp: DMatrix<f64>,
    /// Per-segment cost over endpoint derivatives, `M^-T Q M^-1`.
    w: Vec<Matrix6<f64>>,
    /// Cholesky factor of the Jacobi-scaled `R_pp` and the scaling.
    chol: Option<Cholesky<f64, Dyn>>,
    scale: DVector<f64>,
    pub condition: f64,
}

impl JerkCostMatrices {
    pub fn new(durations: &[f64], order: usize) -> Result<Self, PlanError> {
        if durations.is_empty() {
            return Err(PlanError::InvalidInput("no segments".into()));
        }
        if let Some(t) = durations.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(PlanError::InvalidInput(format!("segment duration {t} must be positive")));
        }
        if !(1..=5).contains(&order) {
            return Err(PlanError::InvalidInput(format!("cost order {order} not in 1..=5")));
        }
        let n = durations.len();
        let dim = 3 * (n + 1);
        let q: Vec<_> = durations.iter().map(|&t| build_cost_hessian(t, order)).collect();
        let m: Vec<_> = durations.iter().map(|&t| build_mapping_matrix(t)).collect();
        let m_inv: Vec<_> = durations
            .iter()
            .map(|&t| mapping_inverse(t).ok_or(PlanError::IllConditioned(f64::INFINITY)))
            .collect::<Result<_, _>>()?;

        // Full cost over knot derivatives: segment j touches entries 3j..3j+6.
        // W(T) = T^(1 - 2 order) K W(1) K with K = diag(1, T, T^2, 1, T, T^2);
        // forming M^-T Q M^-1 directly cancels badly for short segments.
        let unit_inv = mapping_inverse(1.0).ok_or(PlanError::IllConditioned(f64::INFINITY))?;
        let w1 = unit_inv.transpose() * build_cost_hessian(1.0, order) * unit_inv;
        let w: Vec<Matrix6<f64>> = durations
            .iter()
            .map(|&t| Matrix6::from_fn(|r, c| w1[(r, c)] * t.powi((r % 3 + c % 3) as i32 + 1 - 2 * order as i32)))
            .collect();
        let mut k = DMatrix::<f64>::zeros(dim, dim);
        for (j, wj) in w.iter().enumerate() {
            let mut block = k.view_mut((3 * j, 3 * j), (6, 6));
            block += wj;
        }

        let is_fixed = |idx: usize| {
            let (knot, deriv) = (idx / 3, idx % 3);
            knot == 0 || knot == n || deriv == 0
        };
        let fixed_idx: Vec<usize> = (0..dim).filter(|&i| is_fixed(i)).collect();
        let free_idx: Vec<usize> = (0..dim).filter(|&i| !is_fixed(i)).collect();
        let r_pp = k.select_rows(&free_idx).select_columns(&free_idx);
        let r_fp = k.select_rows(&fixed_idx).select_columns(&free_idx);

        let (chol, scale, condition) = if free_idx.is_empty() {
            (None, DVector::zeros(0), 1.0)
        } else {
            let eig = r_pp.clone().symmetric_eigen();
            let (lo, hi) = eig
                .eigenvalues
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v.abs())));
            let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            if condition > MAX_CONDITION {
                return Err(PlanError::IllConditioned(condition));
            }
            // Jacobi scaling: velocity and acceleration entries differ by orders of magnitude.
            let d = r_pp.diagonal().map(|v| 1.0 / v.sqrt());
            let scaled = DMatrix::from_fn(r_pp.nrows(), r_pp.ncols(), |i, j| d[i] * r_pp[(i, j)] * d[j]);
            let chol = scaled.cholesky().ok_or(PlanError::IllConditioned(condition))?;
            (Some(chol), d, condition)
        };

        Ok(Self {
            durations: durations.to_vec(),
            order,
            q,
            m,
            m_inv,
            fixed_idx,
            free_idx,
            r_pp,
            r_fp,
            w,
            chol,
            scale,
            condition,
        })
    }

    pub fn segments(&self) -> usize {
        self.durations.len()
    }

    /// Optimal free derivatives for the given fixed values (ordered as `fixed_idx`).
    ///
    /// This is `-R_pp^-1 R_fp^T fixed`. The product `R_fp^T fixed` is summed
    /// segment by segment on positions relative to the segment start (each
    /// segment cost is translation invariant), which avoids cancelling
    /// `1/T^5`-sized terms on absolute positions.
    pub fn solve_free(&self, fixed: &DVector<f64>) -> DVector<f64> {
        let Some(chol) = &self.chol else {
            return DVector::zeros(0);
        };
        let solve = |g: DVector<f64>| -chol.solve(&g.component_mul(&self.scale)).component_mul(&self.scale);
        let mut free = solve(self.free_gradient(fixed, &DVector::zeros(self.free_idx.len())));
        // One refinement step on the stationarity residual.
        free += solve(self.free_gradient(fixed, &free));
        free
    }

    /// Cost gradient with respect to the free derivatives, summed segment by
    /// segment on positions relative to the segment start.
    fn free_gradient(&self, fixed: &DVector<f64>, free: &DVector<f64>) -> DVector<f64> {
        let knots = self.knot_derivatives(fixed, free);
        let mut grad = DVector::<f64>::zeros(knots.len());
        for (j, wj) in self.w.iter().enumerate() {
            let base = knots[3 * j];
            let mut d = nalgebra::Vector6::from_fn(|r, _| knots[3 * j + r]);
            d[0] = 0.0;
            d[3] -= base;
            let mut block = grad.rows_mut(3 * j, 6);
            block += wj * d;
        }
        grad.select_rows(&self.free_idx)
    }

    /// Assemble the full knot-derivative vector from fixed and free parts.
    pub fn knot_derivatives(&self, fixed: &DVector<f64>, free: &DVector<f64>) -> DVector<f64> {
        let mut all = DVector::zeros(3 * (self.segments() + 1));
        for (v, &i) in fixed.iter().zip(&self.fixed_idx) {
            all[i] = *v;
        }
        for (v, &i) in free.iter().zip(&self.free_idx) {
            all[i] = *v;
        }
        all
    }

    /// Segment coefficients from a full knot-derivative vector.
    ///
    /// Each segment is mapped relative to its start position, so the `1/T^5`
    /// entries of `M^-1` multiply a small position difference rather than
    /// absolute positions.
    pub fn coefficients(&self, knots: &DVector<f64>) -> Vec<Coefficients> {
        (0..self.segments())
            .map(|j| {
                let base = knots[3 * j];
                let mut d = nalgebra::Vector6::from_fn(|r, _| knots[3 * j + r]);
                d[0] = 0.0;
                d[3] -= base;
                let mut c: Coefficients = (self.m_inv[j] * d).into();
                c[0] = base;
                c
            })
            .collect()
    }

    /// Minimum-cost coefficients for one axis.
    ///
    /// For the jerk cost the single quintic `q` through the boundary states is
    /// its own optimal spline, so by linearity the solution is `q` plus the
    /// spline of the residual data (zero boundary derivatives, interior
    /// positions minus `q`). Solving only the residual keeps round-off
    /// proportional to how far the waypoints are from `q`; for short segments
    /// the knot-derivative form otherwise amplifies one ulp of a velocity by
    /// `~1/T^4` in the quintic coefficient.
    pub fn solve_axis(&self, fixed: &DVector<f64>) -> Vec<Coefficients> {
        if self.order != 3 {
            let free = self.solve_free(fixed);
            return self.coefficients(&self.knot_derivatives(fixed, &free));
        }
        let nf = fixed.len();
        let ends = [fixed[0], fixed[1], fixed[2], fixed[nf - 3], fixed[nf - 2], fixed[nf - 1]];
        let q = quintic_from_endpoints(&ends, self.durations.iter().sum());
        let starts: Vec<f64> = self
            .durations
            .iter()
            .scan(0.0, |t, &d| {
                let t0 = *t;
                *t += d;
                Some(t0)
            })
            .collect();
        let mut residual = DVector::zeros(nf);
        for (k, t) in starts.iter().skip(1).enumerate() {
            residual[3 + k] = fixed[3 + k] - eval_poly(&q, *t, 0);
        }
        let free = self.solve_free(&residual);
        let mut coeffs = self.coefficients(&self.knot_derivatives(&residual, &free));
        for (c, t) in coeffs.iter_mut().zip(&starts) {
            // Taylor expansion of q about the segment start.
            let mut fact = 1.0;
            for (i, ci) in c.iter_mut().enumerate() {
                if i > 1 {
                    fact *= i as f64;
                }
                *ci += eval_poly(&q, *t, i) / fact;
            }
        }
        coeffs
    }

    /// Total cost of a coefficient set under these durations.
    pub fn cost(&self, coeffs: &[Coefficients]) -> f64 {
        coeffs
            .iter()
            .zip(&self.q)
            .map(|(c, q)| {
                let c = nalgebra::Vector6::from_column_slice(c);
                c.dot(&(q * c))
            })
            .sum()
    }
}

/// Fixed derivative values for one axis, in `fixed_idx` order:
/// start `(p, v, a)`, interior positions, end `(p, v, a)`.
pub fn fixed_vector(start: [f64; 3], interior: &[f64], end: [f64; 3]) -> DVector<f64> {
    let mut v = Vec::with_capacity(6 + interior.len());
    v.extend_from_slice(&start);
    v.extend_from_slice(interior);
    v.extend_from_slice(&end);
    DVector::from_vec(v)
}

/// Closed-form minimum-cost spline coefficients for one axis.
pub fn solve_closed_form(
    fixed: &DVector<f64>,
    durations: &[f64],
    order: usize,
) -> Result<Vec<Coefficients>, PlanError> {
    let mats = JerkCostMatrices::new(durations, order)?;
    if fixed.len() != mats.fixed_idx.len() {
        return Err(PlanError::InvalidInput(format!(
            "expected {} fixed derivatives, got {}",
            mats.fixed_idx.len(),
            fixed.len()
        )));
    }
    Ok(mats.solve_axis(fixed))
}
