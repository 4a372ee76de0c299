//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector3};
use omnijump_core::planner::{build_jerk_hessian, Coefficients};
use omnijump_core::{BoundaryState, CommandRanges, QpProblem};
use rand::Rng;

/// Minimum-jerk spline by solving the dense KKT system over all 6n
/// coefficients: fixed start/end derivatives, interior positions on both
/// sides of each knot, and velocity/acceleration continuity as equalities.
///
/// Each segment is solved in normalized time `u = tau / T` (coefficients
/// `b_i = c_i T^i`), which keeps the system well scaled for short segments.
pub fn kkt_spline(durations: &[f64], start: [f64; 3], interior: &[f64], end: [f64; 3]) -> Vec<Coefficients> {
    let n = durations.len();
    assert_eq!(interior.len(), n - 1);
    let nv = 6 * n;
    let mut h = DMatrix::<f64>::zeros(nv, nv);
    for (j, &t) in durations.iter().enumerate() {
        // integral over u in [0, 1] of (d^3/du^3)^2, times T^-5 from the change of variable
        h.view_mut((6 * j, 6 * j), (6, 6)).copy_from(&(build_jerk_hessian(1.0) * t.powi(-5)));
    }
    // Row of the k-th time derivative of segment j at normalized time u.
    let row = |j: usize, u: f64, k: usize| {
        let mut r = DVector::<f64>::zeros(nv);
        for i in k..6 {
            let fall: f64 = ((i - k + 1)..=i).map(|v| v as f64).product();
            r[6 * j + i] = fall * u.powi((i - k) as i32) / durations[j].powi(k as i32);
        }
        r
    };
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for k in 0..3 {
        rows.push(row(0, 0.0, k));
        rhs.push(start[k]);
        rows.push(row(n - 1, 1.0, k));
        rhs.push(end[k]);
    }
    for j in 0..n - 1 {
        rows.push(row(j, 1.0, 0));
        rhs.push(interior[j]);
        rows.push(row(j + 1, 0.0, 0));
        rhs.push(interior[j]);
        for k in 1..3 {
            rows.push(row(j, 1.0, k) - row(j + 1, 0.0, k));
            rhs.push(0.0);
        }
    }
    let m = rows.len();
    let mut kkt = DMatrix::<f64>::zeros(nv + m, nv + m);
    kkt.view_mut((0, 0), (nv, nv)).copy_from(&h);
    for (i, r) in rows.iter().enumerate() {
        for c in 0..nv {
            kkt[(nv + i, c)] = r[c];
            kkt[(c, nv + i)] = r[c];
        }
    }
    let mut b = DVector::<f64>::zeros(nv + m);
    for (i, v) in rhs.iter().enumerate() {
        b[nv + i] = *v;
    }
    let sol = kkt.full_piv_lu().solve(&b).expect("KKT system is nonsingular");
    (0..n)
        .map(|j| std::array::from_fn(|i| sol[6 * j + i] / durations[j].powi(i as i32)))
        .collect()
}

pub fn uniform3(rng: &mut impl Rng, r: &[[f64; 2]; 3]) -> Vector3<f64> {
    Vector3::from_fn(|i, _| rng.random_range(r[i][0]..=r[i][1]))
}

/// Start at rest at stance height; end state uniform over the command ranges.
pub fn random_jump(rng: &mut impl Rng) -> (BoundaryState, BoundaryState) {
    let ranges = CommandRanges::default();
    let start = BoundaryState::at_rest(Vector3::new(0.0, 0.0, 0.3));
    let end = BoundaryState {
        p: start.p + uniform3(rng, &ranges.position),
        v: uniform3(rng, &ranges.velocity),
        a: uniform3(rng, &ranges.acceleration),
    };
    (start, end)
}

pub fn max_abs_diff(a: &[Coefficients], b: &[Coefficients]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Random feasible strictly convex QP with `n` variables and `m` rows.
/// Rows are a mix of two-sided, one-sided, unbounded and equality rows
/// around a known feasible point.
pub fn random_qp(rng: &mut impl Rng, n: usize, m: usize) -> QpProblem {
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * rng.random_range(0.05..1.0);
    let g = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let ax = &a * &x0;
    let mut lower = DVector::zeros(m);
    let mut upper = DVector::zeros(m);
    let mut equalities = 0;
    for i in 0..m {
        let (lo, hi) = (ax[i] - rng.random_range(0.0..1.0), ax[i] + rng.random_range(0.0..1.0));
        let kind = rng.random_range(0..10);
        (lower[i], upper[i]) = match kind {
            0 if equalities < n / 2 => {
                equalities += 1;
                (ax[i], ax[i])
            }
            1 | 2 => (lo, 1e20),
            3 | 4 => (-1e20, hi),
            5 => (-1e20, 1e20),
            _ => (lo, hi),
        };
    }
    QpProblem::new(h, g, a, lower, upper).expect("valid problem")
}

/// Exhaustive active-set enumeration: every assignment of each row to
/// inactive / lower / upper, solved as an equality-constrained QP; the best
/// primal-feasible stationary point is the optimum of a strictly convex QP.
pub fn enumerate_qp(p: &QpProblem) -> Option<DVector<f64>> {
    let (n, m) = (p.num_vars(), p.num_rows());
    let finite = |v: f64| v.abs() < omnijump_core::qp::INFINITE_BOUND;
    let mut best: Option<(f64, DVector<f64>)> = None;
    let total = 3usize.pow(m as u32);
    'sets: for code in 0..total {
        let mut rows = Vec::new();
        let mut c = code;
        for i in 0..m {
            let choice = c % 3;
            c /= 3;
            let eq = p.lower[i] == p.upper[i];
            match (choice, eq) {
                (0, true) => continue 'sets,
                (0, false) => {}
                (1, _) if finite(p.lower[i]) => rows.push((i, p.lower[i])),
                (2, false) if finite(p.upper[i]) => rows.push((i, p.upper[i])),
                _ => continue 'sets,
            }
        }
        let k = rows.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::<f64>::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        let mut b = DVector::<f64>::zeros(n + k);
        b.rows_mut(0, n).copy_from(&(-&p.g));
        for (r, &(i, v)) in rows.iter().enumerate() {
            for col in 0..n {
                kkt[(n + r, col)] = p.a[(i, col)];
                kkt[(col, n + r)] = p.a[(i, col)];
            }
            b[n + r] = v;
        }
        let lu = kkt.full_piv_lu();
        if !lu.is_invertible() {
            continue;
        }
        let Some(sol) = lu.solve(&b) else { continue };
        let x = sol.rows(0, n).into_owned();
        if p.max_violation(&x) > 1e-9 {
            continue;
        }
        let f = p.objective(&x);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.map(|(_, x)| x)
}
