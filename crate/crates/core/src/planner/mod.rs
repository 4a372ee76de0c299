//! Minimum-jerk CoM trajectory planning.
//!
//! A jump is planned as three quintic segments per axis. Segment durations
//! come from a trapezoidal velocity profile over the straight-line
//! displacement; horizontal interior knot positions sit on that line at the
//! distance fractions covered by each phase. Vertical knot positions follow
//! the single quintic over the whole horizon by default, which leaves the
//! crouch the full preparing time (see [`VerticalWaypoints`]).

mod polynomial;
mod trajectory;

pub use polynomial::{
    build_cost_hessian, build_jerk_hessian, build_mapping_matrix, eval_poly, fixed_vector, mapping_inverse,
    quintic_from_endpoints, solve_closed_form, Coefficients, JerkCostMatrices, MAX_CONDITION,
};
pub use trajectory::PiecewiseQuintic;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::PlanError;

/// Shortest allowed segment, s.
pub const DURATION_FLOOR: f64 = 0.02;

/// Position, velocity and acceleration of the CoM at a trajectory endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundaryState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
}

impl BoundaryState {
    pub fn at_rest(p: Vector3<f64>) -> Self {
        Self { p, ..Self::default() }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.v.iter()).chain(self.a.iter()).all(|v| v.is_finite())
    }
}

/// Closed intervals on the commanded end state. Position is relative to the
/// start; velocity and acceleration are absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommandRanges {
    pub position: [[f64; 2]; 3],
    pub velocity: [[f64; 2]; 3],
    pub acceleration: [[f64; 2]; 3],
}

impl Default for CommandRanges {
    fn default() -> Self {
        Self {
            position: [[-0.15, 0.15], [-0.1, 0.1], [-0.05, 0.05]],
            velocity: [[-0.3, 0.3], [-0.16, 0.16], [1.5, 3.5]],
            acceleration: [[-20.0, 20.0], [-20.0, 20.0], [10.0, 40.0]],
        }
    }
}

impl CommandRanges {
    /// Checks `displacement`, `velocity` and `acceleration` against the ranges.
    pub fn check(&self, relative: &BoundaryState) -> Result<(), PlanError> {
        const NAMES: [[&str; 3]; 3] = [
            ["dx", "dy", "dz"],
            ["vx", "vy", "vz"],
            ["ax", "ay", "az"],
        ];
        let groups = [
            (&self.position, &relative.p),
            (&self.velocity, &relative.v),
            (&self.acceleration, &relative.a),
        ];
        for (g, (ranges, values)) in groups.into_iter().enumerate() {
            for axis in 0..3 {
                let [lo, hi] = ranges[axis];
                let v = values[axis];
                let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
                if !(v >= lo - slack && v <= hi + slack) {
                    return Err(PlanError::CommandOutOfRange {
                        field: NAMES[g][axis],
                        value: v,
                        min: lo,
                        max: hi,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// How vertical interior knot positions are chosen.
    pub vertical_waypoints: VerticalWaypoints,
    /// Cruise speed for time allocation, m/s.
    pub v_max: f64,
    /// Acceleration for time allocation, m/s^2.
    pub a_max: f64,
    pub duration_floor: f64,
    /// Allocations shorter than this get the difference added to the last segment, s.
    pub min_total_duration: f64,
    /// Derivative order of the cost (3 = jerk).
    pub cost_order: usize,
    pub ranges: CommandRanges,
}

/// Placement of the vertical coordinate of the interior knots.
///
/// `Line` keeps it on the start-to-end line like the horizontal axes. For a
/// level jump that pins the height at both interior knots, so the whole crouch
/// has to fit in the last segment, and short horizontal allocations then ask
/// for more than free-fall acceleration. `Quintic` samples the single
/// minimum-jerk quintic between the two boundary states instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerticalWaypoints {
    Line,
    Quintic,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            vertical_waypoints: VerticalWaypoints::Quintic,
            v_max: 0.8,
            a_max: 12.0,
            duration_floor: DURATION_FLOOR,
            min_total_duration: 0.48,
            cost_order: 3,
            ranges: CommandRanges::default(),
        }
    }
}

/// Trapezoidal time allocation: `[t_acc, t_cruise, t_dec]` with the default floor.
pub fn allocate_times(p_start: &Vector3<f64>, p_end: &Vector3<f64>, v_max: f64, a_max: f64) -> [f64; 3] {
    trapezoid(p_start, p_end, v_max, a_max, DURATION_FLOOR).durations
}

/// Phase durations and the distance fractions reached at the two phase boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trapezoid {
    pub durations: [f64; 3],
    pub fractions: [f64; 2],
}

pub fn trapezoid(p_start: &Vector3<f64>, p_end: &Vector3<f64>, v_max: f64, a_max: f64, floor: f64) -> Trapezoid {
    let d = (p_end - p_start).norm();
    if d <= 1e-12 {
        return Trapezoid {
            durations: [floor; 3],
            fractions: [0.0, 0.0],
        };
    }
    let t_ramp = v_max / a_max;
    let d_ramp = 0.5 * a_max * t_ramp * t_ramp;
    if 2.0 * d_ramp >= d {
        let v_peak = (a_max * d).sqrt();
        let t = (v_peak / a_max).max(floor);
        Trapezoid {
            durations: [t, floor, t],
            fractions: [0.5, 0.5],
        }
    } else {
        let t_cruise = (d - 2.0 * d_ramp) / v_max;
        Trapezoid {
            durations: [t_ramp.max(floor), t_cruise.max(floor), t_ramp.max(floor)],
            fractions: [d_ramp / d, 1.0 - d_ramp / d],
        }
    }
}

/// Lengthens the last segment so the total reaches `min_total`. The last
/// segment carries the push-off toward the end velocity, so extra time there
/// lowers the peak accelerations the most.
pub fn stretch_final(mut durations: [f64; 3], min_total: f64) -> [f64; 3] {
    let total: f64 = durations.iter().sum();
    if total < min_total {
        durations[2] += min_total - total;
    }
    durations
}

impl Trapezoid {
    /// Lengthens the deceleration phase (see [`stretch_final`]) at the same
    /// peak speed, so the distance it covers grows with its duration and the
    /// boundary fractions move earlier.
    pub fn stretched(&self, min_total: f64) -> Trapezoid {
        let durations = stretch_final(self.durations, min_total);
        let scale = durations[2] / self.durations[2];
        let [f1, f2] = self.fractions;
        let total = f2 + (1.0 - f2) * scale;
        if total <= 0.0 {
            return Trapezoid { durations, ..*self };
        }
        Trapezoid {
            durations,
            fractions: [f1 / total, f2 / total],
        }
    }
}

/// Plans a three-segment minimum-cost trajectory starting at t = 0 without
/// checking command ranges.
pub fn plan_trajectory(
    start: &BoundaryState,
    end: &BoundaryState,
    cfg: &PlannerConfig,
) -> Result<PiecewiseQuintic, PlanError> {
    if !start.is_finite() || !end.is_finite() {
        return Err(PlanError::InvalidInput("non-finite boundary state".into()));
    }
    if !(cfg.v_max > 0.0 && cfg.a_max > 0.0 && cfg.duration_floor > 0.0) {
        return Err(PlanError::InvalidInput("v_max, a_max and duration_floor must be positive".into()));
    }
    let trap = trapezoid(&start.p, &end.p, cfg.v_max, cfg.a_max, cfg.duration_floor).stretched(cfg.min_total_duration);
    let durations = trap.durations;

    let mats = JerkCostMatrices::new(&durations, cfg.cost_order)?;
    let mut waypoints = trap.fractions.map(|f| start.p + (end.p - start.p) * f);
    if cfg.vertical_waypoints == VerticalWaypoints::Quintic {
        let total: f64 = durations.iter().sum();
        let d = [start.p.z, start.v.z, start.a.z, end.p.z, end.v.z, end.a.z];
        let c = quintic_from_endpoints(&d, total);
        waypoints[0].z = eval_poly(&c, durations[0], 0);
        waypoints[1].z = eval_poly(&c, durations[0] + durations[1], 0);
    }
    let axes = std::array::from_fn(|axis| {
        let fixed = fixed_vector(
            [start.p[axis], start.v[axis], start.a[axis]],
            &[waypoints[0][axis], waypoints[1][axis]],
            [end.p[axis], end.v[axis], end.a[axis]],
        );
        mats.solve_axis(&fixed)
    });
    let mut knots = vec![0.0];
    for t in durations {
        knots.push(knots.last().unwrap() + t);
    }
    Ok(PiecewiseQuintic::new(knots, axes))
}

/// Checks `end` (relative to `start`) against the configured command ranges,
/// then plans.
pub fn plan_jump_trajectory(
    start: &BoundaryState,
    end: &BoundaryState,
    cfg: &PlannerConfig,
) -> Result<PiecewiseQuintic, PlanError> {
    let relative = BoundaryState {
        p: end.p - start.p,
        ..*end
    };
    cfg.ranges.check(&relative)?;
    plan_trajectory(start, end, cfg)
}
