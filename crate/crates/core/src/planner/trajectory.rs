use std::io::Write;

use nalgebra::Vector3;

use super::polynomial::{build_cost_hessian, eval_poly, Coefficients};

/// Per-axis piecewise quintic over knots `T0 < T1 < ... < Tn`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseQuintic {
    knots: Vec<f64>,
    /// `axes[axis][segment]`, local-time coefficients.
    axes: [Vec<Coefficients>; 3],
}

impl PiecewiseQuintic {
    /// `knots` must have one more entry than each axis has segments.
    pub fn new(knots: Vec<f64>, axes: [Vec<Coefficients>; 3]) -> Self {
        assert!(knots.len() >= 2, "need at least one segment");
        assert!(axes.iter().all(|a| a.len() + 1 == knots.len()), "segment count mismatch");
        assert!(knots.windows(2).all(|w| w[1] > w[0]), "knots must increase");
        Self { knots, axes }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn coefficients(&self, axis: usize, segment: usize) -> &Coefficients {
        &self.axes[axis][segment]
    }

    pub fn start_time(&self) -> f64 {
        self.knots[0]
    }

    pub fn end_time(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let t = t.clamp(self.start_time(), self.end_time());
        let seg = self.knots[1..self.knots.len() - 1]
            .iter()
            .take_while(|&&k| k <= t)
            .count();
        (seg, t - self.knots[seg])
    }

    /// `order`-th derivative at `t` (clamped to the knot span).
    pub fn evaluate(&self, t: f64, order: usize) -> Vector3<f64> {
        let (seg, tau) = self.locate(t);
        Vector3::from_fn(|axis, _| eval_poly(&self.axes[axis][seg], tau, order))
    }

    /// `order`-th derivative of a given segment at its local time `tau`.
    pub fn evaluate_segment(&self, segment: usize, tau: f64, order: usize) -> Vector3<f64> {
        Vector3::from_fn(|axis, _| eval_poly(&self.axes[axis][segment], tau, order))
    }

    /// Integrated squared third derivative summed over axes.
    pub fn jerk_cost(&self) -> f64 {
        self.cost(3)
    }

    pub fn cost(&self, order: usize) -> f64 {
        let mut total = 0.0;
        for (seg, w) in self.knots.windows(2).enumerate() {
            let q = build_cost_hessian(w[1] - w[0], order);
            for axis in &self.axes {
                let c = nalgebra::Vector6::from_column_slice(&axis[seg]);
                total += c.dot(&(q * c));
            }
        }
        total
    }

    /// Samples at `rate_hz` from start to end inclusive.
    pub fn sample(&self, rate_hz: f64) -> Vec<(f64, [Vector3<f64>; 3])> {
        let dt = 1.0 / rate_hz;
        let steps = (self.duration() / dt + 1e-9).floor() as usize;
        let mut out: Vec<_> = (0..=steps)
            .map(|i| {
                let t = self.start_time() + i as f64 * dt;
                (t, [self.evaluate(t, 0), self.evaluate(t, 1), self.evaluate(t, 2)])
            })
            .collect();
        if let Some(&(last, _)) = out.last() {
            if self.end_time() - last > 1e-9 {
                let t = self.end_time();
                out.push((t, [self.evaluate(t, 0), self.evaluate(t, 1), self.evaluate(t, 2)]));
            }
        }
        out
    }

    /// CSV with columns `t,x,y,z,vx,vy,vz,ax,ay,az`.
    pub fn write_csv<W: Write>(&self, out: W, rate_hz: f64) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az"])?;
        for (t, [p, v, a]) in self.sample(rate_hz) {
            let mut rec = vec![t.to_string()];
            for vec in [p, v, a] {
                rec.extend(vec.iter().map(|x| x.to_string()));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_rest_to_rest() -> PiecewiseQuintic {
        let c = [0.0, 0.0, 0.0, 10.0, -15.0, 6.0];
        PiecewiseQuintic::new(vec![0.0, 1.0], [vec![c], vec![[0.0; 6]], vec![[0.0; 6]]])
    }

    #[test]
    fn midpoint_and_clamping() {
        let tr = unit_rest_to_rest();
        assert!((tr.evaluate(0.5, 0).x - 0.5).abs() < 1e-15);
        assert_eq!(tr.evaluate(-1.0, 0), tr.evaluate(0.0, 0));
        assert_eq!(tr.evaluate(5.0, 0), tr.evaluate(1.0, 0));
        assert!((tr.evaluate(1.0, 0).x - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_has_expected_shape() {
        let tr = unit_rest_to_rest();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, 1000.0).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x,y,z,vx,vy,vz,ax,ay,az");
        assert_eq!(lines.count(), 1001);
    }

    #[test]
    #[should_panic(expected = "knots must increase")]
    fn rejects_non_increasing_knots() {
        PiecewiseQuintic::new(vec![0.0, 0.0], [vec![[0.0; 6]], vec![[0.0; 6]], vec![[0.0; 6]]]);
    }
}
