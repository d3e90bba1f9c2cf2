//! Linear-programming bounds on the grasp metric from polyhedral friction
//! cones: an inscribed polygon gives a lower bound, a circumscribed one an upper bound.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::Vector3;
use screwgrasp::metric::TaskInstance;

type V3 = Vector3<f64>;

fn basis(n: &V3) -> (V3, V3) {
    let seed = if n.x.abs() < 0.9 { V3::x() } else { V3::y() };
    let t1 = (seed - n * n.dot(&seed)).normalize();
    (t1, n.cross(&t1))
}

/// Maximum moment about the screw with each friction cone replaced by a
/// `sides`-gon pyramid; `None` when the LP is infeasible.
pub fn polyhedral_eta(t: &TaskInstance, sides: usize, outer: bool) -> Option<f64> {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let lambda = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    let l = t.screw.direction();
    let p = t.screw.point_on_line();
    let weight = t.gravity * t.mass;
    let gravity_moment = (t.com - p).cross(&weight);

    let mut rows: Vec<Vec<(microlp::Variable, f64)>> = vec![Vec::new(); 6];
    for j in 0..3 {
        rows[3 + j].push((lambda, -l[j]));
    }
    let radius_scale = if outer {
        1.0 / (std::f64::consts::PI / sides as f64).cos()
    } else {
        1.0
    };
    for c in t.contacts() {
        let n = c.inward_normal;
        let (t1, t2) = basis(&n);
        let arm = c.position - p;
        let mut weights = Vec::with_capacity(sides);
        for s in 0..sides {
            let theta = 2.0 * std::f64::consts::PI * s as f64 / sides as f64;
            let g = n + (t1 * theta.cos() + t2 * theta.sin()) * (c.mu * radius_scale);
            let mom = arm.cross(&g);
            let a = lp.add_var(0.0, (0.0, f64::INFINITY));
            for j in 0..3 {
                rows[j].push((a, g[j]));
                rows[3 + j].push((a, mom[j]));
            }
            weights.push((a, 1.0));
        }
        lp.add_constraint(&weights, ComparisonOp::Le, c.f_normal_max);
    }
    for j in 0..3 {
        lp.add_constraint(&rows[j], ComparisonOp::Eq, -weight[j]);
        lp.add_constraint(&rows[3 + j], ComparisonOp::Eq, -gravity_moment[j]);
    }
    lp.solve().ok().map(|s| s.objective())
}
