//! CSV emission for trajectories and family summaries, with
//! 17-significant-digit decimal formatting.

use crate::flow::Trajectory;
use crate::rpo::Family;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Trajectory CSV: `t,q1..qn,p1..pn,h,Phi_1..Phi_k`, one row per sample.
pub fn trajectory_csv(traj: &Trajectory<f64>, n: usize, k: usize) -> String {
    let mut out = String::from("t");
    for j in 1..=n {
        out.push_str(&format!(",q{j}"));
    }
    for j in 1..=n {
        out.push_str(&format!(",p{j}"));
    }
    out.push_str(",h");
    for i in 1..=k {
        out.push_str(&format!(",Phi_{i}"));
    }
    out.push('\n');

    for (s, &t) in traj.times.iter().enumerate() {
        out.push_str(&fmt(t));
        for v in traj.states[s].iter() {
            out.push(',');
            out.push_str(&fmt(*v));
        }
        out.push(',');
        out.push_str(&fmt(traj.h_values[s]));
        for v in &traj.invariant_values[s] {
            out.push(',');
            out.push_str(&fmt(*v));
        }
        out.push('\n');
    }
    out
}

/// Family summary CSV: `mode,eps,T,theta_1..k,residual`, one row per orbit.
pub fn family_csv(family: &Family<f64>, k: usize) -> String {
    let mut out = String::from("mode,eps,T");
    for i in 1..=k {
        out.push_str(&format!(",theta_{i}"));
    }
    out.push_str(",residual\n");
    for orbit in &family.orbits {
        out.push_str(&format!("{}", family.mode));
        out.push(',');
        out.push_str(&fmt(orbit.eps));
        out.push(',');
        out.push_str(&fmt(orbit.period));
        for v in orbit.theta.iter() {
            out.push(',');
            out.push_str(&fmt(*v));
        }
        out.push(',');
        out.push_str(&fmt(orbit.residual));
        out.push('\n');
    }
    out
}

/// Parses a two-column `(x, y)` series out of a CSV by header names.
pub fn parse_columns(text: &str, x_col: &str, y_col: &str) -> Option<Vec<(f64, f64)>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next()?.split(',').collect();
    let xi = header.iter().position(|&h| h == x_col)?;
    let yi = header.iter().position(|&h| h == y_col)?;
    let mut points = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let x: f64 = fields.get(xi)?.parse().ok()?;
        let y: f64 = fields.get(yi)?.parse().ok()?;
        points.push((x, y));
    }
    Some(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Tolerances;
    use crate::flow::flow;
    use crate::poly::Polynomial;
    use nalgebra::DVector;

    #[test]
    fn trajectory_csv_shape_and_precision() {
        let tol = Tolerances::default();
        let h = Polynomial::from_terms(2, &[(0.5, vec![2, 0]), (0.5, vec![0, 2])]).unwrap();
        let phi = h.clone();
        let traj = flow(&h, &[phi], &DVector::from_vec(vec![1.0, 0.0]), 0.2, 0.1, &tol).unwrap();
        let csv = trajectory_csv(&traj, 1, 1);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,q1,p1,h,Phi_1");
        let first = lines.next().unwrap();
        assert!(first.starts_with("0.0000000000000000e0,1.0000000000000000e0"));
        assert_eq!(csv.lines().count(), 4);

        let pts = parse_columns(&csv, "t", "q1").unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[0], (0.0, 1.0));
    }
}
