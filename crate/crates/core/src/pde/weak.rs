use crate::dynamics::Side;
use crate::empirical::{check_vanishing, TestFunction};
use crate::error::{Error, Result};
use crate::grid::{trapezoid_in_time, Grid};

use super::{Solver, Trajectory};

/// `int H(t, u) f(u) du` by the trapezoid rule on the grid.
pub fn pde_pairing(grid: &Grid, field: &[f64], h: &dyn TestFunction, t: f64) -> f64 {
    grid.quadrature_weights()
        .iter()
        .enumerate()
        .map(|(node, w)| w * h.value(t, &grid.point(node)) * field[node])
        .sum()
}

/// Absolute defect of the weak formulation for component `k` over the time
/// span of `traj`:
///
/// ```text
/// <u_T, H_T> - <u_0, H_0> - int <u, d_t H + (1/2) Lap H>
///   + (1/2) int int b d_1 H(t, 1, .) - (1/2) int int a d_1 H(t, 0, .)
///   - int <sum_v v~_k chi(theta_v(Lambda(u))), v . grad H>
/// ```
///
/// with trapezoid quadrature in space and over the recorded frames in time.
pub fn weak_residual(solver: &Solver, traj: &Trajectory, h: &dyn TestFunction, k: usize) -> Result<f64> {
    let grid = solver.grid();
    let d = grid.dim();
    if h.dim() != d || k > d {
        return Err(Error::Contract(format!(
            "test function of dimension {} or component {k} does not fit d = {d}",
            h.dim()
        )));
    }
    check_vanishing(h)?;
    if traj.grid != *grid || traj.frames.is_empty() {
        return Err(Error::Contract("trajectory does not belong to this solver".into()));
    }
    let vs = solver.velocity_set();
    let weights = grid.quadrature_weights();
    let line_weight = grid.h().powi(d as i32 - 1);
    let first = traj.times[0];
    let last = *traj.times.last().expect("non-empty");

    let mut integrand = Vec::with_capacity(traj.frames.len());
    for (&t, frame) in traj.times.iter().zip(&traj.frames) {
        let u = &frame[k];
        let flux = if solver.config().flux {
            Some(solver.flux_at(frame)?)
        } else {
            None
        };
        let mut bulk = 0.0;
        for node in 0..grid.n_nodes() {
            let p = grid.point(node);
            let mut val = u[node] * (h.time_derivative(t, &p) + 0.5 * h.laplacian(t, &p));
            if let Some(f) = &flux {
                let grad = h.gradient(t, &p);
                for v in 0..vs.len() {
                    let vg: f64 = vs.components(v).iter().zip(&grad).map(|(a, b)| a * b).sum();
                    val += vs.extended(v, k) * f[node][v] * vg;
                }
            }
            bulk += weights[node] * val;
        }
        let mut walls = 0.0;
        for line in 0..grid.n_lines() {
            let mut p = vec![0.0];
            p.extend(grid.line_point(line));
            let a = solver.wall_value(Side::Left, line).0[k];
            let da = h.gradient(t, &p)[0];
            p[0] = 1.0;
            let b = solver.wall_value(Side::Right, line).0[k];
            let db = h.gradient(t, &p)[0];
            walls += line_weight * 0.5 * (b * db - a * da);
        }
        integrand.push(walls - bulk);
    }
    let ends = super::pde_pairing(grid, traj.final_fields().get(k).expect("component"), h, last)
        - super::pde_pairing(grid, &traj.frames[0][k], h, first);
    Ok((ends + trapezoid_in_time(&traj.times, &integrand)).abs())
}
