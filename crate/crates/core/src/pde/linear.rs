use crate::error::{Error, Result};
use crate::grid::Grid;

const CG_TOLERANCE: f64 = 1e-13;

/// Solve `(I - c Lap_h) u = r` with `u = r` on the wall nodes.
///
/// One tridiagonal solve per line when `d = 1`; conjugate gradients on the
/// interior unknowns otherwise (the operator is symmetric positive definite).
pub fn implicit_diffusion(grid: &Grid, r: &[f64], c: f64) -> Result<Vec<f64>> {
    if grid.dim() == 1 {
        thomas_line(grid, r, c)
    } else {
        conjugate_gradient(grid, r, c)
    }
}

fn thomas_line(grid: &Grid, r: &[f64], c: f64) -> Result<Vec<f64>> {
    let m = grid.m();
    let k = c / (grid.h() * grid.h());
    let mut u = r.to_vec();
    let n = m - 1;
    // sub = sup = -k, diag = 1 + 2k
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    for idx in 0..n {
        let i = idx + 1;
        let mut rhs = r[i];
        if i == 1 {
            rhs += k * r[0];
        }
        if i == m - 1 {
            rhs += k * r[m];
        }
        let denom = if idx == 0 { 1.0 + 2.0 * k } else { 1.0 + 2.0 * k + k * cp[idx - 1] };
        if denom.abs() < 1e-300 {
            return Err(Error::LinearSolve("zero pivot in tridiagonal solve".into()));
        }
        cp[idx] = -k / denom;
        dp[idx] = if idx == 0 { rhs / denom } else { (rhs + k * dp[idx - 1]) / denom };
    }
    for idx in (0..n).rev() {
        let next = if idx + 1 < n { u[idx + 2] } else { 0.0 };
        u[idx + 1] = dp[idx] - cp[idx] * next;
    }
    Ok(u)
}

fn apply(grid: &Grid, x: &[f64], c: f64, out: &mut [f64]) {
    let k = c / (grid.h() * grid.h());
    for node in 0..grid.n_nodes() {
        if grid.is_wall(node) {
            out[node] = 0.0;
            continue;
        }
        // wall entries of x are zero, so Dirichlet data enters via the rhs
        let mut lap = x[node - 1] - 2.0 * x[node] + x[node + 1];
        for axis in 1..grid.dim() {
            lap += x[grid.transverse_neighbor(node, axis, 1)] - 2.0 * x[node]
                + x[grid.transverse_neighbor(node, axis, -1)];
        }
        out[node] = x[node] - k * lap;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn conjugate_gradient(grid: &Grid, r: &[f64], c: f64) -> Result<Vec<f64>> {
    let n = grid.n_nodes();
    let k = c / (grid.h() * grid.h());
    let mut b = vec![0.0; n];
    for node in 0..n {
        if grid.is_wall(node) {
            continue;
        }
        b[node] = r[node];
        let i = grid.i(node);
        if i == 1 {
            b[node] += k * r[node - 1];
        }
        if i == grid.m() - 1 {
            b[node] += k * r[node + 1];
        }
    }
    let mut x: Vec<f64> = (0..n).map(|i| if grid.is_wall(i) { 0.0 } else { r[i] }).collect();
    let mut ax = vec![0.0; n];
    apply(grid, &x, c, &mut ax);
    let mut res: Vec<f64> = b.iter().zip(&ax).map(|(a, b)| a - b).collect();
    let mut p = res.clone();
    let mut rr = dot(&res, &res);
    let target = CG_TOLERANCE * CG_TOLERANCE * dot(&b, &b).max(1e-300);
    let mut ap = vec![0.0; n];
    for _ in 0..10 * n {
        if rr <= target {
            break;
        }
        apply(grid, &p, c, &mut ap);
        let alpha = rr / dot(&p, &ap);
        x.iter_mut().zip(&p).for_each(|(a, b)| *a += alpha * b);
        res.iter_mut().zip(&ap).for_each(|(a, b)| *a -= alpha * b);
        let next = dot(&res, &res);
        let beta = next / rr;
        rr = next;
        p.iter_mut().zip(&res).for_each(|(a, b)| *a = b + beta * *a);
    }
    if rr > target {
        return Err(Error::LinearSolve(format!(
            "conjugate gradients stalled at residual {:.3e}",
            rr.sqrt()
        )));
    }
    for node in 0..n {
        if grid.is_wall(node) {
            x[node] = r[node];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(grid: &Grid, u: &[f64], r: &[f64], c: f64) -> f64 {
        let k = c / (grid.h() * grid.h());
        (0..grid.n_nodes())
            .map(|node| {
                if grid.is_wall(node) {
                    return (u[node] - r[node]).abs();
                }
                let mut lap = u[node - 1] - 2.0 * u[node] + u[node + 1];
                for axis in 1..grid.dim() {
                    lap += u[grid.transverse_neighbor(node, axis, 1)] - 2.0 * u[node]
                        + u[grid.transverse_neighbor(node, axis, -1)];
                }
                (u[node] - k * lap - r[node]).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn tridiagonal_solve() {
        let g = Grid::new(1, 17).unwrap();
        let r = g.sample(|u| 1.0 + u[0] * u[0] + (7.0 * u[0]).sin());
        let u = implicit_diffusion(&g, &r, 0.003).unwrap();
        assert!(residual(&g, &u, &r, 0.003) < 1e-12);
    }

    #[test]
    fn cg_solve() {
        let g = Grid::new(2, 12).unwrap();
        let r = g.sample(|u| 1.0 + u[0] + (6.3 * u[1]).cos() * u[0]);
        let u = implicit_diffusion(&g, &r, 0.01).unwrap();
        assert!(residual(&g, &u, &r, 0.01) < 1e-10);
    }
}
