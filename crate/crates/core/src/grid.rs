//! Regular node grid on `[0, 1] x T^{d-1}` with spacing `h = 1/M`.
//!
//! Nodes are `(i, j_2, .., j_d)` with `i in 0..=M` along `x_1` and
//! `j in 0..M` on each periodic axis, numbered with `i` fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    m: usize,
}

impl Grid {
    pub fn new(dim: usize, m: usize) -> Result<Self> {
        if dim == 0 || m < 2 {
            return Err(Error::Config(format!("grid needs d >= 1 and M >= 2 (got d = {dim}, M = {m})")));
        }
        let nodes = (m + 1).checked_mul(m.checked_pow(dim as u32 - 1).unwrap_or(usize::MAX));
        if nodes.is_none_or(|n| n > 1 << 26) {
            return Err(Error::Config(format!("grid with M = {m} in d = {dim} is too large")));
        }
        Ok(Self { dim, m })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Nodes per `x_1` line.
    pub fn line_len(&self) -> usize {
        self.m + 1
    }

    /// Number of `x_1` lines.
    pub fn n_lines(&self) -> usize {
        self.m.pow(self.dim as u32 - 1)
    }

    pub fn n_nodes(&self) -> usize {
        self.line_len() * self.n_lines()
    }

    pub fn node(&self, i: usize, line: usize) -> usize {
        i + self.line_len() * line
    }

    pub fn i(&self, node: usize) -> usize {
        node % self.line_len()
    }

    pub fn line(&self, node: usize) -> usize {
        node / self.line_len()
    }

    pub fn is_wall(&self, node: usize) -> bool {
        let i = self.i(node);
        i == 0 || i == self.m
    }

    /// Transverse integer coordinates of a line.
    pub fn line_coords(&self, line: usize) -> Vec<usize> {
        let mut rest = line;
        (1..self.dim)
            .map(|_| {
                let c = rest % self.m;
                rest /= self.m;
                c
            })
            .collect()
    }

    pub fn line_point(&self, line: usize) -> Vec<f64> {
        self.line_coords(line)
            .into_iter()
            .map(|c| c as f64 * self.h())
            .collect()
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.dim);
        u.push(self.i(node) as f64 * self.h());
        u.extend(self.line_point(self.line(node)));
        u
    }

    /// Node shifted by `delta` along transverse axis `axis >= 1` (periodic).
    pub fn transverse_neighbor(&self, node: usize, axis: usize, delta: isize) -> usize {
        let mut c = self.line_coords(self.line(node));
        let m = self.m as isize;
        c[axis - 1] = ((c[axis - 1] as isize + delta).rem_euclid(m)) as usize;
        let line = c.iter().rev().fold(0, |acc, &x| acc * self.m + x);
        self.node(self.i(node), line)
    }

    /// Trapezoid weights: `h/2` at the walls, `h` inside, times `h` per
    /// periodic axis.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let h = self.h();
        let tw = h.powi(self.dim as i32 - 1);
        (0..self.n_nodes())
            .map(|n| if self.is_wall(n) { 0.5 * h * tw } else { h * tw })
            .collect()
    }

    /// Gradient of a nodal field by central differences, second-order
    /// one-sided at the walls.
    pub fn gradient(&self, field: &[f64], node: usize) -> Vec<f64> {
        let h = self.h();
        let i = self.i(node);
        let line = self.line(node);
        let f = |k: usize| field[self.node(k, line)];
        let mut g = Vec::with_capacity(self.dim);
        g.push(if i == 0 {
            (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h)
        } else if i == self.m {
            (3.0 * f(i) - 4.0 * f(i - 1) + f(i - 2)) / (2.0 * h)
        } else {
            (f(i + 1) - f(i - 1)) / (2.0 * h)
        });
        for axis in 1..self.dim {
            let p = field[self.transverse_neighbor(node, axis, 1)];
            let q = field[self.transverse_neighbor(node, axis, -1)];
            g.push((p - q) / (2.0 * h));
        }
        g
    }

    /// Trapezoid integral of a nodal field.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        self.quadrature_weights()
            .iter()
            .zip(field)
            .map(|(w, f)| w * f)
            .sum()
    }

    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.n_nodes()).map(|n| f(&self.point(n))).collect()
    }
}

/// Trapezoid rule over a possibly non-uniform set of times.
pub fn trapezoid_in_time(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn numbering() {
        let g = Grid::new(2, 4).unwrap();
        assert_eq!(g.n_nodes(), 20);
        let n = g.node(3, 2);
        assert_eq!(g.point(n), vec![0.75, 0.5]);
        assert_eq!(g.point(g.transverse_neighbor(n, 1, 2)), vec![0.75, 0.0]);
        assert!(g.is_wall(g.node(4, 1)));
    }

    #[test]
    fn quadrature_is_exact_for_affine_in_x1() {
        let g = Grid::new(2, 8).unwrap();
        let f = g.sample(|u| 2.0 + 3.0 * u[0]);
        assert!((g.integrate(&f) - 3.5).abs() < 1e-13);
        let f = g.sample(|u| (2.0 * PI * u[1]).cos().powi(2));
        assert!((g.integrate(&f) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn gradient_is_second_order() {
        let err = |m: usize| {
            let g = Grid::new(1, m).unwrap();
            let f = g.sample(|u| (2.0 * u[0]).exp());
            (0..g.n_nodes())
                .map(|n| (g.gradient(&f, n)[0] - 2.0 * (2.0 * g.point(n)[0]).exp()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn time_trapezoid() {
        assert!((trapezoid_in_time(&[0.0, 0.5, 2.0], &[1.0, 1.0, 1.0]) - 2.0).abs() < 1e-15);
        assert_eq!(trapezoid_in_time(&[1.0], &[3.0]), 0.0);
    }
}
