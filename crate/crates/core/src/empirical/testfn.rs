use std::f64::consts::PI;

use crate::error::{Error, Result};

/// A test function `H(t, u)` on `[0, T] x [0, 1] x T^{d-1}` with the
/// derivatives needed for pairings and weak residuals.
pub trait TestFunction: Send + Sync {
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn value(&self, t: f64, u: &[f64]) -> f64;
    /// Spatial gradient.
    fn gradient(&self, t: f64, u: &[f64]) -> Vec<f64>;
    fn laplacian(&self, t: f64, u: &[f64]) -> f64;
    fn time_derivative(&self, t: f64, u: &[f64]) -> f64;
    /// Declared to vanish on `u_1 in {0, 1}`.
    fn vanishes_at_walls(&self) -> bool;
}

/// `H_{m,n}(t, u) = e^{r t} sin(pi m u_1) prod_i trig(2 pi |n_i| u_{i+1})`
/// with `trig = cos` for `n_i >= 0` and `sin` for `n_i < 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigMode {
    pub m: u32,
    pub n: Vec<i32>,
    /// Exponential time factor `r`; zero for static functions.
    pub rate: f64,
}

impl TrigMode {
    pub fn new(m: u32, n: Vec<i32>) -> Self {
        Self { m, n, rate: 0.0 }
    }

    pub fn with_rate(mut self, rate: f64) -> Self {
        self.rate = rate;
        self
    }

    fn factors(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        // value, first and second derivative of each one-dimensional factor
        let mut f = Vec::with_capacity(u.len());
        let mut df = Vec::with_capacity(u.len());
        let mut d2f = Vec::with_capacity(u.len());
        let w = PI * self.m as f64;
        f.push((w * u[0]).sin());
        df.push(w * (w * u[0]).cos());
        d2f.push(-w * w * (w * u[0]).sin());
        for (i, &n) in self.n.iter().enumerate() {
            let w = 2.0 * PI * n.unsigned_abs() as f64;
            let x = u[i + 1];
            if n >= 0 {
                f.push((w * x).cos());
                df.push(-w * (w * x).sin());
                d2f.push(-w * w * (w * x).cos());
            } else {
                f.push((w * x).sin());
                df.push(w * (w * x).cos());
                d2f.push(-w * w * (w * x).sin());
            }
        }
        (f, df, d2f)
    }

    fn time_factor(&self, t: f64) -> f64 {
        if self.rate == 0.0 {
            1.0
        } else {
            (self.rate * t).exp()
        }
    }
}

fn product_except(f: &[f64], skip: usize) -> f64 {
    f.iter()
        .enumerate()
        .filter(|(i, _)| *i != skip)
        .map(|(_, x)| x)
        .product()
}

impl TestFunction for TrigMode {
    fn id(&self) -> String {
        let mut s = format!("H{}", self.m);
        for n in &self.n {
            s.push_str(&format!("_{n}"));
        }
        if self.rate != 0.0 {
            s.push_str(&format!("_r{}", self.rate));
        }
        s
    }

    fn dim(&self) -> usize {
        self.n.len() + 1
    }

    fn value(&self, t: f64, u: &[f64]) -> f64 {
        let (f, _, _) = self.factors(u);
        self.time_factor(t) * f.iter().product::<f64>()
    }

    fn gradient(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let (f, df, _) = self.factors(u);
        let g = self.time_factor(t);
        (0..f.len()).map(|i| g * df[i] * product_except(&f, i)).collect()
    }

    fn laplacian(&self, t: f64, u: &[f64]) -> f64 {
        let (f, _, d2f) = self.factors(u);
        let g = self.time_factor(t);
        (0..f.len()).map(|i| g * d2f[i] * product_except(&f, i)).sum()
    }

    fn time_derivative(&self, t: f64, u: &[f64]) -> f64 {
        self.rate * self.value(t, u)
    }

    fn vanishes_at_walls(&self) -> bool {
        true
    }
}

/// `H = 1`, for total-mass diagnostics. Does not vanish at the walls.
#[derive(Clone, Copy, Debug, Default)]
pub struct Unit {
    pub dim: usize,
}

impl TestFunction for Unit {
    fn id(&self) -> String {
        "one".into()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _t: f64, _u: &[f64]) -> f64 {
        1.0
    }
    fn gradient(&self, _t: f64, u: &[f64]) -> Vec<f64> {
        vec![0.0; u.len()]
    }
    fn laplacian(&self, _t: f64, _u: &[f64]) -> f64 {
        0.0
    }
    fn time_derivative(&self, _t: f64, _u: &[f64]) -> f64 {
        0.0
    }
    fn vanishes_at_walls(&self) -> bool {
        false
    }
}

/// The standard basis: `m in 1..=3`, each transverse `n_i in -2..=2`.
pub fn trig_basis(dim: usize) -> Vec<TrigMode> {
    let mut ns: Vec<Vec<i32>> = vec![vec![]];
    for _ in 1..dim {
        ns = ns
            .into_iter()
            .flat_map(|v| {
                (-2..=2).map(move |k| {
                    let mut w = v.clone();
                    w.push(k);
                    w
                })
            })
            .collect();
    }
    let mut out = Vec::new();
    for m in 1..=3 {
        for n in &ns {
            out.push(TrigMode::new(m, n.clone()));
        }
    }
    out
}

/// Check `H(t, 0, u~) = H(t, 1, u~) = 0` on a transverse grid at `t = 0`.
pub fn check_vanishing(h: &dyn TestFunction) -> Result<()> {
    let d = h.dim();
    let g: usize = if d == 1 { 1 } else { 16 };
    let mut worst = 0.0f64;
    for t in 0..g.pow(d as u32 - 1) {
        let mut rest = t;
        let mut u = vec![0.0];
        for _ in 1..d {
            u.push((rest % g) as f64 / g as f64);
            rest /= g;
        }
        worst = worst.max(h.value(0.0, &u).abs());
        u[0] = 1.0;
        worst = worst.max(h.value(0.0, &u).abs());
    }
    if !h.vanishes_at_walls() || worst > 1e-12 {
        return Err(Error::NotVanishing(worst));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(h: &dyn TestFunction, t: f64, u: &[f64]) {
        let e = 1e-5;
        let g = h.gradient(t, u);
        let mut lap = 0.0;
        for i in 0..u.len() {
            let mut p = u.to_vec();
            let mut m = u.to_vec();
            p[i] += e;
            m[i] -= e;
            let fd = (h.value(t, &p) - h.value(t, &m)) / (2.0 * e);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + g[i].abs()), "grad {i}: {fd} vs {}", g[i]);
            lap += (h.value(t, &p) - 2.0 * h.value(t, u) + h.value(t, &m)) / (e * e);
        }
        assert!((lap - h.laplacian(t, u)).abs() < 1e-3 * (1.0 + lap.abs()));
        let dt = (h.value(t + e, u) - h.value(t - e, u)) / (2.0 * e);
        assert!((dt - h.time_derivative(t, u)).abs() < 1e-6 * (1.0 + dt.abs()));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        fd_check(&TrigMode::new(2, vec![]), 0.0, &[0.3]);
        fd_check(&TrigMode::new(1, vec![-2]).with_rate(-1.5), 0.4, &[0.7, 0.2]);
        fd_check(&TrigMode::new(3, vec![1, -1]), 0.0, &[0.1, 0.9, 0.35]);
    }

    #[test]
    fn basis_sizes_and_vanishing() {
        assert_eq!(trig_basis(1).len(), 3);
        assert_eq!(trig_basis(2).len(), 15);
        assert_eq!(trig_basis(3).len(), 75);
        for h in trig_basis(2) {
            check_vanishing(&h).unwrap();
        }
        assert!(check_vanishing(&Unit { dim: 1 }).is_err());
    }

    #[test]
    fn ids_are_distinct() {
        let ids: std::collections::HashSet<String> = trig_basis(2).iter().map(|h| h.id()).collect();
        assert_eq!(ids.len(), 15);
    }
}
