use std::f64::consts::PI;

use super::*;
use crate::empirical::{trig_basis, TrigMode, Unit};

fn setup_1d() -> (VelocitySet, BoundaryData, SpatialProfile) {
    let vs = VelocitySet::default_for_dim(1).unwrap();
    let th = Thermo::new(&vs);
    let a = ThermoPoint::new(1.3, &[0.1]);
    let b = ThermoPoint::new(0.7, &[-0.05]);
    let bd = BoundaryData::from_thermo(&th, &a, &b).unwrap();
    let profile = SpatialProfile::expression(
        1,
        &["1.3 - 0.6*x + 0.3*sin(pi*x)", "0.1 - 0.15*x + 0.05*sin(2*pi*x)"],
    )
    .unwrap();
    (vs, bd, profile)
}

fn flat(dim: usize) -> (VelocitySet, BoundaryData, SpatialProfile) {
    let vs = VelocitySet::default_for_dim(dim).unwrap();
    let bd = BoundaryData::uniform(dim, &vec![0.4; vs.len()]).unwrap();
    let p = SpatialProfile::constant(dim, bd.wall_value(&vs, Side::Left, &vec![0.0; dim - 1])).unwrap();
    (vs, bd, p)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn uniform_state_is_stationary() {
    for (dim, scheme) in [(1, Scheme::Explicit), (1, Scheme::Imex), (2, Scheme::Imex)] {
        let (vs, bd, p) = flat(dim);
        let cfg = SolverConfig::with_stable_dt(dim, 12, scheme, 0.5);
        let solver = Solver::new(&vs, &bd, cfg).unwrap();
        let mut st = solver.initialize(&p).unwrap();
        let start = st.fields.clone();
        let r = solver.rhs(&mut st).unwrap();
        assert!(r.iter().flatten().all(|x| x.abs() < 1e-12));
        solver.advance_to(&mut st, 0.01).unwrap();
        for (a, b) in st.fields.iter().zip(&start) {
            assert!(max_diff(a, b) < 1e-14);
        }
        assert_eq!(st.clamps, 0);
    }
}

#[test]
fn initialization_pins_walls() {
    let (vs, bd, _) = flat(1);
    let solver = Solver::new(&vs, &bd, SolverConfig::with_stable_dt(1, 10, Scheme::Imex, 0.5)).unwrap();
    let ramp = SpatialProfile::linear_x1(1, ThermoPoint::new(0.6, &[0.0]), ThermoPoint::new(1.0, &[0.1])).unwrap();
    let st = solver.initialize(&ramp).unwrap();
    assert!((st.fields[0][5] - 0.8).abs() < 1e-14);
    assert!((st.fields[1][3] - 0.03).abs() < 1e-14);
    // walls take the reservoir value 0.8, momentum 0
    assert!((st.fields[0][0] - 0.8).abs() < 1e-14);
    assert!((st.fields[1][10]).abs() < 1e-14);
    assert!((st.trace_mismatch - 0.2).abs() < 1e-12);
    let bad = SpatialProfile::constant(1, ThermoPoint::new(2.5, &[0.0])).unwrap();
    assert!(matches!(solver.initialize(&bad), Err(Error::NotInDomain { .. })));
}

#[test]
fn mass_flux_vanishes_without_momentum() {
    let (vs, bd, _) = flat(2);
    let solver = Solver::new(&vs, &bd, SolverConfig::with_stable_dt(2, 10, Scheme::Imex, 0.5)).unwrap();
    let prof = SpatialProfile::expression(2, &["1.6 + 0.4*sin(pi*x)*cos(2*pi*y)", "0", "0"]).unwrap();
    let mut st = solver.initialize(&prof).unwrap();
    let flux = solver.flux_field(&mut st).unwrap();
    let tr = solver.transport(&flux);
    assert!(tr[0].iter().all(|x| x.abs() < 1e-13));
    for f in &flux {
        for j in 0..2 {
            let s: f64 = (0..vs.len()).map(|v| vs.components(v)[j] * f[v]).sum();
            assert!(s.abs() < 1e-15);
        }
    }
}

#[test]
fn explicit_step_respects_cfl() {
    let (vs, bd, _) = flat(1);
    let mut cfg = SolverConfig::with_stable_dt(1, 10, Scheme::Explicit, 0.5);
    cfg.dt = 0.02;
    assert!(matches!(Solver::new(&vs, &bd, cfg), Err(Error::CflViolation { .. })));
}

#[test]
fn zero_time_returns_initial_state() {
    let (vs, bd, p) = setup_1d();
    let solver = Solver::new(&vs, &bd, SolverConfig::with_stable_dt(1, 20, Scheme::Imex, 1.0)).unwrap();
    let st = solver.initialize(&p).unwrap();
    let traj = solver.solve(&p, &[0.0]).unwrap();
    assert_eq!(traj.steps, 0);
    assert_eq!(traj.frames[0], st.fields);
}

#[test]
fn diffusion_matches_analytic_laplacian() {
    let err = |m: usize| {
        let (vs, bd, _) = flat(1);
        let mut cfg = SolverConfig::with_stable_dt(1, m, Scheme::Imex, 0.5);
        cfg.flux = false;
        let solver = Solver::new(&vs, &bd, cfg).unwrap();
        let g = *solver.grid();
        let mut st = solver.initialize(&SpatialProfile::constant(1, ThermoPoint::new(0.8, &[0.0])).unwrap()).unwrap();
        st.fields[0] = g.sample(|u| 0.8 + 0.2 * (3.0 * u[0]).sin());
        let r = solver.rhs(&mut st).unwrap();
        (1..m)
            .map(|i| (r[0][i] + 0.5 * 0.2 * 9.0 * (3.0 * g.point(i)[0]).sin()).abs())
            .fold(0.0, f64::max)
    };
    let ratio = err(20) / err(40);
    assert!((3.8..4.2).contains(&ratio), "ratio {ratio}");
}

#[test]
fn transport_converges_to_high_resolution_value() {
    // The value at u = 1/2 on a very fine grid stands in for the exact one.
    let at_half = |m: usize| {
        let (vs, bd, p) = setup_1d();
        let solver = Solver::new(&vs, &bd, SolverConfig::with_stable_dt(1, m, Scheme::Imex, 1.0)).unwrap();
        let mut st = solver.initialize(&p).unwrap();
        let flux = solver.flux_field(&mut st).unwrap();
        let tr = solver.transport(&flux);
        [tr[0][m / 2], tr[1][m / 2]]
    };
    let reference = at_half(4096);
    let e = |m| {
        let v = at_half(m);
        (v[0] - reference[0]).abs().max((v[1] - reference[1]).abs())
    };
    let ratio = e(32) / e(64);
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn sine_mode_decays_at_heat_rate() {
    let (vs, bd, _) = flat(1);
    let rho = bd.wall_value(&vs, Side::Left, &[]).0[0];
    let mut cfg = SolverConfig::with_stable_dt(1, 40, Scheme::Explicit, 0.4);
    cfg.flux = false;
    let solver = Solver::new(&vs, &bd, cfg).unwrap();
    let p = SpatialProfile::expression(1, &[format!("{rho} + 0.2*sin(pi*x)"), "0".to_string()]).unwrap();
    let t_end = 0.2;
    let traj = solver.solve(&p, &[0.0, t_end]).unwrap();
    let h = TrigMode::new(1, vec![]);
    let amp = |f: &[f64]| {
        let shifted: Vec<f64> = f.iter().map(|x| x - rho).collect();
        pde_pairing(solver.grid(), &shifted, &h, 0.0)
    };
    let rate = -(amp(&traj.frames[1][0]) / amp(&traj.frames[0][0])).ln() / t_end;
    assert!((rate / (PI * PI / 2.0) - 1.0).abs() < 0.01, "rate {rate}");
}

#[test]
fn discrete_maximum_principle() {
    let (vs, bd, _) = flat(1);
    let mut cfg = SolverConfig::with_stable_dt(1, 30, Scheme::Explicit, 0.9);
    cfg.flux = false;
    let solver = Solver::new(&vs, &bd, cfg).unwrap();
    let p = SpatialProfile::expression(1, &["1.0 + 0.6*sin(7*x)^3", "0.15*cos(5*x)"]).unwrap();
    let mut st = solver.initialize(&p).unwrap();
    let bounds: Vec<(f64, f64)> = st
        .fields
        .iter()
        .map(|f| f.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &x| (lo.min(x), hi.max(x))))
        .collect();
    for _ in 0..200 {
        solver.step(&mut st, solver.config().dt).unwrap();
        for (f, (lo, hi)) in st.fields.iter().zip(&bounds) {
            assert!(f.iter().all(|x| *x >= lo - 1e-14 && *x <= hi + 1e-14));
        }
    }
}

fn solve_at(m: usize, scheme: Scheme, fraction: f64, t: f64) -> Trajectory {
    let (vs, bd, p) = setup_1d();
    let solver = Solver::new(&vs, &bd, SolverConfig::with_stable_dt(1, m, scheme, fraction)).unwrap();
    solver.solve(&p, &[t]).unwrap()
}

#[test]
fn explicit_and_imex_agree() {
    let a = solve_at(40, Scheme::Explicit, 0.25, 0.1);
    let b = solve_at(40, Scheme::Imex, 0.25, 0.1);
    for k in 0..2 {
        let gap = max_diff(&a.final_fields()[k], &b.final_fields()[k]);
        assert!(gap < 1e-4, "k = {k}: {gap}");
    }
}

#[test]
fn richardson_order_is_two() {
    let sols: Vec<Trajectory> = [16, 32, 64]
        .iter()
        .map(|&m| solve_at(m, Scheme::Explicit, 0.5, 0.1))
        .collect();
    let coarse = |t: &Trajectory, stride: usize| -> Vec<f64> {
        t.final_fields()[0].iter().step_by(stride).copied().collect()
    };
    let e1 = max_diff(&coarse(&sols[0], 1), &coarse(&sols[1], 2));
    let e2 = max_diff(&coarse(&sols[1], 2), &coarse(&sols[2], 4));
    let order = (e1 / e2).log2();
    assert!((1.8..=2.2).contains(&order), "order {order}");
}

#[test]
fn weak_residual_trivial_cases() {
    let run = |m: usize| {
        let (vs, bd, p) = flat(1);
        let solver = Solver::new(&vs, &bd, SolverConfig::with_stable_dt(1, m, Scheme::Imex, 1.0)).unwrap();
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.01).collect();
        let traj = solver.solve(&p, &times).unwrap();
        assert_eq!(weak_residual(&solver, &traj, &TrigMode::new(0, vec![]), 0).unwrap(), 0.0);
        assert!(matches!(
            weak_residual(&solver, &traj, &Unit { dim: 1 }, 0),
            Err(Error::NotVanishing(_))
        ));
        trig_basis(1)
            .iter()
            .flat_map(|h| (0..2).map(|k| weak_residual(&solver, &traj, h, k).unwrap()).collect::<Vec<_>>())
            .collect::<Vec<f64>>()
    };
    // a constant solution leaves only the spatial quadrature error
    for (coarse, fine) in run(16).into_iter().zip(run(32)) {
        assert!(fine <= coarse / 3.5 + 1e-14, "{coarse} -> {fine}");
    }
}

#[test]
fn weak_residual_shrinks_under_refinement() {
    let residual = |m: usize| {
        let (vs, bd, p) = setup_1d();
        let solver = Solver::new(&vs, &bd, SolverConfig::with_stable_dt(1, m, Scheme::Explicit, 0.5)).unwrap();
        let dt = solver.config().dt;
        let steps = (0.05 / dt).round() as usize;
        let times: Vec<f64> = (0..=steps).map(|i| i as f64 * 0.05 / steps as f64).collect();
        let traj = solver.solve(&p, &times).unwrap();
        let h = TrigMode::new(1, vec![]).with_rate(-1.0);
        weak_residual(&solver, &traj, &h, 0).unwrap().max(weak_residual(&solver, &traj, &h, 1).unwrap())
    };
    let (r1, r2) = (residual(16), residual(32));
    assert!(r2 < r1 / 3.0, "{r1} -> {r2}");
}

#[test]
fn trajectory_outputs() {
    let (vs, bd, p) = setup_1d();
    let solver = Solver::new(&vs, &bd, SolverConfig::with_stable_dt(1, 8, Scheme::Imex, 1.0)).unwrap();
    let traj = solver.solve(&p, &[0.0, 0.01]).unwrap();
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("time,x1,u0,u1\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 9);
    let snaps = traj.snapshots(&vs);
    assert_eq!(snaps.len(), 2);
    let crate::dynamics::SnapshotData::Fields { values } = &snaps[1].data else {
        panic!("field snapshot expected")
    };
    assert_eq!(values[2 * 3 + 1], traj.frames[1][1][3]);
}

#[test]
fn steady_state_is_independent_of_start() {
    let (vs, bd, p) = setup_1d();
    let mut cfg = SolverConfig::with_stable_dt(1, 32, Scheme::Imex, 4.0);
    cfg.dt = cfg.dt.min(0.01);
    let solver = Solver::new(&vs, &bd, cfg).unwrap();
    let mut a = solver.initialize(&p).unwrap();
    let other = SpatialProfile::constant(1, ThermoPoint::new(1.0, &[0.0])).unwrap();
    let mut b = solver.initialize(&other).unwrap();
    let ra = solver.relax_to_steady(&mut a, 1e-9, 50.0).unwrap();
    let rb = solver.relax_to_steady(&mut b, 1e-9, 50.0).unwrap();
    assert!(ra <= 1e-9 && rb <= 1e-9);
    for k in 0..2 {
        assert!(max_diff(&a.fields[k], &b.fields[k]) < 1e-6);
    }
}
