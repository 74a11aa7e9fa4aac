//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers. Run with `cargo test --test acceptance -- --nocapture`
//! to see the values.

use std::f64::consts::{E, PI};
use std::time::Instant;

use axiswirl::cli::{self, gauss_swirl_gamma, InitialCondition, RunConfig};
use axiswirl::diagnostics::{
    self, kbar_region, oscillation_check, rescale_trajectory, thm12_monitor,
};
use axiswirl::elliptic::{biot_savart_report, StreamBc, StreamSolver};
use axiswirl::evolution::{BoundaryValues, Family, Stepper, Trajectory};
use axiswirl::field::{divergence_cyl, ScalarField};
use axiswirl::geometry::Grid;
use axiswirl::FlowState;

/// Criterion 2 gate, applied to every snapshot the suite produces.
fn assert_solenoidal(state: &FlowState, context: &str) {
    let div = divergence_cyl(&state.v_r, &state.v_z).max_abs();
    let bmax = state.max_meridional_speed();
    assert!(
        div <= 1e-12 * bmax.max(1e-30),
        "{context}: |div| = {div:.3e} exceeds 1e-12 * {bmax:.3e} at t = {}",
        state.t
    );
}

/// Drive a manufactured run, retaining snapshots roughly every `snap_dt`.
fn run_mms_trajectory(
    grid: Grid,
    family: Family,
    t_end: f64,
    retention: f64,
    snap_dt: f64,
) -> Trajectory {
    let stepper = Stepper::new(
        grid,
        BoundaryValues::Manufactured(family),
        Some(family),
        0.4,
        0.4,
    )
    .unwrap();
    let mut state = stepper
        .initial_state(
            0.0,
            ScalarField::from_fn(grid, "gamma", |r, z| family.gamma(r, z, 0.0)),
            ScalarField::from_fn(grid, "omega", |r, z| family.omega(r, z, 0.0)),
        )
        .unwrap();
    let mut traj = Trajectory::new(retention);
    traj.push(state.clone()).unwrap();
    let mut last_snap = state.t;
    let eps = 1e-12;
    while state.t < t_end - eps {
        let dt = stepper.cfl_dt(&state).min(t_end - state.t);
        state = stepper.step(&state, dt).unwrap();
        if state.t - last_snap >= snap_dt - eps || state.t >= t_end - eps {
            assert_solenoidal(&state, "mms trajectory");
            traj.push(state.clone()).unwrap();
            last_snap = state.t;
        }
    }
    traj
}

#[test]
fn criterion_01_mms_convergence() {
    let start = Instant::now();
    let rows = cli::mms_verify(
        Family::Coupled,
        &[(32, 64), (64, 128), (128, 256)],
        (0.5, 5.0, -5.0, 5.0),
        0.25,
    )
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mut worst: f64 = f64::INFINITY;
    for r in &rows {
        for o in [r.order_gamma, r.order_omega].into_iter().flatten() {
            worst = worst.min(o);
        }
    }
    assert!(
        worst >= 1.9,
        "observed convergence order {worst:.3} < 1.9:\n{}",
        cli::mms_table_csv(&rows)
    );
    assert!(elapsed < 180.0, "runtime {elapsed:.1} s exceeds 3 minutes");
    println!(
        "ACCEPTANCE 1 PASS: mms convergence, min order {worst:.3} (>= 1.9), {elapsed:.1} s (< 180 s)"
    );
}

#[test]
fn criterion_02_discrete_solenoidality() {
    // Forced manufactured run.
    let grid = Grid::new(0.5, 5.0, -5.0, 5.0, 64, 128, false).unwrap();
    let traj = run_mms_trajectory(grid, Family::Coupled, 0.05, f64::INFINITY, 0.005);
    let mut checked = traj.len();
    for s in traj.states() {
        assert_solenoidal(s, "forced run");
    }

    // Unforced decay from swirl-only data.
    let stepper = Stepper::new(
        grid,
        BoundaryValues::Frozen {
            gamma: gauss_swirl_gamma(grid, 1.0),
            omega: ScalarField::zeros(grid, "omega"),
        },
        None,
        0.4,
        0.4,
    )
    .unwrap();
    let mut state = stepper
        .initial_state(
            0.0,
            gauss_swirl_gamma(grid, 1.0),
            ScalarField::zeros(grid, "omega"),
        )
        .unwrap();
    for step in 0..200 {
        state = stepper.step(&state, stepper.cfl_dt(&state)).unwrap();
        if step % 10 == 0 {
            assert_solenoidal(&state, "decay run");
            checked += 1;
        }
    }
    println!(
        "ACCEPTANCE 2 PASS: discrete solenoidality, max |div| <= 1e-12 max|b| on {checked} snapshots"
    );
}

#[test]
fn criterion_03_maximum_principle() {
    let grid = Grid::new(0.5, 5.0, -5.0, 5.0, 48, 96, false).unwrap();
    let gamma0 = gauss_swirl_gamma(grid, 1.0);
    let stepper = Stepper::new(
        grid,
        BoundaryValues::Frozen {
            gamma: gamma0.clone(),
            omega: ScalarField::zeros(grid, "omega"),
        },
        None,
        0.4,
        0.4,
    )
    .unwrap();
    let mut state = stepper
        .initial_state(0.0, gamma0, ScalarField::zeros(grid, "omega"))
        .unwrap();
    let sup0 = state.gamma.max_abs();
    let cap = sup0 * (1.0 + 1e-6);
    let mut worst_ratio = 0.0_f64;
    // Swirl supremum over P_{1,4,S} with a window the run can cover; its
    // implied constant is the pointwise-bound ratio, which the maximum
    // principle keeps at or below one.
    let lambda_region = axiswirl::geometry::Region::parabolic(
        1.0,
        4.0,
        0.3,
        1.0,
        axiswirl::geometry::Measure::Volume,
    )
    .unwrap();
    let mut traj = Trajectory::new(0.12);
    traj.push(state.clone()).unwrap();
    let mut worst_prop22 = 0.0_f64;
    for step in 0..500 {
        state = stepper.step(&state, stepper.cfl_dt(&state)).unwrap();
        let sup = state.gamma.max_abs();
        worst_ratio = worst_ratio.max(sup / sup0);
        assert!(
            sup <= cap,
            "sup |gamma| = {sup} exceeds {cap} at t = {}",
            state.t
        );
        if step % 20 == 19 {
            traj.push(state.clone()).unwrap();
            if let Ok(rep) = diagnostics::lambda_sup(&traj, &lambda_region) {
                worst_prop22 = worst_prop22.max(rep.implied_constant);
                assert!(
                    rep.implied_constant <= 1.0 + 1e-6,
                    "swirl-bound ratio {} at t = {}",
                    rep.implied_constant,
                    state.t
                );
            }
        }
    }
    assert!(worst_prop22 > 0.0, "swirl-bound ratio never evaluated");
    assert_solenoidal(&state, "max principle run");

    // Zero-swirl initial data stays at zero swirl.
    let stepper0 = Stepper::new(
        grid,
        BoundaryValues::Frozen {
            gamma: ScalarField::zeros(grid, "gamma"),
            omega: ScalarField::from_fn(grid, "omega", |_, z| z.sin()),
        },
        None,
        0.4,
        0.4,
    )
    .unwrap();
    let mut zs = stepper0
        .initial_state(
            0.0,
            ScalarField::zeros(grid, "gamma"),
            ScalarField::from_fn(grid, "omega", |_, z| z.sin()),
        )
        .unwrap();
    for _ in 0..100 {
        zs = stepper0.step(&zs, stepper0.cfl_dt(&zs)).unwrap();
        assert!(zs.gamma.max_abs() < 1e-12, "swirl leaked: {}", zs.gamma.max_abs());
    }
    println!(
        "ACCEPTANCE 3 PASS: maximum principle, sup ratio {worst_ratio:.9} <= 1 + 1e-6 over 500 steps (swirl-bound ratio {worst_prop22:.6}); zero swirl stays < 1e-12"
    );
}

#[test]
fn criterion_04_energy_dissipation() {
    let grid = Grid::new(0.5, 5.0, -5.0, 5.0, 48, 96, false).unwrap();
    let gamma0 = gauss_swirl_gamma(grid, 1.0);
    let stepper = Stepper::new(
        grid,
        BoundaryValues::Frozen {
            gamma: gamma0.clone(),
            omega: ScalarField::zeros(grid, "omega"),
        },
        None,
        0.4,
        0.4,
    )
    .unwrap();
    let mut state = stepper
        .initial_state(0.0, gamma0, ScalarField::zeros(grid, "omega"))
        .unwrap();
    let mut energy = state.kinetic_energy();
    let mut worst_growth = 0.0_f64;
    for _ in 0..500 {
        state = stepper.step(&state, stepper.cfl_dt(&state)).unwrap();
        let next = state.kinetic_energy();
        let growth = (next - energy) / energy.max(1e-300);
        worst_growth = worst_growth.max(growth);
        assert!(
            growth <= 1e-3,
            "kinetic energy grew by {growth:.3e} in one step at t = {}",
            state.t
        );
        energy = next;
    }
    println!(
        "ACCEPTANCE 4 PASS: kinetic energy non-increasing within 0.1% per step (worst step change {worst_growth:.3e})"
    );
}

#[test]
fn criterion_05_scaling_identities() {
    // Produce a short stored trajectory, then verify the dyadic identities.
    let dir = std::env::temp_dir().join("axiswirl_acceptance_scaling");
    let _ = std::fs::remove_dir_all(&dir);
    let config = RunConfig {
        grid: Grid::new(0.5, 5.0, -5.0, 5.0, 32, 64, false).unwrap(),
        t_end: 0.02,
        cfl_advective: 0.4,
        cfl_diffusive: 0.5,
        snapshot_stride: 10,
        retention: 1.0,
        initial: InitialCondition::Family(Family::Coupled),
        forcing: Some(Family::Coupled),
        monitors: vec![],
    };
    cli::cmd_run(&config, &dir).unwrap();

    let start = Instant::now();
    let rows = cli::cmd_scale_check(&dir, 2.0).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mut worst = 0.0_f64;
    for (name, err) in &rows {
        assert!(*err < 1e-12, "{name}: relative error {err:.3e}");
        worst = worst.max(*err);
    }
    assert!(elapsed < 5.0, "scale check took {elapsed:.2} s");
    println!(
        "ACCEPTANCE 5 PASS: k=2 scaling identities, worst relative error {worst:.3e} (< 1e-12), {elapsed:.2} s (< 5 s)"
    );
}

#[test]
fn criterion_06_kbar_oracle() {
    // 8x8 synthetic snapshot against an independent brute-force evaluation.
    let grid = Grid::new(0.5, 5.0, -5.0, 5.0, 8, 8, false).unwrap();
    let mut state = FlowState::from_prognostic(
        0.0,
        ScalarField::from_fn(grid, "gamma", |r, z| r * (0.3 * z).cos()),
        ScalarField::from_fn(grid, "omega", |r, z| 0.2 * (r - 2.0) * z),
    );
    state.v_r = ScalarField::from_fn(grid, "v_r", |r, z| 0.1 * r * z);
    state.v_theta = ScalarField::from_fn(grid, "v_theta", |_, z| (0.3 * z).cos());
    state.v_z = ScalarField::from_fn(grid, "v_z", |r, z| r + 0.5 * z);
    state.omega_theta = ScalarField::from_fn(grid, "omega_theta", |r, z| 0.2 * r * (r - 2.0) * z);

    let mut traj = Trajectory::new(f64::INFINITY);
    let mut early = state.clone();
    early.t = -1.5;
    traj.push(early).unwrap();
    traj.push(state.clone()).unwrap();

    let sigma1 = 1.0;
    let region = kbar_region(sigma1).unwrap();
    let got = diagnostics::kbar(&traj, sigma1, &region).unwrap();

    // Brute force: re-derive the node set, trapezoid weights, and the
    // functional from scratch.
    let (lo, hi) = (5.0 - 4.5 * sigma1, 4.5 * sigma1);
    let mut nodes = Vec::new();
    for i in 0..grid.n_r {
        for j in 0..grid.n_z {
            let (r, z) = (grid.r(i), grid.z(j));
            if r >= lo - 1e-12 && r <= hi + 1e-12 && z.abs() <= hi + 1e-12 {
                nodes.push((i, j));
            }
        }
    }
    let i_lo = nodes.iter().map(|n| n.0).min().unwrap();
    let i_hi = nodes.iter().map(|n| n.0).max().unwrap();
    let j_lo = nodes.iter().map(|n| n.1).min().unwrap();
    let j_hi = nodes.iter().map(|n| n.1).max().unwrap();
    let mut v2 = 0.0;
    let mut w2 = 0.0;
    for &(i, j) in &nodes {
        let wr = if i == i_lo || i == i_hi { 0.5 } else { 1.0 } * grid.h_r;
        let wz = if j == j_lo || j == j_hi { 0.5 } else { 1.0 } * grid.h_z;
        let w = wr * wz;
        v2 += w
            * (state.v_r.get(i, j).powi(2)
                + state.v_theta.get(i, j).powi(2)
                + state.v_z.get(i, j).powi(2));
        w2 += w * state.omega_theta.get(i, j).powi(2);
    }
    let expected = (v2.sqrt() + 1.0) * (w2.sqrt() + v2.sqrt() + E).ln().sqrt();

    let rel = (got / expected - 1.0).abs();
    assert!(rel < 1e-12, "kbar {got} vs brute force {expected}: rel {rel:.3e}");
    println!("ACCEPTANCE 6 PASS: kbar oracle equivalence, relative difference {rel:.3e} (< 1e-12)");
}

#[test]
fn criterion_07_thm12_scale_invariance() {
    // Stored decaying trajectory with enough look-back for r = 0.4.
    let dir = std::env::temp_dir().join("axiswirl_acceptance_thm12");
    let _ = std::fs::remove_dir_all(&dir);
    let config = RunConfig {
        grid: Grid::new(0.05, 3.0, -3.0, 3.0, 48, 96, false).unwrap(),
        t_end: 0.2,
        cfl_advective: 0.4,
        cfl_diffusive: 0.4,
        snapshot_stride: 20,
        retention: 0.18,
        initial: InitialCondition::Family(Family::Coupled),
        forcing: Some(Family::Coupled),
        monitors: vec![],
    };
    cli::cmd_run(&config, &dir).unwrap();

    let mut traj = Trajectory::new(f64::INFINITY);
    for p in cli::snapshot_paths(&dir).unwrap() {
        traj.push(axiswirl::snapshot::read_state(&p).unwrap()).unwrap();
    }

    // Monitor where omega_theta is O(1) so the ratio is meaningful.
    let rep = thm12_monitor(&traj, [0.4, 0.0, 1.0]).unwrap();
    assert!(rep.implied_constant.is_finite() && rep.implied_constant > 0.0);

    let scaled = rescale_trajectory(&traj, 2.0).unwrap();
    let rep2 = thm12_monitor(&scaled, [0.2, 0.0, 0.5]).unwrap();
    let rel = (rep2.implied_constant / rep.implied_constant - 1.0).abs();
    assert!(
        rel < 1e-10,
        "implied constant drift {rel:.3e} (orig {}, rescaled {})",
        rep.implied_constant,
        rep2.implied_constant
    );
    println!(
        "ACCEPTANCE 7 PASS: thm12 implied constant invariant under k=2 rescale, relative drift {rel:.3e} (< 1e-10)"
    );
}

#[test]
fn criterion_08_refinement_stability() {
    let domain = (0.05, 3.0, -3.0, 3.0);
    let grids = [(32usize, 64usize), (64, 128), (128, 256)];
    let mut osc = Vec::new();
    let mut biot = Vec::new();
    let mut t12 = Vec::new();
    for (n_r, n_z) in grids {
        let grid = Grid::new(domain.0, domain.1, domain.2, domain.3, n_r, n_z, false).unwrap();
        let traj = run_mms_trajectory(grid, Family::Coupled, 0.2, 0.19, 0.005);
        let latest = traj.latest().unwrap();

        let o = oscillation_check(latest, 0.65).unwrap();
        assert!(!o.clipped, "oscillation region should fit the domain");
        osc.push(o.implied_constant);

        let b = biot_savart_report(latest, [0.15, 0.0, 0.0], 2.0).unwrap();
        assert!(!b.clipped, "biot balls should fit the annulus");
        biot.push(b.implied_constant);

        // z = 1 keeps omega_theta of the coupled family O(1) at the point.
        let t = thm12_monitor(&traj, [0.4, 0.0, 1.0]).unwrap();
        t12.push(t.implied_constant);
    }
    let drift = |v: &[f64]| (v[2] / v[1] - 1.0).abs();
    let (d_osc, d_biot, d_t12) = (drift(&osc), drift(&biot), drift(&t12));
    assert!(d_osc < 0.2, "oscillation drift {d_osc:.3} (values {osc:?})");
    assert!(d_biot < 0.2, "biot drift {d_biot:.3} (values {biot:?})");
    assert!(d_t12 < 0.2, "thm12 drift {d_t12:.3} (values {t12:?})");
    println!(
        "ACCEPTANCE 8 PASS: implied constants refinement-stable between two finest grids: oscillation {d_osc:.3}, biot-savart {d_biot:.3}, thm12 {d_t12:.3} (< 0.2)"
    );
}

#[test]
fn criterion_09_stream_roundtrip() {
    let grid = Grid::new(0.5, 5.0, -5.0, 5.0, 48, 96, false).unwrap();
    let solver = StreamSolver::new(&grid).unwrap();
    let seeds: Vec<(&str, Box<dyn Fn(f64, f64) -> f64>)> = vec![
        ("r_sin_z", Box::new(|r: f64, z: f64| r * z.sin())),
        ("c_over_r", Box::new(|r: f64, _z: f64| 1.5 / r)),
        ("mixed", Box::new(|r: f64, z: f64| r * z.sin() + 0.5 / r)),
    ];
    let mut worst = 0.0_f64;
    for (name, seed) in &seeds {
        let l0 = ScalarField::from_fn(grid, "l0", |r, z| seed(r, z));
        let (v_r, v_z) = axiswirl::elliptic::velocity_from_stream(&l0);
        let omega = axiswirl::field::curl_theta(&v_r, &v_z);
        let (l1, report) = solver.solve(&omega, &StreamBc::Field(&l0)).unwrap();
        let mut err = 0.0_f64;
        for (a, b) in l1.values().iter().zip(l0.values()) {
            err = err.max((a - b).abs());
        }
        let allowance = 10.0 * (report.tolerance + grid.h_r * grid.h_r * l0.max_abs());
        assert!(err <= allowance, "{name}: err {err:.3e} > {allowance:.3e}");
        worst = worst.max(err / allowance);
    }
    println!(
        "ACCEPTANCE 9 PASS: stream roundtrip on {} seeds, worst error at {:.2}% of allowance",
        seeds.len(),
        100.0 * worst
    );
}

#[test]
fn criterion_10_biot_savart_closed_form() {
    let grid = Grid::new(0.02, 1.0, -1.0, 1.0, 64, 128, false).unwrap();
    let mut state = FlowState::from_prognostic(
        0.0,
        ScalarField::zeros(grid, "gamma"),
        ScalarField::zeros(grid, "omega"),
    );
    state.v_z = ScalarField::constant(grid, "v_z", 1.0);
    let rep = biot_savart_report(&state, [0.1, 0.0, 0.0], 2.0).unwrap();
    assert!(!rep.clipped);
    let err = (rep.implied_constant - 0.173).abs() / 0.173;
    assert!(
        err < 0.02,
        "implied constant {} vs 0.173: {err:.4}",
        rep.implied_constant
    );
    // The exact value is 1/sqrt(32 pi / 3).
    let exact = 1.0 / (32.0 * PI / 3.0_f64).sqrt();
    assert!((rep.implied_constant - exact).abs() < 1e-6);
    println!(
        "ACCEPTANCE 10 PASS: uniform-field biot-savart implied constant {:.6} within 2% of 0.173",
        rep.implied_constant
    );
}
