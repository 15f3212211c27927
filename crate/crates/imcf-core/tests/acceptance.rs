//! End-to-end acceptance checks, one per shipped guarantee. Each test
//! prints one `ACCEPTANCE <k> <name>: PASS|FAIL` line (visible with
//! `cargo test --test acceptance -- --nocapture`).

use std::f64::consts::PI;
use std::process::Command;
use std::time::Instant;

use imcf_core::certificates::{check, default_tolerance, ode_compare, InitialStats};
use imcf_core::decay::{verify_rates, RateStatus};
use imcf_core::flow::{
    evolve, evolution_residual, monitors, EvolvedQuantity, FlowConfig, Termination, Trajectory,
};
use imcf_core::geometry::geometry;
use imcf_core::grid::{GraphState, Grid};
use imcf_core::initial::{make_initial, InitialFamily};
use imcf_core::io;

const TAU: f64 = 2.0 * PI;

fn report(k: usize, name: &str, ok: bool, detail: &str) {
    println!("ACCEPTANCE {k} {name}: {}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {k} ({name}): {detail}");
}

fn perturbed_state(npts: usize) -> GraphState {
    let grid = Grid::new(1, npts, TAU).unwrap();
    GraphState::from_fn(grid, 0.0, |x, _| 1.0 + 0.1 * x.sin()).unwrap()
}

fn perturbed_run(npts: usize, t_end: f64) -> (Trajectory, InitialStats) {
    let state = perturbed_state(npts);
    let stats = InitialStats::from_state(&state).unwrap();
    let traj = evolve(
        &state,
        &FlowConfig {
            t_end,
            ..FlowConfig::default()
        },
    )
    .unwrap();
    assert!(traj.termination.completed());
    (traj, stats)
}

#[test]
fn acceptance_01_horosphere_exactness() {
    let grid = Grid::new(2, 64, TAU).unwrap();
    let state = GraphState::from_fn(grid, 0.0, |_, _| 1.0).unwrap();
    let start = Instant::now();
    let traj = evolve(
        &state,
        &FlowConfig {
            t_end: 2.0,
            ..FlowConfig::default()
        },
    )
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let err = traj
        .samples
        .iter()
        .map(|s| {
            let exact = (-s.t / 2.0).exp();
            (s.y_sup - exact).abs().max((s.y_inf - exact).abs())
        })
        .fold(0.0f64, f64::max);
    report(
        1,
        "horosphere_exactness",
        err <= 1e-8 && elapsed < 10.0,
        &format!("max |y_sup - e^(-t/2)| = {err:.3e}, runtime {elapsed:.2}s"),
    );
}

#[test]
fn acceptance_02_geometry_oracle_order() {
    // Closed form for y = 1 + 0.1 sin x on the line:
    // H = (1 + y y'' / v^2) / v with v^2 = 1 + (0.1 cos x)^2.
    let sup_err = |npts: usize| -> f64 {
        let state = perturbed_state(npts);
        let geo = geometry(&state).unwrap();
        let grid = state.grid;
        (0..npts)
            .map(|i| {
                let x = grid.coord(i);
                let y = 1.0 + 0.1 * x.sin();
                let yp = 0.1 * x.cos();
                let ypp = -0.1 * x.sin();
                let v2 = 1.0 + yp * yp;
                let exact = (1.0 + y * ypp / v2) / v2.sqrt();
                (geo.mean_curv[i] - exact).abs()
            })
            .fold(0.0f64, f64::max)
    };
    let (e64, e128, e256) = (sup_err(64), sup_err(128), sup_err(256));
    let (o1, o2) = ((e64 / e128).log2(), (e128 / e256).log2());
    report(
        2,
        "geometry_oracle_order",
        o1 >= 1.9 && o2 >= 1.9,
        &format!("errors {e64:.3e} -> {e128:.3e} -> {e256:.3e}, orders {o1:.2}, {o2:.2}"),
    );
}

#[test]
fn acceptance_03_geodesic_null_test() {
    // Semicircle of radius 1 centered on the boundary is a geodesic: H = 0.
    // The patch x in [0, 1.6) maps to the chord |x - 0.8| <= 0.8.
    let sup_interior = |npts: usize| -> f64 {
        let grid = Grid::new(1, npts, 1.6).unwrap();
        let state =
            GraphState::from_fn(grid, 0.0, |x, _| (1.0 - (x - 0.8) * (x - 0.8)).sqrt()).unwrap();
        let geo = geometry(&state).unwrap();
        // Sup over the same physical region at every resolution, so the
        // measured order is not polluted by the region creeping toward the
        // patch edge. The 0.1 margin also keeps every stencil away from
        // the slope kink at the seam.
        (0..npts)
            .filter(|&i| {
                let x = grid.coord(i);
                (0.1..=1.5).contains(&x)
            })
            .map(|i| geo.mean_curv[i].abs())
            .fold(0.0f64, f64::max)
    };
    let h = |npts: usize| 1.6 / npts as f64;
    let (e64, e128, e256) = (sup_interior(64), sup_interior(128), sup_interior(256));
    let scale_k = e64 / (h(64) * h(64));
    let bound_ok = e128 <= 5.0 * h(128) * h(128) * scale_k && e256 <= 5.0 * h(256) * h(256) * scale_k;
    let (o1, o2) = ((e64 / e128).log2(), (e128 / e256).log2());
    report(
        3,
        "geodesic_null_test",
        bound_ok && o1 >= 1.9 && o2 >= 1.9,
        &format!(
            "sup|H| {e64:.3e} -> {e128:.3e} -> {e256:.3e}, K = {scale_k:.2}, orders {o1:.2}, {o2:.2}"
        ),
    );
}

#[test]
fn acceptance_04_barrier_certificates() {
    let (traj, stats) = perturbed_run(256, 3.0);
    let tol = default_tolerance(TAU / 256.0);
    let rep = check(&traj, &stats, tol);
    let names = ["y_barriers", "w_lower", "v_upper", "H_upper", "H_lower"];
    let mut detail = String::new();
    let ok = names.iter().all(|name| {
        let r = rep.get(name).unwrap();
        detail.push_str(&format!(
            "{name}: {} margin {:.3e}; ",
            if r.passed { "PASS" } else { "FAIL" },
            r.worst_margin
        ));
        r.passed
    });
    report(4, "barrier_certificates", ok, &detail);
}

#[test]
fn acceptance_05_ode_comparison() {
    let (traj, stats) = perturbed_run(256, 3.0);
    let tol = default_tolerance(TAU / 256.0);
    let n = stats.n as f64;
    let times = traj.times();
    let phi = ode_compare(
        |u| (n * n - u * u) / (n * u),
        traj.samples[0].h_sup,
        &times,
        1e12,
    )
    .unwrap();
    let majorized = traj
        .samples
        .iter()
        .zip(&phi)
        .all(|(s, &bound)| s.h_sup <= bound + tol);

    // Closed form for n = 2, phi(0) = 3: phi(t) = sqrt(4 + 5 e^{-t}).
    let grid: Vec<f64> = (0..=50).map(|k| 0.1 * k as f64).collect();
    let phi5 = *ode_compare(|u| (4.0 - u * u) / (2.0 * u), 3.0, &grid, 1e12)
        .unwrap()
        .last()
        .unwrap();
    let exact = (4.0 + 5.0 * (-5.0f64).exp()).sqrt();
    let closed_ok = (phi5 - exact).abs() <= 1e-6;
    report(
        5,
        "ode_comparison",
        majorized && closed_ok,
        &format!("majorized={majorized}, phi(5)={phi5:.8} vs {exact:.8}"),
    );
}

#[test]
fn acceptance_06_decay_rates() {
    let (traj, stats) = perturbed_run(256, 4.0);
    let rep = verify_rates(&traj, &stats);
    let grad = rep.get("grad_sup2").unwrap();
    let g = rep.get("G_sup").unwrap();
    let gf = grad.fit.unwrap();
    let gg = g.fit.unwrap();
    let ok = (1.6..=2.4).contains(&gf.rate)
        && gf.r_squared >= 0.98
        && (3.2..=4.8).contains(&gg.rate)
        && gg.r_squared >= 0.98
        && grad.status == RateStatus::Pass
        && g.status == RateStatus::Pass;
    report(
        6,
        "decay_rates",
        ok,
        &format!(
            "grad_sup2 rate {:.4} (r2 {:.4}), G_sup rate {:.4} (r2 {:.4})",
            gf.rate, gf.r_squared, gg.rate, gg.r_squared
        ),
    );
}

#[test]
fn acceptance_07_evolution_identity_residual() {
    let residual = |npts: usize, snaps: &[f64]| -> f64 {
        let state = perturbed_state(npts);
        let traj = evolve(
            &state,
            &FlowConfig {
                t_end: *snaps.last().unwrap(),
                snapshot_times: snaps.to_vec(),
                sample_stride: 1000,
                ..FlowConfig::default()
            },
        )
        .unwrap();
        evolution_residual(&traj, EvolvedQuantity::W)
            .unwrap()
            .into_iter()
            .fold(0.0f64, f64::max)
    };
    let coarse = residual(64, &[2.0, 2.1, 2.2]);
    let fine = residual(128, &[2.0, 2.05, 2.1]);
    let factor = coarse / fine;

    // Negative control: three frozen copies of the initial state labelled
    // with advancing times do not satisfy the evolution identity.
    let state = perturbed_state(64);
    let sample = monitors(&state).unwrap();
    let fabricated = Trajectory {
        samples: vec![sample],
        snapshots: [2.0, 2.1, 2.2]
            .iter()
            .map(|&t| {
                let mut s = state.clone();
                s.t = t;
                s
            })
            .collect(),
        termination: Termination::Completed,
        steps: 0,
    };
    let fake = evolution_residual(&fabricated, EvolvedQuantity::W)
        .unwrap()
        .into_iter()
        .fold(0.0f64, f64::max);

    report(
        7,
        "evolution_identity_residual",
        factor >= 3.0 && fake >= 0.1 && fake >= 10.0 * coarse,
        &format!("coarse {coarse:.3e}, fine {fine:.3e}, factor {factor:.2}, fabricated {fake:.3e}"),
    );
}

#[test]
fn acceptance_08_p_boundedness() {
    let (traj, stats) = perturbed_run(256, 3.0);
    let n = stats.n as f64;
    let hw_inf = traj
        .samples
        .iter()
        .map(|s| s.h_inf * s.w_inf)
        .fold(f64::INFINITY, f64::min);
    let c0p = (n + 8.0 * stats.d * stats.d) / (2.0 * hw_inf);
    let threshold = stats.p_max0.max(c0p);
    let p_worst = traj
        .samples
        .iter()
        .map(|s| s.p_max_sup)
        .fold(f64::NEG_INFINITY, f64::max);
    let cert = check(&traj, &stats, default_tolerance(TAU / 256.0));
    let ok = p_worst <= threshold * 1.1 && cert.get("P_boundedness").unwrap().passed;
    report(
        8,
        "p_boundedness",
        ok,
        &format!("sup P_max {p_worst:.4} vs 1.1 * max(P_max0, c0') = {:.4}", 1.1 * threshold),
    );
}

#[test]
fn acceptance_09_invariance_suite() {
    // Scaling by 2 is exact in floating point, so the H field must match
    // to full precision.
    let state = perturbed_state(64);
    let scaled = state.scaled(2.0).unwrap();
    let (g1, g2) = (geometry(&state).unwrap(), geometry(&scaled).unwrap());
    let scale_err = g1
        .mean_curv
        .iter()
        .zip(&g2.mean_curv)
        .map(|(a, b)| ((a - b) / a).abs())
        .fold(0.0f64, f64::max);

    // Mirror-symmetric initial data built from the reflected index stays
    // mirror-symmetric along the flow.
    let n = 64usize;
    let grid = Grid::new(1, n, TAU).unwrap();
    let h = TAU / n as f64;
    let y0: Vec<f64> = (0..n)
        .map(|i| {
            let d = i.min(n - i) as f64 * h;
            1.0 + 0.1 * d.cos()
        })
        .collect();
    let even_state = GraphState::new(grid, 0.0, y0).unwrap();
    let traj = evolve(
        &even_state,
        &FlowConfig {
            t_end: 0.3,
            snapshot_times: vec![0.3],
            ..FlowConfig::default()
        },
    )
    .unwrap();
    let yt = traj.snapshots.last().unwrap();
    let even_err = (1..n)
        .map(|i| {
            let (a, b) = (yt.at(i, 0), yt.at(n - i, 0));
            ((a - b) / a).abs()
        })
        .fold(0.0f64, f64::max);

    // Snapshot write/read is bit-exact on the evolved state.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inv.snap");
    io::write_snapshot(&path, yt).unwrap();
    let back = io::read_snapshot(&path).unwrap();
    let roundtrip_ok = back.t.to_bits() == yt.t.to_bits()
        && back
            .y()
            .iter()
            .zip(yt.y())
            .all(|(a, b)| a.to_bits() == b.to_bits());

    // Re-running the same configuration reproduces monitors bit for bit.
    let (t1, _) = perturbed_run(64, 1.0);
    let (t2, _) = perturbed_run(64, 1.0);
    let (p1, p2) = (dir.path().join("m1.csv"), dir.path().join("m2.csv"));
    io::write_monitors(&p1, &t1.samples).unwrap();
    io::write_monitors(&p2, &t2.samples).unwrap();
    let rerun_ok = std::fs::read(&p1).unwrap() == std::fs::read(&p2).unwrap();

    report(
        9,
        "invariance_suite",
        scale_err <= 1e-12 && even_err <= 1e-12 && roundtrip_ok && rerun_ok,
        &format!(
            "scaling rel err {scale_err:.2e}, evenness rel err {even_err:.2e}, \
             roundtrip {roundtrip_ok}, rerun identical {rerun_ok}"
        ),
    );
}

#[test]
fn acceptance_10_negative_controls() {
    // Non-decaying fabricated monitors fail the height barrier.
    let (mut traj, stats) = perturbed_run(64, 1.5);
    let frozen = traj.samples[0].y_sup;
    for s in &mut traj.samples {
        s.y_sup = frozen;
    }
    let rep = check(&traj, &stats, default_tolerance(TAU / 64.0));
    let barrier_fails = !rep.get("y_barriers").unwrap().passed;

    // Amplitude >= height touches the boundary: inadmissible.
    let grid = Grid::new(1, 64, TAU).unwrap();
    let inadmissible = matches!(
        make_initial(
            &InitialFamily::Sine {
                height: 1.0,
                amplitude: 1.0,
                wave: vec![1],
            },
            grid,
        ),
        Err(imcf_core::error::Error::InadmissibleInitialData { .. })
    );

    // A positive graph that is not mean-convex halts the integrator with
    // the curvature label on the first stage.
    let bad = GraphState::from_fn(grid, 0.0, |x, _| 2.0 + 1.9 * x.cos()).unwrap();
    let broken = evolve(
        &bad,
        &FlowConfig {
            t_end: 1.0,
            ..FlowConfig::default()
        },
    )
    .unwrap();
    let convexity_label = matches!(broken.termination, Termination::LostMeanConvexity { .. })
        && broken.termination.label() == "lost_mean_convexity"
        && !broken.termination.completed();

    // A run that breaks down mid-flow exits the CLI with code 3 and still
    // writes its outputs.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("break.conf");
    std::fs::write(
        &cfg,
        "dimension = 1\n\
         grid.points_per_axis = 8\n\
         grid.length = 6.283185307179586\n\
         initial.family = sine\n\
         initial.height = 1.0\n\
         initial.amplitude = 0.3\n\
         initial.wave = 1\n\
         flow.scheme = euler\n\
         flow.safety = 1.0\n\
         flow.t_end = 5.0\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_imcf"))
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .expect("imcf binary runs");
    let exit3 = status.status.code() == Some(3);
    let outputs_written = out.join("monitors.csv").exists();

    report(
        10,
        "negative_controls",
        barrier_fails && inadmissible && convexity_label && exit3 && outputs_written,
        &format!(
            "barrier_fails={barrier_fails}, inadmissible={inadmissible}, \
             convexity_label={convexity_label}, exit3={exit3}, outputs={outputs_written}"
        ),
    );
}
