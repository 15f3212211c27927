//! Explicit time stepping of the graph flow, monitor sampling along the run,
//! particle tracing under the induced tangential motion, and residual checks
//! of the evolution identities.

use crate::error::{Error, Result};
use crate::geometry::{self, scalar_gradient, Vec2};
use crate::grid::GraphState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Rk4,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Rk4 => "rk4",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(format!("unknown scheme {other:?}, expected euler or rk4")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub scheme: Scheme,
    /// Fraction of the diffusive stability limit, in (0, 1].
    pub safety: f64,
    /// Absolute end time; 0 gives a single-sample trajectory.
    pub t_end: f64,
    /// Monitors are recorded every this many accepted steps, plus at t_end.
    pub sample_stride: usize,
    pub max_steps: usize,
    /// Times at which full states are stored; the stepper lands on them exactly.
    pub snapshot_times: Vec<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rk4,
            safety: 0.25,
            t_end: 1.0,
            sample_stride: 10,
            max_steps: 1_000_000,
            snapshot_times: Vec::new(),
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            problems.push(format!("safety must lie in (0, 1], got {}", self.safety));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            problems.push(format!("t_end must be finite and >= 0, got {}", self.t_end));
        }
        if self.sample_stride == 0 {
            problems.push("sample_stride must be >= 1".into());
        }
        if self.max_steps == 0 {
            problems.push("max_steps must be >= 1".into());
        }
        for &ts in &self.snapshot_times {
            if !(ts.is_finite() && ts >= 0.0 && ts <= self.t_end) {
                problems.push(format!(
                    "snapshot time {ts} outside [0, t_end = {}]",
                    self.t_end
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig {
                reason: problems.join("; "),
            })
        }
    }
}

/// Scalar monitors of one state. Column order of monitors.csv.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub y_inf: f64,
    pub y_sup: f64,
    pub v_sup: f64,
    pub w_inf: f64,
    pub h_inf: f64,
    pub h_sup: f64,
    /// sup |grad y|^2.
    pub grad_sup2: f64,
    /// sup of the largest Hessian entry magnitude.
    pub hess_sup: f64,
    /// sup of the umbilicity defect G.
    pub g_sup: f64,
    /// sup of the largest eigenvalue of P = (v y) A.
    pub p_max_sup: f64,
    /// H at the grid argmax of |grad y|^2 (first index on ties). Not a CSV
    /// column; None on trajectories reconstructed from disk.
    pub h_at_grad_argmax: Option<f64>,
}

/// Monitors of a single state.
pub fn monitors(state: &GraphState) -> Result<Sample> {
    let g = geometry::geometry(state)?;
    let np = state.grid.num_points();
    let dim = state.grid.dim();
    let mut v_sup = f64::NEG_INFINITY;
    let mut w_inf = f64::INFINITY;
    let mut h_inf = f64::INFINITY;
    let mut h_sup = f64::NEG_INFINITY;
    let mut grad_sup2 = f64::NEG_INFINITY;
    let mut argmax_grad = 0usize;
    let mut hess_sup = f64::NEG_INFINITY;
    let mut g_sup = f64::NEG_INFINITY;
    let mut p_max_sup = f64::NEG_INFINITY;
    for p in 0..np {
        v_sup = v_sup.max(g.v[p]);
        w_inf = w_inf.min(g.w[p]);
        h_inf = h_inf.min(g.mean_curv[p]);
        h_sup = h_sup.max(g.mean_curv[p]);
        let g2 = g.grad[p][0] * g.grad[p][0] + g.grad[p][1] * g.grad[p][1];
        if g2 > grad_sup2 {
            grad_sup2 = g2;
            argmax_grad = p;
        }
        for i in 0..dim {
            for j in 0..dim {
                hess_sup = hess_sup.max(g.hess[p][i][j].abs());
            }
        }
        g_sup = g_sup.max(g.umbilicity[p]);
        p_max_sup = p_max_sup.max(g.p_max[p]);
    }
    Ok(Sample {
        t: state.t,
        y_inf: state.y_inf(),
        y_sup: state.y_sup(),
        v_sup,
        w_inf,
        h_inf,
        h_sup,
        grad_sup2,
        hess_sup,
        g_sup,
        p_max_sup,
        h_at_grad_argmax: Some(g.mean_curv[argmax_grad]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    /// vH reached zero; index and integrator stage where it was detected.
    LostMeanConvexity { index: usize, stage: u8 },
    /// A stage produced a non-positive height.
    HeightNonPositive { index: usize, stage: u8 },
    MaxStepsExceeded,
}

impl Termination {
    pub fn completed(&self) -> bool {
        matches!(self, Termination::Completed)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::LostMeanConvexity { .. } => "lost_mean_convexity",
            Termination::HeightNonPositive { .. } => "height_non_positive",
            Termination::MaxStepsExceeded => "max_steps_exceeded",
        }
    }

    fn from_error(e: &Error) -> Option<Self> {
        match *e {
            Error::LostMeanConvexity { index, stage } => {
                Some(Termination::LostMeanConvexity { index, stage })
            }
            Error::HeightNonPositive { index, stage } => {
                Some(Termination::HeightNonPositive { index, stage })
            }
            Error::NonPositiveHeight { index, .. } => {
                Some(Termination::HeightNonPositive { index, stage: 0 })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Monitor rows; first is the initial state, last is the final state.
    pub samples: Vec<Sample>,
    /// Full states at the configured snapshot times, in time order.
    pub snapshots: Vec<GraphState>,
    pub termination: Termination,
    pub steps: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }
}

/// Largest stable explicit step: safety * h^2 / (2 dim sup(y^2/H^2)).
pub fn stable_dt(state: &GraphState, safety: f64) -> Result<f64> {
    let grid = state.grid;
    let dim = grid.dim();
    let (grad, hess) = geometry::derivatives(state);
    let mut sup_ratio = 0.0f64;
    for p in 0..grid.num_points() {
        let y = state.y()[p];
        let g = grad[p];
        let v2 = 1.0 + g[0] * g[0] + g[1] * g[1];
        let mut trace_term = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let kron = if i == j { 1.0 } else { 0.0 };
                trace_term += (kron - g[i] * g[j] / v2) * hess[p][i][j];
            }
        }
        let h_mean = (dim as f64 + y * trace_term) / v2.sqrt();
        if !(h_mean > 0.0) {
            return Err(Error::LostMeanConvexity { index: p, stage: 0 });
        }
        let r = y / h_mean;
        sup_ratio = sup_ratio.max(r * r);
    }
    let h = grid.spacing();
    Ok(safety * h * h / (2.0 * dim as f64 * sup_ratio))
}

fn check_positive(y: &[f64], stage: u8) -> Result<()> {
    for (index, &v) in y.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::HeightNonPositive { index, stage });
        }
    }
    Ok(())
}

fn speed_at_stage(state: &GraphState, stage: u8) -> Result<Vec<f64>> {
    geometry::speed(state).map_err(|e| match e {
        Error::LostMeanConvexity { index, .. } => Error::LostMeanConvexity { index, stage },
        other => other,
    })
}

/// One explicit step. Positivity and mean convexity are enforced at every
/// stage; failures name the stage (1-based) and flat index.
pub fn step(state: &GraphState, dt: f64, scheme: Scheme) -> Result<GraphState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig {
            reason: format!("step size must be positive and finite, got {dt}"),
        });
    }
    let grid = state.grid;
    let y0 = state.y();
    match scheme {
        Scheme::Euler => {
            let k1 = speed_at_stage(state, 1)?;
            let y1: Vec<f64> = y0.iter().zip(&k1).map(|(y, k)| y + dt * k).collect();
            check_positive(&y1, 1)?;
            GraphState::new(grid, state.t + dt, y1)
        }
        Scheme::Rk4 => {
            let stage_state = |y: Vec<f64>, t: f64, stage: u8| -> Result<GraphState> {
                check_positive(&y, stage)?;
                GraphState::new(grid, t, y)
            };
            let half = 0.5 * dt;
            let k1 = speed_at_stage(state, 1)?;
            let s2 = stage_state(
                y0.iter().zip(&k1).map(|(y, k)| y + half * k).collect(),
                state.t + half,
                2,
            )?;
            let k2 = speed_at_stage(&s2, 2)?;
            let s3 = stage_state(
                y0.iter().zip(&k2).map(|(y, k)| y + half * k).collect(),
                state.t + half,
                3,
            )?;
            let k3 = speed_at_stage(&s3, 3)?;
            let s4 = stage_state(
                y0.iter().zip(&k3).map(|(y, k)| y + dt * k).collect(),
                state.t + dt,
                4,
            )?;
            let k4 = speed_at_stage(&s4, 4)?;
            let sixth = dt / 6.0;
            let y1: Vec<f64> = (0..y0.len())
                .map(|p| y0[p] + sixth * (k1[p] + 2.0 * k2[p] + 2.0 * k3[p] + k4[p]))
                .collect();
            check_positive(&y1, 4)?;
            GraphState::new(grid, state.t + dt, y1)
        }
    }
}

/// Runs the flow from `initial` to t_end with adaptive stable steps, landing
/// exactly on snapshot times and t_end. Breakdown is not an error: the
/// trajectory is returned truncated with the matching termination.
pub fn evolve(initial: &GraphState, config: &FlowConfig) -> Result<Trajectory> {
    config.validate()?;
    let t_end = config.t_end;
    let eps_t = 1e-9 * (t_end - initial.t).abs().max(1.0);

    let mut pending: Vec<f64> = config.snapshot_times.clone();
    pending.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    pending.dedup_by(|a, b| (*a - *b).abs() <= eps_t);

    let mut state = initial.clone();
    let mut samples = vec![monitors(&state)?];
    let mut snapshots = Vec::new();
    let mut next_snap = 0usize;
    if pending.first().is_some_and(|&ts| (ts - state.t).abs() <= eps_t) {
        snapshots.push(state.clone());
    }
    while pending.get(next_snap).is_some_and(|&ts| ts <= state.t + eps_t) {
        next_snap += 1;
    }

    let mut steps = 0usize;
    let termination = loop {
        if t_end - state.t <= eps_t {
            break Termination::Completed;
        }
        let dt_stable = match stable_dt(&state, config.safety) {
            Ok(dt) => dt,
            Err(e) => match Termination::from_error(&e) {
                Some(term) => break term,
                None => return Err(e),
            },
        };
        let hard = pending.get(next_snap).copied().unwrap_or(t_end).min(t_end);
        let gap = hard - state.t;
        let landing = dt_stable >= gap * (1.0 - 1e-12);
        let dt = if landing { gap } else { dt_stable };
        match step(&state, dt, config.scheme) {
            Ok(mut s) => {
                if landing {
                    s.t = hard;
                }
                state = s;
            }
            Err(e) => match Termination::from_error(&e) {
                Some(term) => break term,
                None => return Err(e),
            },
        }
        steps += 1;
        if landing && pending.get(next_snap).is_some_and(|&ts| ts == hard) {
            snapshots.push(state.clone());
            next_snap += 1;
        }
        let at_end = t_end - state.t <= eps_t;
        if at_end || steps % config.sample_stride == 0 {
            samples.push(monitors(&state)?);
        }
        if at_end {
            break Termination::Completed;
        }
        if steps >= config.max_steps {
            break Termination::MaxStepsExceeded;
        }
    };

    // The state standing when the loop broke is the last good one; make sure
    // it is recorded (breakdown and max-steps paths may miss the stride).
    if samples.last().map(|s| s.t) != Some(state.t) {
        samples.push(monitors(&state)?);
    }

    Ok(Trajectory {
        samples,
        snapshots,
        termination,
        steps,
    })
}

/// Trace of one seed point under the tangential drift of the graph flow.
#[derive(Debug, Clone)]
pub struct ParticlePath {
    /// Snapshot times, starting at the first snapshot.
    pub times: Vec<f64>,
    /// Position at each time, wrapped into [0, L)^dim.
    pub positions: Vec<Vec2>,
}

fn velocity_field(state: &GraphState) -> Result<Vec<Vec2>> {
    let g = geometry::geometry(state)?;
    let np = state.grid.num_points();
    let mut u = vec![[0.0; 2]; np];
    for p in 0..np {
        let h_mean = g.mean_curv[p];
        if !(h_mean > 0.0) {
            return Err(Error::LostMeanConvexity { index: p, stage: 0 });
        }
        let factor = state.y()[p] / (g.v[p] * h_mean);
        u[p][0] = factor * g.grad[p][0];
        u[p][1] = factor * g.grad[p][1];
    }
    Ok(u)
}

/// Periodic linear/bilinear sample of a vector field at an off-grid point.
fn sample_field(state: &GraphState, field: &[Vec2], pos: Vec2) -> Vec2 {
    let grid = state.grid;
    let n = grid.points_per_axis();
    let h = grid.spacing();
    let cell = |coord: f64| -> (usize, usize, f64) {
        let s = (coord / h).rem_euclid(n as f64);
        let i0 = s.floor() as usize % n;
        let frac = s - s.floor();
        ((i0) % n, (i0 + 1) % n, frac)
    };
    if grid.dim() == 1 {
        let (i0, i1, fx) = cell(pos[0]);
        let u = (1.0 - fx) * field[i0][0] + fx * field[i1][0];
        [u, 0.0]
    } else {
        let (i0, i1, fx) = cell(pos[0]);
        let (j0, j1, fy) = cell(pos[1]);
        let mut out = [0.0; 2];
        for c in 0..2 {
            let f00 = field[grid.flat(i0, j0)][c];
            let f10 = field[grid.flat(i1, j0)][c];
            let f01 = field[grid.flat(i0, j1)][c];
            let f11 = field[grid.flat(i1, j1)][c];
            out[c] = (1.0 - fx) * ((1.0 - fy) * f00 + fy * f01)
                + fx * ((1.0 - fy) * f10 + fy * f11);
        }
        out
    }
}

/// Integrates dx/dt = (y / (v H)) grad y for each seed through the stored
/// snapshots: RK4 in time, linear interpolation of the velocity field between
/// snapshots, periodic wrap in space.
pub fn trace_particles(traj: &Trajectory, seeds: &[Vec2]) -> Result<Vec<ParticlePath>> {
    let snaps = &traj.snapshots;
    if snaps.len() < 2 {
        return Err(Error::InsufficientSnapshots {
            needed: 2,
            got: snaps.len(),
        });
    }
    for w in snaps.windows(2) {
        if !(w[1].t > w[0].t) {
            return Err(Error::InvalidTimeGrid {
                reason: format!("snapshot times not increasing: {} then {}", w[0].t, w[1].t),
            });
        }
    }
    let fields: Vec<Vec<Vec2>> = snaps.iter().map(velocity_field).collect::<Result<_>>()?;
    let length = snaps[0].grid.length();
    let wrap = |p: Vec2| -> Vec2 { [p[0].rem_euclid(length), p[1].rem_euclid(length)] };

    const SUBSTEPS: usize = 32;
    let mut paths = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut pos = wrap(seed);
        let mut times = vec![snaps[0].t];
        let mut positions = vec![pos];
        for k in 0..snaps.len() - 1 {
            let (ta, tb) = (snaps[k].t, snaps[k + 1].t);
            let span = tb - ta;
            let dt = span / SUBSTEPS as f64;
            let vel = |p: Vec2, t: f64| -> Vec2 {
                let theta = ((t - ta) / span).clamp(0.0, 1.0);
                let a = sample_field(&snaps[k], &fields[k], p);
                let b = sample_field(&snaps[k + 1], &fields[k + 1], p);
                [
                    (1.0 - theta) * a[0] + theta * b[0],
                    (1.0 - theta) * a[1] + theta * b[1],
                ]
            };
            for s in 0..SUBSTEPS {
                let t = ta + s as f64 * dt;
                let k1 = vel(pos, t);
                let k2 = vel(
                    wrap([pos[0] + 0.5 * dt * k1[0], pos[1] + 0.5 * dt * k1[1]]),
                    t + 0.5 * dt,
                );
                let k3 = vel(
                    wrap([pos[0] + 0.5 * dt * k2[0], pos[1] + 0.5 * dt * k2[1]]),
                    t + 0.5 * dt,
                );
                let k4 = vel(wrap([pos[0] + dt * k3[0], pos[1] + dt * k3[1]]), t + dt);
                pos = wrap([
                    pos[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                    pos[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
                ]);
            }
            times.push(tb);
            positions.push(pos);
        }
        paths.push(ParticlePath { times, positions });
    }
    Ok(paths)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolvedQuantity {
    /// w = 1/(v y); satisfies (d/dt - H^{-2} Lap) w = (|A|^2/H^2) w.
    W,
    /// H; satisfies (d/dt - H^{-2} Lap) H = -2|grad H|^2/H^3 - |A|^2/H + dim/H.
    MeanCurvature,
}

/// Sup-norm residuals of the evolution identity at each interior snapshot.
///
/// The identities hold along the flow lines; the snapshots live at fixed grid
/// coordinates, so the time derivative is the centered difference plus the
/// tangential transport (y/(vH)) <grad y, grad q>. Requires at least three
/// uniformly spaced snapshots; the residual is O(dt^2 + h^2) on solutions.
pub fn evolution_residual(traj: &Trajectory, quantity: EvolvedQuantity) -> Result<Vec<f64>> {
    let snaps = &traj.snapshots;
    if snaps.len() < 3 {
        return Err(Error::InsufficientSnapshots {
            needed: 3,
            got: snaps.len(),
        });
    }
    let spacing = snaps[1].t - snaps[0].t;
    if !(spacing > 0.0) {
        return Err(Error::InvalidTimeGrid {
            reason: format!("snapshot spacing must be positive, got {spacing}"),
        });
    }
    for (k, w) in snaps.windows(2).enumerate() {
        let d = w[1].t - w[0].t;
        if (d - spacing).abs() > 1e-9 * spacing {
            return Err(Error::NonUniformSampling {
                interval: k,
                expected: spacing,
                got: d,
            });
        }
    }

    let geoms: Vec<_> = snaps
        .iter()
        .map(geometry::geometry)
        .collect::<Result<Vec<_>>>()?;
    let q_field = |k: usize| -> &[f64] {
        match quantity {
            EvolvedQuantity::W => &geoms[k].w,
            EvolvedQuantity::MeanCurvature => &geoms[k].mean_curv,
        }
    };

    let mut residuals = Vec::with_capacity(snaps.len() - 2);
    for k in 1..snaps.len() - 1 {
        let state = &snaps[k];
        let grid = state.grid;
        let dim = grid.dim();
        let g = &geoms[k];
        let q = q_field(k);
        let (q_prev, q_next) = (q_field(k - 1), q_field(k + 1));
        let lap = geometry::laplace_beltrami(state, q)?;
        let grad_q = scalar_gradient(grid, q);

        let mut worst = 0.0f64;
        for p in 0..grid.num_points() {
            let h_mean = g.mean_curv[p];
            let dq_dt = (q_next[p] - q_prev[p]) / (2.0 * spacing);
            let mut drift = 0.0;
            for i in 0..dim {
                drift += g.grad[p][i] * grad_q[p][i];
            }
            drift *= state.y()[p] / (g.v[p] * h_mean);
            let rhs = match quantity {
                EvolvedQuantity::W => g.shape_norm2[p] / (h_mean * h_mean) * g.w[p],
                EvolvedQuantity::MeanCurvature => {
                    let mut grad_h2 = 0.0;
                    for i in 0..dim {
                        for j in 0..dim {
                            grad_h2 += g.metric_inv[p][i][j] * grad_q[p][i] * grad_q[p][j];
                        }
                    }
                    -2.0 * grad_h2 / (h_mean * h_mean * h_mean)
                        - g.shape_norm2[p] / h_mean
                        + dim as f64 / h_mean
                }
            };
            let res = dq_dt + drift - lap[p] / (h_mean * h_mean) - rhs;
            worst = worst.max(res.abs());
        }
        residuals.push(worst);
    }
    Ok(residuals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    fn flat(dim: usize, n: usize, y0: f64) -> GraphState {
        let grid = Grid::new(dim, n, TAU).unwrap();
        GraphState::from_fn(grid, 0.0, |_, _| y0).unwrap()
    }

    fn sine(n: usize, c: f64, a: f64) -> GraphState {
        let grid = Grid::new(1, n, TAU).unwrap();
        GraphState::from_fn(grid, 0.0, |x, _| c + a * x.sin()).unwrap()
    }

    #[test]
    fn stable_dt_matches_explicit_formula() {
        // Flat y0 = 1 in two dimensions with h = 0.1: sup(y^2/H^2) = 1/4,
        // so dt = 0.25 * 0.01 / (4 * 0.25) = 0.0025.
        let grid = Grid::new(2, 8, 0.8).unwrap();
        let state = GraphState::from_fn(grid, 0.0, |_, _| 1.0).unwrap();
        let dt = stable_dt(&state, 0.25).unwrap();
        assert!((dt - 0.0025).abs() < 1e-12, "dt = {dt}");
    }

    #[test]
    fn stable_dt_fails_without_mean_convexity() {
        let grid = Grid::new(1, 64, TAU).unwrap();
        let state = GraphState::from_fn(grid, 0.0, |x, _| 2.0 + 1.9 * x.cos()).unwrap();
        assert!(matches!(
            stable_dt(&state, 0.25),
            Err(Error::LostMeanConvexity { .. })
        ));
    }

    #[test]
    fn flat_data_follows_exponential_height_exactly() {
        // Spatially constant data reduces the PDE to dy/dt = -y/dim.
        for (dim, scheme, tol) in [
            (1, Scheme::Rk4, 1e-8),
            (2, Scheme::Rk4, 1e-8),
            (2, Scheme::Euler, 1e-2),
        ] {
            let state = flat(dim, 16, 1.0);
            let config = FlowConfig {
                scheme,
                t_end: 0.5,
                ..FlowConfig::default()
            };
            let traj = evolve(&state, &config).unwrap();
            assert!(traj.termination.completed());
            for s in &traj.samples {
                let expect = (-s.t / dim as f64).exp();
                assert!(
                    (s.y_sup - expect).abs() < tol,
                    "dim {dim} {scheme:?}: y_sup {} vs {expect} at t={}",
                    s.y_sup,
                    s.t
                );
                // Constant data must stay constant to rounding.
                assert!(s.y_sup - s.y_inf <= 1e-12 * s.y_sup);
                assert_eq!(s.h_inf, s.h_sup);
            }
            let last = traj.final_sample();
            assert!((last.t - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_horizon_gives_single_sample() {
        let state = sine(64, 1.0, 0.1);
        let config = FlowConfig {
            t_end: 0.0,
            snapshot_times: vec![0.0],
            ..FlowConfig::default()
        };
        let traj = evolve(&state, &config).unwrap();
        assert!(traj.termination.completed());
        assert_eq!(traj.samples.len(), 1);
        assert_eq!(traj.samples[0].t, 0.0);
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.steps, 0);
        let direct = monitors(&state).unwrap();
        assert_eq!(traj.samples[0], direct);
    }

    #[test]
    fn snapshots_land_on_requested_times() {
        let state = sine(64, 1.0, 0.1);
        let config = FlowConfig {
            t_end: 0.5,
            snapshot_times: vec![0.0, 0.125, 0.25, 0.5],
            ..FlowConfig::default()
        };
        let traj = evolve(&state, &config).unwrap();
        let times: Vec<f64> = traj.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![0.0, 0.125, 0.25, 0.5]);
        assert!(traj.termination.completed());
        // Sample times are strictly increasing and end exactly at t_end.
        let ts = traj.times();
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*ts.last().unwrap(), 0.5);
    }

    #[test]
    fn gradient_monitor_decays_after_transient() {
        let state = sine(64, 1.0, 0.1);
        let config = FlowConfig {
            t_end: 1.0,
            ..FlowConfig::default()
        };
        let traj = evolve(&state, &config).unwrap();
        let skip = traj.samples.len() / 10;
        for w in traj.samples[skip..].windows(2) {
            assert!(
                w[1].grad_sup2 <= w[0].grad_sup2 * (1.0 + 1e-9),
                "grad_sup2 rose from {} to {} at t={}",
                w[0].grad_sup2,
                w[1].grad_sup2,
                w[1].t
            );
        }
    }

    #[test]
    fn breakdown_is_reported_not_raised() {
        // Mean convexity already lost at t = 0.
        let grid = Grid::new(1, 64, TAU).unwrap();
        let state = GraphState::from_fn(grid, 0.0, |x, _| 2.0 + 1.9 * x.cos()).unwrap();
        let traj = evolve(&state, &FlowConfig::default()).unwrap();
        assert!(matches!(
            traj.termination,
            Termination::LostMeanConvexity { .. }
        ));
        assert_eq!(traj.samples.len(), 1);
        assert_eq!(traj.steps, 0);
    }

    #[test]
    fn max_steps_terminates_cleanly() {
        let state = sine(64, 1.0, 0.1);
        let config = FlowConfig {
            t_end: 10.0,
            max_steps: 17,
            ..FlowConfig::default()
        };
        let traj = evolve(&state, &config).unwrap();
        assert_eq!(traj.termination, Termination::MaxStepsExceeded);
        assert_eq!(traj.steps, 17);
        assert_eq!(traj.final_sample().t, traj.samples[traj.samples.len() - 1].t);
        assert!(traj.final_sample().t < 10.0);
    }

    #[test]
    fn oversized_step_trips_positivity_guard() {
        let state = sine(64, 1.0, 0.1);
        match step(&state, 100.0, Scheme::Euler) {
            Err(Error::HeightNonPositive { stage: 1, .. }) => {}
            other => panic!("expected HeightNonPositive, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_collects_problems() {
        let config = FlowConfig {
            safety: 1.5,
            t_end: -1.0,
            sample_stride: 0,
            ..FlowConfig::default()
        };
        match config.validate() {
            Err(Error::InvalidConfig { reason }) => {
                assert!(reason.contains("safety"));
                assert!(reason.contains("t_end"));
                assert!(reason.contains("sample_stride"));
            }
            other => panic!("expected InvalidConfig, got {other:?}"),
        }
    }

    #[test]
    fn even_data_stays_exactly_even() {
        // Build data even about L/2 exactly in floating point by mirroring
        // stored values; the stepper must preserve the symmetry bitwise.
        let n = 64;
        let grid = Grid::new(1, n, TAU).unwrap();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let k = i.min(n - i);
            y[i] = 1.0 + 0.1 * (k as f64 * grid.spacing()).cos();
        }
        let state = GraphState::new(grid, 0.0, y).unwrap();
        let config = FlowConfig {
            t_end: 0.5,
            snapshot_times: vec![0.5],
            ..FlowConfig::default()
        };
        let traj = evolve(&state, &config).unwrap();
        let final_y = traj.snapshots[0].y();
        for i in 1..n {
            assert_eq!(final_y[i], final_y[n - i], "asymmetry at {i}");
        }
    }

    #[test]
    fn tracer_is_stationary_on_flat_data() {
        let state = flat(2, 16, 1.0);
        let config = FlowConfig {
            t_end: 1.0,
            snapshot_times: vec![0.0, 0.5, 1.0],
            ..FlowConfig::default()
        };
        let traj = evolve(&state, &config).unwrap();
        let seeds = [[1.0, 2.0], [0.1, 5.0]];
        let paths = trace_particles(&traj, &seeds).unwrap();
        for (path, seed) in paths.iter().zip(&seeds) {
            assert_eq!(path.times.len(), 3);
            for pos in &path.positions {
                assert_eq!(pos[0], seed[0]);
                assert_eq!(pos[1], seed[1]);
            }
        }
    }

    #[test]
    fn tracer_symmetry_point_and_mirror_seeds() {
        // Data even about x = pi: the symmetry point is a fixed point of the
        // drift, and mirrored seeds trace mirrored paths.
        let n = 64;
        let grid = Grid::new(1, n, TAU).unwrap();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let k = i.min(n - i);
            y[i] = 1.0 - 0.1 * (k as f64 * grid.spacing()).cos();
        }
        let state = GraphState::new(grid, 0.0, y).unwrap();
        let config = FlowConfig {
            t_end: 1.0,
            snapshot_times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            ..FlowConfig::default()
        };
        let traj = evolve(&state, &config).unwrap();
        let d = 0.4;
        let paths = trace_particles(&traj, &[[PI, 0.0], [PI + d, 0.0], [PI - d, 0.0]]).unwrap();
        for pos in &paths[0].positions {
            assert!((pos[0] - PI).abs() < 1e-9, "symmetry point drifted: {}", pos[0]);
        }
        for (plus, minus) in paths[1].positions.iter().zip(&paths[2].positions) {
            let mirror = (plus[0] - PI) + (minus[0] - PI);
            assert!(mirror.abs() < 1e-9, "mirror defect {mirror}");
        }
        // The mirrored seeds actually move.
        let moved = (paths[1].positions.last().unwrap()[0] - (PI + d)).abs();
        assert!(moved > 1e-4, "expected genuine drift, moved {moved}");
    }

    #[test]
    fn tracer_needs_two_snapshots() {
        let state = sine(64, 1.0, 0.1);
        let config = FlowConfig {
            t_end: 0.2,
            snapshot_times: vec![0.2],
            ..FlowConfig::default()
        };
        let traj = evolve(&state, &config).unwrap();
        assert!(matches!(
            trace_particles(&traj, &[[0.0, 0.0]]),
            Err(Error::InsufficientSnapshots { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn residuals_on_flat_data_are_integrator_error_only() {
        let state = flat(2, 16, 1.0);
        let config = FlowConfig {
            t_end: 0.002,
            snapshot_times: vec![0.0, 0.001, 0.002],
            ..FlowConfig::default()
        };
        let traj = evolve(&state, &config).unwrap();
        for q in [EvolvedQuantity::W, EvolvedQuantity::MeanCurvature] {
            let res = evolution_residual(&traj, q).unwrap();
            assert_eq!(res.len(), 1);
            assert!(res[0] <= 1e-6, "{q:?} residual {}", res[0]);
        }
    }

    #[test]
    fn residual_halves_twice_when_resolution_doubles() {
        let run = |n: usize, spacing: f64| -> f64 {
            let state = sine(n, 1.0, 0.1);
            let times: Vec<f64> = (0..=4).map(|k| 0.5 + k as f64 * spacing).collect();
            let config = FlowConfig {
                t_end: *times.last().unwrap(),
                snapshot_times: times,
                ..FlowConfig::default()
            };
            let traj = evolve(&state, &config).unwrap();
            let res = evolution_residual(&traj, EvolvedQuantity::W).unwrap();
            res.into_iter().fold(0.0, f64::max)
        };
        let coarse = run(64, 0.1);
        let fine = run(128, 0.05);
        assert!(
            coarse / fine >= 3.0,
            "residual ratio {:.2} (coarse {coarse:.3e}, fine {fine:.3e})",
            coarse / fine
        );
    }

    #[test]
    fn residual_flags_fabricated_snapshots() {
        // Identical states with claimed distinct times do not solve the flow.
        let state = sine(64, 1.0, 0.1);
        let mut snapshots = Vec::new();
        for k in 0..3 {
            let mut s = state.clone();
            s.t = 0.1 * k as f64;
            snapshots.push(s);
        }
        let traj = Trajectory {
            samples: vec![monitors(&state).unwrap()],
            snapshots,
            termination: Termination::Completed,
            steps: 0,
        };
        let res = evolution_residual(&traj, EvolvedQuantity::W).unwrap();
        assert!(res[0] >= 0.1, "fabricated residual {}", res[0]);
    }

    #[test]
    fn residual_rejects_nonuniform_snapshot_times() {
        let state = sine(64, 1.0, 0.1);
        let config = FlowConfig {
            t_end: 0.35,
            snapshot_times: vec![0.0, 0.1, 0.35],
            ..FlowConfig::default()
        };
        let traj = evolve(&state, &config).unwrap();
        assert!(matches!(
            evolution_residual(&traj, EvolvedQuantity::W),
            Err(Error::NonUniformSampling { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        /// Flat data stays flat under either scheme for any admissible height.
        #[test]
        fn flat_preservation(y0 in 0.3f64..3.0, euler in any::<bool>()) {
            let state = flat(1, 16, y0);
            let config = FlowConfig {
                scheme: if euler { Scheme::Euler } else { Scheme::Rk4 },
                t_end: 0.1,
                ..FlowConfig::default()
            };
            let traj = evolve(&state, &config).unwrap();
            prop_assert!(traj.termination.completed());
            for s in &traj.samples {
                prop_assert!(s.y_sup - s.y_inf <= 1e-12 * s.y_sup);
            }
        }
    }
}
