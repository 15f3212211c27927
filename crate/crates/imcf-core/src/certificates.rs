//! Runtime certificates: closed-form a-priori bounds on the flow, evaluated
//! against the sampled monitors of an actual run. Failures are report rows,
//! never exceptions, so a broken run still yields a diagnosis.

use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::grid::GraphState;

/// Monitor statistics of the initial state plus the metric-equivalence
/// constant D; every certificate constant is derived from these, none are
/// hard-coded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialStats {
    pub n: usize,
    pub y_inf0: f64,
    pub y_sup0: f64,
    pub v_sup0: f64,
    pub w_inf0: f64,
    pub h_inf0: f64,
    pub h_sup0: f64,
    pub p_max0: f64,
    /// D^2 bounds the metric against the flat one both ways:
    /// D^{-2} delta <= g <= D^2 delta, so D^2 = sup max(v^2/y^2, y^2).
    pub d: f64,
}

impl InitialStats {
    pub fn from_state(state: &GraphState) -> Result<Self> {
        let g = crate::geometry::geometry(state)?;
        let np = state.grid.num_points();
        let mut v_sup = f64::NEG_INFINITY;
        let mut w_inf = f64::INFINITY;
        let mut h_inf = f64::INFINITY;
        let mut h_sup = f64::NEG_INFINITY;
        let mut p_max = f64::NEG_INFINITY;
        let mut d2 = 0.0f64;
        for p in 0..np {
            let y = state.y()[p];
            let v = g.v[p];
            v_sup = v_sup.max(v);
            w_inf = w_inf.min(g.w[p]);
            h_inf = h_inf.min(g.mean_curv[p]);
            h_sup = h_sup.max(g.mean_curv[p]);
            p_max = p_max.max(g.p_max[p]);
            d2 = d2.max((v * v / (y * y)).max(y * y));
        }
        let stats = Self {
            n: state.grid.dim(),
            y_inf0: state.y_inf(),
            y_sup0: state.y_sup(),
            v_sup0: v_sup,
            w_inf0: w_inf,
            h_inf0: h_inf,
            h_sup0: h_sup,
            p_max0: p_max,
            d: d2.sqrt(),
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.y_inf0 > 0.0
            && self.y_inf0 <= self.y_sup0
            && self.v_sup0 >= 1.0
            && self.w_inf0 > 0.0
            && self.h_inf0 > 0.0
            && self.h_inf0 <= self.h_sup0
            && [
                self.y_sup0,
                self.v_sup0,
                self.w_inf0,
                self.h_sup0,
                self.p_max0,
                self.d,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok && (self.n == 1 || self.n == 2) {
            Ok(())
        } else {
            Err(Error::InvalidStats {
                reason: format!("{self:?}"),
            })
        }
    }
}

/// Closed-form envelopes at time t derived from the initial statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelopes {
    pub y_lo: f64,
    pub y_hi: f64,
    pub w_lo: f64,
    pub v_hi: f64,
    pub h_lo: f64,
    pub h_hi: f64,
}

/// Envelope values at t >= 0:
/// y in [y_inf0, y_sup0] e^{-t/n}; w >= w_inf0 e^{t/n};
/// v <= (y_sup0/y_inf0) v_sup0; and with C0 = H_sup0^2 - n^2 when
/// H_sup0 > n, H in [c0 sqrt(n^2 + C0 e^{-2t/n}), sqrt(n^2 + C0 e^{-2t/n})],
/// degenerating to H_hi = n and constant H_lo when H_sup0 <= n.
pub fn envelopes(stats: &InitialStats, t: f64) -> Result<Envelopes> {
    stats.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidStats {
            reason: format!("envelope time must be finite and >= 0, got {t}"),
        });
    }
    let n = stats.n as f64;
    let decay = (-t / n).exp();
    let (h_lo, h_hi) = if stats.h_sup0 > n {
        let c0_sq = stats.h_sup0 * stats.h_sup0 - n * n;
        let hull = (n * n + c0_sq * (-2.0 * t / n).exp()).sqrt();
        let c0 = stats.y_inf0 * stats.h_inf0 / (stats.y_sup0 * stats.v_sup0 * stats.h_sup0);
        (c0 * hull, hull)
    } else {
        let c0 = stats.y_inf0 * stats.h_inf0 / (stats.y_sup0 * stats.v_sup0);
        (c0, n)
    };
    Ok(Envelopes {
        y_lo: stats.y_inf0 * decay,
        y_hi: stats.y_sup0 * decay,
        w_lo: stats.w_inf0 * (t / n).exp(),
        v_hi: stats.y_sup0 / stats.y_inf0 * stats.v_sup0,
        h_lo,
        h_hi,
    })
}

/// Integrates the scalar comparison ODE phi' = F(phi) with RK4 at internal
/// step one tenth of each grid interval, returning phi at the grid times.
pub fn ode_compare(
    rhs: impl Fn(f64) -> f64,
    u0: f64,
    t_grid: &[f64],
    blowup_bound: f64,
) -> Result<Vec<f64>> {
    if t_grid.is_empty() {
        return Err(Error::InvalidTimeGrid {
            reason: "time grid is empty".into(),
        });
    }
    if !(t_grid[0] >= 0.0 && t_grid[0].is_finite()) {
        return Err(Error::InvalidTimeGrid {
            reason: format!("grid must start at a finite time >= 0, got {}", t_grid[0]),
        });
    }
    for w in t_grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidTimeGrid {
                reason: format!("grid times not increasing: {} then {}", w[0], w[1]),
            });
        }
    }
    const SUBSTEPS: usize = 10;
    let mut u = u0;
    let mut out = Vec::with_capacity(t_grid.len());
    out.push(u);
    for w in t_grid.windows(2) {
        let dt = (w[1] - w[0]) / SUBSTEPS as f64;
        let mut t = w[0];
        for _ in 0..SUBSTEPS {
            let k1 = rhs(u);
            let k2 = rhs(u + 0.5 * dt * k1);
            let k3 = rhs(u + 0.5 * dt * k2);
            let k4 = rhs(u + dt * k3);
            u += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += dt;
            if !(u.abs() <= blowup_bound) {
                return Err(Error::OdeBlowup {
                    t,
                    bound: blowup_bound,
                });
            }
        }
        out.push(u);
    }
    Ok(out)
}

pub const CERTIFICATE_NAMES: [&str; 8] = [
    "y_barriers",
    "w_lower",
    "v_upper",
    "H_upper",
    "H_lower",
    "Hsup_ode_comparison",
    "grad_decay_inequality",
    "P_boundedness",
];

#[derive(Debug, Clone)]
pub struct CertificateRecord {
    pub name: &'static str,
    pub passed: bool,
    /// Raw slack of the bound (negative = violated beyond rounding); the
    /// pass decision additionally grants the report tolerance.
    pub worst_margin: f64,
    pub worst_t: f64,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub tol: f64,
    pub records: Vec<CertificateRecord>,
}

impl CertificateReport {
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CertificateRecord> {
        self.records.iter().find(|r| r.name == name)
    }
}

/// Default certificate tolerance for a given grid spacing: 1e-6 plus the
/// grid-dependent truncation allowance h^2.
pub fn default_tolerance(spacing: f64) -> f64 {
    1e-6 + spacing * spacing
}

struct Tracker {
    worst_margin: f64,
    worst_t: f64,
    detail_at_worst: &'static str,
}

impl Tracker {
    fn new() -> Self {
        Self {
            worst_margin: f64::INFINITY,
            worst_t: f64::NAN,
            detail_at_worst: "",
        }
    }

    fn update(&mut self, margin: f64, t: f64, detail: &'static str) {
        if margin < self.worst_margin {
            self.worst_margin = margin;
            self.worst_t = t;
            self.detail_at_worst = detail;
        }
    }
}

/// Evaluates every certificate at every sample of the trajectory. `tol`
/// absorbs discretization error of the one-sided bounds; see
/// [`default_tolerance`].
pub fn check(traj: &Trajectory, stats: &InitialStats, tol: f64) -> CertificateReport {
    let samples = &traj.samples;
    let n = stats.n as f64;
    let mut records = Vec::with_capacity(CERTIFICATE_NAMES.len());

    let envelope_at = |t: f64| envelopes(stats, t).expect("stats validated, t sampled >= 0");

    // y_barriers: y_inf0 e^{-t/n} <= y <= y_sup0 e^{-t/n}.
    {
        let mut tr = Tracker::new();
        for s in samples {
            let env = envelope_at(s.t);
            tr.update(s.y_inf - env.y_lo, s.t, "lower barrier");
            tr.update(env.y_hi - s.y_sup, s.t, "upper barrier");
        }
        records.push(CertificateRecord {
            name: "y_barriers",
            passed: tr.worst_margin >= -tol,
            worst_margin: tr.worst_margin,
            worst_t: tr.worst_t,
            detail: tr.detail_at_worst.into(),
        });
    }

    // w_lower: w_inf(t) >= w_inf0 e^{t/n}.
    {
        let mut tr = Tracker::new();
        for s in samples {
            tr.update(s.w_inf - envelope_at(s.t).w_lo, s.t, "");
        }
        records.push(CertificateRecord {
            name: "w_lower",
            passed: tr.worst_margin >= -tol,
            worst_margin: tr.worst_margin,
            worst_t: tr.worst_t,
            detail: String::new(),
        });
    }

    // v_upper: v_sup(t) <= (y_sup0/y_inf0) v_sup0.
    {
        let mut tr = Tracker::new();
        for s in samples {
            tr.update(envelope_at(s.t).v_hi - s.v_sup, s.t, "");
        }
        records.push(CertificateRecord {
            name: "v_upper",
            passed: tr.worst_margin >= -tol,
            worst_margin: tr.worst_margin,
            worst_t: tr.worst_t,
            detail: String::new(),
        });
    }

    // H envelopes.
    {
        let mut hi = Tracker::new();
        let mut lo = Tracker::new();
        for s in samples {
            let env = envelope_at(s.t);
            hi.update(env.h_hi - s.h_sup, s.t, "");
            lo.update(s.h_inf - env.h_lo, s.t, "");
        }
        records.push(CertificateRecord {
            name: "H_upper",
            passed: hi.worst_margin >= -tol,
            worst_margin: hi.worst_margin,
            worst_t: hi.worst_t,
            detail: String::new(),
        });
        records.push(CertificateRecord {
            name: "H_lower",
            passed: lo.worst_margin >= -tol,
            worst_margin: lo.worst_margin,
            worst_t: lo.worst_t,
            detail: String::new(),
        });
    }

    // Hsup_ode_comparison: H_sup(t) <= phi(t) solving phi' = (n^2-phi^2)/(n phi)
    // seeded at the measured H_sup(0).
    {
        let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
        let record = match ode_compare(
            |phi| (n * n - phi * phi) / (n * phi),
            samples[0].h_sup,
            &times,
            1e12,
        ) {
            Ok(phi) => {
                let mut tr = Tracker::new();
                for (s, &bound) in samples.iter().zip(&phi) {
                    tr.update(bound - s.h_sup, s.t, "");
                }
                CertificateRecord {
                    name: "Hsup_ode_comparison",
                    passed: tr.worst_margin >= -tol,
                    worst_margin: tr.worst_margin,
                    worst_t: tr.worst_t,
                    detail: String::new(),
                }
            }
            Err(e) => CertificateRecord {
                name: "Hsup_ode_comparison",
                passed: false,
                worst_margin: f64::NEG_INFINITY,
                worst_t: samples[0].t,
                detail: format!("comparison solve failed: {e}"),
            },
        };
        records.push(record);
    }

    // grad_decay_inequality: d/dt grad_sup2 <= (-2n/H^2) grad_sup2, H taken
    // at the gradient argmax when available, else the sound H_sup fallback.
    {
        let mut tr = Tracker::new();
        let mut used_fallback = false;
        for i in 1..samples.len().saturating_sub(1) {
            let (prev, mid, next) = (&samples[i - 1], &samples[i], &samples[i + 1]);
            let dpsi_dt = (next.grad_sup2 - prev.grad_sup2) / (next.t - prev.t);
            let h_ref = match mid.h_at_grad_argmax {
                Some(h) => h,
                None => {
                    used_fallback = true;
                    mid.h_sup
                }
            };
            let bound = -2.0 * n / (h_ref * h_ref) * mid.grad_sup2;
            tr.update(bound - dpsi_dt, mid.t, "");
        }
        let vacuous = samples.len() < 3;
        records.push(CertificateRecord {
            name: "grad_decay_inequality",
            passed: vacuous || tr.worst_margin >= -tol,
            worst_margin: tr.worst_margin,
            worst_t: tr.worst_t,
            detail: if vacuous {
                "fewer than 3 samples; vacuous".into()
            } else if used_fallback {
                "H_sup fallback (argmax H not stored)".into()
            } else {
                "H at gradient argmax".into()
            },
        });
    }

    // P_boundedness: P_max_sup(t) <= max(P_max0, c0') (1 + tol) with
    // c0' = (n + 8 D^2) / (2 inf_t H w).
    {
        let hw_inf = samples
            .iter()
            .map(|s| s.h_inf * s.w_inf)
            .fold(f64::INFINITY, f64::min);
        let record = if hw_inf > 0.0 {
            let c0p = (n + 8.0 * stats.d * stats.d) / (2.0 * hw_inf);
            let threshold = stats.p_max0.max(c0p);
            let mut tr = Tracker::new();
            for s in samples {
                tr.update(threshold - s.p_max_sup, s.t, "");
            }
            CertificateRecord {
                name: "P_boundedness",
                passed: tr.worst_margin >= -threshold.abs() * tol,
                worst_margin: tr.worst_margin,
                worst_t: tr.worst_t,
                detail: format!(
                    "threshold {threshold:.6e} = max(P_max0 {:.6e}, c0' {c0p:.6e})",
                    stats.p_max0
                ),
            }
        } else {
            CertificateRecord {
                name: "P_boundedness",
                passed: false,
                worst_margin: f64::NEG_INFINITY,
                worst_t: samples[0].t,
                detail: format!("inf of H w is {hw_inf}, constant undefined"),
            }
        };
        records.push(record);
    }

    CertificateReport { tol, records }
}

/// Convenience for tests and bindings: H_sup-seeded report on a fresh run.
pub fn check_with_default_tol(traj: &Trajectory, stats: &InitialStats) -> CertificateReport {
    let spacing = traj
        .snapshots
        .first()
        .map(|s| s.grid.spacing())
        .unwrap_or(0.0);
    check(traj, stats, default_tolerance(spacing))
}
