//! Initial graph families. Every constructor is followed by an
//! admissibility check: heights strictly positive and mean curvature
//! strictly positive everywhere, the standing hypotheses of the flow.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{GraphState, Grid};

#[derive(Debug, Clone, PartialEq)]
pub enum InitialFamily {
    /// y = height: an exact horosphere.
    Constant { height: f64 },
    /// y = height + amplitude * sin(2 pi (wave . x) / L), one plane wave.
    Sine {
        height: f64,
        amplitude: f64,
        wave: Vec<i64>,
    },
    /// y = height + amplitude * periodized Gaussian of the given width
    /// centered at L/2 per axis.
    GaussianBump {
        height: f64,
        amplitude: f64,
        width: f64,
    },
    /// height + five random-phase low modes with total amplitude budget
    /// `amplitude`; identical seeds give bitwise-identical states.
    BandLimitedRandom {
        height: f64,
        amplitude: f64,
        seed: u64,
    },
}

impl InitialFamily {
    pub fn name(&self) -> &'static str {
        match self {
            InitialFamily::Constant { .. } => "constant",
            InitialFamily::Sine { .. } => "sine",
            InitialFamily::GaussianBump { .. } => "gaussian_bump",
            InitialFamily::BandLimitedRandom { .. } => "band_limited_random",
        }
    }
}

fn u64_to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Per-axis modes used by the random family: lowest five plane waves.
fn low_modes(dim: usize) -> Vec<[i64; 2]> {
    if dim == 1 {
        (1..=5).map(|k| [k, 0]).collect()
    } else {
        vec![[1, 0], [0, 1], [1, 1], [1, -1], [2, 0]]
    }
}

fn heights(family: &InitialFamily, grid: Grid) -> Vec<f64> {
    let l = grid.length();
    let np = grid.num_points();
    let mut y = vec![0.0; np];
    match family {
        InitialFamily::Constant { height } => {
            y.fill(*height);
        }
        InitialFamily::Sine {
            height,
            amplitude,
            wave,
        } => {
            let kx = wave.first().copied().unwrap_or(0) as f64;
            let ky = wave.get(1).copied().unwrap_or(0) as f64;
            for p in 0..np {
                let (i, j) = grid.multi(p);
                let phase = 2.0 * PI * (kx * grid.coord(i) + ky * grid.coord(j)) / l;
                y[p] = height + amplitude * phase.sin();
            }
        }
        InitialFamily::GaussianBump {
            height,
            amplitude,
            width,
        } => {
            // Sum over the 5^dim nearest periodic images; for width < L the
            // omitted tails are below rounding.
            let c = 0.5 * l;
            let inv_w2 = 1.0 / (width * width);
            for p in 0..np {
                let (i, j) = grid.multi(p);
                let (x1, x2) = (grid.coord(i), grid.coord(j));
                let mut bump = 0.0;
                for a in -2i32..=2 {
                    let d1 = x1 - c + a as f64 * l;
                    if grid.dim() == 1 {
                        bump += (-(d1 * d1) * inv_w2).exp();
                    } else {
                        for b in -2i32..=2 {
                            let d2 = x2 - c + b as f64 * l;
                            bump += (-(d1 * d1 + d2 * d2) * inv_w2).exp();
                        }
                    }
                }
                y[p] = height + amplitude * bump;
            }
        }
        InitialFamily::BandLimitedRandom {
            height,
            amplitude,
            seed,
        } => {
            let modes = low_modes(grid.dim());
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut weights: Vec<f64> = (0..modes.len())
                .map(|_| u64_to_unit(rng.next_u64()) + 0.01)
                .collect();
            let phases: Vec<f64> = (0..modes.len())
                .map(|_| 2.0 * PI * u64_to_unit(rng.next_u64()))
                .collect();
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w *= amplitude / total;
            }
            for p in 0..np {
                let (i, j) = grid.multi(p);
                let (x1, x2) = (grid.coord(i), grid.coord(j));
                let mut s = *height;
                for (m, k) in modes.iter().enumerate() {
                    let phase = 2.0 * PI * (k[0] as f64 * x1 + k[1] as f64 * x2) / l + phases[m];
                    s += weights[m] * phase.cos();
                }
                y[p] = s;
            }
        }
    }
    y
}

/// Builds the family on the grid at t = 0 and rejects it unless y > 0 and
/// H > 0 hold at every grid point.
pub fn make_initial(family: &InitialFamily, grid: Grid) -> Result<GraphState> {
    let y = heights(family, grid);
    if let Some(idx) = y.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InadmissibleInitialData {
            condition: "y > 0".into(),
            index: idx,
        });
    }
    let state = GraphState::new(grid, 0.0, y)?;
    let geo = crate::geometry::geometry(&state)?;
    if let Some(idx) = geo.mean_curv.iter().position(|&h| !(h > 0.0)) {
        return Err(Error::InadmissibleInitialData {
            condition: "H > 0".into(),
            index: idx,
        });
    }
    Ok(state)
}
