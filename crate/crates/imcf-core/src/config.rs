//! Line-oriented run configuration: `section.key = value`, `#` comments.
//! Parsing is strict (unknown or duplicate keys are errors with line
//! numbers); semantic problems are collected and reported together.

use std::collections::HashMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, Scheme};
use crate::grid::{GraphState, Grid};
use crate::initial::{make_initial, InitialFamily};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dimension: usize,
    pub points_per_axis: usize,
    pub length: f64,
    pub initial: InitialFamily,
    pub flow: FlowConfig,
    pub directory: Option<PathBuf>,
}

impl RunConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dimension, self.points_per_axis, self.length)
    }

    /// Constructs and admissibility-checks the initial state.
    pub fn make_initial(&self) -> Result<GraphState> {
        make_initial(&self.initial, self.grid()?)
    }
}

const KNOWN_KEYS: [&str; 16] = [
    "dimension",
    "grid.points_per_axis",
    "grid.length",
    "initial.family",
    "initial.height",
    "initial.amplitude",
    "initial.wave",
    "initial.width",
    "initial.seed",
    "flow.scheme",
    "flow.safety",
    "flow.t_end",
    "flow.max_steps",
    "output.stride",
    "output.snapshot_times",
    "output.directory",
];

struct Raw {
    /// key -> (value, line number)
    entries: HashMap<String, (String, usize)>,
}

impl Raw {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }
}

fn parse_lines(text: &str) -> Result<Raw> {
    let mut entries: HashMap<String, (String, usize)> = HashMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            reason: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                reason: "empty key or value".into(),
            });
        }
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("unknown key `{key}`"),
            });
        }
        if entries.contains_key(&key) {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("duplicate key `{key}`"),
            });
        }
        entries.insert(key, (value, line_no));
    }
    Ok(Raw { entries })
}

fn parse_f64(value: &str, line: usize) -> Result<f64> {
    value.parse::<f64>().map_err(|_| Error::Parse {
        line,
        reason: format!("`{value}` is not a number"),
    })
}

fn parse_usize(value: &str, line: usize) -> Result<usize> {
    value.parse::<usize>().map_err(|_| Error::Parse {
        line,
        reason: format!("`{value}` is not a non-negative integer"),
    })
}

fn parse_u64(value: &str, line: usize) -> Result<u64> {
    value.parse::<u64>().map_err(|_| Error::Parse {
        line,
        reason: format!("`{value}` is not a non-negative integer"),
    })
}

fn parse_f64_list(value: &str, line: usize) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| parse_f64(s.trim(), line))
        .collect()
}

fn parse_i64_list(value: &str, line: usize) -> Result<Vec<i64>> {
    value
        .split(',')
        .map(|s| {
            s.trim().parse::<i64>().map_err(|_| Error::Parse {
                line,
                reason: format!("`{s}` is not an integer"),
            })
        })
        .collect()
}

/// Parses and validates a full run configuration. Syntax problems fail fast
/// with a line number; all semantic violations are collected and reported
/// together.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut raw = parse_lines(text)?;
    let mut violations: Vec<String> = Vec::new();

    let req_usize = |raw: &mut Raw, key: &str, violations: &mut Vec<String>| -> Result<usize> {
        match raw.take(key) {
            Some((v, line)) => parse_usize(&v, line),
            None => {
                violations.push(format!("missing required key `{key}`"));
                Ok(0)
            }
        }
    };

    let dimension = req_usize(&mut raw, "dimension", &mut violations)?;
    let points_per_axis = req_usize(&mut raw, "grid.points_per_axis", &mut violations)?;
    let length = match raw.take("grid.length") {
        Some((v, line)) => parse_f64(&v, line)?,
        None => {
            violations.push("missing required key `grid.length`".into());
            0.0
        }
    };

    // Family-specific parameters: parse whatever is present, then reject
    // params that do not apply to the selected family.
    let family_name = raw.take("initial.family");
    let height = raw.take("initial.height");
    let amplitude = raw.take("initial.amplitude");
    let wave = raw.take("initial.wave");
    let width = raw.take("initial.width");
    let seed = raw.take("initial.seed");

    let height_v = match &height {
        Some((v, line)) => parse_f64(v, *line)?,
        None => {
            violations.push("missing required key `initial.height`".into());
            1.0
        }
    };
    let amplitude_v = match &amplitude {
        Some((v, line)) => Some(parse_f64(v, *line)?),
        None => None,
    };
    let wave_v = match &wave {
        Some((v, line)) => Some(parse_i64_list(v, *line)?),
        None => None,
    };
    let width_v = match &width {
        Some((v, line)) => Some(parse_f64(v, *line)?),
        None => None,
    };
    let seed_v = match &seed {
        Some((v, line)) => Some(parse_u64(v, *line)?),
        None => None,
    };

    let mut reject_inapplicable = |name: &str, present: bool, family: &str| {
        if present {
            violations.push(format!("`initial.{name}` does not apply to family `{family}`"));
        }
    };

    let initial = match family_name.as_ref().map(|(v, _)| v.as_str()) {
        Some("constant") => {
            reject_inapplicable("amplitude", amplitude.is_some(), "constant");
            reject_inapplicable("wave", wave.is_some(), "constant");
            reject_inapplicable("width", width.is_some(), "constant");
            reject_inapplicable("seed", seed.is_some(), "constant");
            InitialFamily::Constant { height: height_v }
        }
        Some("sine") => {
            reject_inapplicable("width", width.is_some(), "sine");
            reject_inapplicable("seed", seed.is_some(), "sine");
            let wave = wave_v.clone().unwrap_or_else(|| {
                violations.push("missing required key `initial.wave` for family `sine`".into());
                vec![1]
            });
            if wave.len() != dimension && dimension != 0 {
                violations.push(format!(
                    "`initial.wave` needs {dimension} component(s), got {}",
                    wave.len()
                ));
            }
            InitialFamily::Sine {
                height: height_v,
                amplitude: amplitude_v.unwrap_or_else(|| {
                    violations
                        .push("missing required key `initial.amplitude` for family `sine`".into());
                    0.0
                }),
                wave,
            }
        }
        Some("gaussian_bump") => {
            reject_inapplicable("wave", wave.is_some(), "gaussian_bump");
            reject_inapplicable("seed", seed.is_some(), "gaussian_bump");
            let width = width_v.unwrap_or_else(|| {
                violations.push(
                    "missing required key `initial.width` for family `gaussian_bump`".into(),
                );
                1.0
            });
            if !(width > 0.0 && width.is_finite()) {
                violations.push(format!("`initial.width` must be positive, got {width}"));
            }
            InitialFamily::GaussianBump {
                height: height_v,
                amplitude: amplitude_v.unwrap_or_else(|| {
                    violations.push(
                        "missing required key `initial.amplitude` for family `gaussian_bump`"
                            .into(),
                    );
                    0.0
                }),
                width,
            }
        }
        Some("band_limited_random") => {
            reject_inapplicable("wave", wave.is_some(), "band_limited_random");
            reject_inapplicable("width", width.is_some(), "band_limited_random");
            InitialFamily::BandLimitedRandom {
                height: height_v,
                amplitude: amplitude_v.unwrap_or_else(|| {
                    violations.push(
                        "missing required key `initial.amplitude` for family `band_limited_random`"
                            .into(),
                    );
                    0.0
                }),
                seed: seed_v.unwrap_or(0),
            }
        }
        Some(other) => {
            violations.push(format!(
                "unknown initial family `{other}` (expected constant, sine, gaussian_bump, \
                 or band_limited_random)"
            ));
            InitialFamily::Constant { height: height_v }
        }
        None => {
            violations.push("missing required key `initial.family`".into());
            InitialFamily::Constant { height: height_v }
        }
    };

    let scheme = match raw.take("flow.scheme") {
        Some((v, line)) => v.parse::<Scheme>().map_err(|reason| Error::Parse {
            line,
            reason,
        })?,
        None => Scheme::Rk4,
    };
    let safety = match raw.take("flow.safety") {
        Some((v, line)) => parse_f64(&v, line)?,
        None => 0.25,
    };
    let t_end = match raw.take("flow.t_end") {
        Some((v, line)) => parse_f64(&v, line)?,
        None => {
            violations.push("missing required key `flow.t_end`".into());
            0.0
        }
    };
    let max_steps = match raw.take("flow.max_steps") {
        Some((v, line)) => parse_usize(&v, line)?,
        None => 1_000_000,
    };
    let sample_stride = match raw.take("output.stride") {
        Some((v, line)) => parse_usize(&v, line)?,
        None => 10,
    };
    let snapshot_times = match raw.take("output.snapshot_times") {
        Some((v, line)) => parse_f64_list(&v, line)?,
        None => Vec::new(),
    };
    let directory = raw
        .take("output.directory")
        .map(|(v, _)| PathBuf::from(v));

    let flow = FlowConfig {
        scheme,
        safety,
        t_end,
        sample_stride,
        max_steps,
        snapshot_times,
    };

    if !(dimension == 1 || dimension == 2) {
        violations.push(format!("dimension must be 1 or 2, got {dimension}"));
    }
    if points_per_axis < 8 {
        violations.push(format!(
            "grid.points_per_axis must be at least 8, got {points_per_axis}"
        ));
    }
    if !(length > 0.0 && length.is_finite()) {
        violations.push(format!("grid.length must be positive, got {length}"));
    }
    if !(height_v > 0.0 && height_v.is_finite()) {
        violations.push(format!("initial.height must be positive, got {height_v}"));
    }
    if let Some(a) = amplitude_v {
        if !(a >= 0.0 && a.is_finite()) {
            violations.push(format!("initial.amplitude must be non-negative, got {a}"));
        }
    }
    if let Err(Error::InvalidConfig { reason }) = flow.validate() {
        violations.push(reason);
    }

    if violations.is_empty() {
        Ok(RunConfig {
            dimension,
            points_per_axis,
            length,
            initial,
            flow,
            directory,
        })
    } else {
        Err(Error::Validation { violations })
    }
}
