//! Run configuration: defaults, then a JSON file, then flags.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use tentspace::gamma::DEFAULT_SAMPLES;
use tentspace::halfspace::GridParams;
use tentspace::{NormTag, NormedSpace};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Fully resolved settings; embedded in every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: GridParams,
    pub space: NormedSpace,
    pub seed: u64,
    pub samples: usize,
    pub out: PathBuf,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridParams { n: 1, l: 4.0, h: 1.0 / 16.0, t: 2.0, j: 5 },
            space: NormedSpace::euclidean(1),
            seed: 0,
            samples: DEFAULT_SAMPLES,
            out: PathBuf::from("out"),
            format: Format::Json,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    grid: Option<GridParams>,
    space: Option<NormedSpace>,
    seed: Option<u64>,
    samples: Option<usize>,
    out: Option<PathBuf>,
    format: Option<Format>,
}

/// Values given on the command line; `None` leaves the lower layer alone.
#[derive(Debug, Default)]
pub struct Overrides {
    pub grid: Option<GridParams>,
    pub space: Option<NormedSpace>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn resolve(file: Option<&Path>, flags: Overrides) -> Result<Self, CliError> {
        let from_file = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let base = Self::default();
        let config = Self {
            grid: flags.grid.or(from_file.grid).unwrap_or(base.grid),
            space: flags.space.or(from_file.space).unwrap_or(base.space),
            seed: flags.seed.or(from_file.seed).unwrap_or(base.seed),
            samples: flags.samples.or(from_file.samples).unwrap_or(base.samples),
            out: flags.out.or(from_file.out).unwrap_or(base.out),
            format: flags.format.or(from_file.format).unwrap_or(base.format),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.grid.build().map_err(|e| CliError::Config(e.to_string()))?;
        NormedSpace::new(self.space.d, self.space.norm).map_err(|e| CliError::Config(e.to_string()))?;
        if self.samples < 2 {
            return Err(CliError::Config("samples must be at least 2".into()));
        }
        Ok(())
    }
}

/// A number or a fraction such as `1/16`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad number {s:?}"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad number {s:?}"))?;
            a / b
        }
        None if s.eq_ignore_ascii_case("inf") => f64::INFINITY,
        None => s.parse().map_err(|_| format!("bad number {s:?}"))?,
    };
    if value.is_nan() {
        return Err(format!("bad number {s:?}"));
    }
    Ok(value)
}

fn parse_count(s: &str) -> Result<usize, String> {
    s.trim().parse().map_err(|_| format!("bad integer {s:?}"))
}

/// `n,L,h,T,J`.
pub fn parse_grid(s: &str) -> Result<GridParams, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [n, l, h, t, j] = parts[..] else {
        return Err(format!("expected n,L,h,T,J but got {s:?}"));
    };
    Ok(GridParams { n: parse_count(n)?, l: parse_number(l)?, h: parse_number(h)?, t: parse_number(t)?, j: parse_count(j)? })
}

/// `d,norm` with norm one of `euclidean`, `max`, `p<exponent>`.
pub fn parse_space(s: &str) -> Result<NormedSpace, String> {
    let (d, norm) = s.split_once(',').ok_or_else(|| format!("expected d,norm but got {s:?}"))?;
    let norm = match norm.trim().to_ascii_lowercase().as_str() {
        "euclidean" | "l2" => NormTag::Euclidean,
        "max" | "inf" | "linf" => NormTag::Max,
        other => {
            let p = other.strip_prefix('p').or_else(|| other.strip_prefix('l')).ok_or_else(|| format!("unknown norm {other:?}"))?;
            NormTag::Pnorm(parse_number(p)?)
        }
    };
    NormedSpace::new(parse_count(d)?, norm).map_err(|e| e.to_string())
}
