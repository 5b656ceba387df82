//! Sampling of one-step observations `(x₀, σ, x₁)` with `x₀` uniform on the
//! sphere of radius `R` and `σ` uniform over the modes.
//!
//! Random streams are ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded from a
//! 64-bit master seed; independent substreams are selected with
//! `set_stream(index)`, so repetition `r` of an experiment reads stream `r`.
//! [`GENERATOR_NAME`] is written into every output for reproducibility.

use std::io::{BufRead, Write};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{lifted_count, Mode, SwitchedAffineSystem, DEFAULT_LIFT_CAP};

pub const GENERATOR_NAME: &str = "ChaCha20 (rand_chacha 0.9), seed_from_u64(master) + set_stream(index)";

/// Stream `index` of the master seed.
pub fn substream(master_seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Uniform point on the sphere of radius `radius` in `ℝⁿ` (normalized
/// Gaussian vector).
pub fn uniform_sphere<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 && norm.is_finite() {
            return g * (radius / norm);
        }
    }
}

pub fn uniform_mode<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Mode {
    Mode::from_zero_based(rng.random_range(0..count))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub radius: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Substream of `seed` to draw from.
    #[serde(default)]
    pub stream: u64,
    /// Trajectory length; `> 1` samples words of modes.
    #[serde(default = "one")]
    pub lift: usize,
}

fn one() -> usize {
    1
}

impl SampleConfig {
    pub fn new(radius: f64, n_samples: usize, seed: u64) -> Self {
        Self {
            radius,
            n_samples,
            seed,
            stream: 0,
            lift: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::Invalid(format!("radius must be positive, got {}", self.radius)));
        }
        if self.n_samples == 0 {
            return Err(Error::Invalid("sample count must be at least 1".into()));
        }
        if self.lift == 0 {
            return Err(Error::Invalid("trajectory length must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub x0: DVector<f64>,
    /// Mode, or lifted word index when the trajectory length exceeds one.
    pub mode: Mode,
    pub x1: DVector<f64>,
}

/// An observed data set; downstream certification only ever sees this.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<SamplePair>,
    pub config: SampleConfig,
    /// State dimension.
    pub dim: usize,
    /// Number of (possibly lifted) modes the observations were drawn over.
    pub mode_count: usize,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same data without sample `skip`.
    pub fn without(&self, skip: &[bool]) -> SampleSet {
        SampleSet {
            samples: self
                .samples
                .iter()
                .zip(skip)
                .filter(|(_, &s)| !s)
                .map(|(p, _)| p.clone())
                .collect(),
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        let c = &self.config;
        if let Some(extra) = comment {
            for line in extra.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        writeln!(
            out,
            "# radius={} n_samples={} seed={} stream={} lift={} dim={} mode_count={}",
            c.radius,
            c.n_samples,
            c.seed,
            c.stream,
            c.lift,
            self.dim,
            self.mode_count
        )?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["i".to_string(), "mode".to_string()];
        header.extend((1..=self.dim).map(|k| format!("x0_{k}")));
        header.extend((1..=self.dim).map(|k| format!("x1_{k}")));
        w.write_record(&header)?;
        for (i, s) in self.samples.iter().enumerate() {
            let mut row = vec![(i + 1).to_string(), s.mode.one_based().to_string()];
            row.extend(s.x0.iter().map(|v| v.to_string()));
            row.extend(s.x1.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV form. Metadata comment lines (`# key=value ...`) are
    /// used when present; otherwise the radius is taken from the first
    /// sample and the mode count from the largest observed mode.
    pub fn read_csv<R: BufRead>(input: R) -> Result<SampleSet> {
        let mut meta = std::collections::HashMap::new();
        let mut body = String::new();
        for line in input.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix('#') {
                for tok in rest.split_whitespace() {
                    if let Some((k, v)) = tok.split_once('=') {
                        meta.insert(k.to_string(), v.to_string());
                    }
                }
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.len() < 4 || (headers.len() - 2) % 2 != 0 {
            return Err(Error::Invalid("sample CSV needs columns i, mode, x0_*, x1_*".into()));
        }
        if &headers[0] != "i" || &headers[1] != "mode" {
            return Err(Error::Invalid("sample CSV header must start with `i,mode`".into()));
        }
        let dim = (headers.len() - 2) / 2;
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Invalid(format!("bad number `{s}`: {e}")))
        };
        let mut samples = Vec::new();
        let mut max_mode = 0;
        for rec in rdr.records() {
            let rec = rec?;
            let mode: usize = rec[1]
                .parse()
                .map_err(|e| Error::Invalid(format!("bad mode `{}`: {e}", &rec[1])))?;
            if mode == 0 {
                return Err(Error::ModeIndex { index: 0, count: max_mode.max(1) });
            }
            max_mode = max_mode.max(mode);
            let x0 = (0..dim).map(|k| parse(&rec[2 + k])).collect::<Result<Vec<_>>>()?;
            let x1 = (0..dim)
                .map(|k| parse(&rec[2 + dim + k]))
                .collect::<Result<Vec<_>>>()?;
            samples.push(SamplePair {
                x0: DVector::from_vec(x0),
                mode: Mode::from_zero_based(mode - 1),
                x1: DVector::from_vec(x1),
            });
        }
        let get = |k: &str| meta.get(k).map(String::as_str);
        let radius = match get("radius") {
            Some(v) => parse(v)?,
            None => samples.first().map(|s| s.x0.norm()).unwrap_or(1.0),
        };
        let num = |k: &str, default: u64| -> u64 { get(k).and_then(|v| v.parse().ok()).unwrap_or(default) };
        let mode_count = num("mode_count", max_mode as u64) as usize;
        if max_mode > mode_count {
            return Err(Error::ModeIndex {
                index: max_mode,
                count: mode_count,
            });
        }
        let config = SampleConfig {
            radius,
            n_samples: samples.len(),
            seed: num("seed", 0),
            stream: num("stream", 0),
            lift: num("lift", 1) as usize,
        };
        Ok(SampleSet {
            samples,
            config,
            dim,
            mode_count,
        })
    }
}

/// Draws `cfg.n_samples` i.i.d. observations from stream `cfg.stream` of
/// `cfg.seed`.
pub fn draw_samples(sys: &SwitchedAffineSystem, cfg: &SampleConfig) -> Result<SampleSet> {
    let mut rng = substream(cfg.seed, cfg.stream);
    draw_samples_with(sys, cfg, &mut rng)
}

pub fn draw_samples_with<R: Rng + ?Sized>(
    sys: &SwitchedAffineSystem,
    cfg: &SampleConfig,
    rng: &mut R,
) -> Result<SampleSet> {
    cfg.validate()?;
    let lifted;
    let source = if cfg.lift > 1 {
        let count = lifted_count(sys.mode_count(), cfg.lift);
        if count > DEFAULT_LIFT_CAP as u128 {
            return Err(Error::Size {
                what: "lifted system",
                requested: count,
                cap: DEFAULT_LIFT_CAP as u128,
            });
        }
        lifted = sys.lifted_system(cfg.lift, DEFAULT_LIFT_CAP)?;
        &lifted
    } else {
        sys
    };
    let n = source.dim();
    let m = source.mode_count();
    let mut samples = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let x0 = uniform_sphere(n, cfg.radius, rng);
        let mode = uniform_mode(m, rng);
        let x1 = source.step(&x0, mode)?;
        samples.push(SamplePair { x0, mode, x1 });
    }
    Ok(SampleSet {
        samples,
        config: *cfg,
        dim: n,
        mode_count: m,
    })
}
