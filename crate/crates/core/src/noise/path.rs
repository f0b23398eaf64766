use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::grid::TimeGrid;
use super::rng::derive_seed;
use crate::error::{Error, Result};

/// Where a path's values came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum PathOrigin {
    Wiener { seed: u64 },
    Zero,
    Linear,
    Injected { name: String },
    Imported { seed: Option<u64> },
}

/// A realization of `ω ∈ C₀(ℝ)` on a finite grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplePath {
    grid: TimeGrid,
    values: Vec<f64>,
    origin: PathOrigin,
    /// Set when some nodes were produced by fresh sampling outside the stored window.
    extended: bool,
}

/// Two-sided Wiener path: independent `N(0, h)` increments on each half-line,
/// generated outward from `t = 0` by two separate ChaCha streams.
pub fn sample_wiener_path(grid: &TimeGrid, seed: u64) -> SamplePath {
    let n = grid.len();
    let z = grid.zero_index();
    let sd = grid.h().sqrt();
    let mut values = vec![0.0; n];

    let mut fwd = ChaCha8Rng::seed_from_u64(seed);
    fwd.set_stream(0);
    for i in z + 1..n {
        let dw: f64 = fwd.sample(StandardNormal);
        values[i] = values[i - 1] + sd * dw;
    }
    let mut bwd = ChaCha8Rng::seed_from_u64(seed);
    bwd.set_stream(1);
    for i in (0..z).rev() {
        let dw: f64 = bwd.sample(StandardNormal);
        values[i] = values[i + 1] + sd * dw;
    }
    SamplePath {
        grid: grid.clone(),
        values,
        origin: PathOrigin::Wiener { seed },
        extended: false,
    }
}

/// `θ_t ω(·) = ω(t + ·) − ω(t)` on the translated window.
///
/// The result lives on `[t_min − t, t_max − t]`, i.e. on exactly the stored
/// nodes, so `t` must be a grid multiple strictly inside the stored window.
pub fn shift_path(path: &SamplePath, t: f64) -> Result<SamplePath> {
    let g = &path.grid;
    let k = g.label_of(t).ok_or_else(|| {
        Error::Domain(format!("shift {t} is not a multiple of the grid step {}", g.h()))
    })?;
    if k <= g.i_min() || k >= g.i_max() {
        let need = if k <= g.i_min() {
            (g.i_min() - k + 1) as f64 * g.h()
        } else {
            (k - g.i_max() + 1) as f64 * g.h()
        };
        return Err(Error::Window {
            message: format!(
                "shift by {t} leaves the stored window [{}, {}]",
                g.t_min(),
                g.t_max()
            ),
            required_extension: Some(need),
        });
    }
    let base = path.values[(k - g.i_min()) as usize];
    let mut values: Vec<f64> = path.values.iter().map(|v| v - base).collect();
    let grid = g.translated(k)?;
    values[grid.zero_index()] = 0.0;
    Ok(SamplePath {
        grid,
        values,
        origin: path.origin.clone(),
        extended: path.extended,
    })
}

/// Like [`shift_path`] but keeps the original window shape; nodes that fall
/// outside the stored window are filled by continuing the path with fresh
/// Gaussian increments (seeded from `extension_seed` and the shift), and the
/// result is flagged as extended.
pub fn shift_path_extended(path: &SamplePath, t: f64, extension_seed: u64) -> Result<SamplePath> {
    let g = &path.grid;
    let k = g.label_of(t).ok_or_else(|| {
        Error::Domain(format!("shift {t} is not a multiple of the grid step {}", g.h()))
    })?;
    // absolute labels needed: [i_min + k, i_max + k]
    let lo = (g.i_min() + k).min(g.i_min());
    let hi = (g.i_max() + k).max(g.i_max());
    let mut ext = vec![0.0; (hi - lo + 1) as usize];
    for i in g.i_min()..=g.i_max() {
        ext[(i - lo) as usize] = path.values[(i - g.i_min()) as usize];
    }
    let sd = g.h().sqrt();
    let mut extended = path.extended;
    if hi > g.i_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(extension_seed, k as u64));
        rng.set_stream(2);
        for i in g.i_max() + 1..=hi {
            let dw: f64 = rng.sample(StandardNormal);
            ext[(i - lo) as usize] = ext[(i - 1 - lo) as usize] + sd * dw;
        }
        extended = true;
    }
    if lo < g.i_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(extension_seed, k as u64));
        rng.set_stream(3);
        for i in (lo..g.i_min()).rev() {
            let dw: f64 = rng.sample(StandardNormal);
            ext[(i - lo) as usize] = ext[(i + 1 - lo) as usize] + sd * dw;
        }
        extended = true;
    }
    let base = ext[(k - lo) as usize];
    let mut values: Vec<f64> = (g.i_min()..=g.i_max())
        .map(|j| ext[(j + k - lo) as usize] - base)
        .collect();
    values[g.zero_index()] = 0.0;
    Ok(SamplePath {
        grid: g.clone(),
        values,
        origin: path.origin.clone(),
        extended,
    })
}

impl SamplePath {
    /// `ω ≡ 0`.
    pub fn zero(grid: &TimeGrid) -> Self {
        SamplePath {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
            origin: PathOrigin::Zero,
            extended: false,
        }
    }

    /// `ω(s) = s`, the smooth test path whose Ornstein–Uhlenbeck functional is identically 1.
    pub fn linear(grid: &TimeGrid) -> Self {
        let mut values: Vec<f64> = grid.times().collect();
        values[grid.zero_index()] = 0.0;
        SamplePath {
            grid: grid.clone(),
            values,
            origin: PathOrigin::Linear,
            extended: false,
        }
    }

    /// Deterministic path `ω(s) = f(s) − f(0)` sampled on the grid.
    pub fn from_fn(grid: &TimeGrid, name: &str, f: impl Fn(f64) -> f64) -> Self {
        let f0 = f(0.0);
        let mut values: Vec<f64> = grid.times().map(|t| f(t) - f0).collect();
        values[grid.zero_index()] = 0.0;
        SamplePath {
            grid: grid.clone(),
            values,
            origin: PathOrigin::Injected {
                name: name.to_string(),
            },
            extended: false,
        }
    }

    pub fn from_values(grid: &TimeGrid, values: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Misaligned(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values[grid.zero_index()] != 0.0 {
            return Err(Error::Domain(format!(
                "path must vanish at t = 0, found {}",
                values[grid.zero_index()]
            )));
        }
        Ok(SamplePath {
            grid: grid.clone(),
            values,
            origin: PathOrigin::Imported { seed },
            extended: false,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn origin(&self) -> &PathOrigin {
        &self.origin
    }
    pub fn is_extended(&self) -> bool {
        self.extended
    }
    pub fn seed(&self) -> Option<u64> {
        match self.origin {
            PathOrigin::Wiener { seed } => Some(seed),
            PathOrigin::Imported { seed } => seed,
            _ => None,
        }
    }

    /// Value at a grid node; `None` off-grid or outside the window.
    pub fn at(&self, t: f64) -> Option<f64> {
        self.grid.index_of(t).map(|i| self.values[i])
    }

    /// Piecewise-linear interpolant; clamps outside the window.
    pub fn interpolate(&self, t: f64) -> f64 {
        let g = &self.grid;
        let x = (t - g.t_min()) / g.h();
        if x <= 0.0 {
            return self.values[0];
        }
        let n = self.values.len();
        if x >= (n - 1) as f64 {
            return self.values[n - 1];
        }
        let k = x.floor() as usize;
        let frac = x - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Writes `t,omega` rows preceded by a `#` header line recording the seed and step.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let seed = self
            .seed()
            .map(|s| s.to_string())
            .unwrap_or_else(|| "none".to_string());
        writeln!(out, "# seed={} h={} extended={}", seed, self.grid.h(), self.extended)?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["t", "omega"])?;
        for (t, v) in self.grid.times().zip(&self.values) {
            w.write_record([format!("{t}"), format!("{v}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`SamplePath::write_csv`].
    pub fn read_csv<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let seed = text
            .lines()
            .next()
            .filter(|l| l.starts_with('#'))
            .and_then(|l| {
                l.split_whitespace()
                    .find_map(|kv| kv.strip_prefix("seed="))
                    .and_then(|s| s.parse::<u64>().ok())
            });
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut ts = Vec::new();
        let mut vs = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Io(format!("missing column {i}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Io(format!("bad number: {e}")))
            };
            ts.push(parse(0)?);
            vs.push(parse(1)?);
        }
        if ts.len() < 3 {
            return Err(Error::Io("path CSV needs at least three rows".into()));
        }
        let h = ts[1] - ts[0];
        let grid = TimeGrid::new(ts[0], ts[ts.len() - 1], h)?;
        if grid.len() != ts.len() {
            return Err(Error::Io("path CSV rows are not uniformly spaced".into()));
        }
        Self::from_values(&grid, vs, seed)
    }
}
