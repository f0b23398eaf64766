use super::grid::TimeGrid;
use super::kappa::KappaFn;
use super::ou::OuSeries;
use super::path::{sample_wiener_path, SamplePath};
use crate::error::{Error, Result};

/// The bounded noise terms `κ_t z*(θ_t ω)` and `(κ_t − κ̇_t) z*(θ_t ω)` along
/// one path, evaluable at any time of the reliable window.
#[derive(Clone, Debug)]
pub struct NoiseSignal {
    series: OuSeries,
    kappa: KappaFn,
}

const INITIAL_LEAD: f64 = 32.0;

impl NoiseSignal {
    pub fn from_path(path: &SamplePath, kappa: KappaFn, tail_tol: f64) -> Self {
        NoiseSignal {
            series: OuSeries::new(path, tail_tol),
            kappa,
        }
    }

    /// Samples a Wiener path with enough lead on the left for `z*` to be
    /// reliable on `[t_lo, t_hi]`. Extending the lead keeps the values at
    /// already sampled nodes, so the result depends on the seed only.
    pub fn sample(
        seed: u64,
        kappa: KappaFn,
        t_lo: f64,
        t_hi: f64,
        h: f64,
        tail_tol: f64,
    ) -> Result<Self> {
        if !(t_hi > t_lo) {
            return Err(Error::Domain(format!("empty noise window [{t_lo}, {t_hi}]")));
        }
        let mut lead = INITIAL_LEAD;
        for _ in 0..8 {
            let i_min = (((t_lo - lead) / h).floor() as i64).min(-1);
            let i_max = ((t_hi / h).ceil() as i64).max(1);
            let grid = TimeGrid::from_indices(i_min, i_max, h)?;
            let s = Self::from_path(&sample_wiener_path(&grid, seed), kappa.clone(), tail_tol);
            match s.series.ensure_covers(t_lo, t_hi) {
                Ok(()) => return Ok(s),
                Err(Error::Window {
                    required_extension: Some(e),
                    ..
                }) => lead += e + 1.0,
                Err(e) => return Err(e),
            }
        }
        Err(Error::Window {
            message: format!("could not make z* reliable on [{t_lo}, {t_hi}]"),
            required_extension: None,
        })
    }

    pub fn series(&self) -> &OuSeries {
        &self.series
    }

    pub fn kappa(&self) -> &KappaFn {
        &self.kappa
    }

    pub fn z(&self, t: f64) -> f64 {
        self.series.eval(t)
    }

    /// `κ_t z*(θ_t ω)`.
    pub fn kz(&self, t: f64) -> f64 {
        self.kappa.value(t) * self.series.eval(t)
    }

    /// `(κ_t − κ̇_t) z*(θ_t ω)`.
    pub fn drift(&self, t: f64) -> f64 {
        let (k, dk) = self.kappa.eval(t);
        (k - dk) * self.series.eval(t)
    }

    /// Maxima of `|κ z*|` and `|(κ − κ̇) z*|` over the path nodes in `[t_lo, t_hi]`.
    pub fn window_bounds(&self, t_lo: f64, t_hi: f64) -> (f64, f64) {
        let g = self.series.path().grid();
        let mut m1 = 0.0_f64;
        let mut m2 = 0.0_f64;
        for t in g.times().filter(|&t| t >= t_lo && t <= t_hi) {
            m1 = m1.max(self.kz(t).abs());
            m2 = m2.max(self.drift(t).abs());
        }
        (m1, m2)
    }
}
