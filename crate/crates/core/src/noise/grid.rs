use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform two-sided time grid `{i·h : i_min ≤ i ≤ i_max}` with `i_min < 0 < i_max`.
///
/// Nodes are addressed by their absolute integer label `i`, so shifting by a
/// grid multiple is exact integer arithmetic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    i_min: i64,
    i_max: i64,
    h: f64,
}

const GRID_TOL: f64 = 1e-9;

fn as_integer(x: f64) -> Option<i64> {
    let r = x.round();
    if (x - r).abs() <= GRID_TOL * x.abs().max(1.0) {
        Some(r as i64)
    } else {
        None
    }
}

impl TimeGrid {
    pub fn new(t_min: f64, t_max: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Config(format!("grid step must be positive, got {h}")));
        }
        if !(t_min.is_finite() && t_max.is_finite()) || t_min >= 0.0 || t_max <= 0.0 {
            return Err(Error::Config(format!(
                "grid must satisfy t_min < 0 < t_max, got [{t_min}, {t_max}]"
            )));
        }
        let i_min = as_integer(t_min / h).ok_or_else(|| {
            Error::Config(format!("t_min = {t_min} is not a multiple of h = {h}"))
        })?;
        let i_max = as_integer(t_max / h).ok_or_else(|| {
            Error::Config(format!("t_max = {t_max} is not a multiple of h = {h}"))
        })?;
        Self::from_indices(i_min, i_max, h)
    }

    /// Symmetric grid `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, h: f64) -> Result<Self> {
        Self::new(-half_width, half_width, h)
    }

    pub fn from_indices(i_min: i64, i_max: i64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Config(format!("grid step must be positive, got {h}")));
        }
        if i_min >= 0 || i_max <= 0 {
            return Err(Error::Config(format!(
                "grid must contain negative and positive nodes, got labels [{i_min}, {i_max}]"
            )));
        }
        Ok(TimeGrid { i_min, i_max, h })
    }

    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn t_min(&self) -> f64 {
        self.i_min as f64 * self.h
    }
    pub fn t_max(&self) -> f64 {
        self.i_max as f64 * self.h
    }
    pub fn i_min(&self) -> i64 {
        self.i_min
    }
    pub fn i_max(&self) -> i64 {
        self.i_max
    }
    pub fn len(&self) -> usize {
        (self.i_max - self.i_min + 1) as usize
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Position of `t = 0` in the node array.
    pub fn zero_index(&self) -> usize {
        (-self.i_min) as usize
    }
    /// Time of the node stored at array position `idx`.
    pub fn time(&self, idx: usize) -> f64 {
        (self.i_min + idx as i64) as f64 * self.h
    }
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (self.i_min..=self.i_max).map(move |i| i as f64 * self.h)
    }
    /// Absolute node label of `t`, if `t` is a grid multiple (not necessarily inside the grid).
    pub fn label_of(&self, t: f64) -> Option<i64> {
        as_integer(t / self.h)
    }
    /// Array position of `t`, if `t` is a node of this grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = self.label_of(t)?;
        if i < self.i_min || i > self.i_max {
            None
        } else {
            Some((i - self.i_min) as usize)
        }
    }
    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min() - GRID_TOL * self.h && t <= self.t_max() + GRID_TOL * self.h
    }
    /// Grid translated by `-k` nodes: node `i` becomes node `i - k`.
    pub(crate) fn translated(&self, k: i64) -> Result<Self> {
        Self::from_indices(self.i_min - k, self.i_max - k, self.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_contains_zero_exactly() {
        let g = TimeGrid::new(-2.0, 3.0, 0.25).unwrap();
        assert_eq!(g.time(g.zero_index()), 0.0);
        assert_eq!(g.len(), 21);
        assert_eq!(g.index_of(0.75), Some(11));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(1.0, 3.0, 0.25).is_err());
        assert!(TimeGrid::new(-1.0, 3.0, 0.0).is_err());
        assert!(TimeGrid::new(-1.1, 3.0, 0.25).is_err());
        assert!(TimeGrid::new(-1.0, 3.0, -0.5).is_err());
    }
}
