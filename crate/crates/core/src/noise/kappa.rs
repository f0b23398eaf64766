use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Time-rescaling function `κ` together with its derivative.
#[derive(Clone)]
pub enum KappaFn {
    /// `κ_t = 1/(1+t²)`.
    Rational,
    Constant(f64),
    /// User callback returning `(κ_t, κ̇_t)`.
    Custom(Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>),
}

impl fmt::Debug for KappaFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KappaFn::Rational => write!(f, "Rational"),
            KappaFn::Constant(c) => write!(f, "Constant({c})"),
            KappaFn::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Default for KappaFn {
    fn default() -> Self {
        KappaFn::Rational
    }
}

impl KappaFn {
    pub fn custom(f: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        KappaFn::Custom(Arc::new(f))
    }

    /// `(κ_t, κ̇_t)`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        match self {
            KappaFn::Rational => {
                let q = 1.0 + t * t;
                (1.0 / q, -2.0 * t / (q * q))
            }
            KappaFn::Constant(c) => (*c, 0.0),
            KappaFn::Custom(f) => f(t),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.eval(t).1
    }

    /// Checks positivity on `times` and returns the largest mismatch between the
    /// reported derivative and a central difference with step `fd_step`.
    pub fn check(&self, times: impl IntoIterator<Item = f64>, fd_step: f64) -> Result<f64> {
        let mut worst = 0.0_f64;
        for t in times {
            let (k, dk) = self.eval(t);
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Domain(format!("kappa({t}) = {k} is not positive")));
            }
            let fd = (self.value(t + fd_step) - self.value(t - fd_step)) / (2.0 * fd_step);
            worst = worst.max((fd - dk).abs());
        }
        Ok(worst)
    }
}
