use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Compactly supported taper with support `[0, r)`, equal to 1 at zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalisationKind {
    GaspariCohn,
    /// 1 on `[0, r]`, 0 beyond.
    Uniform,
    /// `max(0, 1 - d / r)`.
    Triangular,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Localisation {
    pub kind: LocalisationKind,
    pub radius: f64,
}

impl Localisation {
    pub fn new(kind: LocalisationKind, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid(format!(
                "localisation radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Self { kind, radius })
    }

    pub fn gaspari_cohn(radius: f64) -> Result<Self> {
        Self::new(LocalisationKind::GaspariCohn, radius)
    }

    /// Taper value at distance `d >= 0`.
    #[inline]
    pub fn weight(&self, d: f64) -> f64 {
        let r = self.radius;
        match self.kind {
            LocalisationKind::GaspariCohn => gc_unchecked(d, r),
            LocalisationKind::Uniform => {
                if d <= r {
                    1.0
                } else {
                    0.0
                }
            }
            LocalisationKind::Triangular => (1.0 - d / r).max(0.0),
        }
    }
}

/// Fifth-order piecewise rational Gaspari-Cohn taper vanishing for `d >= r`.
pub fn gaspari_cohn(d: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::invalid(format!(
            "Gaspari-Cohn radius must be positive, got {r}"
        )));
    }
    Ok(gc_unchecked(d, r))
}

#[inline]
pub(crate) fn gc_inner(x: f64) -> f64 {
    ((((-8.0 * x + 8.0) * x + 5.0) * x - 20.0 / 3.0) * x * x) + 1.0
}

#[inline]
pub(crate) fn gc_outer(x: f64) -> f64 {
    ((((8.0 / 3.0 * x - 8.0) * x + 5.0) * x + 20.0 / 3.0) * x - 10.0) * x + 4.0 - 1.0 / (3.0 * x)
}

#[inline]
fn gc_unchecked(d: f64, r: f64) -> f64 {
    let x = d.abs() / r;
    let v = if x < 0.5 {
        gc_inner(x)
    } else if x < 1.0 {
        gc_outer(x)
    } else {
        0.0
    };
    // Both polynomials stay inside [0, 1] up to rounding.
    v.clamp(0.0, 1.0)
}
