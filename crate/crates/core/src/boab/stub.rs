//! Synthetic profiles with training bypassed, for checking the selection
//! rule against closed-form bounds.

use serde::{Deserialize, Serialize};

use super::ProfilePoint;

/// Profile points from given `ε̂_F(α)`, `R̂(α)` and `Comp(α)` curves.
pub fn synthetic_profile(
    grid: &[f64],
    factual: impl Fn(f64) -> f64,
    imbalance: impl Fn(f64) -> f64,
    comp: impl Fn(f64) -> f64,
) -> Vec<ProfilePoint> {
    grid.iter()
        .map(|&a| ProfilePoint::new(a, factual(a), imbalance(a), comp(a), 0.0, 0.0))
        .collect()
}

/// `lo, lo + h, …, hi` with `steps` intervals.
pub fn uniform_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect()
}

/// A profile family with a quadratic population bound:
///
/// * `ε(α) = ε₀ + sα²/2`
/// * `r(α) = r₀ − sα`
/// * `Comp(α) = C₀ − gα + (κ + s)α²/2`
///
/// so `Q(α) = ε₀ + C₀ + (r₀ − g)α + κα²/2` with minimizer `(g − r₀)/κ` and
/// `Q'(α) = r(α) + Comp'(α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticStub {
    pub eps0: f64,
    pub slope: f64,
    pub r0: f64,
    pub g: f64,
    pub c0: f64,
    pub kappa: f64,
}

impl Default for QuadraticStub {
    fn default() -> Self {
        Self {
            eps0: 0.5,
            slope: 0.2,
            r0: 1.0,
            g: 2.0,
            c0: 0.3,
            kappa: 2.0,
        }
    }
}

/// Perturbations of the measured profile.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StubNoise {
    /// Constant shift of the measured imbalance; enters the score `Q̂'`
    /// additively.
    pub score_shift: f64,
    /// Per-grid-point additive error on `ε̂_F` (empty for none).
    pub per_point: Vec<f64>,
}

impl QuadraticStub {
    pub fn factual(&self, a: f64) -> f64 {
        self.eps0 + 0.5 * self.slope * a * a
    }

    pub fn imbalance(&self, a: f64) -> f64 {
        self.r0 - self.slope * a
    }

    pub fn comp(&self, a: f64) -> f64 {
        self.c0 - self.g * a + 0.5 * (self.kappa + self.slope) * a * a
    }

    /// Population bound `Q(α)`.
    pub fn q(&self, a: f64) -> f64 {
        self.factual(a) + a * self.imbalance(a) + self.comp(a)
    }

    pub fn alpha_bd(&self) -> f64 {
        (self.g - self.r0) / self.kappa
    }

    /// Measured profile under `noise`.
    pub fn profile(&self, grid: &[f64], noise: &StubNoise) -> Vec<ProfilePoint> {
        grid.iter()
            .enumerate()
            .map(|(i, &a)| {
                let eta = noise.per_point.get(i).copied().unwrap_or(0.0);
                ProfilePoint::new(
                    a,
                    self.factual(a) + eta,
                    self.imbalance(a) + noise.score_shift,
                    self.comp(a),
                    0.0,
                    0.0,
                )
            })
            .collect()
    }
}
