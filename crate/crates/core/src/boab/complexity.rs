//! Complexity term `Comp(α; n, δ)` of the profile bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComplexityMethod {
    /// `C·L̂(α)/√n` plus the confidence term.
    Lipschitz,
    /// Twice the largest Rademacher average of the per-unit losses over
    /// `mc_draws` sign vectors, plus the confidence term. A lower-bound
    /// heuristic for the class supremum.
    RademacherMc,
    /// Confidence term only.
    Constant,
}

impl ComplexityMethod {
    pub fn name(self) -> &'static str {
        match self {
            ComplexityMethod::Lipschitz => "lipschitz",
            ComplexityMethod::RademacherMc => "rademacher_mc",
            ComplexityMethod::Constant => "constant",
        }
    }
}

impl std::str::FromStr for ComplexityMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lipschitz" => Ok(ComplexityMethod::Lipschitz),
            "rademacher_mc" => Ok(ComplexityMethod::RademacherMc),
            "constant" => Ok(ComplexityMethod::Constant),
            other => Err(Error::InvalidArgument(format!(
                "unknown complexity method '{other}' (lipschitz|rademacher_mc|constant)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexitySpec {
    pub method: ComplexityMethod,
    pub scale: f64,
    pub delta: f64,
    pub mc_draws: usize,
}

impl Default for ComplexitySpec {
    fn default() -> Self {
        Self {
            method: ComplexityMethod::Lipschitz,
            scale: 1.0,
            delta: 0.05,
            mc_draws: 64,
        }
    }
}

impl ComplexitySpec {
    pub fn constant(delta: f64) -> Self {
        Self {
            method: ComplexityMethod::Constant,
            delta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("complexity scale must be > 0, got {}", self.scale)));
        }
        if self.method == ComplexityMethod::RademacherMc && self.mc_draws == 0 {
            return Err(Error::InvalidArgument("rademacher_mc needs mc_draws >= 1".into()));
        }
        Ok(())
    }
}

/// Quantities measured at `θ̂(α)` that the complexity term may need.
#[derive(Debug, Clone, Copy)]
pub struct ComplexityInputs<'a> {
    pub n: usize,
    /// Loss bound `M̂`.
    pub loss_bound: f64,
    pub lipschitz: Option<f64>,
    /// Per-unit losses for the Rademacher average.
    pub losses: Option<&'a [f64]>,
    pub mc_seed: u64,
}

/// `M̂·√(log(2/δ)/(2n))`.
pub fn confidence_term(loss_bound: f64, delta: f64, n: usize) -> f64 {
    loss_bound * ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

pub fn complexity_term(spec: &ComplexitySpec, inputs: &ComplexityInputs<'_>) -> Result<f64> {
    spec.validate()?;
    if inputs.n < 2 {
        return Err(Error::InsufficientData {
            context: "complexity_term",
            needed: 2,
            got: inputs.n,
        });
    }
    if !(inputs.loss_bound > 0.0 && inputs.loss_bound.is_finite()) {
        return Err(Error::InvalidArgument(format!("loss bound must be > 0, got {}", inputs.loss_bound)));
    }
    let conf = confidence_term(inputs.loss_bound, spec.delta, inputs.n);
    match spec.method {
        ComplexityMethod::Constant => Ok(conf),
        ComplexityMethod::Lipschitz => {
            let l = inputs
                .lipschitz
                .ok_or_else(|| Error::InvalidArgument("lipschitz complexity needs a Lipschitz estimate".into()))?;
            Ok(spec.scale * l / (inputs.n as f64).sqrt() + conf)
        }
        ComplexityMethod::RademacherMc => {
            let losses = inputs
                .losses
                .ok_or_else(|| Error::InvalidArgument("rademacher_mc complexity needs per-unit losses".into()))?;
            Ok(2.0 * rademacher_sup(losses, spec.mc_draws, inputs.mc_seed) + conf)
        }
    }
}

/// `max_b (1/n) Σ σᵢ⁽ᵇ⁾ ℓᵢ` over `draws` Rademacher sign vectors.
pub fn rademacher_sup(losses: &[f64], draws: usize, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed);
    let n = losses.len().max(1) as f64;
    (0..draws)
        .map(|_| losses.iter().map(|l| rng.sign() * l).sum::<f64>() / n)
        .fold(f64::NEG_INFINITY, f64::max)
}
