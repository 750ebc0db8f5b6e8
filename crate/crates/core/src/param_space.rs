//! Bounded mixed-type hyperparameter spaces: initial sampling, single-coordinate
//! neighborhood moves, and canonical solution keys for tabu identity.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floats are quantized to six decimal places when building a [`SolutionKey`].
const KEY_SCALE: f64 = 1e6;

/// Float moves add a standard-normal draw scaled by this fraction of the range.
const FLOAT_STEP_FRACTION: f64 = 0.1;

/// Stand-in for an open lower bound at zero: the smallest positive value that
/// still quantizes apart from zero under the six-decimal solution key.
pub const OPEN_LOWER_BOUND: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamSpaceError {
    #[error("parameter space must contain at least one spec")]
    EmptySpace,
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("parameter `{name}`: bounds must satisfy lower < upper, got [{lower}, {upper}]")]
    InvalidBounds { name: String, lower: f64, upper: f64 },
    #[error("integer parameter `{name}` has non-integral bound {value}")]
    NonIntegralBound { name: String, value: f64 },
    #[error("solution has {got} values but the space has {expected} parameters")]
    LengthMismatch { expected: usize, got: usize },
    #[error("value {value} for parameter `{name}` is outside [{lower}, {upper}]")]
    OutOfBounds {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("integer parameter `{name}` holds non-integral value {value}")]
    NonIntegralValue { name: String, value: f64 },
}

/// Whether a parameter takes whole-number or real values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Integer,
    Float,
}

/// One bounded hyperparameter: name, kind, and inclusive `[lower, upper]` bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub lower: f64,
    pub upper: f64,
}

impl ParamSpec {
    pub fn integer(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Integer,
            lower,
            upper,
        }
    }

    pub fn float(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Float,
            lower,
            upper,
        }
    }

    fn validate(&self) -> Result<(), ParamSpaceError> {
        if !(self.lower < self.upper) || !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(ParamSpaceError::InvalidBounds {
                name: self.name.clone(),
                lower: self.lower,
                upper: self.upper,
            });
        }
        if self.kind == ParamKind::Integer {
            for bound in [self.lower, self.upper] {
                if bound.fract() != 0.0 {
                    return Err(ParamSpaceError::NonIntegralBound {
                        name: self.name.clone(),
                        value: bound,
                    });
                }
            }
        }
        Ok(())
    }

    fn check_value(&self, value: f64) -> Result<(), ParamSpaceError> {
        if !(value >= self.lower && value <= self.upper) {
            return Err(ParamSpaceError::OutOfBounds {
                name: self.name.clone(),
                value,
                lower: self.lower,
                upper: self.upper,
            });
        }
        if self.kind == ParamKind::Integer && value.fract() != 0.0 {
            return Err(ParamSpaceError::NonIntegralValue {
                name: self.name.clone(),
                value,
            });
        }
        Ok(())
    }
}

/// An ordered collection of uniquely named [`ParamSpec`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    specs: Vec<ParamSpec>,
}

/// A concrete assignment of values, aligned with the space's specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    values: Vec<f64>,
}

impl Solution {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Canonical quantized identity of a solution: floats rounded to six decimal
/// places, integers verbatim. Two solutions whose values agree to six decimals
/// produce equal keys.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SolutionKey(Vec<i64>);

impl ParamSpace {
    /// Builds a validated space. Errors on empty specs, duplicate names,
    /// degenerate bounds, and non-integral integer bounds.
    pub fn new(specs: Vec<ParamSpec>) -> Result<Self, ParamSpaceError> {
        if specs.is_empty() {
            return Err(ParamSpaceError::EmptySpace);
        }
        for (i, spec) in specs.iter().enumerate() {
            spec.validate()?;
            if specs[..i].iter().any(|other| other.name == spec.name) {
                return Err(ParamSpaceError::DuplicateName(spec.name.clone()));
            }
        }
        Ok(Self { specs })
    }

    /// The default search space: the eight XGB hyperparameters with their
    /// experimental ranges. Open lower bounds at zero are represented by
    /// [`OPEN_LOWER_BOUND`] so clamped moves can never produce an excluded zero.
    pub fn xgb_default() -> Self {
        Self::new(vec![
            ParamSpec::integer("n_estimators", 1.0, 50.0),
            ParamSpec::integer("max_depth", 1.0, 50.0),
            ParamSpec::integer("max_delta_step", 1.0, 50.0),
            ParamSpec::integer("n_parallel_trees", 1.0, 50.0),
            ParamSpec::float("learning_rate", OPEN_LOWER_BOUND, 1.0),
            ParamSpec::float("l1", OPEN_LOWER_BOUND, 1.0),
            ParamSpec::float("l2", OPEN_LOWER_BOUND, 1.0),
            ParamSpec::float("gamma", OPEN_LOWER_BOUND, 50.0),
        ])
        .expect("default space is statically valid")
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    /// Index of the spec with the given name, if present.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn validate_solution(&self, solution: &Solution) -> Result<(), ParamSpaceError> {
        if solution.values.len() != self.specs.len() {
            return Err(ParamSpaceError::LengthMismatch {
                expected: self.specs.len(),
                got: solution.values.len(),
            });
        }
        for (spec, &value) in self.specs.iter().zip(&solution.values) {
            spec.check_value(value)?;
        }
        Ok(())
    }

    /// Draws each value uniformly within its bounds; integer specs draw
    /// uniformly over the whole numbers in range.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Solution {
        let values = self
            .specs
            .iter()
            .map(|spec| match spec.kind {
                ParamKind::Integer => {
                    rng.random_range(spec.lower as i64..=spec.upper as i64) as f64
                }
                ParamKind::Float => rng.random_range(spec.lower..=spec.upper),
            })
            .collect();
        Solution { values }
    }

    /// Changes exactly one uniformly chosen coordinate: float specs add a
    /// standard-normal draw scaled by a tenth of the range, integer specs step
    /// by ±1. The result is clamped to bounds, which at a boundary may restore
    /// the original value.
    pub fn perturb<R: Rng + ?Sized>(&self, current: &Solution, rng: &mut R) -> Solution {
        debug_assert_eq!(current.values.len(), self.specs.len());
        let index = rng.random_range(0..self.specs.len());
        let spec = &self.specs[index];
        let mut values = current.values.clone();
        let moved = match spec.kind {
            ParamKind::Integer => {
                let step = if rng.random::<bool>() { 1.0 } else { -1.0 };
                values[index] + step
            }
            ParamKind::Float => {
                let z: f64 = StandardNormal.sample(rng);
                values[index] + z * (spec.upper - spec.lower) * FLOAT_STEP_FRACTION
            }
        };
        values[index] = moved.clamp(spec.lower, spec.upper);
        Solution { values }
    }

    /// Canonical key for tabu membership and score memoization.
    pub fn key(&self, solution: &Solution) -> SolutionKey {
        debug_assert_eq!(solution.values.len(), self.specs.len());
        SolutionKey(
            self.specs
                .iter()
                .zip(&solution.values)
                .map(|(spec, &value)| match spec.kind {
                    ParamKind::Integer => value as i64,
                    ParamKind::Float => (value * KEY_SCALE).round() as i64,
                })
                .collect(),
        )
    }
}
