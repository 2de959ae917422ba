//! Search spaces, points, and the affine map to and from the unit cube.
//!
//! Optimizers work on the continuous relaxation `[0, 1]^d`; integer
//! dimensions are rounded only when a unit vector is mapped back to a
//! [`Point`].

use std::collections::HashSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// A coordinate vector in `[0, 1]^d`.
pub type UnitVector = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimensionKind {
    #[serde(alias = "int")]
    Integer,
    #[serde(alias = "float")]
    Real,
}

/// One bounded axis of the search space. Both bounds are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub kind: DimensionKind,
    pub low: f64,
    pub high: f64,
}

impl Dimension {
    pub fn integer(name: impl Into<String>, low: i64, high: i64) -> Result<Self> {
        Self::new(name, DimensionKind::Integer, low as f64, high as f64)
    }

    pub fn real(name: impl Into<String>, low: f64, high: f64) -> Result<Self> {
        Self::new(name, DimensionKind::Real, low, high)
    }

    pub fn new(name: impl Into<String>, kind: DimensionKind, low: f64, high: f64) -> Result<Self> {
        let dim = Dimension { name: name.into(), kind, low, high };
        dim.check()?;
        Ok(dim)
    }

    fn check(&self) -> Result<()> {
        if !(self.low.is_finite() && self.high.is_finite()) {
            return Err(Error::validation(format!("dimension `{}` has non-finite bounds", self.name)));
        }
        if self.low >= self.high {
            return Err(Error::validation(format!(
                "dimension `{}` needs low < high, got [{}, {}]",
                self.name, self.low, self.high
            )));
        }
        if self.kind == DimensionKind::Integer && (self.low.fract() != 0.0 || self.high.fract() != 0.0) {
            return Err(Error::validation(format!(
                "integer dimension `{}` has fractional bounds [{}, {}]",
                self.name, self.low, self.high
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, value: f64) -> bool {
        value.is_finite()
            && value >= self.low
            && value <= self.high
            && (self.kind == DimensionKind::Real || value.fract() == 0.0)
    }

    fn to_unit(&self, value: f64) -> f64 {
        (value - self.low) / self.width()
    }

    fn from_unit(&self, u: f64) -> f64 {
        let v = self.low + u * self.width();
        match self.kind {
            DimensionKind::Real => v.clamp(self.low, self.high),
            DimensionKind::Integer => v.round().clamp(self.low, self.high),
        }
    }
}

/// A point in native (un-normalized) coordinates, one value per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for Point {
    fn from(values: Vec<f64>) -> Self {
        Point(values)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Ordered, non-empty list of uniquely named dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dimension>", into = "Vec<Dimension>")]
pub struct ParamSpace {
    dims: Vec<Dimension>,
}

impl TryFrom<Vec<Dimension>> for ParamSpace {
    type Error = Error;

    fn try_from(dims: Vec<Dimension>) -> Result<Self> {
        ParamSpace::new(dims)
    }
}

impl From<ParamSpace> for Vec<Dimension> {
    fn from(space: ParamSpace) -> Self {
        space.dims
    }
}

impl ParamSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::validation("search space needs at least one dimension"));
        }
        let mut seen = HashSet::new();
        for dim in &dims {
            dim.check()?;
            if !seen.insert(dim.name.as_str()) {
                return Err(Error::validation(format!("duplicate dimension name `{}`", dim.name)));
            }
        }
        Ok(ParamSpace { dims })
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Checks arity, bounds, and integrality of `p`.
    pub fn validate(&self, p: &Point) -> Result<()> {
        if p.len() != self.len() {
            return Err(Error::validation(format!(
                "point has {} values, space has {} dimensions",
                p.len(),
                self.len()
            )));
        }
        for (dim, &v) in self.dims.iter().zip(p.values()) {
            if !dim.contains(v) {
                return Err(Error::validation(format!(
                    "value {v} is not valid for dimension `{}` ({:?} in [{}, {}])",
                    dim.name, dim.kind, dim.low, dim.high
                )));
            }
        }
        Ok(())
    }

    pub fn normalize(&self, p: &Point) -> Result<UnitVector> {
        self.validate(p)?;
        Ok(self.dims.iter().zip(p.values()).map(|(d, &v)| d.to_unit(v)).collect())
    }

    pub fn denormalize(&self, u: &[f64]) -> Result<Point> {
        if u.len() != self.len() {
            return Err(Error::validation(format!(
                "unit vector has {} coordinates, space has {} dimensions",
                u.len(),
                self.len()
            )));
        }
        for (dim, &c) in self.dims.iter().zip(u) {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::validation(format!(
                    "coordinate {c} for dimension `{}` lies outside [0, 1]",
                    dim.name
                )));
            }
        }
        Ok(Point(self.dims.iter().zip(u).map(|(d, &c)| d.from_unit(c)).collect()))
    }

    /// Uniform draw; integer dimensions are uniform over their lattice.
    pub fn sample(&self, rng: &mut RandomSource) -> Point {
        Point(
            self.dims
                .iter()
                .map(|d| match d.kind {
                    DimensionKind::Real => rng.random_range(d.low..=d.high),
                    DimensionKind::Integer => rng.random_range(d.low as i64..=d.high as i64) as f64,
                })
                .collect(),
        )
    }

    /// Uniform draw in the unit cube.
    pub fn sample_unit(&self, rng: &mut RandomSource) -> UnitVector {
        (0..self.len()).map(|_| rng.random::<f64>()).collect()
    }
}
