//! Euclidean primitives on finite-dimensional real vectors.
//!
//! Besides distance, midpoint and the extreme-pair searches used by the
//! update rules, this module exposes the three geometric facts the
//! convergence bounds rest on as numeric checks: the median identity for a
//! triangle and the two midpoint-distance bounds for a tetrahedron.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute slack used when a lemma bound is asserted numerically.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("empty point list")]
    Empty,
    #[error("point has zero dimensions")]
    ZeroDimension,
    #[error("coordinate {index} is not finite")]
    NonFinite { index: usize },
}

/// A value held by an agent: a point of `R^d` with finite coordinates.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: impl Into<Vec<f64>>) -> Result<Self, GeometryError> {
        let coords = coords.into();
        if coords.is_empty() {
            return Err(GeometryError::ZeroDimension);
        }
        if let Some(index) = coords.iter().position(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite { index });
        }
        Ok(Point(coords))
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d > 0, "zero-dimensional point");
        Point(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    /// Coordinate-wise equality on the bit patterns.
    pub fn bit_eq(&self, other: &Point) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        debug_assert!(!coords.is_empty() && coords.iter().all(|c| c.is_finite()));
        Point(coords)
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Point").field(&self.0).finish()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = GeometryError;

    fn try_from(coords: Vec<f64>) -> Result<Self, Self::Error> {
        Point::new(coords)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

fn check_dims(a: &Point, b: &Point) -> Result<(), GeometryError> {
    if a.dim() != b.dim() {
        return Err(GeometryError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

fn check_all_dims(points: &[Point]) -> Result<(), GeometryError> {
    let first = points.first().ok_or(GeometryError::Empty)?;
    points.iter().try_for_each(|p| check_dims(first, p))
}

pub(crate) fn dist_sq_unchecked(a: &Point, b: &Point) -> f64 {
    a.0.iter()
        .zip(&b.0)
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

pub fn distance_squared(a: &Point, b: &Point) -> Result<f64, GeometryError> {
    check_dims(a, b)?;
    Ok(dist_sq_unchecked(a, b))
}

pub fn distance(a: &Point, b: &Point) -> Result<f64, GeometryError> {
    distance_squared(a, b).map(f64::sqrt)
}

pub fn midpoint(a: &Point, b: &Point) -> Result<Point, GeometryError> {
    check_dims(a, b)?;
    Ok(Point(
        a.0.iter().zip(&b.0).map(|(x, y)| 0.5 * (x + y)).collect(),
    ))
}

/// A diameter value together with the index pair realizing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiameterWitness {
    pub value: f64,
    pub pair: (usize, usize),
}

/// Exact all-pairs diameter.
///
/// Among tied pairs the lexicographically smallest `(i, j)` with `i < j`
/// wins; a list whose points all coincide reports `(0, 0)`.
pub fn diameter(points: &[Point]) -> Result<DiameterWitness, GeometryError> {
    check_all_dims(points)?;
    let mut best_sq = 0.0;
    let mut pair = (0, 0);
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = dist_sq_unchecked(&points[i], &points[j]);
            if d > best_sq {
                best_sq = d;
                pair = (i, j);
            }
        }
    }
    Ok(DiameterWitness {
        value: dist_sq_unchecked(&points[pair.0], &points[pair.1]).sqrt(),
        pair,
    })
}

/// Diameter value only; `0` for an empty list.
pub fn diameter_value(points: &[Point]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    diameter(points).map(|w| w.value).unwrap_or(f64::NAN)
}

/// Index of the point of `points` farthest from `p` (smallest index on ties).
pub fn farthest_from(p: &Point, points: &[Point]) -> Result<usize, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::Empty);
    }
    let mut best = 0;
    let mut best_sq = f64::NEG_INFINITY;
    for (k, q) in points.iter().enumerate() {
        check_dims(p, q)?;
        let d = dist_sq_unchecked(p, q);
        if d > best_sq {
            best_sq = d;
            best = k;
        }
    }
    Ok(best)
}

/// Both sides of the median identity
/// `|m - c|^2 = |a - c|^2 / 2 + |b - c|^2 / 2 - |a - b|^2 / 4` with `m` the
/// midpoint of `a` and `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl TriangleCheck {
    pub fn holds(&self) -> bool {
        (self.lhs - self.rhs).abs() <= 1e-9 * self.lhs.max(1.0)
    }
}

pub fn triangle_median_check(a: &Point, b: &Point, c: &Point) -> Result<TriangleCheck, GeometryError> {
    check_dims(a, b)?;
    check_dims(a, c)?;
    let m = midpoint(a, b)?;
    let lhs = dist_sq_unchecked(&m, c);
    let rhs = 0.5 * dist_sq_unchecked(a, c) + 0.5 * dist_sq_unchecked(b, c)
        - 0.25 * dist_sq_unchecked(a, b);
    Ok(TriangleCheck { lhs, rhs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TetrahedronVariant {
    /// `gamma <= |a-b| + |a'-b'|`, bound `sqrt(7/8) * gamma`.
    Strict,
    /// `gamma <= 2|a-b| + 2|a'-b'|`, bound `sqrt(31/32) * gamma`.
    Relaxed,
}

impl TetrahedronVariant {
    pub fn factor(self) -> f64 {
        match self {
            TetrahedronVariant::Strict => (7.0f64 / 8.0).sqrt(),
            TetrahedronVariant::Relaxed => (31.0f64 / 32.0).sqrt(),
        }
    }

    fn edge_weight(self) -> f64 {
        match self {
            TetrahedronVariant::Strict => 1.0,
            TetrahedronVariant::Relaxed => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetrahedronCheck {
    pub gamma: f64,
    pub holds_hypothesis: bool,
    pub mm_dist: f64,
    pub bound: f64,
}

impl TetrahedronCheck {
    /// True unless the hypothesis holds and the bound is exceeded.
    pub fn consistent(&self) -> bool {
        !self.holds_hypothesis || self.mm_dist <= self.bound + BOUND_SLACK
    }
}

/// Midpoint-distance bound for the tetrahedron `a, b, a2, b2` with
/// `gamma = diam{a, b, a2, b2}`.
pub fn tetrahedron_bound_check(
    a: &Point,
    b: &Point,
    a2: &Point,
    b2: &Point,
    variant: TetrahedronVariant,
) -> Result<TetrahedronCheck, GeometryError> {
    let pts = [a.clone(), b.clone(), a2.clone(), b2.clone()];
    let gamma = diameter(&pts)?.value;
    let edges = dist_sq_unchecked(a, b).sqrt() + dist_sq_unchecked(a2, b2).sqrt();
    let holds_hypothesis = gamma <= variant.edge_weight() * edges;
    let mm_dist = distance(&midpoint(a, b)?, &midpoint(a2, b2)?)?;
    Ok(TetrahedronCheck {
        gamma,
        holds_hypothesis,
        mm_dist,
        bound: variant.factor() * gamma,
    })
}

/// Coordinate-wise bounding box of a nonempty list.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn of(points: &[Point]) -> Result<Self, GeometryError> {
        check_all_dims(points)?;
        let d = points[0].dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in points {
            for (k, &c) in p.coords().iter().enumerate() {
                lo[k] = lo[k].min(c);
                hi[k] = hi[k].max(c);
            }
        }
        Ok(BoundingBox { lo, hi })
    }

    pub fn contains(&self, p: &Point, slack: f64) -> bool {
        p.dim() == self.lo.len()
            && p
                .coords()
                .iter()
                .enumerate()
                .all(|(k, &c)| c >= self.lo[k] - slack && c <= self.hi[k] + slack)
    }
}
