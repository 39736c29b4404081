//! Safe areas: the intersection of the convex hulls of all sub-multisets
//! obtained by dropping `f` entries from a received multiset.

use thiserror::Error;

use crate::geometry::{self, Point};

/// Collinearity / membership tolerance, relative to the instance scale.
pub const CLIP_TOLERANCE: f64 = 1e-12;

/// Largest multiset accepted by [`safe_area_2d`].
pub const MAX_SUBSET_SOURCE: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SafeAreaError {
    #[error("{len} values cannot tolerate f = {f} (need at least 2f + 1)")]
    Insufficient { len: usize, f: usize },
    #[error("safe area is empty")]
    EmptyIntersection,
    #[error("{0} values exceed the sub-multiset enumeration cap of {MAX_SUBSET_SOURCE}")]
    TooManyValues(usize),
    #[error("safe areas are only computed for d in {{1, 2}} (got {0})")]
    UnsupportedDimension(usize),
    #[error("expected {expected}-dimensional values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("empty value list")]
    Empty,
}

pub type Vec2 = [f64; 2];

/// Closed convex region: an interval in one dimension, a counterclockwise
/// vertex list in two (one vertex for a point, two for a segment).
#[derive(Debug, Clone, PartialEq)]
pub enum SafeRegion {
    Interval { lo: f64, hi: f64 },
    Polygon(Vec<Vec2>),
}

impl SafeRegion {
    pub fn dim(&self) -> usize {
        match self {
            SafeRegion::Interval { .. } => 1,
            SafeRegion::Polygon(_) => 2,
        }
    }

    pub fn vertices(&self) -> Vec<Point> {
        match self {
            SafeRegion::Interval { lo, hi } if lo == hi => vec![Point::from_raw(vec![*lo])],
            SafeRegion::Interval { lo, hi } => vec![Point::from_raw(vec![*lo]), Point::from_raw(vec![*hi])],
            SafeRegion::Polygon(vs) => vs.iter().map(|v| Point::from_raw(v.to_vec())).collect(),
        }
    }

    /// Membership with absolute slack `tol`.
    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        match (self, p.coords()) {
            (SafeRegion::Interval { lo, hi }, [x]) => *x >= lo - tol && *x <= hi + tol,
            (SafeRegion::Polygon(vs), [x, y]) => {
                half_planes(vs).iter().all(|h| h.slack(&[*x, *y]) <= tol)
            }
            _ => false,
        }
    }

    /// Intersection of two regions of the same dimension.
    pub fn intersect(&self, other: &SafeRegion) -> Option<SafeRegion> {
        match (self, other) {
            (SafeRegion::Interval { lo: a, hi: b }, SafeRegion::Interval { lo: c, hi: d }) => {
                let (lo, hi) = (a.max(*c), b.min(*d));
                (lo <= hi).then_some(SafeRegion::Interval { lo, hi })
            }
            (SafeRegion::Polygon(p), SafeRegion::Polygon(q)) => {
                let tol = CLIP_TOLERANCE * scale_of(p.iter().chain(q.iter()));
                let mut cur = p.clone();
                for h in half_planes(q) {
                    cur = clip(&cur, &h, tol);
                    if cur.is_empty() {
                        return None;
                    }
                }
                Some(SafeRegion::Polygon(convex_hull(&cur, tol)))
            }
            _ => None,
        }
    }

    /// Whether the regions meet once both are widened by `slack`.
    pub fn overlaps(&self, other: &SafeRegion, slack: f64) -> bool {
        match (self, other) {
            (SafeRegion::Interval { lo: a, hi: b }, SafeRegion::Interval { lo: c, hi: d }) => {
                a.max(*c) <= b.min(*d) + 2.0 * slack
            }
            (SafeRegion::Polygon(p), SafeRegion::Polygon(q)) => {
                let mut cur = p.clone();
                for h in half_planes(q) {
                    cur = clip(&cur, &h, 2.0 * slack);
                    if cur.is_empty() {
                        return false;
                    }
                }
                true
            }
            _ => false,
        }
    }
}

/// `normal . x <= offset` with a unit normal.
#[derive(Debug, Clone, Copy)]
struct HalfPlane {
    normal: Vec2,
    offset: f64,
}

impl HalfPlane {
    fn through(normal: Vec2, at: Vec2) -> Self {
        let len = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
        let normal = [normal[0] / len, normal[1] / len];
        HalfPlane {
            normal,
            offset: normal[0] * at[0] + normal[1] * at[1],
        }
    }

    /// Positive when `x` is outside.
    fn slack(&self, x: &Vec2) -> f64 {
        self.normal[0] * x[0] + self.normal[1] * x[1] - self.offset
    }
}

fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

/// Twice the signed area of `o, a, b`, with the sign computed exactly.
fn cross(o: Vec2, a: Vec2, b: Vec2) -> f64 {
    let c = |p: Vec2| robust::Coord { x: p[0], y: p[1] };
    robust::orient2d(c(o), c(a), c(b))
}

fn dist(a: Vec2, b: Vec2) -> f64 {
    let d = sub(a, b);
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

fn scale_of<'a>(pts: impl Iterator<Item = &'a Vec2>) -> f64 {
    pts.flat_map(|p| p.iter()).fold(1.0f64, |m, c| m.max(c.abs()))
}

/// Half-planes whose intersection is the convex region with vertices `vs`.
fn half_planes(vs: &[Vec2]) -> Vec<HalfPlane> {
    match vs {
        [] => Vec::new(),
        [q] => vec![
            HalfPlane::through([1.0, 0.0], *q),
            HalfPlane::through([-1.0, 0.0], *q),
            HalfPlane::through([0.0, 1.0], *q),
            HalfPlane::through([0.0, -1.0], *q),
        ],
        [a, b] => {
            let e = sub(*b, *a);
            vec![
                HalfPlane::through([e[1], -e[0]], *a),
                HalfPlane::through([-e[1], e[0]], *a),
                HalfPlane::through([-e[0], -e[1]], *a),
                HalfPlane::through(e, *b),
            ]
        }
        _ => (0..vs.len())
            .map(|k| {
                let (p, q) = (vs[k], vs[(k + 1) % vs.len()]);
                let e = sub(q, p);
                HalfPlane::through([e[1], -e[0]], p)
            })
            .collect(),
    }
}

/// Sutherland-Hodgman step against one half-plane.
fn clip(poly: &[Vec2], h: &HalfPlane, tol: f64) -> Vec<Vec2> {
    let m = poly.len();
    let mut out = Vec::with_capacity(m + 1);
    for k in 0..m {
        let cur = poly[k];
        let prev = poly[(k + m - 1) % m];
        let (sc, sp) = (h.slack(&cur), h.slack(&prev));
        let (cur_in, prev_in) = (sc <= tol, sp <= tol);
        if cur_in != prev_in {
            // both ends may lie on the same side of the line when one is
            // only within tolerance; the clamp keeps the crossing on the edge
            let t = (sp / (sp - sc)).clamp(0.0, 1.0);
            out.push([prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])]);
        }
        if cur_in {
            out.push(cur);
        }
    }
    out
}

/// Counterclockwise convex hull; points within `tol` are merged and
/// collinear vertices dropped. Returns one vertex for a point and two for a
/// segment.
pub fn convex_hull(points: &[Vec2], tol: f64) -> Vec<Vec2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut uniq: Vec<Vec2> = Vec::with_capacity(pts.len());
    for p in pts {
        if !uniq.iter().any(|q| dist(*q, p) <= tol) {
            uniq.push(p);
        }
    }
    if uniq.len() <= 1 {
        return uniq;
    }
    let keeps_left = |o: Vec2, a: Vec2, b: Vec2| cross(o, a, b) > tol * dist(o, b).max(dist(o, a));
    let mut lower: Vec<Vec2> = Vec::new();
    for &p in &uniq {
        while lower.len() >= 2 && !keeps_left(lower[lower.len() - 2], lower[lower.len() - 1], p) {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Vec2> = Vec::new();
    for &p in uniq.iter().rev() {
        while upper.len() >= 2 && !keeps_left(upper[upper.len() - 2], upper[upper.len() - 1], p) {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() == 2 && dist(lower[0], lower[1]) <= tol {
        lower.truncate(1);
    }
    lower
}

/// `[x_(f+1), x_(len-f)]` of the sorted multiset.
pub fn safe_area_1d(values: &[f64], f: usize) -> Result<SafeRegion, SafeAreaError> {
    if values.len() < 2 * f + 1 {
        return Err(SafeAreaError::Insufficient { len: values.len(), f });
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(SafeRegion::Interval {
        lo: v[f],
        hi: v[v.len() - 1 - f],
    })
}

/// All index sets of size `k` out of `0..len`, in lexicographic order.
pub fn combinations(len: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > len {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] < i + len - k) else {
            return out;
        };
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Intersection of the hulls of every sub-multiset with `f` entries removed.
///
/// Every hull edge joins two input points, so the distinct half-planes are
/// collected first and the first hull is clipped against each of them once.
/// Clipping never re-derives a half-plane from an already clipped polygon,
/// which keeps rounding from compounding on tiny or nearly degenerate
/// regions. Only the returned region has near-duplicate vertices merged.
pub fn safe_area_2d(values: &[Vec2], f: usize) -> Result<SafeRegion, SafeAreaError> {
    if values.is_empty() {
        return Err(SafeAreaError::Empty);
    }
    if values.len() > MAX_SUBSET_SOURCE {
        return Err(SafeAreaError::TooManyValues(values.len()));
    }
    if f >= values.len() {
        return Err(SafeAreaError::EmptyIntersection);
    }
    let tol = CLIP_TOLERANCE * scale_of(values.iter());
    let keep = values.len() - f;
    let mut start: Option<Vec<Vec2>> = None;
    let mut planes: Vec<HalfPlane> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for subset in combinations(values.len(), keep) {
        let pts: Vec<Vec2> = subset.iter().map(|&k| values[k]).collect();
        // exact orientation here: dropping nearly collinear points would move
        // edges inward, and those shifts add up across subsets
        let hull = convex_hull(&pts, 0.0);
        for h in half_planes(&hull) {
            let key = [h.normal[0].to_bits(), h.normal[1].to_bits(), h.offset.to_bits()];
            if seen.insert(key) {
                planes.push(h);
            }
        }
        start.get_or_insert(hull);
    }
    let mut cur = start.expect("at least one subset");
    for h in &planes {
        cur = clip(&cur, h, tol);
        if cur.is_empty() {
            return Err(SafeAreaError::EmptyIntersection);
        }
    }
    Ok(SafeRegion::Polygon(convex_hull(&cur, tol)))
}

/// Safe area of points of dimension `d` in {1, 2}.
pub fn safe_area(values: &[Point], f: usize) -> Result<SafeRegion, SafeAreaError> {
    let d = values.first().ok_or(SafeAreaError::Empty)?.dim();
    if let Some(p) = values.iter().find(|p| p.dim() != d) {
        return Err(SafeAreaError::Dimension { expected: d, got: p.dim() });
    }
    match d {
        1 => safe_area_1d(&values.iter().map(|p| p.coords()[0]).collect::<Vec<_>>(), f),
        2 => safe_area_2d(
            &values.iter().map(|p| [p.coords()[0], p.coords()[1]]).collect::<Vec<_>>(),
            f,
        ),
        d => Err(SafeAreaError::UnsupportedDimension(d)),
    }
}

/// Midpoint of a diameter-realizing pair of the region.
pub fn byz_update(region: &SafeRegion) -> Result<Point, SafeAreaError> {
    match region {
        SafeRegion::Interval { lo, hi } => Ok(Point::from_raw(vec![0.5 * (lo + hi)])),
        SafeRegion::Polygon(vs) if vs.is_empty() => Err(SafeAreaError::EmptyIntersection),
        SafeRegion::Polygon(_) => {
            let vs = region.vertices();
            let (a, b) = geometry::diameter(&vs).map_err(|_| SafeAreaError::Empty)?.pair;
            geometry::midpoint(&vs[a], &vs[b]).map_err(|_| SafeAreaError::Empty)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn approx_same(got: &[Vec2], want: &[Vec2]) -> bool {
        got.len() == want.len()
            && want
                .iter()
                .all(|w| got.iter().any(|g| dist(*g, *w) < 1e-9))
    }

    #[test]
    fn safe_area_1d_examples() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(safe_area_1d(&v, 1).unwrap(), SafeRegion::Interval { lo: 1.0, hi: 3.0 });
        assert_eq!(safe_area_1d(&[3.0, -1.0, 7.0], 0).unwrap(), SafeRegion::Interval { lo: -1.0, hi: 7.0 });
        assert_eq!(
            safe_area_1d(&[0.0, 0.0, 0.0, 5.0, 5.0], 2).unwrap(),
            SafeRegion::Interval { lo: 0.0, hi: 0.0 }
        );
        assert_eq!(
            safe_area_1d(&[1.0, 2.0], 1),
            Err(SafeAreaError::Insufficient { len: 2, f: 1 })
        );
    }

    #[test]
    fn combinations_enumerate_all_subsets() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(5, 5), vec![vec![0, 1, 2, 3, 4]]);
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
        assert_eq!(combinations(3, 1), vec![vec![0], vec![1], vec![2]]);
        assert!(combinations(2, 3).is_empty());
        assert_eq!(combinations(12, 6).len(), 924);
    }

    #[test]
    fn hull_handles_degenerate_inputs() {
        assert_eq!(convex_hull(&[[1.0, 1.0], [1.0, 1.0]], 1e-12), vec![[1.0, 1.0]]);
        let seg = convex_hull(&[[0.0, 0.0], [2.0, 2.0], [1.0, 1.0]], 1e-12);
        assert!(approx_same(&seg, &[[0.0, 0.0], [2.0, 2.0]]));
        let sq = convex_hull(&[[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0], [2.0, 2.0], [2.0, 0.0]], 1e-12);
        assert_eq!(sq, vec![[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]]);
    }

    #[test]
    fn safe_area_2d_examples() {
        let v = [[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0], [2.0, 2.0]];
        match safe_area_2d(&v, 0).unwrap() {
            SafeRegion::Polygon(vs) => assert!(approx_same(&vs, &v[..4])),
            r => panic!("{r:?}"),
        }
        match safe_area_2d(&v, 1).unwrap() {
            SafeRegion::Polygon(vs) => assert!(approx_same(&vs, &[[2.0, 2.0]]), "{vs:?}"),
            r => panic!("{r:?}"),
        }
        let doubled: Vec<Vec2> = v[..4].iter().chain(v[..4].iter()).copied().collect();
        match safe_area_2d(&doubled, 1).unwrap() {
            SafeRegion::Polygon(vs) => assert!(approx_same(&vs, &v[..4]), "{vs:?}"),
            r => panic!("{r:?}"),
        }
        assert_eq!(safe_area_2d(&[[0.0, 0.0]; 13], 1), Err(SafeAreaError::TooManyValues(13)));
        // three points, f = 1: the three edges share no common point
        assert_eq!(
            safe_area_2d(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], 1),
            Err(SafeAreaError::EmptyIntersection)
        );
    }

    #[test]
    fn safe_area_dispatch() {
        let p = |c: &[f64]| Point::new(c.to_vec()).unwrap();
        assert_eq!(
            safe_area(&[p(&[0.0]), p(&[1.0]), p(&[2.0])], 1).unwrap(),
            SafeRegion::Interval { lo: 1.0, hi: 1.0 }
        );
        assert_eq!(
            safe_area(&[p(&[0.0, 0.0, 0.0])], 0),
            Err(SafeAreaError::UnsupportedDimension(3))
        );
        assert!(safe_area(&[p(&[0.0]), p(&[0.0, 1.0])], 0).is_err());
    }

    #[test]
    fn byz_update_examples() {
        let pt = SafeRegion::Polygon(vec![[1.5, -2.0]]);
        assert_eq!(byz_update(&pt).unwrap(), Point::new(vec![1.5, -2.0]).unwrap());
        let iv = SafeRegion::Interval { lo: 1.0, hi: 3.0 };
        assert_eq!(byz_update(&iv).unwrap(), Point::new(vec![2.0]).unwrap());
        let sq = SafeRegion::Polygon(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        assert_eq!(byz_update(&sq).unwrap(), Point::new(vec![0.5, 0.5]).unwrap());
    }

    #[test]
    fn region_intersection_and_membership() {
        let a = SafeRegion::Polygon(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]);
        let b = SafeRegion::Polygon(vec![[1.0, 1.0], [3.0, 1.0], [3.0, 3.0], [1.0, 3.0]]);
        match a.intersect(&b).unwrap() {
            SafeRegion::Polygon(vs) => assert!(approx_same(&vs, &[[1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [1.0, 2.0]])),
            r => panic!("{r:?}"),
        }
        let far = SafeRegion::Polygon(vec![[5.0, 5.0]]);
        assert!(a.intersect(&far).is_none());
        let seg = SafeRegion::Polygon(vec![[-1.0, 1.0], [3.0, 1.0]]);
        match a.intersect(&seg).unwrap() {
            SafeRegion::Polygon(vs) => assert!(approx_same(&vs, &[[0.0, 1.0], [2.0, 1.0]]), "{vs:?}"),
            r => panic!("{r:?}"),
        }
        assert!(a.contains(&Point::new(vec![2.0, 1.0]).unwrap(), 0.0));
        assert!(!a.contains(&Point::new(vec![2.1, 1.0]).unwrap(), 1e-9));
        let i1 = SafeRegion::Interval { lo: 0.0, hi: 1.0 };
        assert_eq!(i1.intersect(&SafeRegion::Interval { lo: 1.0, hi: 4.0 }), Some(SafeRegion::Interval { lo: 1.0, hi: 1.0 }));
        assert_eq!(i1.intersect(&SafeRegion::Interval { lo: 1.5, hi: 4.0 }), None);
    }

    proptest! {
        #[test]
        fn hull_contains_all_inputs(pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..15)) {
            let pts: Vec<Vec2> = pts.into_iter().map(|(x, y)| [x, y]).collect();
            let hull = SafeRegion::Polygon(convex_hull(&pts, 1e-12 * 10.0));
            for p in &pts {
                prop_assert!(hull.contains(&Point::new(p.to_vec()).unwrap(), 1e-9));
            }
        }
    }
}
