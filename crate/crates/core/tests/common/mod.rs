//! Brute-force reference computations shared by the integration tests.
//! Nothing here calls into the library's own geometry or graph code.

#![allow(dead_code)]

use rand::Rng;

pub type Pt = Vec<f64>;

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn diameter(pts: &[Pt]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            best = best.max(dist(&pts[i], &pts[j]));
        }
    }
    best
}

pub fn random_point(rng: &mut impl Rng, d: usize, lo: f64, hi: f64) -> Pt {
    (0..d).map(|_| rng.gen_range(lo..=hi)).collect()
}

/// Smallest `t` with `delta * rate^t <= epsilon`, by repeated multiplication.
pub fn rounds_by_iteration(delta: f64, epsilon: f64, rate: f64) -> usize {
    let mut t = 0;
    let mut x = delta;
    while x > epsilon {
        x *= rate;
        t += 1;
    }
    t
}

pub const HALF: f64 = 0.5;
pub const THREE_QUARTERS: f64 = 0.75;

pub fn sqrt_7_8() -> f64 {
    (7.0f64 / 8.0).sqrt()
}

pub fn sqrt_31_32() -> f64 {
    (31.0f64 / 32.0).sqrt()
}

/// Boolean adjacency matrices: `m[i][j]` means `j` hears `i`.
pub type Matrix = Vec<Vec<bool>>;

/// `j` hears `i` in the product iff some `k` heard `i` in the first graph
/// and `j` heard `k` in the second.
pub fn compose(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).any(|k| a[i][k] && b[k][j])).collect())
        .collect()
}

pub fn nonsplit(m: &Matrix) -> bool {
    let n = m.len();
    (0..n).all(|p| (0..n).all(|q| (0..n).any(|i| m[i][p] && m[i][q])))
}

/// Distance from `x` to the closed segment `[a, b]` in the plane.
pub fn dist_to_segment(x: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
    let len2 = ex * ex + ey * ey;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((x[0] - a[0]) * ex + (x[1] - a[1]) * ey) / len2).clamp(0.0, 1.0)
    };
    let (px, py) = (a[0] + t * ex, a[1] + t * ey);
    ((x[0] - px).powi(2) + (x[1] - py).powi(2)).sqrt()
}

fn side(a: [f64; 2], b: [f64; 2], x: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0])
}

/// Distance from `x` to the triangle `a, b, c` (zero inside).
pub fn dist_to_triangle(x: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let (s1, s2, s3) = (side(a, b, x), side(b, c, x), side(c, a, x));
    let inside = (s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0) || (s1 <= 0.0 && s2 <= 0.0 && s3 <= 0.0);
    let area = side(a, b, c);
    if inside && area != 0.0 {
        return 0.0;
    }
    dist_to_segment(x, a, b)
        .min(dist_to_segment(x, b, c))
        .min(dist_to_segment(x, c, a))
}

/// Distance from `x` to the convex hull of `pts`: by Caratheodory every
/// hull point lies in a triangle (or segment, or point) of input points.
pub fn dist_to_hull(x: [f64; 2], pts: &[[f64; 2]]) -> f64 {
    let mut best = f64::INFINITY;
    let m = pts.len();
    for i in 0..m {
        best = best.min(dist_to_segment(x, pts[i], pts[i]));
        for j in i + 1..m {
            best = best.min(dist_to_segment(x, pts[i], pts[j]));
            for k in j + 1..m {
                best = best.min(dist_to_triangle(x, pts[i], pts[j], pts[k]));
                if best == 0.0 {
                    return 0.0;
                }
            }
        }
    }
    best
}

/// All `k`-subsets of `0..m`, by bitmask.
pub fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << m))
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| (0..m).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

/// How far `x` is outside the intersection of the hulls of all sub-multisets
/// with `f` entries dropped, as the largest distance to any of those hulls.
pub fn safe_area_excess(x: [f64; 2], values: &[[f64; 2]], f: usize) -> f64 {
    subsets(values.len(), values.len() - f)
        .iter()
        .map(|s| {
            let pts: Vec<[f64; 2]> = s.iter().map(|&i| values[i]).collect();
            dist_to_hull(x, &pts)
        })
        .fold(0.0, f64::max)
}

/// Exact intersection of `[min, max]` over all sub-multisets of size
/// `len - f`.
pub fn safe_interval_brute(values: &[f64], f: usize) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for s in subsets(values.len(), values.len() - f) {
        let sub: Vec<f64> = s.iter().map(|&i| values[i]).collect();
        lo = lo.max(sub.iter().cloned().fold(f64::INFINITY, f64::min));
        hi = hi.min(sub.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
    (lo, hi)
}
