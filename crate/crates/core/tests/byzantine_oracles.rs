mod common;

use common::{safe_area_excess, safe_interval_brute};
use extremes::byzantine::{
    adversary_collections, run_byzantine, safe_area_1d, safe_area_2d, validate_collections, ByzAdversary,
    ByzScenario, CollectionMultiset, SafeRegion,
};
use extremes::seed;
use extremes::Point;
use rand::Rng;

fn instance(rng: &mut impl Rng, len: usize) -> Vec<[f64; 2]> {
    // a third of the instances sit on a coarse lattice so duplicates and
    // collinear triples are common
    let lattice = rng.gen_bool(0.35);
    (0..len)
        .map(|_| {
            if lattice {
                [rng.gen_range(0..4) as f64, rng.gen_range(0..4) as f64]
            } else {
                [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]
            }
        })
        .collect()
}

#[test]
fn interval_matches_brute_force() {
    let mut rng = seed::rng(11);
    for _ in 0..3000 {
        let len = rng.gen_range(1..=9);
        let f = rng.gen_range(0..=(len - 1) / 2);
        let values: Vec<f64> = if rng.gen_bool(0.3) {
            (0..len).map(|_| rng.gen_range(0..4) as f64).collect()
        } else {
            (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect()
        };
        let (lo, hi) = safe_interval_brute(&values, f);
        assert_eq!(safe_area_1d(&values, f).unwrap(), SafeRegion::Interval { lo, hi }, "{values:?} f={f}");
    }
}

#[test]
fn polygon_matches_grid_membership() {
    let mut rng = seed::rng(12);
    let steps = 24;
    for case in 0..150 {
        let len = rng.gen_range(3..=7);
        let f = rng.gen_range(0..=(len - 1) / 3);
        let values = instance(&mut rng, len);
        let region = safe_area_2d(&values, f).unwrap_or_else(|e| panic!("case {case}: {e} for {values:?} f={f}"));
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in &values {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k] - 0.25);
                hi[k] = hi[k].max(v[k] + 0.25);
            }
        }
        let mut grid: Vec<[f64; 2]> = Vec::new();
        for a in 0..=steps {
            for b in 0..=steps {
                let t = [a as f64 / steps as f64, b as f64 / steps as f64];
                grid.push([lo[0] + t[0] * (hi[0] - lo[0]), lo[1] + t[1] * (hi[1] - lo[1])]);
            }
        }
        // the region's own vertices are the most delicate membership probes
        grid.extend(region.vertices().iter().map(|p| [p.coords()[0], p.coords()[1]]));
        for x in grid {
            let excess = safe_area_excess(x, &values, f);
            let p = Point::new(x.to_vec()).unwrap();
            if excess == 0.0 {
                assert!(region.contains(&p, 1e-7), "case {case}: {x:?} inside every hull but not in {region:?}");
            }
            if region.contains(&p, 0.0) {
                assert!(excess <= 1e-7, "case {case}: {x:?} in {region:?} but {excess} outside some hull");
            }
        }
    }
}

fn hull_of(points: &[Point]) -> SafeRegion {
    match points[0].dim() {
        1 => safe_area_1d(&points.iter().map(|p| p.coords()[0]).collect::<Vec<_>>(), 0).unwrap(),
        _ => safe_area_2d(&points.iter().map(|p| [p.coords()[0], p.coords()[1]]).collect::<Vec<_>>(), 0).unwrap(),
    }
}

#[test]
fn adversarial_collections_give_safe_overlapping_regions() {
    let mut rng = seed::rng(13);
    for _ in 0..300 {
        let d = rng.gen_range(1..=2);
        let f = rng.gen_range(0..=2);
        let n = rng.gen_range((d + 2) * f + 1..=((d + 2) * f + 4).min(12));
        let correct: Vec<Point> = (0..n - f)
            .map(|_| Point::new(common::random_point(&mut rng, d, -1.0, 1.0)).unwrap())
            .collect();
        for adversary in ByzAdversary::all() {
            let colls = adversary_collections(&adversary, n, f, &correct, &mut rng);
            assert!(validate_collections(&colls, n, f));
            let regions: Vec<SafeRegion> = colls
                .iter()
                .map(|c| extremes::byzantine::safe_area(&c.values(), f).unwrap())
                .collect();
            let hull = hull_of(&correct);
            for r in &regions {
                for v in r.vertices() {
                    assert!(hull.contains(&v, 1e-9), "{adversary:?}: vertex {v} outside the correct hull");
                }
            }
            for (i, a) in regions.iter().enumerate() {
                for b in &regions[i + 1..] {
                    assert!(a.overlaps(b, 1e-9), "{adversary:?}: disjoint safe areas {a:?} {b:?}");
                }
            }
        }
    }
}

#[test]
fn validation_counts_identical_pairs_only() {
    let p = |x: f64| Point::new(vec![x]).unwrap();
    let owner = |o: usize, vals: [f64; 4]| CollectionMultiset {
        owner: o,
        entries: vals.iter().enumerate().map(|(s, &x)| (s, p(x))).collect(),
    };
    // source 3 equivocates: the shared part is sources 0..3
    let a = owner(0, [0.0, 1.0, 2.0, 50.0]);
    let b = owner(1, [0.0, 1.0, 2.0, -50.0]);
    assert!(validate_collections(&[a.clone(), b.clone()], 4, 1));
    assert!(!validate_collections(&[a, b], 4, 0));
}

#[test]
fn spec_scenarios_replay() {
    let p = |c: &[f64]| Point::new(c.to_vec()).unwrap();
    let scn = ByzScenario::new(
        4,
        1,
        vec![p(&[0.0]), p(&[3.0]), p(&[9.0])],
        ByzAdversary::Outlier { point: Some(vec![100.0]) },
    );
    let trace = run_byzantine(&scn, Some(1)).unwrap();
    assert_eq!(trace.rows[0].diameter, 9.0);
    assert_eq!(trace.rows[1].diameter, 0.0);

    let scn = ByzScenario::new(
        3,
        0,
        vec![p(&[0.0]), p(&[2.0]), p(&[5.0])],
        ByzAdversary::Equivocate { spread: 1.0 },
    );
    let trace = run_byzantine(&scn, Some(1)).unwrap();
    assert_eq!(trace.configurations.unwrap()[1], vec![p(&[2.5]); 3]);
}
