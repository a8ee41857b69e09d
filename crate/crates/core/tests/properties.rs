use mitodet::candidates::{connected_components, link_boxes, BoundingBox, FrameBoxes};
use mitodet::eval::{evaluate, match_detections, SpatialMetric, Tolerance};
use mitodet::targets::{aggregate_max, single_annotation_map, SigmaParams};
use mitodet::types::{to_global, to_local, Annotation, CropMeta, Detection, Mask, Point3, Shape3, Volume3};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Point3> {
    (0u32..60, 0u32..60, 0u32..20).prop_map(|(x, y, t)| Point3::new(x as f64, y as f64, t as f64))
}

fn instance() -> impl Strategy<Value = (Vec<Detection>, Vec<Annotation>)> {
    (prop::collection::vec(point(), 0..9), prop::collection::vec(point(), 0..9)).prop_map(|(d, g)| {
        let dets = d.into_iter().map(|point| Detection { point, score: 0.5 }).collect();
        let gts = g.into_iter().enumerate().map(|(id, point)| Annotation { id, point }).collect();
        (dets, gts)
    })
}

fn metric() -> impl Strategy<Value = SpatialMetric> {
    prop_oneof![Just(SpatialMetric::Euclidean), Just(SpatialMetric::Chebyshev)]
}

const SHAPE: Shape3 = Shape3::new(10, 8, 5);

fn map() -> impl Strategy<Value = Volume3> {
    (-2.0..12.0f64, -2.0..10.0f64, -1.0..6.0f64, 0.5..4.0f64, 0.5..3.0f64).prop_map(|(x, y, t, sxy, st)| {
        let sigma = SigmaParams {
            sigma_x: sxy,
            sigma_y: sxy,
            sigma_t: st,
        };
        single_annotation_map(Point3::new(x, y, t), &sigma, SHAPE).unwrap()
    })
}

fn max2(a: &Volume3, b: &Volume3) -> Volume3 {
    aggregate_max(&[a.clone(), b.clone()]).unwrap().unwrap()
}

proptest! {
    #[test]
    fn counts_add_up((dets, gts) in instance(), tau_t in 0.0..10.0f64, tau_s in 0.0..40.0f64, metric in metric()) {
        let tol = Tolerance { tau_t, tau_s, metric };
        let m = match_detections(&dets, &gts, &tol);
        prop_assert_eq!(m.tp + m.fn_, gts.len());
        prop_assert_eq!(m.tp + m.fp, dets.len());
        prop_assert_eq!(m.pairs.len(), m.tp);
        let metrics = evaluate(&dets, &gts, &tol);
        prop_assert!((0.0..=1.0).contains(&metrics.f1));
    }

    #[test]
    fn pairs_are_one_to_one_and_within_tolerance((dets, gts) in instance(), metric in metric()) {
        let tol = Tolerance { metric, ..Tolerance::default() };
        let m = match_detections(&dets, &gts, &tol);
        let mut seen_d = std::collections::HashSet::new();
        let mut seen_g = std::collections::HashSet::new();
        for p in &m.pairs {
            prop_assert!(seen_d.insert(p.detection) && seen_g.insert(p.annotation));
            let (d, g) = (&dets[p.detection].point, &gts[p.annotation].point);
            prop_assert!((d.t - g.t).abs() <= tol.tau_t);
            prop_assert!(metric.distance(d, g) <= tol.tau_s);
        }
    }

    #[test]
    fn tp_is_monotone_in_both_tolerances(
        (dets, gts) in instance(),
        t0 in 0.0..8.0f64, dt in 0.0..4.0f64,
        s0 in 0.0..30.0f64, ds in 0.0..10.0f64,
    ) {
        let tp = |tau_t, tau_s| {
            match_detections(&dets, &gts, &Tolerance { tau_t, tau_s, metric: SpatialMetric::Euclidean }).tp
        };
        prop_assert!(tp(t0, s0) <= tp(t0 + dt, s0));
        prop_assert!(tp(t0, s0) <= tp(t0, s0 + ds));
    }

    #[test]
    fn max_aggregation_is_a_semilattice(a in map(), b in map(), c in map()) {
        prop_assert_eq!(max2(&a, &b), max2(&b, &a));
        prop_assert_eq!(max2(&a, &a), a.clone());
        prop_assert_eq!(max2(&max2(&a, &b), &c), max2(&a, &max2(&b, &c)));
        let ab = max2(&a, &b);
        prop_assert!(ab.data().iter().zip(a.data()).all(|(m, v)| m >= v));
    }

    #[test]
    fn bump_values_stay_in_unit_interval(m in map()) {
        prop_assert!(m.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn coordinates_round_trip(
        x in -500.0..500.0f64, y in -500.0..500.0f64, t in -50.0..50.0f64,
        ox in -100i64..600, oy in -100i64..600, ot in -20i64..60,
    ) {
        let meta = CropMeta { origin_x: ox, origin_y: oy, origin_t: ot, pad_mask: vec![false; 16] };
        let p = Point3::new(x, y, t);
        let back = to_global(to_local(p, &meta), &meta);
        prop_assert!((back.x - x).abs() < 1e-9 && (back.y - y).abs() < 1e-9 && (back.t - t).abs() < 1e-9);
    }

    #[test]
    fn components_partition_the_foreground(bits in prop::collection::vec(any::<bool>(), 16 * 12)) {
        let mask = Mask::from_vec(16, 12, bits.clone());
        let boxes = connected_components(&mask, 1);
        let total: usize = boxes.iter().map(|b| b.area).sum();
        prop_assert_eq!(total, bits.iter().filter(|b| **b).count());
        for b in &boxes {
            prop_assert!(b.x_min <= b.x_max && b.y_min <= b.y_max);
            prop_assert!(b.cx >= b.x_min as f64 && b.cx <= b.x_max as f64);
            prop_assert!(b.area <= (b.x_max - b.x_min + 1) * (b.y_max - b.y_min + 1));
        }
    }

    #[test]
    fn linking_keeps_every_box_once(
        frames in prop::collection::vec(prop::collection::vec((0.0..80.0f64, 0.0..80.0f64), 0..6), 1..8),
        tau in 1.0..40.0f64,
    ) {
        let frames: Vec<FrameBoxes> = frames
            .into_iter()
            .enumerate()
            .map(|(t, cs)| FrameBoxes {
                t,
                boxes: cs
                    .into_iter()
                    .map(|(cx, cy)| BoundingBox { x_min: 0, y_min: 0, x_max: 0, y_max: 0, area: 1, cx, cy })
                    .collect(),
            })
            .collect();
        let tracks = link_boxes(&frames, tau);
        let total: usize = frames.iter().map(|f| f.boxes.len()).sum();
        prop_assert_eq!(tracks.iter().map(|t| t.len()).sum::<usize>(), total);
        for tr in &tracks {
            for w in tr.boxes.windows(2) {
                prop_assert!(w[0].centroid_distance(&w[1]) <= tau);
            }
        }
    }
}
