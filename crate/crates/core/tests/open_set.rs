use palmcursor_core::classifier::{
    build_references, calibrate_thresholds, open_set_decide_with, ClassSamples, ClassScores, DecisionRule, Embedding,
    ReferenceEntry, ReferenceSet,
};
use palmcursor_core::{Gesture, GestureLabel};
use proptest::prelude::*;

struct Expected {
    accepted: bool,
    nearest: usize,
    distances: [f64; 4],
}

/// Distances recomputed from scratch, nearest by first strict minimum,
/// acceptance by `distance < threshold * scale`.
fn oracle(query: &[f64], means: &[Vec<f64>; 4], thresholds: [f64; 4], scale: f64) -> Expected {
    let mut distances = [0.0; 4];
    for (d, mean) in distances.iter_mut().zip(means) {
        *d = query.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    }
    let mut nearest = 0;
    for i in 0..4 {
        if distances[i] < distances[nearest] {
            nearest = i;
        }
    }
    Expected { accepted: distances[nearest] < thresholds[nearest] * scale, nearest, distances }
}

fn reference_set(means: &[Vec<f64>; 4], thresholds: [f64; 4], scale: f64) -> ReferenceSet {
    let entries = [0, 1, 2, 3].map(|i| ReferenceEntry {
        mean: Embedding::new(means[i].clone()).unwrap(),
        threshold: thresholds[i],
        sample_count: 1,
    });
    ReferenceSet::new(entries, scale).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

/// Whether the nearest reference wins by more than rounding noise.
fn clear_winner(distances: &[f64; 4]) -> bool {
    let mut sorted = *distances;
    sorted.sort_by(f64::total_cmp);
    sorted[1] - sorted[0] > 1e-9 * (1.0 + sorted[1])
}

#[derive(Debug, Clone)]
struct Case {
    query: Vec<f64>,
    means: [Vec<f64>; 4],
    thresholds: [f64; 4],
    scale: f64,
    logits: [f32; 4],
}

fn case() -> impl Strategy<Value = Case> {
    (2usize..48).prop_flat_map(|dim| {
        let vector = || prop::collection::vec(-5.0f64..5.0, dim);
        (
            vector(),
            [vector(), vector(), vector(), vector()],
            [0.0f64..12.0, 0.0f64..12.0, 0.0f64..12.0, 0.0f64..12.0],
            0.0f64..3.0,
            [-4.0f32..4.0, -4.0f32..4.0, -4.0f32..4.0, -4.0f32..4.0],
            prop::option::of(0usize..4),
        )
            .prop_map(|(query, means, thresholds, scale, logits, copy)| {
                // Sometimes sit exactly on a reference.
                let query = copy.map_or(query, |i| means[i].clone());
                Case { query, means, thresholds, scale, logits }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn decision_matches_brute_force(c in case()) {
        let refs = reference_set(&c.means, c.thresholds, c.scale);
        let scores = ClassScores::from_logits(c.logits);
        let d = open_set_decide_with(&Embedding::new(c.query.clone()).unwrap(), &scores, &refs, DecisionRule::default());
        let want = oracle(&c.query, &c.means, c.thresholds, c.scale);
        prop_assert_eq!(d.nearest.index(), want.nearest);
        prop_assert_eq!(d.accepted, want.accepted);
        for (got, want) in d.distances.iter().zip(want.distances) {
            prop_assert!(close(*got, want), "{} vs {}", got, want);
        }
        let label = if want.accepted { GestureLabel::Known(scores.argmax) } else { GestureLabel::Unknown };
        prop_assert_eq!(d.label, label);
        prop_assert_eq!(d.classifier_label, scores.argmax);
        prop_assert_eq!(d.disagrees(), d.nearest != scores.argmax);
    }

    #[test]
    fn strict_agreement_only_adds_rejections(c in case()) {
        let refs = reference_set(&c.means, c.thresholds, c.scale);
        let scores = ClassScores::from_logits(c.logits);
        let e = Embedding::new(c.query).unwrap();
        let loose = open_set_decide_with(&e, &scores, &refs, DecisionRule { strict_agreement: false });
        let strict = open_set_decide_with(&e, &scores, &refs, DecisionRule { strict_agreement: true });
        prop_assert_eq!(strict.accepted, loose.accepted && loose.nearest == scores.argmax);
    }

    #[test]
    fn raising_the_scale_never_rejects(c in case(), extra in 0.0f64..4.0) {
        let scores = ClassScores::from_logits(c.logits);
        let e = Embedding::new(c.query).unwrap();
        let low = open_set_decide_with(&e, &scores, &reference_set(&c.means, c.thresholds, c.scale), DecisionRule::default());
        let high = open_set_decide_with(&e, &scores, &reference_set(&c.means, c.thresholds, c.scale + extra), DecisionRule::default());
        prop_assert!(!low.accepted || high.accepted);
    }

    #[test]
    fn tiny_scale_rejects_positive_distances(c in case()) {
        let scores = ClassScores::from_logits(c.logits);
        let d = open_set_decide_with(
            &Embedding::new(c.query).unwrap(),
            &scores,
            &reference_set(&c.means, c.thresholds, 1e-300),
            DecisionRule::default(),
        );
        if d.nearest_distance > 0.0 {
            prop_assert_eq!(d.label, GestureLabel::Unknown);
        }
    }

    #[test]
    fn translating_everything_keeps_the_decision(c in case(), shift in -50.0f64..50.0) {
        let scores = ClassScores::from_logits(c.logits);
        let moved = |v: &Vec<f64>| v.iter().map(|x| x + shift).collect::<Vec<_>>();
        let a = open_set_decide_with(
            &Embedding::new(c.query.clone()).unwrap(), &scores, &reference_set(&c.means, c.thresholds, c.scale), DecisionRule::default());
        let b = open_set_decide_with(
            &Embedding::new(moved(&c.query)).unwrap(),
            &scores,
            &reference_set(&[0, 1, 2, 3].map(|i| moved(&c.means[i])), c.thresholds, c.scale),
            DecisionRule::default(),
        );
        if clear_winner(&a.distances) {
            prop_assert_eq!(a.nearest, b.nearest);
        }
        for (x, y) in a.distances.iter().zip(b.distances) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
        // Only a distance sitting on a threshold can flip under rounding.
        let margin = (a.nearest_distance - a.effective_thresholds[a.nearest.index()]).abs();
        if clear_winner(&a.distances) && margin > 1e-9 {
            prop_assert_eq!(a.accepted, b.accepted);
        }
    }

    #[test]
    fn permuting_coordinates_keeps_the_decision(c in case(), rotate in 0usize..48) {
        let scores = ClassScores::from_logits(c.logits);
        let k = rotate % c.query.len();
        let permuted = |v: &Vec<f64>| { let mut v = v.clone(); v.rotate_left(k); v };
        let a = open_set_decide_with(
            &Embedding::new(c.query.clone()).unwrap(), &scores, &reference_set(&c.means, c.thresholds, c.scale), DecisionRule::default());
        let b = open_set_decide_with(
            &Embedding::new(permuted(&c.query)).unwrap(),
            &scores,
            &reference_set(&[0, 1, 2, 3].map(|i| permuted(&c.means[i])), c.thresholds, c.scale),
            DecisionRule::default(),
        );
        if !clear_winner(&a.distances) {
            return Ok(());
        }
        prop_assert_eq!(a.nearest, b.nearest);
        let margin = (a.nearest_distance - a.effective_thresholds[a.nearest.index()]).abs();
        if margin > 1e-9 {
            prop_assert_eq!(a.accepted, b.accepted);
        }
    }
}

fn corpus() -> impl Strategy<Value = Vec<Vec<Vec<f64>>>> {
    (2usize..24).prop_flat_map(|dim| {
        let class = move || prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), 1..20);
        [class(), class(), class(), class()].prop_map(|classes| {
            // Clusters a hundred units apart, so each sample's nearest
            // reference is its own class.
            classes
                .into_iter()
                .enumerate()
                .map(|(k, samples)| {
                    samples
                        .into_iter()
                        .map(|mut v| {
                            let j = k % v.len();
                            v[j] += 100.0 * (k as f64 + 1.0);
                            v
                        })
                        .collect()
                })
                .collect()
        })
    })
}

fn class_samples(corpus: &[Vec<Vec<f64>>]) -> ClassSamples {
    [0, 1, 2, 3].map(|k| corpus[k].iter().map(|v| Embedding::new(v.clone()).unwrap()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn calibration_takes_the_max_and_accepts_everything_inside(corpus in corpus()) {
        let samples = class_samples(&corpus);
        let refs = calibrate_thresholds(build_references(&samples).unwrap(), &samples).unwrap();
        prop_assert_eq!(refs.threshold_scale(), 1.0);
        for g in Gesture::ALL {
            let k = g.index();
            let dim = corpus[k][0].len();
            let mean: Vec<f64> = (0..dim)
                .map(|j| corpus[k].iter().map(|v| v[j]).sum::<f64>() / corpus[k].len() as f64)
                .collect();
            let dist = |v: &Vec<f64>| v.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let max = corpus[k].iter().map(dist).fold(0.0, f64::max);
            prop_assert!((refs.entry(g).threshold - max).abs() <= 1e-6);
            prop_assert_eq!(refs.entry(g).sample_count, corpus[k].len());

            let logits = [0, 1, 2, 3].map(|i| if i == k { 1.0 } else { 0.0 });
            for (sample, v) in samples[k].iter().zip(&corpus[k]) {
                let d = open_set_decide_with(sample, &ClassScores::from_logits(logits), &refs, DecisionRule::default());
                prop_assert_eq!(d.nearest, g);
                if dist(v) < max - 1e-9 {
                    prop_assert_eq!(d.label, GestureLabel::Known(g));
                }
                if d.nearest_distance == refs.entry(g).threshold {
                    prop_assert_eq!(d.label, GestureLabel::Unknown);
                }
            }
        }
    }

    #[test]
    fn means_do_not_depend_on_sample_order(corpus in corpus()) {
        let forward = build_references(&class_samples(&corpus)).unwrap();
        let reversed: Vec<Vec<Vec<f64>>> = corpus.iter().map(|c| c.iter().rev().cloned().collect()).collect();
        prop_assert_eq!(forward, build_references(&class_samples(&reversed)).unwrap());
    }
}

#[test]
fn toy_two_dimensional_space() {
    let means = [vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0], vec![10.0, 10.0]];
    let refs = reference_set(&means, [2.0; 4], 1.0);
    let fist = ClassScores::from_logits([1.0, 0.0, 0.0, 0.0]);
    let d = open_set_decide_with(&Embedding::new(vec![1.0, 0.0]).unwrap(), &fist, &refs, DecisionRule::default());
    assert_eq!((d.label, d.nearest, d.nearest_distance), (GestureLabel::Known(Gesture::Fist), Gesture::Fist, 1.0));
    let far = open_set_decide_with(&Embedding::new(vec![5.0, 5.0]).unwrap(), &fist, &refs, DecisionRule::default());
    assert_eq!(far.label, GestureLabel::Unknown);
    // On the boundary the strict rule rejects.
    let edge = open_set_decide_with(&Embedding::new(vec![2.0, 0.0]).unwrap(), &fist, &refs, DecisionRule::default());
    assert_eq!(edge.label, GestureLabel::Unknown);
}
