use blan_core::net::{BlanModel, ModelConfig};
use blan_core::synth::{make_dataset, DatasetSpec};
use blan_core::train::eval::score_fold;
use blan_core::train::*;
use blan_core::Error;
use proptest::prelude::*;

#[test]
fn cosine_extremes() {
    assert!((cosine(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(cosine(&[1.0, 0.0], &[0.0, 4.0]).unwrap(), 0.0);
    assert!((cosine(&[1.0, -2.0], &[-3.0, 6.0]).unwrap() + 1.0).abs() < 1e-12);
    assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNorm)));
}

/// Rank-1 by a plain loop with strict improvement, as an oracle.
fn rank1_oracle(s: &ScoreMatrix) -> f64 {
    let mut hits = 0;
    for i in 0..s.n {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for j in 0..s.n {
            if s.get(i, j) > best.0 {
                best = (s.get(i, j), j);
            }
        }
        hits += (best.1 == i) as usize;
    }
    hits as f64 / s.n as f64
}

#[test]
fn hand_built_rank1() {
    #[rustfmt::skip]
    let s = ScoreMatrix::new(4, vec![
        0.9, 0.1, 0.2, 0.0,
        0.3, 0.8, 0.1, 0.2,
        0.7, 0.1, 0.4, 0.3,
        0.0, 0.2, 0.1, 0.6,
    ]);
    let r = rank1(&s);
    assert_eq!(r.accuracy, 0.75);
    assert_eq!(r.ties, 0);
    assert_eq!(rank1_oracle(&s), 0.75);
}

#[test]
fn ties_go_to_lowest_index() {
    let s = ScoreMatrix::new(3, vec![0.5; 9]);
    let r = rank1(&s);
    assert_eq!(r.ties, 3);
    assert!((r.accuracy - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn separable_scores() {
    let n = 200;
    let pos = vec![0.9; n];
    let neg = vec![0.1; n];
    assert_eq!(tpr_at_fpr(&pos, &neg, 0.01), Some(1.0));
    let neg = vec![0.1; 1000];
    assert_eq!(tpr_at_fpr(&pos, &neg, 0.001), Some(1.0));
    let mut scores = vec![0.1; 25];
    for i in 0..5 {
        scores[i * 5 + i] = 0.9;
    }
    assert_eq!(rank1(&ScoreMatrix::new(5, scores)).accuracy, 1.0);
}

#[test]
fn too_few_negatives_is_underdetermined() {
    let pos = vec![0.5; 10];
    assert_eq!(tpr_at_fpr(&pos, &[0.1; 10], 0.01), None);
    assert_eq!(tpr_at_fpr(&pos, &[0.1; 999], 0.001), None);
    assert!(tpr_at_fpr(&pos, &[0.1; 100], 0.01).is_some());
}

#[test]
fn threshold_allows_floor_fpr_n_negatives() {
    // 100 negatives at FPR 0.01: the single largest negative may pass
    let neg: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
    assert_eq!(tpr_at_fpr(&[0.985], &neg, 0.01), Some(1.0));
    assert_eq!(tpr_at_fpr(&[0.98], &neg, 0.01), Some(0.0));
}

#[test]
fn fold_scoring_and_csv() {
    let mut scores = vec![0.0; 100];
    for i in 0..10 {
        for j in 0..10 {
            scores[i * 10 + j] = if i == j { 0.9 } else { 0.1 * ((i + j) % 5) as f64 };
        }
    }
    let s = ScoreMatrix::new(10, scores);
    let a = score_fold(&s, 2, 7);
    assert_eq!(a, score_fold(&s, 2, 7));
    assert_eq!(a.rank1, 1.0);
    assert_eq!((a.positives.len(), a.negatives.len()), (10, 10));
    assert!(a.negatives.iter().all(|&v| v < 0.5));
    assert_eq!(a.tpr, [None, None]);
    let report = EvalReport {
        label: "full".into(),
        folds: vec![a.clone(), a],
    };
    let csv = report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "fold,rank1,tpr_fpr001,tpr_fpr01");
    assert_eq!(lines[1], "2,1.000000,NA,NA");
    assert_eq!(lines.last().unwrap(), &"mean,1.000000,NA,NA");
    assert_eq!(lines.len(), 4);
}

#[test]
fn verification_pipeline() {
    let cfg = ModelConfig::desk_at(32);
    let model = BlanModel::<f32>::with_random_extractor(&cfg, 3).unwrap();
    let data = make_dataset(&DatasetSpec::new(5, 2, 32)).unwrap();
    let a = &data.pairs[0].makeup;
    let synthesized = remove_makeup(&model.g, a).unwrap();
    let (score, same) = verify_pair(&model.g, &model.f, a, &synthesized, 0.999).unwrap();
    assert!((score - 1.0).abs() < 1e-6, "{score}");
    assert!(same);
    let (score, _) = verify_pair(&model.g, &model.f, a, &data.pairs[1].clean, 0.5).unwrap();
    assert!((-1.0..=1.0).contains(&score));
    let eval = eval::evaluate_fold(Probe::Raw, &model.f, &data.test_pairs(0)[..1], 0, 0);
    assert!(eval.is_err());
}

fn matrix() -> impl Strategy<Value = ScoreMatrix> {
    (2usize..8).prop_flat_map(|n| prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| ScoreMatrix::new(n, v)))
}

proptest! {
    #[test]
    fn rank1_is_a_fraction(s in matrix()) {
        let r = rank1(&s);
        prop_assert!((0.0..=1.0).contains(&r.accuracy));
        prop_assert_eq!(r.accuracy, rank1_oracle(&s));
    }

    #[test]
    fn roc_is_monotone(
        pos in prop::collection::vec(-1.0f64..1.0, 1..50),
        neg in prop::collection::vec(-1.0f64..1.0, 1000..1200),
    ) {
        let mut last = 0.0;
        for fpr in [0.001, 0.002, 0.005, 0.01, 0.05, 0.1, 0.5] {
            let t = tpr_at_fpr(&pos, &neg, fpr).unwrap();
            prop_assert!((0.0..=1.0).contains(&t));
            prop_assert!(t >= last);
            last = t;
        }
    }
}
