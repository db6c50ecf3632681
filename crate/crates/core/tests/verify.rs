use adlink::datasets::LabeledPair;
use adlink::encoder::{init_encoder, EncoderConfig, SentenceEncoder};
use adlink::sparse::{fit_tfidf, IdfVariant, TokenizerKind};
use adlink::tokenize::Vocabulary;
use adlink::verify::{
    evaluate, featurize_pair, log_loss, predict, roc_auc, train_classifier, ClassifierConfig, FeatureMask,
    PairClassifier, PairFeatures,
};
use proptest::prelude::*;

fn pair(a: &str, b: &str) -> LabeledPair {
    LabeledPair {
        text_a: a.into(),
        text_b: b.into(),
        label: 1,
    }
}

fn dense(v: f64) -> PairFeatures {
    PairFeatures {
        sparse_cos: None,
        dense_cos: Some(v),
    }
}

fn both(s: f64, d: f64) -> PairFeatures {
    PairFeatures {
        sparse_cos: Some(s),
        dense_cos: Some(d),
    }
}

#[test]
fn featurize_examples() {
    let tfidf = fit_tfidf(
        &["red rose", "gold crown", "red crown"],
        TokenizerKind::EmojiWord,
        IdfVariant::Smoothed,
    )
    .unwrap();
    let vocab = Vocabulary::with_specials(["red", "rose", "gold", "crown"]).unwrap();
    let cfg = EncoderConfig {
        vocab_size: vocab.len(),
        hidden: 8,
        heads: 2,
        max_len: 16,
        ..EncoderConfig::default()
    };
    let enc = SentenceEncoder::new(init_encoder(&cfg).unwrap(), vocab).unwrap();

    let same = pair("red rose", "red rose");
    let f = featurize_pair(&same, Some(&tfidf), Some(&enc)).unwrap();
    assert!((f.sparse_cos.unwrap() - 1.0).abs() < 1e-12);
    assert!((f.dense_cos.unwrap() - 1.0).abs() < 1e-9);

    let disjoint = pair("red rose", "gold crown");
    let f = featurize_pair(&disjoint, Some(&tfidf), None).unwrap();
    assert_eq!(f.sparse_cos, Some(0.0));
    assert_eq!(f.dense_cos, None);

    let f = featurize_pair(&disjoint, None, Some(&enc)).unwrap();
    assert!(f.sparse_cos.is_none() && f.dense_cos.is_some());

    assert!(featurize_pair(&disjoint, None, None).is_err());
}

#[test]
fn row_order_does_not_change_weights() {
    let f: Vec<_> = (0..40)
        .map(|i| both((i % 7) as f64 / 7.0, (i % 5) as f64 / 5.0))
        .collect();
    let y: Vec<u8> = (0..40).map(|i| u8::from(i % 3 == 0)).collect();
    let cfg = ClassifierConfig {
        epochs: 200,
        ..Default::default()
    };
    let a = train_classifier(&f, &y, &cfg).unwrap();
    let mut order: Vec<usize> = (0..40).collect();
    order.reverse();
    order.rotate_left(13);
    let fs: Vec<_> = order.iter().map(|&i| f[i]).collect();
    let ys: Vec<_> = order.iter().map(|&i| y[i]).collect();
    let b = train_classifier(&fs, &ys, &cfg).unwrap();
    for (x, z) in a.weights.iter().zip(&b.weights) {
        assert!((x - z).abs() < 1e-9);
    }
}

#[test]
fn zero_epochs_predict_one_half() {
    let f = [both(0.9, 0.8), both(0.1, 0.3)];
    let clf = train_classifier(
        &f,
        &[1, 0],
        &ClassifierConfig {
            epochs: 0,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(clf.weights, vec![0.0; 3]);
    assert!(f.iter().all(|x| predict(&clf, x).unwrap() == 0.5));
}

#[test]
fn separable_scores_classify_perfectly() {
    let f: Vec<_> = [0.95, 0.9, 0.85, 0.8, 0.2, 0.15, 0.1, 0.05].map(dense).to_vec();
    let y = [1, 1, 1, 1, 0, 0, 0, 0];
    let clf = train_classifier(&f, &y, &ClassifierConfig::default()).unwrap();
    let scores: Vec<f64> = f.iter().map(|x| predict(&clf, x).unwrap()).collect();
    let m = evaluate(&scores, &y, 0.5).unwrap();
    assert_eq!((m.accuracy, m.recall, m.f1, m.roc_auc), (1.0, 1.0, 1.0, Some(1.0)));
}

#[test]
fn prediction_needs_every_trained_feature() {
    let clf = PairClassifier {
        feature_mask: FeatureMask {
            sparse: true,
            dense: true,
        },
        weights: vec![1.0, 2.0, -1.0],
    };
    assert!(predict(&clf, &dense(0.5)).is_err());
    // Positive weight on a feature makes predictions monotone in it.
    let mut last = 0.0;
    for i in 0..=10 {
        let p = predict(&clf, &both(0.3, i as f64 / 10.0)).unwrap();
        assert!(p > last);
        last = p;
    }
}

/// Fraction of (positive, negative) pairs ordered correctly, ties half.
fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                den += 1.0;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn labelled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    proptest::collection::vec((0u8..20, 0u8..2), 2..60).prop_filter_map("needs both classes", |rows| {
        let labels: Vec<u8> = rows.iter().map(|r| r.1).collect();
        (labels.contains(&0) && labels.contains(&1)).then(|| (rows.iter().map(|r| r.0 as f64 / 20.0).collect(), labels))
    })
}

proptest! {
    #[test]
    fn auc_matches_pair_count_and_ignores_monotone_maps((scores, labels) in labelled_scores()) {
        let auc = roc_auc(&scores, &labels).unwrap();
        prop_assert!((auc - brute_auc(&scores, &labels)).abs() < 1e-12);
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert!((roc_auc(&warped, &labels).unwrap() - auc).abs() < 1e-12);
    }

    #[test]
    fn threshold_metric_identities((scores, labels) in labelled_scores(), threshold in 0.0f64..1.0) {
        let m = evaluate(&scores, &labels, threshold).unwrap();
        let pred: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
        let errors = pred.iter().zip(&labels).filter(|(&p, &y)| p != (y == 1)).count() as f64;
        prop_assert!((m.accuracy + errors / labels.len() as f64 - 1.0).abs() < 1e-12);
        let tp = pred.iter().zip(&labels).filter(|(&p, &y)| p && y == 1).count() as f64;
        let predicted = pred.iter().filter(|&&p| p).count() as f64;
        let precision = if predicted == 0.0 { 0.0 } else { tp / predicted };
        if precision + m.recall > 0.0 {
            prop_assert!((m.f1 - 2.0 * precision * m.recall / (precision + m.recall)).abs() < 1e-12);
        } else {
            prop_assert_eq!(m.f1, 0.0);
        }
    }

    #[test]
    fn log_loss_never_increases(rows in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0u8..2), 4..40)) {
        let labels: Vec<u8> = rows.iter().map(|r| r.2).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let f: Vec<_> = rows.iter().map(|r| both(r.0, r.1)).collect();
        let mut last = f64::INFINITY;
        for epochs in [0, 1, 2, 5, 10, 30, 100] {
            let clf = train_classifier(&f, &labels, &ClassifierConfig { epochs, ..Default::default() }).unwrap();
            let loss = log_loss(&clf, &f, &labels).unwrap();
            prop_assert!(loss <= last + 1e-12, "{} after {} epochs, was {}", loss, epochs, last);
            last = loss;
        }
    }
}
