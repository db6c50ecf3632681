use adlink::sparse::{cosine_sparse, fit_tfidf, IdfVariant, SparseVector, TokenizerKind};
use proptest::prelude::*;

const VARIANTS: [IdfVariant; 2] = [IdfVariant::Classic, IdfVariant::Smoothed];

#[test]
fn cosine_of_overlapping_supports() {
    let a = SparseVector::new(vec![(0, 1.0), (1, 1.0)]).unwrap();
    let b = SparseVector::new(vec![(1, 1.0), (2, 1.0)]).unwrap();
    let dot = 1.0;
    let expected = dot / (2f64.sqrt() * 2f64.sqrt());
    assert!((cosine_sparse(&a, &b) - expected).abs() < 1e-12);
    assert!((cosine_sparse(&a, &a) - 1.0).abs() < 1e-12);
    let c = SparseVector::new(vec![(5, 2.0)]).unwrap();
    assert_eq!(cosine_sparse(&a, &c), 0.0);
}

#[test]
fn smoothed_weights_for_two_documents() {
    let m = fit_tfidf(&["a b", "a c"], TokenizerKind::EmojiWord, IdfVariant::Smoothed).unwrap();
    assert!((m.idf("a").unwrap() - 1.0).abs() < 1e-12);
    assert!((m.idf("b").unwrap() - (1.5f64.ln() + 1.0)).abs() < 1e-12);
    let v = m.transform("a b");
    let (wa, wb) = (0.5 * 1.0, 0.5 * (1.5f64.ln() + 1.0));
    let norm = (wa * wa + wb * wb).sqrt();
    assert!((v.get(m.column("a").unwrap()).unwrap() - wa / norm).abs() < 1e-12);
    assert!((v.get(m.column("b").unwrap()).unwrap() - wb / norm).abs() < 1e-12);
    assert!((v.norm() - 1.0).abs() < 1e-12);
}

fn docs() -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec(
        proptest::collection::vec("[a-h]", 1..8).prop_map(|w| w.join(" ")),
        1..12,
    )
}

fn vector() -> impl Strategy<Value = SparseVector> {
    proptest::collection::btree_map(0u32..20, 0.01f64..5.0, 1..8)
        .prop_map(|m| SparseVector::new(m.into_iter().collect()).unwrap())
}

proptest! {
    #[test]
    fn weights_are_nonnegative_and_idf_anti_monotone(corpus in docs(), probe in "[a-j ]{0,20}") {
        for variant in VARIANTS {
            let m = fit_tfidf(&corpus, TokenizerKind::EmojiWord, variant).unwrap();
            let v = m.transform(&probe);
            prop_assert!(v.entries().iter().all(|&(_, w)| w > 0.0));
            prop_assert!(v.entries().windows(2).all(|w| w[0].0 < w[1].0));
            let norm = v.entries().iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            prop_assert!((norm - v.norm()).abs() <= 1e-12);

            let terms: Vec<String> = ('a'..='h').map(String::from).filter(|t| m.df(t).is_some()).collect();
            for t1 in &terms {
                let df1 = m.df(t1).unwrap();
                prop_assert!(df1 >= 1 && df1 <= m.n_docs());
                for t2 in &terms {
                    if df1 < m.df(t2).unwrap() {
                        prop_assert!(m.idf(t1).unwrap() > m.idf(t2).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn cosine_symmetric_and_scale_invariant(a in vector(), b in vector(), alpha in 0.01f64..100.0) {
        let ab = cosine_sparse(&a, &b);
        prop_assert!((ab - cosine_sparse(&b, &a)).abs() < 1e-12);
        prop_assert!((cosine_sparse(&a.scaled(alpha), &b) - ab).abs() < 1e-12);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&ab));
    }

    #[test]
    fn doubled_counts_leave_smoothed_vector_unchanged(corpus in docs(), probe in proptest::collection::vec("[a-h]", 1..8)) {
        let m = fit_tfidf(&corpus, TokenizerKind::EmojiWord, IdfVariant::Smoothed).unwrap();
        let once = m.transform(&probe.join(" "));
        let twice = m.transform(&[probe.clone(), probe].concat().join(" "));
        prop_assert_eq!(once.entries().len(), twice.entries().len());
        for (x, y) in once.entries().iter().zip(twice.entries()) {
            prop_assert_eq!(x.0, y.0);
            prop_assert!((x.1 - y.1).abs() < 1e-12);
        }
    }
}
