use std::collections::{BTreeMap, BTreeSet};

use adlink::corpus::{
    generate_synthetic_corpus, length_stats, mask_numbers, read_ads, write_ads, AdRecord, SyntheticCorpusConfig,
    LENGTH_BOUNDS,
};
use adlink::graph::{build_bipartite, connected_components, Vertex};
use adlink::tokenize::{encoded_len, tokenize_with_emojis, train_wordpiece};
use proptest::prelude::*;

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[test]
fn same_seed_gives_identical_bytes() {
    let cfg = SyntheticCorpusConfig::default();
    let serialize = |cfg: &SyntheticCorpusConfig| {
        let c = generate_synthetic_corpus(cfg).unwrap();
        let mut buf = Vec::new();
        write_ads(&mut buf, &c.ads).unwrap();
        (buf, serde_json::to_vec(&c.authors).unwrap())
    };
    assert_eq!(serialize(&cfg), serialize(&cfg));
    let other = SyntheticCorpusConfig {
        seed: cfg.seed + 1,
        ..cfg.clone()
    };
    assert_ne!(serialize(&cfg).0, serialize(&other).0);
}

#[test]
fn within_author_overlap_exceeds_cross_author() {
    let cfg = SyntheticCorpusConfig {
        n_authors: 50,
        template_mutation_rate: 0.1,
        ..Default::default()
    };
    let c = generate_synthetic_corpus(&cfg).unwrap();
    let posts: Vec<(usize, BTreeSet<String>)> = adlink::corpus::post_texts(&c.ads)
        .into_iter()
        .map(|(id, t)| (c.authors[&id], tokenize_with_emojis(&t).into_iter().collect()))
        .collect();
    let (mut within, mut nw, mut cross, mut nc) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..posts.len() {
        for j in i + 1..posts.len() {
            let s = jaccard(&posts[i].1, &posts[j].1);
            if posts[i].0 == posts[j].0 {
                within += s;
                nw += 1;
            } else {
                cross += s;
                nc += 1;
            }
        }
    }
    let (within, cross) = (within / nw as f64, cross / nc as f64);
    assert!(within > cross, "within {within} vs cross {cross}");
}

#[test]
fn every_post_masks_digits_and_ids_follow_text() {
    let c = generate_synthetic_corpus(&SyntheticCorpusConfig::default()).unwrap();
    let mut seen: BTreeMap<&str, i64> = BTreeMap::new();
    for ad in &c.ads {
        assert!(!ad.post_masked.chars().any(|ch| ch.is_ascii_digit()));
        assert!(!ad.phash16.is_empty());
        assert_eq!(*seen.entry(&ad.post_masked).or_insert(ad.post_int), ad.post_int);
    }
    let ids: BTreeSet<i64> = seen.values().copied().collect();
    assert_eq!(ids.len(), seen.len(), "distinct texts share an id");
    assert!(c.ads.iter().any(|ad| ad.post_masked.contains('*')));
}

#[test]
fn full_image_reuse_keeps_each_author_connected() {
    let cfg = SyntheticCorpusConfig {
        image_reuse_probability: 1.0,
        stock_image_probability: 0.0,
        ..Default::default()
    };
    let c = generate_synthetic_corpus(&cfg).unwrap();
    let comps = connected_components(&build_bipartite(&c.ads));
    let comp_of: BTreeMap<i64, usize> = comps
        .iter()
        .enumerate()
        .flat_map(|(i, comp)| comp.posts().map(move |p| (p, i)))
        .collect();
    let mut by_author: BTreeMap<usize, Vec<&AdRecord>> = BTreeMap::new();
    for ad in &c.ads {
        by_author.entry(c.authors[&ad.post_int]).or_default().push(ad);
    }
    for (author, ads) in by_author {
        let urls: BTreeSet<i64> = ads.iter().map(|a| a.url).collect();
        if urls.len() < 2 {
            continue;
        }
        // Some hash appears on every one of the author's ads.
        let shared = ads
            .iter()
            .map(|a| a.phash16.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .any(|h| urls.iter().all(|u| ads.iter().any(|a| a.url == *u && a.phash16 == h)));
        assert!(shared, "author {author} has no common image");
        let comps: BTreeSet<usize> = ads.iter().map(|a| comp_of[&a.post_int]).collect();
        assert_eq!(comps.len(), 1, "author {author} spans several components");
    }
    assert!(comps
        .iter()
        .all(|c| c.vertices.iter().any(|v| matches!(v, Vertex::Hash(_)))));
}

#[test]
fn length_coverage_matches_recount() {
    let c = generate_synthetic_corpus(&SyntheticCorpusConfig::default()).unwrap();
    let texts: Vec<String> = adlink::corpus::post_texts(&c.ads).into_values().collect();
    let vocab = train_wordpiece(&texts, 800, 2).unwrap();
    let stats = length_stats(&texts, &vocab).unwrap();
    let lengths: Vec<usize> = texts.iter().map(|t| encoded_len(t, &vocab)).collect();
    assert_eq!(stats.histogram.values().sum::<usize>(), texts.len());
    let mut last = 0.0;
    for b in LENGTH_BOUNDS {
        let expected = lengths.iter().filter(|&&l| l <= b).count() as f64 / texts.len() as f64;
        assert_eq!(stats.coverage_at[&b], expected);
        assert!(stats.coverage_at[&b] >= last);
        last = stats.coverage_at[&b];
    }
    assert!(last <= 1.0);
}

#[test]
fn masking_touches_only_ascii_digits() {
    let samples = "0123456789 ２٣३৪๕ Ⅻ ½ ¹ x";
    let out = mask_numbers(samples);
    assert_eq!(out.chars().count(), samples.chars().count());
    for (a, b) in samples.chars().zip(out.chars()) {
        // Unicode numerics outside 0-9 (other scripts, fractions,
        // superscripts, roman numerals) are left alone.
        if a.is_numeric() && !a.is_ascii_digit() {
            assert_eq!(a, b);
        }
        assert_eq!(b == '*', a.is_ascii_digit());
    }
}

fn arb_record() -> impl Strategy<Value = AdRecord> {
    (
        any::<i64>(),
        any::<i64>(),
        "\\PC{0,30}",
        any::<i64>(),
        proptest::option::of(any::<i64>()),
        "[0-9a-f]{1,32}",
    )
        .prop_map(|(url, site, post_masked, post_int, phone_int, phash16)| AdRecord {
            url,
            site,
            post_masked,
            post_int,
            phone_int,
            phash16,
        })
}

proptest! {
    #[test]
    fn serialize_then_load_is_identity(ads in proptest::collection::vec(arb_record(), 0..20)) {
        let mut buf = Vec::new();
        write_ads(&mut buf, &ads).unwrap();
        prop_assert_eq!(read_ads(buf.as_slice()).unwrap(), ads);
    }

    #[test]
    fn mask_is_idempotent_and_length_preserving(s in "\\PC{0,60}") {
        let once = mask_numbers(&s);
        prop_assert_eq!(mask_numbers(&once), once.clone());
        prop_assert_eq!(once.chars().count(), s.chars().count());
    }

    #[test]
    fn coverage_is_monotone(lengths in proptest::collection::vec(0usize..40, 1..30)) {
        struct Fixed;
        impl adlink::corpus::LengthEncoder for Fixed {
            fn encoded_len(&self, text: &str) -> usize {
                text.len() * 20
            }
        }
        let texts: Vec<String> = lengths.iter().map(|&l| "x".repeat(l)).collect();
        let stats = length_stats(&texts, &Fixed).unwrap();
        let cov: Vec<f64> = LENGTH_BOUNDS.iter().map(|b| stats.coverage_at[b]).collect();
        prop_assert!(cov.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(cov[3] <= 1.0);
        prop_assert_eq!(stats.histogram.values().sum::<usize>(), texts.len());
    }
}
