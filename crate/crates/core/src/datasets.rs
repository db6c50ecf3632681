//! Pseudo-author labels from graph components, hard-negative triplets and
//! imbalanced verification pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::encoder::Triplet;
use crate::error::{Error, Result};
use crate::graph::Component;
use crate::sparse::TfidfModel;

pub const DEFAULT_SCREEN_THRESHOLD: f64 = 0.2;
pub const DEFAULT_MAX_ATTEMPTS: usize = 50;
pub const DEFAULT_POSITIVE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletExample {
    pub anchor: String,
    pub positive: String,
    pub negative: String,
    pub anchor_component: usize,
    pub negative_component: usize,
    pub screen_similarity: f64,
}

impl TripletExample {
    pub fn to_triplet(&self) -> Triplet {
        Triplet::new(self.anchor.clone(), self.positive.clone(), self.negative.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub text_a: String,
    pub text_b: String,
    pub label: u8,
}

/// Maps every post outside the giant (`components[0]`) to its component id,
/// restricted to `posts`.
pub fn component_author_labels(components: &[Component], posts: &BTreeSet<i64>) -> BTreeMap<i64, usize> {
    components
        .iter()
        .skip(1)
        .flat_map(|c| c.posts().map(move |p| (p, c.id)))
        .filter(|(p, _)| posts.contains(p))
        .collect()
}

/// Labelled posts grouped by component, keeping only those with text.
fn groups<'a>(labels: &BTreeMap<i64, usize>, texts: &'a BTreeMap<i64, String>) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut by: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (post, &c) in labels {
        let t = texts
            .get(post)
            .ok_or_else(|| Error::InvalidArgument(format!("no text for post {post}")))?;
        by.entry(c).or_default().push(t);
    }
    for v in by.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
    if by.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 labelled components, found {}",
            by.len()
        )));
    }
    Ok(by.into_iter().collect())
}

fn two_distinct<'a, R: Rng>(texts: &[&'a str], rng: &mut R) -> (&'a str, &'a str) {
    let i = rng.random_range(0..texts.len());
    let mut j = rng.random_range(0..texts.len() - 1);
    if j >= i {
        j += 1;
    }
    (texts[i], texts[j])
}

fn other_component<R: Rng>(n: usize, not: usize, rng: &mut R) -> usize {
    let mut j = rng.random_range(0..n - 1);
    if j >= not {
        j += 1;
    }
    j
}

/// Draws up to `count` triplets. Each draw picks an anchor component
/// uniformly among those with at least two distinct texts, then rejection
/// samples negatives from other components until one's TF-IDF cosine with
/// the anchor exceeds `threshold`. Draws that exhaust `max_attempts` are
/// skipped.
pub fn sample_triplets(
    labels: &BTreeMap<i64, usize>,
    texts: &BTreeMap<i64, String>,
    tfidf: &TfidfModel,
    count: usize,
    threshold: f64,
    max_attempts: usize,
    seed: u64,
) -> Result<Vec<TripletExample>> {
    let groups = groups(labels, texts)?;
    let anchors: Vec<usize> = (0..groups.len()).filter(|&i| groups[i].1.len() >= 2).collect();
    if anchors.is_empty() {
        return Err(Error::InvalidArgument("no component has two distinct texts".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut skipped = 0usize;
    for _ in 0..count {
        let ai = *anchors.choose(&mut rng).unwrap();
        let (anchor, positive) = two_distinct(&groups[ai].1, &mut rng);
        let anchor_vec = tfidf.transform(anchor);
        let mut accepted = None;
        for _ in 0..max_attempts {
            let ni = other_component(groups.len(), ai, &mut rng);
            let negative = *groups[ni].1.choose(&mut rng).unwrap();
            if negative == anchor {
                continue;
            }
            let sim = crate::sparse::cosine_sparse(&anchor_vec, &tfidf.transform(negative));
            if sim > threshold {
                accepted = Some((ni, negative, sim));
                break;
            }
        }
        match accepted {
            Some((ni, negative, sim)) => out.push(TripletExample {
                anchor: anchor.to_owned(),
                positive: positive.to_owned(),
                negative: negative.to_owned(),
                anchor_component: groups[ai].0,
                negative_component: groups[ni].0,
                screen_similarity: sim,
            }),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::info!("skipped {skipped} of {count} triplet draws after {max_attempts} attempts each");
    }
    if out.is_empty() && count > 0 {
        return Err(Error::InvalidArgument(format!(
            "no triplet passed the similarity screen {threshold}; lower the threshold"
        )));
    }
    Ok(out)
}

/// Repeats [`sample_triplets`] with derived seeds until `target` triplets
/// are collected or `max_rounds` rounds have run; returns at most `target`.
#[allow(clippy::too_many_arguments)]
pub fn collect_triplets(
    labels: &BTreeMap<i64, usize>,
    texts: &BTreeMap<i64, String>,
    tfidf: &TfidfModel,
    target: usize,
    threshold: f64,
    max_attempts: usize,
    seed: u64,
    max_rounds: usize,
) -> Result<Vec<TripletExample>> {
    let mut out: Vec<TripletExample> = Vec::with_capacity(target);
    for round in 0..max_rounds as u64 {
        if out.len() >= target {
            break;
        }
        let draws = (target - out.len()).max(16);
        match sample_triplets(
            labels,
            texts,
            tfidf,
            draws,
            threshold,
            max_attempts,
            seed.wrapping_add(round),
        ) {
            Ok(batch) => out.extend(batch),
            Err(e) if out.is_empty() && round + 1 == max_rounds as u64 => return Err(e),
            Err(_) => {}
        }
    }
    if out.is_empty() && target > 0 {
        return Err(Error::InvalidArgument(format!(
            "no triplet passed the similarity screen {threshold}; lower the threshold"
        )));
    }
    if out.len() < target {
        log::warn!("collected {} of {target} triplets", out.len());
    }
    out.truncate(target);
    Ok(out)
}

/// Splits labelled posts by component: a shuffled `heldout_fraction` of
/// the components goes to the second map.
pub fn split_by_component(
    labels: &BTreeMap<i64, usize>,
    heldout_fraction: f64,
    seed: u64,
) -> Result<(BTreeMap<i64, usize>, BTreeMap<i64, usize>)> {
    if !(0.0..=1.0).contains(&heldout_fraction) {
        return Err(Error::InvalidArgument(format!(
            "heldout_fraction must lie in [0, 1], got {heldout_fraction}"
        )));
    }
    let mut comps: Vec<usize> = labels.values().copied().collect::<BTreeSet<_>>().into_iter().collect();
    comps.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_held = (comps.len() as f64 * heldout_fraction).round() as usize;
    let held: BTreeSet<usize> = comps[..n_held].iter().copied().collect();
    let (test, train) = labels
        .iter()
        .map(|(&p, &c)| (p, c))
        .partition(|(_, c)| held.contains(c));
    Ok((train, test))
}

/// Splits labelled posts within every component: a shuffled
/// `heldout_fraction` of each component's posts goes to the second map.
pub fn split_by_post(
    labels: &BTreeMap<i64, usize>,
    heldout_fraction: f64,
    seed: u64,
) -> Result<(BTreeMap<i64, usize>, BTreeMap<i64, usize>)> {
    if !(0.0..=1.0).contains(&heldout_fraction) {
        return Err(Error::InvalidArgument(format!(
            "heldout_fraction must lie in [0, 1], got {heldout_fraction}"
        )));
    }
    let mut by: BTreeMap<usize, Vec<i64>> = BTreeMap::new();
    for (&p, &c) in labels {
        by.entry(c).or_default().push(p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (BTreeMap::new(), BTreeMap::new());
    for (c, mut posts) in by {
        posts.shuffle(&mut rng);
        let n_held = (posts.len() as f64 * heldout_fraction).round() as usize;
        for (i, p) in posts.into_iter().enumerate() {
            if i < n_held {
                test.insert(p, c);
            } else {
                train.insert(p, c);
            }
        }
    }
    Ok((train, test))
}

/// `round(count * positive_fraction)` same-component pairs of distinct texts
/// and the rest cross-component, shuffled.
pub fn sample_pairs(
    labels: &BTreeMap<i64, usize>,
    texts: &BTreeMap<i64, String>,
    count: usize,
    positive_fraction: f64,
    seed: u64,
) -> Result<Vec<LabeledPair>> {
    if !(0.0..=1.0).contains(&positive_fraction) {
        return Err(Error::InvalidArgument(format!(
            "positive_fraction must lie in [0, 1], got {positive_fraction}"
        )));
    }
    let groups = groups(labels, texts)?;
    let n_pos = (count as f64 * positive_fraction).round() as usize;
    let multi: Vec<usize> = (0..groups.len()).filter(|&i| groups[i].1.len() >= 2).collect();
    if n_pos > 0 && multi.is_empty() {
        return Err(Error::InvalidArgument(
            "positive pairs requested but no component has two distinct texts".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..n_pos {
        let gi = *multi.choose(&mut rng).unwrap();
        let (a, b) = two_distinct(&groups[gi].1, &mut rng);
        pairs.push(LabeledPair {
            text_a: a.to_owned(),
            text_b: b.to_owned(),
            label: 1,
        });
    }
    for _ in n_pos..count {
        let i = rng.random_range(0..groups.len());
        let j = other_component(groups.len(), i, &mut rng);
        pairs.push(LabeledPair {
            text_a: (*groups[i].1.choose(&mut rng).unwrap()).to_owned(),
            text_b: (*groups[j].1.choose(&mut rng).unwrap()).to_owned(),
            label: 0,
        });
    }
    pairs.shuffle(&mut rng);
    Ok(pairs)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(|e| Error::Format(e.to_string()))?;
        buf.push(b'\n');
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Vertex;
    use crate::sparse::{fit_tfidf, IdfVariant, TokenizerKind};

    fn comp(id: usize, posts: &[i64]) -> Component {
        Component {
            id,
            vertices: posts.iter().map(|&p| Vertex::Post(p)).collect(),
        }
    }

    fn toy() -> (BTreeMap<i64, usize>, BTreeMap<i64, String>) {
        let texts: BTreeMap<i64, String> = [
            (1, "red rose queen 🌹"),
            (2, "red rose queen 👑"),
            (3, "red rose king"),
            (4, "blue sky sea"),
            (5, "blue sky wave"),
            (6, "green red rose"),
            (7, "green tree leaf"),
        ]
        .into_iter()
        .map(|(k, v)| (k, v.to_owned()))
        .collect();
        let labels = [(1, 1), (2, 1), (3, 1), (4, 2), (5, 2), (6, 3), (7, 3)]
            .into_iter()
            .collect();
        (labels, texts)
    }

    #[test]
    fn labels_skip_giant() {
        let comps = vec![comp(0, &[1, 2]), comp(1, &[3])];
        let posts = [1, 2, 3].into();
        let labels = component_author_labels(&comps, &posts);
        assert_eq!(labels, [(3, 1)].into());
        assert!(component_author_labels(&comps[..1], &posts).is_empty());
    }

    #[test]
    fn vacuous_and_impossible_screens() {
        let (labels, texts) = toy();
        let corpus: Vec<&String> = texts.values().collect();
        let tfidf = fit_tfidf(&corpus, TokenizerKind::EmojiWord, IdfVariant::Smoothed).unwrap();
        let t = sample_triplets(&labels, &texts, &tfidf, 20, -1.0, 50, 3).unwrap();
        assert_eq!(t.len(), 20);
        assert!(sample_triplets(&labels, &texts, &tfidf, 20, 1.1, 50, 3).is_err());
        let t = sample_triplets(&labels, &texts, &tfidf, 50, 0.2, 50, 3).unwrap();
        for x in &t {
            assert!(x.screen_similarity > 0.2);
            assert_ne!(x.anchor_component, x.negative_component);
            assert_ne!(x.anchor, x.positive);
            assert_ne!(x.anchor, x.negative);
        }
    }

    #[test]
    fn pair_counts() {
        let (labels, texts) = toy();
        let p = sample_pairs(&labels, &texts, 10, 0.2, 1).unwrap();
        assert_eq!(p.iter().filter(|x| x.label == 1).count(), 2);
        assert_eq!(p.len(), 10);
        let p = sample_pairs(&labels, &texts, 10, 1.0, 1).unwrap();
        assert!(p.iter().all(|x| x.label == 1));
        assert!(sample_pairs(&labels, &texts, 10, 1.5, 1).is_err());
        assert_eq!(p, sample_pairs(&labels, &texts, 10, 1.0, 1).unwrap());
    }

    #[test]
    fn component_split_is_disjoint() {
        let (labels, _) = toy();
        let (a, b) = split_by_component(&labels, 0.34, 4).unwrap();
        assert_eq!(a.len() + b.len(), labels.len());
        let ca: BTreeSet<usize> = a.values().copied().collect();
        let cb: BTreeSet<usize> = b.values().copied().collect();
        assert!(ca.is_disjoint(&cb));
        assert_eq!(cb.len(), 1);
    }

    #[test]
    fn post_split_keeps_components() {
        let (labels, _) = toy();
        let (a, b) = split_by_post(&labels, 0.5, 4).unwrap();
        assert_eq!(a.len() + b.len(), labels.len());
        assert!(a.keys().all(|p| !b.contains_key(p)));
        assert_eq!(b.len(), 4);
    }

    #[test]
    fn collect_reaches_target() {
        let (labels, texts) = toy();
        let corpus: Vec<&String> = texts.values().collect();
        let tfidf = fit_tfidf(&corpus, TokenizerKind::EmojiWord, IdfVariant::Smoothed).unwrap();
        let t = collect_triplets(&labels, &texts, &tfidf, 40, 0.2, 50, 3, 20).unwrap();
        assert_eq!(t.len(), 40);
    }

    #[test]
    fn jsonl_roundtrip() {
        let (labels, texts) = toy();
        let p = sample_pairs(&labels, &texts, 7, 0.3, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        write_jsonl(&path, &p).unwrap();
        assert_eq!(read_jsonl::<LabeledPair>(&path).unwrap(), p);
    }
}
