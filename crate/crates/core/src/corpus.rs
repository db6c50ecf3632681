//! Ad records, JSONL ingestion, synthetic corpora and length statistics.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::{encoded_len, Vocabulary};

/// One advertisement row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdRecord {
    pub url: i64,
    pub site: i64,
    pub post_masked: String,
    pub post_int: i64,
    pub phone_int: Option<i64>,
    pub phash16: String,
}

pub const REQUIRED_COLUMNS: [&str; 5] = ["url", "site", "post_masked", "post_int", "phash16"];

fn parse_record(line: &str, lineno: usize) -> Result<AdRecord> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
        line: lineno,
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| Error::MalformedLine {
        line: lineno,
        message: "expected a JSON object".into(),
    })?;
    for col in REQUIRED_COLUMNS {
        if !obj.contains_key(col) {
            return Err(Error::Schema {
                line: lineno,
                message: format!("missing required column {col:?}"),
            });
        }
    }
    let record: AdRecord = serde_json::from_value(value).map_err(|e| Error::Schema {
        line: lineno,
        message: e.to_string(),
    })?;
    if record.phash16.is_empty() {
        return Err(Error::Schema {
            line: lineno,
            message: "empty phash16".into(),
        });
    }
    Ok(record)
}

/// Reads one record per line. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn read_ads<R: BufRead>(reader: R) -> Result<Vec<AdRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line, i + 1)?);
    }
    Ok(out)
}

pub fn load_ads(path: &Path) -> Result<Vec<AdRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ads(BufReader::new(file))
}

pub fn write_ads<W: Write>(mut w: W, ads: &[AdRecord]) -> std::io::Result<()> {
    for ad in ads {
        serde_json::to_writer(&mut w, ad)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_ads(path: &Path, ads: &[AdRecord]) -> Result<()> {
    let mut buf = Vec::new();
    write_ads(&mut buf, ads).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Replaces every ASCII digit with `*`.
pub fn mask_numbers(text: &str) -> String {
    text.chars().map(|c| if c.is_ascii_digit() { '*' } else { c }).collect()
}

/// Distinct post texts keyed by `post_int`.
pub fn post_texts(ads: &[AdRecord]) -> BTreeMap<i64, String> {
    let mut out = BTreeMap::new();
    for ad in ads {
        out.entry(ad.post_int).or_insert_with(|| ad.post_masked.clone());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticCorpusConfig {
    pub n_authors: usize,
    /// Inclusive range.
    pub posts_per_author: [usize; 2],
    pub template_mutation_rate: f64,
    pub emoji_pool_size: usize,
    /// Inclusive range of distinct images per author.
    pub images_per_author: [usize; 2],
    pub image_reuse_probability: f64,
    /// Probability that an ad also carries one of a few images shared by
    /// every author (stock photos), which links authors into a giant
    /// component.
    pub stock_image_probability: f64,
    pub stock_images: usize,
    /// Consecutive authors grouped under one shared boilerplate template.
    pub agency_size: usize,
    /// Probability that an author keeps each word of the agency template.
    pub agency_word_share: f64,
    pub seed: u64,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        Self {
            n_authors: 200,
            posts_per_author: [6, 14],
            template_mutation_rate: 0.4,
            emoji_pool_size: 64,
            images_per_author: [1, 3],
            image_reuse_probability: 0.95,
            stock_image_probability: 0.01,
            stock_images: 3,
            agency_size: 4,
            agency_word_share: 0.5,
            seed: 7,
        }
    }
}

impl SyntheticCorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in [0,1], got {p}")))
            }
        };
        prob("template_mutation_rate", self.template_mutation_rate)?;
        prob("image_reuse_probability", self.image_reuse_probability)?;
        prob("stock_image_probability", self.stock_image_probability)?;
        prob("agency_word_share", self.agency_word_share)?;
        if self.agency_size == 0 {
            return Err(Error::Config("agency_size must be >= 1".into()));
        }
        let range = |name: &str, r: [usize; 2]| {
            if r[0] >= 1 && r[0] <= r[1] {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must satisfy 1 <= lo <= hi, got {r:?}")))
            }
        };
        range("posts_per_author", self.posts_per_author)?;
        range("images_per_author", self.images_per_author)?;
        if self.n_authors == 0 {
            return Err(Error::Config("n_authors must be >= 1".into()));
        }
        if self.emoji_pool_size < 2 || self.emoji_pool_size > MAX_EMOJI_POOL {
            return Err(Error::Config(format!(
                "emoji_pool_size must be in [2, {MAX_EMOJI_POOL}]"
            )));
        }
        if self.stock_image_probability > 0.0 && self.stock_images == 0 {
            return Err(Error::Config(
                "stock_images must be >= 1 when stock_image_probability > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub ads: Vec<AdRecord>,
    /// Ground-truth author of every distinct post.
    pub authors: BTreeMap<i64, usize>,
}

pub const LEXICON_SIZE: usize = 500;
const LEXICON_SEED: u64 = 0x5eed_1e81_c0de;
const SYLLABLES: &[&str] = &[
    "ka", "ri", "lo", "me", "sa", "tu", "vi", "na", "be", "xo", "la", "mi", "co", "da", "ze", "po", "ju", "ty", "ha",
    "ne", "gi", "fo", "qu", "wa", "se", "ro", "ni", "ma", "li", "ve",
];

/// The fixed 500-word lexicon templates are drawn from.
pub fn synthetic_lexicon() -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(LEXICON_SEED);
    let mut seen = std::collections::HashSet::new();
    let mut words = Vec::with_capacity(LEXICON_SIZE);
    while words.len() < LEXICON_SIZE {
        let n = rng.random_range(1..=3);
        let mut w: String = (0..n)
            .map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())])
            .collect();
        if rng.random_bool(0.3) {
            w.push(['s', 'y', 'x', 'n'][rng.random_range(0..4)]);
        }
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

const CURATED_EMOJIS: &[char] = &[
    '🌹', '👑', '💋', '🍑', '🍒', '🔥', '💦', '💎', '✨', '🎀', '🦄', '🌈', '💕', '😘', '🥰', '😍', '🍭', '🍬', '🌸',
    '🌺', '💯', '🆕', '📞', '📱', '🚗', '🏠', '💰', '💵', '🍫', '🍓', '🐱', '🦋',
];
const MAX_EMOJI_POOL: usize = CURATED_EMOJIS.len() + 0x60;

/// The first `n` emojis of the fixed pool. Consecutive pairs `(2k, 2k+1)`
/// form families that authors use interchangeably.
pub fn emoji_pool(n: usize) -> Vec<char> {
    CURATED_EMOJIS
        .iter()
        .copied()
        .chain((0x1F400u32..0x1F460).filter_map(char::from_u32))
        .take(n)
        .collect()
}

#[derive(Debug, Clone)]
enum TemplateToken {
    Word(String),
    Emoji(usize),
    Phone,
}

fn misspell(word: &str, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    if chars.len() < 2 {
        chars.push(chars[0]);
        return chars.into_iter().collect();
    }
    let i = rng.random_range(0..chars.len());
    match rng.random_range(0..5) {
        0 => {
            let c = chars[i];
            chars.insert(i, c);
        }
        1 => {
            chars.remove(i);
        }
        2 => {
            let j = if i + 1 < chars.len() { i + 1 } else { i - 1 };
            chars.swap(i, j);
        }
        3 => {
            const LEET: &[(char, char)] = &[('e', '3'), ('a', '4'), ('o', '0'), ('i', '1'), ('s', '5')];
            match LEET.iter().find(|(c, _)| chars.contains(c)) {
                Some(&(c, d)) => {
                    for ch in chars.iter_mut().filter(|ch| **ch == c) {
                        *ch = d;
                    }
                }
                None => chars.push(chars[chars.len() - 1]),
            }
        }
        _ => {
            const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u', 'y'];
            if VOWELS.contains(&chars[i]) {
                chars[i] = VOWELS[rng.random_range(0..VOWELS.len())];
            } else {
                chars.insert(i, 'h');
            }
        }
    }
    chars.into_iter().collect()
}

/// Words `4k..4k+4` of the lexicon form a synonym family.
pub const SYNONYM_FAMILY: usize = 4;

fn synonym(lexicon: &[String], word: &str, rng: &mut ChaCha8Rng) -> String {
    let Some(i) = lexicon.iter().position(|w| w == word) else {
        return word.to_owned();
    };
    let base = i - i % SYNONYM_FAMILY;
    let mut j = base + rng.random_range(0..SYNONYM_FAMILY - 1);
    if j >= i {
        j += 1;
    }
    lexicon[j.min(lexicon.len() - 1)].clone()
}

fn fresh_hash(rng: &mut ChaCha8Rng) -> String {
    format!("{:016x}", rng.random::<u64>())
}

/// Generates a labelled corpus. Each author owns a template of 5-15 words
/// (partly inherited from its agency's template) and 1-4 emojis; every post mutates each template token independently
/// with `template_mutation_rate` (synonym swap, misspelling, drop, or emoji
/// family swap) and has its digits masked.
pub fn generate_synthetic_corpus(config: &SyntheticCorpusConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lexicon = synthetic_lexicon();
    let zipf = WeightedIndex::new((0..lexicon.len()).map(|r| 1.0 / (r as f64 + 8.0))).expect("valid weights");
    let emojis = emoji_pool(config.emoji_pool_size);
    let families = emojis.len() / 2;
    let stock: Vec<String> = (0..config.stock_images)
        .map(|i| format!("{:016x}", 0xfeed_0000_0000_0000u64 + i as u64))
        .collect();

    let mut ads = Vec::new();
    let mut authors = BTreeMap::new();
    let mut post_ids: HashMap<String, i64> = HashMap::new();
    let mut url = 0i64;

    let mut agency_words: Vec<String> = Vec::new();
    for author in 0..config.n_authors {
        if author % config.agency_size == 0 {
            let n_words = rng.random_range(5..=15);
            agency_words = (0..n_words).map(|_| lexicon[zipf.sample(&mut rng)].clone()).collect();
        }
        let n_emojis = rng.random_range(1..=4);
        let mut template: Vec<TemplateToken> = agency_words
            .iter()
            .map(|w| {
                if rng.random_bool(config.agency_word_share) {
                    TemplateToken::Word(w.clone())
                } else {
                    TemplateToken::Word(lexicon[zipf.sample(&mut rng)].clone())
                }
            })
            .collect();
        for _ in 0..n_emojis {
            let family = rng.random_range(0..families);
            let e = 2 * family + rng.random_range(0..2);
            let at = rng.random_range(0..=template.len());
            template.insert(at, TemplateToken::Emoji(e));
        }
        if rng.random_bool(0.5) {
            let at = rng.random_range(0..=template.len());
            template.insert(at, TemplateToken::Phone);
        }
        let site = rng.random_range(0..9i64);
        let phone = (author as i64) * 7 + 1000;
        let n_images = rng.random_range(config.images_per_author[0]..=config.images_per_author[1]);
        let pool: Vec<String> = (0..n_images).map(|_| fresh_hash(&mut rng)).collect();
        let n_posts = rng.random_range(config.posts_per_author[0]..=config.posts_per_author[1]);

        for _ in 0..n_posts {
            let mut parts: Vec<String> = Vec::new();
            for tok in &template {
                let mutate = rng.random_bool(config.template_mutation_rate);
                match tok {
                    TemplateToken::Word(w) => {
                        let w = if mutate {
                            match rng.random_range(0..100) {
                                0..70 => Some(synonym(&lexicon, w, &mut rng)),
                                70..90 => Some(misspell(w, &mut rng)),
                                _ => None,
                            }
                        } else {
                            Some(w.clone())
                        };
                        if let Some(mut w) = w {
                            if rng.random_bool(0.15) {
                                w = w.to_uppercase();
                            } else if rng.random_bool(0.1) {
                                w.push_str(["!!", "...", ",", "?"][rng.random_range(0..4)]);
                            }
                            parts.push(w);
                        }
                    }
                    TemplateToken::Emoji(e) => {
                        let sibling = (e ^ 1).min(emojis.len() - 1);
                        if mutate {
                            parts.push(format!("{}{}", emojis[*e], emojis[sibling]));
                        } else {
                            let one = if rng.random_bool(0.5) { *e } else { sibling };
                            parts.push(emojis[one].to_string());
                        }
                    }
                    TemplateToken::Phone => {
                        let n: u32 = rng.random_range(0..10_000_000);
                        parts.push(format!("{:03}-{:04}", n / 10_000, n % 10_000));
                    }
                }
            }
            let text = mask_numbers(&parts.join(" "));
            let next_id = post_ids.len() as i64 + 1;
            let post_int = *post_ids.entry(text.clone()).or_insert(next_id);
            authors.entry(post_int).or_insert(author);

            let mut images = Vec::new();
            if rng.random_bool(config.image_reuse_probability) {
                images.push(pool[0].clone());
            } else {
                images.push(fresh_hash(&mut rng));
            }
            if rng.random_bool(0.5) {
                if rng.random_bool(config.image_reuse_probability) {
                    images.push(pool[rng.random_range(0..pool.len())].clone());
                } else {
                    images.push(fresh_hash(&mut rng));
                }
            }
            if !stock.is_empty() && rng.random_bool(config.stock_image_probability) {
                images.push(stock[rng.random_range(0..stock.len())].clone());
            }
            images.dedup();
            url += 1;
            let phone_int = rng.random_bool(0.8).then_some(phone);
            for phash16 in images {
                ads.push(AdRecord {
                    url,
                    site,
                    post_masked: text.clone(),
                    post_int,
                    phone_int,
                    phash16,
                });
            }
        }
    }
    Ok(SyntheticCorpus { ads, authors })
}

/// Anything that can report the untruncated encoded length of a text.
pub trait LengthEncoder {
    fn encoded_len(&self, text: &str) -> usize;
}

impl LengthEncoder for Vocabulary {
    fn encoded_len(&self, text: &str) -> usize {
        encoded_len(text, self)
    }
}

pub const LENGTH_BOUNDS: [usize; 4] = [64, 128, 256, 512];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub histogram: BTreeMap<usize, usize>,
    pub coverage_at: BTreeMap<usize, f64>,
}

pub fn length_stats<S: AsRef<str>, E: LengthEncoder + ?Sized>(corpus: &[S], encoder: &E) -> Result<LengthStats> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("length_stats on an empty corpus".into()));
    }
    let mut histogram = BTreeMap::new();
    for text in corpus {
        *histogram.entry(encoder.encoded_len(text.as_ref())).or_insert(0usize) += 1;
    }
    let n = corpus.len() as f64;
    let coverage_at = LENGTH_BOUNDS
        .iter()
        .map(|&b| {
            let covered: usize = histogram.range(..=b).map(|(_, c)| c).sum();
            (b, covered as f64 / n)
        })
        .collect();
    Ok(LengthStats { histogram, coverage_at })
}
