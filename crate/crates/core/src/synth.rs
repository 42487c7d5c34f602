//! Synthetic paired-sentence benchmark with latent topics.
//!
//! Every topic owns a question vocabulary and an answer vocabulary, disjoint
//! from every other topic and from each other, so an untrained encoder has
//! nothing to match on. Each item inside a topic additionally owns a few
//! words on both sides; matching an answer to its own question therefore
//! needs the item words, and same-topic answers are the hard negatives.
//!
//! The train split holds one pair per item plus labeled negatives (a
//! question paired with another item's answer from the same topic). The dev
//! split holds fresh sentences for a subset of the items: a new draw of topic
//! and filler words around the same item words.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::record::{PairRecord, Split};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SynthConfig {
    pub topics: usize,
    pub items_per_topic: usize,
    /// Items per topic that also get a dev pair.
    pub dev_items_per_topic: usize,
    /// Share of labeled negatives among train records.
    pub negative_fraction: f64,
    pub topic_words: usize,
    /// Topic words drawn into each sentence.
    pub topic_words_per_sentence: usize,
    pub item_words: usize,
    /// Stop words mixed into each sentence.
    pub filler_per_sentence: usize,
    /// Shuffle word order inside sentences; otherwise topic words come
    /// first (in vocabulary order), then item words, then filler.
    pub shuffle_words: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            topics: 8,
            items_per_topic: 40,
            dev_items_per_topic: 10,
            negative_fraction: 0.2,
            topic_words: 12,
            topic_words_per_sentence: 1,
            item_words: 3,
            filler_per_sentence: 1,
            shuffle_words: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key, reason: &str| {
            Err(Error::InvalidConfig {
                key,
                reason: reason.into(),
            })
        };
        if self.topics == 0 {
            return bad("topics", "must be at least 1");
        }
        if self.items_per_topic < 2 {
            return bad("items_per_topic", "must be at least 2");
        }
        if self.dev_items_per_topic > self.items_per_topic {
            return bad("dev_items_per_topic", "cannot exceed items_per_topic");
        }
        if !(0.0..1.0).contains(&self.negative_fraction) {
            return bad("negative_fraction", "must lie in [0, 1)");
        }
        if self.topic_words_per_sentence > self.topic_words {
            return bad("topic_words_per_sentence", "cannot exceed topic_words");
        }
        if self.filler_per_sentence > FILLER.len() {
            return bad("filler_per_sentence", "too many filler words");
        }
        if self.topic_words_per_sentence + self.item_words == 0 {
            return bad("item_words", "sentences need at least one content word");
        }
        Ok(())
    }
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kr", "st", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const FILLER: &[&str] = &["the", "a", "of", "is", "and", "to", "with", "for"];

struct Vocab {
    seen: BTreeSet<String>,
}

impl Vocab {
    fn word(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let syllables = rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS.choose(rng).copied().unwrap_or("b"));
                w.push_str(VOWELS.choose(rng).copied().unwrap_or("a"));
            }
            if self.seen.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        (0..n).map(|_| self.word(rng)).collect()
    }
}

struct Side {
    topic: Vec<String>,
    items: Vec<Vec<String>>,
}

fn sentence(cfg: &SynthConfig, side: &Side, item: usize, rng: &mut ChaCha8Rng) -> String {
    let mut picked =
        rand::seq::index::sample(rng, side.topic.len(), cfg.topic_words_per_sentence).into_vec();
    picked.sort_unstable();
    let mut words: Vec<&str> = picked.into_iter().map(|k| side.topic[k].as_str()).collect();
    words.extend(side.items[item].iter().map(String::as_str));
    words.extend(
        FILLER
            .choose_multiple(rng, cfg.filler_per_sentence)
            .copied(),
    );
    if cfg.shuffle_words {
        words.shuffle(rng);
    }
    words.join(" ")
}

/// Train and dev records, train first.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<PairRecord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut vocab = Vocab {
        seen: FILLER.iter().map(|w| String::from(*w)).collect(),
    };
    let n_items = cfg.items_per_topic;

    let mut topics = Vec::with_capacity(cfg.topics);
    for _ in 0..cfg.topics {
        let mut side = |rng: &mut ChaCha8Rng| Side {
            topic: vocab.words(cfg.topic_words, rng),
            items: (0..n_items)
                .map(|_| vocab.words(cfg.item_words, rng))
                .collect(),
        };
        let q = side(&mut rng);
        let a = side(&mut rng);
        topics.push((q, a));
    }

    let positives = cfg.topics * n_items;
    let negatives =
        libm::round(positives as f64 * cfg.negative_fraction / (1.0 - cfg.negative_fraction))
            as usize;

    let mut train = Vec::with_capacity(positives + negatives);
    for (t, (q, a)) in topics.iter().enumerate() {
        for i in 0..n_items {
            let mut r = PairRecord::new(
                format!("train-{t}-{i}"),
                sentence(cfg, q, i, &mut rng),
                sentence(cfg, a, i, &mut rng),
                1.0,
            );
            r.group = Some(format!("topic{t}"));
            train.push(r);
        }
    }
    for k in 0..negatives {
        let t = k % cfg.topics;
        let (q, a) = &topics[t];
        let i = rng.gen_range(0..n_items);
        let j = (i + rng.gen_range(1..n_items)) % n_items;
        let mut r = PairRecord::new(
            format!("train-neg-{k}"),
            sentence(cfg, q, i, &mut rng),
            sentence(cfg, a, j, &mut rng),
            0.0,
        );
        r.group = Some(format!("topic{t}"));
        train.push(r);
    }
    train.shuffle(&mut rng);

    let mut dev = Vec::new();
    for (t, (q, a)) in topics.iter().enumerate() {
        for i in 0..cfg.dev_items_per_topic {
            let mut r = PairRecord::new(
                format!("dev-{t}-{i}"),
                sentence(cfg, q, i, &mut rng),
                sentence(cfg, a, i, &mut rng),
                1.0,
            );
            r.group = Some(format!("topic{t}"));
            r.split = Split::Dev;
            dev.push(r);
        }
    }
    train.extend(dev);
    Ok(train)
}
