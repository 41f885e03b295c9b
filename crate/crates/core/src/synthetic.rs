//! Synthetic anonymized relation corpus with overlapping classes.
//!
//! Every sentence carries one trigger word between the two placeholders. The
//! trigger is drawn from the sentence's own class lexicon with probability
//! `1 − noise` and from another class otherwise, and an optional distractor
//! trigger from a random class may follow the gene. Filler words come from a
//! large Zipf-distributed vocabulary, which gives an unregularised model
//! enough rare tokens to memorise its training set.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledExample, CHEMICAL_TOKEN, GENE_TOKEN};
use crate::label::{Label, NUM_CLASSES};
use crate::records::UnlabeledExample;

const TRIGGERS: [[&str; 5]; NUM_CLASSES] = [
    ["activates", "upregulates", "induces", "stimulates", "enhances"],
    ["inhibits", "blocks", "suppresses", "downregulates", "reduces"],
    ["agonizes", "potentiates", "triggers", "mimics", "sensitizes"],
    ["antagonizes", "opposes", "counteracts", "neutralizes", "desensitizes"],
    ["metabolizes", "converts", "hydroxylates", "oxidizes", "conjugates"],
    ["and", "with", "near", "versus", "alongside"],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Probability that the trigger comes from a different class.
    pub noise: f64,
    /// Probability of a second, random-class trigger.
    pub distractor: f64,
    pub filler_vocab: usize,
    pub min_fillers: usize,
    pub max_fillers: usize,
    /// Class proportions in label order (CPR:3, 4, 5, 6, 9, false).
    pub class_weights: [f64; NUM_CLASSES],
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            noise: 0.3,
            distractor: 0.3,
            filler_vocab: 3000,
            min_fillers: 3,
            max_fillers: 10,
            class_weights: [0.12, 0.20, 0.06, 0.07, 0.12, 0.43],
        }
    }
}

struct Generator<'a> {
    config: &'a SyntheticConfig,
    rng: ChaCha8Rng,
    classes: WeightedIndex<f64>,
    fillers: WeightedIndex<f64>,
}

impl<'a> Generator<'a> {
    fn new(config: &'a SyntheticConfig, seed: u64) -> Self {
        let zipf: Vec<f64> = (1..=config.filler_vocab.max(1))
            .map(|r| 1.0 / r as f64)
            .collect();
        Generator {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            classes: WeightedIndex::new(config.class_weights).expect("positive class weights"),
            fillers: WeightedIndex::new(zipf).expect("non-empty filler vocabulary"),
        }
    }

    fn fillers(&mut self, out: &mut Vec<String>, n: usize) {
        for _ in 0..n {
            out.push(format!("w{}", self.fillers.sample(&mut self.rng)));
        }
    }

    fn trigger(&mut self, class: usize) -> &'static str {
        TRIGGERS[class][self.rng.random_range(0..TRIGGERS[class].len())]
    }

    fn sentence(&mut self) -> (String, Label) {
        let class = self.classes.sample(&mut self.rng);
        let trigger_class = if self.rng.random_bool(self.config.noise) {
            (class + self.rng.random_range(1..NUM_CLASSES)) % NUM_CLASSES
        } else {
            class
        };
        let span = self.config.max_fillers.max(self.config.min_fillers);
        let n_fill = self.rng.random_range(self.config.min_fillers..=span);
        let cut_a = self.rng.random_range(0..=n_fill);
        let cut_b = self.rng.random_range(cut_a..=n_fill);

        let mut words = Vec::new();
        self.fillers(&mut words, cut_a);
        words.push(CHEMICAL_TOKEN.to_string());
        words.push(self.trigger(trigger_class).to_string());
        self.fillers(&mut words, cut_b - cut_a);
        words.push(GENE_TOKEN.to_string());
        if self.rng.random_bool(self.config.distractor) {
            let c = self.rng.random_range(0..NUM_CLASSES);
            words.push(self.trigger(c).to_string());
        }
        self.fillers(&mut words, n_fill - cut_b);
        let mut text = words.join(" ");
        text.push_str(" .");
        (text, Label::ALL[class])
    }
}

/// `n` labeled sentences with ids `{prefix}{index}`.
pub fn generate_labeled(
    n: usize,
    seed: u64,
    prefix: &str,
    config: &SyntheticConfig,
) -> Vec<LabeledExample> {
    let mut g = Generator::new(config, seed);
    (0..n)
        .map(|i| {
            let (text, label) = g.sentence();
            LabeledExample {
                example_id: format!("{prefix}{i:06}"),
                text,
                label,
            }
        })
        .collect()
}

/// `n` unlabeled sentences from the same distribution.
pub fn generate_pool(
    n: usize,
    seed: u64,
    prefix: &str,
    config: &SyntheticConfig,
) -> Vec<UnlabeledExample> {
    generate_labeled(n, seed, prefix, config)
        .into_iter()
        .map(|e| UnlabeledExample {
            example_id: e.example_id,
            text: e.text,
        })
        .collect()
}
