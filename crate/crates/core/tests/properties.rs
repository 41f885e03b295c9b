mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chemcal::calibration::{bin_index, bin_stats, ece, oe, PredictionRecord};
use chemcal::encoder::{word_tokens, EncoderConfig, Vocabulary};
use chemcal::selftrain::{per_class_quota, select_topk, SelfTrainConfig};
use chemcal::training::{cross_entropy, entropy, loss, mixup_pair, softmax};
use chemcal::{Classifier, Label, SoftLabel, NUM_CLASSES};

fn soft_label() -> impl Strategy<Value = SoftLabel> {
    prop::array::uniform6(0.0f64..1.0).prop_filter_map("non-zero mass", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-6).then(|| SoftLabel(w.map(|x| x / s)))
    })
}

fn one_hot() -> impl Strategy<Value = SoftLabel> {
    (0..NUM_CLASSES).prop_map(|k| SoftLabel::one_hot(Label::ALL[k]))
}

fn logits() -> impl Strategy<Value = [f64; NUM_CLASSES]> {
    prop::array::uniform6(-8.0f64..8.0)
}

/// Pool scores on a coarse grid so ties in both argmax and score occur.
fn scored_pool(max: usize) -> impl Strategy<Value = Vec<PredictionRecord>> {
    prop::collection::vec(prop::array::uniform6(0u8..8), 0..max).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, w)| {
                let w = w.map(|x| f64::from(x) + 0.5);
                let s: f64 = w.iter().sum();
                PredictionRecord::new(format!("p{:04}", (i * 7919) % 10007), SoftLabel(w.map(|x| x / s)), None)
            })
            .collect()
    })
}

fn records(max: usize) -> impl Strategy<Value = (Vec<PredictionRecord>, usize)> {
    (any::<u64>(), 1..max, prop::sample::select(vec![1usize, 5, 10, 15])).prop_map(
        |(seed, n, bins)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (common::random_records(&mut rng, n, bins), bins)
        },
    )
}

proptest! {
    #[test]
    fn mixup_is_convex(
        a in prop::collection::vec(-5.0f64..5.0, 8),
        b in prop::collection::vec(-5.0f64..5.0, 8),
        ya in one_hot(),
        yb in soft_label(),
        lambda in 0.0f64..=1.0,
    ) {
        let m = mixup_pair((0, &a, &ya), (1, &b, &yb), lambda).unwrap();
        for ((x, &p), &q) in m.feature.iter().zip(&a).zip(&b) {
            prop_assert!(*x >= p.min(q) - 1e-12 && *x <= p.max(q) + 1e-12);
        }
        prop_assert!((m.label.sum() - 1.0).abs() < 1e-9);
        for k in 0..NUM_CLASSES {
            let want = lambda * ya.0[k] + (1.0 - lambda) * yb.0[k];
            prop_assert!((m.label.0[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_decomposes_and_decreases_in_beta(
        z in logits(),
        t in soft_label(),
        b1 in 0.0f64..2.0,
        db in 0.0f64..2.0,
    ) {
        let p = softmax(&z);
        let h = entropy(&p);
        prop_assert!(h >= -1e-12 && h <= (NUM_CLASSES as f64).ln() + 1e-12);
        let l1 = loss(&p, &t, b1);
        prop_assert!((l1 - (cross_entropy(&p, &t) - b1 * h)).abs() < 1e-12);
        prop_assert!(loss(&p, &t, b1 + db) <= l1 + 1e-12);
    }

    #[test]
    fn softmax_is_a_distribution(z in logits()) {
        let p = softmax(&z);
        prop_assert!(p.is_valid(1e-12));
        prop_assert_eq!(p.argmax(), {
            let mut best = 0;
            for k in 1..NUM_CLASSES { if z[k] > z[best] { best = k; } }
            best
        });
    }

    #[test]
    fn oe_never_exceeds_ece((recs, bins) in records(300)) {
        let e = ece(&recs, bins).unwrap();
        let o = oe(&recs, bins).unwrap();
        prop_assert!(o <= e + 1e-15);
        prop_assert!((0.0..=1.0).contains(&e));
    }

    #[test]
    fn metrics_are_permutation_invariant((recs, bins) in records(300), seed in any::<u64>()) {
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!((ece(&recs, bins).unwrap() - ece(&shuffled, bins).unwrap()).abs() < 1e-12);
        prop_assert!((oe(&recs, bins).unwrap() - oe(&shuffled, bins).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn single_bin_ece_is_accuracy_gap((recs, _) in records(300)) {
        let n = recs.len() as f64;
        let acc = recs.iter().filter(|r| r.is_correct().unwrap()).count() as f64 / n;
        let conf = recs.iter().map(|r| r.confidence).sum::<f64>() / n;
        prop_assert!((ece(&recs, 1).unwrap() - (acc - conf).abs()).abs() < 1e-12);
    }

    #[test]
    fn bins_partition_records((recs, bins) in records(300)) {
        let stats = bin_stats(&recs, bins).unwrap();
        prop_assert_eq!(stats.len(), bins);
        prop_assert_eq!(stats.iter().map(|b| b.count).sum::<usize>(), recs.len());
        for r in &recs {
            let m = bin_index(r.confidence, bins);
            let b = &stats[m];
            prop_assert!(r.confidence <= b.upper);
            prop_assert!(r.confidence > b.lower || (m == 0 && r.confidence >= 0.0));
        }
    }

    #[test]
    fn selection_is_idempotent_and_ordered(pool in scored_pool(400), k in 0.0f64..200_000.0) {
        let cfg = SelfTrainConfig { k, ..SelfTrainConfig::default() };
        let batch = select_topk(&pool, &cfg);
        prop_assert_eq!(&batch, &select_topk(&pool, &cfg));
        let quota = per_class_quota(k, pool.len());
        for label in Label::ALL {
            prop_assert!(batch.count(label) <= quota);
        }
        prop_assert_eq!(batch.count(Label::False), 0);
        for w in batch.entries.windows(2) {
            if w[0].label == w[1].label {
                prop_assert!(w[0].score >= w[1].score);
            }
        }
    }

    #[test]
    fn larger_k_extends_each_class(pool in scored_pool(400), k1 in 0.0f64..100_000.0, dk in 0.0f64..100_000.0) {
        let small = select_topk(&pool, &SelfTrainConfig { k: k1, ..SelfTrainConfig::default() });
        let large = select_topk(&pool, &SelfTrainConfig { k: k1 + dk, ..SelfTrainConfig::default() });
        for label in Label::ALL {
            let a: Vec<_> = small.entries.iter().filter(|e| e.label == label).collect();
            let b: Vec<_> = large.entries.iter().filter(|e| e.label == label).collect();
            prop_assert!(a.len() <= b.len());
            prop_assert_eq!(&a[..], &b[..a.len()]);
        }
    }

    #[test]
    fn placeholders_stay_atomic(words in prop::collection::vec("[a-z]{1,6}|[,.;()]", 0..12), c in 0usize..12, g in 0usize..12) {
        let mut words = words;
        words.insert(c.min(words.len()), "@CHEMICAL$".to_string());
        words.insert(g.min(words.len()), "@GENE$".to_string());
        let text = words.join(" ");
        let tokens = word_tokens(&text);
        prop_assert_eq!(tokens.iter().filter(|t| **t == "@CHEMICAL$").count(), 1);
        prop_assert_eq!(tokens.iter().filter(|t| **t == "@GENE$").count(), 1);
    }
}

#[test]
fn model_files_round_trip_bit_exactly() {
    let vocab = Vocabulary::build(["@CHEMICAL$ inhibits @GENE$ .", "a b c"], 1);
    let config = EncoderConfig { dim: 8, hidden: 6, ..EncoderConfig::default() };
    let model = Classifier::init(vocab, &config, 11);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    model.save(&path).unwrap();
    let back = Classifier::load(&path).unwrap();
    assert_eq!(back.vocab.tokens(), model.vocab.tokens());
    let text = "@CHEMICAL$ inhibits @GENE$ strongly .";
    assert_eq!(back.predict_text(text).unwrap(), model.predict_text(text).unwrap());
    let again = dir.path().join("m2.bin");
    back.save(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}
