use chemcal::corpus::LabeledExample;
use chemcal::encoder::EncoderConfig;
use chemcal::records::UnlabeledExample;
use chemcal::selftrain::{selftrain_round, SelfTrainConfig};
use chemcal::training::{entropy, fit, predict_labeled, TrainConfig};
use chemcal::Label;

fn small_encoder() -> EncoderConfig {
    EncoderConfig {
        dim: 16,
        hidden: 16,
        ..EncoderConfig::default()
    }
}

fn separable(n: usize) -> Vec<LabeledExample> {
    (0..n)
        .map(|i| {
            let (verb, label) = if i % 2 == 0 {
                ("inhibits", Label::Cpr4)
            } else {
                ("activates", Label::Cpr3)
            };
            LabeledExample {
                example_id: format!("s{i:03}"),
                text: format!("w{} @CHEMICAL$ {verb} @GENE$ in w{} cells .", i % 7, i % 11),
                label,
            }
        })
        .collect()
}

fn model_bytes(model: &chemcal::Classifier) -> Vec<u8> {
    model.write_to(Vec::new()).unwrap()
}

#[test]
fn separable_fixture_is_learned() {
    let data = separable(200);
    let config = TrainConfig {
        beta: 0.0,
        mix_per_example: 0,
        epochs: 50,
        learning_rate: 0.1,
        seed: 1,
        ..TrainConfig::default()
    };
    let (model, log) = fit(&data, None, &small_encoder(), &config).unwrap();
    let records = predict_labeled(&model, &data).unwrap();
    let acc = records.iter().filter(|r| r.is_correct().unwrap()).count() as f64 / data.len() as f64;
    assert!(acc >= 0.99, "train accuracy {acc}");
    assert!(log.epochs.last().unwrap().mean_loss < log.epochs[0].mean_loss);
}

#[test]
fn confidence_penalty_raises_output_entropy() {
    let data = vec![LabeledExample {
        example_id: "only".into(),
        text: "@CHEMICAL$ inhibits @GENE$ .".into(),
        label: Label::Cpr4,
    }];
    let entropy_for = |beta: f64| {
        let config = TrainConfig {
            beta,
            mix_per_example: 0,
            epochs: 200,
            batch_size: 1,
            learning_rate: 0.1,
            seed: 5,
            ..TrainConfig::default()
        };
        let (model, _) = fit(&data, None, &small_encoder(), &config).unwrap();
        entropy(&model.predict_text(&data[0].text).unwrap())
    };
    let plain = entropy_for(0.0);
    let penalised = entropy_for(0.5);
    assert!(penalised > plain, "entropy {penalised} vs {plain}");
}

#[test]
fn training_is_deterministic() {
    let data = separable(60);
    let config = TrainConfig {
        epochs: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let (a, log_a) = fit(&data, None, &small_encoder(), &config).unwrap();
    let (b, log_b) = fit(&data, None, &small_encoder(), &config).unwrap();
    assert_eq!(model_bytes(&a), model_bytes(&b));
    assert_eq!(log_a, log_b);
    let (c, _) = fit(
        &data,
        None,
        &small_encoder(),
        &TrainConfig { seed: 10, ..config },
    )
    .unwrap();
    assert_ne!(model_bytes(&a), model_bytes(&c));
}

#[test]
fn zero_k_selftraining_equals_plain_training() {
    let data = separable(60);
    let pool: Vec<UnlabeledExample> = separable(40)
        .into_iter()
        .map(|e| UnlabeledExample {
            example_id: format!("pool-{}", e.example_id),
            text: e.text,
        })
        .collect();
    let config = TrainConfig {
        epochs: 3,
        seed: 2,
        ..TrainConfig::default()
    };
    let st = SelfTrainConfig {
        k: 0.0,
        ..SelfTrainConfig::default()
    };
    let outcome = selftrain_round(&data, None, &pool, &small_encoder(), &config, &st).unwrap();
    assert!(outcome.batches.is_empty());
    assert!(outcome.provenance.is_empty());
    let (plain, _) = fit(&data, None, &small_encoder(), &config).unwrap();
    assert_eq!(model_bytes(&outcome.final_model), model_bytes(&plain));
    assert_eq!(model_bytes(&outcome.initial), model_bytes(&plain));
}

#[test]
fn selftraining_adds_pseudo_labels_without_false() {
    let data = separable(60);
    let pool: Vec<UnlabeledExample> = separable(200)
        .into_iter()
        .map(|e| UnlabeledExample {
            example_id: format!("pool-{}", e.example_id),
            text: e.text,
        })
        .collect();
    let config = TrainConfig {
        epochs: 5,
        seed: 2,
        ..TrainConfig::default()
    };
    let st = SelfTrainConfig {
        k: 50_000.0,
        ..SelfTrainConfig::default()
    };
    let outcome = selftrain_round(&data, None, &pool, &small_encoder(), &config, &st).unwrap();
    let batch = &outcome.batches[0];
    assert!(!batch.is_empty());
    assert!(batch.entries.iter().all(|e| e.label != Label::False));
    assert!(batch.entries.iter().all(|e| e.example_id.starts_with("pool-")));
    assert_eq!(outcome.provenance.len(), batch.len());
    assert!(outcome.final_log.epochs.iter().all(|e| e.items >= data.len() + batch.len()));
}
