use super::*;
use crate::harness::experiment::{run_experiment, ExperimentPlan, SampleSize};
use crate::harness::synth::{gen_synthetic, SynthSpec};

fn corpus(task: Task, labeled: usize, unlabeled: usize) -> TrainData {
    let spec = SynthSpec {
        task,
        labeled,
        unlabeled,
        dev: 60,
        test: 60,
        ..SynthSpec::default()
    };
    let c = gen_synthetic(&spec, &RngStream::new(5)).unwrap();
    TrainData {
        train: c.labeled,
        dev: c.dev,
        unlabeled: c.unlabeled,
    }
}

fn small(method: Method, epochs: usize) -> TrainConfig {
    TrainConfig {
        method,
        epochs,
        dim: 16,
        ff_dim: 32,
        layers: 1,
        batch_size: 16,
        max_len: 24,
        lr: 5e-3,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn baseline_learns_the_synthetic_grammar() {
    let data = corpus(Task::Tagging, 300, 0);
    let out = train_on(&small(Method::Baseline, 8), &data).unwrap();
    assert!(
        out.best_dev.primary() > 0.95,
        "dev F1 {}",
        out.best_dev.primary()
    );
}

#[test]
fn same_seed_same_history() {
    let data = corpus(Task::Tagging, 40, 40);
    for method in Method::ALL {
        let c = small(method, 2);
        let a = train_on(&c, &data).unwrap();
        let b = train_on(&c, &data).unwrap();
        assert_eq!(a.history, b.history, "{}", method.name());
        assert_eq!(a.model.params(), b.model.params());
    }
}

#[test]
fn history_has_one_dev_score_per_epoch() {
    let data = corpus(Task::Spancls, 40, 20);
    let c = TrainConfig {
        task: Task::Spancls,
        ..small(Method::Mixmatch, 3)
    };
    assert!(matches!(
        train_on(&small(Method::Mixmatch, 3), &data),
        Err(Error::Config(_))
    ));
    let out = train_on(&c, &data).unwrap();
    let dev: Vec<_> = out
        .history
        .iter()
        .filter(|r| r.split == "dev" && r.metric == "macro-f1")
        .collect();
    assert_eq!(dev.len(), 3);
    let best = dev.iter().map(|r| r.value).fold(f64::MIN, f64::max);
    let first_best = dev.iter().find(|r| r.value == best).unwrap();
    assert_eq!(out.best_epoch, first_best.epoch);
    assert!(out.history.iter().any(|r| r.metric == "loss-u"));
}

#[test]
fn mixmatch_needs_unlabeled_file() {
    let c = TrainConfig {
        method: Method::Mixmatch,
        train: Some("x.jsonl".into()),
        ..TrainConfig::default()
    };
    assert!(matches!(train(&c), Err(Error::Config(_))));
}

#[test]
fn checkpoint_reproduces_dev_metric() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(Task::Tagging, 60, 0);
    let c = TrainConfig {
        checkpoint: Some(dir.path().join("m.ckpt")),
        ..small(Method::Mixda, 2)
    };
    let out = train_on(&c, &data).unwrap();
    save_checkpoint(
        c.checkpoint.as_ref().unwrap(),
        &out.model,
        &out.checkpoint_meta(&c),
    )
    .unwrap();
    let t = load_trained(c.checkpoint.as_ref().unwrap()).unwrap();
    let again = evaluate(&t.model, &t.vocab, &data.dev).unwrap();
    assert!((again.primary() - out.best_dev.primary()).abs() < 1e-6);
    assert_eq!(t.meta["dev"].as_f64().unwrap(), out.best_dev.primary());
}

#[test]
fn experiment_counts_runs_and_means() {
    let data = corpus(Task::Tagging, 30, 10);
    let test = corpus(Task::Tagging, 20, 0).dev;
    let plan = ExperimentPlan {
        sizes: vec![SampleSize::Count(10), SampleSize::Full],
        methods: vec![Method::Baseline, Method::Mixda],
        ..ExperimentPlan::default()
    };
    let c = TrainConfig {
        dim: 4,
        ff_dim: 4,
        ..small(Method::Baseline, 1)
    };
    assert_eq!(plan.num_runs(), 60);
    let table = run_experiment(&plan, &c, &data, &test).unwrap();
    let f1: Vec<_> = table.rows.iter().filter(|r| r.metric == "f1").collect();
    assert_eq!(f1.len(), 60);
    let means = table.means("f1");
    for ((size, method), m) in means {
        let vals: Vec<f64> = f1
            .iter()
            .filter(|r| r.size == size && r.method == method)
            .map(|r| r.value)
            .collect();
        assert_eq!(vals.len(), 15);
        assert!((m - vals.iter().sum::<f64>() / 15.0).abs() < 1e-12);
    }
    assert_eq!(table, run_experiment(&plan, &c, &data, &test).unwrap());
}

#[test]
fn experiment_rejects_oversized_sample() {
    let data = corpus(Task::Tagging, 10, 0);
    let plan = ExperimentPlan {
        sizes: vec![SampleSize::Count(11)],
        ..ExperimentPlan::default()
    };
    let err = run_experiment(&plan, &small(Method::Baseline, 1), &data, &data.dev).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn subsamples_ignore_method() {
    let plan = ExperimentPlan::default();
    let a = plan.subsample(SampleSize::Count(250), 1, 1000);
    assert_eq!(a, plan.subsample(SampleSize::Count(250), 1, 1000));
    assert_ne!(a, plan.subsample(SampleSize::Count(250), 2, 1000));
    assert_eq!(a.len(), 250);
    assert!(a.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn predictions_are_valid_iob() {
    let data = corpus(Task::Tagging, 20, 0);
    let out = train_on(&small(Method::Baseline, 1), &data).unwrap();
    let tv = data.dev.schema.tag_vocab().unwrap();
    for tags in predict_tags(&out.model, &out.vocab, &data.dev).unwrap() {
        crate::corpus::validate_iob(&tags, tv).unwrap();
    }
}
