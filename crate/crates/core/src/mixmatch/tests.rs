use super::*;
use crate::augment::DaOperator;
use crate::corpus::Dataset;
use crate::mixda::{mixda_loss, MixDaPlan};
use crate::model::{finite_diff_check, HeadKind, RowSource};
use crate::sampling::RngStream;
use crate::testutil::{model_for, span_data, tagged, tagging_data, Tables};

#[test]
fn sharpen_examples() {
    assert_eq!(sharpen(&[0.3, 0.7], 1.0).unwrap(), vec![0.3, 0.7]);
    let s = sharpen(&[0.8, 0.2], 0.5).unwrap();
    assert!((s[0] - 0.64 / 0.68).abs() < 1e-12);
    assert!((s[1] - 0.04 / 0.68).abs() < 1e-12);
    assert!(sharpen(&[0.8, 0.2], 0.01).unwrap()[0] > 0.999);
    let u = sharpen(&[0.25; 4], 0.3).unwrap();
    assert!(u.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    assert!(sharpen(&[0.5, 0.5], 0.0).is_err());
    assert!(sharpen(&[0.5, 0.5], -1.0).is_err());
}

#[test]
fn config_validation() {
    assert!(MixMatchConfig::default().validate().is_ok());
    for bad in [
        MixMatchConfig {
            k: 0,
            ..Default::default()
        },
        MixMatchConfig {
            temperature: 1.5,
            ..Default::default()
        },
        MixMatchConfig {
            lambda_u: -0.1,
            ..Default::default()
        },
        MixMatchConfig {
            alpha_mix: 0.0,
            ..Default::default()
        },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}

fn unlabeled() -> Vec<Example> {
    vec![
        tagged("the pasta was great", "O O O O"),
        tagged("service is slow at best", "O O O O O"),
        tagged("we loved the wine list", "O O O O O"),
    ]
}

fn sample_plan(
    data: &Dataset,
    tables: &Tables,
    config: &MixMatchConfig,
    seed: u64,
) -> MixMatchPlan {
    let mut rng = RngStream::new(seed);
    MixMatchPlan::sample(
        &data.examples[..2],
        &unlabeled()[..2],
        &OpSpec::new(DaOperator::Del),
        &tables.get(),
        &tables.get(),
        config,
        16,
        &mut rng,
    )
    .unwrap()
}

#[test]
fn constant_model_guesses_its_output() {
    let data = tagging_data();
    let tables = Tables::new(&data);
    let (vocab, mut model) = model_for(&data, 16, 1);
    let w = model.tensor_range("head.weight").unwrap();
    model.params_mut()[w].fill(0.0);
    let b = model.tensor_range("head.bias").unwrap();
    model.params_mut()[b].copy_from_slice(&[0.5, -0.2, 1.0, 0.0, 0.3]);
    let z = [0.5f64, -0.2, 1.0, 0.0, 0.3];
    let s: f64 = z.iter().map(|v| v.exp()).sum();
    let want: Vec<f64> = z.iter().map(|v| v.exp() / s).collect();
    for k in [1, 2, 4] {
        let config = MixMatchConfig {
            k,
            ..Default::default()
        };
        let plan = sample_plan(&data, &tables, &config, 3);
        let g = guess_labels(
            &model,
            &plan.unlabeled,
            k,
            0.6,
            0.5,
            &data.schema,
            &vocab,
            16,
        )
        .unwrap();
        assert_eq!(g.mean.len(), 2);
        for rows in &g.mean {
            for r in rows {
                for (a, b) in r.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn identical_variants_average_to_their_prediction() {
    let data = tagging_data();
    let (vocab, model) = model_for(&data, 16, 1);
    let u = &unlabeled()[0];
    let same = AugmentedPair {
        pair: AlignedPair::identity(u),
        flags: Vec::new(),
        noop: true,
    };
    let variants = vec![same.clone(), same];
    let before = model.params().to_vec();
    let g = guess_labels(&model, &variants, 2, 0.7, 1.0, &data.schema, &vocab, 16).unwrap();
    assert_eq!(model.params(), &before[..]);
    let (b, _) = pair_batches(&[&variants[0].pair], &data.schema, &vocab, 16, false).unwrap();
    let pred = model.predict_batch(&b).unwrap();
    for t in 0..u.len() {
        for (a, b) in g.mean[0][t].iter().zip(pred.row(t + 1)) {
            assert!((a - b).abs() < 1e-12);
        }
        let s: f64 = g.sharpened[0][t].iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
}

fn toy(size: usize, max_len: usize, dim: usize, offset: f64) -> EncodedBatch {
    EncodedBatch {
        size,
        max_len,
        dim,
        data: (0..size * max_len * dim)
            .map(|i| i as f64 + offset)
            .collect(),
        mask: vec![true; size * max_len],
        sources: (0..size)
            .map(|row| {
                vec![RowSource {
                    pass: None,
                    row,
                    weight: 1.0,
                }]
            })
            .collect(),
    }
}

fn toy_targets(size: usize, first: usize) -> SoftTargets {
    SoftTargets {
        classes: 3,
        rows: (0..size)
            .map(|i| Some(crate::model::one_hot((first + i) % 3, 3)))
            .collect(),
    }
}

#[test]
fn pool_sizes_and_identities() {
    let (b, k) = (2, 2);
    let x = toy(b, 1, 2, 0.0);
    let u = toy(k * b, 1, 2, 100.0);
    let y = toy_targets(b, 0);
    let q = toy_targets(k * b, 1);
    let perm = vec![4, 1, 5, 0, 3, 2];
    let m = mixmatch_mix(&x, &y, &u, &q, 0.8, &perm).unwrap();
    assert_eq!(m.pool.encoding.size, 6);
    assert_eq!((m.x.size, m.u.size), (2, 4));
    assert_eq!(m.y.rows.len(), 2);
    assert_eq!(m.q.rows.len(), 4);

    let m = mixmatch_mix(&x, &y, &u, &q, 1.0, &perm).unwrap();
    assert_eq!(m.x.data, x.data);
    assert_eq!(m.u.data, u.data);
    assert_eq!(m.y, y);
    assert_eq!(m.q, q);

    let id: Vec<usize> = (0..6).collect();
    let m = mixmatch_mix(&x, &y, &u, &q, 0.5, &id).unwrap();
    assert_eq!(m.x.data, x.data);
    let m = mixmatch_mix(&x, &y, &u, &q, 0.5, &[1, 0, 2, 3, 4, 5]).unwrap();
    for i in 0..2 {
        assert_eq!(m.x.data[i], 0.5 * x.data[i] + 0.5 * x.data[i + 2]);
    }

    assert!(mixmatch_mix(&x, &y, &u, &q, 0.5, &[0, 0, 1, 2, 3, 4]).is_err());
    assert!(mixmatch_mix(&x, &y, &u, &q, 0.5, &[0, 1, 2]).is_err());
}

#[test]
fn loss_examples() {
    let pred = |rows: &[[f64; 2]]| PredictionBatch {
        kind: HeadKind::SpanCls,
        size: rows.len(),
        max_len: 1,
        classes: 2,
        logits: rows.iter().flat_map(|r| r.map(f64::ln)).collect(),
        probs: rows.iter().flat_map(|r| r.to_vec()).collect(),
    };
    let px = pred(&[[1.0, 0.0]]);
    let y = SoftTargets::new(2, vec![Some(vec![1.0, 0.0])]).unwrap();
    let pu = pred(&[[0.0, 1.0]]);
    let q = SoftTargets::new(2, vec![Some(vec![1.0, 0.0])]).unwrap();
    let l = mixmatch_loss(&px, &y, &pu, &q, 0.25).unwrap();
    assert!((l.total - 0.25).abs() < 1e-12);
    assert!((l.loss_u - 1.0).abs() < 1e-12);
    let l = mixmatch_loss(&px, &y, &pu, &q, 0.0).unwrap();
    assert_eq!(l.total, l.loss_x);
    let l = mixmatch_loss(&px, &y, &pred(&[[1.0, 0.0]]), &q, 1.0).unwrap();
    assert!(l.total.abs() < 1e-12);
}

#[test]
fn degraded_mode_matches_mixda() {
    let data = tagging_data();
    let tables = Tables::new(&data);
    let (vocab, model) = model_for(&data, 16, 4);
    let config = MixMatchConfig {
        lambda_u: 0.0,
        fixed_lambda2: Some(1.0),
        ..Default::default()
    };
    let op = OpSpec::new(DaOperator::Del);
    let mut rng = RngStream::new(17);
    let plan = MixMatchPlan::sample(
        &data.examples,
        &[],
        &op,
        &tables.get(),
        &tables.get(),
        &config,
        16,
        &mut rng,
    )
    .unwrap();
    assert!(plan.unlabeled.is_empty());
    let guesses = guess_labels(&model, &[], 2, 0.5, 0.5, &data.schema, &vocab, 16).unwrap();
    let mut g1 = model.zero_grads();
    let mm = mixmatch_loss_with(
        &model,
        &plan,
        &guesses,
        &config,
        &data.schema,
        &vocab,
        16,
        &mut g1,
    )
    .unwrap();

    let da = MixDaPlan {
        pairs: plan.labeled.clone(),
        lambdas: vec![plan.lambda1; plan.labeled.len()],
    };
    let mut g2 = model.zero_grads();
    let md = mixda_loss(&model, &da, &data.schema, &vocab, 16, &mut g2).unwrap();
    assert!(
        (mm.total - md.loss).abs() <= 1e-6 * md.loss.abs(),
        "{} vs {}",
        mm.total,
        md.loss
    );
    for (a, b) in g1.iter().zip(&g2) {
        assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()));
    }
}

#[test]
fn unlabeled_loss_reaches_encoder() {
    let data = tagging_data();
    let tables = Tables::new(&data);
    let (vocab, model) = model_for(&data, 16, 4);
    let grads_for = |lambda_u: f64| {
        let config = MixMatchConfig {
            lambda_u,
            ..Default::default()
        };
        let plan = sample_plan(&data, &tables, &config, 5);
        let g = guess_labels(
            &model,
            &plan.unlabeled,
            2,
            plan.lambda1.effective,
            0.5,
            &data.schema,
            &vocab,
            16,
        )
        .unwrap();
        let mut grads = model.zero_grads();
        mixmatch_loss_with(
            &model,
            &plan,
            &g,
            &config,
            &data.schema,
            &vocab,
            16,
            &mut grads,
        )
        .unwrap();
        grads
    };
    let a = grads_for(0.0);
    let b = grads_for(1.0);
    let r = model.tensor_range("layer0.attn.wq").unwrap();
    assert!(r.clone().any(|i| (a[i] - b[i]).abs() > 0.0));
}

fn gradcheck(data: Dataset, seed: u64) {
    let tables = Tables::new(&data);
    let (vocab, model) = model_for(&data, 16, seed);
    let config = MixMatchConfig {
        lambda_u: 0.5,
        alpha_aug: 0.8,
        alpha_mix: 0.8,
        ..Default::default()
    };
    let unl: Vec<Example> = data.examples.iter().rev().cloned().collect();
    let mut rng = RngStream::new(seed);
    let op = OpSpec::new(if data.schema.is_tagging() {
        DaOperator::Ins
    } else {
        DaOperator::Del
    });
    let plan = MixMatchPlan::sample(
        &data.examples,
        &unl,
        &op,
        &tables.get(),
        &tables.get(),
        &config,
        16,
        &mut rng,
    )
    .unwrap();
    let g = guess_labels(
        &model,
        &plan.unlabeled,
        2,
        plan.lambda1.effective,
        0.5,
        &data.schema,
        &vocab,
        16,
    )
    .unwrap();
    let mut grads = model.zero_grads();
    let out = mixmatch_loss_with(
        &model,
        &plan,
        &g,
        &config,
        &data.schema,
        &vocab,
        16,
        &mut grads,
    )
    .unwrap();
    assert!(out.total.is_finite() && out.loss_u > 0.0);
    let mut params = model.params().to_vec();
    let mut probe = model.clone();
    let r = finite_diff_check(
        &mut params,
        &grads,
        |p| {
            probe.params_mut().copy_from_slice(p);
            let mut gg = probe.zero_grads();
            mixmatch_loss_with(
                &probe,
                &plan,
                &g,
                &config,
                &data.schema,
                &vocab,
                16,
                &mut gg,
            )
            .unwrap()
            .total
        },
        50,
        &mut RngStream::new(2),
    );
    assert!(r.max_rel_error < 1e-3, "{}", r.max_rel_error);
}

#[test]
fn tagging_gradients() {
    gradcheck(tagging_data(), 8);
}

#[test]
fn spancls_gradients() {
    gradcheck(span_data(), 9);
}

#[test]
fn steps_stay_finite() {
    let data = tagging_data();
    let mut all = data.clone();
    all.examples.extend(unlabeled());
    let tables = Tables::new(&all);
    let (vocab, mut model) = model_for(&data, 16, 4);
    let mut opt = crate::model::Adam::new(Default::default(), model.num_params());
    let mut rng = RngStream::new(0);
    let unl = unlabeled();
    for i in 0..20 {
        let op = OpSpec::new(DaOperator::ALL[i % DaOperator::ALL.len()]);
        let mut grads = model.zero_grads();
        let out = mixmatch_step(
            &model,
            &data.examples,
            &unl,
            &op,
            &tables.get(),
            &tables.get(),
            &MixMatchConfig::default(),
            &vocab,
            16,
            &mut rng,
            &mut grads,
        )
        .unwrap();
        assert!(out.total.is_finite());
        opt.step(&mut model, &mut grads).unwrap();
    }
}
