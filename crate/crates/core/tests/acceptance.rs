//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::Rng;
use statrs::distribution::{Beta, ChiSquared, ContinuousCDF};

use mixnl::augment::{augment, DaOperator, OpSpec};
use mixnl::corpus::{
    check_spans, extract_chunks, pad_batch, validate_iob, Chunk, Example, TagVocab, TokenVocab,
};
use mixnl::harness::synth::{gen_synthetic, SynthCorpus, SynthSpec};
use mixnl::harness::train::{evaluate, train_on, AugmentResources, EvalResult, TrainData};
use mixnl::harness::{chunk_scores, train, Method, Task, TrainConfig};
use mixnl::mixda::{
    augment_pair, interpolate_encodings, mixda_loss, mixda_step, pair_batches, MixDaConfig,
    MixDaPlan,
};
use mixnl::mixmatch::{
    guess_labels, mixmatch_loss_with, mixmatch_mix, mixmatch_step, sharpen, MixMatchConfig,
    MixMatchPlan,
};
use mixnl::model::{finite_diff_check, one_hot, EncodedBatch, Model, RowSource, SoftTargets};
use mixnl::sampling::{beta_sample, RngStream};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn corpus(task: Task, seed: u64, labeled: usize, unlabeled: usize) -> SynthCorpus {
    let spec = SynthSpec {
        task,
        labeled,
        unlabeled,
        dev: 20,
        test: 20,
        ..SynthSpec::default()
    };
    gen_synthetic(&spec, &RngStream::new(seed)).unwrap()
}

fn data_of(c: &SynthCorpus) -> TrainData {
    TrainData {
        train: c.labeled.clone(),
        dev: c.dev.clone(),
        unlabeled: c.unlabeled.clone(),
    }
}

fn resources(task: Task, data: &TrainData) -> AugmentResources {
    let config = TrainConfig {
        task,
        op: DaOperator::SprSim,
        ..TrainConfig::default()
    };
    AugmentResources::build(&config, data).unwrap()
}

fn vocab_of(data: &TrainData) -> TokenVocab {
    TokenVocab::build(
        data.train
            .sentences()
            .chain(data.unlabeled.iter().map(Example::tokens)),
    )
}

fn tiny_model(task: Task, data: &TrainData, vocab: &TokenVocab, seed: u64) -> Model {
    let config = TrainConfig {
        task,
        dim: 8,
        ff_dim: 12,
        layers: 2,
        max_len: 24,
        ..TrainConfig::default()
    };
    let mc = config.model(vocab.len(), data.train.schema.num_classes());
    Model::new(mc, &mut RngStream::new(seed)).unwrap()
}

fn chunk_content(ex: &Example, schema: &mixnl::corpus::Schema) -> Vec<(String, Vec<String>)> {
    ex.targets(schema)
        .into_iter()
        .map(|c| (c.kind.clone(), ex.tokens()[c.start..=c.end].to_vec()))
        .collect()
}

fn iob_safety() -> Outcome {
    let mut rng = RngStream::new(101);
    let mut checked = 0;
    for task in [Task::Tagging, Task::Spancls] {
        let c = corpus(task, 11, 200, 200);
        let data = data_of(&c);
        let res = resources(task, &data);
        let schema = &data.train.schema;
        let tables = res.tables(schema);
        for i in 0..500 {
            let ex = &data.train.examples[rng.random_range(0..data.train.len())];
            let op = DaOperator::ALL[rng.random_range(0..DaOperator::ALL.len())];
            let seed: u64 = rng.random();
            let out = augment(ex, &OpSpec::new(op), &tables, &mut RngStream::new(seed))
                .map_err(|e| format!("{op} on example {i}: {e}"))?;
            match (&out.example, schema) {
                (Example::Tagged(t), mixnl::corpus::Schema::Tagging(v)) => {
                    validate_iob(&t.tags, v).map_err(|e| format!("{op}: {e}"))?;
                    ensure(
                        t.tags.len() == t.tokens.len(),
                        format!("{op}: tag/token length mismatch"),
                    )?;
                }
                (Example::Span(s), _) => {
                    check_spans(&s.spans, s.tokens.len()).map_err(|e| format!("{op}: {e}"))?
                }
                _ => return Err("augmentation changed the example kind".into()),
            }
            if !op.is_span_level() {
                ensure(
                    chunk_content(ex, schema) == chunk_content(&out.example, schema),
                    format!("{op} changed target-span tokens of {:?}", ex.tokens()),
                )?;
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} augmentations valid"))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| rel(*x, *y))
        .fold(0.0, f64::max)
}

fn interpolation_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for task in [Task::Tagging, Task::Spancls] {
        let c = corpus(task, 12, 40, 0);
        let data = data_of(&c);
        let res = resources(task, &data);
        let schema = &data.train.schema;
        let tables = res.tables(schema);
        let vocab = vocab_of(&data);
        let model = tiny_model(task, &data, &vocab, 3);
        let mut rng = RngStream::new(5);
        let pairs = data.train.examples[..8]
            .iter()
            .map(|e| augment_pair(e, &OpSpec::new(DaOperator::Del), &tables, 24, &mut rng))
            .collect::<mixnl::error::Result<Vec<_>>>()
            .unwrap();
        let refs: Vec<_> = pairs.iter().map(|p| &p.pair).collect();
        let (x, xa) = pair_batches(&refs, schema, &vocab, 24, true).unwrap();
        let (e1, e2) = (
            model.encode_frozen(&x).unwrap(),
            model.encode_frozen(&xa).unwrap(),
        );
        let (p1, p2) = (model.predict(&e1).unwrap(), model.predict(&e2).unwrap());
        for (lambda, parent) in [(1.0, &p1), (0.0, &p2)] {
            let mixed = model
                .predict(&interpolate_encodings(&e1, &e2, lambda).unwrap())
                .unwrap();
            let m = max_rel(&mixed.probs, &parent.probs);
            ensure(
                m <= 1e-6,
                format!("{task:?} λ={lambda}: relative error {m:e}"),
            )?;
            worst = worst.max(m);
        }

        let config = MixDaConfig::default();
        let mut g = model.zero_grads();
        let batch = &data.train.examples[..8];
        let noop = OpSpec::new(DaOperator::Sw);
        // SW needs two tokens outside target spans, so it leaves
        // single-token sentences unchanged.
        let singles: Vec<Example> = batch.iter().map(|e| single_token(e, schema)).collect();
        let step = mixda_step(
            &model, &singles, &noop, &tables, &config, &vocab, 24, &mut rng, &mut g,
        )
        .unwrap();
        ensure(step.noops == singles.len(), "operator was not a no-op")?;
        let mut g2 = model.zero_grads();
        let ce = model
            .supervised_loss(&pad_batch(&singles, schema, &vocab, 24).unwrap(), &mut g2)
            .unwrap();
        let m = rel(step.loss, ce);
        ensure(
            m <= 1e-6,
            format!("{task:?} noop MixDA {} vs CE {ce}: {m:e}", step.loss),
        )?;
        worst = worst.max(m);
    }
    Ok(format!("max relative error {worst:.1e}"))
}

fn single_token(ex: &Example, schema: &mixnl::corpus::Schema) -> Example {
    match ex {
        Example::Tagged(t) => {
            let v = schema.tag_vocab().unwrap();
            Example::Tagged(
                mixnl::corpus::TaggedSequence::new(vec![t.tokens[0].clone()], vec![v.outside()], v)
                    .unwrap(),
            )
        }
        Example::Span(s) => Example::Span(
            mixnl::corpus::SpanExample::new(vec![s.tokens[0].clone()], vec![(0, 0)], s.label)
                .unwrap(),
        ),
    }
}

fn gradient_correctness() -> Outcome {
    let mut report = Vec::new();
    for task in [Task::Tagging, Task::Spancls] {
        let c = corpus(task, 13, 12, 12);
        let data = data_of(&c);
        let res = resources(task, &data);
        let schema = &data.train.schema;
        let tables = res.tables(schema);
        let vocab = vocab_of(&data);
        let model = tiny_model(task, &data, &vocab, 7);
        let labeled = &data.train.examples[..6];
        let unlabeled = &data.unlabeled[..4];
        let check = |name: &str, f: &dyn Fn(&Model, &mut [f64]) -> f64| -> Result<f64, String> {
            let mut grads = model.zero_grads();
            f(&model, &mut grads);
            let mut params = model.params().to_vec();
            let mut probe = model.clone();
            let r = finite_diff_check(
                &mut params,
                &grads,
                |p| {
                    probe.params_mut().copy_from_slice(p);
                    let mut gg = probe.zero_grads();
                    f(&probe, &mut gg)
                },
                50,
                &mut RngStream::new(21),
            );
            ensure(
                r.max_rel_error < 1e-3,
                format!("{task:?} {name}: {:e}", r.max_rel_error),
            )?;
            Ok(r.max_rel_error)
        };
        let batch = pad_batch(labeled, schema, &vocab, 24).unwrap();
        let ce = check("CE", &|m, g| m.supervised_loss(&batch, g).unwrap())?;

        let config = MixDaConfig {
            max_adjust: false,
            ..MixDaConfig::default()
        };
        let op = OpSpec::new(if task == Task::Tagging {
            DaOperator::Ins
        } else {
            DaOperator::Del
        });
        let plan =
            MixDaPlan::sample(labeled, &op, &tables, &config, 24, &mut RngStream::new(8)).unwrap();
        let md = check("MixDA", &|m, g| {
            mixda_loss(m, &plan, schema, &vocab, 24, g).unwrap().loss
        })?;

        let mm_config = MixMatchConfig {
            lambda_u: 0.5,
            alpha_aug: 0.8,
            alpha_mix: 0.8,
            ..MixMatchConfig::default()
        };
        let plan = MixMatchPlan::sample(
            labeled,
            unlabeled,
            &op,
            &tables,
            &tables,
            &mm_config,
            24,
            &mut RngStream::new(9),
        )
        .unwrap();
        let guesses = guess_labels(
            &model,
            &plan.unlabeled,
            plan.k,
            plan.lambda1.effective,
            mm_config.temperature,
            schema,
            &vocab,
            24,
        )
        .unwrap();
        let mm = check("MixMatch", &|m, g| {
            mixmatch_loss_with(m, &plan, &guesses, &mm_config, schema, &vocab, 24, g)
                .unwrap()
                .total
        })?;
        report.push(format!(
            "{task:?} CE {ce:.1e} MixDA {md:.1e} MixMatch {mm:.1e}"
        ));
    }
    Ok(report.join("; "))
}

fn sharpen_checks() -> Outcome {
    let mut rng = RngStream::new(31);
    for _ in 0..100 {
        let p = random_dist(&mut rng, 4);
        ensure(sharpen(&p, 1.0).unwrap() == p, "T=1 is not the identity")?;
    }
    let s = sharpen(&[0.8, 0.2], 0.5).unwrap();
    ensure(
        (s[0] - 0.9412).abs() < 1e-4 && (s[1] - 0.0588).abs() < 1e-4,
        format!("[0.8,0.2] at T=0.5 gave {s:?}"),
    )?;
    for _ in 0..10_000 {
        let c = rng.random_range(2..8);
        let p = random_dist(&mut rng, c);
        let t = rng.random_range(0.05..1.0);
        let s = sharpen(&p, t).unwrap();
        let sum: f64 = s.iter().sum();
        ensure((sum - 1.0).abs() < 1e-9, format!("row sum {sum}"))?;
        ensure(
            argmax(&s) == argmax(&p),
            format!("argmax moved for {p:?} at T={t}"),
        )?;
    }
    Ok(format!("[0.8,0.2] -> [{:.4}, {:.4}]", s[0], s[1]))
}

fn random_dist(rng: &mut RngStream, c: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..c).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn argmax(p: &[f64]) -> usize {
    (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b })
}

fn beta_sampler() -> Outcome {
    const N: usize = 100_000;
    const BINS: usize = 50;
    let mut report = Vec::new();
    for (i, alpha) in [0.2, 0.5, 0.8].into_iter().enumerate() {
        let mut rng = RngStream::new(41 + i as u64);
        let xs: Vec<f64> = (0..N)
            .map(|_| beta_sample(alpha, &mut rng).unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / N as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (N - 1) as f64;
        let want_var = 1.0 / (4.0 * (2.0 * alpha + 1.0));
        ensure(
            (mean - 0.5).abs() <= 0.02,
            format!("α={alpha}: mean {mean}"),
        )?;
        ensure(
            (var - want_var).abs() <= 0.1 * want_var,
            format!("α={alpha}: variance {var} vs {want_var}"),
        )?;
        let dist = Beta::new(alpha, alpha).unwrap();
        let edges: Vec<f64> = (1..BINS)
            .map(|b| dist.inverse_cdf(b as f64 / BINS as f64))
            .collect();
        let mut counts = [0usize; BINS];
        for x in &xs {
            counts[edges.partition_point(|e| e <= x)] += 1;
        }
        let expected = N as f64 / BINS as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let critical = ChiSquared::new((BINS - 1) as f64)
            .unwrap()
            .inverse_cdf(0.99);
        ensure(
            chi2 < critical,
            format!("α={alpha}: χ² {chi2:.1} ≥ {critical:.1}"),
        )?;
        report.push(format!(
            "α={alpha} mean {mean:.4} var {var:.4} χ² {chi2:.1}"
        ));
    }
    Ok(report.join("; "))
}

fn toy_encoding(size: usize, offset: f64) -> EncodedBatch {
    EncodedBatch {
        size,
        max_len: 1,
        dim: 2,
        data: (0..size * 2).map(|i| i as f64 + offset).collect(),
        mask: vec![true; size],
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

fn mixmatch_sizes() -> Outcome {
    let c = corpus(Task::Tagging, 14, 64, 256);
    let data = data_of(&c);
    let res = resources(Task::Tagging, &data);
    let schema = &data.train.schema;
    let tables = res.tables(schema);
    let mut rng = RngStream::new(51);
    let mut cases = 0;
    for _ in 0..50 {
        let b = rng.random_range(1..9);
        let k = rng.random_range(1..5);
        let config = MixMatchConfig {
            k,
            ..MixMatchConfig::default()
        };
        let op = OpSpec::new(DaOperator::ALL[rng.random_range(0..9)]);
        let lo = rng.random_range(0..data.train.len() - b);
        let ulo = rng.random_range(0..data.unlabeled.len() - b);
        let plan = MixMatchPlan::sample(
            &data.train.examples[lo..lo + b],
            &data.unlabeled[ulo..ulo + b],
            &op,
            &tables,
            &tables,
            &config,
            24,
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        ensure(
            plan.labeled.len() == b && plan.unlabeled.len() == k * b,
            "plan sizes",
        )?;
        let x = toy_encoding(b, 0.0);
        let u = toy_encoding(k * b, 1000.0);
        let targets = |n: usize, first: usize| SoftTargets {
            classes: 3,
            rows: (0..n).map(|i| Some(one_hot((first + i) % 3, 3))).collect(),
        };
        let m = mixmatch_mix(
            &x,
            &targets(b, 0),
            &u,
            &targets(k * b, 1),
            plan.lambda2.effective,
            &plan.perm,
        )
        .map_err(|e| e.to_string())?;
        ensure(
            m.pool.encoding.size == (k + 1) * b,
            format!("|W| = {}", m.pool.encoding.size),
        )?;
        ensure(
            m.x.size == b && m.u.size == k * b,
            format!("|X'| = {}, |U'| = {}", m.x.size, m.u.size),
        )?;
        let rows = |e: &EncodedBatch| -> Vec<Vec<u64>> {
            let mut r: Vec<Vec<u64>> = e
                .data
                .chunks(e.max_len * e.dim)
                .map(|c| c.iter().map(|v| v.to_bits()).collect())
                .collect();
            r.sort();
            r
        };
        let union = EncodedBatch::concat(&[&x, &u]).unwrap();
        ensure(
            rows(&m.pool.encoding) == rows(&union),
            "pool is not a permutation of X̂ ∪ Û",
        )?;
        let perm: BTreeSet<usize> = plan.perm.iter().copied().collect();
        ensure(
            perm.len() == (k + 1) * b && perm.iter().all(|&i| i < (k + 1) * b),
            "perm",
        )?;
        cases += 1;
    }
    Ok(format!("{cases} random configurations"))
}

fn degraded_mode() -> Outcome {
    let mut report = Vec::new();
    for task in [Task::Tagging, Task::Spancls] {
        let c = corpus(task, 15, 16, 0);
        let data = data_of(&c);
        let res = resources(task, &data);
        let schema = &data.train.schema;
        let tables = res.tables(schema);
        let vocab = vocab_of(&data);
        let model = tiny_model(task, &data, &vocab, 9);
        let config = MixMatchConfig {
            lambda_u: 0.0,
            fixed_lambda2: Some(1.0),
            ..MixMatchConfig::default()
        };
        let op = OpSpec::new(DaOperator::Del);
        let batch = &data.train.examples[..8];
        let mut g1 = model.zero_grads();
        let mm = mixmatch_step(
            &model,
            batch,
            &[],
            &op,
            &tables,
            &tables,
            &config,
            &vocab,
            24,
            &mut RngStream::new(3),
            &mut g1,
        )
        .unwrap();
        let plan = MixMatchPlan::sample(
            batch,
            &[],
            &op,
            &tables,
            &tables,
            &config,
            24,
            &mut RngStream::new(3),
        )
        .unwrap();
        let da = MixDaPlan {
            pairs: plan.labeled.clone(),
            lambdas: vec![plan.lambda1; plan.labeled.len()],
        };
        let mut g2 = model.zero_grads();
        let md = mixda_loss(&model, &da, schema, &vocab, 24, &mut g2).unwrap();
        let m = rel(mm.total, md.loss);
        ensure(m <= 1e-6, format!("{task:?}: {} vs {}", mm.total, md.loss))?;
        let gm = g1
            .iter()
            .zip(&g2)
            .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
            .fold(0.0, f64::max);
        ensure(gm <= 1e-6, format!("{task:?}: gradients differ by {gm:e}"))?;
        report.push(format!("{task:?} {:.6} vs {:.6}", mm.total, md.loss));
    }
    Ok(report.join("; "))
}

/// Counts matches by comparing every predicted chunk with every gold chunk.
fn brute_force_f1(pred: &[Vec<Chunk>], gold: &[Vec<Chunk>]) -> (f64, f64, f64) {
    let mut correct = 0;
    for (p, g) in pred.iter().zip(gold) {
        for a in p {
            if g.iter()
                .any(|b| b.kind == a.kind && b.start == a.start && b.end == a.end)
            {
                correct += 1;
            }
        }
    }
    let np: usize = pred.iter().map(Vec::len).sum();
    let ng: usize = gold.iter().map(Vec::len).sum();
    let p = if np == 0 {
        0.0
    } else {
        correct as f64 / np as f64
    };
    let r = if ng == 0 {
        0.0
    } else {
        correct as f64 / ng as f64
    };
    let f = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f)
}

fn random_tags(rng: &mut RngStream, v: &TagVocab, len: usize) -> Vec<usize> {
    let mut tags = Vec::with_capacity(len);
    for i in 0..len {
        let t = rng.random_range(0..v.len());
        let ok = v.kind(t).and_then(|k| k.chunk_type()).is_none_or(|ty| {
            v.inside(ty) != Some(t)
                || (i > 0 && v.kind(tags[i - 1]).and_then(|k| k.chunk_type()) == Some(ty))
        });
        tags.push(if ok {
            t
        } else {
            v.begin(v.kind(t).unwrap().chunk_type().unwrap()).unwrap()
        });
    }
    tags
}

fn chunk_f1_oracle() -> Outcome {
    let v = TagVocab::default();
    let mut rng = RngStream::new(61);
    for case in 0..100 {
        let n = rng.random_range(1..6);
        let (mut pred, mut gold) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let len = rng.random_range(1..12);
            let g = random_tags(&mut rng, &v, len);
            let p = if rng.random::<f64>() < 0.3 {
                g.clone()
            } else {
                random_tags(&mut rng, &v, len)
            };
            gold.push(extract_chunks(&g, &v).unwrap());
            pred.push(extract_chunks(&p, &v).unwrap());
        }
        let s = chunk_scores(&pred, &gold);
        let (p, r, f) = brute_force_f1(&pred, &gold);
        ensure(
            s.precision == p && s.recall == r && s.f1 == f,
            format!("case {case}: {s:?} vs ({p}, {r}, {f})"),
        )?;
    }
    let gold = vec![vec![Chunk::new("AS", 0, 0), Chunk::new("OP", 2, 3)]];
    let pred = vec![vec![Chunk::new("AS", 0, 0)]];
    let s = chunk_scores(&pred, &gold);
    ensure(
        s.precision == 1.0 && s.recall == 0.5 && s.f1 == 2.0 / 3.0,
        format!("worked example {s:?}"),
    )?;
    Ok("100 random cases; P=1 R=0.5 F1=2/3".into())
}

fn label_efficiency() -> Outcome {
    let spec = SynthSpec {
        labeled: 100,
        unlabeled: 2000,
        dev: 150,
        test: 500,
        ..SynthSpec::default()
    };
    let c = gen_synthetic(&spec, &RngStream::new(2026)).unwrap();
    let data = data_of(&c);
    let base = TrainConfig {
        op: DaOperator::Del,
        epochs: 20,
        dim: 32,
        ff_dim: 64,
        layers: 1,
        batch_size: 16,
        lr: 3e-3,
        ..TrainConfig::default()
    };
    let methods = [Method::Baseline, Method::Mixda, Method::Mixmatch];
    let mut scores = vec![Vec::new(); methods.len()];
    for seed in 0..5 {
        for (m, method) in methods.iter().enumerate() {
            let config = TrainConfig {
                method: *method,
                seed,
                ..base.clone()
            };
            let out = train_on(&config, &data).map_err(|e| e.to_string())?;
            let EvalResult::Tagging(s) = evaluate(&out.model, &out.vocab, &c.test).unwrap() else {
                unreachable!()
            };
            scores[m].push(s.f1);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (b, d, mm) = (mean(&scores[0]), mean(&scores[1]), mean(&scores[2]));
    let wins = scores[2]
        .iter()
        .zip(&scores[0])
        .filter(|(a, b)| a >= b)
        .count();
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let detail = format!(
        "mean F1 baseline {b:.4} [{}], MixDA {d:.4} [{}], MixMatch {mm:.4} [{}], MixMatch ≥ baseline in {wins}/5 seeds",
        fmt(&scores[0]),
        fmt(&scores[1]),
        fmt(&scores[2])
    );
    if mm >= d && d >= b && wins >= 4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(Task::Tagging, 16, 40, 60);
    mixnl::harness::write_synthetic(dir.path(), &c).unwrap();
    let mut checked = Vec::new();
    for method in Method::ALL {
        let run = |name: &str| {
            let config = TrainConfig {
                method,
                op: DaOperator::Tr,
                epochs: 2,
                dim: 8,
                ff_dim: 16,
                layers: 1,
                max_len: 24,
                seed: 4,
                train: Some(dir.path().join("labeled.jsonl")),
                dev: Some(dir.path().join("dev.jsonl")),
                unlabeled: Some(dir.path().join("unlabeled.jsonl")),
                metrics: Some(dir.path().join(name)),
                ..TrainConfig::default()
            };
            train(&config).unwrap();
            std::fs::read(dir.path().join(name)).unwrap()
        };
        let (a, b) = (run("a.jsonl"), run("b.jsonl"));
        ensure(
            !a.is_empty() && a == b,
            format!("{} histories differ", method.name()),
        )?;
        checked.push(method.name());
    }
    Ok(format!(
        "identical metrics files for {}",
        checked.join(", ")
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("IOB safety", iob_safety, Duration::from_secs(30)),
        (
            "interpolation identities",
            interpolation_identities,
            Duration::from_secs(60),
        ),
        (
            "gradient correctness",
            gradient_correctness,
            Duration::from_secs(300),
        ),
        ("sharpen", sharpen_checks, Duration::MAX),
        ("beta sampler", beta_sampler, Duration::from_secs(60)),
        ("mixmatch sizes", mixmatch_sizes, Duration::MAX),
        ("degraded mode", degraded_mode, Duration::MAX),
        ("chunk F1 oracle", chunk_f1_oracle, Duration::MAX),
        (
            "label efficiency",
            label_efficiency,
            Duration::from_secs(900),
        ),
        ("determinism", determinism, Duration::MAX),
    ];
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let result = match result {
            Ok(msg) if took > *budget => Err(format!("{msg}; took {took:.1?}, budget {budget:?}")),
            r => r,
        };
        match result {
            Ok(msg) => println!("criterion {}: {name}: PASS ({msg}; {took:.1?})", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: {name}: FAIL ({msg}; {took:.1?})", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
