//! End-to-end acceptance gate. One test per numbered criterion; each prints
//! a single pass line with the measured values when it succeeds.

use std::collections::BTreeMap;
use std::time::Instant;

use fednewsrec::data::{build_client_stores, Catalog, Impression};
use fednewsrec::fed::{
    aggregate, server_round, train_centralized, train_federated, ClientStore, TrainOptions,
};
use fednewsrec::ldp::{clip, PrivacyConfig};
use fednewsrec::metrics::{auc, evaluate, mrr, ndcg_at_k};
use fednewsrec::model::{
    user_gradient, user_loss, GradientSet, HyperParams, ModelParams, TrainingSample,
};
use fednewsrec::nn::laplace_sample;
use fednewsrec::synth::{generate_synthetic, SynthSpec};
use fednewsrec::RngState;

fn desk_dataset() -> (Catalog, Vec<Impression>, Vec<Impression>) {
    let (catalog, train, test, _) =
        generate_synthetic(&SynthSpec::default(), &RngState::new(7)).unwrap();
    (catalog, train, test)
}

fn desk_hp(catalog: &Catalog) -> HyperParams {
    HyperParams::desk(catalog.vocab_size())
}

fn federated_auc(
    hp: &HyperParams,
    catalog: &Catalog,
    train: &[Impression],
    test: &[Impression],
    lambda: f64,
    delta: f64,
    rounds: usize,
    seed: u64,
) -> (f64, Vec<f64>) {
    let root = RngState::new(seed);
    let init = ModelParams::init(hp, &root).unwrap();
    let clients = build_client_stores(train, catalog, hp, &root.split(1)).unwrap();
    let privacy = PrivacyConfig::new(delta, lambda).unwrap();
    let (params, reports) = train_federated(
        &init,
        &clients,
        &privacy,
        rounds,
        &root.split(2),
        &TrainOptions::default(),
        |_, _| {},
    )
    .unwrap();
    let report = evaluate(&params, test, catalog).unwrap();
    let losses = reports.iter().map(|r| r.pre_loss).collect();
    (report.auc, losses)
}

// ---------------------------------------------------------------- criterion 1

/// Analytic gradients of the full model match central finite differences.
#[test]
fn criterion_1_full_model_gradient_check() {
    let start = Instant::now();
    let step = 1e-5;
    let vocab = 20;
    let mut worst = 0.0f64;
    for seed in 1..=5u64 {
        let mut hp = HyperParams::desk(vocab);
        hp.dropout_rate = 0.0; // dropout frozen for differentiability
        let params = ModelParams::init(&hp, &RngState::new(seed)).unwrap();
        let mut srng = RngState::new(100 + seed);
        let mut title = |r: &mut RngState| -> Vec<usize> {
            (0..hp.title_len).map(|_| r.next_index(vocab)).collect()
        };
        let samples: Vec<TrainingSample> = (0..2)
            .map(|_| TrainingSample {
                history: (0..3).map(|_| title(&mut srng)).collect(),
                positive: title(&mut srng),
                negatives: (0..hp.negatives_h).map(|_| title(&mut srng)).collect(),
            })
            .collect();
        let lrng = RngState::new(200 + seed);
        let analytic = user_gradient(&params, &samples, &lrng, true).unwrap();

        let loss_at = |p: &ModelParams| user_loss(p, &samples, &lrng, true).unwrap();
        let mut check = |a: f64, n: f64, what: &str| {
            let denom = a.abs().max(n.abs());
            let diff = (a - n).abs();
            let rel = if denom > 0.0 { diff / denom } else { 0.0 };
            assert!(
                rel <= 1e-4 || diff <= 1e-9,
                "seed {seed} {what}: analytic {a:.3e} vs numeric {n:.3e} (rel {rel:.3e})"
            );
            if diff > 1e-9 {
                worst = worst.max(rel);
            }
        };

        // dense parameters: every coordinate of every matrix
        let names: Vec<&'static str> =
            params.dense.entries().iter().map(|(n, _)| *n).collect();
        for name in names {
            let len = params
                .dense
                .entries()
                .iter()
                .find(|(n, _)| *n == name)
                .unwrap()
                .1
                .len();
            for i in 0..len {
                let mut plus = params.clone();
                let mut minus = params.clone();
                for (n, t) in plus.dense.entries_mut() {
                    if n == name {
                        t.data_mut()[i] += step;
                    }
                }
                for (n, t) in minus.dense.entries_mut() {
                    if n == name {
                        t.data_mut()[i] -= step;
                    }
                }
                let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * step);
                let a = analytic
                    .dense
                    .entries()
                    .iter()
                    .find(|(n, _)| *n == name)
                    .unwrap()
                    .1
                    .data()[i];
                check(a, numeric, &format!("{name}[{i}]"));
            }
        }
        // every embedding coordinate, including rows the samples never touch
        for row in 0..vocab {
            for j in 0..hp.word_embed_dim {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus.word_embeddings.row_mut(row)[j] += step;
                minus.word_embeddings.row_mut(row)[j] -= step;
                let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * step);
                let a = analytic.embed_rows.get(&row).map_or(0.0, |r| r[j]);
                check(a, numeric, &format!("embedding[{row},{j}]"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 120.0, "gradient check took {secs:.1}s (limit 120s)");
    println!(
        "criterion 1: PASS — full-model finite-difference check, 5 seeds, worst rel err {worst:.2e}, {secs:.1}s"
    );
}

// ---------------------------------------------------------------- criterion 2

/// Laplace noise sample moments match the analytic distribution, and
/// clipping bounds every coordinate.
#[test]
fn criterion_2_noise_statistics_and_clip_bound() {
    let lambda = 0.015;
    let n = 1_000_000usize;
    let mut rng = RngState::new(20_240_101);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n {
        let x = laplace_sample(&mut rng, lambda).unwrap();
        sum += x;
        sumsq += x * x;
    }
    let mean = sum / n as f64;
    let var = sumsq / n as f64 - mean * mean;
    let expected = 2.0 * lambda * lambda;
    assert!(mean.abs() <= 1e-4, "noise mean {mean:.3e}");
    let rel = (var - expected).abs() / expected;
    assert!(rel <= 0.02, "noise variance {var:.6e} vs {expected:.6e}");

    // post-clip bound at the published clip scale
    let hp = HyperParams::desk(10);
    let delta = 0.005;
    let mut g = GradientSet::zeros(&hp);
    let mut grng = RngState::new(2);
    for (_, t) in g.dense.entries_mut() {
        t.fill_with(|| grng.next_symmetric(0.5));
    }
    for r in 0..hp.vocab_size {
        for v in g.embed_row_mut(r) {
            *v = grng.next_symmetric(0.5);
        }
    }
    let clipped = clip(&g, delta).unwrap();
    for (_, t) in clipped.dense.entries() {
        for v in t.data() {
            assert!(v.abs() <= delta);
        }
    }
    for row in clipped.embed_rows.values() {
        for v in row {
            assert!(v.abs() <= delta);
        }
    }
    println!(
        "criterion 2: PASS — 1e6 draws at lambda=0.015: mean {mean:.2e}, var {var:.6e} (analytic {expected:.6e}); all clipped coords within ±{delta}"
    );
}

// ---------------------------------------------------------------- criterion 3

/// The per-upload budget bound and its monotonicity.
#[test]
fn criterion_3_privacy_budget() {
    let cfg = PrivacyConfig::new(0.005, 0.015).unwrap();
    let eps = cfg.budget().unwrap();
    assert!((eps - 2.0 / 3.0).abs() < 1e-12, "budget {eps}");

    let mut prev = -1.0;
    for delta in [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1] {
        let e = PrivacyConfig::new(delta, 0.015).unwrap().budget().unwrap();
        assert!(e > prev, "budget not increasing in delta at {delta}");
        prev = e;
    }
    let mut prev = f64::INFINITY;
    for lambda in [0.001, 0.005, 0.015, 0.03, 0.05, 0.1, 0.5] {
        let e = PrivacyConfig::new(0.005, lambda).unwrap().budget().unwrap();
        assert!(e < prev, "budget not decreasing in lambda at {lambda}");
        prev = e;
    }
    println!("criterion 3: PASS — budget(0.005, 0.015) = {eps:.12} = 2/3; monotone over the grid");
}

// ---------------------------------------------------------------- criterion 4

/// Aggregation equals a direct weighted-mean oracle on every coordinate.
#[test]
fn criterion_4_aggregation_oracle() {
    let hp = HyperParams::desk(12);
    let mut rng = RngState::new(4);
    for case in 0..100 {
        let k = 1 + rng.next_index(6);
        let updates: Vec<GradientSet> = (0..k)
            .map(|_| {
                let mut g = GradientSet::zeros(&hp);
                for (_, t) in g.dense.entries_mut() {
                    t.fill_with(|| rng.next_symmetric(1.0));
                }
                let rows = rng.next_index(5);
                for _ in 0..rows {
                    let r = rng.next_index(hp.vocab_size);
                    for v in g.embed_row_mut(r) {
                        *v = rng.next_symmetric(1.0);
                    }
                }
                g.sample_weight = 1 + rng.next_index(9);
                g
            })
            .collect();
        let agg = aggregate(&updates).unwrap();
        let total: f64 = updates.iter().map(|u| u.sample_weight as f64).sum();

        for (idx, (name, t)) in agg.dense.entries().into_iter().enumerate() {
            for i in 0..t.len() {
                let oracle: f64 = updates
                    .iter()
                    .map(|u| u.sample_weight as f64 * u.dense.entries()[idx].1.data()[i])
                    .sum::<f64>()
                    / total;
                assert!(
                    (t.data()[i] - oracle).abs() <= 1e-12,
                    "case {case} {name}[{i}]"
                );
            }
        }
        let mut rows: Vec<usize> = updates
            .iter()
            .flat_map(|u| u.embed_rows.keys().copied())
            .collect();
        rows.sort_unstable();
        rows.dedup();
        let agg_rows: Vec<usize> = agg.embed_rows.keys().copied().collect();
        assert_eq!(agg_rows, rows, "case {case} sparse row union");
        for &r in &rows {
            for j in 0..hp.word_embed_dim {
                let oracle: f64 = updates
                    .iter()
                    .map(|u| {
                        u.sample_weight as f64 * u.embed_rows.get(&r).map_or(0.0, |v| v[j])
                    })
                    .sum::<f64>()
                    / total;
                assert!((agg.embed_rows[&r][j] - oracle).abs() <= 1e-12);
            }
        }
    }

    // degenerate cases are exact
    let mut g = GradientSet::zeros(&hp);
    for (_, t) in g.dense.entries_mut() {
        t.fill_with(|| rng.next_symmetric(1.0));
    }
    g.sample_weight = 7;
    let single = aggregate(std::slice::from_ref(&g)).unwrap();
    assert_eq!(single.dense, g.dense);

    let mut equal: Vec<GradientSet> = (0..4)
        .map(|_| {
            let mut g = GradientSet::zeros(&hp);
            for (_, t) in g.dense.entries_mut() {
                t.fill_with(|| rng.next_symmetric(1.0));
            }
            g.sample_weight = 5;
            g
        })
        .collect();
    let weighted = aggregate(&equal).unwrap();
    for g in &mut equal {
        g.sample_weight = 1;
    }
    let unweighted = aggregate(&equal).unwrap();
    assert_eq!(weighted.dense, unweighted.dense);
    println!("criterion 4: PASS — 100 random cases match the weighted-mean oracle within 1e-12; degenerate cases exact");
}

// ---------------------------------------------------------------- criterion 5

/// One federated round with one client holding all data and the mechanism
/// off equals one full-batch centralized SGD step.
#[test]
fn criterion_5_fed_central_equivalence() {
    let (catalog, train, _) = desk_dataset();
    let mut hp = desk_hp(&catalog);
    hp.dropout_rate = 0.0;
    hp.client_fraction = 1.0;
    let root = RngState::new(5);
    let init = ModelParams::init(&hp, &root).unwrap();
    let stores = build_client_stores(&train, &catalog, &hp, &root.split(1)).unwrap();
    let samples: Vec<TrainingSample> = stores
        .iter()
        .flat_map(|c| c.samples.iter().cloned())
        .collect();
    let single = vec![ClientStore {
        user_id: "all".into(),
        clicks: Vec::new(),
        samples: samples.clone(),
        rng: root.split(3),
    }];

    let (fed, _) = server_round(
        &init,
        &single,
        &PrivacyConfig::disabled(),
        0,
        &root.split(2),
        &TrainOptions::default(),
    )
    .unwrap();
    let central =
        train_centralized(&init, &samples, 1, samples.len(), &root.split(4)).unwrap();

    let mut worst = 0.0f64;
    for ((name, a), (_, b)) in fed.all_entries().into_iter().zip(central.all_entries()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            let d = (x - y).abs();
            assert!(d <= 1e-9, "{name}: |{x} - {y}| = {d:.3e}");
            worst = worst.max(d);
        }
    }
    println!(
        "criterion 5: PASS — one round (r=1, single client, mechanism off) equals one full-batch step; max |diff| {worst:.2e} over {} samples",
        samples.len()
    );
}

// ---------------------------------------------------------------- criterion 6

/// Ranking metrics match brute-force definitions; an untrained model scores
/// chance-level AUC on held-out data.
#[test]
fn criterion_6_metric_oracles_and_permutation_null() {
    let mut rng = RngState::new(6);
    for case in 0..1000 {
        let n = 5 + rng.next_index(21);
        let (scores, labels) = loop {
            let scores: Vec<f64> = (0..n).map(|_| rng.next_symmetric(1.0)).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.3).collect();
            let pos = labels.iter().filter(|&&l| l).count();
            if pos > 0 && pos < n {
                break (scores, labels);
            }
        };

        // AUC against the O(P*N) pairwise count
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        let a = auc(&scores, &labels).unwrap();
        assert!((a - wins / pairs).abs() <= 1e-12, "case {case} auc");

        // MRR against the explicit rank definition
        let m = mrr(&scores, &labels).unwrap();
        let mut total = 0.0;
        let mut pos = 0.0;
        for i in 0..n {
            if !labels[i] {
                continue;
            }
            pos += 1.0;
            let rank = 1 + (0..n)
                .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                .count();
            total += 1.0 / rank as f64;
        }
        assert!((m - total / pos).abs() <= 1e-12, "case {case} mrr");

        // nDCG against the direct formula
        for k in [5usize, 10] {
            let got = ndcg_at_k(&scores, &labels, k).unwrap().unwrap();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b))
            });
            let dcg: f64 = order
                .iter()
                .take(k)
                .enumerate()
                .filter(|(_, &i)| labels[i])
                .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
                .sum();
            let p = labels.iter().filter(|&&l| l).count();
            let idcg: f64 = (0..p.min(k)).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
            assert!((got - dcg / idcg).abs() <= 1e-12, "case {case} ndcg@{k}");
        }
    }

    // permutation null: untrained random models score chance AUC
    let (catalog, _, test) = desk_dataset();
    let hp = desk_hp(&catalog);
    // an untrained model's scores are random features uncorrelated with the
    // labels in expectation; individual inits fluctuate (sd ~0.015 across
    // seeds), so the null check applies to the 5-seed mean
    let mut aucs = Vec::new();
    for seed in 101..=105u64 {
        let params = ModelParams::init(&hp, &RngState::new(seed)).unwrap();
        let report = evaluate(&params, &test, &catalog).unwrap();
        assert!(
            (report.auc - 0.5).abs() <= 0.06,
            "untrained AUC {} at seed {seed} is implausibly far from chance",
            report.auc
        );
        aucs.push(report.auc);
    }
    let mean_auc = aucs.iter().sum::<f64>() / aucs.len() as f64;
    assert!(
        (mean_auc - 0.5).abs() <= 0.02,
        "mean untrained AUC {mean_auc:.4} outside 0.5±0.02"
    );
    println!(
        "criterion 6: PASS — 1000 impressions match brute-force metrics within 1e-12; untrained AUC mean {mean_auc:.4} over 5 seeds within 0.5±0.02"
    );
}

// ---------------------------------------------------------------- criterion 7

/// Federated training lifts held-out AUC on the default synthetic dataset.
#[test]
fn criterion_7_end_to_end_learning() {
    let start = Instant::now();
    let (catalog, train, test) = desk_dataset();
    let mut hp = desk_hp(&catalog);
    hp.client_fraction = 0.05;
    let root = RngState::new(1);
    let init = ModelParams::init(&hp, &root).unwrap();
    let initial_auc = evaluate(&init, &test, &catalog).unwrap().auc;

    let (final_auc, _) = federated_auc(
        &hp,
        &catalog,
        &train,
        &test,
        0.0,
        f64::INFINITY,
        300,
        1,
    );
    let lift = final_auc - initial_auc;
    let secs = start.elapsed().as_secs_f64();
    assert!(
        lift >= 0.10,
        "AUC lift {lift:.4} ({initial_auc:.4} -> {final_auc:.4}) below 0.10"
    );
    assert!(secs < 600.0, "end-to-end run took {secs:.1}s (limit 600s)");
    println!(
        "criterion 7: PASS — 300 rounds at r=0.05, lambda=0: AUC {initial_auc:.4} -> {final_auc:.4} (lift {lift:.4}), {secs:.1}s"
    );
}

// ---------------------------------------------------------------- criterion 8

/// Qualitative orderings: noise degrades AUC monotonically (up to one
/// standard error), centralized training is an upper bound, and training
/// loss decreases for each client fraction.
#[test]
fn criterion_8_qualitative_orderings() {
    let (catalog, train, test) = desk_dataset();
    let seeds: Vec<u64> = (1..=5).collect();
    let lambdas = [0.0, 0.015, 0.05];
    let delta = 0.02;

    // (a) AUC under increasing noise, 5 seeds each
    let mut hp = desk_hp(&catalog);
    hp.client_fraction = 0.02;
    hp.learning_rate = 1.0;
    let mut by_lambda: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (li, &lambda) in lambdas.iter().enumerate() {
        for &seed in &seeds {
            let (a, _) =
                federated_auc(&hp, &catalog, &train, &test, lambda, delta, 800, seed);
            by_lambda.entry(li).or_default().push(a);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let se_diff = |a: &[f64], b: &[f64]| {
        let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let m = mean(&diffs);
        let var = diffs.iter().map(|d| (d - m) * (d - m)).sum::<f64>()
            / (diffs.len() - 1) as f64;
        (var / diffs.len() as f64).sqrt()
    };
    let m0 = mean(&by_lambda[&0]);
    let m1 = mean(&by_lambda[&1]);
    let m2 = mean(&by_lambda[&2]);
    let se01 = se_diff(&by_lambda[&0], &by_lambda[&1]);
    let se12 = se_diff(&by_lambda[&1], &by_lambda[&2]);
    assert!(
        m0 >= m1 - se01,
        "AUC(lambda=0) {m0:.4} < AUC(lambda=0.015) {m1:.4} - SE {se01:.4}"
    );
    assert!(
        m1 >= m2 - se12,
        "AUC(lambda=0.015) {m1:.4} < AUC(lambda=0.05) {m2:.4} - SE {se12:.4}"
    );

    // (b) centralized upper bound vs the private federated runs
    let mut central_aucs = Vec::new();
    for &seed in &seeds {
        let root = RngState::new(seed);
        let init = ModelParams::init(&hp, &root).unwrap();
        let stores = build_client_stores(&train, &catalog, &hp, &root.split(1)).unwrap();
        let samples: Vec<TrainingSample> = stores
            .iter()
            .flat_map(|c| c.samples.iter().cloned())
            .collect();
        let mut chp = hp.clone();
        chp.learning_rate = 0.5;
        let mut params = init.clone();
        params.hp = chp;
        let trained =
            train_centralized(&params, &samples, 10, 32, &root.split(2)).unwrap();
        central_aucs.push(evaluate(&trained, &test, &catalog).unwrap().auc);
    }
    let mc = mean(&central_aucs);
    assert!(
        mc >= m1 - 0.01,
        "centralized AUC {mc:.4} below federated(lambda=0.015) {m1:.4} - 0.01"
    );

    // (c) 20-round moving-average loss decreases for each client fraction
    let mut tails = Vec::new();
    for &fraction in &[0.02, 0.05, 0.1] {
        let mut fhp = desk_hp(&catalog);
        fhp.client_fraction = fraction;
        fhp.learning_rate = 1.0;
        for &seed in &seeds {
            let (_, losses) =
                federated_auc(&fhp, &catalog, &train, &test, 0.015, delta, 300, seed);
            let ma = |end: usize| -> f64 {
                let window = &losses[end - 20..end];
                window.iter().sum::<f64>() / 20.0
            };
            let early = ma(20);
            let late = ma(300);
            assert!(
                late < early,
                "r={fraction} seed {seed}: moving-avg loss {late:.4} at round 300 not below {early:.4} at round 20"
            );
            tails.push(late);
        }
    }

    println!(
        "criterion 8: PASS — (a) mean AUC lambda 0/0.015/0.05 = {m0:.4}/{m1:.4}/{m2:.4} (SE {se01:.4}/{se12:.4}); (b) centralized {mc:.4} >= {m1:.4} - 0.01; (c) loss falls by round 300 for r in {{0.02,0.05,0.1}}"
    );
}

// ---------------------------------------------------------------- criterion 9

/// Training is byte-reproducible across reruns and worker counts.
#[test]
fn criterion_9_byte_identical_outputs() {
    let bin = env!("CARGO_BIN_EXE_fednewsrec");
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = |args: &[&str]| {
        let out = std::process::Command::new(bin).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "command {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };

    // generation reruns are byte-identical
    run(&["gen-synth", "--seed", "9", "--out", data.to_str().unwrap()]);
    let first: Vec<Vec<u8>> = ["news.tsv", "train.tsv", "test.tsv"]
        .iter()
        .map(|f| std::fs::read(data.join(f)).unwrap())
        .collect();
    run(&[
        "gen-synth",
        "--seed",
        "9",
        "--out",
        data.to_str().unwrap(),
        "--force",
        "--workers",
        "4",
    ]);
    for (i, f) in ["news.tsv", "train.tsv", "test.tsv"].iter().enumerate() {
        assert_eq!(
            std::fs::read(data.join(f)).unwrap(),
            first[i],
            "{f} differs between reruns"
        );
    }

    // training reruns with different worker counts are byte-identical
    let news = data.join("news.tsv");
    let train = data.join("train.tsv");
    let test = data.join("test.tsv");
    let mut csvs = Vec::new();
    for workers in ["1", "3"] {
        for rerun in 0..2 {
            let metrics = dir.path().join(format!("m_{workers}_{rerun}.csv"));
            run(&[
                "train",
                "--news",
                news.to_str().unwrap(),
                "--train",
                train.to_str().unwrap(),
                "--test",
                test.to_str().unwrap(),
                "--rounds",
                "30",
                "--seed",
                "11",
                "--fraction",
                "0.05",
                "--lambda",
                "0.015",
                "--delta",
                "0.02",
                "--eval-every",
                "10",
                "--workers",
                workers,
                "--metrics-out",
                metrics.to_str().unwrap(),
            ]);
            csvs.push(std::fs::read(&metrics).unwrap());
        }
    }
    for other in &csvs[1..] {
        assert_eq!(&csvs[0], other, "metrics CSVs differ across reruns/workers");
    }

    // sanity: a different seed produces a different CSV
    let metrics = dir.path().join("m_other_seed.csv");
    run(&[
        "train",
        "--news",
        news.to_str().unwrap(),
        "--train",
        train.to_str().unwrap(),
        "--test",
        test.to_str().unwrap(),
        "--rounds",
        "30",
        "--seed",
        "12",
        "--fraction",
        "0.05",
        "--lambda",
        "0.015",
        "--delta",
        "0.02",
        "--eval-every",
        "10",
        "--metrics-out",
        metrics.to_str().unwrap(),
    ]);
    assert_ne!(
        csvs[0],
        std::fs::read(&metrics).unwrap(),
        "different seeds produced identical CSVs"
    );
    println!("criterion 9: PASS — generation and training outputs byte-identical across reruns and worker counts 1/3");
}
