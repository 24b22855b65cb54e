//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion; exits non-zero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=1,4,7` restricts the run to the listed criteria.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use contramatch::augment::{apply, self_ground_truth, AugKind, AugSpec, AugmentedView};
use contramatch::dataset::{generate, Dataset, Split};
use contramatch::delaunay::triangulate;
use contramatch::encoder::{EncoderDims, EncoderParams};
use contramatch::eval::{evaluate, evaluate_with, random_match, spectral_match, SpectralConfig};
use contramatch::loss::{LossConfig, MatchingLossKind};
use contramatch::matching::{assignment_score, hungarian, sinkhorn, MatcherConfig};
use contramatch::model::Model;
use contramatch::pool::{bias_update, is_excluded, AugPairEntry, BiasConfig, Pool};
use contramatch::train::{train, view_pair_loss, TrainConfig, TrainLog};
use contramatch::{seeded_rng, Graph, SamplerKind, Setting, SyntheticConfig, Tape};
use itertools::Itertools;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_graph(rng: &mut impl Rng, n: usize, f: usize) -> Graph {
    loop {
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
        if let Ok(adj) = triangulate(&pts) {
            let x = Array2::from_shape_fn((n, f), |_| rng.random_range(-1.0..1.0));
            return Graph::new(x, adj, Some(pts)).expect("valid random graph");
        }
    }
}

fn random_kind_pair(rng: &mut impl Rng) -> (AugKind, AugKind) {
    loop {
        let a = AugKind::ALL[rng.random_range(0..AugKind::ALL.len())];
        let b = AugKind::ALL[rng.random_range(0..AugKind::ALL.len())];
        if !is_excluded(a, b) {
            return (a, b);
        }
    }
}

// ---------------------------------------------------------------- 1

fn pair_loss_value(model: &Model, a: &AugmentedView, b: &AugmentedView, loss: &LossConfig) -> f64 {
    let tape = Tape::new();
    let bound = model.bind(&tape, false);
    let corr = self_ground_truth(a, b);
    let out = view_pair_loss(&tape, &bound, &a.graph, &b.graph, &corr, &model.matcher, loss).unwrap();
    tape.scalar(out.total)
}

fn criterion_1() -> Outcome {
    // Richardson-extrapolated central differences
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for cfg_seed in 0..100u64 {
        let mut rng = seeded_rng(cfg_seed, &[1]);
        let f = rng.random_range(2..=4);
        let dims = EncoderDims {
            input: f,
            hidden: rng.random_range(3..=6),
            projection: rng.random_range(2..=4),
            layers: 2,
        };
        // a fixed number of normalization rounds keeps the loss smooth in
        // the parameters; below tau = 0.1 rounding noise in the loss swamps
        // any difference step small enough to avoid ReLU kinks
        let matcher = MatcherConfig {
            tau: rng.random_range(0.1..=1.0),
            eps: 0.0,
            ..Default::default()
        };
        let loss = LossConfig {
            matching: if cfg_seed % 2 == 0 {
                MatchingLossKind::Permutation
            } else {
                MatchingLossKind::Hamming
            },
            ..Default::default()
        };
        // zero-initialized biases put featureless nodes exactly on a ReLU
        // kink and at the zero vector, where the cosine has no derivative
        let mut model: Model = Model::init(cfg_seed, dims, matcher);
        for t in model.tensors_mut() {
            t.mapv_inplace(|x| x + 0.1 * rng.sample::<f64, _>(StandardNormal));
        }
        let (a, b) = loop {
            let n = rng.random_range(3..=8);
            let g = random_graph(&mut rng, n, f);
            let (ka, kb) = random_kind_pair(&mut rng);
            let a = apply(&AugSpec::sample(ka, &mut rng), &g, &mut rng).unwrap();
            let b = apply(&AugSpec::sample(kb, &mut rng), &g, &mut rng).unwrap();
            let small = a.graph.num_nodes() <= 8 && b.graph.num_nodes() <= 8;
            if small && !self_ground_truth(&a, &b).is_empty() {
                break (a, b);
            }
        };
        let tape = Tape::new();
        let bound = model.bind(&tape, true);
        let corr = self_ground_truth(&a, &b);
        let out = view_pair_loss(&tape, &bound, &a.graph, &b.graph, &corr, &model.matcher, &loss).unwrap();
        let grads = tape.backward(out.total).unwrap();
        let analytic: Vec<Array2<f64>> = bound.vars().iter().map(|&v| grads.wrt(v)).collect();
        for (k, g) in analytic.iter().enumerate() {
            for (idx, &an) in g.indexed_iter() {
                let central = |h: f64| {
                    let mut plus = model.clone();
                    plus.tensors_mut()[k][idx] += h;
                    let mut minus = model.clone();
                    minus.tensors_mut()[k][idx] -= h;
                    (pair_loss_value(&plus, &a, &b, &loss) - pair_loss_value(&minus, &a, &b, &loss)) / (2.0 * h)
                };
                let numeric = (4.0 * central(h / 2.0) - central(h)) / 3.0;
                let rel = (an - numeric).abs() / an.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    check(
        worst < 1e-4,
        format!("100 configurations, {checked} parameters, max relative error {worst:.2e} (< 1e-4)"),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let cfg = MatcherConfig {
        tau: 1.0,
        max_iters: 200,
        eps: 1e-6,
        ..Default::default()
    };
    let mut rng = seeded_rng(2, &[]);
    let (mut worst_sum, mut worst_shift, mut max_iters) = (0.0f64, 0.0f64, 0usize);
    let mut entries_ok = true;
    for (r, c) in [(10, 10), (7, 10)] {
        for _ in 0..1000 {
            let m = Array2::from_shape_fn((r, c), |_| rng.sample::<f64, _>(StandardNormal));
            let tape = Tape::new();
            let mv = tape.constant(m.clone());
            let out = sinkhorn(&tape, mv, &cfg).unwrap();
            max_iters = max_iters.max(out.iterations);
            let p = tape.value(out.padded).clone();
            for k in 0..p.nrows() {
                worst_sum = worst_sum.max((p.row(k).sum() - 1.0).abs());
                worst_sum = worst_sum.max((p.column(k).sum() - 1.0).abs());
            }
            entries_ok &= p.iter().all(|&x| x > 0.0 && x < 1.0);
            let shift = rng.random_range(-5.0..5.0);
            let t2 = Tape::new();
            let mv2 = t2.constant(&m + shift);
            let shifted = sinkhorn(&t2, mv2, &cfg).unwrap();
            let d = (&*tape.value(out.soft) - &*t2.value(shifted.soft))
                .iter()
                .fold(0.0f64, |a, x| a.max(x.abs()));
            worst_shift = worst_shift.max(d);
        }
    }
    check(
        worst_sum < 1e-6 && worst_shift < 1e-9 && max_iters <= 200 && entries_ok,
        format!(
            "2000 inputs (unit-variance logits), max sum deviation {worst_sum:.2e} in <= {max_iters} rounds, max shift change {worst_shift:.2e}"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let mut rng = seeded_rng(3, &[]);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=7);
        let s = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
        let (best_perm, best) = (0..n)
            .permutations(n)
            .map(|p| {
                let score: f64 = p.iter().enumerate().map(|(i, &j)| s[[i, j]]).sum();
                (p, score)
            })
            .fold(
                (Vec::new(), f64::NEG_INFINITY),
                |acc, x| if x.1 > acc.1 { x } else { acc },
            );
        let a = hungarian(&s);
        let expected: Vec<(usize, usize)> = best_perm.into_iter().enumerate().collect();
        if a != expected || (assignment_score(&s, &a) - best).abs() > 1e-12 {
            mismatches += 1;
        }
    }
    check(
        mismatches == 0,
        format!("1000 matrices, n <= 7, {mismatches} disagreements with exhaustive search"),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let mut rng = seeded_rng(4, &[]);
    let mut violations = 0usize;
    for _ in 0..100_000 {
        let alpha = rng.random_range(0.01..6.0);
        let lambda = rng.random_range(0.0..1.0);
        let ceiling = f64::exp(alpha);
        let mut w = ceiling;
        for _ in 0..rng.random_range(1..40) {
            w = bias_update(w, rng.random_range(0.0..=1.0), lambda, alpha);
            if !(1.0..=ceiling).contains(&w) {
                violations += 1;
            }
        }
    }
    // the same bound through the pool's batch update
    let cfg = BiasConfig::default();
    let mut pool = Pool::from_entries(
        (0..64)
            .map(|_| AugPairEntry::new(AugSpec::Identity, AugSpec::EdgeRemoval { p: 0.5 }, cfg.alpha))
            .collect(),
    );
    for _ in 0..500 {
        for _ in 0..16 {
            let i = rng.random_range(0..64);
            pool.record_score(i, rng.random_range(0.0..=1.0)).unwrap();
        }
        pool.end_batch_update(&cfg);
        violations += pool
            .entries
            .iter()
            .filter(|e| !(1.0..=cfg.alpha.exp()).contains(&e.weight))
            .count();
    }

    let mut fixed_point_ok = true;
    for _ in 0..10_000 {
        let alpha: f64 = rng.random_range(0.01..6.0);
        let lambda = rng.random_range(0.0..1.0);
        let mut w = alpha.exp();
        for _ in 0..20 {
            w = bias_update(w, 0.0, lambda, alpha);
        }
        fixed_point_ok &= w == alpha.exp();
    }

    let mut geometric_ok = true;
    for _ in 0..10_000 {
        let alpha = rng.random_range(0.01..6.0);
        let lambda = rng.random_range(0.0..1.0);
        let phi = rng.random_range(0.0..=1.0);
        let target = f64::exp(alpha * (1.0 - phi));
        let w0 = rng.random_range(1.0..=alpha.exp());
        let mut w = w0;
        for t in 1..=60 {
            w = bias_update(w, phi, lambda, alpha);
            let bound = lambda.powi(t) * (w0 - target).abs();
            geometric_ok &= (w - target).abs() <= bound + 1e-12 * target;
        }
    }

    let single = bias_update(3f64.exp(), 1.0, 0.8, 3.0);
    let single_ok = (single - 16.2684).abs() < 1e-4;
    check(
        violations == 0 && fixed_point_ok && geometric_ok && single_ok,
        format!(
            "bound violations {violations} over 1e5 sequences, fixed point exact: {fixed_point_ok}, geometric: {geometric_ok}, single step {single:.4}"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let mut rng = seeded_rng(5, &[]);
    let (mut node_err, mut readout_err) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let n = rng.random_range(3..=20);
        let f = rng.random_range(1..=8);
        let g = random_graph(&mut rng, n, f);
        let params: EncoderParams<f64> = EncoderParams::init(i, EncoderDims::new(f));
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let (h, hg) = params.embed(&g).unwrap();
        let (hp, hgp) = params.embed(&g.permuted(&perm)).unwrap();
        for (v, &pv) in perm.iter().enumerate() {
            let d = (&h.row(v) - &hp.row(pv)).iter().fold(0.0f64, |a, x| a.max(x.abs()));
            node_err = node_err.max(d);
        }
        readout_err = readout_err.max((&hg - &hgp).iter().fold(0.0f64, |a, x| a.max(x.abs())));
    }
    check(
        node_err < 1e-9 && readout_err < 1e-9,
        format!("100 graphs, node error {node_err:.2e}, readout error {readout_err:.2e}"),
    )
}

// ---------------------------------------------------------------- 6

/// Original index of each view node, rebuilt from the augmentation trace
/// alone: survivors in ascending order, then the inserted dummies.
fn origins_from_trace(n: usize, view: &AugmentedView) -> Vec<Option<usize>> {
    let removed: BTreeSet<usize> = view.trace.removed.iter().copied().collect();
    (0..n)
        .filter(|v| !removed.contains(v))
        .map(Some)
        .chain(std::iter::repeat_n(None, view.trace.inserted))
        .collect()
}

fn criterion_6() -> Outcome {
    let mut rng = seeded_rng(6, &[]);
    let graphs: Vec<Graph> = (0..40)
        .map(|_| {
            let n = rng.random_range(3..=14);
            random_graph(&mut rng, n, 4)
        })
        .collect();
    let mut failures = Vec::new();
    let mut applications = 0usize;
    for &ka in &AugKind::ALL {
        for &kb in &AugKind::ALL {
            for _ in 0..1000 {
                let g = &graphs[rng.random_range(0..graphs.len())];
                let n = g.num_nodes();
                let a = apply(&AugSpec::sample(ka, &mut rng), g, &mut rng).unwrap();
                let b = apply(&AugSpec::sample(kb, &mut rng), g, &mut rng).unwrap();
                applications += 2;
                let (oa, ob) = (origins_from_trace(n, &a), origins_from_trace(n, &b));
                let gt = self_ground_truth(&a, &b);
                let mut ok = oa.len() == a.graph.num_nodes() && ob.len() == b.graph.num_nodes();
                ok &= oa == a.origin_of && ob == b.origin_of;
                ok &= (gt.rows, gt.cols) == (a.graph.num_nodes(), b.graph.num_nodes());
                let rows: BTreeSet<_> = gt.pairs.iter().map(|p| p.0).collect();
                let cols: BTreeSet<_> = gt.pairs.iter().map(|p| p.1).collect();
                ok &= rows.len() == gt.pairs.len() && cols.len() == gt.pairs.len();
                let by_origin: HashMap<usize, usize> =
                    ob.iter().enumerate().filter_map(|(j, o)| o.map(|o| (o, j))).collect();
                let mut expected: Vec<(usize, usize)> = oa
                    .iter()
                    .enumerate()
                    .filter_map(|(i, o)| o.and_then(|o| by_origin.get(&o).map(|&j| (i, j))))
                    .collect();
                expected.sort_unstable();
                ok &= gt.pairs == expected;
                let shared = oa.iter().flatten().filter(|v| ob.contains(&Some(**v))).count();
                ok &= gt.pairs.len() == shared;
                if !ok && failures.len() < 3 {
                    failures.push(format!("{ka:?}/{kb:?}"));
                }
            }
        }
    }
    check(
        failures.is_empty(),
        format!("81 kind pairs x 1000 draws ({applications} applications), failures: {failures:?}"),
    )
}

// ---------------------------------------------------------------- 7, 8, 9

struct SeedRun {
    dataset: Dataset,
    bias: Model,
    bias_log: TrainLog,
    uniform_log: TrainLog,
}

fn standard_config(seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        n_classes: 20,
        n_inliers: 10,
        feature_dim: 16,
        coord_noise_sigma: 0.05,
        train_graphs_per_class: 50,
        pairs_per_class: 20,
        seed,
        ..Default::default()
    }
}

fn seed_runs() -> &'static Vec<SeedRun> {
    static RUNS: OnceLock<Vec<SeedRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        SEEDS
            .iter()
            .map(|&seed| {
                let dataset = generate(&standard_config(seed)).unwrap();
                let graphs = dataset.train_graphs();
                let val = dataset.pairs(Split::Val);
                let mut cfg = TrainConfig {
                    seed,
                    ..Default::default()
                };
                let bias = train(&graphs, &val, &cfg).unwrap();
                cfg.bias.sampler = SamplerKind::Uniform;
                let uniform = train(&graphs, &val, &cfg).unwrap();
                SeedRun {
                    dataset,
                    bias: bias.model,
                    bias_log: bias.log,
                    uniform_log: uniform.log,
                }
            })
            .collect()
    })
}

fn criterion_7() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (run, seed) in seed_runs().iter().zip(SEEDS) {
        let test = run.dataset.pairs(Split::Test);
        let trained = evaluate(&run.bias, &test, Setting::Intersection).unwrap().mean;
        let untrained_model: Model = Model::init(seed, run.bias.encoder.dims, MatcherConfig::default());
        let untrained = evaluate(&untrained_model, &test, Setting::Intersection).unwrap().mean;
        ok &= trained - untrained >= 0.15 && trained - 0.1 >= 0.15;
        parts.push(format!("seed {seed}: {trained:.3} vs untrained {untrained:.3}"));
    }
    check(ok, format!("Intersection F1 (floor 0.100); {}", parts.join("; ")))
}

fn criterion_8() -> Outcome {
    let mut soft_ok = true;
    let (mut sum_b, mut sum_u) = (0.0, 0.0);
    let mut parts = Vec::new();
    for (run, seed) in seed_runs().iter().zip(SEEDS) {
        let (b, u) = (run.bias_log.best_val_f1, run.uniform_log.best_val_f1);
        soft_ok &= b >= u - 0.005;
        sum_b += b;
        sum_u += u;
        parts.push(format!("seed {seed}: {b:.3}/{u:.3}"));
    }
    let strict = sum_b > sum_u;
    if !strict {
        println!(
            "    criterion 8 diagnostics: BiAS mean {:.4} not above Uniform mean {:.4}",
            sum_b / 5.0,
            sum_u / 5.0
        );
        for (run, seed) in seed_runs().iter().zip(SEEDS) {
            let trace = |log: &TrainLog| log.epochs.iter().map(|e| format!("{:.3}", e.pool_entropy)).join(" ");
            println!(
                "    seed {seed} BiAS pool entropy by epoch:    {}",
                trace(&run.bias_log)
            );
            println!(
                "    seed {seed} Uniform pool entropy by epoch: {}",
                trace(&run.uniform_log)
            );
        }
    }
    check(
        soft_ok,
        format!(
            "validation F1 BiAS/Uniform {}; mean {:.4}/{:.4}, strictly greater: {strict}",
            parts.join(", "),
            sum_b / 5.0,
            sum_u / 5.0
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (run, seed) in seed_runs().iter().zip(SEEDS) {
        let test = run.dataset.pairs(Split::Test);
        let inter = evaluate(&run.bias, &test, Setting::Intersection).unwrap().mean;
        let unfilt = evaluate(&run.bias, &test, Setting::Unfiltered).unwrap().mean;
        ok &= unfilt <= inter;
        parts.push(format!("seed {seed}: {unfilt:.3} <= {inter:.3}"));
    }
    check(ok, format!("Unfiltered vs Intersection F1; {}", parts.join("; ")))
}

// ---------------------------------------------------------------- 10

fn cli_pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let config = "seed = 11
[data]
n_classes = 4
train_graphs_per_class = 10
pairs_per_class = 5
val_pairs_per_class = 3
[train]
max_epochs = 4
[train.bias]
pool_size = 64
";
    fs::write(dir.join("run.toml"), config).map_err(|e| e.to_string())?;
    let steps: [&[&str]; 4] = [
        &["gen", "--config", "run.toml", "--out", "data.json"],
        &[
            "train",
            "--data",
            "data.json",
            "--config",
            "run.toml",
            "--out",
            "model.json",
            "--log",
            "log.csv",
        ],
        &[
            "eval",
            "--data",
            "data.json",
            "--model",
            "model.json",
            "--setting",
            "intsec",
            "--out",
            "intsec.csv",
        ],
        &[
            "eval",
            "--data",
            "data.json",
            "--model",
            "model.json",
            "--setting",
            "unfilt",
            "--out",
            "unfilt.csv",
        ],
    ];
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_contramatch"))
            .current_dir(dir)
            .env("RUST_LOG", "warn")
            .arg("--threads")
            .arg("1")
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    ["log.csv", "model.pool.csv", "intsec.csv", "unfilt.csv"]
        .iter()
        .map(|f| {
            fs::read(dir.join(f))
                .map(|b| (f.to_string(), b))
                .map_err(|e| e.to_string())
        })
        .collect()
}

fn criterion_10() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = cli_pipeline(a.path())?;
    let second = cli_pipeline(b.path())?;
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        differing.is_empty(),
        format!(
            "two serial gen+train+eval runs, {} CSV files compared, differing: {differing:?}",
            first.len()
        ),
    )
}

// ---------------------------------------------------------------- 11

fn criterion_11() -> Outcome {
    let clean = SyntheticConfig {
        n_classes: 10,
        n_outliers_source: 0,
        n_outliers_target: 0,
        coord_noise_sigma: 0.0,
        feature_noise_sigma: 0.0,
        pairs_per_class: 5,
        train_graphs_per_class: 0,
        seed: 11,
        ..Default::default()
    };
    let cfg = SpectralConfig::default();
    let self_pairs = generate(&clean).unwrap().pairs(Split::Test);
    let clean_report = evaluate_with(&self_pairs, Setting::Intersection, "sm", |p| {
        spectral_match(p, Setting::Intersection, &cfg)
    })
    .unwrap();
    let all_perfect = clean_report.pairs.iter().all(|p| p.f1 == 1.0);

    let standard = &seed_runs()[0].dataset;
    let test = standard.pairs(Split::Test);
    let sm = evaluate_with(&test, Setting::Intersection, "sm", |p| {
        spectral_match(p, Setting::Intersection, &cfg)
    })
    .unwrap()
    .mean;
    let random = evaluate_with(&test, Setting::Intersection, "random", |p| {
        random_match(p, Setting::Intersection, 0)
    })
    .unwrap()
    .mean;
    check(
        all_perfect && sm > random.max(0.1),
        format!(
            "{} clean self-pairs all F1 = 1: {all_perfect}; standard set SM {sm:.3} vs random {random:.3}",
            self_pairs.len()
        ),
    )
}

fn main() {
    let only: Option<BTreeSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [Criterion; 11] = [
        (1, "gradient correctness", criterion_1),
        (2, "sinkhorn property", criterion_2),
        (3, "hungarian oracle", criterion_3),
        (4, "bias algebra", criterion_4),
        (5, "encoder symmetry", criterion_5),
        (6, "self-supervision correctness", criterion_6),
        (7, "learning signal", criterion_7),
        (8, "bias vs uniform", criterion_8),
        (9, "outlier ordering", criterion_9),
        (10, "determinism", criterion_10),
        (11, "baseline sanity", criterion_11),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {id:>2} {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id:>2} {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
