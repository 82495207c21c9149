//! Acceptance gate: prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fist_core::cluster::{partition, sigma_analysis};
use fist_core::explore::{run, ObjectiveSpec, Strategy, TuneConfig};
use fist_core::harness::{bench, render_runlog, synth_space, Seeds, SuiteConfig, SyntheticSpec, TableEvaluator};
use fist_core::importance::{feature_importance, importance_mask, MaskRule};
use fist_core::metrics::{adrs, dominates, pareto_front};
use fist_core::model::{fit_gbrt, fit_tree, BinaryMatrix, GbrtParams, Node, TreeParams};
use fist_core::space::{Dataset, FeatureSpec, ParameterSpace, Sample, Sense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = f();
    let el = t.elapsed();
    let in_time = el <= limit;
    let pass = out.pass && in_time;
    println!(
        "[{}] {} {}: {} ({:.2?}{})",
        if pass { "PASS" } else { "FAIL" },
        id,
        name,
        out.detail,
        el,
        if in_time { String::new() } else { format!(", limit {:?}", limit) }
    );
    pass
}

fn space(counts: &[usize]) -> ParameterSpace {
    ParameterSpace::new(
        counts
            .iter()
            .enumerate()
            .map(|(q, &n)| FeatureSpec::new(format!("f{}", q + 1), (0..n).map(|o| o.to_string())))
            .collect(),
    )
    .unwrap()
}

fn worked_example() -> Outcome {
    let sp = space(&[2, 2]);
    let mut d = Dataset::new(sp, vec!["y".into()]).unwrap();
    for (s, y) in [([0, 0], 1.0), ([0, 1], 2.0), ([1, 0], 3.0), ([1, 1], 4.0)] {
        d.insert(Sample::new(s), vec![y]).unwrap();
    }
    let imp = feature_importance(&d, "y").unwrap();
    let mask = importance_mask(&imp, MaskRule::Median).unwrap();
    Outcome {
        pass: imp.values() == [2.0, 0.5] && mask.bits() == [true, false],
        detail: format!("I={:?} mask={:?}", imp.values(), mask.bits()),
    }
}

fn importance_recovery() -> Outcome {
    let spec = SyntheticSpec { gamma: 0.6, beta: 0.0, epsilon: 0.0, ..Default::default() };
    let d = synth_space(&spec).unwrap();
    let imp = feature_importance(&d, "obj1").unwrap();
    let v = imp.values();
    let inversions =
        (0..v.len()).flat_map(|q| (q + 1..v.len()).map(move |r| (q, r))).filter(|&(q, r)| v[q] <= v[r]).count();
    Outcome {
        pass: v.len() == 9 && d.len() == 1728 && inversions == 0,
        detail: format!("c={} |S|={} inversions={}", v.len(), d.len(), inversions),
    }
}

fn sigma_ordering() -> Outcome {
    let spec = SyntheticSpec { gamma: 0.5, beta: 0.05, epsilon: 0.0, ..Default::default() };
    let truth = synth_space(&spec).unwrap();
    let prior = synth_space(&spec.sibling()).unwrap();
    let learned = importance_mask(&feature_importance(&prior, "obj1").unwrap(), MaskRule::Median).unwrap();
    let true_mask = importance_mask(&feature_importance(&truth, "obj1").unwrap(), MaskRule::Median).unwrap();
    let sp = truth.space().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let l = sigma_analysis(&truth, &partition(&sp, &learned).unwrap(), "obj1", 10, 10_000, &mut rng).unwrap();
    let t = sigma_analysis(&truth, &partition(&sp, &true_mask).unwrap(), "obj1", 10, 10_000, &mut rng).unwrap();
    let in_ok = l.sigma_in_cluster <= 0.6 * l.sigma_random;
    let cross_ok = (l.sigma_cross_cluster - l.sigma_random).abs() <= 0.15 * l.sigma_random;
    let match_ok = (l.sigma_in_cluster - t.sigma_in_cluster).abs() <= 0.25 * t.sigma_in_cluster;
    Outcome {
        pass: in_ok && cross_ok && match_ok,
        detail: format!(
            "random={:.4} in={:.4} cross={:.4} true-mask in={:.4}",
            l.sigma_random, l.sigma_in_cluster, l.sigma_cross_cluster, t.sigma_in_cluster
        ),
    }
}

fn suite(strategies: Vec<Strategy>, objectives: usize) -> SuiteConfig {
    SuiteConfig {
        strategies,
        budgets: vec![60],
        seeds: Seeds::Range { start: 0, count: 100 },
        synthetic: SyntheticSpec { objectives, ..Default::default() },
        batch: 1,
        initial: None,
        theta: None,
        target_ranks: vec![1, 10],
        threads: None,
    }
}

fn end_to_end_single() -> Outcome {
    let s = suite(vec![Strategy::Fist, Strategy::Random, Strategy::BaselineRf], 1);
    let r = bench(&s).unwrap();
    let f = r.mean_best_rank(Strategy::Fist).unwrap();
    let rnd = r.mean_best_rank(Strategy::Random).unwrap();
    let rf = r.mean_best_rank(Strategy::BaselineRf).unwrap();
    Outcome {
        pass: r.failures.is_empty() && r.rows.len() == 300 && f <= 0.6 * rnd && f <= 0.9 * rf,
        detail: format!(
            "mean best rank fist={:.2} random={:.2} baseline_rf={:.2} (ratios {:.3}, {:.3})",
            f,
            rnd,
            rf,
            f / rnd,
            f / rf
        ),
    }
}

fn end_to_end_multi() -> Outcome {
    let s = suite(vec![Strategy::Fist, Strategy::Random], 2);
    let r = bench(&s).unwrap();
    let f = r.mean_adrs(Strategy::Fist).unwrap();
    let rnd = r.mean_adrs(Strategy::Random).unwrap();
    Outcome {
        pass: r.failures.is_empty() && r.rows.len() == 200 && f <= 0.8 * rnd,
        detail: format!("mean ADRS fist={:.4} random={:.4} (ratio {:.3})", f, rnd, f / rnd),
    }
}

/// Best-SSE stump over all binary columns; ties to the lowest column.
fn stump_oracle(x: &[Vec<f64>], y: &[f64]) -> Option<(usize, f64, f64, f64)> {
    let sse = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|a| (a - m).powi(2)).sum::<f64>(), m)
    };
    let mut best: Option<(usize, f64, f64, f64)> = None;
    for c in 0..x[0].len() {
        let (l, r): (Vec<f64>, Vec<f64>) = {
            let side = |bit: f64| x.iter().zip(y).filter(|(row, _)| row[c] == bit).map(|(_, &v)| v).collect::<Vec<_>>();
            (side(0.0), side(1.0))
        };
        if l.is_empty() || r.is_empty() {
            continue;
        }
        let ((sl, ml), (sr, mr)) = (sse(&l), sse(&r));
        let total = sl + sr;
        if best.is_none_or(|b| total < b.1 - 1e-12 * b.1.abs().max(1.0)) {
            best = Some((c, total, ml, mr));
        }
    }
    best
}

fn learner_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs());
    for _ in 0..500 {
        let counts: Vec<usize> = (0..rng.gen_range(2..=4)).map(|_| rng.gen_range(2..=4)).collect();
        let sp = space(&counts);
        let n = rng.gen_range(3..=12.min(sp.size() as usize));
        let rows: Vec<Sample> = rand::seq::index::sample(&mut rng, sp.size() as usize, n)
            .into_iter()
            .map(|i| sp.sample_at(i as u64))
            .collect();
        let dense: Vec<Vec<f64>> = rows.iter().map(|s| sp.encode_one_hot(s).unwrap()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let x = BinaryMatrix::from_dense(&dense).unwrap();
        let p = GbrtParams { rounds: 1, learning_rate: 1.0, max_depth: 1, lambda: 0.0, min_leaf: 1 };
        let m = fit_gbrt(&x, &y, &p).unwrap();
        let nodes = m.trees[0].nodes();
        let ok = match (stump_oracle(&dense, &y), nodes[0]) {
            (Some((c, _, ml, mr)), Node::Split { column, left, right, .. }) => {
                let leaf = |i: u32| match nodes[i as usize] {
                    Node::Leaf { value, .. } => m.base_score + value,
                    _ => f64::NAN,
                };
                column as usize == c && close(leaf(left), ml) && close(leaf(right), mr)
            }
            _ => false,
        };
        // full-depth tree reproduces every distinct row
        let grad: Vec<f64> = y.iter().map(|v| -v).collect();
        let tree = fit_tree(&x, &grad, &vec![1.0; n], &TreeParams { max_depth: 64, min_leaf: 1, lambda: 0.0 }).unwrap();
        let mse =
            rows.iter().zip(&y).map(|(s, t)| (tree.predict_active(&sp.active_columns(s)) - t).powi(2)).sum::<f64>()
                / n as f64;
        if !ok || mse != 0.0 {
            mismatches += 1;
        }
    }
    Outcome { pass: mismatches == 0, detail: format!("500 instances, {} mismatches", mismatches) }
}

/// Points on a coarse grid in one objective so exact ties occur.
fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| vec![rng.gen_range(1..40) as f64 / 4.0, rng.gen_range(1.0..10.0)]).collect()
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let senses = [Sense::Minimize, Sense::Minimize];
    let (mut front_bad, mut adrs_bad, mut mono_bad) = (0, 0, 0);
    for _ in 0..200 {
        let n = rng.gen_range(1..120);
        let pts = cloud(&mut rng, n);
        let oracle: Vec<Vec<f64>> =
            pts.iter().filter(|p| !pts.iter().any(|q| dominates(q, p, &senses))).cloned().collect();
        let front = pareto_front(&pts, &senses).unwrap();
        if front.points != oracle {
            front_bad += 1;
        }
        let (na, nb) = (rng.gen_range(1..15), rng.gen_range(1..15));
        let a = cloud(&mut rng, na);
        let b = cloud(&mut rng, nb);
        let direct = |l: &[Vec<f64>]| -> f64 {
            let mut total = 0.0;
            for t in &front.points {
                let mut best = f64::INFINITY;
                for p in l {
                    let mut d = 0.0f64;
                    for j in 0..2 {
                        d = d.max((p[j] - t[j]) / t[j]);
                    }
                    best = best.min(d);
                }
                total += best;
            }
            total / front.points.len() as f64
        };
        let af = pareto_front(&a, &senses).unwrap();
        let got = adrs(&front, &af).unwrap();
        if (got - direct(&af.points)).abs() > 1e-12 {
            adrs_bad += 1;
        }
        let both: Vec<Vec<f64>> = a.iter().chain(&b).cloned().collect();
        let u = adrs(&front, &pareto_front(&both, &senses).unwrap()).unwrap();
        let bb = adrs(&front, &pareto_front(&b, &senses).unwrap()).unwrap();
        if u > got.min(bb) {
            mono_bad += 1;
        }
    }
    Outcome {
        pass: front_bad + adrs_bad + mono_bad == 0,
        detail: format!(
            "200 cases: front mismatches={} adrs mismatches={} union violations={}",
            front_bad, adrs_bad, mono_bad
        ),
    }
}

fn determinism() -> Outcome {
    let spec = SyntheticSpec { objectives: 2, ..Default::default() };
    let truth = synth_space(&spec).unwrap();
    let imp = fist_core::harness::bench::prior_importance(&spec).unwrap();
    let names = spec.objective_names();
    let ev = TableEvaluator::new(truth.clone(), &names).unwrap();
    let objs: Vec<ObjectiveSpec> = names.iter().map(|n| ObjectiveSpec::new(n.clone(), Sense::Minimize)).collect();
    let mut log_bad = Vec::new();
    for s in Strategy::ALL {
        for seed in [3u64, 11] {
            let mut cfg = TuneConfig::new(s, 40, objs.clone(), seed);
            cfg.batch = 2;
            let a = render_runlog(&run(truth.space(), &ev, &cfg, Some(&imp)).unwrap()).unwrap();
            let b = render_runlog(&run(truth.space(), &ev, &cfg, Some(&imp)).unwrap()).unwrap();
            if a != b {
                log_bad.push(s.as_str());
            }
        }
    }
    let mut s = suite(Strategy::ALL.to_vec(), 2);
    s.budgets = vec![30, 40];
    s.seeds = Seeds::Range { start: 0, count: 4 };
    let csv = |threads: Option<usize>| {
        let mut c = s.clone();
        c.threads = threads;
        let r = bench(&c).unwrap();
        (
            r.metrics_csv(),
            r.aggregate_csv().unwrap(),
            r.runlogs.iter().map(|l| render_runlog(l).unwrap()).collect::<Vec<_>>(),
        )
    };
    let base = csv(Some(1));
    let same = [csv(Some(1)), csv(Some(4)), csv(None)].iter().all(|c| *c == base);
    Outcome {
        pass: log_bad.is_empty() && same,
        detail: format!(
            "{} strategies replayed, differing: {:?}; suite CSV identical across reruns/threads: {}",
            Strategy::ALL.len(),
            log_bad,
            same
        ),
    }
}

fn main() -> ExitCode {
    let ms = Duration::from_millis;
    let s = Duration::from_secs;
    let results = [
        check(1, "worked-example exactness", ms(1), worked_example),
        check(2, "importance recovery", s(1), importance_recovery),
        check(3, "sigma ordering", s(10), sigma_ordering),
        check(4, "end-to-end single-objective", s(300), end_to_end_single),
        check(5, "multi-objective ADRS", s(300), end_to_end_multi),
        check(6, "learner oracle equivalence", s(10), learner_oracle),
        check(7, "metric oracles", s(5), metric_oracles),
        check(8, "determinism", s(60), determinism),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
