//! One line per acceptance criterion: `PASS`, `FAIL` or `SKIP`, followed by
//! the measured values. The test fails if any line is `FAIL`.
//!
//! Set `CONVSAFE_RELEASED_DATA` to a directory holding `threads.jsonl`,
//! `annotations.jsonl` and optionally `lexicon.csv` to check the reference
//! statistics of the released corpus.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use convsafe::annotation::{
    aggregate_gold, aggregate_offensive_votes, aggregate_stance_votes, agreement_report, cohens_kappa,
    krippendorff_alpha, offensive_reliability, pairwise_agreement, read_annotations, stance_reliability,
    ItemAnnotation, Offensive4, Stance, WorkerAnnotation,
};
use convsafe::corpus::{parse_threads, preprocess, PreprocessConfig};
use convsafe::ctg::{atcon_line, emit_dapt, parse_atcon_line, split_95_5, ControlToken, LabelControlledExample};
use convsafe::eval::{
    agree_rate_by_context, distinct_n, join_gold, offensive_slices, profanity_share, stance_slices, EvalReport,
    Lexicon, PairPrediction, UtterancePrediction,
};
use convsafe::nbow::loss::sigmoid_cross_entropy;
use convsafe::nbow::{
    build_model, class_balanced_weight, cb_focal, cross_entropy, focal_term, gradient_check, train,
    weighted_cross_entropy, GradCheckConfig, LabeledExample, LossConfig, ModelConfig, NbowModel, TrainConfig,
};
use convsafe::scorer::{calibrate_thresholds, Grid, HighPrecisionLabel, ScoreVector, Task};
use convsafe::synthetic::{imbalanced_stance_examples, synthetic_corpus, SyntheticConfig};
use convsafe::Thread;
use convsafe_service::{AnnotationService, AnnotationStore, NextTask, ServiceConfig, SystemClock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::*;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---------------------------------------------------------------- [1]

fn gradcheck() -> Outcome {
    let start = Instant::now();
    let r = gradient_check(&GradCheckConfig { nets: 100, seed: 1, ..Default::default() });
    let took = start.elapsed();
    let per: Vec<String> = r.losses.iter().map(|l| format!("{} {:.2e}", l.loss, l.max_rel_error)).collect();
    verdict(
        r.nets == 100 && r.losses.len() == 3 && r.max_rel_error() < 1e-4 && took < Duration::from_secs(30),
        format!("{} nets, {} in {:.1}s", r.nets, per.join(", "), took.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- [2]

fn loss_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = [0.0f64; 3];
    for _ in 0..1000 {
        let k = rng.random_range(2..=3);
        let z: Vec<f64> = (0..k).map(|_| rng.random_range(-6.0..6.0)).collect();
        let y = rng.random_range(0..k);
        let gamma = rng.random_range(0.0..3.0);
        let n = rng.random_range(1..10_000u64);
        worst[0] = worst[0].max((weighted_cross_entropy(&z, y, &vec![1.0; k]) - cross_entropy(&z, y)).abs());
        worst[1] = worst[1].max((cb_focal(&z, y, 0.0, gamma, n) - focal_term(&z, y, gamma)).abs());
        worst[2] = worst[2].max((cb_focal(&z, y, 0.0, 0.0, n) - sigmoid_cross_entropy(&z, y)).abs());
    }
    let reweight = class_balanced_weight(0.5, 2);
    verdict(
        worst[0] <= 1e-12 && worst[1] <= 1e-12 && worst[2] <= 1e-12 && reweight == 2.0 / 3.0,
        format!(
            "wCE(1,..)-CE {:.1e}, CB(beta=0)-focal {:.1e}, CB(0,0)-sigmoid CE {:.1e}, reweight(0.5,2) = {reweight}",
            worst[0], worst[1], worst[2]
        ),
    )
}

// ---------------------------------------------------------------- [3]

fn cb_focal_fixture() -> Outcome {
    let v = cb_focal(&[0.0, 0.0], 0, 0.0, 0.0, 1);
    let want = 2.0 * std::f64::consts::LN_2;
    verdict(close(v, want, 1e-12), format!("CB_foc(z=(0,0), y=0) = {v:.15} vs 2 ln 2 = {want:.15}"))
}

// ---------------------------------------------------------------- [4]

fn small(task: Task) -> ModelConfig {
    let mut m = ModelConfig::new(task);
    m.dim = 16;
    m.hidden = (16, 8);
    m
}

fn predict(model: &NbowModel, ex: &LabeledExample) -> usize {
    let p = model.predict_proba(&model.encode(&ex.input)).unwrap();
    (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b })
}

fn learnability() -> Outcome {
    let start = Instant::now();
    let text = std::fs::read_to_string(common::data_dir().join("separable_offensive.jsonl")).unwrap();
    let data: Vec<LabeledExample> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let (tr, dev) = data.split_at(data.len() * 4 / 5);
    let mut tc = TrainConfig::new(Task::Offensive);
    tc.learning_rate = 5e-3;
    tc.epochs = 30;
    tc.seed = 1;
    let fit = || {
        let m = build_model(tr, &small(Task::Offensive), None, 1).unwrap();
        train(m, tr, dev, &tc, &LossConfig::CrossEntropy).unwrap()
    };
    let (a, b) = (fit(), fit());
    let f1 = a.history[a.best_epoch - 1].dev_metric;
    let deterministic = a.model == b.model;

    let mut recalls = Vec::new();
    for seed in [1u64, 2, 3] {
        let data = imbalanced_stance_examples(3000, 40, seed);
        let (tr, rest) = data.split_at(1500);
        let (dev, test) = rest.split_at(300);
        let mut tc = TrainConfig::new(Task::Stance);
        tc.learning_rate = 5e-3;
        tc.epochs = 10;
        tc.seed = seed;
        let recall = |loss: &LossConfig| {
            let m = build_model(tr, &small(Task::Stance), None, seed).unwrap();
            let m = train(m, tr, dev, &tc, loss).unwrap().model;
            let minority: Vec<&LabeledExample> = test.iter().filter(|e| e.label != 0).collect();
            minority.iter().filter(|e| predict(&m, e) == e.label).count() as f64 / minority.len() as f64
        };
        recalls.push((recall(&LossConfig::CrossEntropy), recall(&LossConfig::stance_weighted())));
    }
    let took = start.elapsed();
    let wins = recalls.iter().all(|(ce, wce)| wce > ce);
    let shown: Vec<String> = recalls.iter().map(|(c, w)| format!("{c:.2}<{w:.2}")).collect();
    verdict(
        f1 >= 0.95 && deterministic && wins && took < Duration::from_secs(120),
        format!(
            "separable F1 {f1:.3} (deterministic {deterministic}); minority recall CE<wCE {}; {:.1}s",
            shown.join(" "),
            took.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- [5]

/// Value-count form of nominal alpha.
fn alpha_oracle(units: &[Vec<Option<u8>>]) -> f64 {
    let mut totals: BTreeMap<u8, f64> = BTreeMap::new();
    let mut n = 0.0;
    let mut d_o = 0.0;
    for u in units {
        let mut counts: BTreeMap<u8, f64> = BTreeMap::new();
        for v in u.iter().flatten() {
            *counts.entry(*v).or_default() += 1.0;
        }
        let m: f64 = counts.values().sum();
        if m < 2.0 {
            continue;
        }
        n += m;
        for (c, nc) in &counts {
            *totals.entry(*c).or_default() += nc;
            for (k, nk) in &counts {
                if c != k {
                    d_o += nc * nk / (m - 1.0);
                }
            }
        }
    }
    d_o /= n;
    let mut d_e = 0.0;
    for (c, nc) in &totals {
        for (k, nk) in &totals {
            if c != k {
                d_e += nc * nk;
            }
        }
    }
    d_e /= n * (n - 1.0);
    1.0 - d_o / d_e
}

fn pairwise_oracle(units: &[Vec<Option<u8>>]) -> f64 {
    let mut per = Vec::new();
    for u in units {
        let mut counts: HashMap<u8, usize> = HashMap::new();
        for v in u.iter().flatten() {
            *counts.entry(*v).or_default() += 1;
        }
        let m: usize = counts.values().sum();
        if m < 2 {
            continue;
        }
        let same: usize = counts.values().map(|c| c * (c - 1) / 2).sum();
        per.push(same as f64 / (m * (m - 1) / 2) as f64);
    }
    per.iter().sum::<f64>() / per.len() as f64
}

fn kappa_oracle(a: &[u8], b: &[u8], k: usize) -> f64 {
    let mut m = vec![vec![0.0; k]; k];
    for (&x, &y) in a.iter().zip(b) {
        m[x as usize][y as usize] += 1.0;
    }
    let n = a.len() as f64;
    let po = (0..k).map(|i| m[i][i]).sum::<f64>() / n;
    let pe = (0..k)
        .map(|i| m[i].iter().sum::<f64>() * (0..k).map(|j| m[j][i]).sum::<f64>())
        .sum::<f64>()
        / (n * n);
    (po - pe) / (1.0 - pe)
}

fn distinct_oracle(responses: &[String], n: usize) -> f64 {
    let mut all = Vec::new();
    for r in responses {
        let t: Vec<&str> = r.split(' ').filter(|w| !w.is_empty()).collect();
        for i in 0..t.len().saturating_sub(n - 1) {
            all.push(t[i..i + n].join("\u{1}"));
        }
    }
    let unique: BTreeSet<&String> = all.iter().collect();
    unique.len() as f64 / all.len() as f64
}

fn prf(pairs: &[(usize, usize)], c: usize) -> (f64, f64, f64) {
    let tp = pairs.iter().filter(|(p, g)| *p == c && *g == c).count() as f64;
    let pred = pairs.iter().filter(|(p, _)| *p == c).count() as f64;
    let gold = pairs.iter().filter(|(_, g)| *g == c).count() as f64;
    let p = if pred > 0.0 { tp / pred } else { 0.0 };
    let r = if gold > 0.0 { tp / gold } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

fn check(worst: &mut f64, got: Option<f64>, want: f64) {
    *worst = worst.max(got.map_or(f64::INFINITY, |g| (g - want).abs()));
}

fn canonical_units() -> Vec<Vec<Option<u8>>> {
    let obs: [[u8; 12]; 4] = [
        [1, 2, 3, 3, 2, 1, 4, 1, 2, 0, 0, 0],
        [1, 2, 3, 3, 2, 2, 4, 1, 2, 5, 0, 3],
        [0, 3, 3, 3, 2, 3, 4, 2, 2, 5, 1, 0],
        [1, 2, 3, 3, 2, 4, 4, 1, 2, 5, 1, 0],
    ];
    (0..12).map(|u| (0..4).map(|c| Some(obs[c][u]).filter(|v| *v != 0)).collect()).collect()
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fixtures = 60;
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let words = ["a", "b", "c", "d", "e", "the", "cat", "sat"];
    for _ in 0..fixtures {
        let coders = rng.random_range(2..=6);
        let k = rng.random_range(2..=4u8);
        let units: Vec<Vec<Option<u8>>> = (0..rng.random_range(5..40))
            .map(|_| (0..coders).map(|_| rng.random_bool(0.8).then(|| rng.random_range(0..k))).collect())
            .collect();
        if let Ok(a) = krippendorff_alpha(&units) {
            let want = alpha_oracle(&units);
            if want.is_finite() {
                check(worst.entry("alpha").or_default(), Some(a), want);
            }
        }
        if let Ok(p) = pairwise_agreement(&units) {
            check(worst.entry("pairwise").or_default(), Some(p), pairwise_oracle(&units));
        }

        let n = rng.random_range(10..60);
        let a: Vec<u8> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let b: Vec<u8> = a.iter().map(|&x| if rng.random_bool(0.6) { x } else { rng.random_range(0..k) }).collect();
        check(worst.entry("kappa").or_default(), cohens_kappa(&a, &b).ok(), kappa_oracle(&a, &b, k as usize));

        let responses: Vec<String> = (0..rng.random_range(1..10))
            .map(|_| (0..rng.random_range(2..9)).map(|_| words[rng.random_range(0..words.len())]).collect::<Vec<_>>().join(" "))
            .collect();
        for n in [1, 2] {
            check(worst.entry("distinct").or_default(), distinct_n(&responses, n), distinct_oracle(&responses, n));
        }

        let utts: Vec<UtterancePrediction> = (0..rng.random_range(10..50))
            .map(|i| UtterancePrediction {
                thread: format!("t{}", i / 4),
                index: rng.random_range(1..=5),
                pred: rng.random_range(0..2),
                gold: rng.random_range(0..2),
            })
            .collect();
        let report = offensive_slices(&utts).unwrap();
        let w = worst.entry("f1_slices").or_default();
        for (slice, keep) in [("all", 1usize..), ("first", 1..), ("reply", 2..)] {
            let pairs: Vec<(usize, usize)> = utts
                .iter()
                .filter(|u| keep.contains(&u.index) && (slice != "first" || u.index == 1))
                .map(|u| (u.pred, u.gold))
                .collect();
            if pairs.is_empty() {
                check(w, report.value("offensive", slice, "f1").map(|_| f64::INFINITY), 0.0);
                continue;
            }
            let (p, r, f) = prf(&pairs, 1);
            check(w, report.value("offensive", slice, "precision"), p);
            check(w, report.value("offensive", slice, "recall"), r);
            check(w, report.value("offensive", slice, "f1"), f);
        }
        let pairs: Vec<PairPrediction> = (0..rng.random_range(10..50))
            .map(|i| {
                let later = rng.random_range(2..=6);
                PairPrediction {
                    thread: format!("t{}", i / 4),
                    earlier: rng.random_range(1..later),
                    later,
                    pred: rng.random_range(0..3),
                    gold: rng.random_range(0..3),
                }
            })
            .collect();
        let report = stance_slices(&pairs).unwrap();
        for (slice, adjacent_only) in [("all", false), ("adjacent", true)] {
            let pg: Vec<(usize, usize)> = pairs
                .iter()
                .filter(|p| !adjacent_only || p.later - p.earlier == 1)
                .map(|p| (p.pred, p.gold))
                .collect();
            if pg.is_empty() {
                continue;
            }
            let per: Vec<f64> = (0..3).map(|c| prf(&pg, c).2).collect();
            for (s, f) in Stance::ALL.iter().zip(&per) {
                check(w, report.value("stance", slice, &format!("{}_f1", s.name())), *f);
            }
            check(w, report.value("stance", slice, "macro_f1"), per.iter().sum::<f64>() / 3.0);
        }
    }
    let canonical = krippendorff_alpha(&canonical_units()).unwrap();
    let all_ok = worst.len() == 5 && worst.values().all(|w| *w <= 1e-9) && close(canonical, 113.0 / 152.0, 1e-6);
    let shown: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    verdict(
        all_ok,
        format!("{fixtures} fixtures, max |diff| {}; canonical alpha {canonical:.6}", shown.join(", ")),
    )
}

// ---------------------------------------------------------------- [6]

fn offensive_rule(votes: &[Offensive4]) -> bool {
    votes.iter().filter(|v| matches!(v, Offensive4::Yes | Offensive4::Maybe)).count() >= 2
}

fn stance_rule(votes: &[Stance]) -> Stance {
    let mut counts = [0usize; 3];
    for v in votes {
        counts[*v as usize] += 1;
    }
    let (a, d) = (counts[1], counts[2]);
    if a >= 2 && d >= 2 {
        return match a.cmp(&d) {
            std::cmp::Ordering::Greater => Stance::Agree,
            std::cmp::Ordering::Less => Stance::Disagree,
            std::cmp::Ordering::Equal => Stance::Neutral,
        };
    }
    if a >= 2 {
        Stance::Agree
    } else if d >= 2 {
        Stance::Disagree
    } else {
        Stance::Neutral
    }
}

fn patterns<T: Copy>(values: &[T], len: usize) -> Vec<Vec<T>> {
    (0..values.len().pow(len as u32))
        .map(|mut code| {
            (0..len)
                .map(|_| {
                    let v = values[code % values.len()];
                    code /= values.len();
                    v
                })
                .collect()
        })
        .collect()
}

fn two_item_annotations(off: &[Offensive4], stance: &[Stance]) -> Vec<WorkerAnnotation> {
    off.iter()
        .zip(stance)
        .enumerate()
        .map(|(w, (&o, &s))| WorkerAnnotation {
            worker: format!("w{w}"),
            thread: "t".into(),
            items: vec![
                ItemAnnotation { idx: 1, off: Offensive4::No, targets: vec![], stance: BTreeMap::new(), plausible: None },
                ItemAnnotation { idx: 2, off: o, targets: vec![], stance: [(1, s)].into(), plausible: None },
            ],
        })
        .collect()
}

fn aggregation() -> Outcome {
    let mut mismatches = 0;
    let off = patterns(&Offensive4::ALL, 5);
    let st = patterns(&Stance::ALL, 5);
    for p in &off {
        let want = offensive_rule(p);
        mismatches += (aggregate_offensive_votes(p, 2).0 != want) as usize;
        let g = aggregate_gold(&two_item_annotations(p, &[Stance::Neutral; 5]), 2).unwrap();
        mismatches += (g.offensive(2) != Some(want)) as usize;
    }
    for p in &st {
        let want = stance_rule(p);
        mismatches += (aggregate_stance_votes(p, 2) != want) as usize;
        let g = aggregate_gold(&two_item_annotations(&[Offensive4::No; 5], p), 2).unwrap();
        mismatches += (g.stance(1, 2) != Some(want)) as usize;
    }
    verdict(
        mismatches == 0,
        format!("{} offensive and {} stance patterns, {mismatches} mismatches", off.len(), st.len()),
    )
}

// ---------------------------------------------------------------- [7]

fn random_scores(rng: &mut ChaCha8Rng, task: Task, n: usize) -> (Vec<ScoreVector>, Vec<usize>) {
    let k = task.n_classes();
    let mut scores = Vec::with_capacity(n);
    let mut gold = Vec::with_capacity(n);
    for i in 0..n {
        let g = if i < k { i } else { rng.random_range(0..k) };
        // Quantized so that many probabilities land exactly on grid points.
        let mut probs = vec![0.0; k];
        let lead = rng.random_range(40..=200u32);
        let owner = if rng.random_bool(0.7) { g } else { rng.random_range(0..k) };
        probs[owner] = lead as f64 / 200.0;
        let rest = 1.0 - probs[owner];
        let others: Vec<usize> = (0..k).filter(|&c| c != owner).collect();
        let split = rng.random_range(0.0..=1.0);
        probs[others[0]] = if others.len() == 1 { rest } else { rest * split };
        if others.len() == 2 {
            probs[others[1]] = rest - probs[others[0]];
        }
        scores.push(ScoreVector::new(task, probs).unwrap());
        gold.push(g);
    }
    (scores, gold)
}

fn calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut tables, mut mismatches, mut unattainable) = (0, 0, 0);
    for fixture in 0..60 {
        let task = if fixture % 2 == 0 { Task::Offensive } else { Task::Stance };
        let n = rng.random_range(20..200);
        let (scores, gold) = random_scores(&mut rng, task, n);
        let table = calibrate_thresholds(task, &scores, &gold, 0.75, Grid::default()).unwrap();
        tables += 1;
        for ct in &table.classes {
            let c = ct.class;
            let evals: Vec<(f64, usize, f64)> = (50..=99)
                .map(|j| {
                    let t = j as f64 / 100.0;
                    let hits: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].probs[c] >= t).collect();
                    let tp = hits.iter().filter(|&&i| gold[i] == c).count();
                    let p = if hits.is_empty() { f64::NAN } else { tp as f64 / hits.len() as f64 };
                    (t, hits.len(), p)
                })
                .collect();
            let first = evals.iter().find(|(_, n, p)| *n > 0 && *p >= 0.75);
            let ok = match first {
                Some(&(t, n, p)) => ct.attainable && ct.threshold == t && ct.predicted == n && ct.achieved_precision == p,
                None => {
                    unattainable += 1;
                    !ct.attainable && ct.threshold == 0.99
                }
            };
            mismatches += !ok as usize;
        }
        // Self-consistency: labels only fire on attainable classes above
        // their threshold, and Ambiguous only when none clears it.
        for s in &scores {
            let clears: Vec<usize> =
                table.classes.iter().filter(|ct| ct.attainable && s.probs[ct.class] >= ct.threshold).map(|ct| ct.class).collect();
            let ok = match table.label(s) {
                HighPrecisionLabel::Class(c) => clears.contains(&c),
                HighPrecisionLabel::Ambiguous => clears.is_empty(),
            };
            mismatches += !ok as usize;
        }
    }
    verdict(
        mismatches == 0,
        format!("{tables} tables against the exhaustive grid, {unattainable} unattainable classes, {mismatches} mismatches"),
    )
}

// ---------------------------------------------------------------- [8]

const EOU: &str = "[EOU]";

fn random_example(rng: &mut ChaCha8Rng) -> LabelControlledExample {
    let words = ["hi", "no", "you", "are", "x]", "[y", "EOU", "ok.", "SAFE", "?", "a  b"];
    let utter = |rng: &mut ChaCha8Rng| {
        (0..rng.random_range(1..6)).map(|_| words[rng.random_range(0..words.len())]).collect::<Vec<_>>().join(" ")
    };
    let context = (0..rng.random_range(1..5)).map(|_| utter(rng)).collect();
    let response = utter(rng);
    let mut controls = Vec::new();
    if rng.random_bool(0.7) {
        controls.push(if rng.random_bool(0.5) { ControlToken::Safe } else { ControlToken::Off });
    }
    if controls.is_empty() || rng.random_bool(0.5) {
        controls.push(if rng.random_bool(0.5) { ControlToken::Neu } else { ControlToken::Agr });
    }
    LabelControlledExample { context, controls, response }
}

fn ctg() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut trips_failed = 0;
    for _ in 0..10_000 {
        let ex = random_example(&mut rng);
        if parse_atcon_line(&atcon_line(&ex, EOU), EOU).as_ref() != Ok(&ex) {
            trips_failed += 1;
        }
    }

    let examples: Vec<LabelControlledExample> = (0..2000).map(|_| random_example(&mut rng)).collect();
    let mut dapt_bad = 0;
    let sets: [&[ControlToken]; 6] = [
        &[ControlToken::Safe],
        &[ControlToken::Off],
        &[ControlToken::Neu],
        &[ControlToken::Safe, ControlToken::Neu],
        &[ControlToken::Agr, ControlToken::Off],
        &[ControlToken::Safe, ControlToken::Agr],
    ];
    for set in sets {
        let want_set: BTreeSet<ControlToken> = set.iter().copied().collect();
        let want: Vec<String> = examples
            .iter()
            .filter(|e| e.controls.iter().copied().collect::<BTreeSet<_>>() == want_set && e.controls.len() == set.len())
            .map(|e| format!("{}{EOU} {}", e.context.join(EOU), e.response))
            .collect();
        let got = emit_dapt(&examples, set, EOU);
        let got: Vec<&str> = got.lines().collect();
        let has_control = got.iter().any(|l| ControlToken::ALL.iter().any(|t| l.contains(t.render())));
        dapt_bad += (got != want || has_control) as usize;
    }

    let mut split_bad = 0;
    let sizes: Vec<usize> = (0..=300).chain((0..20).map(|_| rng.random_range(300..20_000))).collect();
    for n in &sizes {
        let items: Vec<usize> = (0..*n).collect();
        let (tr, dev) = split_95_5(&items, *n as u64);
        let mut joined: Vec<usize> = tr.iter().chain(&dev).copied().collect();
        joined.sort_unstable();
        split_bad += (tr.len() != n * 95 / 100 || joined != items) as usize;
    }
    verdict(
        trips_failed == 0 && dapt_bad == 0 && split_bad == 0,
        format!(
            "10000 AtCon round trips ({trips_failed} failed), {} DAPT control sets ({dapt_bad} wrong), {} split sizes ({split_bad} wrong)",
            sets.len(),
            sizes.len()
        ),
    )
}

// ---------------------------------------------------------------- [9]

fn released_data() -> Outcome {
    let Some(dir) = std::env::var_os("CONVSAFE_RELEASED_DATA") else {
        return Skip("CONVSAFE_RELEASED_DATA not set".into());
    };
    let dir = Path::new(&dir);
    let threads: Vec<Thread> = match std::fs::read(dir.join("threads.jsonl")) {
        Ok(b) => {
            let cfg = PreprocessConfig::default();
            parse_threads(b.as_slice()).unwrap().threads.iter().filter_map(|r| preprocess(r, &cfg).ok()).collect()
        }
        Err(e) => return Fail(format!("{}: {e}", dir.join("threads.jsonl").display())),
    };
    let annos = match std::fs::read(dir.join("annotations.jsonl")) {
        Ok(b) => read_annotations(b.as_slice()).unwrap().0,
        Err(e) => return Fail(format!("{}: {e}", dir.join("annotations.jsonl").display())),
    };
    let gold = convsafe::annotation::aggregate_all(&annos, 2).unwrap();
    let off = agreement_report(&offensive_reliability(&annos)).unwrap();
    let st = agreement_report(&stance_reliability(&annos)).unwrap();
    let joined = join_gold(&threads, &gold);
    let rates = agree_rate_by_context(&joined);
    let human = rates.get("human").cloned().unwrap_or_default();
    let (ao, as_) = (human.given_offensive().unwrap_or(f64::NAN) * 100.0, human.given_safe().unwrap_or(f64::NAN) * 100.0);

    let mut ok = close(off.krippendorff_alpha, 0.42, 0.01)
        && close(off.pairwise_agreement * 100.0, 82.8, 1.0)
        && close(st.krippendorff_alpha, 0.22, 0.01)
        && close(st.pairwise_agreement * 100.0, 85.1, 1.0)
        && close(ao, 41.62, 0.1)
        && close(as_, 12.89, 0.1);
    let mut detail = format!(
        "offensive alpha {:.3} / {:.1}%, stance alpha {:.3} / {:.1}%, human agree {ao:.2} vs {as_:.2}",
        off.krippendorff_alpha,
        off.pairwise_agreement * 100.0,
        st.krippendorff_alpha,
        st.pairwise_agreement * 100.0
    );
    match std::fs::File::open(dir.join("lexicon.csv")) {
        Ok(f) => {
            let lex = Lexicon::from_csv(f).unwrap();
            let share = profanity_share(&joined, &lex);
            for (cat, want) in [("dgpt", 3.35), ("gpt3", 39.59), ("human", 66.47)] {
                let got = share.get(cat).map_or(f64::NAN, |v| v * 100.0);
                ok &= close(got, want, 0.1);
                detail.push_str(&format!(", profanity {cat} {got:.2}"));
            }
        }
        Err(_) => detail.push_str(", profanity not checked (no lexicon.csv)"),
    }
    verdict(ok, detail)
}

// ---------------------------------------------------------------- [10]

fn pipeline() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let start = Instant::now();
    common::run_pipeline(a.path(), 0);
    let took = start.elapsed();
    common::run_pipeline(b.path(), 0);

    let is_manifest = |p: &String| p.ends_with(".manifest.json");
    let strip = |t: Vec<(String, Vec<u8>)>| t.into_iter().filter(|(p, _)| !is_manifest(p)).collect::<Vec<_>>();
    let (ta, tb) = (common::tree(a.path()), common::tree(b.path()));
    let manifests = |t: &[(String, Vec<u8>)]| -> Vec<(String, serde_json::Value, serde_json::Value)> {
        t.iter()
            .filter(|(p, _)| is_manifest(p))
            .map(|(p, bytes)| {
                let v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
                (p.clone(), v["config_hash"].clone(), v["outputs"].clone())
            })
            .collect()
    };
    let manifests_match = manifests(&ta) == manifests(&tb) && !manifests(&ta).is_empty();
    let (ta, tb) = (strip(ta), strip(tb));
    let identical = ta == tb;

    let report = EvalReport::from_csv(&std::fs::read_to_string(a.path().join("autoeval.csv")).unwrap()).unwrap();
    let models: BTreeSet<&str> = report.rows.iter().filter(|r| r.section == "autoeval").map(|r| r.slice.as_str()).collect();
    let sums: Vec<f64> = models
        .iter()
        .map(|m| {
            ["pct_agree", "pct_neutral", "pct_disagree"].iter().map(|k| report.value("autoeval", m, k).unwrap_or(f64::NAN)).sum()
        })
        .collect();
    let sums_ok = !sums.is_empty() && sums.iter().all(|s| close(*s, 100.0, 1e-9));
    verdict(
        took < Duration::from_secs(300) && identical && manifests_match && sums_ok,
        format!(
            "{} artifacts in {:.1}s, rerun identical {identical}, manifests agree {manifests_match}, stance sums {:?}",
            ta.len(),
            took.as_secs_f64(),
            sums
        ),
    )
}

// ---------------------------------------------------------------- [11]

fn valid(worker: &str, t: &Thread) -> WorkerAnnotation {
    let items = (1..=t.len())
        .map(|i| ItemAnnotation {
            idx: i,
            off: if i % 2 == 0 { Offensive4::Maybe } else { Offensive4::No },
            targets: vec![],
            stance: (1..i).map(|j| (j, Stance::Neutral)).collect(),
            plausible: t.utterances[i - 1].speaker.is_bot().then_some(true),
        })
        .collect();
    WorkerAnnotation { worker: worker.into(), thread: t.id.clone(), items }
}

fn open(dir: &Path, threads: Vec<Thread>) -> AnnotationService {
    let store = AnnotationStore::open(&dir.join("store.jsonl")).unwrap();
    AnnotationService::new(threads, store, ServiceConfig::default(), Arc::new(SystemClock))
}

fn service() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let threads = synthetic_corpus(&SyntheticConfig { threads: 40, seed: 11, ..Default::default() }).threads;
    let svc = Arc::new(open(dir.path(), threads.clone()));
    let handles: Vec<_> = (0..16)
        .map(|w| {
            let svc = svc.clone();
            std::thread::spawn(move || {
                let worker = format!("worker{w:02}");
                let mut got = Vec::new();
                while let NextTask::Assigned(a) = svc.next_task(&worker) {
                    svc.submit(&a.assignment_id, valid(&worker, &a.thread)).unwrap();
                    got.push((a.assignment_id, worker.clone(), a.thread.id));
                }
                got
            })
        })
        .collect();
    let leases: Vec<(String, String, String)> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
    let ids: HashSet<&String> = leases.iter().map(|l| &l.0).collect();
    let pairs: HashSet<(&String, &String)> = leases.iter().map(|l| (&l.1, &l.2)).collect();
    let no_double = ids.len() == leases.len() && pairs.len() == leases.len();
    let before = svc.store().snapshot().records.len();
    drop(svc);

    let svc = open(dir.path(), threads.clone());
    let snap = svc.store().snapshot();
    let mut per: HashMap<&str, usize> = HashMap::new();
    for r in &snap.records {
        *per.entry(r.annotation.thread.as_str()).or_default() += 1;
    }
    let cap_ok = per.values().all(|&n| n <= 5) && per.len() == threads.len();
    let survived = snap.records.len() == before && before == threads.len() * 5;
    let closed = svc.next_task("newcomer") == NextTask::NoneAvailable;
    verdict(
        no_double && cap_ok && survived && closed,
        format!(
            "16 workers, {} leases, unique {no_double}; {} records after restart; max {} per thread",
            leases.len(),
            snap.records.len(),
            per.values().max().copied().unwrap_or(0)
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("gradient check", gradcheck),
        ("loss identities", loss_identities),
        ("CB focal fixture", cb_focal_fixture),
        ("learnability", learnability),
        ("metric oracles", metric_oracles),
        ("aggregation rules", aggregation),
        ("threshold calibration", calibration),
        ("CTG formats and split", ctg),
        ("released-data statistics", released_data),
        ("pipeline determinism", pipeline),
        ("annotation service", service),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        let (tag, detail) = match f() {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed.push(n);
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("{tag} [{n}] {name}: {detail}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
