use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context};
use convsafe::annotation::AggregatedLabels;
use convsafe::corpus::flatten_texts;
use convsafe::eval::{emit_report, offensive_slices, stance_slices, EvalReport, PairPrediction, UtterancePrediction};
use convsafe::nbow::checkpoint;
use convsafe::nbow::{
    build_model, class_counts, examples_from_gold, gradient_check, GradCheckConfig, LossConfig, ModelConfig, Pooling,
    PretrainedVectors, TrainConfig,
};
use convsafe::scorer::{calibrate_thresholds, Grid, PseudoLabeler, Scorer, ScoringInput, Task, ThresholdTable};
use convsafe::Thread;

use super::{gold_map, Ctx};
use crate::args::{CalibrateArgs, EvalArgs, GradcheckArgs, LossKind, PoolingArg, PseudolabelArgs, TrainArgs};
use crate::UsageError;

pub fn train(ctx: &mut Ctx, a: TrainArgs) -> anyhow::Result<()> {
    let output = ctx.output()?;
    let train_threads = ctx.read_threads(&a.train)?;
    let dev_threads = ctx.read_threads(&a.dev)?;
    let gold = gold_map(ctx.read_gold(&a.gold)?);

    let mut mcfg = ModelConfig::new(a.task);
    mcfg.dim = a.dim;
    mcfg.hidden = a.hidden;
    mcfg.pooling = match a.pooling {
        PoolingArg::Mean => Pooling::Mean,
        PoolingArg::Learned => Pooling::LearnedWeights,
    };
    let pretrained = match &a.embeddings {
        Some(p) => {
            let bytes = ctx.run.read(p)?;
            Some(PretrainedVectors::read(bytes.as_slice()).with_context(|| p.display().to_string())?)
        }
        None => None,
    };

    let train_ex = examples_from_gold(&train_threads, &gold, a.task, mcfg.lowercase);
    let dev_ex = examples_from_gold(&dev_threads, &gold, a.task, mcfg.lowercase);
    let n = a.task.n_classes();
    let loss = match a.loss {
        LossKind::Ce => LossConfig::CrossEntropy,
        LossKind::Wce => {
            let weights = a.weights.clone().unwrap_or_else(|| match a.task {
                Task::Stance => vec![1.0, 100.0, 100.0],
                Task::Offensive => vec![1.0, 100.0],
            });
            LossConfig::WeightedCrossEntropy { weights }
        }
        LossKind::Cbfocal => {
            LossConfig::ClassBalancedFocal { beta: a.beta, gamma: a.gamma, class_counts: class_counts(&train_ex, n) }
        }
    };
    loss.validate(n).map_err(|e| UsageError(e.to_string()))?;
    let mut tcfg = TrainConfig::new(a.task);
    tcfg.learning_rate = a.lr;
    tcfg.epochs = a.epochs;
    tcfg.batch_size = a.batch_size;
    tcfg.seed = ctx.global.seed;
    tcfg.validate().map_err(|e| UsageError(e.to_string()))?;

    eprintln!("{} task: {} train / {} dev examples", a.task, train_ex.len(), dev_ex.len());
    let model = build_model(&train_ex, &mcfg, pretrained.as_ref(), ctx.global.seed)?;
    let outcome = convsafe::nbow::train(model, &train_ex, &dev_ex, &tcfg, &loss)?;
    for e in &outcome.history {
        log::info!("epoch {:>3}  loss {:.5}  dev {:.4}", e.epoch, e.train_loss, e.dev_metric);
    }
    let best = &outcome.history[outcome.best_epoch - 1];
    eprintln!("best epoch {} (dev {:.4})", outcome.best_epoch, best.dev_metric);
    let mut bytes = Vec::new();
    checkpoint::save(&outcome.model, &mut bytes)?;
    ctx.run.write(&output, &bytes)
}

pub fn gradcheck(ctx: &mut Ctx, a: GradcheckArgs) -> anyhow::Result<()> {
    let report = gradient_check(&GradCheckConfig { nets: a.nets, seed: ctx.global.seed, ..Default::default() });
    for l in &report.losses {
        println!("{:<10} max relative error {:.3e} over {} coordinates", l.loss, l.max_rel_error, l.checked);
    }
    let worst = report.max_rel_error();
    println!("max relative error: {worst:.3e}");
    if !(worst < 1e-4) {
        bail!("gradient check failed: {worst:.3e} >= 1e-4");
    }
    Ok(())
}

/// Scoring inputs for every gold-labeled utterance (offensive) or pair
/// (stance), with gold classes and positions.
struct Labeled {
    inputs: Vec<ScoringInput>,
    gold: Vec<usize>,
    /// `(thread, later, earlier)`; `earlier` is 0 for utterances.
    at: Vec<(String, usize, usize)>,
}

fn labeled_items(threads: &[Thread], gold: &HashMap<String, AggregatedLabels>, task: Task, eou: &str) -> Labeled {
    let mut out = Labeled { inputs: Vec::new(), gold: Vec::new(), at: Vec::new() };
    for t in threads {
        let Some(g) = gold.get(&t.id) else { continue };
        let texts = t.texts();
        match task {
            Task::Offensive => {
                for it in g.items.iter().filter(|it| it.idx >= 1 && it.idx <= texts.len()) {
                    out.inputs.push(ScoringInput::text(flatten_texts(texts[..it.idx].iter().copied(), eou)));
                    out.gold.push(it.off as usize);
                    out.at.push((t.id.clone(), it.idx, 0));
                }
            }
            Task::Stance => {
                for (j, i, s) in g.stance_pairs().filter(|(j, i, _)| *j >= 1 && j < i && *i <= texts.len()) {
                    out.inputs.push(ScoringInput::pair(texts[j - 1], texts[i - 1]));
                    out.gold.push(s.index());
                    out.at.push((t.id.clone(), i, j));
                }
            }
        }
    }
    out
}

fn task_report(task: Task, items: &Labeled, scorer: &dyn Scorer) -> anyhow::Result<EvalReport> {
    let scores = scorer.score_batch(task, &items.inputs)?;
    let rows = items.at.iter().zip(&items.gold).zip(&scores);
    Ok(match task {
        Task::Offensive => offensive_slices(
            &rows
                .map(|(((thread, index, _), &gold), s)| UtterancePrediction {
                    thread: thread.clone(),
                    index: *index,
                    pred: s.argmax(),
                    gold,
                })
                .collect::<Vec<_>>(),
        )?,
        Task::Stance => stance_slices(
            &rows
                .map(|(((thread, later, earlier), &gold), s)| PairPrediction {
                    thread: thread.clone(),
                    earlier: *earlier,
                    later: *later,
                    pred: s.argmax(),
                    gold,
                })
                .collect::<Vec<_>>(),
        )?,
    })
}

pub fn eval(ctx: &mut Ctx, a: EvalArgs) -> anyhow::Result<()> {
    let input = ctx.input()?;
    let threads = ctx.read_threads(&input)?;
    let gold = gold_map(ctx.read_gold(&a.gold)?);
    let scorer = ctx.scorer()?;
    let tasks = match a.task {
        Some(t) => vec![t],
        None => vec![Task::Offensive, Task::Stance],
    };
    let mut report = EvalReport::default();
    for task in tasks {
        let items = labeled_items(&threads, &gold, task, &ctx.global.eou_token);
        if items.inputs.is_empty() {
            log::warn!("no gold-labeled {task} items in {}", input.display());
            continue;
        }
        report.extend(task_report(task, &items, scorer.as_ref())?);
    }
    ctx.emit(&emit_report(&report, a.format))
}

pub fn calibrate(ctx: &mut Ctx, a: CalibrateArgs) -> anyhow::Result<()> {
    let input = ctx.input()?;
    let output = ctx.output()?;
    let target = ctx.global.target_precision;
    if !(target > 0.0 && target <= 1.0) {
        bail!(UsageError(format!("--target-precision must lie in (0, 1], got {target}")));
    }
    let threads = ctx.read_threads(&input)?;
    let gold = gold_map(ctx.read_gold(&a.gold)?);
    let scorer = ctx.scorer()?;
    let items = labeled_items(&threads, &gold, a.task, &ctx.global.eou_token);
    let scores = scorer.score_batch(a.task, &items.inputs)?;
    let table = calibrate_thresholds(a.task, &scores, &items.gold, target, Grid::default())?;
    for c in &table.classes {
        eprintln!(
            "{:<10} threshold {:.2}  precision {:.3}  predicted {}{}",
            a.task.class_names()[c.class],
            c.threshold,
            c.achieved_precision,
            c.predicted,
            if c.attainable { "" } else { "  (target not reached)" }
        );
    }
    ctx.run.write(&output, (table.to_json() + "\n").as_bytes())
}

fn read_table(ctx: &mut Ctx, path: &Path) -> anyhow::Result<ThresholdTable> {
    let text = ctx.run.read_string(path)?;
    ThresholdTable::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn pseudolabel(ctx: &mut Ctx, a: PseudolabelArgs) -> anyhow::Result<()> {
    let input = ctx.input()?;
    let output = ctx.output()?;
    let threads = ctx.read_threads(&input)?;
    let off = read_table(ctx, &a.offensive_thresholds)?;
    let stance = read_table(ctx, &a.stance_thresholds)?;
    let scorer = ctx.scorer()?;
    let labeler = PseudoLabeler::new(scorer.as_ref(), &off, &stance, ctx.global.eou_token.clone())?;
    let mut bytes = Vec::new();
    let n = labeler.label_stream(threads, |p| {
        serde_json::to_writer(&mut bytes, &p)?;
        bytes.push(b'\n');
        Ok(())
    })?;
    eprintln!("labeled {n} threads");
    ctx.run.write(&output, &bytes)
}
