use std::collections::HashMap;

use anyhow::{bail, Context};
use convsafe::annotation::{
    aggregate_all, agreement_report, offensive_reliability, stance_reliability, AgreementReport,
};
use convsafe::corpus::{
    gpt3_prompt, parse_threads, preprocess, select_offensive_contexts, stratified_sample, LastUtteranceLabels,
    PreprocessConfig, SampleConfig,
};
use convsafe::eval::{emit_report, EvalReport};
use convsafe::nbow::split_70_15_15;
use convsafe::scorer::ThresholdTable;
use convsafe::synthetic::{separable_offensive_examples, synthetic_corpus, SyntheticConfig};
use serde::Serialize;

use super::{gold_map, jsonl_bytes, threads_bytes, Ctx};
use crate::args::{AggregateArgs, ExportPromptsArgs, IngestArgs, SampleArgs, SynthArgs};
use crate::UsageError;

pub fn ingest(ctx: &mut Ctx, a: IngestArgs) -> anyhow::Result<()> {
    let input = ctx.input()?;
    let output = ctx.output()?;
    let mut cfg = PreprocessConfig {
        url_token: a.url_token,
        max_post_words: a.max_post_words,
        max_comment_words: a.max_comment_words,
        ..Default::default()
    };
    if !cfg.reserved_tokens.contains(&ctx.global.eou_token) {
        cfg.reserved_tokens.push(ctx.global.eou_token.clone());
    }
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;

    let bytes = ctx.run.read(&input)?;
    let parsed = parse_threads(bytes.as_slice()).with_context(|| format!("parsing {}", input.display()))?;
    let mut errors: Vec<String> =
        parsed.errors.iter().map(|e| format!("{}:{}: {}", input.display(), e.line, e.message)).collect();
    let mut threads = Vec::with_capacity(parsed.threads.len());
    for t in &parsed.threads {
        match preprocess(t, &cfg) {
            Ok(t) => threads.push(t),
            Err(e) => errors.push(e.to_string()),
        }
    }
    for e in &errors {
        eprintln!("skipped: {e}");
    }
    eprintln!("{} threads, {} errors", threads.len(), errors.len());
    if a.strict && !errors.is_empty() {
        bail!("{} records could not be ingested", errors.len());
    }
    ctx.run.write(&output, &threads_bytes(&threads))
}

pub fn sample(ctx: &mut Ctx, a: SampleArgs) -> anyhow::Result<()> {
    let input = ctx.input()?;
    let output = ctx.output()?;
    let threads = ctx.read_threads(&input)?;
    let scorer = ctx.scorer()?;
    let cfg = SampleConfig {
        n_random_per_source: a.n_random,
        n_offensive_per_source: a.n_offensive,
        threshold: a.threshold,
        seed: ctx.global.seed,
    };
    let picked = stratified_sample(&threads, scorer.as_ref(), &cfg)?;
    eprintln!("sampled {} of {} threads", picked.len(), threads.len());
    ctx.run.write(&output, &threads_bytes(&picked))
}

fn push_agreement(report: &mut EvalReport, slice: &str, r: &AgreementReport) {
    report.push("agreement", slice, "krippendorff_alpha", r.krippendorff_alpha, r.n_items);
    report.push("agreement", slice, "pairwise_agreement", r.pairwise_agreement, r.n_items);
}

pub fn aggregate(ctx: &mut Ctx, a: AggregateArgs) -> anyhow::Result<()> {
    let input = ctx.input()?;
    let output = ctx.output()?;
    let annos = ctx.read_annotations(&input)?;
    let gold = aggregate_all(&annos, a.min_votes)?;
    ctx.run.write(&output, &jsonl_bytes(&gold)?)?;

    let mut report = EvalReport::default();
    let off = agreement_report(&offensive_reliability(&annos)).context("offensive agreement")?;
    push_agreement(&mut report, "offensive", &off);
    match agreement_report(&stance_reliability(&annos)) {
        Ok(st) => push_agreement(&mut report, "stance", &st),
        Err(e) => log::warn!("stance agreement unavailable: {e}"),
    }
    let text = emit_report(&report, a.format);
    match a.report {
        Some(p) => ctx.run.write(&p, text.as_bytes())?,
        None => print!("{text}"),
    }
    eprintln!("{} threads aggregated from {} annotations", gold.len(), annos.len());
    Ok(())
}

pub fn split(ctx: &mut Ctx) -> anyhow::Result<()> {
    let input = ctx.input()?;
    let dir = ctx.output()?;
    let threads = ctx.read_threads(&input)?;
    let (train, dev, test) = split_70_15_15(&threads, ctx.global.seed)?;
    for (name, part) in [("train", &train), ("dev", &dev), ("test", &test)] {
        ctx.run.write(&dir.join(format!("{name}.jsonl")), &threads_bytes(part))?;
    }
    eprintln!("train {} / dev {} / test {}", train.len(), dev.len(), test.len());
    Ok(())
}

#[derive(Serialize)]
struct PromptLine<'a> {
    thread: &'a str,
    prompt: String,
}

pub fn export_prompts(ctx: &mut Ctx, a: ExportPromptsArgs) -> anyhow::Result<()> {
    let input = ctx.input()?;
    let output = ctx.output()?;
    let threads = ctx.read_threads(&input)?;
    let eou = ctx.global.eou_token.clone();
    let picked = match (&a.gold, &a.offensive_thresholds) {
        (Some(g), None) => {
            let gold = gold_map(ctx.read_gold(g)?);
            let last: HashMap<String, bool> = threads
                .iter()
                .filter_map(|t| Some((t.id.clone(), gold.get(&t.id)?.offensive(t.len())?)))
                .collect();
            select_offensive_contexts(&threads, &LastUtteranceLabels::Gold(&last), a.n, ctx.global.seed)?
        }
        (None, Some(p)) => {
            let table = ThresholdTable::from_json(&ctx.run.read_string(p)?).with_context(|| p.display().to_string())?;
            let scorer = ctx.scorer()?;
            let labels = LastUtteranceLabels::HighPrecision { scorer: scorer.as_ref(), table: &table, eou: &eou };
            select_offensive_contexts(&threads, &labels, a.n, ctx.global.seed)?
        }
        _ => bail!(UsageError("give either --gold or --offensive-thresholds".into())),
    };
    let lines: Vec<PromptLine> = picked.iter().map(|t| PromptLine { thread: &t.id, prompt: gpt3_prompt(t) }).collect();
    ctx.run.write(&output, &jsonl_bytes(&lines)?)
}

pub fn synth(ctx: &mut Ctx, a: SynthArgs) -> anyhow::Result<()> {
    let dir = ctx.output()?;
    let corpus = synthetic_corpus(&SyntheticConfig { threads: a.n_threads, seed: ctx.global.seed, ..Default::default() });
    ctx.run.write(&dir.join("threads.jsonl"), &threads_bytes(&corpus.threads))?;
    ctx.run.write(&dir.join("annotations.jsonl"), &jsonl_bytes(&corpus.annotations)?)?;
    let separable = separable_offensive_examples(a.n_separable, ctx.global.seed);
    ctx.run.write(&dir.join("separable_offensive.jsonl"), &jsonl_bytes(&separable)?)
}
