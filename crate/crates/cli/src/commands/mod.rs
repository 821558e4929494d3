mod analyze;
mod data;
mod generation;
mod model;
mod serve;

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use convsafe::annotation::{read_annotations, AggregatedLabels, WorkerAnnotation};
use convsafe::corpus::{parse_threads, write_threads};
use convsafe::eval::Lexicon;
use convsafe::scorer::{BuiltinScorer, RemoteConfig, RemoteScorer, Scorer, OFFENSIVE_MODEL_FILE, STANCE_MODEL_FILE};
use convsafe::Thread;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::args::{Command, GlobalArgs};
use crate::manifest::Run;
use crate::UsageError;

pub struct Ctx {
    pub global: GlobalArgs,
    pub run: Run,
}

pub fn dispatch(command: Command, global: GlobalArgs, args: Vec<String>) -> anyhow::Result<()> {
    let mut ctx = Ctx { run: Run::new(command.name(), args, global.seed), global };
    let artifact = ctx.global.output.clone();
    match command {
        Command::Ingest(a) => data::ingest(&mut ctx, a)?,
        Command::Sample(a) => data::sample(&mut ctx, a)?,
        Command::Serve(a) => return serve::serve(ctx, a),
        Command::Aggregate(a) => data::aggregate(&mut ctx, a)?,
        Command::Split => data::split(&mut ctx)?,
        Command::Train(a) => model::train(&mut ctx, a)?,
        Command::Gradcheck(a) => model::gradcheck(&mut ctx, a)?,
        Command::Eval(a) => model::eval(&mut ctx, a)?,
        Command::Calibrate(a) => model::calibrate(&mut ctx, a)?,
        Command::Pseudolabel(a) => model::pseudolabel(&mut ctx, a)?,
        Command::CtgBuild(a) => generation::ctg_build(&mut ctx, a)?,
        Command::Autoeval(a) => generation::autoeval(&mut ctx, a)?,
        Command::Analyze(a) => analyze::analyze(&mut ctx, a)?,
        Command::ExportPrompts(a) => data::export_prompts(&mut ctx, a)?,
        Command::Synth(a) => data::synth(&mut ctx, a)?,
    }
    if let Some(p) = ctx.run.finish(artifact.as_deref())? {
        log::info!("manifest written to {}", p.display());
    }
    Ok(())
}

impl Ctx {
    pub fn input(&self) -> anyhow::Result<PathBuf> {
        self.global.input.clone().ok_or_else(|| UsageError("--input is required".into()).into())
    }

    pub fn output(&self) -> anyhow::Result<PathBuf> {
        self.global.output.clone().ok_or_else(|| UsageError("--output is required".into()).into())
    }

    /// Thread records; any malformed line is a data error.
    pub fn read_threads(&mut self, path: &Path) -> anyhow::Result<Vec<Thread>> {
        let bytes = self.run.read(path)?;
        let parsed = parse_threads(bytes.as_slice()).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(e) = parsed.errors.first() {
            bail!("{}:{}: {} ({} bad lines)", path.display(), e.line, e.message, parsed.errors.len());
        }
        Ok(parsed.threads)
    }

    pub fn read_jsonl<T: DeserializeOwned>(&mut self, path: &Path) -> anyhow::Result<Vec<T>> {
        let text = self.run.read_string(path)?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), n + 1)))
            .collect()
    }

    pub fn read_gold(&mut self, path: &Path) -> anyhow::Result<Vec<AggregatedLabels>> {
        self.read_jsonl(path)
    }

    pub fn read_annotations(&mut self, path: &Path) -> anyhow::Result<Vec<WorkerAnnotation>> {
        let bytes = self.run.read(path)?;
        let (annos, errors) = read_annotations(bytes.as_slice())?;
        if let Some(e) = errors.first() {
            bail!("{}:{}: {} ({} bad lines)", path.display(), e.line, e.message, errors.len());
        }
        Ok(annos)
    }

    pub fn scorer(&mut self) -> anyhow::Result<Box<dyn Scorer>> {
        let spec = self.global.scorer.clone().ok_or_else(|| UsageError("--scorer is required".into()))?;
        let eou = self.global.eou_token.clone();
        if let Some(dir) = spec.strip_prefix("builtin:") {
            let dir = Path::new(dir);
            for f in [OFFENSIVE_MODEL_FILE, STANCE_MODEL_FILE] {
                if dir.join(f).is_file() {
                    self.run.note_input(&dir.join(f))?;
                }
            }
            let s = BuiltinScorer::from_dir(dir, eou).with_context(|| format!("loading models from {}", dir.display()))?;
            Ok(Box::new(s))
        } else if let Some(url) = spec.strip_prefix("remote:") {
            Ok(Box::new(RemoteScorer::new(RemoteConfig::new(url))?))
        } else {
            bail!(UsageError(format!("--scorer must be builtin:DIR or remote:URL, got {spec:?}")))
        }
    }

    pub fn lexicon(&mut self) -> anyhow::Result<Lexicon> {
        match self.global.lexicon.clone() {
            Some(p) => {
                let bytes = self.run.read(&p)?;
                Lexicon::from_csv(bytes.as_slice()).with_context(|| format!("loading lexicon {}", p.display()))
            }
            None => Ok(Lexicon::demo()),
        }
    }

    /// Writes to `--output` when given, stdout otherwise.
    pub fn emit(&mut self, text: &str) -> anyhow::Result<()> {
        match self.global.output.clone() {
            Some(p) => self.run.write(&p, text.as_bytes()),
            None => {
                std::io::stdout().lock().write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }
}

pub fn gold_map(gold: Vec<AggregatedLabels>) -> HashMap<String, AggregatedLabels> {
    gold.into_iter().map(|g| (g.thread.clone(), g)).collect()
}

pub fn threads_bytes(threads: &[Thread]) -> Vec<u8> {
    let mut out = Vec::new();
    write_threads(&mut out, threads).expect("writing to memory");
    out
}

pub fn jsonl_bytes<T: Serialize>(items: &[T]) -> anyhow::Result<Vec<u8>> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it)?;
        out.push(b'\n');
    }
    Ok(out)
}
