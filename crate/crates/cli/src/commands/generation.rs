use anyhow::bail;
use convsafe::ctg::{build_label_controlled, emit_atcon, emit_dapt, split_95_5, ControlToken};
use convsafe::eval::{ctg_auto_eval, emit_report, responses_from_threads, EvalReport, GeneratedResponse};
use convsafe::scorer::PseudoLabeledThread;

use super::Ctx;
use crate::args::{AutoevalArgs, CtgBuildArgs, CtgFormat};
use crate::UsageError;

/// `[SAFE][NEU]` style control sequence.
pub fn parse_controls(s: &str) -> Result<Vec<ControlToken>, String> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let end = rest.find(']').ok_or_else(|| format!("unterminated control token in {s:?}"))?;
        let tok = &rest[..=end];
        out.push(ControlToken::parse(tok).ok_or_else(|| format!("unknown control token {tok:?}"))?);
        rest = rest[end + 1..].trim_start();
    }
    if out.is_empty() {
        return Err("empty control set".into());
    }
    Ok(out)
}

pub fn ctg_build(ctx: &mut Ctx, a: CtgBuildArgs) -> anyhow::Result<()> {
    let input = ctx.input()?;
    let dir = ctx.output()?;
    let control = match (a.format, &a.control) {
        (CtgFormat::Dapt, Some(c)) => Some(parse_controls(c).map_err(UsageError)?),
        (CtgFormat::Dapt, None) => bail!(UsageError("dapt needs --control, e.g. [SAFE][NEU]".into())),
        (CtgFormat::Atcon, Some(_)) => bail!(UsageError("--control only applies to dapt".into())),
        (CtgFormat::Atcon, None) => None,
    };
    let labeled: Vec<PseudoLabeledThread> = ctx.read_jsonl(&input)?;
    let built = build_label_controlled(&labeled, a.experiment, a.size, ctx.global.seed);
    if let Some(short) = &built.shortfall {
        log::warn!("{short}; writing what qualified");
    }
    let (train, dev) = split_95_5(&built.examples, ctx.global.seed);
    let eou = ctx.global.eou_token.clone();
    let render = |part: &[_]| match &control {
        Some(c) => emit_dapt(part, c, &eou),
        None => emit_atcon(part, &eou),
    };
    let (train_text, dev_text) = (render(&train), render(&dev));
    ctx.run.write(&dir.join("train.txt"), train_text.as_bytes())?;
    ctx.run.write(&dir.join("dev.txt"), dev_text.as_bytes())?;
    eprintln!(
        "{} examples ({} train / {} dev); {} train lines written",
        built.examples.len(),
        train.len(),
        dev.len(),
        train_text.lines().count()
    );
    Ok(())
}

pub fn autoeval(ctx: &mut Ctx, a: AutoevalArgs) -> anyhow::Result<()> {
    let input = ctx.input()?;
    let responses: Vec<GeneratedResponse> = if a.responses {
        ctx.read_jsonl(&input)?
    } else {
        responses_from_threads(&ctx.read_threads(&input)?)
    };
    let scorer = ctx.scorer()?;
    let lexicon = ctx.lexicon()?;
    let rows = ctg_auto_eval(&responses, scorer.as_ref(), scorer.as_ref(), &lexicon, &ctx.global.eou_token)?;
    let mut report = EvalReport::default();
    for r in &rows {
        r.push_into(&mut report);
    }
    ctx.emit(&emit_report(&report, a.format))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_sequences() {
        assert_eq!(parse_controls("[SAFE][NEU]").unwrap(), vec![ControlToken::Safe, ControlToken::Neu]);
        assert_eq!(parse_controls(" [OFF] [AGR]").unwrap(), vec![ControlToken::Off, ControlToken::Agr]);
        assert!(parse_controls("[SAFE").is_err());
        assert!(parse_controls("[NOPE]").is_err());
        assert!(parse_controls("").is_err());
    }
}
