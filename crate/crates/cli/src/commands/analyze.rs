use std::collections::BTreeMap;

use convsafe::eval::{
    agree_rate_by_context, corpus_stats, direct_vs_contextual, join_gold, profanity_share, target_group_top_k,
    temporal_stance_distribution,
};
use convsafe::scorer::PseudoLabeledThread;
use serde_json::{json, Value};

use super::Ctx;
use crate::args::{Analysis, AnalyzeArgs};
use crate::UsageError;

pub fn analyze(ctx: &mut Ctx, a: AnalyzeArgs) -> anyhow::Result<()> {
    let input = ctx.input()?;
    let value = if a.analysis == Analysis::Temporal {
        let labeled: Vec<PseudoLabeledThread> = ctx.read_jsonl(&input)?;
        serde_json::to_value(temporal_stance_distribution(&labeled))?
    } else {
        let gold_path = a.gold.clone().ok_or_else(|| UsageError("--gold is required for this analysis".into()))?;
        let threads = ctx.read_threads(&input)?;
        let gold = ctx.read_gold(&gold_path)?;
        let data = join_gold(&threads, &gold);
        match a.analysis {
            Analysis::AgreeRates => {
                let rows: BTreeMap<String, Value> = agree_rate_by_context(&data)
                    .into_iter()
                    .map(|(cat, r)| {
                        let v = json!({
                            "counts": r,
                            "agree_given_offensive": r.given_offensive(),
                            "agree_given_safe": r.given_safe(),
                        });
                        (cat, v)
                    })
                    .collect();
                serde_json::to_value(rows)?
            }
            Analysis::DirectVsContextual => {
                let rows: BTreeMap<String, Value> = direct_vs_contextual(&data)
                    .into_iter()
                    .map(|(cat, d)| {
                        let v = json!({"counts": d, "offensive_share_of_agreeing": d.offensive_share_of_agreeing()});
                        (cat, v)
                    })
                    .collect();
                serde_json::to_value(rows)?
            }
            Analysis::Targets => serde_json::to_value(target_group_top_k(&data, a.top_k, a.min_votes))?,
            Analysis::Profanity => {
                let lexicon = ctx.lexicon()?;
                serde_json::to_value(profanity_share(&data, &lexicon))?
            }
            Analysis::Stats => serde_json::to_value(corpus_stats(&threads, &gold))?,
            Analysis::Temporal => unreachable!("handled above"),
        }
    };
    ctx.emit(&(serde_json::to_string_pretty(&value)? + "\n"))
}
