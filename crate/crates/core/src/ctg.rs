//! Label-controlled fine-tuning corpora for controllable response generation.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::Stance;
use crate::corpus::{flatten_texts, split_eou};
use crate::scorer::{HighPrecisionLabel, PseudoLabeledThread};
use crate::{OFFENSIVE, SAFE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ControlToken {
    Safe,
    Off,
    Neu,
    Agr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Offense,
    Stance,
}

impl ControlToken {
    pub const ALL: [ControlToken; 4] = [ControlToken::Safe, ControlToken::Off, ControlToken::Neu, ControlToken::Agr];

    pub fn render(self) -> &'static str {
        match self {
            ControlToken::Safe => "[SAFE]",
            ControlToken::Off => "[OFF]",
            ControlToken::Neu => "[NEU]",
            ControlToken::Agr => "[AGR]",
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            ControlToken::Safe | ControlToken::Off => Axis::Offense,
            ControlToken::Neu | ControlToken::Agr => Axis::Stance,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.render() == s)
    }
}

impl fmt::Display for ControlToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.render())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    OffenseOnly,
    StanceOnly,
    Both,
}

impl std::str::FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "offense" | "offense_only" => Ok(Self::OffenseOnly),
            "stance" | "stance_only" => Ok(Self::StanceOnly),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown experiment {other:?}")),
        }
    }
}

impl Experiment {
    fn uses(self, axis: Axis) -> bool {
        !matches!((self, axis), (Experiment::OffenseOnly, Axis::Stance) | (Experiment::StanceOnly, Axis::Offense))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelControlledExample {
    pub context: Vec<String>,
    pub controls: Vec<ControlToken>,
    pub response: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CtgError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("only {found} examples qualify, wanted {wanted}")]
    InsufficientData { found: usize, wanted: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOutcome {
    pub examples: Vec<LabelControlledExample>,
    /// Set when fewer than the requested number of examples qualified.
    pub shortfall: Option<CtgError>,
}

fn clean(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

/// Control tokens for a pseudo-labeled thread, or `None` when it does not
/// qualify for `exp`.
pub fn controls_for(p: &PseudoLabeledThread, exp: Experiment) -> Option<Vec<ControlToken>> {
    if p.thread.len() < 2 {
        return None;
    }
    // Disagreeing replies are never used, whichever axes are controlled.
    if p.stance == HighPrecisionLabel::Class(Stance::Disagree.index()) {
        return None;
    }
    let mut ct = Vec::with_capacity(2);
    if exp.uses(Axis::Offense) {
        ct.push(match p.offensive {
            HighPrecisionLabel::Class(c) if c == SAFE => ControlToken::Safe,
            HighPrecisionLabel::Class(c) if c == OFFENSIVE => ControlToken::Off,
            _ => return None,
        });
    }
    if exp.uses(Axis::Stance) {
        if exp == Experiment::StanceOnly && !p.context_offensive.iter().all(|l| *l == HighPrecisionLabel::Class(SAFE)) {
            return None;
        }
        ct.push(match p.stance.class().and_then(Stance::from_index) {
            Some(Stance::Neutral) => ControlToken::Neu,
            Some(Stance::Agree) => ControlToken::Agr,
            _ => return None,
        });
    }
    Some(ct)
}

/// Qualifying examples, capped at `target` by seeded sampling that keeps
/// each control combination's share (largest-remainder rounding). Output
/// keeps input order.
pub fn build_label_controlled(threads: &[PseudoLabeledThread], exp: Experiment, target: usize, seed: u64) -> BuildOutcome {
    let qualified: Vec<(usize, Vec<ControlToken>)> =
        threads.iter().enumerate().filter_map(|(i, p)| controls_for(p, exp).map(|ct| (i, ct))).collect();
    let n = qualified.len();
    let shortfall = (n < target).then(|| {
        log::warn!("only {n} threads qualify for {exp:?}, wanted {target}");
        CtgError::InsufficientData { found: n, wanted: target }
    });
    let keep: Vec<usize> = if n <= target {
        (0..n).collect()
    } else {
        let mut groups: BTreeMap<&[ControlToken], Vec<usize>> = BTreeMap::new();
        for (q, (_, ct)) in qualified.iter().enumerate() {
            groups.entry(ct.as_slice()).or_default().push(q);
        }
        let mut quotas: Vec<(usize, usize, usize)> = groups
            .values()
            .enumerate()
            .map(|(g, members)| {
                let exact = members.len() * target;
                (g, exact / n, exact % n)
            })
            .collect();
        let assigned: usize = quotas.iter().map(|q| q.1).sum();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| quotas[b].2.cmp(&quotas[a].2).then(a.cmp(&b)));
        for &g in order.iter().take(target - assigned) {
            quotas[g].1 += 1;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = Vec::with_capacity(target);
        for ((_, quota, _), members) in quotas.iter().zip(groups.values()) {
            let mut m = members.clone();
            m.shuffle(&mut rng);
            keep.extend(m.into_iter().take(*quota));
        }
        keep.sort_unstable();
        keep
    };
    let examples = keep
        .into_iter()
        .map(|q| {
            let (i, ct) = &qualified[q];
            let t = &threads[*i].thread;
            let (last, ctx) = t.utterances.split_last().expect("len >= 2");
            LabelControlledExample {
                context: ctx.iter().map(|u| clean(&u.text)).collect(),
                controls: ct.clone(),
                response: clean(&last.text),
            }
        })
        .collect();
    BuildOutcome { examples, shortfall }
}

/// Seeded shuffle, then the first `floor(0.95 n)` items are train.
pub fn split_95_5<T: Clone>(items: &[T], seed: u64) -> (Vec<T>, Vec<T>) {
    let mut v = items.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = items.len() * 95 / 100;
    let dev = v.split_off(n_train);
    (v, dev)
}

pub fn atcon_line(ex: &LabelControlledExample, eou: &str) -> String {
    let mut s = flatten_texts(ex.context.iter().map(String::as_str), eou);
    for t in &ex.controls {
        s.push_str(t.render());
    }
    s.push(' ');
    s.push_str(&ex.response);
    s
}

pub fn emit_atcon(examples: &[LabelControlledExample], eou: &str) -> String {
    examples.iter().map(|e| atcon_line(e, eou) + "\n").collect()
}

/// Inverse of [`atcon_line`]. The context ends at the first end-of-utterance
/// marker that is followed by control tokens and a space.
pub fn parse_atcon_line(line: &str, eou: &str) -> Result<LabelControlledExample, CtgError> {
    let err = |m: &str| CtgError::Parse { line: 0, message: m.to_string() };
    for (pos, _) in line.match_indices(eou) {
        let ctx_end = pos + eou.len();
        let mut rest = &line[ctx_end..];
        let mut controls = Vec::new();
        while let Some(t) = ControlToken::ALL.into_iter().find(|t| rest.starts_with(t.render())) {
            controls.push(t);
            rest = &rest[t.render().len()..];
        }
        if controls.is_empty() {
            continue;
        }
        let Some(response) = rest.strip_prefix(' ') else { continue };
        return Ok(LabelControlledExample {
            context: split_eou(&line[..ctx_end], eou),
            controls,
            response: response.to_string(),
        });
    }
    Err(err("no context terminator followed by control tokens"))
}

pub fn parse_atcon(text: &str, eou: &str) -> Result<Vec<LabelControlledExample>, CtgError> {
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            parse_atcon_line(l, eou).map_err(|e| match e {
                CtgError::Parse { message, .. } => CtgError::Parse { line: i + 1, message },
                other => other,
            })
        })
        .collect()
}

/// Examples whose control set equals `control`, without tokens.
pub fn emit_dapt(examples: &[LabelControlledExample], control: &[ControlToken], eou: &str) -> String {
    let mut want = control.to_vec();
    want.sort();
    let mut out = String::new();
    for e in examples {
        let mut have = e.controls.clone();
        have.sort();
        if have == want {
            out.push_str(&flatten_texts(e.context.iter().map(String::as_str), eou));
            out.push(' ');
            out.push_str(&e.response);
            out.push('\n');
        }
    }
    out
}
