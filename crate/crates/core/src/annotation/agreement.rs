use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{map_offense_4to2, Stance, WorkerAnnotation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgreementError {
    #[error("not enough multiply-coded items")]
    NotEnoughData,
    #[error("label lists differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("no labels")]
    Empty,
}

/// Items x coders table of nominal labels; `None` marks a missing coding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reliability<L> {
    pub units: Vec<Vec<Option<L>>>,
    pub coders: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub krippendorff_alpha: f64,
    pub pairwise_agreement: f64,
    /// Items coded at least twice.
    pub n_items: usize,
    pub n_coders: usize,
}

fn present<L>(row: &[Option<L>]) -> Vec<&L> {
    row.iter().flatten().collect()
}

/// Nominal Krippendorff's alpha via the coincidence matrix. Units with fewer
/// than two codings are ignored; when every pairable value is identical the
/// result is 1.
pub fn krippendorff_alpha<L: Ord + Clone>(units: &[Vec<Option<L>>]) -> Result<f64, AgreementError> {
    let mut coincidence: BTreeMap<(L, L), f64> = BTreeMap::new();
    let mut pairable = 0usize;
    for row in units {
        let vals = present(row);
        let m = vals.len();
        if m < 2 {
            continue;
        }
        pairable += 1;
        let w = 1.0 / (m - 1) as f64;
        for (a, va) in vals.iter().enumerate() {
            for (b, vb) in vals.iter().enumerate() {
                if a != b {
                    *coincidence.entry(((*va).clone(), (*vb).clone())).or_default() += w;
                }
            }
        }
    }
    if pairable < 2 {
        return Err(AgreementError::NotEnoughData);
    }
    let mut marginals: BTreeMap<L, f64> = BTreeMap::new();
    let mut observed = 0.0;
    for ((c, k), o) in &coincidence {
        *marginals.entry(c.clone()).or_default() += o;
        if c != k {
            observed += o;
        }
    }
    let n: f64 = marginals.values().sum();
    let mut expected = 0.0;
    for (c, nc) in &marginals {
        for (k, nk) in &marginals {
            if c != k {
                expected += nc * nk;
            }
        }
    }
    if expected == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

/// Mean over multiply-coded items of the share of coder pairs that agree.
pub fn pairwise_agreement<L: PartialEq>(units: &[Vec<Option<L>>]) -> Result<f64, AgreementError> {
    let mut sum = 0.0;
    let mut items = 0usize;
    for row in units {
        let vals = present(row);
        let m = vals.len();
        if m < 2 {
            continue;
        }
        let mut agree = 0usize;
        for a in 0..m {
            for b in a + 1..m {
                if vals[a] == vals[b] {
                    agree += 1;
                }
            }
        }
        sum += agree as f64 / (m * (m - 1) / 2) as f64;
        items += 1;
    }
    if items == 0 {
        return Err(AgreementError::NotEnoughData);
    }
    Ok(sum / items as f64)
}

/// Cohen's kappa for two coders with marginal-product chance agreement.
pub fn cohens_kappa<L: Ord>(a: &[L], b: &[L]) -> Result<f64, AgreementError> {
    if a.len() != b.len() {
        return Err(AgreementError::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.is_empty() {
        return Err(AgreementError::Empty);
    }
    let n = a.len() as f64;
    let po = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut ma: BTreeMap<&L, f64> = BTreeMap::new();
    let mut mb: BTreeMap<&L, f64> = BTreeMap::new();
    for x in a {
        *ma.entry(x).or_default() += 1.0;
    }
    for y in b {
        *mb.entry(y).or_default() += 1.0;
    }
    let pe: f64 = ma.iter().map(|(k, ca)| ca * mb.get(k).copied().unwrap_or(0.0)).sum::<f64>() / (n * n);
    if pe == 1.0 {
        return Ok(1.0);
    }
    Ok((po - pe) / (1.0 - pe))
}

pub fn agreement_report<L: Ord + Clone>(r: &Reliability<L>) -> Result<AgreementReport, AgreementError> {
    Ok(AgreementReport {
        krippendorff_alpha: krippendorff_alpha(&r.units)?,
        pairwise_agreement: pairwise_agreement(&r.units)?,
        n_items: r.units.iter().filter(|u| u.iter().flatten().count() >= 2).count(),
        n_coders: r.coders,
    })
}

fn build<L: Clone>(
    annos: &[WorkerAnnotation],
    mut extract: impl FnMut(&WorkerAnnotation, &mut dyn FnMut((String, usize, usize), L)),
) -> Reliability<L> {
    let workers: BTreeSet<&str> = annos.iter().map(|a| a.worker.as_str()).collect();
    let col: BTreeMap<&str, usize> = workers.iter().enumerate().map(|(i, w)| (*w, i)).collect();
    let mut rows: BTreeMap<(String, usize, usize), Vec<Option<L>>> = BTreeMap::new();
    for a in annos {
        let c = col[a.worker.as_str()];
        extract(a, &mut |key, v| {
            rows.entry(key).or_insert_with(|| vec![None; workers.len()])[c] = Some(v);
        });
    }
    Reliability { units: rows.into_values().collect(), coders: workers.len() }
}

/// One unit per (thread, utterance), binary offensive labels.
pub fn offensive_reliability(annos: &[WorkerAnnotation]) -> Reliability<bool> {
    build(annos, |a, put| {
        for it in &a.items {
            put((a.thread.clone(), it.idx, 0), map_offense_4to2(it.off));
        }
    })
}

/// One unit per (thread, earlier, later) stance pair.
pub fn stance_reliability(annos: &[WorkerAnnotation]) -> Reliability<Stance> {
    build(annos, |a, put| {
        for it in &a.items {
            for (&j, &s) in &it.stance {
                put((a.thread.clone(), j, it.idx), s);
            }
        }
    })
}
