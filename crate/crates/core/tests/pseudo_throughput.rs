use std::time::Instant;

use convsafe::scorer::{
    calibrate_thresholds, Grid, PseudoLabeler, ScoreVector, Scorer, ScorerError, ScoringInput, Task, ThresholdTable,
};
use convsafe::synthetic::{synthetic_corpus, SyntheticConfig};

/// Constant-time scorer so the measurement covers only the labeling path.
struct Flat;

impl Scorer for Flat {
    fn score_batch(&self, task: Task, items: &[ScoringInput]) -> Result<Vec<ScoreVector>, ScorerError> {
        let probs = match task {
            Task::Offensive => vec![0.2, 0.8],
            Task::Stance => vec![0.1, 0.8, 0.1],
        };
        items.iter().map(|_| ScoreVector::new(task, probs.clone())).collect()
    }
}

fn table(task: Task) -> ThresholdTable {
    let n = task.n_classes();
    let scores: Vec<ScoreVector> = (0..n)
        .map(|c| ScoreVector::new(task, (0..n).map(|k| (k == c) as u8 as f64).collect()).unwrap())
        .collect();
    calibrate_thresholds(task, &scores, &(0..n).collect::<Vec<_>>(), 0.75, Grid::default()).unwrap()
}

#[test]
fn labels_at_least_a_thousand_threads_per_second() {
    let threads = synthetic_corpus(&SyntheticConfig { threads: 5000, workers_per_thread: 0, ..Default::default() }).threads;
    let (off, st) = (table(Task::Offensive), table(Task::Stance));
    let labeler = PseudoLabeler::new(&Flat, &off, &st, "[EOU]").unwrap();
    let start = Instant::now();
    let mut n = 0;
    labeler
        .label_stream(threads, |p| {
            assert!(p.offensive.class().is_some());
            n += 1;
            Ok(())
        })
        .unwrap();
    let rate = n as f64 / start.elapsed().as_secs_f64();
    eprintln!("{n} threads at {rate:.0} threads/s");
    assert_eq!(n, 5000);
    assert!(rate >= 1000.0, "{rate:.0} threads/s");
}
