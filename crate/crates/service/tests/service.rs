use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use chrono::{DateTime, Duration};
use convsafe::annotation::{aggregate_all, read_annotations, ItemAnnotation, Offensive4, Stance, WorkerAnnotation};
use convsafe::synthetic::{synthetic_corpus, SyntheticConfig};
use convsafe::Thread;
use convsafe_service::*;

fn threads(n: usize) -> Vec<Thread> {
    synthetic_corpus(&SyntheticConfig { threads: n, ..Default::default() }).threads
}

fn valid(worker: &str, t: &Thread) -> WorkerAnnotation {
    let items = (1..=t.len())
        .map(|i| ItemAnnotation {
            idx: i,
            off: if i % 2 == 0 { Offensive4::Yes } else { Offensive4::No },
            targets: if i % 2 == 0 { vec!["women".into()] } else { vec![] },
            stance: (1..i).map(|j| (j, if j + 1 == i { Stance::Agree } else { Stance::Neutral })).collect(),
            plausible: t.utterances[i - 1].speaker.is_bot().then_some(true),
        })
        .collect();
    WorkerAnnotation { worker: worker.into(), thread: t.id.clone(), items }
}

fn service(dir: &std::path::Path, ts: Vec<Thread>, clock: Arc<dyn Clock>) -> AnnotationService {
    let store = AnnotationStore::open(&dir.join("store.jsonl")).unwrap();
    AnnotationService::new(ts, store, ServiceConfig::default(), clock)
}

fn assigned(n: NextTask) -> TaskAssignment {
    match n {
        NextTask::Assigned(a) => a,
        NextTask::NoneAvailable => panic!("expected a task"),
    }
}

#[test]
fn fresh_worker_gets_five_slots_then_runs_out() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), threads(3), Arc::new(SystemClock));
    for _ in 0..3 {
        let a = assigned(svc.next_task("w1"));
        assert_eq!(a.remaining_slots, 5);
        let ack = svc.submit(&a.assignment_id, valid("w1", &a.thread)).unwrap();
        assert_eq!(ack.remaining_slots, 4);
    }
    assert_eq!(svc.next_task("w1"), NextTask::NoneAvailable);
    assert_eq!(svc.store().snapshot().records.len(), 3);
}

#[test]
fn missing_stance_pair_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut ts = threads(40);
    ts.retain(|t| t.len() == 3);
    let svc = service(dir.path(), ts, Arc::new(SystemClock));
    let a = assigned(svc.next_task("w"));
    let mut ann = valid("w", &a.thread);
    ann.items[2].stance.remove(&1);
    let err = svc.submit(&a.assignment_id, ann).unwrap_err();
    assert!(matches!(err, SubmitError::SchemaInvalid(_)));
    assert!(err.to_string().contains("(1<-3)"), "{err}");
    assert!(svc.store().snapshot().records.is_empty());
}

#[test]
fn duplicate_and_expired() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(DateTime::from_timestamp(1_700_000_000, 0).unwrap()));
    let svc = service(dir.path(), threads(4), clock.clone());
    let a = assigned(svc.next_task("w"));
    svc.submit(&a.assignment_id, valid("w", &a.thread)).unwrap();
    assert!(matches!(svc.submit(&a.assignment_id, valid("w", &a.thread)), Err(SubmitError::Duplicate(_))));

    let b = assigned(svc.next_task("w"));
    assert_eq!(assigned(svc.next_task("w")).assignment_id, b.assignment_id);
    clock.advance(Duration::minutes(31));
    assert!(matches!(svc.submit(&b.assignment_id, valid("w", &b.thread)), Err(SubmitError::LeaseExpired(_))));
    assert!(matches!(svc.submit("nope", valid("w", &b.thread)), Err(SubmitError::UnknownAssignment(_))));
    let c = assigned(svc.next_task("w"));
    assert_ne!(c.assignment_id, b.assignment_id);
}

#[test]
fn wrong_worker_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), threads(2), Arc::new(SystemClock));
    let a = assigned(svc.next_task("w1"));
    assert!(matches!(svc.submit(&a.assignment_id, valid("w2", &a.thread)), Err(SubmitError::SchemaInvalid(_))));
}

#[test]
fn leases_keep_threads_under_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), threads(1), Arc::new(SystemClock));
    let got: Vec<NextTask> = (0..7).map(|w| svc.next_task(&format!("w{w}"))).collect();
    assert_eq!(got.iter().filter(|n| matches!(n, NextTask::Assigned(_))).count(), 5);
}

#[test]
fn restart_preserves_acked_records_and_export_matches() {
    let dir = tempfile::tempdir().unwrap();
    let ts = threads(6);
    let mut in_memory = Vec::new();
    {
        let svc = service(dir.path(), ts.clone(), Arc::new(SystemClock));
        for w in 0..5 {
            let worker = format!("w{w}");
            while let NextTask::Assigned(a) = svc.next_task(&worker) {
                let ann = valid(&worker, &a.thread);
                svc.submit(&a.assignment_id, ann.clone()).unwrap();
                in_memory.push(ann);
            }
        }
    }
    let svc = service(dir.path(), ts, Arc::new(SystemClock));
    let p = svc.progress();
    assert_eq!(p.committed_annotations, 30);
    assert_eq!(p.complete_threads, 6);
    assert_eq!(svc.next_task("w0"), NextTask::NoneAvailable);
    assert_eq!(svc.next_task("fresh"), NextTask::NoneAvailable);

    let mut out = Vec::new();
    svc.store().export(&mut out).unwrap();
    let (exported, errs) = read_annotations(out.as_slice()).unwrap();
    assert!(errs.is_empty());
    assert_eq!(exported, in_memory);
    assert_eq!(aggregate_all(&exported, 2).unwrap(), aggregate_all(&in_memory, 2).unwrap());
    let mut again = Vec::new();
    svc.store().export(&mut again).unwrap();
    assert_eq!(out, again);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn sixteen_concurrent_workers_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let ts = threads(30);
    let svc = Arc::new(service(dir.path(), ts.clone(), Arc::new(SystemClock)));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(svc.clone(), Some(bundled_static_dir()));
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    let base = format!("http://{addr}");

    let mut handles = Vec::new();
    for w in 0..16 {
        let base = base.clone();
        handles.push(tokio::spawn(async move {
            let client = reqwest::Client::new();
            let worker = format!("worker{w:02}");
            let mut ids = Vec::new();
            loop {
                let next: NextTask =
                    client.get(format!("{base}/api/task?worker={worker}")).send().await.unwrap().json().await.unwrap();
                let NextTask::Assigned(a) = next else { break };
                let body = SubmitBody { assignment_id: a.assignment_id.clone(), annotation: valid(&worker, &a.thread) };
                let resp = client.post(format!("{base}/api/submit")).json(&body).send().await.unwrap();
                assert_eq!(resp.status(), 200, "{}", resp.text().await.unwrap());
                ids.push(a.assignment_id);
            }
            ids
        }));
    }
    let mut all_ids = Vec::new();
    for h in handles {
        all_ids.extend(h.await.unwrap());
    }
    let unique: HashSet<&String> = all_ids.iter().collect();
    assert_eq!(unique.len(), all_ids.len());
    assert_eq!(all_ids.len(), 30 * 5);

    let snap = svc.store().snapshot();
    let mut per_thread: HashMap<&str, usize> = HashMap::new();
    let mut pairs = HashSet::new();
    for r in &snap.records {
        *per_thread.entry(r.annotation.thread.as_str()).or_default() += 1;
        assert!(pairs.insert((r.annotation.worker.clone(), r.annotation.thread.clone())));
    }
    assert!(ts.iter().all(|t| per_thread[t.id.as_str()] == 5));

    let client = reqwest::Client::new();
    let progress: Progress = client.get(format!("{base}/api/progress")).send().await.unwrap().json().await.unwrap();
    assert_eq!(progress.complete_threads, 30);
    let t: Thread = client.get(format!("{base}/api/thread/{}", ts[0].id)).send().await.unwrap().json().await.unwrap();
    assert_eq!(t, ts[0]);
    assert_eq!(client.get(format!("{base}/api/thread/missing")).send().await.unwrap().status(), 404);
    let vocab: serde_json::Value = client.get(format!("{base}/api/vocab/targets")).send().await.unwrap().json().await.unwrap();
    assert!(vocab.to_string().contains("women"));
    assert_eq!(client.get(format!("{base}/api/task")).send().await.unwrap().status(), 400);
    let page = client.get(format!("{base}/")).send().await.unwrap();
    assert_eq!(page.status(), 200);
    assert!(page.text().await.unwrap().contains("<html"));

    let stale = SubmitBody { assignment_id: all_ids[0].clone(), annotation: valid("worker00", &ts[0]) };
    let resp = client.post(format!("{base}/api/submit")).json(&stale).send().await.unwrap();
    assert_eq!(resp.status(), 409);
    let err: ApiError = resp.json().await.unwrap();
    assert_eq!(err.error, "duplicate");
}
