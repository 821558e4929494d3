use std::fs::File;
use std::io::BufWriter;
use std::sync::Arc;

use anyhow::Context;
use convsafe::annotation::TargetVocabulary;
use convsafe_service::{bundled_static_dir, router, AnnotationService, AnnotationStore, ServiceConfig, SystemClock};

use super::Ctx;
use crate::args::ServeArgs;
use crate::UsageError;

pub fn serve(mut ctx: Ctx, a: ServeArgs) -> anyhow::Result<()> {
    let store = AnnotationStore::open(&a.store).with_context(|| format!("opening {}", a.store.display()))?;
    if let Some(path) = &a.export {
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        let n = store.export(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        eprintln!("exported {n} annotations to {}", path.display());
        return Ok(());
    }
    if a.workers_per_thread == 0 || a.lease_ttl_minutes <= 0 {
        return Err(UsageError("workers per thread and lease ttl must be positive".into()).into());
    }
    let input = ctx.input()?;
    let threads = ctx.read_threads(&input)?;
    let vocab = match &a.targets {
        Some(p) => TargetVocabulary::parse(&ctx.run.read_string(p)?),
        None => TargetVocabulary::builtin(),
    };
    let cfg = ServiceConfig {
        workers_per_thread: a.workers_per_thread,
        lease_ttl: chrono::Duration::minutes(a.lease_ttl_minutes),
    };
    let n = threads.len();
    let svc = Arc::new(AnnotationService::new(threads, store, cfg, Arc::new(SystemClock)).with_vocabulary(vocab));
    let ui = a.ui_dir.clone().unwrap_or_else(bundled_static_dir);
    let app = router(svc, Some(ui));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.bind.as_str(), a.port))
            .await
            .with_context(|| format!("binding {}:{}", a.bind, a.port))?;
        eprintln!("serving {n} threads on http://{}", listener.local_addr()?);
        convsafe_service::serve(listener, app).await?;
        anyhow::Ok(())
    })
}
