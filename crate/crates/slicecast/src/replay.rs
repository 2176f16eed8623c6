//! HTTP replay of a frame as Prometheus gauges.
//!
//! `/metrics` renders the frame row holding at the current virtual time;
//! `/health` reports liveness. Both answer 503 until the service is marked
//! ready. The virtual time of each scrape is echoed in the
//! `x-replay-virtual-time` header so clients can check what they saw.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicI64, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use slicecast_core::preprocess::SeriesFrame;
use slicecast_core::telemetry::{render_exposition, ReplayClock};
use slicecast_core::Instant;
use tokio::sync::{oneshot, OnceCell};
use tokio::task::JoinHandle;

use crate::error::{Error, Result};

pub const CONTENT_TYPE: &str = "text/plain; version=0.0.4; charset=utf-8";
pub const VIRTUAL_TIME_HEADER: &str = "x-replay-virtual-time";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClockMode {
    /// Virtual time advances with wall time scaled by the speedup.
    Wall { speedup: f64 },
    /// Virtual time moves only through [`ReplayHandle::advance_to`].
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayOptions {
    pub bind: SocketAddr,
    pub mode: ClockMode,
    /// Virtual start; defaults to the first frame timestamp.
    pub start: Option<Instant>,
    /// Leave the service unready until [`ReplayHandle::set_ready`].
    pub defer_ready: bool,
}

struct Shared {
    frame: SeriesFrame,
    ready: AtomicBool,
    clock: Clock,
}

enum Clock {
    Wall {
        clock: ReplayClock,
        origin: OnceCell<std::time::Instant>,
    },
    Manual(AtomicI64),
}

impl Shared {
    fn now(&self) -> Instant {
        match &self.clock {
            Clock::Wall { clock, origin } => match origin.get() {
                Some(o) => clock.virtual_time(o.elapsed().as_secs_f64()),
                None => clock.start(),
            },
            Clock::Manual(t) => t.load(Ordering::SeqCst),
        }
    }

    fn mark_ready(&self) {
        if let Clock::Wall { origin, .. } = &self.clock {
            let _ = origin.set(std::time::Instant::now());
        }
        self.ready.store(true, Ordering::SeqCst);
    }
}

pub struct ReplayHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ReplayHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn set_ready(&self) {
        self.shared.mark_ready();
    }

    pub fn virtual_time(&self) -> Instant {
        self.shared.now()
    }

    pub fn last_timestamp(&self) -> Instant {
        *self
            .shared
            .frame
            .timestamps
            .last()
            .expect("frame is nonempty")
    }

    /// Moves a manual clock forward; earlier times are ignored so the
    /// clock never runs backwards. Returns the resulting virtual time.
    pub fn advance_to(&self, t: Instant) -> Instant {
        match &self.shared.clock {
            Clock::Manual(now) => now.fetch_max(t, Ordering::SeqCst).max(t),
            Clock::Wall { .. } => self.shared.now(),
        }
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(mut self) -> Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.task.await {
            Ok(r) => r.map_err(|e| Error::Replay(e.to_string())),
            Err(e) => Err(Error::Replay(e.to_string())),
        }
    }
}

async fn metrics(State(shared): State<Arc<Shared>>) -> Response {
    if !shared.ready.load(Ordering::SeqCst) {
        return (StatusCode::SERVICE_UNAVAILABLE, "starting\n").into_response();
    }
    let t = shared.now();
    let body = render_exposition(&shared.frame, t);
    let mut resp = body.into_response();
    let headers = resp.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(CONTENT_TYPE));
    headers.insert(VIRTUAL_TIME_HEADER, HeaderValue::from(t));
    resp
}

async fn health(State(shared): State<Arc<Shared>>) -> Response {
    if shared.ready.load(Ordering::SeqCst) {
        (StatusCode::OK, "ok\n").into_response()
    } else {
        (StatusCode::SERVICE_UNAVAILABLE, "starting\n").into_response()
    }
}

/// Binds `opts.bind` and serves `frame` until the handle is shut down.
/// Binding failures (for example a port in use) are returned here.
pub async fn serve(frame: SeriesFrame, opts: ReplayOptions) -> Result<ReplayHandle> {
    let first = *frame
        .timestamps
        .first()
        .ok_or_else(|| Error::Replay("frame has no rows".into()))?;
    let start = opts.start.unwrap_or(first);
    let clock = match opts.mode {
        ClockMode::Wall { speedup } => Clock::Wall {
            clock: ReplayClock::new(start, speedup)?,
            origin: OnceCell::new(),
        },
        ClockMode::Manual => Clock::Manual(AtomicI64::new(start)),
    };
    let listener = tokio::net::TcpListener::bind(opts.bind)
        .await
        .map_err(|e| Error::Replay(format!("cannot bind {}: {e}", opts.bind)))?;
    let addr = listener
        .local_addr()
        .map_err(|e| Error::Replay(e.to_string()))?;
    let shared = Arc::new(Shared {
        frame,
        ready: AtomicBool::new(false),
        clock,
    });
    let app = Router::new()
        .route("/metrics", get(metrics))
        .route("/health", get(health))
        .with_state(Arc::clone(&shared));
    let (stop, stopped) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    if !opts.defer_ready {
        shared.mark_ready();
    }
    log::info!(
        "replaying {} rows on http://{addr}/metrics",
        shared.frame.rows()
    );
    Ok(ReplayHandle {
        addr,
        shared,
        stop: Some(stop),
        task,
    })
}
