//! HTTP fronts for the clinic and pharmacy services, and the blocking
//! clients that let a node reach remote ones.

pub mod api;
pub mod client;
pub mod clinic;
pub mod config;
pub mod pharmacy;

use axum::Router;
use std::net::SocketAddr;
use tower_http::services::ServeDir;

pub use client::{ApiClient, ClientError, HttpLocator, HttpSyncEndpoint, HttpTransport, RoutedTransport};
pub use config::ServerConfig;

/// Adds a static directory for the browser console behind the API routes.
pub fn with_ui(router: Router, dir: Option<std::path::PathBuf>) -> Router {
    match dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

/// Serves `router` on a background thread with its own runtime and returns
/// the bound address. Port 0 picks a free port.
pub fn spawn(addr: SocketAddr, router: Router) -> std::io::Result<SocketAddr> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
    std::thread::Builder::new().name(format!("http-{local}")).spawn(move || {
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
            if let Err(e) = axum::serve(listener, router).await {
                tracing::error!("server on {local} stopped: {e}");
            }
        })
    })?;
    Ok(local)
}
