//! Listeners for the HTTP API and the raw device port.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinSet;

use super::{router, Host, HostError};
use crate::protocol::{BindingToken, TOKEN_LEN};

const TOKEN_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServeHandles {
    pub http_addr: SocketAddr,
    pub device_addr: SocketAddr,
}

/// Serves until `shutdown` resolves, then closes device links and syncs
/// every open log.
pub async fn serve(
    host: Arc<Host>,
    http: TcpListener,
    device: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), HostError> {
    let (stop_tx, stop_rx) = watch::channel(false);
    let mut http_stop = stop_rx.clone();
    let app = router(host.clone());
    let http_task = tokio::spawn(async move {
        axum::serve(http, app)
            .with_graceful_shutdown(async move {
                let _ = http_stop.wait_for(|s| *s).await;
            })
            .await
    });

    let device_host = host.clone();
    let mut device_stop = stop_rx.clone();
    let device_task = tokio::spawn(async move {
        let mut conns = JoinSet::new();
        loop {
            tokio::select! {
                _ = device_stop.wait_for(|s| *s) => break,
                accepted = device.accept() => match accepted {
                    Ok((stream, peer)) => {
                        let host = device_host.clone();
                        conns.spawn(async move {
                            if let Err(e) = handle_device_stream(host, stream, peer).await {
                                tracing::warn!(%peer, "device connection ended: {e}");
                            }
                        });
                    }
                    Err(e) => tracing::warn!("device accept failed: {e}"),
                },
                Some(_) = conns.join_next(), if !conns.is_empty() => {}
            }
        }
        conns.shutdown().await;
    });

    shutdown.await;
    tracing::info!("shutting down");
    let _ = stop_tx.send(true);
    let _ = device_task.await;
    match http_task.await {
        Ok(Ok(())) => {}
        Ok(Err(e)) => tracing::warn!("http server error: {e}"),
        Err(e) => tracing::warn!("http task failed: {e}"),
    }
    host.sync_all()
}

/// One device connection: 16 token bytes, then framed telemetry.
pub async fn handle_device_stream(host: Arc<Host>, stream: TcpStream, peer: SocketAddr) -> Result<(), HostError> {
    let _ = stream.set_nodelay(true);
    let (mut reader, mut writer) = stream.into_split();
    let mut token = [0u8; TOKEN_LEN];
    tokio::time::timeout(TOKEN_TIMEOUT, reader.read_exact(&mut token))
        .await
        .map_err(|_| HostError::Rejected("no binding token".into()))?
        .map_err(|e| HostError::Rejected(format!("reading binding token: {e}")))?;

    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<Vec<u8>>();
    let mut conn = host.connect_device(
        BindingToken(token),
        &format!("tcp:{peer}"),
        Box::new(move |bytes| out_tx.send(bytes).is_ok()),
    )?;
    tracing::info!(%peer, session = conn.session_id(), "device bound");
    let write_task = tokio::spawn(async move {
        while let Some(bytes) = out_rx.recv().await {
            if writer.write_all(&bytes).await.is_err() {
                break;
            }
        }
    });

    let mut buf = vec![0u8; 8192];
    let result = loop {
        match reader.read(&mut buf).await {
            Ok(0) => break conn.finish().map(|_| ()),
            Ok(n) => {
                if let Err(e) = conn.ingest(&buf[..n]) {
                    break Err(e);
                }
            }
            Err(e) => break Err(HostError::Rejected(format!("read: {e}"))),
        }
    };
    let stats = conn.stats();
    tracing::info!(%peer, crc_failures = stats.crc_failures, seq_gaps = stats.seq_gaps, "device disconnected");
    drop(conn);
    write_task.abort();
    result
}
