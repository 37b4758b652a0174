//! Event sources feeding the pipeline.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use streampca::StreamEvent;
use tokio::io::{AsyncBufRead, AsyncBufReadExt, BufReader};
use tokio::net::TcpListener;
use tokio::time::{interval, MissedTickBehavior};

use crate::error::{Error, Result};
use crate::hub::EventSender;

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// A line-delimited event file, sent at `rate` events per second (as
    /// fast as the pipeline accepts them when `None`).
    Replay { path: PathBuf, rate: Option<f64> },
    /// Line-delimited events pushed by any number of TCP connections.
    Live { addr: SocketAddr },
}

impl Source {
    pub async fn run(self, tx: EventSender) -> Result<()> {
        match self {
            Source::Replay { path, rate } => {
                let file = tokio::fs::File::open(&path).await?;
                let sent = replay(BufReader::new(file), rate, tx).await?;
                tracing::info!(path = %path.display(), sent, "replay finished");
                Ok(())
            }
            Source::Live { addr } => listen(TcpListener::bind(addr).await?, tx).await,
        }
    }
}

/// Sends every well-formed line of `reader`; malformed lines are logged and
/// skipped. Returns the number of events sent.
pub async fn replay<R: AsyncBufRead + Unpin>(reader: R, rate: Option<f64>, tx: EventSender) -> Result<usize> {
    let mut ticker = rate.filter(|r| *r > 0.0).map(|r| {
        let mut t = interval(Duration::from_secs_f64(1.0 / r));
        t.set_missed_tick_behavior(MissedTickBehavior::Delay);
        t
    });
    let mut lines = reader.lines();
    let mut line_no = 0usize;
    let mut sent = 0usize;
    while let Some(line) = lines.next_line().await? {
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        let event = match StreamEvent::parse_line(&line) {
            Ok(e) => e,
            Err(e) => {
                tracing::warn!(line = line_no, error = %e, "malformed event skipped");
                continue;
            }
        };
        if let Some(t) = ticker.as_mut() {
            t.tick().await;
        }
        tx.send(event).await.map_err(|_| Error::PipelineStopped)?;
        sent += 1;
    }
    Ok(sent)
}

/// Accepts connections forever, forwarding each one's events in order.
pub async fn listen(listener: TcpListener, tx: EventSender) -> Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        tracing::info!(%peer, "event source connected");
        let tx = tx.clone();
        tokio::spawn(async move {
            match replay(BufReader::new(stream), None, tx).await {
                Ok(sent) => tracing::info!(%peer, sent, "event source closed"),
                Err(e) => tracing::warn!(%peer, error = %e, "event source failed"),
            }
        });
    }
}
