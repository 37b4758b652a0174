//! The pipeline thread and the channel that publishes its latest frame.

use std::sync::Arc;
use std::thread::JoinHandle;

use streampca::{LayoutSnapshot, Pipeline, PipelineConfig, StreamEvent};
use tokio::sync::{mpsc, watch};

use crate::error::Result;

/// Events waiting for the pipeline thread. Sources block once it is full.
pub const EVENT_QUEUE: usize = 1024;

/// A snapshot together with its serialisation, shared by every client.
#[derive(Debug)]
pub struct Frame {
    pub seq: u64,
    pub stored: usize,
    pub snapshot: Arc<LayoutSnapshot>,
    pub json: Arc<str>,
}

pub type EventSender = mpsc::Sender<StreamEvent>;
pub type FrameReceiver = watch::Receiver<Option<Arc<Frame>>>;

/// Starts the single writer. It runs until every [`EventSender`] is dropped.
/// Rejected events are logged and skipped.
pub fn spawn_pipeline(config: PipelineConfig) -> Result<(EventSender, FrameReceiver, JoinHandle<Pipeline>)> {
    let mut pipeline = Pipeline::new(config)?;
    let (events_tx, mut events_rx) = mpsc::channel::<StreamEvent>(EVENT_QUEUE);
    let (frames_tx, frames_rx) = watch::channel(None);
    let handle = std::thread::Builder::new()
        .name("pipeline".into())
        .spawn(move || {
            while let Some(event) = events_rx.blocking_recv() {
                let id = event.id.clone();
                match pipeline.ingest(event) {
                    Ok(Some(snapshot)) => {
                        let frame = Frame {
                            seq: snapshot.seq,
                            stored: pipeline.stored(),
                            json: snapshot.to_json().into(),
                            snapshot,
                        };
                        frames_tx.send_replace(Some(Arc::new(frame)));
                    }
                    Ok(None) => {}
                    Err(e) => tracing::warn!(%id, error = %e, "event skipped"),
                }
            }
            pipeline
        })?;
    Ok((events_tx, frames_rx, handle))
}
