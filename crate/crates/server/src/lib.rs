//! Runs a streaming PCA pipeline behind a websocket endpoint.
//!
//! Events arrive from a replayed file or live TCP connections, pass through a
//! single pipeline thread, and every emitted snapshot is offered to all
//! connected clients. Clients send tracking selections back and receive a
//! focus rectangle with each subsequent snapshot.

pub mod app;
pub mod error;
pub mod focus;
pub mod hub;
pub mod protocol;
pub mod source;

pub use app::{router, serve, AppState, ServeConfig};
pub use error::{Error, Result};
pub use focus::{focus_rect, FocusRect};
pub use hub::{spawn_pipeline, EventSender, Frame, FrameReceiver};
pub use protocol::{ClientMessage, TrackingMode, TrackingSelection};
pub use source::Source;
