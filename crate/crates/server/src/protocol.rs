//! Websocket messages. Every message is a JSON text frame with a `kind` and
//! a `seq` field.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use streampca::PointId;

use crate::focus::FocusRect;
use crate::hub::Frame;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackingMode {
    NewPoints,
    SelectedPoints,
    Both,
    #[default]
    Off,
}

impl TrackingMode {
    pub fn tracks_selection(self) -> bool {
        matches!(self, TrackingMode::SelectedPoints | TrackingMode::Both)
    }

    pub fn tracks_new(self) -> bool {
        matches!(self, TrackingMode::NewPoints | TrackingMode::Both)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrackingSelection {
    pub mode: TrackingMode,
    pub ids: BTreeSet<PointId>,
    /// Snapshot the client was looking at when it selected.
    pub issued_seq: u64,
}

/// Messages accepted from clients.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClientMessage {
    Select {
        seq: u64,
        mode: TrackingMode,
        #[serde(default)]
        ids: Vec<PointId>,
    },
    /// Receipt of a snapshot.
    Ack { seq: u64 },
}

#[derive(Serialize)]
struct Ack<'a> {
    kind: &'static str,
    seq: u64,
    mode: TrackingMode,
    ids: &'a BTreeSet<PointId>,
    #[serde(skip_serializing_if = "<[PointId]>::is_empty")]
    unknown: &'a [PointId],
}

#[derive(Serialize)]
struct ErrorMessage<'a> {
    kind: &'static str,
    seq: u64,
    message: &'a str,
}

/// `{"kind":"snapshot","seq":..,"focus":..,"snapshot":..}`; `focus` is
/// omitted when nothing is tracked. The snapshot body is spliced in from its
/// cached serialisation.
pub fn snapshot_message(frame: &Frame, focus: Option<&FocusRect>) -> String {
    let mut out = String::with_capacity(frame.json.len() + 96);
    out.push_str(r#"{"kind":"snapshot","seq":"#);
    out.push_str(&frame.seq.to_string());
    if let Some(f) = focus {
        out.push_str(r#","focus":"#);
        out.push_str(&serde_json::to_string(f).expect("focus serializes"));
    }
    out.push_str(r#","snapshot":"#);
    out.push_str(&frame.json);
    out.push('}');
    out
}

pub fn ack_message(selection: &TrackingSelection, unknown: &[PointId]) -> String {
    serde_json::to_string(&Ack {
        kind: "ack",
        seq: selection.issued_seq,
        mode: selection.mode,
        ids: &selection.ids,
        unknown,
    })
    .expect("ack serializes")
}

pub fn error_message(seq: u64, message: &str) -> String {
    serde_json::to_string(&ErrorMessage {
        kind: "error",
        seq,
        message,
    })
    .expect("error serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_select() {
        let m: ClientMessage =
            serde_json::from_str(r#"{"kind":"select","seq":4,"mode":"selected-points","ids":["a","b"]}"#).unwrap();
        assert_eq!(
            m,
            ClientMessage::Select {
                seq: 4,
                mode: TrackingMode::SelectedPoints,
                ids: vec![PointId::from("a"), PointId::from("b")],
            }
        );
        let m: ClientMessage = serde_json::from_str(r#"{"kind":"select","seq":0,"mode":"off"}"#).unwrap();
        assert!(matches!(m, ClientMessage::Select { mode: TrackingMode::Off, .. }));
    }

    #[test]
    fn rejects_unknown_kind() {
        assert!(serde_json::from_str::<ClientMessage>(r#"{"kind":"snapshot","seq":1}"#).is_err());
    }

    #[test]
    fn ack_and_error_shapes() {
        let selection = TrackingSelection {
            mode: TrackingMode::Both,
            ids: [PointId::from("x")].into_iter().collect(),
            issued_seq: 9,
        };
        assert_eq!(
            ack_message(&selection, &[PointId::from("gone")]),
            r#"{"kind":"ack","seq":9,"mode":"both","ids":["x"],"unknown":["gone"]}"#
        );
        assert_eq!(
            error_message(3, "bad"),
            r#"{"kind":"error","seq":3,"message":"bad"}"#
        );
    }
}
