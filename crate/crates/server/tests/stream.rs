use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::Value;
use streampca::{PipelineConfig, StreamEvent};
use streampca_server::{focus_rect, router, spawn_pipeline, AppState, EventSender};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

const ROWS: [[f64; 4]; 8] = [
    [5.1, 3.5, 1.4, 0.2],
    [7.0, 3.2, 4.7, 1.4],
    [6.3, 3.3, 6.0, 2.5],
    [4.9, 3.0, 1.4, 0.2],
    [6.4, 3.2, 4.5, 1.5],
    [5.8, 2.7, 5.1, 1.9],
    [4.7, 3.2, 1.3, 0.2],
    [6.9, 3.1, 4.9, 1.5],
];

async fn start() -> (SocketAddr, EventSender) {
    let (events, frames, _writer) = spawn_pipeline(PipelineConfig::new(4)).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router(AppState::new(frames))).await.unwrap();
    });
    (addr, events)
}

async fn push_rows(events: &EventSender, rows: &[[f64; 4]], offset: usize) {
    for (i, row) in rows.iter().enumerate() {
        let event = StreamEvent::new(format!("p{}", offset + i), row.to_vec(), (offset + i) as f64);
        events.send(event).await.unwrap();
    }
}

async fn connect(addr: SocketAddr) -> Client {
    connect_async(format!("ws://{addr}/stream")).await.unwrap().0
}

async fn next_text(client: &mut Client) -> String {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), client.next())
            .await
            .expect("message within timeout")
            .expect("stream open")
            .unwrap();
        if let Message::Text(t) = msg {
            return t.to_string();
        }
    }
}

async fn next_json(client: &mut Client) -> Value {
    serde_json::from_str(&next_text(client).await).unwrap()
}

/// Reads until a snapshot with `seq`, returning its raw text.
async fn until_seq(client: &mut Client, seq: u64) -> String {
    loop {
        let text = next_text(client).await;
        let v: Value = serde_json::from_str(&text).unwrap();
        if v["kind"] == "snapshot" && v["seq"].as_u64().unwrap() >= seq {
            assert_eq!(v["seq"].as_u64().unwrap(), seq, "overshot");
            return text;
        }
    }
}

async fn healthz(addr: SocketAddr) -> Value {
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(b"GET /healthz HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut buf = String::new();
    s.read_to_string(&mut buf).await.unwrap();
    assert!(buf.starts_with("HTTP/1.1 200"), "{buf}");
    serde_json::from_str(buf.split("\r\n\r\n").nth(1).unwrap()).unwrap()
}

async fn wait_for_seq(addr: SocketAddr, seq: u64) -> Value {
    for _ in 0..500 {
        let h = healthz(addr).await;
        if h["seq"].as_u64().unwrap() >= seq {
            return h;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("seq {seq} never reached");
}

#[tokio::test]
async fn healthz_reports_seq_and_stored() {
    let (addr, events) = start().await;
    assert_eq!(healthz(addr).await, serde_json::json!({"seq": 0, "stored": 0}));
    push_rows(&events, &ROWS[..4], 0).await;
    let h = wait_for_seq(addr, 2).await;
    assert_eq!(h, serde_json::json!({"seq": 2, "stored": 4}));
}

#[tokio::test]
async fn clients_receive_identical_bytes() {
    let (addr, events) = start().await;
    let mut a = connect(addr).await;
    let mut b = connect(addr).await;
    push_rows(&events, &ROWS[..2], 0).await;
    let (ta, tb) = (until_seq(&mut a, 1).await, until_seq(&mut b, 1).await);
    assert_eq!(ta, tb);
    let v: Value = serde_json::from_str(&ta).unwrap();
    assert_eq!(v["kind"], "snapshot");
    assert!(v.get("focus").is_none());
    assert_eq!(v["snapshot"]["seq"], 1);
    assert_eq!(v["snapshot"]["layout"]["ids"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn late_joiner_starts_with_current_snapshot() {
    let (addr, events) = start().await;
    push_rows(&events, &ROWS[..6], 0).await;
    wait_for_seq(addr, 3).await;
    let mut late = connect(addr).await;
    let first = next_json(&mut late).await;
    assert_eq!(first["kind"], "snapshot");
    assert_eq!(first["seq"], 3);
    assert_eq!(first["snapshot"]["layout"]["ids"].as_array().unwrap().len(), 6);
    push_rows(&events, &ROWS[6..], 6).await;
    until_seq(&mut late, 4).await;
}

fn position(snapshot: &Value, id: &str) -> Vec<f64> {
    let layout = &snapshot["layout"];
    let k = layout["k"].as_u64().unwrap() as usize;
    let i = layout["ids"].as_array().unwrap().iter().position(|v| v == id).unwrap();
    let coords: Vec<f64> = layout["coords"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    coords[i * k..(i + 1) * k].to_vec()
}

#[tokio::test]
async fn selection_is_acked_and_focused() {
    let (addr, events) = start().await;
    let mut c = connect(addr).await;
    push_rows(&events, &ROWS[..6], 0).await;
    until_seq(&mut c, 3).await;

    let select = r#"{"kind":"select","seq":3,"mode":"selected-points","ids":["p0","p2","p4","ghost"]}"#;
    c.send(Message::Text(select.into())).await.unwrap();
    let ack = next_json(&mut c).await;
    assert_eq!(ack["kind"], "ack");
    assert_eq!(ack["seq"], 3);
    assert_eq!(ack["mode"], "selected-points");
    assert_eq!(ack["ids"], serde_json::json!(["p0", "p2", "p4"]));
    assert_eq!(ack["unknown"], serde_json::json!(["ghost"]));

    let snap = next_json(&mut c).await;
    assert_eq!(snap["seq"], 3);
    let pts: Vec<Vec<f64>> = ["p0", "p2", "p4"].iter().map(|id| position(&snap["snapshot"], id)).collect();
    let expected = focus_rect(pts.iter().map(Vec::as_slice), 1.0).unwrap();
    let focus = &snap["focus"];
    for j in 0..2 {
        let lo = pts.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max);
        let got_lo = focus["min"][j].as_f64().unwrap();
        let got_hi = focus["max"][j].as_f64().unwrap();
        assert_eq!(got_lo, expected.min[j]);
        assert!((got_lo - (lo - 0.2 * (hi - lo))).abs() < 1e-12);
        assert!((got_hi - (hi + 0.2 * (hi - lo))).abs() < 1e-12);
    }

    // the rectangle follows the points into the next frame
    push_rows(&events, &ROWS[6..], 6).await;
    let next = next_json(&mut c).await;
    assert_eq!(next["seq"], 4);
    let pts: Vec<Vec<f64>> = ["p0", "p2", "p4"].iter().map(|id| position(&next["snapshot"], id)).collect();
    let expected = focus_rect(pts.iter().map(Vec::as_slice), 1.0).unwrap();
    assert_eq!(next["focus"]["min"][0].as_f64().unwrap(), expected.min[0]);
    assert_eq!(next["focus"]["max"][1].as_f64().unwrap(), expected.max[1]);

    c.send(Message::Text(r#"{"kind":"select","seq":4,"mode":"off"}"#.into())).await.unwrap();
    assert_eq!(next_json(&mut c).await["kind"], "ack");
    let off = next_json(&mut c).await;
    assert_eq!(off["kind"], "snapshot");
    assert!(off.get("focus").is_none());
}

#[tokio::test]
async fn new_points_mode_tracks_partial_points() {
    let (addr, events) = start().await;
    let mut c = connect(addr).await;
    push_rows(&events, &ROWS[..4], 0).await;
    until_seq(&mut c, 2).await;
    c.send(Message::Text(r#"{"kind":"select","seq":2,"mode":"new-points"}"#.into())).await.unwrap();
    assert_eq!(next_json(&mut c).await["kind"], "ack");
    next_json(&mut c).await;
    events.send(StreamEvent::new("fresh", vec![6.1], 10.0)).await.unwrap();
    let snap = next_json(&mut c).await;
    assert_eq!(snap["seq"], 3);
    let p: Vec<f64> = snap["snapshot"]["partials"]["fresh"]["position"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    for j in 0..2 {
        assert!(snap["focus"]["min"][j].as_f64().unwrap() < p[j]);
        assert!(snap["focus"]["max"][j].as_f64().unwrap() > p[j]);
    }
}

#[tokio::test]
async fn bad_messages_get_errors() {
    let (addr, events) = start().await;
    let mut c = connect(addr).await;
    push_rows(&events, &ROWS[..2], 0).await;
    until_seq(&mut c, 1).await;

    c.send(Message::Text("not json".into())).await.unwrap();
    let err = next_json(&mut c).await;
    assert_eq!(err["kind"], "error");
    assert_eq!(err["seq"], 1);

    let select = r#"{"kind":"select","seq":1,"mode":"both","ids":["nobody"]}"#;
    c.send(Message::Text(select.into())).await.unwrap();
    let err = next_json(&mut c).await;
    assert_eq!(err["kind"], "error");

    // the session survives and acks still work
    c.send(Message::Text(r#"{"kind":"ack","seq":1}"#.into())).await.unwrap();
    c.send(Message::Text(r#"{"kind":"select","seq":1,"mode":"off"}"#.into())).await.unwrap();
    assert_eq!(next_json(&mut c).await["kind"], "ack");
}

#[tokio::test]
async fn stalled_client_does_not_hold_back_the_stream() {
    let (addr, events) = start().await;
    let mut stalled = connect(addr).await;
    let rows = streampca::synth::latent_points(1000, 4, 0.2, 1);
    let total = (rows.len() / 2) as u64;
    for (i, row) in rows.iter().enumerate() {
        events
            .send(StreamEvent::new(format!("q{i}"), row.clone(), i as f64))
            .await
            .unwrap();
    }
    let h = wait_for_seq(addr, total).await;
    assert_eq!(h["stored"], 1000);

    let mut fresh = connect(addr).await;
    assert_eq!(next_json(&mut fresh).await["seq"], total);

    // the stalled client sees an increasing subsequence ending at the latest
    let mut last = 0;
    let mut received = 0;
    while last < total {
        let v = next_json(&mut stalled).await;
        let seq = v["seq"].as_u64().unwrap();
        assert!(seq > last);
        last = seq;
        received += 1;
    }
    assert!(received <= total);
}
