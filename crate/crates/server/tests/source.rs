use std::io::Write;
use std::time::{Duration, Instant};

use streampca::StreamEvent;
use streampca_server::source::{listen, replay};
use streampca_server::Source;
use tokio::io::AsyncWriteExt;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;

fn lines(n: usize) -> String {
    (0..n)
        .map(|i| StreamEvent::new(format!("e{i}"), vec![i as f64, 1.0], i as f64).to_line() + "\n")
        .collect()
}

#[tokio::test]
async fn replay_skips_malformed_lines() {
    let text = format!("{}not json\n\n{{\"id\":\"x\"}}\n{}", lines(2), lines(1));
    let (tx, mut rx) = mpsc::channel(16);
    let sent = replay(text.as_bytes(), None, tx).await.unwrap();
    assert_eq!(sent, 3);
    let mut ids = Vec::new();
    while let Some(e) = rx.recv().await {
        ids.push(e.id.to_string());
    }
    assert_eq!(ids, ["e0", "e1", "e0"]);
}

#[tokio::test]
async fn replay_respects_rate() {
    let text = lines(21);
    let (tx, mut rx) = mpsc::channel(64);
    let start = Instant::now();
    let sent = replay(text.as_bytes(), Some(200.0), tx).await.unwrap();
    assert_eq!(sent, 21);
    // 20 intervals of 5 ms
    assert!(start.elapsed() >= Duration::from_millis(95));
    let mut n = 0;
    while rx.recv().await.is_some() {
        n += 1;
    }
    assert_eq!(n, 21);
}

#[tokio::test]
async fn replay_source_reads_a_file() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(lines(5).as_bytes()).unwrap();
    let (tx, mut rx) = mpsc::channel(16);
    Source::Replay {
        path: file.path().to_path_buf(),
        rate: None,
    }
    .run(tx)
    .await
    .unwrap();
    let mut n = 0;
    while rx.recv().await.is_some() {
        n += 1;
    }
    assert_eq!(n, 5);
}

#[tokio::test]
async fn live_connections_are_forwarded() {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, mut rx) = mpsc::channel(16);
    tokio::spawn(listen(listener, tx));
    let mut conn = TcpStream::connect(addr).await.unwrap();
    conn.write_all(lines(3).as_bytes()).await.unwrap();
    conn.shutdown().await.unwrap();
    for i in 0..3 {
        let e = tokio::time::timeout(Duration::from_secs(5), rx.recv()).await.unwrap().unwrap();
        assert_eq!(e.id.as_str(), format!("e{i}"));
    }
}
