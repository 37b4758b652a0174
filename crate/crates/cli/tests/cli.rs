use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

use streampca::{synth, LayoutSnapshot, Pipeline, PipelineConfig, StreamEvent};
use tempfile::NamedTempFile;

fn streampca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streampca"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn event_file(events: &[StreamEvent]) -> NamedTempFile {
    let mut f = NamedTempFile::new().unwrap();
    for e in events {
        writeln!(f, "{}", e.to_line()).unwrap();
    }
    f
}

fn path(f: &NamedTempFile) -> &str {
    f.path().to_str().unwrap()
}

fn progressive() -> Vec<StreamEvent> {
    let rows = synth::latent_points(30, 5, 0.2, 4);
    synth::progressive_stream(&rows, 10)
}

#[test]
fn four_points_give_two_frames() {
    let events: Vec<StreamEvent> = (0..4)
        .map(|i| StreamEvent::new(format!("p{i}"), vec![i as f64, (i * i) as f64, 1.0 - i as f64], i as f64))
        .collect();
    let input = event_file(&events);
    let out = streampca(&["replay", "--input", path(&input)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let frames: Vec<&str> = stdout.lines().filter(|l| l.starts_with("seq")).collect();
    assert_eq!(frames.len(), 2);
    assert!(frames[1].contains("points      4"));
    assert!(stdout.lines().last().unwrap().starts_with("frames 2 stored 4"));
}

fn export(input: &Path, extra: &[&str]) -> Vec<u8> {
    let out = NamedTempFile::new().unwrap();
    let mut args = vec!["export", "--input", input.to_str().unwrap(), "--out", out.path().to_str().unwrap()];
    args.extend_from_slice(extra);
    let status = streampca(&args);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    std::fs::read(out.path()).unwrap()
}

#[test]
fn export_round_trips_in_memory_snapshots() {
    let events = progressive();
    let input = event_file(&events);
    let bytes = export(input.path(), &["--seed", "7"]);
    let exported: Vec<LayoutSnapshot> = String::from_utf8(bytes)
        .unwrap()
        .lines()
        .map(|l| LayoutSnapshot::from_json(l).unwrap())
        .collect();

    let mut config = PipelineConfig::new(5);
    config.seed = 7;
    let mut pipeline = Pipeline::new(config).unwrap();
    let in_memory: Vec<LayoutSnapshot> = events
        .into_iter()
        .filter_map(|e| pipeline.ingest(e).unwrap())
        .map(|s| (*s).clone())
        .collect();
    assert_eq!(exported.len(), in_memory.len());
    assert_eq!(exported, in_memory);
}

#[test]
fn exports_are_deterministic() {
    let input = event_file(&progressive());
    let flags = ["--seed", "3", "--sample-cap", "6", "--forget", "0.9", "--drop-old"];
    let a = export(input.path(), &flags);
    let b = export(input.path(), &flags);
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn malformed_input_fails_with_line_number() {
    let mut input = NamedTempFile::new().unwrap();
    writeln!(input, "{}", StreamEvent::new("a", vec![1.0, 2.0], 0.0).to_line()).unwrap();
    writeln!(input, "{{\"id\": 3}}").unwrap();
    let out = streampca(&["replay", "--input", path(&input)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn rejected_events_fail_the_replay() {
    let events = [
        StreamEvent::new("a", vec![1.0, 2.0], 0.0),
        StreamEvent::new("b", vec![2.0, 1.0], 1.0),
        StreamEvent::new("c", vec![1.0, 1.0], 2.0),
        StreamEvent::new("c", vec![5.0], 3.0),
    ];
    let input = event_file(&events);
    let out = streampca(&["replay", "--input", path(&input)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn bench_prints_a_grid() {
    let out = streampca(&["bench", "--grid-d", "5,8", "--grid-n", "20", "--reps", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3);
    for col in ["a1", "a2", "a3", "b1", "b2"] {
        assert!(lines[0].contains(col));
    }
    assert!(lines[1].trim_start().starts_with("5"));
    assert!(lines[2].trim_start().starts_with("8"));
}

#[test]
fn serve_requires_a_source() {
    let out = Command::new(env!("CARGO_BIN_EXE_streampca"))
        .args(["serve", "--dims", "3"])
        .env_remove("STREAMPCA_INPUT")
        .env_remove("STREAMPCA_LIVE")
        .output()
        .unwrap();
    assert!(!out.status.success());
}
