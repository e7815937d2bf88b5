use std::fs;

use v2v_fusion::association::Validation;
use v2v_fusion::cli::{resolve_scenario, run, RunOptions, GHOST_TEMP_ID, SPOOF_GHOST_VEHICLE};
use v2v_fusion::metrics::System;
use v2v_fusion::pipeline::{run_pipeline, PipelineOptions};
use v2v_fusion::scenario::{build_unprotected_left_scenario, load_scenario};
use v2v_fusion::v2v::read_capture;

#[test]
fn total_channel_loss_reduces_priority_to_local() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = RunOptions::builtin(dir.path());
    opts.channel_drop = Some(1.0);
    let out = run(&opts).unwrap();
    assert_eq!(out.messages_delivered, 0);
    assert!(out.messages_sent > 0);
    let (l, p) = (out.report.mean(System::Local), out.report.mean(System::Priority));
    for (a, b) in [
        (l.total, p.total),
        (l.localization, p.localization),
        (l.missed, p.missed),
        (l.false_tracks, p.false_tracks),
        (l.switching, p.switching),
    ] {
        assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }
    assert!(out
        .frames
        .iter()
        .all(|f| f.priority_list.is_empty() && f.v2v.is_empty()));
}

#[test]
fn disabling_v2v_matches_total_channel_loss() {
    let cfg = build_unprotected_left_scenario();
    let off = run_pipeline(
        &cfg,
        &PipelineOptions {
            disable_v2v: true,
            ..Default::default()
        },
        None,
    )
    .unwrap();
    let mut dropped = cfg.clone();
    dropped.channel.drop_prob = 1.0;
    let lost = run_pipeline(&dropped, &PipelineOptions::default(), None).unwrap();
    assert_eq!(off.report.to_csv(), lost.report.to_csv());
}

#[test]
fn without_local_sensors_nothing_is_validated() {
    let cfg = build_unprotected_left_scenario();
    let opts = PipelineOptions {
        disable_local: true,
        ..Default::default()
    };
    let out = run_pipeline(&cfg, &opts, None).unwrap();
    assert!(out
        .frames
        .iter()
        .all(|f| f.local.is_empty() && f.priority_list.is_empty()));
    assert_eq!(out.report.mean(System::V2v).missed, 0.0);
    // the cooperative view holds no unvalidated V2V tracks
    assert!(out.frames.iter().all(|f| f.priority_view.is_empty()));
}

#[test]
fn cli_writes_outputs_and_capture() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = RunOptions::builtin(dir.path());
    opts.capture_bsm = true;
    let out = run(&opts).unwrap();

    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("frame,system,total,localization,missed,false,switching")
    );
    assert_eq!(lines.count(), 3 * out.frames.len());

    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.starts_with("scenario: unprotected-left\n"));
    assert!(summary.contains("priority tracks from spoofed temp_ids: 0"));

    let jsonl = fs::read_to_string(dir.path().join("tracks.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), out.frames.len());
    let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(first["frame"], 0);
    assert_eq!(first["truth"].as_array().unwrap().len(), 6);

    let bytes = fs::read(dir.path().join("bsm.capture")).unwrap();
    let records = read_capture(&mut bytes.as_slice()).unwrap();
    assert_eq!(records.len(), out.messages_delivered);
    // five broadcasting vehicles, one message each per tick
    assert_eq!(records.len(), 5 * out.frames.len());
    assert!(records.windows(2).all(|w| w[0].0 <= w[1].0));
    let ids: std::collections::BTreeSet<u32> = records.iter().map(|r| r.1.temp_id).collect();
    let expected: std::collections::BTreeSet<u32> = out.temp_ids.values().copied().collect();
    assert_eq!(ids, expected);
}

#[test]
fn latency_delays_first_delivery() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = RunOptions::builtin(dir.path());
    opts.channel_latency = Some(3);
    let out = run(&opts).unwrap();
    assert!(out.frames[..3].iter().all(|f| f.v2v.is_empty()));
    assert_eq!(out.frames[3].v2v.len(), 5);
    assert_eq!(out.messages_delivered, out.messages_sent - 3 * 5);
}

#[test]
fn ghost_preset_broadcasts_but_is_never_admitted() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = RunOptions::builtin(dir.path());
    opts.spoof = Some(SPOOF_GHOST_VEHICLE.into());
    let out = run(&opts).unwrap();
    assert_eq!(out.spoofed_ids, vec![GHOST_TEMP_ID]);
    assert!(!matches!(
        out.validation.get(&GHOST_TEMP_ID),
        Some(Validation::Validated { .. })
    ));
    assert!(!out.frames.iter().any(|f| f
        .priority_list
        .iter()
        .any(|t| t.source_temp_id == Some(GHOST_TEMP_ID))));
    assert_eq!(out.spoofed_priority_tracks, 0);
    assert!(out.report.mean(System::V2v).false_tracks > 0.0);
}

#[test]
fn scenario_file_round_trips_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.json");
    fs::write(&path, include_str!("../scenarios/unprotected_left.json")).unwrap();
    let from_file = RunOptions {
        scenario: Some(path.clone()),
        builtin: None,
        ..RunOptions::builtin(dir.path().join("a"))
    };
    let cfg = resolve_scenario(&from_file).unwrap();
    assert_eq!(cfg, build_unprotected_left_scenario());
    let a = run(&from_file).unwrap();
    let b = run(&RunOptions::builtin(dir.path().join("b"))).unwrap();
    assert_eq!(a.report.to_csv(), b.report.to_csv());
}

#[test]
fn bad_options_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = RunOptions::builtin(dir.path());
    opts.builtin = Some("roundabout".into());
    assert!(run(&opts).is_err());

    let mut opts = RunOptions::builtin(dir.path());
    opts.channel_drop = Some(1.5);
    assert!(run(&opts).is_err());

    let mut opts = RunOptions::builtin(dir.path());
    opts.spoof = Some("replay".into());
    assert!(run(&opts).is_err());

    let mut opts = RunOptions::builtin(dir.path());
    opts.gospa_c = 0.0;
    assert!(run(&opts).is_err());

    assert!(load_scenario("{\"name\": 3}").is_err());
}
