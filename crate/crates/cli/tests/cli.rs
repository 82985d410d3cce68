use std::path::Path;
use std::process::{Command, Output};

use facebreed_cli::{scripted_settings, summary_path, ConvergenceSummary, LineupReport};
use facebreed_core::axes::AxisRegistry;
use facebreed_core::evolution::{MutationMode, MutationSettings};
use facebreed_core::session::{Action, Session};

fn evalharness(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evalharness")).args(args).output().unwrap()
}

fn facebreed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facebreed")).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn convergence_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("greedy.csv");
    let out = evalharness(&[
        "convergence", "--seeds", "4", "--generations", "10", "--policy", "greedy", "--dim", "16",
        "--report", s(&report),
    ]);
    ok(&out);
    let mut rdr = csv::Reader::from_path(&report).unwrap();
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["seed", "generation", "best_distance", "reduction"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4 * 11);
    let summary: ConvergenceSummary =
        serde_json::from_str(&std::fs::read_to_string(summary_path(&report)).unwrap()).unwrap();
    assert_eq!(summary.runs.len(), 4);
    assert!(summary.median_reduction > 0.0);
    for run in &summary.runs {
        assert!(run.final_distance <= run.initial_distance);
    }
}

#[test]
fn random_policy_runs() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("random.csv");
    ok(&evalharness(&[
        "convergence", "--seeds", "3", "--generations", "5", "--policy", "random", "--dim", "16",
        "--report", s(&report),
    ]));
    let summary: ConvergenceSummary =
        serde_json::from_str(&std::fs::read_to_string(summary_path(&report)).unwrap()).unwrap();
    assert_eq!(summary.generations, 5);
}

#[test]
fn lineups_judge_saved_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let sessions = dir.path().join("sessions");
    ok(&evalharness(&[
        "convergence", "--seeds", "3", "--generations", "30", "--dim", "16",
        "--report", s(&dir.path().join("r.csv")), "--sessions-dir", s(&sessions),
    ]));
    let mut files: Vec<String> = std::fs::read_dir(&sessions)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.to_str().unwrap().ends_with(".target.json"))
        .map(|p| p.to_str().unwrap().to_string())
        .collect();
    files.sort();
    assert_eq!(files.len(), 3);
    let report = dir.path().join("lineup.json");
    let mut args = vec!["lineup", "--sigma", "3.0", "--trials", "4", "--report", s(&report)];
    for f in &files {
        args.push("--session");
        args.push(f);
    }
    ok(&evalharness(&args));
    let report: LineupReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report.trials.len(), 12);
    assert_eq!(report.recognition_rate, 100.0);

    let out = evalharness(&["lineup", "--session", &files[0], "--sigma", "0"]);
    assert!(!out.status.success());
}

fn finished_session(dir: &Path, finish: bool) -> std::path::PathBuf {
    let (settings, registry) = scripted_settings(3, 16).unwrap();
    let mut settings = settings;
    settings.generator = settings.generator.with_resolution(24, 24);
    let mut session = Session::new(settings, registry).unwrap();
    session
        .apply(Action::Step {
            selected: vec![0, 1],
            locked: vec![],
            settings: MutationSettings::new(MutationMode::RandomChanges, 0.5).unwrap(),
        })
        .unwrap();
    if finish {
        session
            .apply(Action::Finish {
                selected: vec![2, 5, 8],
                frames_per_segment: 12,
            })
            .unwrap();
    }
    let path = dir.join(if finish { "done.json" } else { "open.json" });
    session.save(&path).unwrap();
    path
}

#[test]
fn export_writes_frames_and_gif() {
    let dir = tempfile::tempdir().unwrap();
    let session = finished_session(dir.path(), true);
    let out = dir.path().join("export");
    ok(&facebreed(&["export", "--session", s(&session), "--frames", "4", "--out", s(&out)]));
    let frames = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_str().unwrap().starts_with("frame_"))
        .count();
    assert_eq!(frames, 7);
    assert!(out.join("merged.png").exists());
    let gif = std::fs::read(out.join("animation.gif")).unwrap();
    assert_eq!(&gif[..3], b"GIF");
}

#[test]
fn export_refuses_open_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let session = finished_session(dir.path(), false);
    let out = facebreed(&["export", "--session", s(&session), "--frames", "4", "--out", s(&dir.path().join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not finished"));
}

#[test]
fn synthetic_axes_file_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("axes.json");
    ok(&facebreed(&["synthetic-axes", "--dim", "24", "--out", s(&path)]));
    let registry = AxisRegistry::load(&path).unwrap();
    assert_eq!(registry.dim(), 24);
    assert!(registry.contains("gender"));
}
