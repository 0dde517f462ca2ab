use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] =
    &["--set", "detector.chunk_size=2048", "--set", "sim.lead_in_max_samples=1500", "--set", "grid.repetitions=2"];

fn alto(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alto")).args(args).output().expect("spawn alto")
}

fn ok(args: &[&str]) -> Output {
    let out = alto(args);
    assert!(out.status.success(), "alto {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().chain(SMALL).copied().collect()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn experiment_csv_is_deterministic() {
    let args = with_small(&["experiment", "linearity_1d", "--seed", "9", "--set", "grid.positions_cm=-10,0,10"]);
    let a = ok(&args).stdout;
    let b = ok(&args).stdout;
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("series,true_x_cm,true_y_cm,requested,detected,solved,"));
    assert_eq!(text.lines().count(), 4);

    let mut other = args.clone();
    other[3] = "10";
    assert_ne!(ok(&other).stdout, text.as_bytes());
}

#[test]
fn text_report_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.txt");
    let args = with_small(&[
        "experiment",
        "calibrate",
        "--format",
        "text",
        "--out",
        path(&report),
        "--set",
        "grid.positions_cm=-20:20:10",
    ]);
    let out = ok(&args);
    assert!(out.stdout.is_empty());
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.contains("experiment: calibrate"));
    assert_eq!(text.matches(" r_squared ").count(), 2, "{text}");
    assert!(text.contains("speed_x_cm_per_s"));
}

#[test]
fn seed_flag_beats_config_file_beats_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.cfg");
    fs::write(&cfg, "seed = 3\ngrid.positions_cm = 5\ngrid.repetitions = 4\n").unwrap();
    let base =
        ["experiment", "linearity_1d", "--set", "detector.chunk_size=2048", "--set", "sim.lead_in_max_samples=1500"];

    let from_file = ok(&[&base[..], &["--config", path(&cfg)]].concat()).stdout;
    let text = String::from_utf8(from_file.clone()).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("x,5,0,4,"), "{text}");

    let explicit =
        ok(&[&base[..], &["--set", "seed=3", "--set", "grid.positions_cm=5", "--set", "grid.repetitions=4"]].concat())
            .stdout;
    assert_eq!(from_file, explicit);

    let flagged = ok(&[&base[..], &["--config", path(&cfg), "--seed", "4"]].concat()).stdout;
    let seed4 =
        ok(&[&base[..], &["--set", "seed=4", "--set", "grid.positions_cm=5", "--set", "grid.repetitions=4"]].concat())
            .stdout;
    assert_eq!(flagged, seed4);

    let set_wins = ok(&[&base[..], &["--config", path(&cfg), "--set", "grid.repetitions=1"]].concat()).stdout;
    assert!(String::from_utf8(set_wins).unwrap().lines().nth(1).unwrap().starts_with("x,5,0,1,"));
}

#[test]
fn simulate_ingest_calibrate_locate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let session = d.join("session");
    let sim_args =
        with_small(&["simulate", "--seed", "11", "--out", path(&session), "--set", "grid.taps=-15,10;20,-5;0,0"]);
    ok(&sim_args);
    let truth = fs::read_to_string(session.join("ground_truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 1 + 6 * 4);

    let again = d.join("again");
    let mut again_args = sim_args.clone();
    again_args[4] = path(&again);
    ok(&again_args);
    for name in ["left_right.pcm", "top_bottom.pcm", "ground_truth.csv"] {
        assert_eq!(fs::read(session.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }

    let lr = d.join("lr.csv");
    let tb = d.join("tb.csv");
    for (pcm, pair, out) in [("left_right.pcm", "lr", &lr), ("top_bottom.pcm", "tb", &tb)] {
        let input = session.join(pcm);
        ok(&with_small(&["ingest", "--input", path(&input), "--pair", pair, "--out", path(out)]));
        assert_eq!(fs::read_to_string(out).unwrap().lines().count(), 7, "{pair}");
    }

    let profile = d.join("profile.txt");
    ok(&with_small(&["calibrate", "--seed", "11", "--out", path(&profile), "--set", "grid.positions_cm=-20:20:5"]));
    let profile_text = fs::read_to_string(&profile).unwrap();
    assert!(profile_text.contains("speed_y_cm_per_s = "));

    let out = ok(&["locate", "--profile", path(&profile), path(&lr), path(&tb)]);
    let estimates = String::from_utf8(out.stdout).unwrap();
    let mut lines = estimates.lines();
    assert_eq!(lines.next().unwrap(), "tap_id,x_cm,y_cm,quadrant,residual_lr,residual_tb,method");
    let truth_xy = [(-15.0, 10.0), (-15.0, 10.0), (20.0, -5.0), (20.0, -5.0), (0.0, 0.0), (0.0, 0.0)];
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), truth_xy.len());
    for (row, (tx, ty)) in rows.iter().zip(truth_xy) {
        let cells: Vec<&str> = row.split(',').collect();
        let x: f64 = cells[1].parse().unwrap();
        let y: f64 = cells[2].parse().unwrap();
        assert!((x - tx).abs() < 2.0 && (y - ty).abs() < 2.0, "{row} vs ({tx}, {ty})");
        assert_eq!(cells[6], "closed_form");
    }
}

#[test]
fn accuracy_with_profile_file() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("exact.txt");
    fs::write(
        &profile,
        "speed_x_cm_per_s = 45014\nspeed_y_cm_per_s = 37259\nintercept_x = 0\nintercept_y = 0\n\
         r2_x = 1\nr2_y = 1\nlayout.half_sep_x = 26\nlayout.half_sep_y = 26\n",
    )
    .unwrap();
    let args = with_small(&[
        "experiment",
        "accuracy_2d",
        "--profile",
        path(&profile),
        "--set",
        "grid.x_cm=-10,30",
        "--set",
        "grid.y_cm=8",
    ]);
    let text = String::from_utf8(ok(&args).stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(&cells[3..6], &["2", "2", "2"], "{row}");
    }
}

#[test]
fn bad_input_fails_with_message() {
    let out = alto(&["experiment", "linearity_1d", "--set", "surface.colour=red"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("surface.colour"));

    let out = alto(&["experiment", "linearity_1d", "--set", "novalue"]);
    assert!(!out.status.success());

    let out = alto(&["experiment", "bogus"]);
    assert!(!out.status.success());

    let out = alto(&["locate", "--profile", "/nonexistent/profile.txt", "/nonexistent/obs.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("profile.txt"));
}
