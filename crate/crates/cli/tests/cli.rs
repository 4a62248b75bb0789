use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use ladder_core::analyzer::{write_y4m, Frame, FrameSequence, Plane};

fn ladder(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ladder")).args(args).current_dir(cwd).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small bundle shared by every test in this file.
fn bundle_dir() -> &'static Path {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    &DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = ladder(
            &["train", "--synthetic", "12", "--trees", "30", "--depth", "4", "--out", "bundle"],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
        let path = dir.path().join("bundle");
        (dir, path)
    })
    .1
}

fn write_features(dir: &Path) -> PathBuf {
    let path = dir.join("features.csv");
    std::fs::write(
        &path,
        "segment_id,E_Y,h,L_Y,E_U,E_V,L_U,L_V\n\
         a,22.4,4.7,129.2,5.0,6.0,120.0,130.0\n\
         b,48.0,15.0,90.0,12.0,14.0,125.0,135.0\n",
    )
    .unwrap();
    path
}

fn build(dir: &Path, extra: &[&str]) -> Output {
    let features = write_features(dir);
    let mut args = vec!["build", features.to_str().unwrap(), bundle_dir().to_str().unwrap()];
    args.extend_from_slice(extra);
    ladder(&args, dir)
}

#[test]
fn analyze_writes_feature_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (96, 64);
    let frames = (0..3)
        .map(|t| Frame {
            y: Plane::from_fn(w, h, |x, y| ((x * 7 + y * 3 + t * 11) % 256) as u16),
            u: Plane::filled(w / 2, h / 2, 128),
            v: Plane::filled(w / 2, h / 2, 128),
        })
        .collect();
    let seq = FrameSequence::new(w, h, 8, frames).unwrap();
    std::fs::write(dir.path().join("clip.y4m"), write_y4m(&seq, (30, 1))).unwrap();
    let mut raw = Vec::new();
    for f in seq.frames() {
        for p in [&f.y, &f.u, &f.v] {
            raw.extend(p.data.iter().map(|&s| s as u8));
        }
    }
    std::fs::write(dir.path().join("clip.yuv"), raw).unwrap();

    let out = ladder(&["analyze", "clip.y4m", "--out", "f.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let out = ladder(
        &["analyze", "clip.yuv", "--width", "96", "--height", "64", "--out", "f.csv", "--segment-id", "raw"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));

    let text = std::fs::read_to_string(dir.path().join("f.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "segment_id,E_Y,h,L_Y,E_U,E_V,L_U,L_V");
    assert!(lines[1].starts_with("clip,"));
    assert!(lines[2].starts_with("raw,"));
    // same pixels, same features
    assert_eq!(lines[1]["clip".len()..], lines[2]["raw".len()..]);
}

#[test]
fn raw_input_without_geometry_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.yuv"), [0u8; 16]).unwrap();
    let out = ladder(&["analyze", "x.yuv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--width"));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ladder(&["analyze", "nope.y4m"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr(&out).lines().count(), 1);
}

#[test]
fn build_defaults_cover_every_bitrate() {
    let dir = tempfile::tempdir().unwrap();
    let out = build(dir.path(), &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 12);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",selected")), "{text}");
}

#[test]
fn explicit_defaults_and_flag_order_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str| std::fs::read(dir.path().join(name)).unwrap();
    assert!(build(dir.path(), &["--resultCsv", "a.csv"]).status.success());
    assert!(build(
        dir.path(),
        &[
            "--maxEncTime",
            "9999",
            "--maxDecTime",
            "9999",
            "--codec",
            "vvenc",
            "--rmax",
            "2160",
            "--maxQuality",
            "100",
            "--jnd",
            "0",
            "--resultCsv",
            "b.csv"
        ],
    )
    .status
    .success());
    assert!(build(
        dir.path(),
        &["--jnd", "0", "--resultCsv", "c.csv", "--rmax", "2160", "--maxEncTime", "inf"]
    )
    .status
    .success());
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("a.csv"), read("c.csv"));
}

#[test]
fn table_row_limits_resolution_and_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = build(dir.path(), &["--maxEncTime", "100", "--rmax", "720", "--jnd", "0"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert!(cols[2].parse::<u32>().unwrap() <= 720, "{line}");
        if cols[7] == "selected" {
            assert!(cols[5].parse::<f64>().unwrap() <= 100.0, "{line}");
        }
    }
}

#[test]
fn invalid_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [
        &["--rmax", "999"][..],
        &["--maxEncTime", "-3"],
        &["--jnd", "-1"],
        &["--maxDecTime", "abc"],
        &["--bogus"],
    ] {
        let out = build(dir.path(), bad);
        assert_eq!(out.status.code(), Some(2), "{bad:?}: {}", stderr(&out));
        assert_eq!(stderr(&out).lines().count(), 1, "{bad:?}: {}", stderr(&out));
    }
    let out = build(dir.path(), &["--rmax", "999"]);
    assert!(stderr(&out).contains("{360,432,540,720,1080,1440,2160}"));
}

#[test]
fn missing_bundle_is_a_model_error() {
    let dir = tempfile::tempdir().unwrap();
    let features = write_features(dir.path());
    let out = ladder(&["build", features.to_str().unwrap(), "no_such_bundle"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn command_script_lists_kept_rungs() {
    let dir = tempfile::tempdir().unwrap();
    let out = build(dir.path(), &["--jnd", "1.5", "--commands", "enc.sh", "--input", "/media/{id}.y4m"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let kept = results.lines().filter(|l| l.ends_with(",selected")).count();
    let script = std::fs::read_to_string(dir.path().join("enc.sh")).unwrap();
    let cmds: Vec<&str> = script.lines().filter(|l| l.contains("vvencFFapp")).collect();
    assert_eq!(cmds.len(), kept);
    assert!(cmds.iter().any(|c| c.contains("-i /media/a.y4m")));

    let out = build(dir.path(), &["--codec", "x265", "--commands", "enc.sh"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn export_plot_writes_both_curves() {
    let dir = tempfile::tempdir().unwrap();
    let features = write_features(dir.path());
    let out = ladder(
        &["export-plot", features.to_str().unwrap(), bundle_dir().to_str().unwrap(), "--points", "10"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    for id in ["a", "b"] {
        let q = std::fs::read_to_string(dir.path().join(format!("plots/{id}_rate_quality.csv"))).unwrap();
        let t = std::fs::read_to_string(dir.path().join(format!("plots/{id}_rate_enctime.csv"))).unwrap();
        assert_eq!(q.lines().next(), Some("resolution,bitrate_mbps,qp,pred_xpsnr"));
        assert_eq!(q.lines().count(), 1 + 7 * 10);
        assert_eq!(t.lines().count(), 1 + 7 * 10);
    }
}

#[test]
fn train_from_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = ladder(
        &[
            "train",
            "--synthetic",
            "10",
            "--trees",
            "10",
            "--depth",
            "3",
            "--dump-dataset",
            "data.csv",
            "--out",
            "b1",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let out = ladder(&["train", "data.csv", "--trees", "10", "--depth", "3", "--out", "b2"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("xpsnr") && stdout.contains("MAE"), "{stdout}");
    for name in ["manifest.json", "xpsnr.json", "bitrate_qmin.json", "dectime_qmax.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("b1").join(name)).unwrap(),
            std::fs::read(dir.path().join("b2").join(name)).unwrap(),
            "{name}"
        );
    }

    std::fs::write(dir.path().join("bad.csv"), "segment_id,qp\nx,60\n").unwrap();
    let out = ladder(&["train", "bad.csv", "--out", "b3"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}
