use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use drfc::io::{read_pgm, read_pose_json, read_y4m, write_pgm};
use drfc::synthetic::{gen_synthetic, MotionClass, SyntheticParams};
use tempfile::TempDir;

fn drfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drfc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = drfc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code plus the stderr text, which must be one line.
fn fails(args: &[&str]) -> (i32, String) {
    let out = drfc(args);
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "diagnostic: {err:?}");
    (out.status.code().unwrap(), err)
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new(frames: u32, motion: &str) -> Self {
        let f = Fixture {
            dir: TempDir::new().unwrap(),
        };
        ok(&[
            "gen-synthetic",
            "--width",
            "48",
            "--height",
            "32",
            "--frames",
            &frames.to_string(),
            "--seed",
            "7",
            "--motion",
            motion,
            "--out-y4m",
            f.s("seq.y4m"),
            "--out-poses",
            f.s("seq.json"),
        ]);
        f
    }

    fn p(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> &'static str {
        Box::leak(self.p(name).to_string_lossy().into_owned().into_boxed_str())
    }
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap()
}

#[test]
fn encode_decode_matches_reconstruction() {
    let f = Fixture::new(32, "fast");
    for mode in ["off", "linear", "patchwarp"] {
        let out = ok(&[
            "encode", "--input", f.s("seq.y4m"), "--poses", f.s("seq.json"), "--qp", "30",
            "--gop", "32", "--forward", mode, "--out", f.s("a.drf"), "--recon", f.s("recon.y4m"),
        ]);
        assert!(out.starts_with("frames=32 bits="), "{out}");
        ok(&["decode", "--in", f.s("a.drf"), "--out", f.s("dec.y4m")]);
        assert_eq!(read(&f.p("dec.y4m")), read(&f.p("recon.y4m")), "mode {mode}");
    }
}

#[test]
fn external_mode_round_trip() {
    let f = Fixture::new(6, "moderate");
    let fwd = format!("external:{}", f.s("seq.y4m"));
    ok(&[
        "encode", "--input", f.s("seq.y4m"), "--qp", "28", "--gop", "3", "--forward", &fwd,
        "--out", f.s("e.drf"), "--recon", f.s("recon.y4m"),
    ]);
    ok(&["decode", "--in", f.s("e.drf"), "--out", f.s("dec.y4m"), "--external", f.s("seq.y4m")]);
    assert_eq!(read(&f.p("dec.y4m")), read(&f.p("recon.y4m")));
    let (code, err) = fails(&["decode", "--in", f.s("e.drf"), "--out", f.s("x.y4m")]);
    assert_eq!(code, 1);
    assert!(err.contains("frame store"), "{err}");
}

#[test]
fn patchwarp_without_poses_is_usage_error() {
    let f = Fixture::new(2, "slow");
    let (code, err) = fails(&[
        "encode", "--input", f.s("seq.y4m"), "--qp", "30", "--forward", "patchwarp", "--out", f.s("a.drf"),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("--poses"), "{err}");
    assert!(!f.p("a.drf").exists());
}

#[test]
fn qp_out_of_range_is_rejected() {
    let f = Fixture::new(2, "slow");
    let (code, err) = fails(&["encode", "--input", f.s("seq.y4m"), "--qp", "99", "--out", f.s("a.drf")]);
    assert_eq!(code, 1);
    assert!(err.contains("99"), "{err}");
}

#[test]
fn input_errors_are_single_line() {
    let f = Fixture::new(4, "fast");
    let (code, err) = fails(&["decode", "--in", f.s("missing.drf"), "--out", f.s("x.y4m")]);
    assert_eq!(code, 1);
    assert!(err.contains("missing.drf"), "{err}");

    ok(&["encode", "--input", f.s("seq.y4m"), "--qp", "30", "--out", f.s("a.drf")]);
    let mut bytes = read(&f.p("a.drf"));
    bytes.truncate(bytes.len() / 2);
    fs::write(f.p("cut.drf"), &bytes).unwrap();
    let (code, _) = fails(&["decode", "--in", f.s("cut.drf"), "--out", f.s("x.y4m")]);
    assert_eq!(code, 1);

    let (code, _) = fails(&["encode", "--input", f.s("seq.json"), "--qp", "30", "--out", f.s("b.drf")]);
    assert_eq!(code, 1);
    let (code, _) = fails(&["frobnicate"]);
    assert_eq!(code, 1);
}

#[test]
fn synth_at_own_pose_reproduces_iframe() {
    let f = Fixture::new(5, "fast");
    let (frames, _) = read_y4m(&mut fs::File::open(f.p("seq.y4m")).unwrap()).unwrap();
    for mode in ["linear", "patchwarp"] {
        ok(&[
            "synth", "--iframe", f.s("seq.y4m"), "--poses", f.s("seq.json"), "--t", "1",
            "--mode", mode, "--out", f.s("x.pgm"),
        ]);
        let out = read_pgm(&mut fs::File::open(f.p("x.pgm")).unwrap()).unwrap();
        assert_eq!(out, frames[0], "mode {mode}");
    }
}

#[test]
fn synth_is_deterministic_and_checks_index() {
    let f = Fixture::new(5, "fast");
    let args = |out: &'static str| {
        [
            "synth", "--iframe", f.s("seq.y4m"), "--poses", f.s("seq.json"), "--t", "4",
            "--mode", "patchwarp", "--out", out,
        ]
    };
    ok(&args(f.s("a.y4m")));
    ok(&args(f.s("b.y4m")));
    assert_eq!(read(&f.p("a.y4m")), read(&f.p("b.y4m")));
    let (code, err) = fails(&[
        "synth", "--iframe", f.s("seq.y4m"), "--poses", f.s("seq.json"), "--t", "6",
        "--mode", "linear", "--out", f.s("c.y4m"),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("--t 6"), "{err}");
}

#[test]
fn synth_external_emits_stored_frame() {
    let f = Fixture::new(3, "slow");
    let (frames, _) = read_y4m(&mut fs::File::open(f.p("seq.y4m")).unwrap()).unwrap();
    let store = f.p("store");
    fs::create_dir(&store).unwrap();
    write_pgm(&mut fs::File::create(store.join("frame_0003.pgm")).unwrap(), &frames[2]).unwrap();
    let mode = format!("external:{}", store.display());
    ok(&["synth", "--iframe", f.s("seq.y4m"), "--t", "3", "--mode", &mode, "--out", f.s("x.pgm")]);
    let out = read_pgm(&mut fs::File::open(f.p("x.pgm")).unwrap()).unwrap();
    assert_eq!(out, frames[2]);
    let (code, _) = fails(&["synth", "--iframe", f.s("seq.y4m"), "--t", "2", "--mode", &mode, "--out", f.s("y.pgm")]);
    assert_eq!(code, 1);
}

#[test]
fn sweep_rows_bd_line_and_container_sizes() {
    let f = Fixture::new(4, "fast");
    let out = ok(&[
        "sweep", "--input", f.s("seq.y4m"), "--poses", f.s("seq.json"), "--gop", "4",
        "--search-range", "8", "--out-dir", f.s("cells"),
    ]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 10);
    assert_eq!(lines[0], "mode,qp,frames,total_bits,bpp,psnr");
    assert_eq!(lines.iter().filter(|l| l.starts_with("bd ")).count(), 1);
    assert!(lines[9].starts_with("bd mode=patchwarp anchor=off bd_rate="));
    for row in &lines[1..9] {
        let cols: Vec<&str> = row.split(',').collect();
        let file = f.p("cells").join(format!("{}_qp{}.drf", cols[0], cols[1]));
        let size = fs::metadata(&file).unwrap().len();
        assert_eq!(cols[3].parse::<u64>().unwrap(), size * 8, "{row}");
    }
}

#[test]
fn sweep_with_identical_modes_reports_zero() {
    let f = Fixture::new(4, "moderate");
    let csv = f.p("rd.csv");
    let out = ok(&[
        "sweep", "--input", f.s("seq.y4m"), "--modes", "off,off", "--qps", "22,30,36,44",
        "--gop", "4", "--search-range", "4", "--csv", f.s("rd.csv"),
    ]);
    assert_eq!(out.trim(), "bd mode=off anchor=off bd_rate=0.0000% bd_psnr=0.0000dB");
    assert_eq!(fs::read_to_string(csv).unwrap().lines().count(), 9);
    let (code, _) = fails(&["sweep", "--input", f.s("seq.y4m"), "--qps", "24,28,34"]);
    assert_eq!(code, 1);
}

#[test]
fn gen_synthetic_is_deterministic_and_emits_truth() {
    let a = Fixture::new(6, "slow");
    let b = Fixture::new(6, "slow");
    assert_eq!(read(&a.p("seq.y4m")), read(&b.p("seq.y4m")));
    assert_eq!(read(&a.p("seq.json")), read(&b.p("seq.json")));
    let doc = read_pose_json(&mut fs::File::open(a.p("seq.json")).unwrap()).unwrap();
    let seq = gen_synthetic(&SyntheticParams {
        width: 48,
        height: 32,
        frames: 6,
        seed: 7,
        motion: MotionClass::Slow,
    });
    assert_eq!((doc.width, doc.height), (48, 32));
    assert_eq!(doc.poses, seq.poses);
    let (frames, _) = read_y4m(&mut fs::File::open(a.p("seq.y4m")).unwrap()).unwrap();
    assert_eq!(frames, seq.frames);
}
