use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use num_complex::Complex64;
use pnp_buqo::{Image, StructureMask};
use pnp_buqo_cli::formats::*;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pnp-buqo"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture_weights(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

/// simulate + map at n = 32.
fn prepared(angles: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    let o = run(&["simulate", "--n", "32", "--angles", angles, "--isnr", "30", "--out", d]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["map", "--out", d]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir
}

#[test]
fn imgf_round_trip_and_rejections() {
    let x = Image::from_fn(8, |i, j| (i * 8 + j) as f64 / 64.0 - 0.25);
    let bytes = encode_imgf(&x);
    assert_eq!(&bytes[..4], b"IMGF");
    assert_eq!(bytes.len(), 12 + 4 * 64);
    let back = decode_imgf(&bytes).unwrap();
    for (a, b) in x.as_slice().iter().zip(back.as_slice()) {
        assert_eq!(*a as f32, *b as f32);
    }
    assert_eq!(encode_imgf(&back), bytes);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_imgf(&bad).is_err());
    assert!(decode_imgf(&bytes[..bytes.len() - 1]).is_err());
    let mut nan = bytes.clone();
    nan[12..16].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(decode_imgf(&nan).is_err());
    let mut rect = bytes.clone();
    rect[8..12].copy_from_slice(&4u32.to_le_bytes());
    assert!(decode_imgf(&rect).is_err());
}

#[test]
fn cplx_round_trip_and_rejections() {
    let y: Vec<Complex64> = (0..7).map(|k| Complex64::new(k as f64 * 0.5, -(k as f64))).collect();
    let bytes = encode_cplx(&y);
    assert_eq!(bytes.len(), 8 + 8 * 7);
    assert_eq!(decode_cplx(&bytes).unwrap(), y);
    assert!(decode_cplx(&bytes[..20]).is_err());
    assert!(decode_cplx(b"CPLX").is_err());
    assert!(decode_cplx(&[0u8; 8]).is_err());
}

#[test]
fn pgm_round_trip_with_comments() {
    let mask = StructureMask::disk(16, 7.0, 8.0, 3.0).unwrap();
    let bytes = encode_mask_pgm(&mask);
    assert_eq!(decode_mask_pgm(&bytes).unwrap(), mask);

    let mut commented = b"P5\n# structure mask\n16 16\n255\n".to_vec();
    commented.extend(mask.pixels().iter().map(|&p| if p { 255u8 } else { 0 }));
    assert_eq!(decode_mask_pgm(&commented).unwrap(), mask);

    assert!(decode_mask_pgm(b"P2\n2 2\n255\n0 0 0 0").is_err());
    assert!(decode_mask_pgm(b"P5\n2 2\n15\n\0\0\0\0").is_err());
    assert!(decode_mask_pgm(b"P5\n2 2\n255\n\0\0").is_err());
}

#[test]
fn log_png_clamps_at_the_floor() {
    let d = Image::new(2, vec![0.0, 1.0, 1e-3, -2.0]).unwrap();
    let bytes = encode_log_png(&d).unwrap();
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).unwrap();
    assert_eq!((info.width, info.height), (2, 2));
    assert_eq!(&buf[..4], &[0, 255, 128, 255]);
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["simulate", "--n", "32", "--angles", "100", "--isnr", "25", "--seed", "4", "--out", s(d.path())]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["phantom.imgf", "mask_0.pgm", "y.cplx", "sampling.pgm", "simulate.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let side: serde_json::Value = serde_json::from_slice(&std::fs::read(a.path().join("simulate.json")).unwrap()).unwrap();
    assert!(side["delta"].as_f64().unwrap() > 0.0);
    assert!(side["epsilon"].as_f64().unwrap() > side["delta"].as_f64().unwrap());
    assert_eq!(side["provenance"]["seed"], 4);
    assert_eq!(side["provenance"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_output_directory_exits_2_naming_it() {
    let o = run(&["simulate", "--n", "32", "--out", "/no/such/dir/here"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/no/such/dir/here"));
}

#[test]
fn map_exit_codes() {
    let dir = prepared("150");
    let d = s(dir.path());
    let map: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("map.json")).unwrap()).unwrap();
    assert_eq!(map["feasible"], true);
    let first = std::fs::read(dir.path().join("map.imgf")).unwrap();
    assert_eq!(code(&run(&["map", "--out", d])), 0);
    assert_eq!(std::fs::read(dir.path().join("map.imgf")).unwrap(), first, "rerun is idempotent");

    // Iteration cap before feasibility.
    let o = run(&["map", "--out", d, "--max-iter", "3"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    std::fs::write(dir.path().join("y.cplx"), b"CPLX\x05\0\0\0garbage").unwrap();
    let o = run(&["map", "--out", d]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("format error"), "{}", stderr(&o));
}

fn validate_report(dir: &Path) -> serde_json::Value {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json");
    let schema: serde_json::Value = serde_json::from_slice(&std::fs::read(schema_path).unwrap()).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
    report
}

#[test]
fn test_command_reports_and_validates() {
    let dir = prepared("150");
    let d = s(dir.path());
    let o = run(&["test", "--out", d, "--mode", "pnp", "--op", "harmonic"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = validate_report(dir.path());
    assert_eq!(r["decision"], "reject_H0");
    assert_eq!(r["mode"], "pnp");
    assert!(r["rho_alpha"].as_f64().unwrap() > 0.02);
    for f in ["x_test.imgf", "g_x_test.imgf", "diff_map.png", "diff_test.png", "test_trace.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let x = decode_imgf(&std::fs::read(dir.path().join("x_test.imgf")).unwrap()).unwrap();
    assert_eq!(x.n(), 32);

    let o = run(&["test", "--out", d, "--mode", "buqo", "--op", "onion"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = validate_report(dir.path());
    assert_eq!(r["solver"]["mode"], "buqo");

    // Artifact-only structure on a structure-free truth.
    let clean = tempfile::tempdir().unwrap();
    let c = s(clean.path());
    assert_eq!(code(&run(&["simulate", "--n", "32", "--angles", "60", "--amplitude", "0", "--out", c])), 0);
    assert_eq!(code(&run(&["map", "--out", c])), 0);
    let o = run(&["test", "--out", c, "--artifact", "0.3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(validate_report(clean.path())["decision"], "inconclusive");
}

#[test]
fn test_command_configuration_errors() {
    let dir = prepared("100");
    let d = s(dir.path());
    let empty = dir.path().join("empty.pgm");
    std::fs::write(&empty, encode_mask_pgm(&StructureMask::empty(32))).unwrap();
    let o = run(&["test", "--out", d, "--mask", s(&empty)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("degenerate"), "{}", stderr(&o));

    let w = fixture_weights("cnn_zero_w16.gdnw");
    let o = run(&["test", "--out", d, "--mode", "buqo", "--op", "cnn", "--weights", s(&w)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = run(&["test", "--out", d, "--op", "cnn"]);
    assert_eq!(code(&o), 2);
    let o = run(&["test", "--out", d, "--tau", "1.5"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn cnn_test_hits_the_iteration_cap_with_exit_3() {
    let dir = prepared("100");
    let w = fixture_weights("cnn_zero_w16.gdnw");
    let o = run(&["test", "--out", s(dir.path()), "--op", "cnn", "--weights", s(&w), "--max-iter", "5"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let r = validate_report(dir.path());
    assert_eq!(r["inpainter"], "cnn");
    assert_eq!(r["iterations"], 5);
    assert_eq!(r["converged"], false);
}

#[test]
fn sweep_grid_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    let args = ["sweep", "--n", "32", "--angles", "150,60,350", "--isnr", "35,20", "--seed", "3,1,2", "--out", d];
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "angles,isnr,seed,rho_alpha,decision,iterations");
    assert_eq!(lines.len(), 19);
    let keys: Vec<(usize, f64, u64)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    assert_eq!(keys, sorted);

    // Finished cells are reused, not recomputed.
    let cells = dir.path().join("cells");
    let stamp = |p: &Path| std::fs::metadata(p).unwrap().modified().unwrap();
    let before: Vec<_> = std::fs::read_dir(&cells).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(before.len(), 18);
    let times: Vec<_> = before.iter().map(|p| stamp(p)).collect();
    let victim = cells.join("a60_i20_s1.json");
    std::fs::remove_file(&victim).unwrap();
    std::fs::remove_file(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(code(&run(&args)), 0);
    assert_eq!(std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap(), csv);
    for (p, t) in before.iter().zip(&times) {
        if *p != victim {
            assert_eq!(stamp(p), *t, "{} was rewritten", p.display());
        }
    }
    assert!(victim.is_file());
}

#[test]
fn sweep_rejects_a_bad_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["sweep", "--n", "32", "--angles", "60", "--isnr", "20", "--seed", "1", "--out", s(dir.path())])
        .env("BUQO_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
