mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::test_ppm;
use spanet::io::{load_image, load_pgm, read_weights, write_tensor};
use spanet::Tensor;

fn spanet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spanet"))
        .args(args)
        .output()
        .expect("spawn spanet")
}

fn ok(args: &[&str]) -> String {
    let out = spanet(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn params_and_flops_output() {
    let s = ok(&["params", "--variant", "S"]);
    assert!(s.starts_with("SPANet-S params: 30957736 "), "{s}");
    let f = ok(&["flops", "--variant", "b", "--size", "224"]);
    assert!(f.starts_with("SPANet-B flops@224: "), "{f}");
}

#[test]
fn filter_half_lambda_halves_image() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("in.ppm");
    let dst = dir.path().join("out.ppm");
    std::fs::write(&src, test_ppm(20, 24)).unwrap();
    ok(&["filter", "--in", p(&src), "--lambda", "0.5", "--radius", "3", "--out", p(&dst)]);
    let a = load_image(&src).unwrap();
    let b = load_image(&dst).unwrap();
    assert_eq!(a.shape(), b.shape());
    // round-to-nearest on write leaves at most half a grey level
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x * 0.5 - y).abs() <= 0.5 / 255.0 + 1e-6);
    }
}

#[test]
fn spectrum_writes_profile_and_map() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("f.sptn");
    let t = Tensor::from_fn(&[4, 16, 16], |i| ((i * 7919) % 13) as f32 - 6.0).unwrap();
    write_tensor(&t, &input).unwrap();
    let csv = dir.path().join("p.csv");
    let map = dir.path().join("m.pgm");
    ok(&["spectrum", "--in", p(&input), "--profile", p(&csv), "--map", p(&map)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("frequency,delta_log_amplitude"));
    assert_eq!(lines.count(), 9);
    let m = load_pgm(&map).unwrap();
    assert_eq!((m.h, m.w), (16, 16));
}

#[test]
fn init_then_forward_with_weights_matches_seed() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("s.spwt");
    let out = ok(&["init", "--variant", "S", "--seed", "3", "--out", p(&weights)]);
    let store = read_weights(&weights).unwrap();
    assert!(out.contains(&store.checksum()));
    assert!(out.contains("30957736 params"));

    let image = dir.path().join("img.ppm");
    std::fs::write(&image, test_ppm(64, 64)).unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let ctx = dir.path().join("ctx.pgm");
    let msg = ok(&[
        "forward",
        "--variant",
        "S",
        "--seed",
        "3",
        "--in",
        p(&image),
        "--logits",
        p(&a),
        "--dump-context",
        &format!("1:2:{}", p(&ctx)),
    ]);
    assert!(msg.contains("stages 64x16x16 128x8x8 320x4x4 512x2x2"), "{msg}");
    ok(&["forward", "--weights", p(&weights), "--in", p(&image), "--logits", p(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let m = load_pgm(&ctx).unwrap();
    assert_eq!((m.h, m.w), (16, 16));
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("odd.ppm");
    std::fs::write(&image, test_ppm(30, 30)).unwrap();
    let logits = dir.path().join("l.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec!["params", "--variant", "XL"],
        vec!["forward", "--in", p(&image), "--logits", p(&logits)],
        vec!["filter", "--in", p(&image), "--lambda", "1.5", "--radius", "2", "--out", p(&logits)],
        vec!["spectrum", "--in", "/nonexistent.sptn", "--profile", p(&logits)],
    ];
    for args in cases {
        let out = spanet(&args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty());
    }
}
