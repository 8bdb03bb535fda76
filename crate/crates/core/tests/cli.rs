use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use vpaes::imageio::{decode_image, encode_bmp, encode_pnm, CipherContainer, ImageBuffer, HEADER_LEN, MAGIC};

const KEY: &str = "2B7E151628AED2A6ABF7158809CF4F3C";

fn vpaes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vpaes"))
        .args(args)
        .output()
        .expect("spawn vpaes")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gradient(w: usize, h: usize, c: usize) -> ImageBuffer {
    let data = (0..w * h * c).map(|i| ((i * 31) ^ (i >> 5)) as u8).collect();
    ImageBuffer::new(w, h, c, data).unwrap()
}

fn write_image(dir: &TempDir, name: &str, img: &ImageBuffer) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, encode_pnm(img)).unwrap();
    path
}

#[test]
fn encrypt_decrypt_through_files() {
    let dir = TempDir::new().unwrap();
    for (w, h, c) in [(5, 7, 3), (3, 1, 1), (40, 30, 3)] {
        let img = gradient(w, h, c);
        let input = write_image(&dir, "in.pnm", &img);
        let sealed = dir.path().join("img.vpaes");
        let view = dir.path().join("view.ppm");
        let restored = dir.path().join("out.pnm");

        let out = vpaes(&["encrypt", "--key", KEY, "--in", s(&input), "--out", s(&sealed), "--view", s(&view)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8(out.stdout).unwrap();
        let bytes = w * h * c;
        assert!(stdout.contains(&format!("blocks: {}", bytes.div_ceil(16))));
        assert!(stdout.contains(&format!("pad_len: {}", (16 - bytes % 16) % 16)));

        let container = fs::read(&sealed).unwrap();
        assert!(container.starts_with(MAGIC));
        let view_img = decode_image(&fs::read(&view).unwrap()).unwrap();
        assert_eq!(view_img.channels(), 3);

        let out = vpaes(&["decrypt", "--key", KEY, "--in", s(&sealed), "--out", s(&restored)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(fs::read(&restored).unwrap(), fs::read(&input).unwrap());
    }
}

#[test]
fn bmp_input_is_accepted() {
    let dir = TempDir::new().unwrap();
    let img = gradient(9, 4, 3);
    let input = dir.path().join("in.bmp");
    fs::write(&input, encode_bmp(&img)).unwrap();
    let sealed = dir.path().join("c.vpaes");
    let restored = dir.path().join("out.ppm");
    assert_eq!(code(&vpaes(&["encrypt", "--key", KEY, "--in", s(&input), "--out", s(&sealed)])), 0);
    assert_eq!(code(&vpaes(&["decrypt", "--key", KEY, "--in", s(&sealed), "--out", s(&restored)])), 0);
    assert_eq!(decode_image(&fs::read(&restored).unwrap()).unwrap(), img);
}

#[test]
fn wrong_key_yields_noise_not_an_error() {
    let dir = TempDir::new().unwrap();
    let img = gradient(16, 16, 3);
    let input = write_image(&dir, "in.ppm", &img);
    let sealed = dir.path().join("c.vpaes");
    let restored = dir.path().join("out.ppm");
    assert_eq!(code(&vpaes(&["encrypt", "--key", KEY, "--in", s(&input), "--out", s(&sealed)])), 0);
    let other = "2B7E151628AED2A6ABF7158809CF4F3D";
    assert_eq!(code(&vpaes(&["decrypt", "--key", other, "--in", s(&sealed), "--out", s(&restored)])), 0);
    let garbled = decode_image(&fs::read(&restored).unwrap()).unwrap();
    let same = garbled.data().iter().zip(img.data()).filter(|(a, b)| a == b).count();
    assert!(same < img.data().len() / 16, "{same} bytes unchanged");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let input = write_image(&dir, "in.ppm", &gradient(8, 8, 3));
    let sealed = dir.path().join("c.vpaes");
    let out = dir.path().join("o");

    let bad_key = vpaes(&["encrypt", "--key", "XYZ", "--in", s(&input), "--out", s(&out)]);
    assert_eq!(code(&bad_key), 2);
    let zero = "0".repeat(32);
    assert_eq!(code(&vpaes(&["encrypt", "--key", &zero, "--in", s(&input), "--out", s(&out)])), 2);
    let short = "0123456789ABCDEFEDCBA9876543210";
    assert_eq!(code(&vpaes(&["encrypt", "--key", short, "--in", s(&input), "--out", s(&out)])), 2);
    assert_eq!(
        code(&vpaes(&["encrypt", "--key", short, "--allow-short-key", "--in", s(&input), "--out", s(&out)])),
        0
    );

    let png = dir.path().join("x.png");
    fs::write(&png, b"\x89PNG\r\n\x1a\n0000").unwrap();
    assert_eq!(code(&vpaes(&["encrypt", "--key", KEY, "--in", s(&png), "--out", s(&out)])), 3);

    let missing = dir.path().join("missing.ppm");
    assert_eq!(code(&vpaes(&["encrypt", "--key", KEY, "--in", s(&missing), "--out", s(&out)])), 4);

    let empty = CipherContainer {
        width: 0,
        height: 0,
        channels: 3,
        pad_len: 0,
        payload: Vec::new(),
    };
    let bytes = empty.to_bytes();
    assert_eq!(bytes.len(), HEADER_LEN);
    fs::write(&sealed, &bytes).unwrap();
    assert_eq!(code(&vpaes(&["decrypt", "--key", KEY, "--in", s(&sealed), "--out", s(&out)])), 5);
    fs::write(&sealed, b"NOTAC").unwrap();
    assert_eq!(code(&vpaes(&["decrypt", "--key", KEY, "--in", s(&sealed), "--out", s(&out)])), 5);

    let ones = "F".repeat(32);
    assert_eq!(code(&vpaes(&["sensitivity", "--key", &ones, "--in", s(&input)])), 2);

    // 8x8 is too small for the tone and spectral tests
    assert_eq!(code(&vpaes(&["analyze", "--in", s(&input)])), 6);
}

#[test]
fn analyze_json_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let input = write_image(&dir, "in.ppm", &gradient(64, 64, 3));
    let sealed = dir.path().join("c.vpaes");
    assert_eq!(code(&vpaes(&["encrypt", "--key", KEY, "--in", s(&input), "--out", s(&sealed)])), 0);

    let run = |path: &Path| {
        let out = vpaes(&["analyze", "--in", s(path), "--report", "json", "--seed", "7", "--samples", "500"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let first = run(&sealed);
    assert_eq!(first, run(&sealed));
    let json: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(json["source"], "container");
    assert_eq!(json["seed"], 7);
    assert_eq!(json["input_sha256"].as_str().unwrap().len(), 64);
    let reports = json["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 18);
    for r in reports.iter().filter(|r| r["test"] == "entropy") {
        assert!(r["statistic"].as_f64().unwrap() > 7.9);
    }

    let plain = run(&input);
    let json: serde_json::Value = serde_json::from_slice(&plain).unwrap();
    assert_eq!(json["source"], "image");
}

#[test]
fn analyze_flat_image() {
    let dir = TempDir::new().unwrap();
    let flat = ImageBuffer::new(64, 64, 1, vec![77; 64 * 64]).unwrap();
    let input = write_image(&dir, "flat.pgm", &flat);
    let out = vpaes(&["analyze", "--in", s(&input), "--report", "json"]);
    // correlation has zero variance on a flat image
    assert_eq!(code(&out), 6);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let reports = json["reports"].as_array().unwrap();
    let entropy = reports.iter().find(|r| r["test"] == "entropy").unwrap();
    assert_eq!(entropy["statistic"].as_f64().unwrap(), 0.0);
    let tone = reports.iter().find(|r| r["test"] == "chi_square_tone").unwrap();
    assert_eq!(tone["decision"], "rejected");
    assert!(reports.iter().any(|r| r["error"].is_string()));
}

#[test]
fn select_score_and_sensitivity() {
    let dir = TempDir::new().unwrap();
    let mut data = vec![255u8; 128 * 128 * 3];
    for (i, px) in data.chunks_mut(3).enumerate() {
        if (i / 128) % 8 < 2 && (i % 128) % 6 < 3 {
            px.fill(0);
        }
    }
    let text = ImageBuffer::new(128, 128, 3, data).unwrap();
    let input = write_image(&dir, "text.ppm", &text);

    let out = vpaes(&["select-score", "--in", s(&input), "--report", "json"]);
    assert_eq!(code(&out), 0);
    assert_eq!(out.stdout, vpaes(&["select-score", "--in", s(&input), "--report", "json"]).stdout);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for score in json["scores"].as_array().unwrap() {
        assert!(score["value"].as_f64().unwrap() > 1e5);
    }

    let report = dir.path().join("sens.json");
    let args = ["sensitivity", "--key", KEY, "--in", s(&input), "--report", "json", "--out", s(&report)];
    assert_eq!(code(&vpaes(&args)), 0);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(json["key_plus_one"], "2B7E151628AED2A6ABF7158809CF4F3D");
    assert_eq!(json["correlations"].as_array().unwrap().len(), 3);
    assert!(json["max_abs"].as_f64().unwrap() <= 0.1);
}
