//! End-to-end tests of the `wsnm` binary: argument handling, config-file
//! resolution, manifest reproducibility, and each subcommand's plumbing.

mod common;

use common::{manifest_output_names, read_json, run_wsnm, run_wsnm_ok, snapshot_dir};
use std::fs;
use wsnm_core::bench::moving_box_video;
use wsnm_core::image::{read_wf64_matrix, synthetic, write_pgm, write_wf64_matrix, GrayImage};
use wsnm_core::DenseMatrix;

#[test]
fn no_arguments_prints_usage_and_fails() {
    let out = run_wsnm::<&str>(&[]);
    assert!(!out.status.success(), "bare invocation must not succeed");
    let text = format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(text.contains("Usage"), "no usage text:\n{text}");
    for sub in ["denoise", "rpca", "sweep", "table", "prox", "metrics"] {
        assert!(text.contains(sub), "subcommand `{sub}` not listed:\n{text}");
    }
}

/// The manifest's config echo is itself a valid config file, and re-running
/// with it (and nothing else) reproduces every non-timing output byte for
/// byte.
#[test]
fn manifest_config_echo_reruns_bit_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let out_str = out_dir.to_string_lossy().into_owned();
    run_wsnm_ok(&[
        "rpca",
        "--synthetic",
        "m=40,pr=0.1,pe=0.05",
        "--seed",
        "7",
        "--out",
        &out_str,
    ]);

    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["command"], "rpca");
    assert_eq!(manifest["config"]["out"], out_str.as_str());
    assert_eq!(manifest["config"]["seed"], 7);
    let names = manifest_output_names(&manifest);
    for expected in ["x.wf64", "e.wf64", "residual_history.csv"] {
        assert!(names.iter().any(|n| n == expected), "{expected} missing");
    }
    assert_eq!(manifest["metrics"]["true_rank"], 4);
    assert_eq!(manifest["metrics"]["estimated_rank"], 4);
    assert_eq!(manifest["metrics"]["converged"], true);

    let first = snapshot_dir(&out_dir);
    assert!(first.contains_key("manifest.json"));
    assert!(first.contains_key("x.wf64"));

    let cfg_path = tmp.path().join("echo.json");
    fs::write(
        &cfg_path,
        serde_json::to_string_pretty(&manifest["config"]).unwrap(),
    )
    .unwrap();
    run_wsnm_ok(&["rpca", "--config", cfg_path.to_str().unwrap()]);

    let second = snapshot_dir(&out_dir);
    assert_eq!(first, second, "outputs changed between identical runs");
}

#[test]
fn flags_override_file_values_which_override_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let cfg_path = tmp.path().join("cfg.json");
    fs::write(
        &cfg_path,
        serde_json::json!({
            "synthetic": "m=30,pr=0.1,pe=0.05",
            "p": 0.5,
            "max_iters": 40,
            "out": out_dir.to_string_lossy(),
        })
        .to_string(),
    )
    .unwrap();
    run_wsnm_ok(&["rpca", "--config", cfg_path.to_str().unwrap(), "--p", "0.9"]);

    let manifest = read_json(&out_dir.join("manifest.json"));
    let cfg = &manifest["config"];
    assert_eq!(cfg["p"], 0.9, "flag must beat the file value");
    assert_eq!(cfg["max_iters"], 40, "file value must beat the default");
    assert_eq!(cfg["rho"], 1.2, "untouched fields keep their defaults");
    assert_eq!(cfg["method"], "wsnm");
}

#[test]
fn unknown_config_keys_are_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.json");
    fs::write(&cfg_path, r#"{"sigma": 25.0, "bogus_knob": 1}"#).unwrap();
    let out = run_wsnm(&[
        "denoise",
        "--config",
        cfg_path.to_str().unwrap(),
        "--in",
        "missing.pgm",
    ]);
    assert!(!out.status.success(), "unknown key must be an error");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("bogus_knob"),
        "error does not name the offending key:\n{stderr}"
    );
}

/// With p = 1, a uniform weight, and the default fidelity ½, the proximal
/// operator is plain soft thresholding of the spectrum.
#[test]
fn prox_soft_thresholds_the_spectrum() {
    let tmp = tempfile::tempdir().unwrap();
    let mut y = DenseMatrix::zeros(3, 3);
    y.set(0, 0, 5.0);
    y.set(1, 1, 3.0);
    y.set(2, 2, 1.0);
    let in_path = tmp.path().join("y.wf64");
    write_wf64_matrix(&in_path, &y).unwrap();

    let out_dir = tmp.path().join("out");
    let stdout = run_wsnm_ok(&[
        "prox",
        "--in",
        in_path.to_str().unwrap(),
        "--p",
        "1.0",
        "--weight",
        "2.0",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(stdout.contains("2 kept"), "unexpected summary: {stdout}");

    let spectrum = fs::read_to_string(out_dir.join("spectrum.csv")).unwrap();
    let rows: Vec<&str> = spectrum.lines().collect();
    assert_eq!(rows[0], "index,weight,sigma_before,sigma_after");
    let after: Vec<f64> = rows[1..]
        .iter()
        .map(|r| r.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert!(
        (after[0] - 3.0).abs() < 1e-9 && (after[1] - 1.0).abs() < 1e-9 && after[2] == 0.0,
        "soft thresholding at 2 should map (5,3,1) to (3,1,0), got {after:?}"
    );

    let x = read_wf64_matrix(&out_dir.join("result.wf64")).unwrap();
    let want = [3.0, 1.0, 0.0];
    for i in 0..3 {
        for j in 0..3 {
            let expect = if i == j { want[i] } else { 0.0 };
            assert!(
                (x.get(i, j) - expect).abs() < 1e-9,
                "result[{i}][{j}] = {}, want {expect}",
                x.get(i, j)
            );
        }
    }

    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["metrics"]["singular_values"], 3);
    assert_eq!(manifest["metrics"]["rank_after"], 2);
    assert_eq!(manifest["metrics"]["zeroed"], 1);
}

#[test]
fn metrics_computes_psnr_rel_err_and_similarity() {
    let tmp = tempfile::tempdir().unwrap();

    // Two constant images 10 gray levels apart: MSE = 100, so
    // PSNR = 10·log10(255²/100) ≈ 28.1308 dB.
    let a_img = GrayImage::from_fn(8, 6, |_, _| 100.0);
    let b_img = GrayImage::from_fn(8, 6, |_, _| 110.0);
    let a_path = tmp.path().join("a.pgm");
    let b_path = tmp.path().join("b.pgm");
    write_pgm(&a_path, &a_img).unwrap();
    write_pgm(&b_path, &b_img).unwrap();
    let out_dir = tmp.path().join("psnr");
    run_wsnm_ok(&[
        "metrics",
        "--kind",
        "psnr",
        "--a",
        a_path.to_str().unwrap(),
        "--b",
        b_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let value = read_json(&out_dir.join("metrics.json"))["value"]
        .as_f64()
        .unwrap();
    assert!((value - 28.1308).abs() < 1e-3, "psnr = {value}");

    // Doubling a matrix puts the estimate exactly one reference norm away.
    let m = DenseMatrix::from_fn(4, 3, |i, j| (i + 2 * j) as f64 + 1.0);
    let twice = DenseMatrix::from_fn(4, 3, |i, j| 2.0 * m.get(i, j));
    let ref_path = tmp.path().join("ref.wf64");
    let est_path = tmp.path().join("est.wf64");
    write_wf64_matrix(&ref_path, &m).unwrap();
    write_wf64_matrix(&est_path, &twice).unwrap();
    let out_dir = tmp.path().join("rel");
    run_wsnm_ok(&[
        "metrics",
        "--kind",
        "rel_err",
        "--a",
        est_path.to_str().unwrap(),
        "--b",
        ref_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let value = read_json(&out_dir.join("metrics.json"))["value"]
        .as_f64()
        .unwrap();
    assert!((value - 1.0).abs() < 1e-12, "rel_err = {value}");

    // Masks {0,1} and {1,2} as flat images: Jaccard overlap 1/3.
    let mask_a = GrayImage::from_pixels(3, 1, vec![255.0, 255.0, 0.0]).unwrap();
    let mask_b = GrayImage::from_pixels(3, 1, vec![0.0, 255.0, 255.0]).unwrap();
    let ma_path = tmp.path().join("ma.pgm");
    let mb_path = tmp.path().join("mb.pgm");
    write_pgm(&ma_path, &mask_a).unwrap();
    write_pgm(&mb_path, &mask_b).unwrap();
    let out_dir = tmp.path().join("sim");
    run_wsnm_ok(&[
        "metrics",
        "--kind",
        "similarity",
        "--a",
        ma_path.to_str().unwrap(),
        "--b",
        mb_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let value = read_json(&out_dir.join("metrics.json"))["value"]
        .as_f64()
        .unwrap();
    assert!((value - 1.0 / 3.0).abs() < 1e-12, "similarity = {value}");
}

#[test]
fn denoise_improves_psnr_and_writes_both_images() {
    let tmp = tempfile::tempdir().unwrap();
    let clean = synthetic::blobs_scene(32);
    let clean_path = tmp.path().join("clean.pgm");
    write_pgm(&clean_path, &clean).unwrap();

    let out_dir = tmp.path().join("out");
    run_wsnm_ok(&[
        "denoise",
        "--in",
        clean_path.to_str().unwrap(),
        "--add-noise",
        "25",
        "--sigma",
        "25",
        "--iterations",
        "2",
        "--group-size",
        "24",
        "--search-window",
        "12",
        "--key-patch-step",
        "3",
        "--seed",
        "5",
        "--threads",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);

    assert!(out_dir.join("denoised.pgm").exists());
    assert!(out_dir.join("noisy.pgm").exists());
    let manifest = read_json(&out_dir.join("manifest.json"));
    let noisy = manifest["metrics"]["psnr_noisy"].as_f64().unwrap();
    let denoised = manifest["metrics"]["psnr_denoised"].as_f64().unwrap();
    assert!(
        denoised > noisy + 3.0,
        "denoised {denoised:.2} dB vs noisy {noisy:.2} dB"
    );
}

#[test]
fn rpca_frames_mode_writes_backgrounds_and_masks() {
    let tmp = tempfile::tempdir().unwrap();
    let frames_dir = tmp.path().join("frames");
    fs::create_dir(&frames_dir).unwrap();
    let (frames, _truth) = moving_box_video(24, 18, 8, 5);
    for (i, img) in frames.iter().enumerate() {
        write_pgm(&frames_dir.join(format!("f{i:03}.pgm")), img).unwrap();
    }

    let out_dir = tmp.path().join("out");
    run_wsnm_ok(&[
        "rpca",
        "--frames",
        frames_dir.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);

    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["metrics"]["frames"], 8);
    assert!(manifest["metrics"]["foreground_pixels"].as_u64().unwrap() > 0);
    // The frame matrix is (24·18) × 8, and the default weight scale for
    // frame input is twice its larger dimension.
    assert_eq!(manifest["config"]["weight_c"], 864.0);
    for i in 0..8 {
        assert!(out_dir.join(format!("background_{i:04}.pgm")).exists());
        assert!(out_dir.join(format!("mask_{i:04}.pgm")).exists());
    }
}

#[test]
fn sweep_rejects_an_inverted_range() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_wsnm(&[
        "sweep",
        "--min",
        "0.5",
        "--max",
        "0.3",
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("min"), "unhelpful error:\n{stderr}");
}

#[test]
fn table_rejects_rank_not_below_size() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_wsnm(&[
        "table",
        "--size",
        "50",
        "--ranks",
        "50",
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("not below"), "unhelpful error:\n{stderr}");
}
