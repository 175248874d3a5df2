use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn pgft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgft"))
        .args(args)
        .env_remove("PGFT_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn table(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(str::to_owned).collect())
        .collect()
}

#[test]
fn encode_writes_bitstream_and_stats() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("seq.bin");
    let o = pgft(&[
        "encode",
        "--synthetic",
        "static",
        "--frames",
        "2",
        "--q",
        "8",
        "--output",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::metadata(&out).unwrap().len() > 0);
    let rows = table(&dir.path().join("seq.bin.stats.tsv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], "I");
    assert_eq!(rows[1][1], "P");
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("x.bin");
    let missing = pgft(&["encode", "--synthetic", "static", "--output", p(&out)]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("--q"));
    let zero = pgft(&["encode", "--synthetic", "static", "--q", "0", "--output", p(&out)]);
    assert_eq!(zero.status.code(), Some(2));
    assert!(stderr(&zero).contains("must be positive"));
    assert_eq!(
        pgft(&["encode", "--synthetic", "spin", "--q", "8", "--output", p(&out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(pgft(&["frobnicate"]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn decode_matches_encoder_quality() {
    let dir = tempdir().unwrap();
    let frames = dir.path().join("frames");
    let o = pgft(&[
        "synth",
        "--kind",
        "rigid-motion",
        "--frames",
        "3",
        "--output",
        p(&frames),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let grid = stdout(&o).rsplit("--grid-dim ").next().unwrap().trim().to_owned();

    let bits = dir.path().join("seq.bin");
    let o = pgft(&[
        "encode",
        "--input",
        p(&frames),
        "--grid-dim",
        &grid,
        "--q",
        "6",
        "--output",
        p(&bits),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stats = table(&dir.path().join("seq.bin.stats.tsv"));

    // PLY input and the built-in generator give the same stream.
    let direct = dir.path().join("direct.bin");
    let o = pgft(&[
        "encode",
        "--synthetic",
        "rigid-motion",
        "--frames",
        "3",
        "--q",
        "6",
        "--output",
        p(&direct),
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read(&bits).unwrap(), fs::read(&direct).unwrap());

    let dec = dir.path().join("dec");
    let o = pgft(&[
        "decode",
        "--bitstream",
        p(&bits),
        "--geometry",
        p(&frames),
        "--output",
        p(&dec),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reported: Vec<String> = stdout(&o)
        .lines()
        .filter_map(|l| l.split("PSNR-Y ").nth(1))
        .map(|r| r.split(' ').next().unwrap().to_owned())
        .collect();
    let encoded: Vec<String> = stats.iter().map(|r| r[10].clone()).collect();
    assert_eq!(reported, encoded);
    let mut written: Vec<_> = fs::read_dir(&dec).unwrap().map(|e| e.unwrap().file_name()).collect();
    written.sort();
    assert_eq!(written, ["frame_0000.ply", "frame_0001.ply", "frame_0002.ply"]);
    let cloud = pgft_core::pointcloud_io::read_ply(dec.join("frame_0001.ply")).unwrap();
    let orig = pgft_core::pointcloud_io::read_ply(frames.join("frame_0001.ply")).unwrap();
    assert_eq!(cloud.positions, orig.positions);
}

#[test]
fn decode_failures_leave_no_output() {
    let dir = tempdir().unwrap();
    let frames = dir.path().join("frames");
    let other = dir.path().join("other");
    assert!(pgft(&["synth", "--kind", "rigid-motion", "--output", p(&frames)])
        .status
        .success());
    assert!(pgft(&["synth", "--kind", "static", "--output", p(&other)])
        .status
        .success());
    let bits = dir.path().join("seq.bin");
    let o = pgft(&[
        "encode",
        "--synthetic",
        "rigid-motion",
        "--q",
        "8",
        "--output",
        p(&bits),
    ]);
    assert!(o.status.success());

    let dec = dir.path().join("dec");
    let o = pgft(&[
        "decode",
        "--bitstream",
        p(&bits),
        "--geometry",
        p(&other),
        "--output",
        p(&dec),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("reference geometry mismatch"), "{}", stderr(&o));
    assert!(!dec.exists());

    let bytes = fs::read(&bits).unwrap();
    let cut = dir.path().join("cut.bin");
    fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    let o = pgft(&[
        "decode",
        "--bitstream",
        p(&cut),
        "--geometry",
        p(&frames),
        "--output",
        p(&dec),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unexpected end of stream"), "{}", stderr(&o));
    assert!(!dec.exists());
}

#[test]
fn rd_sweep_rows_and_deduplication() {
    let dir = tempdir().unwrap();
    let curve = dir.path().join("curve.tsv");
    let o = pgft(&[
        "rd-sweep",
        "--synthetic",
        "wave",
        "--q-list",
        "2,4,8,16,32",
        "--output",
        p(&curve),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = table(&curve);
    assert_eq!(rows.len(), 5);
    let rate: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(rate.windows(2).all(|w| w[1] < w[0]), "{rate:?}");

    let one = dir.path().join("one.tsv");
    assert!(
        pgft(&["rd-sweep", "--synthetic", "wave", "--q-list", "8", "--output", p(&one)])
            .status
            .success()
    );
    assert_eq!(table(&one).len(), 1);

    let dup = dir.path().join("dup.tsv");
    let o = pgft(&[
        "rd-sweep",
        "--synthetic",
        "wave",
        "--q-list",
        "8,4,8",
        "--output",
        p(&dup),
    ]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("duplicate Q value 8"));
    let rows = table(&dup);
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["4", "8"]);
}

#[test]
fn fit_lambda_on_curves() {
    let dir = tempdir().unwrap();
    // Adjacent slopes follow λ = 0.2·Q^1.5 at the smaller Q of each pair.
    let (alpha, beta) = (0.2f64, 1.5f64);
    let qs = [2.0f64, 4.0, 8.0, 16.0, 32.0];
    let mut rows = vec!["q\tbpip\tpsnr_y\tpsnr_u\tpsnr_v\tmse".to_owned()];
    let (mut rate, mut mse) = (6.0f64, 1.0f64);
    for (i, q) in qs.iter().enumerate() {
        if i > 0 {
            let next = rate * 0.7;
            mse += alpha * qs[i - 1].powf(beta) * (rate - next);
            rate = next;
        }
        rows.push(format!("{q}\t{rate}\t0\t0\t0\t{mse}"));
    }
    let curve = dir.path().join("curve.tsv");
    fs::write(&curve, rows.join("\n")).unwrap();
    let o = pgft(&["fit-lambda", "--curve", p(&curve)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let get = |k: &str| -> f64 {
        out.lines()
            .find_map(|l| l.strip_prefix(&format!("{k}\t")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((get("alpha") / alpha - 1.0).abs() < 0.01);
    assert!((get("beta") / beta - 1.0).abs() < 0.01);

    let short = dir.path().join("short.tsv");
    fs::write(&short, format!("{}\n{}\n", rows[0], rows[1])).unwrap();
    let o = pgft(&["fit-lambda", "--curve", p(&short)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("need ≥ 3 points"));
}

#[test]
fn validate_gmrf_reports() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("report.tsv");
    let o = pgft(&["validate-gmrf", "--side", "8", "--output", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    for key in [
        "points\t64",
        "samples\t640",
        "sign_agreement",
        "support_correlation",
        "sparsity_ratio",
    ] {
        assert!(text.contains(key), "{text}");
    }
    let frames = dir.path().join("frames");
    assert!(
        pgft(&["synth", "--kind", "wave", "--frames", "4", "--output", p(&frames)])
            .status
            .success()
    );
    let o = pgft(&[
        "validate-gmrf",
        "--frames",
        p(&frames),
        "--patches",
        "3",
        "--patch-size",
        "20",
        "--grid-dim",
        "254",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("samples\t4"));
    assert!(stdout(&o).contains("rank_deficient\ttrue"));
}

#[test]
fn output_is_deterministic_across_runs_and_threads() {
    let dir = tempdir().unwrap();
    let mut streams = Vec::new();
    for threads in ["1", "3", "1"] {
        let out = dir.path().join(format!("s{}.bin", streams.len()));
        let o = Command::new(env!("CARGO_BIN_EXE_pgft"))
            .args([
                "encode",
                "--synthetic",
                "wave",
                "--frames",
                "2",
                "--q",
                "4",
                "--output",
                p(&out),
            ])
            .env("PGFT_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success());
        streams.push(fs::read(&out).unwrap());
    }
    assert_eq!(streams[0], streams[1]);
    assert_eq!(streams[0], streams[2]);
}
