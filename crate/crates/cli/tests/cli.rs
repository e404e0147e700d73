use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{ImageBuffer, Luma, Rgb};
use pyrdepth_core::{random_init, ExitLevel, Network, NetworkConfig, WeightContainer};

fn pyrdepth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pyrdepth"))
        .args(args)
        .env_remove("PYRDEPTH_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_rgb(path: &Path, w: u32, h: u32) {
    let img = ImageBuffer::from_fn(w, h, |x, y| Rgb([(x * 7 % 256) as u8, (y * 5 % 256) as u8, ((x + y) % 256) as u8]));
    img.save(path).unwrap();
}

fn write_depth(path: &Path, w: u32, h: u32, metres: impl Fn(u32, u32) -> f32) {
    let img = ImageBuffer::<Luma<u16>, _>::from_fn(w, h, |x, y| Luma([(metres(x, y) * 256.0).round() as u16]));
    img.save(path).unwrap();
}

fn weights_file(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join(format!("w{seed}.pydw"));
    let out = pyrdepth(&["init-weights", "--seed", &seed.to_string(), "--out", s(&path)]);
    assert!(out.status.success(), "{}", stderr(&out));
    path
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn init_weights_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pydw");
    let b = dir.path().join("b.pydw");
    let out = pyrdepth(&["init-weights", "--seed", "1", "--out", s(&a)]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("1971624 parameters"), "{}", stdout(&out));
    assert!(pyrdepth(&["init-weights", "--seed", "2", "--out", s(&b)]).status.success());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let (wa, wb) = (WeightContainer::load(&a).unwrap(), WeightContainer::load(&b).unwrap());
    assert_eq!(wa.num_parameters(), wb.num_parameters());

    let out = pyrdepth(&["inspect", "--weights", s(&a)]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("encoder1/conv1/kernel") && text.contains("[16, 3, 3, 3]"));
    assert!(text.contains("1971624 parameters"));
    assert!(text.contains("matches the default network layout"));
}

#[test]
fn infer_writes_full_resolution_raster_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let weights = weights_file(dir.path(), 0);
    let input = dir.path().join("in.png");
    write_rgb(&input, 512, 256);
    let run = |name: &str, exit: &str| {
        let out_path = dir.path().join(name);
        let preview = dir.path().join(format!("{name}.preview.png"));
        let out = pyrdepth(&[
            "infer", "--weights", s(&weights), "--input", s(&input), "--exit", exit, "--out", s(&out_path),
            "--preview", s(&preview),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(preview.exists());
        out_path
    };
    let first = run("a.png", "h");
    let second = run("b.png", "h");
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    let img = image::open(&first).unwrap();
    assert_eq!((img.width(), img.height()), (512, 256));
    assert!(matches!(img, image::DynamicImage::ImageLuma16(_)));
    let coarse = image::open(run("e.png", "e")).unwrap();
    assert_eq!((coarse.width(), coarse.height()), (512, 256));
}

#[test]
fn infer_rejects_non_divisible_input_unless_resizing() {
    let dir = tempfile::tempdir().unwrap();
    let weights = weights_file(dir.path(), 0);
    let input = dir.path().join("odd.png");
    write_rgb(&input, 500, 300);
    let out_path = dir.path().join("d.png");
    let base = ["infer", "--weights", s(&weights), "--input", s(&input), "--out", s(&out_path)];
    let out = pyrdepth(&base);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--resize"), "{}", stderr(&out));

    let mut args = base.to_vec();
    args.push("--resize");
    let out = pyrdepth(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let img = image::open(&out_path).unwrap();
    assert_eq!((img.width(), img.height()), (500, 300));
}

#[test]
fn infer_reports_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = pyrdepth(&[
        "infer", "--weights", s(&dir.path().join("none.pydw")), "--input", "x.png", "--out", s(&dir.path().join("o.png")),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("none.pydw"));
}

#[test]
fn eval_identical_directories() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt");
    std::fs::create_dir(&gt).unwrap();
    for i in 0..3 {
        write_depth(&gt.join(format!("{i:03}.png")), 40, 20, |x, y| 2.0 + x as f32 * 0.5 + y as f32 * (i + 1) as f32);
    }
    let csv_path = dir.path().join("metrics.csv");
    let out = pyrdepth(&[
        "eval", "--pred", s(&gt), "--gt", s(&gt), "--focal", "720", "--baseline", "0.54", "--cap", "80",
        "--crop", "eigen", "--pred-kind", "depth", "--out", s(&csv_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let (header, rows) = read_csv(&csv_path);
    assert_eq!(header.join(","), "abs_rel,sq_rel,rmse,rmse_log,d1,d2,d3");
    assert_eq!(rows.len(), 1);
    let values: Vec<f64> = rows[0].iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(values, [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    let (per_header, per_rows) = read_csv(&dir.path().join("metrics_per_image.csv"));
    assert_eq!(per_header[0], "image");
    let names: Vec<&str> = per_rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["000", "001", "002"]);
}

#[test]
fn eval_scaled_prediction_and_skips() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir(&pred).unwrap();
    std::fs::create_dir(&gt).unwrap();
    let depth = |x: u32, y: u32| 10.0 * (1 + (x + y) % 5) as f32;
    write_depth(&gt.join("a.png"), 30, 12, depth);
    write_depth(&pred.join("a.png"), 30, 12, |x, y| 1.3 * depth(x, y));
    write_depth(&pred.join("orphan.png"), 30, 12, depth);
    let csv_path = dir.path().join("m.csv");
    let out = pyrdepth(&[
        "eval", "--pred", s(&pred), "--gt", s(&gt), "--focal", "720", "--baseline", "0.54", "--cap", "80",
        "--crop", "none", "--pred-kind", "depth", "--out", s(&csv_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("skipped orphan"));
    let (_, rows) = read_csv(&dir.path().join("m_per_image.csv"));
    assert_eq!(rows.len(), 1);
    let v: Vec<f64> = rows[0][1..].iter().map(|v| v.parse().unwrap()).collect();
    assert!((v[0] - 0.3).abs() < 1e-6);
    assert_eq!((v[4], v[5]), (0.0, 1.0));

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = pyrdepth(&[
        "eval", "--pred", s(&empty), "--gt", s(&gt), "--focal", "720", "--baseline", "0.54", "--out", s(&csv_path),
    ]);
    assert!(!out.status.success());
}

#[test]
fn infer_output_feeds_eval() {
    let dir = tempfile::tempdir().unwrap();
    let weights = weights_file(dir.path(), 0);
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir(&pred).unwrap();
    std::fs::create_dir(&gt).unwrap();
    let input = dir.path().join("img.png");
    write_rgb(&input, 128, 64);
    let out = pyrdepth(&["infer", "--weights", s(&weights), "--input", s(&input), "--out", s(&pred.join("x.png"))]);
    assert!(out.status.success(), "{}", stderr(&out));
    write_depth(&gt.join("x.png"), 256, 128, |x, _| 5.0 + x as f32 * 0.1);
    let csv_path = dir.path().join("m.csv");
    let out = pyrdepth(&[
        "eval", "--pred", s(&pred), "--gt", s(&gt), "--focal", "200", "--baseline", "0.5", "--cap", "50",
        "--out", s(&csv_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let (_, rows) = read_csv(&csv_path);
    assert!(rows[0].iter().all(|v| v.parse::<f64>().unwrap().is_finite()));
}

#[test]
fn bench_single_rep() {
    let dir = tempfile::tempdir().unwrap();
    let weights = weights_file(dir.path(), 0);
    let csv_path = dir.path().join("bench.csv");
    let out = pyrdepth(&[
        "bench", "--weights", s(&weights), "--dims", "128x256", "--levels", "h,q,e", "--reps", "1", "--out",
        s(&csv_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let (header, rows) = read_csv(&csv_path);
    assert_eq!(header.join(","), "exit_level,height,width,reps,median_ms,mean_ms,p95_ms,activation_bytes");
    let cfg = NetworkConfig::default();
    let net = Network::build(cfg.clone(), &random_init(&cfg, 0).unwrap()).unwrap();
    for (row, exit) in rows.iter().zip([ExitLevel::H, ExitLevel::Q, ExitLevel::E]) {
        assert_eq!(row[0], exit.to_string());
        assert_eq!(row[3], "1");
        assert_eq!(row[4], row[6]);
        assert!(row[4].parse::<f64>().unwrap() > 0.0);
        let bytes: usize = row[7].parse().unwrap();
        assert_eq!(bytes, net.activation_footprint(128, 256, exit).unwrap());
    }
}

#[test]
fn verify_loss_passes_and_detects_corruption() {
    let out = pyrdepth(&["verify-loss", "--seed", "5"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("PASS disparity_recovery"));
    assert!(stdout(&out).contains("hit rate"));

    let out = pyrdepth(&["verify-loss", "--corrupt-ssim"]);
    assert!(!out.status.success());
    assert!(stdout(&out).contains("FAIL ssim_zero_variance"));
    assert!(stderr(&out).contains("ssim_zero_variance"));
}

#[test]
fn thread_variable_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_pyrdepth"))
        .args(["verify-loss"])
        .env("PYRDEPTH_THREADS", "many")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).contains("PYRDEPTH_THREADS"));
}
