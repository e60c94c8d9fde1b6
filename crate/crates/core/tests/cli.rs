use std::path::Path;
use std::process::{Command, Output};

use vrrt::bench::Dataset;
use vrrt::cli::TaskFile;

fn vrrt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrrt"))
        .args(args)
        .current_dir(dir)
        .env("VRRT_OUT_DIR", dir.join("out"))
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn small_dataset(dir: &Path) {
    ok(&vrrt(dir, &["gen-scenes", "--out", "ds", "--count", "2", "--seed", "3"]));
    ok(&vrrt(
        dir,
        &["gen-tasks", "--dataset", "ds", "--bins", "0.5,1.0", "--per-bin", "2", "--seed", "3"],
    ));
}

#[test]
fn render_writes_the_canonical_pose() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("r.toml"),
        "link_lengths = [0.4, 0.4, 0.4, 0.4, 0.4]\n\
         joint_limits = [[-3.14, 3.14], [-3.14, 3.14], [-3.14, 3.14], [-3.14, 3.14], [-3.14, 3.14]]\n\
         blobs_per_link = 8\n",
    )
    .unwrap();
    ok(&vrrt(dir, &["render", "--robot", "r.toml", "--q", "0,0,0,0,0", "--out", "pose.pgm"]));
    let bytes = std::fs::read(dir.join("pose.pgm")).unwrap();
    let header = b"P5\n64 64\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 64 * 64);
    let img = vrrt::renderer::read_pgm(dir.join("pose.pgm")).unwrap();
    assert!(img.max_value() > 0.5);

    // default output location comes from the environment
    ok(&vrrt(dir, &["render", "--q", "0.1,-0.2,0,0,0", "--ascii"]));
    let text = std::fs::read_to_string(dir.join("out/render.pgm")).unwrap();
    assert!(text.starts_with("P2"));
}

#[test]
fn gradcheck_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vrrt(tmp.path(), &["gradcheck", "--cases", "100"]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().find(|l| l.starts_with("max relative error")).unwrap();
    let value: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(value <= 1e-4);
}

#[test]
fn usage_and_file_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = vrrt(dir, &["teleport"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert_eq!(vrrt(dir, &["render", "--q", "0,0", "--colour", "red"]).status.code(), Some(2));
    assert_eq!(vrrt(dir, &["plan"]).status.code(), Some(2));

    std::fs::write(dir.join("bad.toml"), "[planner]\nepsilom = 0.1\n").unwrap();
    let out = vrrt(dir, &["render", "--q", "0,0,0,0,0", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilom"));
    assert_eq!(vrrt(dir, &["plan", "--task", "x", "--dataset", "missing"]).status.code(), Some(1));
    assert_eq!(vrrt(dir, &["render", "--q", "0,0,0,0,0", "--robot", "nope.toml"]).status.code(), Some(1));
    // wrong joint count is a runtime error, not a usage error
    assert_eq!(vrrt(dir, &["render", "--q", "0,0"]).status.code(), Some(1));
    assert_eq!(vrrt(dir, &["plan", "--task", "x", "--epsilon", "-1"]).status.code(), Some(1));
}

#[test]
fn help_lists_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vrrt(tmp.path(), &["plan", "--help"]);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    for s in ["--epsilon", "[default: 0.04]", "--kappa", "[default: 0.9]", "--rho", "[default: 0.7]"] {
        assert!(text.contains(s), "{s}");
    }
}

#[test]
fn plan_and_bench_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_dataset(dir);
    let ds = Dataset::load(&dir.join("ds")).unwrap();
    assert_eq!(ds.tasks.len(), 8);
    let id = ds.tasks[0].id.as_str();

    let plan = |out: &str, extra: &[&str]| {
        let mut args = vec!["plan", "--dataset", "ds", "--task", id, "--clock", "off", "--out", out];
        args.extend_from_slice(extra);
        ok(&vrrt(dir, &args));
        std::fs::read(dir.join(out)).unwrap()
    };
    let a = plan("a.json", &["--seed", "7"]);
    assert_eq!(a, plan("b.json", &["--seed", "7"]));
    assert_ne!(a, plan("c.json", &["--seed", "8"]));
    let gd = plan("gd.json", &["--seed", "7", "--planner", "gd", "--max-iters", "50"]);
    assert_eq!(gd, plan("gd2.json", &["--seed", "7", "--planner", "gd", "--max-iters", "50"]));

    // standalone task file pointing into the dataset
    let t = &ds.tasks[0];
    let tf = TaskFile {
        id: t.id.clone(),
        robot: ds.robot.clone(),
        camera: ds.camera,
        render: ds.render,
        scene: format!("ds/{}", ds.scenes[t.scene]),
        q_start: t.q_start.clone(),
        goal_image: format!("ds/{}", t.image),
        q_goal: Some(t.q_goal.clone()),
        seed: t.seed,
    };
    std::fs::write(dir.join("t.json"), serde_json::to_string_pretty(&tf).unwrap()).unwrap();
    let run = |out: &str| {
        ok(&vrrt(dir, &["plan", "--planner", "vrrt", "--task", "t.json", "--seed", "7", "--clock", "off", "--out", out]));
        std::fs::read(dir.join(out)).unwrap()
    };
    let f1 = run("t1.json");
    assert_eq!(f1, run("t2.json"));
    assert_eq!(f1, a);

    let bench = |out: &str, workers: &str| {
        ok(&vrrt(
            dir,
            &["bench", "--dataset", "ds", "--planners", "vrrt,gd", "--workers", workers, "--clock", "off", "--out", out, "--max-iters", "100"],
        ));
        (
            std::fs::read(dir.join(out).join("summary.csv")).unwrap(),
            std::fs::read(dir.join(out).join("tasks.csv")).unwrap(),
        )
    };
    let b1 = bench("b1", "2");
    assert_eq!(b1, bench("b2", "2"));
    assert_eq!(b1, bench("b3", "1"));
    let summary = String::from_utf8(b1.0).unwrap();
    assert!(summary.starts_with("planner,bin,sr,time_mean,pl_mean,n_success,n_total\n"));
    assert_eq!(summary.lines().count(), 1 + 2 * 2);
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_dataset(dir);
    let id = Dataset::load(&dir.join("ds")).unwrap().tasks[0].id.clone();
    std::fs::write(dir.join("c.toml"), "seed = 4\n[planner]\nmax_iters = 5\nplateau_iters = 100\n").unwrap();
    let iterations = |extra: &[&str]| {
        let mut args = vec!["plan", "--dataset", "ds", "--task", id.as_str(), "--config", "c.toml", "--out", "p.json"];
        args.extend_from_slice(extra);
        ok(&vrrt(dir, &args));
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("p.json")).unwrap()).unwrap();
        (v["result"]["iterations"].as_u64().unwrap(), v["seed"].as_u64().unwrap())
    };
    assert_eq!(iterations(&[]), (5, 4));
    assert_eq!(iterations(&["--max-iters", "3", "--seed", "9"]), (3, 9));
}

#[test]
fn viz_writes_svg() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_dataset(dir);
    let id = Dataset::load(&dir.join("ds")).unwrap().tasks[0].id.clone();
    for mode in ["pca", "workspace"] {
        let out = format!("{mode}.svg");
        ok(&vrrt(
            dir,
            &["viz", "--dataset", "ds", "--task", &id, "--mode", mode, "--max-iters", "20", "--out", &out, "--tree-csv", "tree.csv"],
        ));
        let svg = std::fs::read_to_string(dir.join(&out)).unwrap();
        assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
    assert!(std::fs::read_to_string(dir.join("tree.csv")).unwrap().lines().count() > 2);
}
