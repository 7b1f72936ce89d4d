use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use morphevo::metrics::sweep;
use morphevo_cli::artifacts::{load_archive, read_csv, read_trace, SummaryRow, SweepRow};
use morphevo_cli::config::LatticeSpec;

fn morphevo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morphevo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
[env]
name = "synthetic"

[training]
size = 16
step = [0.2, 0.1]

[evolution]
max_generations = 300
stagnation_window = 20

[experiment]
runs = 2
checkpoint_every = 10

[metrics]
global = { origin = [0.1, 0.1], step = [0.1, 0.1], shape = [8, 6] }
n_eval = 1
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn evolve(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "evolve",
        "--config",
        arg(config),
        "--out",
        arg(out),
        "--quiet",
    ];
    args.extend_from_slice(extra);
    morphevo(&args)
}

#[test]
fn evolve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(evolve(&config, &a, &[]).status.success());
    assert!(evolve(&config, &b, &["--jobs", "2"]).status.success());
    for run in ["run_000", "run_001"] {
        for file in ["archive.json", "trace.jsonl", "global.csv", "global.svg"] {
            assert_eq!(
                fs::read(a.join(run).join(file)).unwrap(),
                fs::read(b.join(run).join(file)).unwrap(),
                "{run}/{file}"
            );
        }
    }
    assert_eq!(
        fs::read(a.join("summary.csv")).unwrap(),
        fs::read(b.join("summary.csv")).unwrap()
    );
    let rows: Vec<SummaryRow> = read_csv(&a.join("summary.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.group == "16"));
    assert_ne!(rows[0].seed, rows[1].seed);

    let c = dir.path().join("c");
    assert!(evolve(&config, &c, &["--seed", "9", "--runs", "1"])
        .status
        .success());
    assert_ne!(
        fs::read(a.join("run_000/archive.json")).unwrap(),
        fs::read(c.join("run_000/archive.json")).unwrap()
    );
}

#[test]
fn halted_runs_resume_to_the_same_result() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let (straight, halted) = (dir.path().join("straight"), dir.path().join("halted"));
    assert!(evolve(&config, &straight, &[]).status.success());
    for stop in ["13", "40", "41"] {
        let o = evolve(&config, &halted, &["--halt-after", stop]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert!(halted.join("run_000/checkpoint.json").exists());
    assert!(!halted.join("summary.csv").exists());
    assert!(evolve(&config, &halted, &[]).status.success());
    assert!(!halted.join("run_000/checkpoint.json").exists());
    for run in ["run_000", "run_001"] {
        for file in ["archive.json", "trace.jsonl"] {
            assert_eq!(
                fs::read(straight.join(run).join(file)).unwrap(),
                fs::read(halted.join(run).join(file)).unwrap(),
                "{run}/{file}"
            );
        }
    }
    let (_, records) = read_trace(&halted.join("run_000/trace.jsonl")).unwrap();
    let doc = load_archive(&halted.join("run_000/archive.json")).unwrap();
    assert_eq!(records.len() as u64, doc.run.generations_used);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), "[env]\n[training]\nsize = 4\n");
    let o = evolve(&config, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("name"), "{}", stderr(&o));

    let config = write_config(
        dir.path(),
        "[env]\nname = \"cartpole\"\n[evolution]\nsigma_zero = 1\n",
    );
    let o = evolve(&config, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("evolution") && stderr(&o).contains("sigma_zero"),
        "{}",
        stderr(&o)
    );

    let o = morphevo(&["evolve", "--config", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(morphevo(&["evolve"]).status.code(), Some(2));
}

#[test]
fn results_from_another_config_are_not_reused() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), SMALL);
    assert!(evolve(&config, &out, &["--runs", "1"]).status.success());
    let other = write_config(
        dir.path(),
        &SMALL.replace("max_generations = 300", "max_generations = 301"),
    );
    let o = evolve(&other, &out, &["--runs", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("different configuration"));
}

#[test]
fn sweep_matches_in_process_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    assert!(evolve(&config, &out, &["--runs", "1"]).status.success());
    let archive = out.join("run_000/archive.json");
    let doc = load_archive(&archive).unwrap();

    let s1 = dir.path().join("s1");
    let o = morphevo(&[
        "sweep",
        arg(&archive),
        "--lattice",
        "0.1,0.1,0.1,0.1,18,18",
        "--n-eval",
        "2",
        "--seed",
        "5",
        "--out",
        arg(&s1),
        "--quiet",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<SweepRow> = read_csv(&s1.join("sweep.csv")).unwrap();
    assert_eq!(rows.len(), 324);
    let grid = LatticeSpec::default().grid().unwrap();
    let direct = sweep(&doc.env, &doc.archive, &grid, 2, 5).unwrap();
    for (row, (m, r)) in rows
        .iter()
        .zip(grid.cells().iter().zip(&direct.mean_reward))
    {
        assert_eq!(
            (row.x_param, row.y_param, row.mean_reward, row.n_eval),
            (m.x_param, m.y_param, *r, 2)
        );
    }

    // default lattice and seed reproduce the evolve-time global sweep
    let s2 = dir.path().join("s2");
    let o = morphevo(&[
        "sweep",
        arg(&archive),
        "--n-eval",
        "1",
        "--out",
        arg(&s2),
        "--quiet",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(s2.join("sweep.csv")).unwrap(),
        fs::read(out.join("run_000/global.csv")).unwrap()
    );

    // re-rendering the CSV gives the same image bytes
    let svg = dir.path().join("again.svg");
    assert!(
        morphevo(&["render", arg(&s1.join("sweep.csv")), "--out", arg(&svg)])
            .status
            .success()
    );
    assert_eq!(
        fs::read(&svg).unwrap(),
        fs::read(s1.join("sweep.svg")).unwrap()
    );

    let o = morphevo(&[
        "sweep",
        arg(&archive),
        "--lattice",
        "-0.5,0.1,0.1,0.1,3,3",
        "--out",
        arg(&s1),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = morphevo(&[
        "sweep",
        arg(&archive),
        "--lattice",
        "1,2",
        "--out",
        arg(&s1),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn archives_with_another_format_version_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    assert!(evolve(&config, &out, &["--runs", "1"]).status.success());
    let path = out.join("run_000/archive.json");
    let text = fs::read_to_string(&path).unwrap().replacen(
        "\"format_version\": 1",
        "\"format_version\": 99",
        1,
    );
    let bad = dir.path().join("bad.json");
    fs::write(&bad, text).unwrap();
    let e = load_archive(&bad).unwrap_err();
    assert!(e.to_string().contains("format version 99"), "{e}");
    let o = morphevo(&["sweep", arg(&bad), "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

fn summary(path: &Path, groups: &[(&str, &[f64])]) {
    let mut text = String::from(
        "run,seed,group,default_fitness,local_mean,global_mean,sufficiency,clusters\n",
    );
    let mut run = 0;
    for (g, values) in groups {
        for v in *values {
            text.push_str(&format!("{run},{run},{g},{v},{v},{v},{},1\n", run * 3));
            run += 1;
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn stats_reports_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    summary(
        &a,
        &[
            ("1", &[-420.0, -380.5, -610.25, -380.5, -512.0, -455.75]),
            ("16", &[-700.0, -764.73, -380.5, -820.0, -700.0]),
        ],
    );
    summary(
        &b,
        &[(
            "64",
            &[-990.0, -1000.0, -700.0, -1000.0, -845.5, -912.0, -1000.0],
        )],
    );
    let out = dir.path().join("stats");
    let o = morphevo(&[
        "stats",
        arg(&a),
        arg(&b),
        "--adjust",
        "holm",
        "--out",
        arg(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("Kruskal-Wallis H = 12.230492"), "{text}");
    assert_eq!(fs::read_to_string(out.join("stats.txt")).unwrap(), text);
    let csv = fs::read_to_string(out.join("stats.csv")).unwrap();
    let line = csv
        .lines()
        .find(|l| l.starts_with("global_mean,dunn,1,64"))
        .unwrap();
    let fields: Vec<&str> = line.split(',').collect();
    let p: f64 = fields[5].parse().unwrap();
    let adj: f64 = fields[6].parse().unwrap();
    assert!((p / 0.000_523_155_941_800_304_6 - 1.0).abs() < 1e-9);
    assert!((adj / 0.001_569_467_825_400_913_8 - 1.0).abs() < 1e-9);
    assert!(text.contains("significant pairs: 1|64"));
}

#[test]
fn stats_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    summary(&one, &[("64", &[1.0, 2.0, 3.0])]);
    let o = morphevo(&["stats", arg(&one)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at least two groups"));

    let bad = dir.path().join("bad.csv");
    fs::write(
        &bad,
        "run,seed,group,default_fitness,local_mean,global_mean,sufficiency,clusters\n0,0,a,1,1,1,1,1\n1,1,b,1,x,1,1,1\n",
    )
    .unwrap();
    let o = morphevo(&["stats", arg(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = morphevo(&["stats", arg(&one), "--adjust", "sidak"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn schedule_compare_runs_four_matched_groups() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &SMALL.replace("max_generations = 300", "max_generations = 80"),
    );
    let out = dir.path().join("cmp");
    let o = morphevo(&[
        "schedule-compare",
        "--config",
        arg(&config),
        "--out",
        arg(&out),
        "--quiet",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<SummaryRow> = read_csv(&out.join("summary.csv")).unwrap();
    let mut groups: Vec<&str> = rows.iter().map(|r| r.group.as_str()).collect();
    groups.dedup();
    assert_eq!(
        groups,
        ["incremental", "random", "random_walk_1", "random_walk_5"]
    );
    // matched seeds across schedules
    let seeds = |g: &str| {
        rows.iter()
            .filter(|r| r.group == g)
            .map(|r| r.seed)
            .collect::<Vec<_>>()
    };
    assert_eq!(seeds("incremental"), seeds("random_walk_5"));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("global_mean"));
    assert!(out.join("stats.csv").exists());
    for g in groups {
        let doc = load_archive(&out.join(g).join("run_000/archive.json")).unwrap();
        assert_eq!(doc.run.schedule, g);
        assert_eq!(doc.archive.grid.len(), 16);
    }
}
