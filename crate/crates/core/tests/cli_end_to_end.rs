use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use s3selmer::cache::CACHE_DIR_ENV;

fn run(cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_s3selmer"))
        .args(args)
        .env(CACHE_DIR_ENV, cache)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn curves(dir: &Path) -> String {
    let path = dir.join("curves.csv");
    fs::write(&path, "# label,A,B\nlabel,A,B\n\n37a,-16,16\ne1,1,1\n").unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn stationary_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["stationary", "--parity", "even"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("s,mass"));
    let (s, mass) = lines.next().unwrap().split_once(',').unwrap();
    assert_eq!(s, "0");
    assert!((mass.parse::<f64>().unwrap() - 0.319502).abs() < 1e-6);
    let odd = stdout(&run(dir.path(), &["stationary", "--parity", "odd"]));
    assert!(odd.lines().nth(1).unwrap().starts_with("1,"));
}

#[test]
fn tail_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["tailbound", "--s", "10"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!(row[2].parse::<f64>().unwrap() <= 9.67988e-4);
    assert_eq!(row[4], "true");
    assert_eq!(
        run(dir.path(), &["tailbound", "--s", "3"]).status.code(),
        Some(2)
    );
}

#[test]
fn argument_errors_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let zero = run(
        dir.path(),
        &[
            "simulate",
            "--trials",
            "0",
            "--synthetic",
            "4:1s",
            "--seed",
            "1",
        ],
    );
    assert_eq!(zero.status.code(), Some(2), "{}", stderr(&zero));
    let no_seed = run(
        dir.path(),
        &["simulate", "--trials", "10", "--synthetic", "4:1s"],
    );
    assert_eq!(no_seed.status.code(), Some(2));
    assert!(stderr(&no_seed).contains("--seed"));
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        run(dir.path(), &["stationary", "--rho", "1.5"])
            .status
            .code(),
        Some(2)
    );
    let bad_growth = run(
        dir.path(),
        &[
            "fan", "--label", "x", "--m", "1", "--w", "1", "--X", "5", "--growth", "pow:-2",
        ],
    );
    assert_eq!(bad_growth.status.code(), Some(2));
    assert_eq!(
        run(dir.path(), &["stationary", "--jobs", "0"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn malformed_curves_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "e1,1,1\n# comment\nbad,0,0\n").unwrap();
    let o = run(
        dir.path(),
        &[
            "classify",
            "--curve-file",
            path.to_str().unwrap(),
            "--label",
            "e1",
            "--max-prime",
            "200",
        ],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));
}

#[test]
fn classification_is_cached_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let file = curves(dir.path());
    let out = dir.path().join("records.csv");
    let args = [
        "classify",
        "--curve-file",
        &file,
        "--label",
        "37a",
        "--max-prime",
        "3000",
        "--attest-full-image",
        "--out",
        out.to_str().unwrap(),
    ];
    let first = run(&cache, &args);
    assert!(first.status.success(), "{}", stderr(&first));
    let payload = fs::read(&out).unwrap();
    let cached = fs::read(cache.join("37a.jsonl")).unwrap();
    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("records.csv.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["config"]["command"]["subcommand"], "classify");
    assert_eq!(meta["cache_sha256"]["37a"].as_str().unwrap().len(), 64);

    let second = run(&cache, &[&args[..], &["--jobs", "1"]].concat());
    assert!(second.status.success());
    assert!(stderr(&second).contains("0 computed"));
    assert_eq!(fs::read(&out).unwrap(), payload);
    assert_eq!(fs::read(cache.join("37a.jsonl")).unwrap(), cached);

    let dens = run(
        &cache,
        &["densities", "--label", "37a", "--max-prime", "3000"],
    );
    assert!(dens.status.success());
    assert!(stdout(&dens)
        .starts_with("group,category,count,total,empirical,predicted,deviation,std_error\n"));
    assert!(!stderr(&dens).contains("warning"));

    let gap = run(
        &cache,
        &["densities", "--label", "37a", "--max-prime", "5000"],
    );
    assert_eq!(gap.status.code(), Some(3));
    let missing = run(
        &cache,
        &["densities", "--label", "e1", "--max-prime", "500"],
    );
    assert_eq!(missing.status.code(), Some(3));

    let frob = run(&cache, &["frobclass", "--label", "37a", "--p", "101"]);
    let v: serde_json::Value = serde_json::from_slice(&frob.stdout).unwrap();
    assert_eq!(v["class"]["order"], 2);
    let direct = run(
        &cache,
        &[
            "frobclass",
            "--label",
            "37a",
            "--p",
            "101",
            "--curve-file",
            &file,
        ],
    );
    assert_eq!(direct.stdout, frob.stdout);
    assert_eq!(
        run(
            &cache,
            &[
                "frobclass",
                "--label",
                "37a",
                "--p",
                "37",
                "--curve-file",
                &file
            ]
        )
        .status
        .code(),
        Some(2)
    );

    let cubics = dir.path().join("cubics.csv");
    let fan = run(
        &cache,
        &[
            "fan",
            "--label",
            "37a",
            "--m",
            "2",
            "--w",
            "1",
            "--X",
            "40",
            "--growth",
            "pow:1",
            "--emit-cubics",
            cubics.to_str().unwrap(),
        ],
    );
    assert!(fan.status.success(), "{}", stderr(&fan));
    let elements: Vec<serde_json::Value> = serde_json::from_slice(&fan.stdout).unwrap();
    assert!(!elements.is_empty());
    let csv = fs::read_to_string(&cubics).unwrap();
    assert_eq!(csv.lines().next(), Some("d,polynomial"));
    assert_eq!(csv.lines().count(), elements.len() + 1);
    let too_far = run(
        &cache,
        &[
            "fan", "--label", "37a", "--m", "2", "--w", "1", "--X", "100", "--growth", "pow:1",
        ],
    );
    assert_eq!(too_far.status.code(), Some(3));
}

#[test]
fn simulation_is_byte_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "simulate",
        "--trials",
        "20000",
        "--synthetic",
        "20:1s,5:2s,5:1i",
        "--seed",
        "42",
    ];
    let a = run(dir.path(), &base);
    let b = run(dir.path(), &[&base[..], &["--jobs", "1"]].concat());
    let c = run(dir.path(), &[&base[..], &["--jobs", "3"]].concat());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let d: std::collections::BTreeMap<String, f64> = serde_json::from_slice(&a.stdout).unwrap();
    assert!((d.values().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(d.keys().all(|k| k.parse::<usize>().unwrap() % 2 == 0));
}

#[test]
fn stream_files_and_initial_laws() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("stream.jsonl");
    fs::write(
        &stream,
        "{\"class\":1,\"split\":true}\n\n{\"class\":0,\"split\":false}\n",
    )
    .unwrap();
    let initial = dir.path().join("initial.json");
    fs::write(&initial, "{\"1\": 1.0}").unwrap();
    let o = run(
        dir.path(),
        &[
            "simulate",
            "--trials",
            "100",
            "--seed",
            "1",
            "--stream",
            stream.to_str().unwrap(),
            "--initial",
            initial.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let d: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(d["3"], 1.0);

    let ev = run(
        dir.path(),
        &["evolve", "--w", "1", "--initial", initial.to_str().unwrap()],
    );
    let d: serde_json::Value = serde_json::from_slice(&ev.stdout).unwrap();
    assert_eq!(d["3"], 1.0);

    fs::write(&initial, "{\"0\": 0.5}").unwrap();
    let bad = run(
        dir.path(),
        &["evolve", "--w", "1", "--initial", initial.to_str().unwrap()],
    );
    assert_eq!(bad.status.code(), Some(3));
    fs::write(&stream, "{\"class\":2,\"split\":false}\n").unwrap();
    let bad = run(
        dir.path(),
        &[
            "simulate",
            "--trials",
            "5",
            "--seed",
            "1",
            "--stream",
            stream.to_str().unwrap(),
        ],
    );
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn lagrangian_and_group_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["lagrangians", "--dim", "4", "--blocks", "2"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["lagrangians"], 8);
    assert_eq!(v["closed_form"], 8);
    assert_eq!(v["coordinatewise"], 4);
    assert_eq!(v["ramified_coordinatewise"], 1);

    let gram = dir.path().join("gram.txt");
    fs::write(&gram, "1 0\n0 2\n").unwrap();
    let o = run(
        dir.path(),
        &[
            "lagrangians",
            "--dim",
            "2",
            "--gram",
            gram.to_str().unwrap(),
            "--list",
        ],
    );
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["lagrangians"], 2);
    assert_eq!(v["bases"].as_array().unwrap().len(), 2);
    fs::write(&gram, "1 1\n1 1\n").unwrap();
    let o = run(
        dir.path(),
        &[
            "lagrangians",
            "--dim",
            "2",
            "--gram",
            gram.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(2));

    let o = run(dir.path(), &["gl2f3-report"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["order"], 48);
    assert_eq!(v["classes"].as_array().unwrap().len(), 8);
    assert_eq!(v["sl2_has_index2_normal_subgroup"], false);
}

#[test]
fn reports_are_written_atomically_to_out() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested").join("e.json");
    let o = run(
        dir.path(),
        &["evolve", "--w", "60", "--out", out.to_str().unwrap()],
    );
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let entries: Vec<String> = fs::read_dir(dir.path().join("nested"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    let mut entries = entries;
    entries.sort();
    assert_eq!(
        entries,
        vec!["e.json".to_string(), "e.json.meta.json".to_string()]
    );
}
