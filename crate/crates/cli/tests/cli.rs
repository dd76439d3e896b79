use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use netcoord_core::engine::load_log;
use netcoord_core::glm::synthetic;
use netcoord_core::metrics::{write_metric_table, MetricSeries};

fn netcoord() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_netcoord"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    netcoord().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn coefficients(path: &Path) -> BTreeMap<String, Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            let vals = rec.iter().skip(1).map(|v| v.parse().unwrap()).collect();
            (rec[0].to_string(), vals)
        })
        .collect()
}

#[test]
fn same_seed_gives_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let oa = run(&["simulate", "--seed", "11", "-r", "2", "--jobs", "2", "--out", s(&a)]);
    let ob = run(&["simulate", "--seed", "11", "-r", "2", "--jobs", "1", "--out", s(&b)]);
    assert!(oa.status.success() && ob.status.success(), "{}", stderr(&oa));
    assert_eq!(oa.stdout, ob.stdout);
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), 4);
    assert_eq!(fa, fb);

    let c = tmp.path().join("c");
    run(&["simulate", "--seed", "12", "-r", "2", "--out", s(&c)]);
    assert_ne!(files(&c).values().collect::<Vec<_>>(), fa.values().collect::<Vec<_>>());
}

#[test]
fn three_repetitions_write_three_logs_and_three_metric_files() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--n", "20", "--structure", "ring", "-r", "3", "--seed", "4", "--out", s(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> = files(tmp.path()).into_keys().collect();
    assert_eq!(names.iter().filter(|n| n.ends_with(".jsonl")).count(), 3);
    assert_eq!(names.iter().filter(|n| n.ends_with(".metrics.csv")).count(), 3);

    let stdout = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (r, row) in rows.iter().enumerate() {
        let cols: Vec<&str> = row.split('\t').collect();
        let log = load_log(&tmp.path().join(format!("{}.jsonl", cols[0]))).unwrap().log;
        log.validate().unwrap();
        let last = MetricSeries::from_log(&log).unwrap().points[39];
        assert_eq!(cols[1], (4 + r).to_string());
        assert_eq!(cols[2].parse::<f64>().unwrap(), last.dominance);
        assert_eq!(cols[3].parse::<f64>().unwrap(), last.entropy);
    }
}

#[test]
fn odd_player_count_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--n", "13", "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("even"), "{}", stderr(&o));
    assert!(files(tmp.path()).is_empty());
}

#[test]
fn unknown_flags_and_config_keys_are_usage_errors() {
    assert_eq!(run(&["simulate", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[simulate]\nn = 20\nwidth = 3\n").unwrap();
    let o = run(&["simulate", "-c", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("width"));
}

#[test]
fn config_file_values_apply_and_flags_override_them() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    let out = tmp.path().join("from_config");
    std::fs::write(
        &cfg,
        format!(
            "seed = 9\nout = \"{}\"\n[simulate]\nn = 10\nstructure = \"complete\"\ntrials = 6\nrepetitions = 2\nprefix = \"cfg\"\n",
            s(&out)
        ),
    )
    .unwrap();
    let o = run(&["simulate", "-c", s(&cfg), "--trials", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = load_log(&out.join("cfg-homogeneous_complete-2.jsonl")).unwrap().log;
    let meta = log.meta.unwrap().config;
    assert_eq!((meta.n, meta.trials, meta.seed), (10, 7, 10));
}

#[test]
fn analyze_replays_simulation_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    assert!(run(&["simulate", "--seed", "21", "-r", "2", "--out", s(&sim)]).status.success());
    for r in 1..=2 {
        let id = format!("sim-spatial_ring-{r}");
        let out = tmp.path().join(format!("an{r}"));
        let o = run(&["analyze", "--out", s(&out), s(&sim.join(format!("{id}.jsonl")))]);
        assert!(o.status.success(), "{}", stderr(&o));
        let at_sim = std::fs::read(sim.join(format!("{id}.metrics.csv"))).unwrap();
        assert_eq!(std::fs::read(out.join("metrics.csv")).unwrap(), at_sim);

        let ids = std::fs::read_to_string(out.join(format!("{id}.colormap_ids.tsv"))).unwrap();
        assert_eq!(ids.lines().count(), 21);
        assert!(ids.lines().all(|l| l.split('\t').count() == 41));
        let clusters = std::fs::read_to_string(out.join("clusters.csv")).unwrap();
        let covered: usize = clusters.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse::<usize>().unwrap()).sum();
        assert_eq!(covered, 20);
        let pairs = std::fs::read_to_string(out.join("pairs.csv")).unwrap();
        assert_eq!(pairs.lines().count(), 1 + 10 * 40);
    }

    let both = tmp.path().join("both");
    let o = run(&["analyze", "--out", s(&both), s(&sim.join("sim-spatial_ring-1.jsonl")), s(&sim.join("sim-spatial_ring-2.jsonl"))]);
    assert!(o.status.success());
    let logs: Vec<_> = (1..=2)
        .map(|r| load_log(&sim.join(format!("sim-spatial_ring-{r}.jsonl"))).unwrap().log)
        .collect();
    let series: Vec<MetricSeries> = logs.iter().map(|l| MetricSeries::from_log(l).unwrap()).collect();
    let mut expected = Vec::new();
    write_metric_table(&mut expected, &series).unwrap();
    assert_eq!(std::fs::read(both.join("metrics.csv")).unwrap(), expected);
}

#[test]
fn analyze_rejects_empty_lists_and_reports_each_bad_file() {
    assert_eq!(run(&["analyze"]).status.code(), Some(2));

    let tmp = tempfile::tempdir().unwrap();
    assert!(run(&["simulate", "--seed", "2", "--trials", "3", "--out", s(tmp.path())]).status.success());
    let good = tmp.path().join("sim-spatial_ring-1.jsonl");
    let text = std::fs::read_to_string(&good).unwrap();
    let v2 = tmp.path().join("future.jsonl");
    std::fs::write(&v2, text.replace("\"schema_version\":1", "\"schema_version\":2")).unwrap();
    let junk = tmp.path().join("junk.jsonl");
    std::fs::write(&junk, "not json\n").unwrap();

    let out = tmp.path().join("out");
    let o = run(&["analyze", "--out", s(&out), s(&good), s(&v2), s(&junk)]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    let lines: Vec<&str> = err.lines().collect();
    assert!(lines.iter().any(|l| l.contains("future.jsonl") && l.contains("schema version 2")), "{err}");
    assert!(lines.iter().any(|l| l.contains("junk.jsonl")), "{err}");
    assert!(!lines.iter().any(|l| l.contains("sim-spatial_ring-1.jsonl")), "{err}");
    assert!(err.contains("2 of 3"));
    assert!(!out.exists());
}

#[test]
fn glm_recovers_a_synthetic_beta_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("beta.csv");
    let data = synthetic::beta_trials(4000, 0.5, 0.04, 30.0, 3);
    synthetic::write_table(&data, "dominance", std::fs::File::create(&table).unwrap()).unwrap();
    let o = run(&["glm", "--table", s(&table), "--family", "beta", "-y", "dominance", "-x", "Trial", "--out", s(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let c = coefficients(&tmp.path().join("coefficients.csv"));
    assert!((c["Intercept"][0] - 0.5).abs() <= 0.05, "{c:?}");
    assert!((c["Trial"][0] - 0.04).abs() <= 0.004, "{c:?}");
    assert!((c["phi"][0] - 30.0).abs() <= 3.0, "{c:?}");
    let [_, se, lo, hi] = c["Trial"][..] else { panic!() };
    assert!(lo < 0.04 && 0.04 < hi && se > 0.0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().as_bytes(), std::fs::read(tmp.path().join("coefficients.csv")).unwrap());
}

#[test]
fn glm_recovers_a_synthetic_gaussian_fixture_with_explicit_output() {
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("g.csv");
    let data = synthetic::gaussian_trials(4000, 1.5, -0.04, 0.25, 8);
    synthetic::write_table(&data, "entropy", std::fs::File::create(&table).unwrap()).unwrap();
    let dest = tmp.path().join("nested").join("fit.csv");
    let o = run(&["glm", "--table", s(&table), "--family", "gaussian", "-y", "entropy", "-x", "Trial", "--output", s(&dest), "--level", "0.9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let c = coefficients(&dest);
    assert!((c["Intercept"][0] - 1.5).abs() <= 0.15);
    assert!((c["Trial"][0] + 0.04).abs() <= 0.004);
    assert!((c["sigma"][0] - 0.25).abs() <= 0.025);
}

#[test]
fn glm_flag_errors() {
    let o = run(&["glm", "--table", "t.csv", "--family", "poisson", "-y", "a"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("poisson"));
    assert_eq!(run(&["glm", "--table", "t.csv", "--family", "beta", "-y", "a", "--interaction", "ab"]).status.code(), Some(2));
    let o = run(&["glm", "--table", "/nonexistent/t.csv", "--family", "beta", "-y", "a"]);
    assert_eq!(o.status.code(), Some(3));

    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("t.csv");
    std::fs::write(&table, "y,x\n0.2,1\n0.4,2\n").unwrap();
    let o = run(&["glm", "--table", s(&table), "--family", "beta", "-y", "y", "-x", "z", "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains('z'));
}

#[test]
fn extract_matches_the_narrative_golden_file() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["extract", "--out", s(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let got = std::fs::read_to_string(tmp.path().join("claims.tsv")).unwrap();
    let golden = include_str!("data/narrative_claims.tsv");
    assert_eq!(got, golden);
    let pairs: Vec<(&str, &str)> = got
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            (c[3], c[4])
        })
        .collect();
    assert!(pairs.contains(&("earthquake", "tsunami")));
    assert!(pairs.contains(&("tsunami", "nuclear_disaster")));
}

#[test]
fn extract_writes_group_difference_matrices() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c.tsv");
    std::fs::write(
        &corpus,
        "run\tgroup\tphase\ttext\n\
         r1\tg\tpre\tThe earthquake triggered a tsunami.\n\
         r1\tg\tpost\tThe earthquake triggered a tsunami. The tsunami caused a nuclear disaster.\n\
         r2\tg\tpost\tThe tsunami caused a nuclear disaster.\n",
    )
    .unwrap();
    let o = run(&["extract", "--corpus", s(&corpus), "--out", s(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("diff_g.tsv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let mut cells = BTreeMap::new();
    for l in lines {
        let row: Vec<&str> = l.split('\t').collect();
        for (j, v) in row.iter().enumerate().skip(1) {
            cells.insert((row[0].to_string(), header[j].to_string()), v.parse::<f64>().unwrap());
        }
    }
    // Two runs; post has 1 + 0 earthquake->tsunami and 1 + 1 tsunami->nuclear documents, pre has one.
    assert_eq!(cells[&("earthquake".into(), "tsunami".into())], 0.0);
    assert_eq!(cells[&("tsunami".into(), "nuclear_disaster".into())], 1.0);
    assert_eq!(cells.values().filter(|v| **v != 0.0).count(), 1);
    let claims = std::fs::read_to_string(tmp.path().join("claims.tsv")).unwrap();
    assert!(!claims.contains("narrative"));
    let counts = std::fs::read_to_string(tmp.path().join("claim_counts.csv")).unwrap();
    assert_eq!(counts, "run_id,subject,group,post,claims\nr1,r1:doc0,g,0,1\nr1,r1:doc1,g,1,2\nr2,r2:doc2,g,1,1\n");
}

#[test]
fn extract_missing_lexicon_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("topics.toml");
    let o = run(&["extract", "--topics", s(&missing), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("topics.toml"));
    assert!(!tmp.path().join("claims.tsv").exists());
}

fn serve_with_bots(cfg_body: &str, env_bind: Option<&str>) -> (PathBuf, tempfile::TempDir) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("serve.toml");
    std::fs::write(&cfg, cfg_body).unwrap();
    let logs = tmp.path().join("logs");
    let mut cmd = netcoord();
    cmd.args(["serve", "-c", s(&cfg), "--out", s(&logs), "--exit-when-done"]);
    if let Some(b) = env_bind {
        cmd.env("NETCOORD_BIND", b);
    }
    let mut child = cmd.stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut line = String::new();
    stdout.read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("unexpected `{line}`")).to_string();
    let bots = run(&["bots", "--url", &format!("ws://{addr}/ws"), "--run-id", "live", "--count", "20", "--seed", "5"]);
    assert!(bots.status.success(), "{}", stderr(&bots));
    let table = String::from_utf8(bots.stdout).unwrap();
    assert_eq!(table.lines().filter(|l| l.contains("\tcompleted\t")).count(), 20);
    let status = child.wait().unwrap();
    assert!(status.success());
    let mut rest = String::new();
    std::io::Read::read_to_string(&mut stdout, &mut rest).unwrap();
    assert!(rest.contains("live completed"), "{rest}");
    (logs.join("live.jsonl"), tmp)
}

#[test]
fn serve_hosts_a_configured_run_for_bots() {
    let body = "seed = 1\n[serve]\nbind = \"127.0.0.1:0\"\n[[serve.runs]]\nrun_id = \"live\"\nstructure = \"complete\"\ntrials = 4\n";
    let (log_path, _tmp) = serve_with_bots(body, None);
    let log = load_log(&log_path).unwrap().log;
    log.validate().unwrap();
    assert_eq!(log.trials.len(), 40);
    assert_eq!(log.documents.len(), 40);
    assert_eq!(log.meta.unwrap().config.seed, 1);
}

#[test]
fn serve_takes_the_bind_address_from_the_environment() {
    let body = "[serve]\n[[serve.runs]]\nrun_id = \"live\"\nstructure = \"ring\"\ntrials = 2\nseed = 77\n";
    let (log_path, _tmp) = serve_with_bots(body, Some("127.0.0.1:0"));
    let log = load_log(&log_path).unwrap().log;
    assert_eq!(log.meta.unwrap().config.seed, 77);
}

#[test]
fn serve_without_runs_is_a_usage_error() {
    assert_eq!(run(&["serve"]).status.code(), Some(2));
}
