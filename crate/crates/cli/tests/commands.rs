mod common;

use std::collections::BTreeSet;
use std::fs;
use std::process::Command;

use sappkg::deep::RecReport;
use sappkg::kge::EvalReport;
use sappkg::kgstats::GraphStats;
use sappkg_cli::commands::Manifest;

use common::{exact_mean, read_tsv, sha256, Fixture};

fn binary(fixture: &Fixture, args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_sappkg"))
        .arg("--config")
        .arg(fixture.config())
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn built(apps: usize) -> Fixture {
    let f = Fixture::new(apps, "");
    f.ok(&["build"]);
    f
}

fn relation_names(path: &std::path::Path) -> BTreeSet<String> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split('\t').nth(1).unwrap().to_string()).collect()
}

#[test]
fn build_is_idempotent() {
    let f = built(120);
    let files = ["triples.tsv", "train.tsv", "valid.tsv", "test.tsv", "manifest.json"];
    let first: Vec<String> = files.iter().map(|p| sha256(&f.work(&format!("kg/{p}")))).collect();
    f.ok(&["build"]);
    let second: Vec<String> = files.iter().map(|p| sha256(&f.work(&format!("kg/{p}")))).collect();
    assert_eq!(first, second);
}

#[test]
fn two_hundred_apps_give_at_most_twelve_triples_each() {
    let f = built(200);
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(f.work("kg/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.entities.len(), 200);
    assert!(manifest.triples <= 12 * 200, "{} triples", manifest.triples);
    assert_eq!(manifest.train + manifest.valid + manifest.test, manifest.triples);
    let lines = fs::read_to_string(f.work("kg/triples.tsv")).unwrap().lines().count();
    assert_eq!(lines, manifest.triples);
}

#[test]
fn seed_and_workdir_flags_override_the_config() {
    let f = built(100);
    let other = f.dir.path().join("other");
    let other_arg = other.display().to_string();
    f.ok(&["--workdir", &other_arg, "--seed", "99", "build"]);
    assert_ne!(sha256(&f.work("kg/triples.tsv")), sha256(&other.join("kg/triples.tsv")));
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(other.join("kg/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.seed, 99);
}

#[test]
fn exit_codes() {
    let f = Fixture::new(60, "");
    assert_eq!(binary(&f, &["--help"]), 0);
    assert_eq!(binary(&f, &["frobnicate"]), 2);
    assert_eq!(binary(&f, &["train"]), 2);
    // nothing built yet
    assert_eq!(binary(&f, &["stats"]), 2);
    assert_eq!(binary(&f, &["train", "TransE"]), 2);
    fs::remove_file(f.dir.path().join("apps.jsonl")).unwrap();
    assert_eq!(binary(&f, &["build"]), 2);
    let missing = f.dir.path().join("none.toml").display().to_string();
    assert_eq!(binary(&f, &["--config", &missing, "build"]), 2);
}

#[test]
fn invalid_config_values_exit_2() {
    for extra in ["\n[train]\nlearning_rate = -1.0\n", "\nrec_k = []\n", "\nmystery = true\n"] {
        let f = Fixture::new(40, extra);
        assert_eq!(f.run(&["build"]), 2, "{extra}");
    }
    let f = Fixture::new(40, "");
    fs::write(f.config(), "corpus = \"apps.jsonl\"\nsnapshot_date = \"2023-03-01\"\nsplit = [0.5, 0.5, 0.5]\nseed = 1\n").unwrap();
    assert_eq!(f.run(&["build"]), 2);
}

#[test]
fn unreadable_corpus_is_a_runtime_error() {
    let f = Fixture::new(40, "");
    fs::write(f.dir.path().join("apps.jsonl"), [0xff, 0xfe, 0x00]).unwrap();
    assert_eq!(f.run(&["build"]), 3);
}

#[test]
fn stats_on_a_triangle_have_unit_density() {
    let f = Fixture::new(10, "");
    let kg = f.work("kg");
    fs::create_dir_all(&kg).unwrap();
    let names = ["a", "b", "c"];
    let mut rows = Vec::new();
    for h in names {
        for t in names {
            if h != t {
                rows.push(format!("{h}\tADSIMILAR\t{t}\n"));
            }
        }
    }
    fs::write(kg.join("triples.tsv"), rows.concat()).unwrap();
    fs::write(kg.join("train.tsv"), rows[..4].concat()).unwrap();
    fs::write(kg.join("valid.tsv"), rows[4..5].concat()).unwrap();
    fs::write(kg.join("test.tsv"), rows[5..].concat()).unwrap();
    let manifest = Manifest {
        format: "sappkg-kg/1".into(),
        seed: 0,
        k: 1,
        split: [0.6, 0.2, 0.2],
        snapshot_date: chrono::NaiveDate::from_ymd_opt(2023, 3, 1).unwrap(),
        binning: Default::default(),
        records: 3,
        malformed_lines: 0,
        rejected: 0,
        triples: 6,
        train: 4,
        valid: 1,
        test: 1,
        relations: vec!["ADSIMILAR".into()],
        entities: names.iter().map(|s| s.to_string()).collect(),
    };
    fs::write(kg.join("manifest.json"), serde_json::to_string(&manifest).unwrap()).unwrap();
    f.ok(&["stats"]);
    let (header, rows) = read_tsv(&f.work("stats/graph_stats.tsv"));
    assert_eq!(header, GraphStats::FIELDS);
    assert_eq!(rows.len(), 1);
    let density = header.iter().position(|h| h == "density").unwrap();
    assert_eq!(rows[0][density], "1");
}

#[test]
fn stats_report_schema_and_symmetric_relatedness() {
    let f = built(150);
    f.ok(&["stats"]);
    let (header, rows) = read_tsv(&f.work("stats/graph_stats.tsv"));
    assert_eq!(header, GraphStats::FIELDS);
    assert_eq!(rows[0].len(), header.len());

    let (header, rows) = read_tsv(&f.work("stats/relatedness.tsv"));
    assert_eq!(header.len(), 13);
    assert_eq!(rows.len(), 12);
    let value = |i: usize, j: usize| rows[i][j + 1].parse::<f64>().unwrap();
    for i in 0..12 {
        assert_eq!(rows[i][0], header[i + 1]);
        assert_eq!(value(i, i), 1.0);
        for j in 0..12 {
            assert_eq!(value(i, j), value(j, i), "{i},{j}");
            assert!((0.0..=1.0).contains(&value(i, j)));
        }
    }
    assert!(f.work("stats/support.tsv").is_file());
}

#[test]
fn train_then_eval_fills_every_metric_column() {
    let f = built(120);
    f.ok(&["train", "transe"]);
    assert!(f.work("models/TransE.ckpt").is_file());
    let (header, _) = read_tsv(&f.work("reports/TransE_train.tsv"));
    assert_eq!(header, ["epoch", "mean_loss", "valid_filtered_mrr"]);

    f.ok(&["eval", "TransE"]);
    let report = f.work("reports/TransE_eval.tsv");
    let (header, rows) = read_tsv(&report);
    assert_eq!(header[..2], ["model", "queries"]);
    assert_eq!(header[2..], EvalReport::COLUMNS);
    assert_eq!(rows.len(), 1);
    for cell in &rows[0][2..] {
        assert!(cell.parse::<f64>().unwrap().is_finite(), "{cell}");
    }
    let first = sha256(&report);
    f.ok(&["eval", "TransE"]);
    assert_eq!(sha256(&report), first);
}

#[test]
fn checkpoint_problems_exit_2() {
    let f = built(80);
    assert_eq!(f.run(&["eval", "TransE"]), 2);
    assert_eq!(f.run(&["train", "NoSuchModel"]), 2);
    f.ok(&["train", "TransE"]);
    fs::copy(f.work("models/TransE.ckpt"), f.work("models/RotatE.ckpt")).unwrap();
    assert_eq!(f.run(&["eval", "RotatE"]), 2);
    // the deep model needs a TransD checkpoint
    assert_eq!(f.run(&["train", "deep"]), 2);
    assert_eq!(f.run(&["eval", "deep"]), 2);
}

#[test]
fn deep_eval_emits_rows_per_cutoff() {
    let f = built(150);
    f.ok(&["train", "TransD"]);
    f.ok(&["train", "deep"]);
    f.ok(&["eval", "deep"]);
    let (header, rows) = read_tsv(&f.work("reports/deep_recommendation.tsv"));
    assert_eq!(header, RecReport::COLUMNS);
    let ks: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ks, ["10", "20", "30", "40"]);
    let (header, rows) = read_tsv(&f.work("reports/deep_relations.tsv"));
    assert_eq!(header, RecReport::COLUMNS);
    let ks: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ks, ["1", "3", "5", "7"]);
}

#[test]
fn recommend_and_relations_print_ranked_lists() {
    let f = built(120);
    f.ok(&["train", "TransD"]);
    f.ok(&["train", "deep"]);
    let first = fs::read_to_string(f.work("kg/triples.tsv")).unwrap();
    let fields: Vec<&str> = first.lines().next().unwrap().split('\t').collect();
    let out = f.output(&["recommend", fields[0]]).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "anchor\trank\tapp_id\tscore");
    assert!(lines[1..].iter().all(|l| l.starts_with(&format!("{}\t", fields[0]))));
    assert_eq!(lines.len(), 11);
    assert!(lines[1..].iter().all(|l| !l.contains(&format!("\t{}\t", fields[0]))));

    let out = f.output(&["relations", fields[0], fields[2]]).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "rank\trelation\tscore\tin_graph");
    assert_eq!(lines.len(), 8);

    assert_eq!(f.run(&["recommend", "no.such.app"]), 2);
    assert_eq!(f.run(&["relations", fields[0], fields[0]]), 2);
}

#[test]
fn ablation_drops_exactly_the_group() {
    let f = built(150);
    f.ok(&["ablate", "exp1"]);
    let names = relation_names(&f.work("ablation/exp1/triples.tsv"));
    assert_eq!(names.len(), 8);
    for gone in ["ADSIMILAR", "ECSIMILAR", "IAPSIMILAR", "VSIMILAR"] {
        assert!(!names.contains(gone));
    }
    let (header, rows) = read_tsv(&f.work("reports/ablation_exp1.tsv"));
    assert_eq!(header, ["experiment", "model", "metric", "original", "ablated"]);
    let metrics: Vec<&str> = rows.iter().map(|r| r[2].as_str()).collect();
    assert_eq!(metrics, EvalReport::COLUMNS);
    assert!(rows.iter().all(|r| r[0] == "exp1" && r[1] == "TransE"));

    f.ok(&["ablate", "EXP3"]);
    let names = relation_names(&f.work("ablation/exp3/triples.tsv"));
    assert!(!names.contains("RELSIMILAR") && !names.contains("SSIMILAR"));
    assert_eq!(names.len(), 10);
    for split in ["train", "valid", "test"] {
        let split_names = relation_names(&f.work(&format!("ablation/exp3/{split}.tsv")));
        assert!(split_names.is_subset(&names));
    }

    assert_eq!(f.run(&["ablate", "exp5"]), 2);
}

#[test]
fn bench_reports_one_row_per_model_and_matches_its_sidecar() {
    let f = built(120);
    assert_eq!(f.run(&["bench"]), 2, "no checkpoints yet");
    f.ok(&["train", "TransD"]);
    f.ok(&["train", "deep"]);
    f.ok(&["bench"]);
    let (header, rows) = read_tsv(&f.work("reports/bench.tsv"));
    assert_eq!(header, ["model", "queries", "mean_ms"]);
    assert_eq!(rows.len(), 2);
    let (_, raw) = read_tsv(&f.work("reports/bench_times.tsv"));
    for row in &rows {
        let times: Vec<f64> = raw.iter().filter(|r| r[0] == row[0]).map(|r| r[2].parse().unwrap()).collect();
        assert_eq!(row[2].parse::<f64>().unwrap(), exact_mean(&times));
    }

    fs::write(f.work("kg/test.tsv"), "").unwrap();
    assert_eq!(f.run(&["bench"]), 2);
}
