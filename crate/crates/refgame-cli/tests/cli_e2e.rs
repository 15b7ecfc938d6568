//! Black-box checks of the `refgame` binary: each stage's file contract,
//! determinism, manifest plumbing, and error reporting.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use refgame::analysis::{read_records_tsv, ScoreRecord};
use refgame::corpus::Corpus;
use refgame::meaning::{rule_matrix, Lexicon, MfKind};
use refgame::rsa::{literal_listener, pragmatic_speaker, Prior, SpeakerConfig};
use refgame::utterance::{CostMode, UtteranceSpace};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_refgame"))
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../refgame/fixtures")
        .join(rel)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout:\n{}\nstderr:\n{}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("stdout is utf-8")
}

fn run_fail(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        !out.status.success(),
        "command {:?} unexpectedly succeeded\nstdout:\n{}",
        args,
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap())
        .unwrap_or_else(|e| panic!("{} is not JSON: {e}", path.display()))
}

/// Runs ingest + utterances (+ optionally score) into `dir` with the mock
/// model and returns the records path.
fn pipeline_to_records(dir: &Path, score_args: &[&str]) -> PathBuf {
    let corpus = dir.join("corpus.jsonl");
    let spaces = dir.join("spaces.jsonl");
    let records = dir.join("records.tsv");
    run_ok(&[
        "ingest",
        "--synthetic",
        "--seed",
        "1",
        "--games",
        "4",
        "--out",
        s(&corpus),
    ]);
    run_ok(&[
        "utterances",
        "--corpus",
        s(&corpus),
        "--mode",
        "both",
        "--mock",
        "--out",
        s(&spaces),
    ]);
    let mut args = vec![
        "score",
        "--corpus",
        s(&corpus),
        "--utterances",
        s(&spaces),
        "--mock",
        "--out",
        s(&records),
    ];
    args.extend_from_slice(score_args);
    run_ok(&args);
    records
}

fn load_records(path: &Path) -> Vec<ScoreRecord> {
    read_records_tsv(BufReader::new(File::open(path).unwrap())).unwrap()
}

#[test]
fn ingest_expands_every_trial_into_per_target_games() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus.jsonl");
    let stdout = run_ok(&[
        "ingest",
        "--tuna-dir",
        s(&fixture("tuna/good")),
        "--out",
        s(&out),
    ]);
    assert!(
        stdout.contains("games: 21"),
        "3 trials x 7 objects: {stdout}"
    );
    assert!(stdout.contains("trials: 3"), "{stdout}");

    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("{\"_manifest\":\""));
    let corpus = Corpus::read_jsonl(BufReader::new(File::open(&out).unwrap())).unwrap();
    assert_eq!(corpus.len(), 21);

    let sidecar = read_json(&dir.path().join("corpus.manifest.json"));
    let hash = sidecar["hash"].as_str().unwrap();
    assert!(text.lines().next().unwrap().contains(hash));
    assert_eq!(sidecar["manifest"]["corpus_hash"], corpus.content_hash());

    let stats = read_json(&dir.path().join("corpus.stats.json"));
    assert_eq!(stats["_manifest"], hash);
    assert_eq!(stats["games"], 21);
    assert_eq!(stats["objects"], 21 * 7);
}

#[test]
fn ingest_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for out in [&a, &b] {
        run_ok(&[
            "ingest",
            "--synthetic",
            "--seed",
            "7",
            "--games",
            "5",
            "--out",
            s(out),
        ]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn ingest_skip_bad_collects_failures_instead_of_aborting() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus.jsonl");
    let mixed = fixture("tuna/mixed");

    let stderr = run_fail(&["ingest", "--tuna-dir", s(&mixed), "--out", s(&out)]);
    assert!(
        stderr.contains("bad.xml") || stderr.contains("empty.xml"),
        "{stderr}"
    );

    let stdout = run_ok(&[
        "ingest",
        "--tuna-dir",
        s(&mixed),
        "--skip-bad",
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("games: 3"), "{stdout}");
    assert!(stdout.contains("skipped files: 2"), "{stdout}");
    let stats = read_json(&dir.path().join("corpus.stats.json"));
    assert_eq!(stats["skipped"].as_array().unwrap().len(), 2);
}

#[test]
fn ingest_requires_a_source() {
    let stderr = run_fail(&["ingest", "--out", "/tmp/never.jsonl"]);
    assert!(
        stderr.contains("--tuna-dir") && stderr.contains("--synthetic"),
        "{stderr}"
    );
}

#[test]
fn utterances_counts_by_provenance_and_keeps_texts_unique() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let spaces = dir.path().join("spaces.jsonl");
    run_ok(&[
        "ingest",
        "--synthetic",
        "--seed",
        "1",
        "--games",
        "4",
        "--out",
        s(&corpus),
    ]);
    let stdout = run_ok(&[
        "utterances",
        "--corpus",
        s(&corpus),
        "--mode",
        "both",
        "--mock",
        "--k",
        "3",
        "--out",
        s(&spaces),
    ]);

    let mut logic = 0usize;
    let mut topk = 0usize;
    let mut games = 0usize;
    for line in fs::read_to_string(&spaces).unwrap().lines() {
        if refgame::corpus::is_metadata_line(line) {
            continue;
        }
        games += 1;
        let space: UtteranceSpace = serde_json::from_str(line).unwrap();
        let texts: std::collections::BTreeSet<&str> = space.texts().collect();
        assert_eq!(
            texts.len(),
            space.utterances.len(),
            "duplicate texts survived the merge"
        );
        let game_topk = space
            .utterances
            .iter()
            .filter(|u| u.provenance.label() == "topk")
            .count();
        assert!(game_topk <= 6, "k=3 with two starts caps generations at 6");
        topk += game_topk;
        logic += space.utterances.len() - game_topk;
    }
    assert_eq!(games, 4);
    assert!(
        stdout.contains(&format!("logic utterances: {logic}")),
        "{stdout}"
    );
    assert!(
        stdout.contains(&format!("topk utterances: {topk}")),
        "{stdout}"
    );
}

#[test]
fn utterances_topk_needs_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    run_ok(&[
        "ingest",
        "--synthetic",
        "--seed",
        "1",
        "--games",
        "2",
        "--out",
        s(&corpus),
    ]);
    let stderr = run_fail(&[
        "utterances",
        "--corpus",
        s(&corpus),
        "--mode",
        "topk",
        "--out",
        s(&dir.path().join("spaces.jsonl")),
    ]);
    assert!(stderr.contains("no model selected"), "{stderr}");
}

#[test]
fn paper_faithful_changes_only_generation_row_scores() {
    let dir = tempfile::tempdir().unwrap();
    let rescored = pipeline_to_records(dir.path(), &["--mf", "rule", "--alphas", "1.0"]);
    let reused = dir.path().join("reused.tsv");
    run_ok(&[
        "score",
        "--corpus",
        s(&dir.path().join("corpus.jsonl")),
        "--utterances",
        s(&dir.path().join("spaces.jsonl")),
        "--mock",
        "--mf",
        "rule",
        "--alphas",
        "1.0",
        "--paper-faithful",
        "--out",
        s(&reused),
    ]);

    let a = load_records(&rescored);
    let b = load_records(&reused);
    assert_eq!(a.len(), b.len());
    let mut topk_diffs = 0usize;
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.game_id, y.game_id);
        assert_eq!(x.utterance, y.utterance);
        assert_eq!(x.cost, y.cost);
        assert_eq!(
            x.rsa_prob, y.rsa_prob,
            "speaker tables ignore the scoring source"
        );
        match x.provenance.as_str() {
            "logic" => assert_eq!(x.llm_logprob, y.llm_logprob),
            "topk" => {
                if x.llm_logprob != y.llm_logprob {
                    topk_diffs += 1;
                }
            }
            other => panic!("unexpected provenance {other}"),
        }
    }
    assert!(topk_diffs > 0, "reusing generation scores changed nothing");
}

#[test]
fn record_probabilities_sum_to_one_per_game_slice() {
    let dir = tempfile::tempdir().unwrap();
    let records = pipeline_to_records(dir.path(), &[]);
    let rows = load_records(&records);

    let mut groups: std::collections::BTreeMap<(String, String, u64), Vec<&ScoreRecord>> =
        std::collections::BTreeMap::new();
    for r in &rows {
        groups
            .entry((r.game_id.clone(), r.mf_kind.clone(), r.alpha.to_bits()))
            .or_default()
            .push(r);
    }
    assert_eq!(groups.len(), 4 * 2 * 6, "4 games x 2 MFs x 6 alphas");
    for ((game, mf, _), slice) in &groups {
        let llm_total: f64 = slice.iter().map(|r| r.llm_prob_norm).sum();
        let rsa_total: f64 = slice.iter().map(|r| r.rsa_prob).sum();
        assert!(
            (llm_total - 1.0).abs() < 1e-9,
            "game {game} mf {mf}: llm probabilities sum to {llm_total}"
        );
        assert!(
            (rsa_total - 1.0).abs() < 1e-9,
            "game {game} mf {mf}: speaker column sums to {rsa_total}"
        );
    }
}

#[test]
fn record_speaker_probabilities_match_the_library_tables_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let records = pipeline_to_records(dir.path(), &["--mf", "rule", "--alphas", "1.0"]);
    let rows = load_records(&records);

    let corpus = Corpus::read_jsonl(BufReader::new(
        File::open(dir.path().join("corpus.jsonl")).unwrap(),
    ))
    .unwrap();
    let game = &corpus.games()[0];
    let space: UtteranceSpace = fs::read_to_string(dir.path().join("spaces.jsonl"))
        .unwrap()
        .lines()
        .filter(|l| !refgame::corpus::is_metadata_line(l))
        .map(|l| serde_json::from_str(l).unwrap())
        .find(|s: &UtteranceSpace| s.game_id == game.id)
        .unwrap();

    let matrix = rule_matrix(game, &space, &Lexicon::furniture_default());
    assert_eq!(matrix.mf_kind, MfKind::Rule);
    let listener = literal_listener(&matrix, &Prior::Uniform).unwrap();
    let costs = space.costs(CostMode::WordCount, None);
    let speaker = pragmatic_speaker(&listener, &costs, &SpeakerConfig::new(1.0)).unwrap();
    let column = speaker.column(game.target_index);

    let game_rows: Vec<&ScoreRecord> = rows.iter().filter(|r| r.game_id == game.id).collect();
    assert_eq!(game_rows.len(), column.len());
    for (i, r) in game_rows.iter().enumerate() {
        assert_eq!(r.object_index, game.target_index);
        assert_eq!(
            r.rsa_prob, column[i],
            "row {i} ({}) drifted from the speaker table",
            r.utterance
        );
    }
}

#[test]
fn score_reports_a_game_with_no_utterance_space() {
    let dir = tempfile::tempdir().unwrap();
    let small = dir.path().join("small.jsonl");
    let big = dir.path().join("big.jsonl");
    let spaces = dir.path().join("spaces.jsonl");
    run_ok(&[
        "ingest",
        "--synthetic",
        "--seed",
        "1",
        "--games",
        "2",
        "--out",
        s(&small),
    ]);
    run_ok(&[
        "ingest",
        "--synthetic",
        "--seed",
        "1",
        "--games",
        "3",
        "--out",
        s(&big),
    ]);
    run_ok(&[
        "utterances",
        "--corpus",
        s(&small),
        "--mode",
        "logic",
        "--out",
        s(&spaces),
    ]);
    let stderr = run_fail(&[
        "score",
        "--corpus",
        s(&big),
        "--utterances",
        s(&spaces),
        "--mock",
        "--out",
        s(&dir.path().join("records.tsv")),
    ]);
    assert!(stderr.contains("no utterance space for game"), "{stderr}");
}

#[test]
fn score_rejects_bad_parameter_values() {
    let stderr = run_fail(&[
        "score",
        "--corpus",
        "/tmp/x.jsonl",
        "--utterances",
        "/tmp/y.jsonl",
        "--mock",
        "--alphas",
        "0.0",
        "--out",
        "/tmp/z.tsv",
    ]);
    // The corpus is opened first, so a missing file may win; accept either
    // complaint but require a clear one.
    assert!(
        stderr.contains("alpha must be positive") || stderr.contains("opening corpus"),
        "{stderr}"
    );

    let dir = tempfile::tempdir().unwrap();
    let records = pipeline_to_records(dir.path(), &["--mf", "rule", "--alphas", "1.0"]);
    let stderr = run_fail(&[
        "analyze",
        "--records",
        s(&records),
        "--llm-score-mode",
        "sideways",
        "--out-dir",
        s(&dir.path().join("reports")),
    ]);
    assert!(stderr.contains("unknown llm score mode"), "{stderr}");
}

#[test]
fn analyze_on_rule_only_records_reports_rule_slices_only() {
    let dir = tempfile::tempdir().unwrap();
    let records = pipeline_to_records(dir.path(), &["--mf", "rule"]);
    let reports = dir.path().join("reports");
    let stdout = run_ok(&[
        "analyze",
        "--records",
        s(&records),
        "--out-dir",
        s(&reports),
    ]);
    assert!(stdout.contains("rule"), "{stdout}");
    assert!(!stdout.contains("prompt"), "{stdout}");

    let report = read_json(&reports.join("report.json"));
    for entry in report["per_group"].as_array().unwrap() {
        assert_eq!(entry["mf_kind"], "rule");
    }
}

#[test]
fn every_output_embeds_its_run_manifest_hash() {
    let dir = tempfile::tempdir().unwrap();
    let records = pipeline_to_records(dir.path(), &[]);
    let reports = dir.path().join("reports");
    run_ok(&[
        "analyze",
        "--records",
        s(&records),
        "--sweep-alpha",
        "--out-dir",
        s(&reports),
    ]);

    for stem in ["corpus", "spaces", "records"] {
        let data = match stem {
            "records" => dir.path().join("records.tsv"),
            _ => dir.path().join(format!("{stem}.jsonl")),
        };
        let sidecar = read_json(&dir.path().join(format!("{stem}.manifest.json")));
        let hash = sidecar["hash"].as_str().unwrap();
        let first = fs::read_to_string(&data)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert!(
            first.contains(hash),
            "{} does not carry {hash}",
            data.display()
        );
    }

    let sidecar = read_json(&reports.join("manifest.json"));
    let hash = sidecar["hash"].as_str().unwrap();
    for name in ["summary.txt", "sweep.txt"] {
        let first = fs::read_to_string(reports.join(name)).unwrap();
        assert!(first.lines().next().unwrap().contains(hash), "{name}");
    }
    for name in ["report.json", "sweep.json"] {
        assert_eq!(read_json(&reports.join(name))["_manifest"], hash, "{name}");
    }
    for entry in fs::read_dir(&reports).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) == Some("svg") {
            let first = fs::read_to_string(&path).unwrap();
            assert!(
                first.lines().next().unwrap().contains(hash),
                "{} does not carry the manifest hash",
                path.display()
            );
        }
    }
}

#[test]
fn score_manifest_traces_the_corpus_and_config() {
    let dir = tempfile::tempdir().unwrap();
    pipeline_to_records(dir.path(), &["--cost-mode", "feature-count"]);

    let corpus = Corpus::read_jsonl(BufReader::new(
        File::open(dir.path().join("corpus.jsonl")).unwrap(),
    ))
    .unwrap();
    let manifest = &read_json(&dir.path().join("records.manifest.json"))["manifest"];
    assert_eq!(manifest["corpus_hash"], corpus.content_hash());
    assert_eq!(manifest["model"], "mock");
    assert_eq!(manifest["endpoint"], "mock");
    assert_eq!(manifest["cost_mode"], "feature-count");
    assert_eq!(
        manifest["created_unix"], 0,
        "mock runs never read the clock"
    );
    assert_eq!(manifest["alphas"].as_array().unwrap().len(), 6);
    assert!(manifest["template_hashes"]["scoring-context"].is_string());
    assert!(manifest["template_hashes"]["meaning-prompt"].is_string());
    assert!(manifest["lexicon_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn eval_mf_prompt_sweeps_a_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("eval");
    let stdout = run_ok(&[
        "eval-mf",
        "--labels",
        s(&fixture("mf/logic_labels.jsonl")),
        "--mf",
        "rule,prompt",
        "--mock",
        "--out-dir",
        s(&out_dir),
    ]);
    assert!(stdout.contains("rule"), "{stdout}");
    assert!(stdout.contains("prompt"), "{stdout}");

    let eval = read_json(&out_dir.join("eval.json"));
    let reports = eval["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert!(
        reports[0]["report"]["threshold"].is_null(),
        "rule MF has no threshold"
    );
    assert!(
        reports[1]["report"]["threshold"].as_f64().is_some(),
        "prompt MF reports its best threshold"
    );
}

#[test]
fn eval_mf_missing_label_file_names_the_path() {
    let stderr = run_fail(&[
        "eval-mf",
        "--labels",
        "/tmp/definitely-absent-labels.jsonl",
        "--out-dir",
        "/tmp/never",
    ]);
    assert!(
        stderr.contains("label file not found: /tmp/definitely-absent-labels.jsonl"),
        "{stderr}"
    );
}

#[test]
fn sweep_alpha_subcommand_writes_the_same_tables_as_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let records = pipeline_to_records(dir.path(), &[]);
    let via_analyze = dir.path().join("a");
    let standalone = dir.path().join("b");
    run_ok(&[
        "analyze",
        "--records",
        s(&records),
        "--sweep-alpha",
        "--out-dir",
        s(&via_analyze),
    ]);
    run_ok(&[
        "sweep-alpha",
        "--records",
        s(&records),
        "--out-dir",
        s(&standalone),
    ]);

    // Same rows; only the embedded manifest hash (a different command) may
    // differ.
    let strip = |path: &Path| -> Vec<String> {
        fs::read_to_string(path)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("# manifest:"))
            .map(str::to_string)
            .collect()
    };
    assert_eq!(
        strip(&via_analyze.join("sweep.txt")),
        strip(&standalone.join("sweep.txt"))
    );
}
