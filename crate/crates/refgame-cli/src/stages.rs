use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use refgame::analysis::{
    alpha_sweep, histogram_svg, overall_correlation, per_group_correlation, read_records_jsonl,
    read_records_tsv, render_alpha_sweep, render_summary_table, scatter_svg, write_records_tsv,
    AnalysisError, LlmScoreMode, ProvenanceFilter, ScoreRecord,
};
use refgame::corpus::{generate_synthetic, is_metadata_line, load_corpus, Corpus};
use refgame::llm::{
    render_context, ClientConfig, HttpClient, LanguageModel, MockClient, PromptTemplate,
};
use refgame::meaning::{
    evaluate_mf, prompt_matrix, prompt_meaning_with, read_labelled_pairs, rule_matrix,
    rule_meaning, sweep_threshold, Lexicon, MfEvalReport, MfKind,
};
use refgame::rsa::{literal_listener, pragmatic_speaker, Prior, SpeakerConfig};
use refgame::utterance::{ingest_topk, logical_utterances, CostMode, Provenance, UtteranceSpace};
use refgame::world::{AttributeSchema, ReferenceGame};

use crate::manifest::{json_hash, run_timestamp, RunManifest};
use crate::{
    AnalyzeArgs, EvalMfArgs, IngestArgs, ModelArgs, ScoreArgs, SpaceMode, SweepAlphaArgs,
    UtterancesArgs,
};

/// Stdout writes that ignore a closed pipe, so `refgame ... | head` exits
/// cleanly instead of panicking.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

macro_rules! show {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
}

/// A scoring backend plus the identity the manifest records for it.
struct ModelChoice {
    client: Box<dyn LanguageModel>,
    model: String,
    endpoint: String,
    /// True when reruns are byte-identical: mock or cache replay.
    deterministic: bool,
}

fn make_client(args: &ModelArgs) -> Result<ModelChoice> {
    if args.mock {
        return Ok(ModelChoice {
            client: Box::new(MockClient::new(args.seed)),
            model: "mock".to_string(),
            endpoint: "mock".to_string(),
            deterministic: true,
        });
    }
    match (&args.base_url, &args.model) {
        (Some(base_url), Some(model)) => {
            let mut cfg = ClientConfig::new(base_url, model);
            cfg.api_key_env = args.api_key_env.clone();
            cfg.cache_dir = args.cache_dir.clone();
            Ok(ModelChoice {
                client: Box::new(HttpClient::new(&cfg)?),
                model: model.clone(),
                endpoint: base_url.clone(),
                deterministic: false,
            })
        }
        (None, Some(model)) if args.cache_dir.is_some() => {
            let dir = args.cache_dir.clone().expect("checked above");
            Ok(ModelChoice {
                client: Box::new(HttpClient::replay(model, dir)?),
                model: model.clone(),
                endpoint: "replay".to_string(),
                deterministic: true,
            })
        }
        _ => bail!(
            "no model selected: pass --mock, or --base-url with --model for a live \
             endpoint, or --cache-dir with --model to replay recorded responses"
        ),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)
                .with_context(|| format!("creating directory {}", dir.display()))?;
        }
    }
    Ok(())
}

/// `records.tsv` gets its run description at `records.manifest.json`.
fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn write_svg(path: &Path, hash: &str, svg: &str) -> Result<()> {
    fs::write(path, format!("<!-- manifest: {hash} -->\n{svg}"))
        .with_context(|| format!("writing {}", path.display()))
}

fn read_corpus_file(path: &Path) -> Result<Corpus> {
    let file = File::open(path).with_context(|| format!("opening corpus {}", path.display()))?;
    Corpus::read_jsonl(BufReader::new(file))
        .with_context(|| format!("reading corpus {}", path.display()))
}

fn read_spaces_file(path: &Path) -> Result<BTreeMap<String, UtteranceSpace>> {
    let file =
        File::open(path).with_context(|| format!("opening utterance spaces {}", path.display()))?;
    let mut spaces = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if is_metadata_line(&line) {
            continue;
        }
        let space: UtteranceSpace = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: bad utterance-space record", path.display(), i + 1))?;
        if let Some(previous) = spaces.insert(space.game_id.clone(), space) {
            bail!(
                "{}: two utterance spaces for game '{}'",
                path.display(),
                previous.game_id
            );
        }
    }
    Ok(spaces)
}

fn read_records_file(path: &Path) -> Result<Vec<ScoreRecord>> {
    let file = File::open(path).with_context(|| format!("opening records {}", path.display()))?;
    let reader = BufReader::new(file);
    let records = if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
        read_records_jsonl(reader)
    } else {
        read_records_tsv(reader)
    }
    .with_context(|| format!("reading records {}", path.display()))?;
    if records.is_empty() {
        bail!("{} holds no score records", path.display());
    }
    Ok(records)
}

pub fn parse_mf_list(s: &str) -> Result<Vec<MfKind>> {
    let mut kinds = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let kind: MfKind = part.parse().map_err(|e: String| anyhow!(e))?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        bail!("--mf names no meaning function (expected rule, prompt, or rule,prompt)");
    }
    Ok(kinds)
}

pub fn parse_alpha_list(s: &str) -> Result<Vec<f64>> {
    let mut alphas: Vec<f64> = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let alpha: f64 = part
            .parse()
            .with_context(|| format!("bad alpha value '{part}'"))?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            bail!("alpha must be positive and finite, got {alpha}");
        }
        if !alphas.iter().any(|b| b.to_bits() == alpha.to_bits()) {
            alphas.push(alpha);
        }
    }
    if alphas.is_empty() {
        bail!("--alphas names no values");
    }
    Ok(alphas)
}

fn parse_score_mode(s: &str) -> Result<LlmScoreMode> {
    s.parse().map_err(|e: String| anyhow!(e))
}

fn distinct_alphas(records: &[ScoreRecord]) -> Vec<f64> {
    // Positive finite doubles order the same by bits as by value.
    let bits: BTreeSet<u64> = records.iter().map(|r| r.alpha.to_bits()).collect();
    bits.into_iter().map(f64::from_bits).collect()
}

fn model_score(record: &ScoreRecord, mode: LlmScoreMode) -> f64 {
    match mode {
        LlmScoreMode::NormalizedProb => record.llm_prob_norm,
        LlmScoreMode::RawLogprob => record.llm_logprob,
    }
}

pub fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    let (corpus, skipped) = if let Some(dir) = &a.tuna_dir {
        let load = load_corpus(dir, a.skip_bad)
            .with_context(|| format!("loading corpus from {}", dir.display()))?;
        (load.corpus, load.skipped)
    } else {
        let corpus = generate_synthetic(a.seed, &AttributeSchema::furniture(), a.objects, a.games)?;
        (corpus, Vec::new())
    };

    let mut manifest = RunManifest::new("ingest");
    manifest.corpus_hash = corpus.content_hash();
    manifest.created_unix = run_timestamp(true);
    let hash = manifest.hash();

    create_parent(&a.out)?;
    let mut bytes = Vec::new();
    writeln!(bytes, "{}", manifest.jsonl_header())?;
    corpus.write_jsonl(&mut bytes)?;
    fs::write(&a.out, &bytes).with_context(|| format!("writing {}", a.out.display()))?;
    manifest.write_sidecar(&sidecar_path(&a.out))?;

    let stats = corpus.stats();
    let skipped_json: Vec<serde_json::Value> = skipped
        .iter()
        .map(|(path, reason)| {
            serde_json::json!({ "file": path.display().to_string(), "reason": reason })
        })
        .collect();
    let stats_json = serde_json::json!({
        "_manifest": hash,
        "games": stats.games,
        "trials": stats.trials,
        "objects": stats.objects,
        "feature_counts": stats.feature_counts,
        "skipped": skipped_json,
    });
    let stats_path = a.out.with_extension("stats.json");
    fs::write(
        &stats_path,
        serde_json::to_string_pretty(&stats_json)? + "\n",
    )
    .with_context(|| format!("writing {}", stats_path.display()))?;

    say!("games: {}", stats.games);
    say!("trials: {}", stats.trials);
    say!("objects: {}", stats.objects);
    if !skipped.is_empty() {
        say!("skipped files: {}", skipped.len());
        for (path, reason) in &skipped {
            say!("  {}: {reason}", path.display());
        }
    }
    say!("wrote {}", a.out.display());
    Ok(())
}

fn generated_space(
    game: &ReferenceGame,
    client: &dyn LanguageModel,
    template: &PromptTemplate,
    k: usize,
    starts: &[&str],
) -> Result<UtteranceSpace> {
    let context = render_context(game, template)?;
    let generations = client
        .generate_topk(&context, k, starts)
        .with_context(|| format!("generating candidates for game '{}'", game.id))?;
    let triples: Vec<(String, usize, f64)> = generations
        .into_iter()
        .map(|g| (g.text, g.rank, g.total_logprob))
        .collect();
    Ok(ingest_topk(&game.id, &triples))
}

pub fn cmd_utterances(a: &UtterancesArgs) -> Result<()> {
    let corpus = read_corpus_file(&a.corpus)?;
    let needs_model = matches!(a.mode, SpaceMode::Topk | SpaceMode::Both);

    let starts: Vec<String> = a
        .starts
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if needs_model && starts.is_empty() {
        bail!("--starts must name at least one start token");
    }
    let start_refs: Vec<&str> = starts.iter().map(String::as_str).collect();

    let choice = if needs_model {
        Some(make_client(&a.model)?)
    } else {
        None
    };
    let template = match &a.template {
        Some(path) => PromptTemplate::from_file(path)?,
        None => PromptTemplate::topk_default(),
    };

    let mut manifest = RunManifest::new("utterances");
    manifest.corpus_hash = corpus.content_hash();
    if let Some(choice) = &choice {
        manifest.model = choice.model.clone();
        manifest.endpoint = choice.endpoint.clone();
        manifest.k = a.k;
        manifest
            .template_hashes
            .insert("generation".to_string(), template.hash());
    }
    manifest.created_unix = run_timestamp(choice.as_ref().is_none_or(|c| c.deterministic));

    let mut lines = Vec::new();
    let mut logic_count = 0usize;
    let mut topk_count = 0usize;
    for game in corpus.games() {
        let space = match a.mode {
            SpaceMode::Logic => logical_utterances(game),
            SpaceMode::Topk => generated_space(
                game,
                choice.as_ref().expect("model required").client.as_ref(),
                &template,
                a.k,
                &start_refs,
            )?,
            SpaceMode::Both => logical_utterances(game).merge(generated_space(
                game,
                choice.as_ref().expect("model required").client.as_ref(),
                &template,
                a.k,
                &start_refs,
            )?),
        };
        for u in &space.utterances {
            match u.provenance {
                Provenance::Logic { .. } => logic_count += 1,
                Provenance::TopK { .. } => topk_count += 1,
            }
        }
        lines.push(serde_json::to_string(&space)?);
    }

    create_parent(&a.out)?;
    let mut bytes = Vec::new();
    writeln!(bytes, "{}", manifest.jsonl_header())?;
    for line in &lines {
        writeln!(bytes, "{line}")?;
    }
    fs::write(&a.out, &bytes).with_context(|| format!("writing {}", a.out.display()))?;
    manifest.write_sidecar(&sidecar_path(&a.out))?;

    say!("games: {}", corpus.len());
    say!("logic utterances: {logic_count}");
    say!("topk utterances: {topk_count}");
    say!("total: {}", logic_count + topk_count);
    say!("wrote {}", a.out.display());
    Ok(())
}

/// Scores one game: one record per (utterance, meaning function, alpha),
/// all describing the game's target object.
#[allow(clippy::too_many_arguments)]
fn score_game(
    game: &ReferenceGame,
    space: &UtteranceSpace,
    client: &dyn LanguageModel,
    context_template: &PromptTemplate,
    mf_template: Option<&PromptTemplate>,
    lexicon: &Lexicon,
    mf_kinds: &[MfKind],
    alphas: &[f64],
    cost_mode: CostMode,
    paper_faithful: bool,
    records: &mut Vec<ScoreRecord>,
) -> Result<()> {
    if space.utterances.is_empty() {
        bail!("utterance space is empty");
    }
    let context = render_context(game, context_template)?;
    let needs_tokens = cost_mode == CostMode::TokenCount;

    let mut llm_logprobs = Vec::with_capacity(space.utterances.len());
    let mut token_counts = Vec::with_capacity(space.utterances.len());
    for u in &space.utterances {
        let generation_score = if paper_faithful {
            match &u.provenance {
                Provenance::TopK {
                    gen_logprob: Some(lp),
                    ..
                } => Some(*lp),
                _ => None,
            }
        } else {
            None
        };
        let (logprob, tokens) = match generation_score {
            Some(lp) if !needs_tokens => (lp, 0),
            Some(lp) => (lp, client.score_sequence(&context, &u.text)?.token_count()),
            None => {
                let scored = client.score_sequence(&context, &u.text)?;
                (scored.total_logprob, scored.token_count())
            }
        };
        llm_logprobs.push(logprob);
        token_counts.push(tokens);
    }

    // Probabilities over this game's candidate set, via log-sum-exp.
    let max = llm_logprobs
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = llm_logprobs.iter().map(|lp| (lp - max).exp()).sum();
    let llm_probs: Vec<f64> = llm_logprobs
        .iter()
        .map(|lp| (lp - max).exp() / total)
        .collect();

    let costs = space.costs(cost_mode, needs_tokens.then_some(token_counts.as_slice()));
    let texts: Vec<String> = space.texts().map(str::to_string).collect();

    for &mf in mf_kinds {
        let matrix = match mf {
            MfKind::Rule => rule_matrix(game, space, lexicon),
            MfKind::Prompt => prompt_matrix(
                game,
                space,
                client,
                mf_template.expect("prompt template prepared"),
            )?,
        };
        let listener = literal_listener(&matrix, &Prior::Uniform)?;
        for &alpha in alphas {
            let speaker = pragmatic_speaker(&listener, &costs, &SpeakerConfig::new(alpha))?;
            let column = speaker.column(game.target_index);
            for (i, u) in space.utterances.iter().enumerate() {
                records.push(ScoreRecord {
                    game_id: game.id.clone(),
                    object_index: game.target_index,
                    utterance: texts[i].clone(),
                    provenance: u.provenance.label().to_string(),
                    cost: costs[i],
                    llm_logprob: llm_logprobs[i],
                    llm_prob_norm: llm_probs[i],
                    mf_kind: mf.to_string(),
                    alpha,
                    rsa_prob: column[i],
                });
            }
        }
    }
    Ok(())
}

pub fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let corpus = read_corpus_file(&a.corpus)?;
    let spaces = read_spaces_file(&a.utterances)?;
    let mf_kinds = parse_mf_list(&a.mf)?;
    let alphas = parse_alpha_list(&a.alphas)?;
    let cost_mode: CostMode = a.cost_mode.parse().map_err(|e: String| anyhow!(e))?;
    let choice = make_client(&a.model)?;

    let context_template = match &a.context_template {
        Some(path) => PromptTemplate::from_file(path)?,
        None => PromptTemplate::topk_default(),
    };
    let mf_template = if mf_kinds.contains(&MfKind::Prompt) {
        Some(match &a.mf_template {
            Some(path) => PromptTemplate::from_file(path)?,
            None => PromptTemplate::mf_default(a.shots)?,
        })
    } else {
        None
    };
    let lexicon = Lexicon::furniture_default();

    let mut manifest = RunManifest::new("score");
    manifest.corpus_hash = corpus.content_hash();
    if mf_kinds.contains(&MfKind::Rule) {
        manifest.lexicon_hash = json_hash(&lexicon);
    }
    manifest
        .template_hashes
        .insert("scoring-context".to_string(), context_template.hash());
    if let Some(template) = &mf_template {
        manifest
            .template_hashes
            .insert("meaning-prompt".to_string(), template.hash());
    }
    manifest.model = choice.model.clone();
    manifest.endpoint = choice.endpoint.clone();
    manifest.alphas = alphas.clone();
    manifest.cost_mode = cost_mode.to_string();
    manifest.created_unix = run_timestamp(choice.deterministic);
    let hash = manifest.hash();

    let mut records = Vec::new();
    for game in corpus.games() {
        let space = spaces.get(&game.id).ok_or_else(|| {
            anyhow!(
                "{} has no utterance space for game '{}'",
                a.utterances.display(),
                game.id
            )
        })?;
        score_game(
            game,
            space,
            choice.client.as_ref(),
            &context_template,
            mf_template.as_ref(),
            &lexicon,
            &mf_kinds,
            &alphas,
            cost_mode,
            a.paper_faithful,
            &mut records,
        )
        .with_context(|| format!("scoring game '{}'", game.id))?;
    }

    create_parent(&a.out)?;
    let mut bytes = Vec::new();
    write_records_tsv(&records, &mut bytes, Some(&hash))?;
    fs::write(&a.out, &bytes).with_context(|| format!("writing {}", a.out.display()))?;
    manifest.write_sidecar(&sidecar_path(&a.out))?;

    say!("games: {}", corpus.len());
    say!("records: {}", records.len());
    say!("wrote {}", a.out.display());
    Ok(())
}

fn write_sweep(
    records: &[ScoreRecord],
    mode: LlmScoreMode,
    out_dir: &Path,
    hash: &str,
) -> Result<String> {
    let alphas = distinct_alphas(records);
    let rows = alpha_sweep(records, &alphas, mode);
    let table = render_alpha_sweep(&rows);
    fs::write(
        out_dir.join("sweep.txt"),
        format!("# manifest: {hash}\n{table}"),
    )?;
    let json = serde_json::json!({ "_manifest": hash, "rows": rows });
    fs::write(
        out_dir.join("sweep.json"),
        serde_json::to_string_pretty(&json)? + "\n",
    )?;
    Ok(table)
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    let records = read_records_file(&a.records)?;
    let mode = parse_score_mode(&a.llm_score_mode)?;

    let mut manifest = RunManifest::new("analyze");
    manifest.alphas = distinct_alphas(&records);
    manifest.llm_score_mode = mode.to_string();
    manifest.created_unix = run_timestamp(true);
    let hash = manifest.hash();

    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    manifest.write_sidecar(&a.out_dir.join("manifest.json"))?;

    let mf_kinds: Vec<MfKind> = [MfKind::Rule, MfKind::Prompt]
        .into_iter()
        .filter(|mf| {
            let label = mf.to_string();
            records.iter().any(|r| r.mf_kind == label)
        })
        .collect();
    if mf_kinds.is_empty() {
        bail!(
            "no rule or prompt meaning-function rows in {}",
            a.records.display()
        );
    }

    let provenances = [
        ProvenanceFilter::Topk,
        ProvenanceFilter::Logic,
        ProvenanceFilter::All,
    ];
    let mut per_group = Vec::new();
    let mut overall = Vec::new();
    for &mf in &mf_kinds {
        for &prov in &provenances {
            match per_group_correlation(&records, mf, a.alpha, prov, mode) {
                Ok(report) => per_group.push(report),
                Err(AnalysisError::EmptyFilter { .. }) | Err(AnalysisError::AllGroupsSkipped) => {
                    eprintln!(
                        "note: no usable groups for {mf} x {prov} at alpha {}",
                        a.alpha
                    );
                }
                Err(e) => return Err(e.into()),
            }
            match overall_correlation(&records, mf, a.alpha, prov, mode) {
                Ok(report) => overall.push(report),
                Err(AnalysisError::EmptyFilter { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    if per_group.is_empty() {
        bail!(
            "no (meaning function, source) slice at alpha {} had a usable group",
            a.alpha
        );
    }

    let table = render_summary_table(&per_group);
    fs::write(
        a.out_dir.join("summary.txt"),
        format!(
            "# manifest: {hash}\n# alpha: {}  llm-score-mode: {mode}\n{table}",
            a.alpha
        ),
    )?;

    let report = serde_json::json!({
        "_manifest": hash,
        "alpha": a.alpha,
        "llm_score_mode": mode.to_string(),
        "overall": overall,
        "per_group": per_group,
    });
    fs::write(
        a.out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;

    for &mf in &mf_kinds {
        let label = mf.to_string();
        let points: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| r.mf_kind == label && (r.alpha - a.alpha).abs() < 1e-12)
            .map(|r| (model_score(r, mode), r.rsa_prob))
            .collect();
        if !points.is_empty() {
            let svg = scatter_svg(
                &points,
                &format!("llm score ({mode})"),
                "speaker probability",
                &format!("{mf} meaning function, alpha {}", a.alpha),
            );
            write_svg(&a.out_dir.join(format!("scatter_{mf}.svg")), &hash, &svg)?;
        }
        if let Some(report) = per_group
            .iter()
            .find(|r| r.mf_kind == mf && r.provenance == ProvenanceFilter::All)
        {
            let pcc = histogram_svg(
                &report.pcc_histogram,
                -1.0,
                0.05,
                "per-group PCC",
                &format!("{mf} per-group PCC, alpha {}", a.alpha),
            );
            write_svg(&a.out_dir.join(format!("pcc_hist_{mf}.svg")), &hash, &pcc)?;
            let srcc = histogram_svg(
                &report.srcc_histogram,
                -1.0,
                0.05,
                "per-group SRCC",
                &format!("{mf} per-group SRCC, alpha {}", a.alpha),
            );
            write_svg(&a.out_dir.join(format!("srcc_hist_{mf}.svg")), &hash, &srcc)?;
        }
    }

    if a.sweep_alpha {
        write_sweep(&records, mode, &a.out_dir, &hash)?;
    }

    show!("{table}");
    say!("reports in {}", a.out_dir.display());
    Ok(())
}

pub fn cmd_sweep_alpha(a: &SweepAlphaArgs) -> Result<()> {
    let records = read_records_file(&a.records)?;
    let mode = parse_score_mode(&a.llm_score_mode)?;

    let mut manifest = RunManifest::new("sweep-alpha");
    manifest.alphas = distinct_alphas(&records);
    manifest.llm_score_mode = mode.to_string();
    manifest.created_unix = run_timestamp(true);
    let hash = manifest.hash();

    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    manifest.write_sidecar(&a.out_dir.join("manifest.json"))?;
    let table = write_sweep(&records, mode, &a.out_dir, &hash)?;

    show!("{table}");
    say!("reports in {}", a.out_dir.display());
    Ok(())
}

fn fmt_ratio(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.3}"),
        None => "n/a".to_string(),
    }
}

fn render_eval_table(rows: &[(String, MfEvalReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8}  {:>9}  {:>8}  {:>9}  {:>6}  {:>5}  {:>5}  {:>5}  {:>5}\n",
        "mf", "threshold", "accuracy", "precision", "recall", "tp", "fp", "tn", "fn"
    ));
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<8}  {:>9}  {:>8.3}  {:>9}  {:>6}  {:>5}  {:>5}  {:>5}  {:>5}\n",
            name,
            fmt_ratio(r.threshold),
            r.accuracy,
            fmt_ratio(r.precision),
            fmt_ratio(r.recall),
            r.true_positives,
            r.false_positives,
            r.true_negatives,
            r.false_negatives,
        ));
    }
    out
}

pub fn cmd_eval_mf(a: &EvalMfArgs) -> Result<()> {
    if !a.labels.exists() {
        bail!("label file not found: {}", a.labels.display());
    }
    let file = File::open(&a.labels)
        .with_context(|| format!("opening label file {}", a.labels.display()))?;
    let pairs = read_labelled_pairs(BufReader::new(file))
        .with_context(|| format!("reading label file {}", a.labels.display()))?;
    if pairs.is_empty() {
        bail!("{}: no labelled pairs", a.labels.display());
    }
    let truth: Vec<u8> = pairs.iter().map(|p| p.label).collect();

    let mf_kinds = parse_mf_list(&a.mf)?;
    let lexicon = Lexicon::furniture_default();
    let needs_model = mf_kinds.contains(&MfKind::Prompt);
    let choice = if needs_model {
        Some(make_client(&a.model)?)
    } else {
        None
    };
    let template = if needs_model {
        Some(match &a.template {
            Some(path) => PromptTemplate::from_file(path)?,
            None => PromptTemplate::mf_default(a.shots)?,
        })
    } else {
        None
    };

    let mut manifest = RunManifest::new("eval-mf");
    if mf_kinds.contains(&MfKind::Rule) {
        manifest.lexicon_hash = json_hash(&lexicon);
    }
    if let Some(template) = &template {
        manifest
            .template_hashes
            .insert("meaning-prompt".to_string(), template.hash());
    }
    if let Some(choice) = &choice {
        manifest.model = choice.model.clone();
        manifest.endpoint = choice.endpoint.clone();
    }
    manifest.created_unix = run_timestamp(choice.as_ref().is_none_or(|c| c.deterministic));
    let hash = manifest.hash();

    let mut rows: Vec<(String, MfEvalReport)> = Vec::new();
    for &mf in &mf_kinds {
        match mf {
            MfKind::Rule => {
                let predicted: Vec<u8> = pairs
                    .iter()
                    .map(|p| u8::from(rule_meaning(&p.utterance, &p.object, &lexicon)))
                    .collect();
                rows.push(("rule".to_string(), evaluate_mf(&predicted, &truth)?));
            }
            MfKind::Prompt => {
                let client = choice.as_ref().expect("model required").client.as_ref();
                let template = template.as_ref().expect("template prepared");
                let mut scores = Vec::with_capacity(pairs.len());
                for p in &pairs {
                    scores.push(prompt_meaning_with(
                        &p.utterance,
                        &p.object,
                        client,
                        template,
                    )?);
                }
                let (_, report) = sweep_threshold(&scores, &truth)?;
                rows.push(("prompt".to_string(), report));
            }
        }
    }

    let table = render_eval_table(&rows);
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    manifest.write_sidecar(&a.out_dir.join("manifest.json"))?;
    fs::write(
        a.out_dir.join("eval.txt"),
        format!("# manifest: {hash}\n# pairs: {}\n{table}", pairs.len()),
    )?;
    let reports: Vec<serde_json::Value> = rows
        .iter()
        .map(|(mf, report)| serde_json::json!({ "mf": mf, "report": report }))
        .collect();
    let json = serde_json::json!({
        "_manifest": hash,
        "pairs": pairs.len(),
        "reports": reports,
    });
    fs::write(
        a.out_dir.join("eval.json"),
        serde_json::to_string_pretty(&json)? + "\n",
    )?;

    show!("{table}");
    say!("reports in {}", a.out_dir.display());
    Ok(())
}
