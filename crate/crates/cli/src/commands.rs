//! The six pipeline commands. Each consumes a resolved [`Experiment`] and
//! writes exactly one artifact; `e2e` chains them all.
//!
//! Inputs are validated before any output file is touched. Single-file
//! artifacts (index, run, report) are written to a temporary sibling and
//! renamed into place, so a failed command never leaves a partial artifact
//! behind. The embedding store and the generation cache are append-only by
//! design — interrupting them leaves a valid prefix that the next
//! invocation resumes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hyde_core::encoder::embed_texts;
use hyde_core::eval::{
    compute_metric, reports_json_string, write_reports_tsv, MetricReport, QrelsTable, RankedRun,
};
use hyde_core::generator::{
    builtin_template, builtin_templates, cache_key_for, generate_hypotheticals, GenerationCache,
    InstructionTemplate,
};
use hyde_core::index::FlatIndex;
use hyde_core::ingest::{embed_corpus, load_queries, StoreReader};
use hyde_core::pipeline::hyde_search;
use hyde_core::types::QueryRecord;
use hyde_core::{HydeError, Result, StageExt};

use crate::config::{Experiment, SearchMode};

/// Print a status line, exiting quietly if stdout has been closed (e.g. the
/// output is piped into `head`); a panic would be noise, not information.
macro_rules! status {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let mut out = std::io::stdout();
        if writeln!(out, $($arg)*).is_err() {
            std::process::exit(0);
        }
    }};
}

/// Encode the corpus into the embedding store, resuming any previous run.
pub fn cmd_embed(exp: &Experiment) -> Result<()> {
    exp.encoder.validate().stage("embed")?;
    let corpus = exp.require_existing(&exp.paths.corpus, "corpus")?;
    let store = exp.require(&exp.paths.store, "store")?;
    ensure_parent(store)?;

    let stats = embed_corpus(corpus, &exp.encoder, store, exp.field).stage("embed")?;
    status!(
        "embed: {} documents ({} new, {} already stored) -> {}",
        stats.total_docs,
        stats.newly_embedded,
        stats.skipped_existing,
        store.display()
    );
    Ok(())
}

/// Build the flat inner-product index from the embedding store.
pub fn cmd_index(exp: &Experiment) -> Result<()> {
    let store = exp.require_existing(&exp.paths.store, "store")?;
    let index_path = exp.require(&exp.paths.index, "index")?;

    let reader = StoreReader::open(store).stage("index")?;
    let entries: Vec<_> = reader.collect::<Result<_>>().stage("index")?;
    let index = FlatIndex::build(entries).stage("index")?;

    write_atomic(index_path, |tmp| index.save(tmp)).stage("index")?;
    status!(
        "index: {} vectors, dim {} -> {}",
        index.len(),
        index.dim(),
        index_path.display()
    );
    Ok(())
}

/// Pre-generate hypothetical documents for every query into the cache.
pub fn cmd_generate(exp: &Experiment) -> Result<()> {
    exp.generator.validate().stage("generate")?;
    let template = resolve_template(exp)?;
    let queries_path = exp.require_existing(&exp.paths.queries, "queries")?;
    let cache_path = exp.require(&exp.paths.cache, "cache")?;
    ensure_parent(cache_path)?;

    let queries = load_nonempty_queries(queries_path)?;
    let mut cache = GenerationCache::open(cache_path).stage("generate")?;
    let mut fresh = 0usize;
    let mut warm = 0usize;
    for query in &queries {
        let key = cache_key_for(&exp.generator, &template, query);
        if cache.lookup(&key).is_some() {
            warm += 1;
            continue;
        }
        let set = generate_hypotheticals(&exp.generator, &template, query).stage("generate")?;
        cache.store(&key, &set).stage("generate")?;
        fresh += 1;
    }
    status!(
        "generate: {} queries ({fresh} new, {warm} cached) -> {}",
        queries.len(),
        cache_path.display()
    );
    Ok(())
}

/// Retrieve top-k documents for every query and write a TREC run file.
pub fn cmd_search(exp: &Experiment) -> Result<()> {
    exp.encoder.validate().stage("search")?;
    let queries_path = exp.require_existing(&exp.paths.queries, "queries")?;
    let index_path = exp.require_existing(&exp.paths.index, "index")?;
    let run_path = exp.require(&exp.paths.run, "run")?;
    // Hyde-mode inputs are validated before the index is loaded so a config
    // mistake fails fast.
    let template = match exp.mode {
        SearchMode::Hyde => {
            exp.generator.validate().stage("search")?;
            Some(resolve_template(exp)?)
        }
        SearchMode::Baseline => None,
    };
    ensure_parent(run_path)?;

    let queries = load_nonempty_queries(queries_path)?;
    let index = FlatIndex::load(index_path).stage("search")?;
    let tag = exp.tag.clone().unwrap_or_else(|| default_tag(exp));
    let mut run = RankedRun::new(tag).stage("search")?;

    match exp.mode {
        SearchMode::Baseline => {
            // One batched encode, then a fan-out search. A single-vector
            // mean is an exact f32 round-trip, so this produces bit-identical
            // scores to the per-query estimator path used in hyde mode.
            let texts: Vec<String> = queries.iter().map(|q| q.text.clone()).collect();
            let vectors = embed_texts(&exp.encoder, &texts).stage("encode")?;
            let rankings = index.search_batch(&vectors, exp.k).stage("search")?;
            for (query, hits) in queries.iter().zip(rankings) {
                run.set_ranking(&query.query_id, hits, exp.k)
                    .stage("search")?;
            }
        }
        SearchMode::Hyde => {
            let template = template.expect("resolved above");
            let mut cache = match &exp.paths.cache {
                Some(path) => {
                    ensure_parent(path)?;
                    Some(GenerationCache::open(path).stage("generate")?)
                }
                None => None,
            };
            for query in &queries {
                let hits = hyde_search(
                    query,
                    &template,
                    &exp.generator,
                    &exp.encoder,
                    &index,
                    exp.k,
                    exp.include_query,
                    cache.as_mut(),
                )?;
                run.set_ranking(&query.query_id, hits, exp.k)
                    .stage("search")?;
            }
        }
    }

    write_atomic(run_path, |tmp| run.write(tmp)).stage("search")?;
    status!(
        "search[{}]: {} queries, k={}, tag {} -> {}",
        exp.mode,
        queries.len(),
        exp.k,
        run.tag(),
        run_path.display()
    );
    Ok(())
}

/// Score a run file against qrels and write the metric report.
pub fn cmd_eval(exp: &Experiment) -> Result<()> {
    let run_path = exp.require_existing(&exp.paths.run, "run")?;
    let qrels_path = exp.require_existing(&exp.paths.qrels, "qrels")?;

    let run = RankedRun::parse(run_path, exp.k).stage("eval")?;
    let qrels = QrelsTable::parse(qrels_path).stage("eval")?;
    let reports: Vec<MetricReport> = exp
        .metrics
        .iter()
        .map(|metric| compute_metric(&run, &qrels, *metric, exp.binarize_at, exp.k))
        .collect::<Result<_>>()
        .stage("eval")?;

    for report in &reports {
        status!(
            "eval: {}\tall\t{:.4}\t({} queries, {} run-only)",
            report.metric,
            report.aggregate,
            report.evaluated,
            report.run_only
        );
    }
    if let Some(report_path) = &exp.paths.report {
        ensure_parent(report_path)?;
        let is_json = report_path.extension().is_some_and(|e| e == "json");
        write_atomic(report_path, |tmp| {
            let mut file = fs::File::create(tmp)?;
            if is_json {
                file.write_all(reports_json_string(&reports).as_bytes())?;
                file.write_all(b"\n")?;
            } else {
                write_reports_tsv(&mut file, &reports)?;
            }
            Ok(file.flush()?)
        })
        .stage("eval")?;
        status!("eval: report -> {}", report_path.display());
    }
    Ok(())
}

/// The full pipeline: embed, index, generate (hyde mode with a cache path),
/// search, and — when qrels are configured — eval.
pub fn cmd_e2e(exp: &Experiment) -> Result<()> {
    cmd_embed(exp)?;
    cmd_index(exp)?;
    if exp.mode == SearchMode::Hyde && exp.paths.cache.is_some() {
        cmd_generate(exp)?;
    }
    cmd_search(exp)?;
    if exp.paths.qrels.is_some() {
        cmd_eval(exp)?;
    } else {
        status!("e2e: no qrels configured, skipping eval");
    }
    Ok(())
}

/// Resolve the instruction template: an explicit file wins over a registry
/// name. File templates are named after the file stem.
fn resolve_template(exp: &Experiment) -> Result<InstructionTemplate> {
    if let Some(path) = &exp.instruction_file {
        let text = fs::read_to_string(path).map_err(|e| {
            HydeError::Config(format!(
                "cannot read instruction file {}: {e}",
                path.display()
            ))
        })?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("custom")
            .to_string();
        return InstructionTemplate::new(name, text.trim_end_matches('\n'));
    }
    if let Some(name) = &exp.instruction {
        return builtin_template(name).ok_or_else(|| {
            let known: Vec<String> = builtin_templates()
                .iter()
                .map(|t| t.name().to_string())
                .collect();
            HydeError::Config(format!(
                "unknown instruction {name:?} (built-ins: {})",
                known.join(", ")
            ))
        });
    }
    Err(HydeError::Config(
        "hyde mode needs --instruction <name> or --instruction-file <path>".to_string(),
    ))
}

fn load_nonempty_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    let queries = load_queries(path)?;
    if queries.is_empty() {
        return Err(HydeError::EmptyInput("query file"));
    }
    Ok(queries)
}

/// Default run tag: records mode, N, include_query, and both model names,
/// so any run file documents the configuration that produced it.
fn default_tag(exp: &Experiment) -> String {
    match exp.mode {
        SearchMode::Baseline => {
            format!("baseline.e-{}", sanitize_tag(&exp.encoder.tag_name()))
        }
        SearchMode::Hyde => format!(
            "hyde.n{}.q{}.g-{}.e-{}",
            exp.generator.n_samples,
            u8::from(exp.include_query),
            sanitize_tag(&exp.generator.effective_model_name()),
            sanitize_tag(&exp.encoder.tag_name()),
        ),
    }
}

/// Run tags are whitespace-delimited fields in the run file; squash anything
/// else to '-'.
fn sanitize_tag(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                c
            } else {
                '-'
            }
        })
        .collect();
    if cleaned.is_empty() {
        "run".to_string()
    } else {
        cleaned
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

/// Write through a temporary sibling and rename, so the destination is
/// either absent, the old version, or the complete new version — never a
/// torn write.
fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let mut tmp: PathBuf = path.to_path_buf();
    let mut name = tmp.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    tmp.set_file_name(name);

    match write(&tmp) {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}
