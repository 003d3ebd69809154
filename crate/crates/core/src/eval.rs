//! TREC-style evaluation: qrels and run files, rank metrics, reports.
//!
//! Metric definitions follow the trec_eval conventions used by standard IR
//! tooling:
//!
//! * nDCG@k uses **linear** gain `grade / log2(rank+1)` (the `ndcg_cut`
//!   convention). Exponential-gain nDCG is deliberately not implemented so a
//!   silently different formula can never sneak into comparisons.
//! * MAP, recall@k, and MRR@k binarize graded judgments at a configurable
//!   threshold `binarize_at` (default 1; 2 matches the TREC Deep Learning
//!   convention).
//! * Queries present in qrels but missing from the run score 0 and still
//!   count in the aggregate (trec_eval `-c` behavior). Queries present only
//!   in the run are excluded from the aggregate but counted and reported.
//!
//! File formats: qrels lines are `qid 0 docid grade`, run lines are
//! `qid Q0 docid rank score tag` (whitespace separated, rank from 1, scores
//! written with 6 decimal places).

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{HydeError, Result};
use crate::types::ScoredDoc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Default maximum ranking length retained per query.
pub const DEFAULT_RUN_DEPTH: usize = 1000;
/// Default cutoff for MRR.
pub const DEFAULT_MRR_K: usize = 100;
/// Default binarization threshold: grade ≥ 1 counts as relevant.
pub const DEFAULT_BINARIZE_AT: u32 = 1;

/// Minimum judged-query count before per-query metric evaluation fans out
/// across threads.
#[cfg(feature = "parallel")]
const PARALLEL_MIN_QUERIES: usize = 32;

/// Graded relevance judgments: `(query_id, doc_id) → grade ≥ 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QrelsTable {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QrelsTable {
    pub fn new() -> Self {
        QrelsTable::default()
    }

    /// Record one judgment. A `(query, doc)` pair may only be judged once.
    pub fn add_judgment(&mut self, query_id: &str, doc_id: &str, grade: u32) -> Result<()> {
        let per_query = self.judgments.entry(query_id.to_string()).or_default();
        if per_query.insert(doc_id.to_string(), grade).is_some() {
            return Err(HydeError::DuplicateId(format!("{query_id}/{doc_id}")));
        }
        Ok(())
    }

    /// Parse a whitespace-separated qrels file: `qid 0 docid grade` per
    /// line (the second field is the legacy iteration column and ignored).
    pub fn parse(path: &Path) -> Result<QrelsTable> {
        let reader = BufReader::new(File::open(path)?);
        let mut table = QrelsTable::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(HydeError::format(
                    path,
                    line_no,
                    format!(
                        "expected 4 fields (qid 0 docid grade), got {}",
                        fields.len()
                    ),
                ));
            }
            let grade: u32 = fields[3].parse().map_err(|_| {
                HydeError::format(
                    path,
                    line_no,
                    format!("grade {:?} is not a non-negative integer", fields[3]),
                )
            })?;
            table
                .add_judgment(fields[0], fields[2], grade)
                .map_err(|e| HydeError::format(path, line_no, e.to_string()))?;
        }
        Ok(table)
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    /// Number of judged queries.
    pub fn n_queries(&self) -> usize {
        self.judgments.len()
    }

    /// Judged query ids in ascending order.
    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.judgments.contains_key(query_id)
    }

    /// All judgments for one query.
    pub fn grades_for(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.judgments.get(query_id)?.get(doc_id).copied()
    }

    /// Write in the standard four-field format (`query_id 0 doc_id grade`),
    /// queries and documents in ascending id order.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for (query_id, grades) in &self.judgments {
            for (doc_id, grade) in grades {
                writeln!(out, "{query_id} 0 {doc_id} {grade}")?;
            }
        }
        Ok(())
    }

    /// Write to a file; see [`QrelsTable::write_to`].
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

/// One ranked retrieval output: per query, documents in descending score
/// order (ties broken by doc_id ascending), truncated to a depth.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedRun {
    tag: String,
    rankings: BTreeMap<String, Vec<ScoredDoc>>,
}

impl RankedRun {
    /// Create an empty run. The tag becomes a whitespace-delimited field in
    /// the run file, so it must be a single non-empty token.
    pub fn new(tag: impl Into<String>) -> Result<RankedRun> {
        let tag = tag.into();
        if tag.is_empty() || tag.chars().any(char::is_whitespace) {
            return Err(HydeError::InvalidRecord(format!(
                "run tag {tag:?} must be a single non-empty token"
            )));
        }
        Ok(RankedRun {
            tag,
            rankings: BTreeMap::new(),
        })
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Set the ranking for a query: validates uniqueness and score
    /// finiteness, sorts by (score desc, doc_id asc), truncates to `depth`.
    pub fn set_ranking(
        &mut self,
        query_id: &str,
        mut docs: Vec<ScoredDoc>,
        depth: usize,
    ) -> Result<()> {
        if depth == 0 {
            return Err(HydeError::Config(
                "run depth must be at least 1".to_string(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for doc in &docs {
            if !doc.score.is_finite() {
                return Err(HydeError::InvalidRecord(format!(
                    "query {query_id}: non-finite score for doc {:?}",
                    doc.doc_id
                )));
            }
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(HydeError::DuplicateId(format!("{query_id}/{}", doc.doc_id)));
            }
        }
        docs.sort_unstable_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.doc_id.cmp(&b.doc_id))
        });
        docs.truncate(depth);
        self.rankings.insert(query_id.to_string(), docs);
        Ok(())
    }

    /// Query ids present in the run, ascending.
    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn n_queries(&self) -> usize {
        self.rankings.len()
    }

    /// The ranking for one query (best first).
    pub fn ranking(&self, query_id: &str) -> Option<&[ScoredDoc]> {
        self.rankings.get(query_id).map(Vec::as_slice)
    }

    /// Parse a TREC run file (`qid Q0 docid rank score tag`). The stored tag
    /// is taken from the first line; rankings are re-sorted under this
    /// crate's ordering contract and truncated to `depth`.
    pub fn parse(path: &Path, depth: usize) -> Result<RankedRun> {
        let reader = BufReader::new(File::open(path)?);
        let mut tag: Option<String> = None;
        let mut gathered: BTreeMap<String, Vec<ScoredDoc>> = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(HydeError::format(
                    path,
                    line_no,
                    format!(
                        "expected 6 fields (qid Q0 docid rank score tag), got {}",
                        fields.len()
                    ),
                ));
            }
            fields[3].parse::<usize>().map_err(|_| {
                HydeError::format(
                    path,
                    line_no,
                    format!("rank {:?} is not an integer", fields[3]),
                )
            })?;
            let score: f64 = fields[4].parse().map_err(|_| {
                HydeError::format(
                    path,
                    line_no,
                    format!("score {:?} is not a number", fields[4]),
                )
            })?;
            if !score.is_finite() {
                return Err(HydeError::format(path, line_no, "non-finite score"));
            }
            if tag.is_none() {
                tag = Some(fields[5].to_string());
            }
            gathered
                .entry(fields[0].to_string())
                .or_default()
                .push(ScoredDoc {
                    doc_id: fields[2].to_string(),
                    score,
                });
        }
        let mut run = RankedRun::new(tag.unwrap_or_else(|| "run".to_string()))?;
        for (query_id, docs) in gathered {
            run.set_ranking(&query_id, docs, depth)
                .map_err(|e| HydeError::format(path, 0, format!("query {query_id}: {e}")))?;
        }
        Ok(run)
    }

    /// Write the run in TREC format, ranks starting at 1, scores with 6
    /// decimal places, queries in ascending id order.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        for (query_id, docs) in &self.rankings {
            for (i, doc) in docs.iter().enumerate() {
                writeln!(
                    w,
                    "{query_id} Q0 {} {} {:.6} {}",
                    doc.doc_id,
                    i + 1,
                    doc.score,
                    self.tag
                )?;
            }
        }
        Ok(())
    }
}

/// Per-query values and the aggregate for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// Canonical metric name, e.g. "ndcg@10".
    pub metric: String,
    /// Value per judged query (queries missing from the run score 0).
    pub per_query: BTreeMap<String, f64>,
    /// Unweighted mean over all judged queries.
    pub aggregate: f64,
    /// Number of judged queries (the aggregate denominator).
    pub evaluated: usize,
    /// Queries present in the run but absent from qrels: excluded from the
    /// aggregate, reported here.
    pub run_only: usize,
}

/// A requested metric, parseable from strings like "ndcg@10", "map",
/// "recall@1000" (or "recall@1k"), "mrr@100".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    NdcgAt(usize),
    Map,
    RecallAt(usize),
    MrrAt(usize),
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::NdcgAt(k) => write!(f, "ndcg@{k}"),
            Metric::Map => write!(f, "map"),
            Metric::RecallAt(k) => write!(f, "recall@{k}"),
            Metric::MrrAt(k) => write!(f, "mrr@{k}"),
        }
    }
}

impl FromStr for Metric {
    type Err = HydeError;

    fn from_str(s: &str) -> Result<Metric> {
        let lower = s.trim().to_ascii_lowercase();
        if lower == "map" {
            return Ok(Metric::Map);
        }
        let (name, cutoff) = lower
            .split_once('@')
            .ok_or_else(|| HydeError::Config(format!("unknown metric {s:?}")))?;
        let k = parse_cutoff(cutoff)
            .ok_or_else(|| HydeError::Config(format!("bad metric cutoff in {s:?}")))?;
        match name {
            "ndcg" => Ok(Metric::NdcgAt(k)),
            "recall" => Ok(Metric::RecallAt(k)),
            "mrr" => Ok(Metric::MrrAt(k)),
            _ => Err(HydeError::Config(format!("unknown metric {s:?}"))),
        }
    }
}

/// Parse a cutoff, accepting a "k" suffix as ×1000 (so "recall@1k" works).
fn parse_cutoff(s: &str) -> Option<usize> {
    let (digits, mult) = match s.strip_suffix('k') {
        Some(d) => (d, 1000usize),
        None => (s, 1),
    };
    let n: usize = digits.parse().ok()?;
    let k = n.checked_mul(mult)?;
    (k >= 1).then_some(k)
}

/// Compute one metric over a run. `depth` caps how much of each ranking MAP
/// considers; `binarize_at` sets the relevance threshold for the binary
/// metrics (ignored by nDCG, which uses graded gains).
pub fn compute_metric(
    run: &RankedRun,
    qrels: &QrelsTable,
    metric: Metric,
    binarize_at: u32,
    depth: usize,
) -> Result<MetricReport> {
    match metric {
        Metric::NdcgAt(k) => ndcg_at_k(run, qrels, k),
        Metric::Map => average_precision(run, qrels, depth, binarize_at),
        Metric::RecallAt(k) => recall_at_k(run, qrels, k, binarize_at),
        Metric::MrrAt(k) => mrr_at_k(run, qrels, k, binarize_at),
    }
}

/// nDCG@k with linear gain: DCG@k = Σ_{i=1..k} grade(doc_i)/log2(i+1),
/// IDCG@k from the judged grades sorted descending; 0 when IDCG is 0.
pub fn ndcg_at_k(run: &RankedRun, qrels: &QrelsTable, k: usize) -> Result<MetricReport> {
    check_cutoff(k)?;
    per_query_metric(run, qrels, Metric::NdcgAt(k), move |ranking, judged| {
        let dcg: f64 = ranking
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, doc)| {
                let grade = judged.get(doc.doc_id.as_str()).copied().unwrap_or(0);
                f64::from(grade) / ((i as f64) + 2.0).log2()
            })
            .sum();
        let mut grades: Vec<u32> = judged.values().copied().collect();
        grades.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = grades
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &grade)| f64::from(grade) / ((i as f64) + 2.0).log2())
            .sum();
        if idcg == 0.0 {
            0.0
        } else {
            dcg / idcg
        }
    })
}

/// Average precision over the top `depth`: AP = (1/R) Σ_{relevant ranks i}
/// (relevant-retrieved@i / i), with R the number of relevant judged docs;
/// 0 when R is 0.
pub fn average_precision(
    run: &RankedRun,
    qrels: &QrelsTable,
    depth: usize,
    binarize_at: u32,
) -> Result<MetricReport> {
    check_binarize(binarize_at)?;
    check_cutoff(depth)?;
    per_query_metric(run, qrels, Metric::Map, move |ranking, judged| {
        let total_relevant = judged.values().filter(|&&g| g >= binarize_at).count();
        if total_relevant == 0 {
            return 0.0;
        }
        let mut hits = 0usize;
        let mut sum = 0.0f64;
        for (i, doc) in ranking.iter().take(depth).enumerate() {
            let relevant = judged
                .get(doc.doc_id.as_str())
                .is_some_and(|&g| g >= binarize_at);
            if relevant {
                hits += 1;
                sum += hits as f64 / (i + 1) as f64;
            }
        }
        sum / total_relevant as f64
    })
}

/// Recall@k: fraction of relevant judged docs retrieved in the top k;
/// 0 when the query has no relevant docs.
pub fn recall_at_k(
    run: &RankedRun,
    qrels: &QrelsTable,
    k: usize,
    binarize_at: u32,
) -> Result<MetricReport> {
    check_binarize(binarize_at)?;
    check_cutoff(k)?;
    per_query_metric(run, qrels, Metric::RecallAt(k), move |ranking, judged| {
        let total_relevant = judged.values().filter(|&&g| g >= binarize_at).count();
        if total_relevant == 0 {
            return 0.0;
        }
        let retrieved = ranking
            .iter()
            .take(k)
            .filter(|doc| {
                judged
                    .get(doc.doc_id.as_str())
                    .is_some_and(|&g| g >= binarize_at)
            })
            .count();
        retrieved as f64 / total_relevant as f64
    })
}

/// MRR@k: reciprocal rank of the first relevant doc within the top k, else 0.
pub fn mrr_at_k(
    run: &RankedRun,
    qrels: &QrelsTable,
    k: usize,
    binarize_at: u32,
) -> Result<MetricReport> {
    check_binarize(binarize_at)?;
    check_cutoff(k)?;
    per_query_metric(run, qrels, Metric::MrrAt(k), move |ranking, judged| {
        for (i, doc) in ranking.iter().take(k).enumerate() {
            if judged
                .get(doc.doc_id.as_str())
                .is_some_and(|&g| g >= binarize_at)
            {
                return 1.0 / (i + 1) as f64;
            }
        }
        0.0
    })
}

fn check_cutoff(k: usize) -> Result<()> {
    if k == 0 {
        return Err(HydeError::Config(
            "metric cutoff must be at least 1".to_string(),
        ));
    }
    Ok(())
}

fn check_binarize(binarize_at: u32) -> Result<()> {
    if binarize_at == 0 {
        return Err(HydeError::Config(
            "binarize_at must be at least 1 (grade 0 is non-relevant by definition)".to_string(),
        ));
    }
    Ok(())
}

/// Shared evaluation scaffold: one value per judged query (empty ranking for
/// queries the run is missing), mean aggregate, run-only counting.
fn per_query_metric<F>(
    run: &RankedRun,
    qrels: &QrelsTable,
    metric: Metric,
    score_one: F,
) -> Result<MetricReport>
where
    F: Fn(&[ScoredDoc], &BTreeMap<String, u32>) -> f64 + Sync,
{
    if qrels.is_empty() {
        return Err(HydeError::EmptyInput("qrels has no judged queries"));
    }
    let query_ids: Vec<&str> = qrels.queries().collect();
    let evaluate = |query_id: &&str| -> (String, f64) {
        let judged = qrels.grades_for(query_id).expect("query comes from qrels");
        let ranking = run.ranking(query_id).unwrap_or(&[]);
        ((*query_id).to_string(), score_one(ranking, judged))
    };

    #[cfg(feature = "parallel")]
    let scored: Vec<(String, f64)> = if query_ids.len() >= PARALLEL_MIN_QUERIES {
        query_ids.par_iter().map(evaluate).collect()
    } else {
        query_ids.iter().map(evaluate).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let scored: Vec<(String, f64)> = query_ids.iter().map(evaluate).collect();

    let per_query: BTreeMap<String, f64> = scored.into_iter().collect();
    let aggregate = per_query.values().sum::<f64>() / per_query.len() as f64;
    let run_only = run.queries().filter(|q| !qrels.contains_query(q)).count();
    Ok(MetricReport {
        metric: metric.to_string(),
        per_query,
        aggregate,
        evaluated: qrels.n_queries(),
        run_only,
    })
}

/// Write reports as TSV: one `metric<TAB>query_id<TAB>value` line per query,
/// then a `metric<TAB>all<TAB>aggregate` summary line per metric.
pub fn write_reports_tsv<W: Write>(w: &mut W, reports: &[MetricReport]) -> Result<()> {
    for report in reports {
        for (query_id, value) in &report.per_query {
            writeln!(w, "{}\t{query_id}\t{value:.6}", report.metric)?;
        }
        writeln!(w, "{}\tall\t{:.6}", report.metric, report.aggregate)?;
    }
    Ok(())
}

/// Reports as a pretty-printed JSON document; see [`reports_to_json`].
pub fn reports_json_string(reports: &[MetricReport]) -> String {
    let value = reports_to_json(reports);
    serde_json::to_string_pretty(&value).expect("report JSON is always serializable")
}

/// Reports as a JSON value (one object per metric).
pub fn reports_to_json(reports: &[MetricReport]) -> serde_json::Value {
    let metrics: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            serde_json::json!({
                "metric": r.metric,
                "aggregate": r.aggregate,
                "evaluated": r.evaluated,
                "run_only": r.run_only,
                "per_query": r.per_query,
            })
        })
        .collect();
    serde_json::json!({ "metrics": metrics })
}
