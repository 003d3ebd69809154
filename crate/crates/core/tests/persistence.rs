//! Round-trip properties for every on-disk artifact: the flat index, the
//! embedding store, run files, and qrels files.
//!
//! Binary formats must round-trip bit-exactly (f32 payloads compared via
//! `to_bits`, ids verbatim, order preserved). Text formats must round-trip
//! ranking-equivalently: scores pass through a fixed-precision decimal
//! rendering, so they are generated on a decimal grid the rendering cannot
//! perturb.

use proptest::prelude::*;

use hyde_core::eval::{QrelsTable, RankedRun};
use hyde_core::index::FlatIndex;
use hyde_core::ingest::{StoreReader, StoreWriter};
use hyde_core::types::{EmbeddingVector, ScoredDoc};

/// Finite f32s across the full range, including negative zero, subnormals,
/// and extreme magnitudes — everything the vector type admits.
fn finite_f32() -> impl Strategy<Value = f32> {
    any::<u32>()
        .prop_map(f32::from_bits)
        .prop_filter("finite", |v| v.is_finite())
}

/// Unique short ids: index entries are keyed by these.
fn id_set(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::btree_set("[a-z0-9]{1,12}", 1..=max).prop_map(|set| set.into_iter().collect())
}

fn entries_strategy() -> impl Strategy<Value = (usize, Vec<(String, Vec<f32>)>)> {
    (1usize..=8).prop_flat_map(|dim| {
        id_set(20)
            .prop_flat_map(move |ids| {
                let n = ids.len();
                (
                    Just(ids),
                    prop::collection::vec(prop::collection::vec(finite_f32(), dim..=dim), n..=n),
                )
            })
            .prop_map(move |(ids, vectors)| (dim, ids.into_iter().zip(vectors).collect::<Vec<_>>()))
    })
}

fn bits(values: &[f32]) -> Vec<u32> {
    values.iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn index_save_load_is_bit_exact((_dim, entries) in entries_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.hydx");
        let index = FlatIndex::build(entries.iter().map(|(id, v)| {
            (id.clone(), EmbeddingVector::new(v.clone()).unwrap())
        })).unwrap();
        index.save(&path).unwrap();
        let loaded = FlatIndex::load(&path).unwrap();

        prop_assert_eq!(loaded.len(), index.len());
        prop_assert_eq!(loaded.dim(), index.dim());
        for ((id_a, row_a), (id_b, row_b)) in index.entries().zip(loaded.entries()) {
            prop_assert_eq!(id_a, id_b);
            prop_assert_eq!(bits(row_a), bits(row_b));
        }
    }

    #[test]
    fn store_write_read_is_bit_exact((dim, entries) in entries_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.hyde");
        let mut writer = StoreWriter::create(&path, dim).unwrap();
        for (id, values) in &entries {
            writer.append(id, &EmbeddingVector::new(values.clone()).unwrap()).unwrap();
        }
        writer.finish().unwrap();

        let reader = StoreReader::open(&path).unwrap();
        prop_assert_eq!(reader.dim(), dim);
        let read: Vec<(String, EmbeddingVector)> =
            reader.map(|r| r.unwrap()).collect();
        prop_assert_eq!(read.len(), entries.len());
        for ((id_a, values_a), (id_b, vec_b)) in entries.iter().zip(&read) {
            prop_assert_eq!(id_a, id_b);
            prop_assert_eq!(bits(values_a), bits(vec_b.values()));
        }
    }

    /// Write → parse preserves each query's document order. Scores live on a
    /// 1e-4 grid so the 6-decimal rendering keeps distinct levels distinct.
    #[test]
    fn run_file_round_trip_is_ranking_equivalent(
        rankings in prop::collection::btree_map(
            "[a-z0-9]{1,8}",
            prop::collection::btree_map("[a-z0-9]{1,8}", 0u32..10_000, 1..=15),
            1..=6,
        )
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.txt");
        let mut run = RankedRun::new("roundtrip").unwrap();
        for (qid, docs) in &rankings {
            let ranking: Vec<ScoredDoc> = docs.iter().map(|(doc, level)| {
                ScoredDoc { doc_id: doc.clone(), score: *level as f64 * 1e-4 }
            }).collect();
            run.set_ranking(qid, ranking, 1000).unwrap();
        }
        run.write(&path).unwrap();
        let reparsed = RankedRun::parse(&path, 1000).unwrap();

        prop_assert_eq!(reparsed.tag(), run.tag());
        let orig_queries: Vec<&str> = run.queries().collect();
        let new_queries: Vec<&str> = reparsed.queries().collect();
        prop_assert_eq!(orig_queries.clone(), new_queries);
        for qid in orig_queries {
            let before: Vec<&str> = run.ranking(qid).unwrap().iter()
                .map(|d| d.doc_id.as_str()).collect();
            let after: Vec<&str> = reparsed.ranking(qid).unwrap().iter()
                .map(|d| d.doc_id.as_str()).collect();
            prop_assert_eq!(before, after, "query {}", qid);
        }
    }

    #[test]
    fn qrels_round_trip_is_exact(
        judgments in prop::collection::btree_map(
            "[a-z0-9]{1,8}",
            prop::collection::btree_map("[a-z0-9]{1,8}", 0u32..=3, 1..=10),
            1..=6,
        )
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("qrels.txt");
        let mut qrels = QrelsTable::default();
        for (qid, grades) in &judgments {
            for (doc, grade) in grades {
                qrels.add_judgment(qid, doc, *grade).unwrap();
            }
        }
        qrels.write(&path).unwrap();
        let reparsed = QrelsTable::parse(&path).unwrap();
        prop_assert_eq!(reparsed, qrels);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    /// An empty index (built from nothing) round-trips too; dim becomes 0
    /// and searching stays legal.
    #[test]
    fn empty_and_tiny_indexes_round_trip(dim in 1usize..=4) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.hydx");
        let index = FlatIndex::build(
            [("solo".to_string(), EmbeddingVector::new(vec![0.5; dim]).unwrap())],
        ).unwrap();
        index.save(&path).unwrap();
        let loaded = FlatIndex::load(&path).unwrap();
        prop_assert_eq!(loaded.len(), 1);
        prop_assert_eq!(loaded.dim(), dim);
    }
}
