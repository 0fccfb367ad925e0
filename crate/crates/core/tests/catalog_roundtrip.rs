use diskpop::catalog::{
    generate_synthetic_corpus, parse_catalog, write_catalog, CatalogFormat, DatasetRecord,
    PopularMixConfig, UsageHistory,
};
use proptest::prelude::*;

fn with_counts(mut records: Vec<DatasetRecord>, counts: &[f64]) -> Vec<DatasetRecord> {
    for (r, &c) in records.iter_mut().zip(counts) {
        let mut h = r.history.counts().to_vec();
        let last = h.len() - 1;
        h[last] = c;
        r.history = UsageHistory::new(h).unwrap();
        r.metadata.first_usage_week = r.history.first_used_week().map(|w| w as i32);
        r.metadata.last_usage_week = r.history.last_used_week().map(|w| w as i32);
    }
    records
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn write_then_parse_is_identity(
        seed in any::<u64>(),
        n in 1usize..30,
        cold in 0.0f64..=1.0,
        counts in prop::collection::vec(0.0f64..1e6, 30),
    ) {
        let records = generate_synthetic_corpus(n, seed, &PopularMixConfig::with_cold_fraction(cold)).unwrap();
        let records = with_counts(records, &counts);
        let dir = tempfile::tempdir().unwrap();
        for (name, format) in [("c.csv", CatalogFormat::Csv), ("c.json", CatalogFormat::Json)] {
            let path = dir.path().join(name);
            write_catalog(&records, &path, format).unwrap();
            let back = parse_catalog(&path, format).unwrap();
            prop_assert_eq!(&back, &records);
        }
    }
}
