use gridforest::formation::VariantKind;
use gridforest::harness::{run_batch, stats, summarize, BatchConfig, Tag};
use gridforest::io::{ieee33, write_batch_csv, RowStatus};
use gridforest::radiality::Formulation;
use proptest::prelude::*;
use statrs::statistics::{Data, OrderStatistics, Statistics};

proptest! {
    #[test]
    fn stats_agree_with_statrs(values in prop::collection::vec(-1e4f64..1e4, 1..60)) {
        let s = stats(&values).unwrap();
        let scale = 1.0 + values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert_eq!(s.count, values.len());
        prop_assert!((s.avg - values.iter().mean()).abs() <= 1e-9 * scale);
        prop_assert!((s.std - values.iter().population_std_dev()).abs() <= 1e-9 * scale);
        prop_assert_eq!(s.min, Statistics::min(values.iter()));
        prop_assert_eq!(s.max, Statistics::max(values.iter()));
        let mut data = Data::new(values.clone());
        // lower median: the order statistic at rank ceil(n/2)
        prop_assert_eq!(s.med, data.order_statistic(values.len().div_ceil(2)));
    }
}

#[test]
fn stats_of_nothing() {
    assert!(stats(&[]).is_none());
}

fn small_config(workers: usize) -> BatchConfig {
    BatchConfig {
        scenarios: 3,
        seed: 11,
        variants: vec![VariantKind::FixedIslands, VariantKind::RadialBaseline],
        workers,
        ..BatchConfig::default()
    }
}

fn csv_without_times(config: &BatchConfig) -> String {
    let mut rows = run_batch(&ieee33(), config).unwrap().rows;
    for r in &mut rows {
        r.wall_ms = 0.0;
    }
    let mut buf = Vec::new();
    write_batch_csv(&mut buf, &rows).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn batch_is_reproducible_across_worker_counts() {
    let one = csv_without_times(&small_config(1));
    let all = csv_without_times(&small_config(0));
    assert_eq!(one, all);
    assert_eq!(one.lines().count(), 1 + 3 * 2);
}

#[test]
fn batch_rows_are_grouped_by_tag() {
    let result = run_batch(&ieee33(), &small_config(2)).unwrap();
    assert_eq!(result.scenarios.len(), 3);
    assert_eq!(result.rows.len(), result.solutions.len());
    let groups = summarize(&result.rows);
    assert_eq!(groups.len(), 2);
    assert_eq!(groups[0].tag, Tag::new(VariantKind::FixedIslands, Formulation::Scf));
    for g in &groups {
        assert_eq!(g.rows, 3);
        assert_eq!(g.optimal + g.infeasible + g.other, 3);
    }
    for (row, sol) in result.rows.iter().zip(&result.solutions) {
        assert_eq!(row.status == RowStatus::Optimal, sol.is_some());
    }
}

#[test]
fn empty_variant_list_is_rejected() {
    let config = BatchConfig { variants: vec![], ..small_config(1) };
    assert!(run_batch(&ieee33(), &config).is_err());
}
