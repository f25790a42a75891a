#![allow(dead_code)]

use std::collections::BTreeMap;

use regionseg::pipeline::{SegmentReport, SegmentRow};
use regionseg::synthgen::{GenColumn, GeneratorSpec, PatternWeight, ValueDistribution};
use regionseg::ColumnSpec;

/// The published cluster table: (region, % of region, % of population) per cluster.
pub const PUBLISHED_SEGMENTS: &[(usize, f64, f64)] = &[
    (1, 9.28, 1.69),
    (1, 16.17, 2.94),
    (1, 28.36, 5.16),
    (1, 19.80, 3.61),
    (1, 15.71, 2.86),
    (1, 10.68, 1.94),
    (2, 26.71, 0.57),
    (2, 23.76, 0.51),
    (2, 14.82, 0.32),
    (2, 20.10, 0.43),
    (2, 14.60, 0.31),
    (3, 19.41, 0.01),
    (3, 32.60, 0.01),
    (3, 26.19, 0.01),
    (3, 21.79, 0.01),
    (4, 22.79, 3.70),
    (4, 37.28, 6.05),
    (4, 14.61, 2.37),
    (4, 19.84, 3.22),
    (4, 5.48, 0.89),
    (5, 25.84, 2.74),
    (5, 20.29, 2.15),
    (5, 16.75, 1.78),
    (5, 12.77, 1.35),
    (5, 10.82, 1.15),
    (5, 13.53, 1.43),
    (6, 30.73, 3.64),
    (6, 9.31, 1.10),
    (6, 16.45, 1.95),
    (6, 21.23, 2.52),
    (6, 15.56, 1.85),
    (6, 6.70, 0.79),
    (7, 20.63, 8.34),
    (7, 25.70, 10.39),
    (7, 20.91, 8.45),
    (7, 22.62, 9.14),
    (7, 10.13, 4.10),
    (8, 23.25, 0.13),
    (8, 21.90, 0.12),
    (8, 24.17, 0.14),
    (8, 17.12, 0.10),
    (8, 13.56, 0.08),
];

pub fn published_report() -> SegmentReport {
    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    let rows = PUBLISHED_SEGMENTS
        .iter()
        .map(|&(region, pct_region, pct_global)| {
            let c = next.entry(region).or_insert(0);
            *c += 1;
            SegmentRow {
                region,
                cluster: *c,
                region_share: pct_region / 100.0,
                global_share: pct_global / 100.0,
                relevant: true,
            }
        })
        .collect();
    SegmentReport::new(rows)
}

fn normal_col(name: &str, split: bool) -> GenColumn {
    let mut spec = ColumnSpec::continuous(name);
    spec.split_variable = split;
    GenColumn {
        spec,
        missing_rate: 0.0,
        distribution: ValueDistribution::BoundedNormal {
            mean: 0.0,
            std: 1.0,
            lo: -100.0,
            hi: 100.0,
        },
        outlier_rate: 0.0,
        informative: true,
    }
}

/// Two split variables, six further informative columns and a different
/// planted cluster count in each of the four availability patterns.
pub fn planted_spec(n_rows: usize, seed: u64) -> GeneratorSpec {
    let planted: BTreeMap<String, usize> = [("11", 3), ("10", 4), ("01", 2), ("00", 5)]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    let mut columns = vec![normal_col("a", true), normal_col("b", true)];
    columns.extend(
        ["c", "d", "e", "f", "g", "h"]
            .iter()
            .map(|n| normal_col(n, false)),
    );
    GeneratorSpec {
        n_rows,
        seed,
        columns,
        planted_clusters: 3,
        planted_per_pattern: planted,
        split_patterns: Some(
            ["11", "10", "01", "00"]
                .iter()
                .map(|k| PatternWeight {
                    key: k.parse().unwrap(),
                    weight: 1.0,
                })
                .collect(),
        ),
        separation: 6.0,
        outlier_factor: 25.0,
    }
}
