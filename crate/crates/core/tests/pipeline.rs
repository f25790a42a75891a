mod common;

use regionseg::cluster::KMeansConfig;
use regionseg::eda::ForestConfig;
use regionseg::gaopt::GaConfig;
use regionseg::pipeline::{
    emit_reports, prune_segments, run_segmentation, run_segmentation_on, PipelineConfig, PruneThresholds,
    RegionStatus, SegmentReport, SkipReason,
};
use regionseg::synthgen::{demo_spec, generate_corpus};

use common::{planted_spec, published_report};

fn light(seed: u64) -> PipelineConfig {
    PipelineConfig {
        ga: GaConfig {
            population: 10,
            generations: 4,
            fitness_sample: Some(500),
            ..GaConfig::default()
        },
        kmeans: KMeansConfig {
            n_init: 3,
            ..KMeansConfig::default()
        },
        ga_kmeans_n_init: 1,
        forest: ForestConfig {
            n_trees: 8,
            max_rows: Some(500),
            ..ForestConfig::default()
        },
        seed,
        ..PipelineConfig::default()
    }
}

#[test]
fn published_segments_prune_to_26() {
    let report = published_report();
    assert_eq!(report.rows.len(), 42);
    let pruned = prune_segments(&report, &PruneThresholds::default()).unwrap();
    assert_eq!(pruned.totals.n_relevant, 26);
    let dropped: Vec<(usize, usize)> = pruned
        .rows
        .iter()
        .filter(|r| !r.relevant)
        .map(|r| (r.region, r.cluster))
        .collect();
    let mut expected: Vec<(usize, usize)> = (1..=5).map(|c| (2, c)).collect();
    expected.extend((1..=4).map(|c| (3, c)));
    expected.extend([(4, 5), (6, 6)]);
    expected.extend((1..=5).map(|c| (8, c)));
    assert_eq!(dropped, expected);
    assert!((pruned.totals.discarded_share - 0.0443).abs() < 1e-9);
}

#[test]
fn published_shares_are_consistent() {
    let report = published_report();
    for (region, sum) in report.region_share_sums() {
        assert!((0.995..=1.005).contains(&sum), "region {region}: {sum}");
    }
    let r1 = report.region_totals()[&1];
    assert!((r1 - 0.1820).abs() < 1e-4, "{r1}");
}

#[test]
fn pruning_is_monotone_in_thresholds() {
    let report = published_report();
    let grid = [0.0, 0.001, 0.005, 0.01, 0.02, 0.05, 0.2];
    for &r in &grid {
        let mut last = usize::MAX;
        for &c in &grid {
            let t = PruneThresholds {
                region_min_global_share: r,
                cluster_min_global_share: c,
            };
            let n = prune_segments(&report, &t).unwrap().totals.n_relevant;
            assert!(n <= last);
            last = n;
        }
    }
    let all = PruneThresholds {
        region_min_global_share: 0.0,
        cluster_min_global_share: 0.0,
    };
    assert_eq!(prune_segments(&report, &all).unwrap().totals.n_relevant, 42);
}

#[test]
fn planted_k_is_recovered_in_every_region() {
    for seed in [0, 1] {
        let spec = planted_spec(6000, seed);
        let corpus = regionseg::synthgen::generate_labelled(&spec).unwrap();
        let run = run_segmentation_on(&corpus.table, &light(seed), None).unwrap();
        assert_eq!(run.regions.len(), 4);
        for r in &run.regions {
            let RegionStatus::Clustered(c) = &r.status else {
                panic!("region {} was not clustered", r.index);
            };
            assert_eq!(c.k, spec.clusters_for(&r.key), "seed {seed}, region {}", r.key);
        }
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let cfg = PipelineConfig {
        generator: Some(demo_spec(4000, 8)),
        ..light(17)
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = emit_reports(&run_segmentation(&cfg).unwrap(), &cfg, a.path()).unwrap();
    let mb = emit_reports(&run_segmentation(&cfg).unwrap(), &cfg, b.path()).unwrap();
    assert_eq!(ma, mb);
    for name in ma.files.keys().map(String::as_str).chain(["manifest.json"]) {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
}

#[test]
fn emitted_layout_and_manifest() {
    let table = generate_corpus(&demo_spec(3000, 4)).unwrap();
    let cfg = light(2);
    let run = run_segmentation_on(&table, &cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = emit_reports(&run, &cfg, dir.path()).unwrap();

    let segments = std::fs::read_to_string(dir.path().join("segments.csv")).unwrap();
    assert!(segments.starts_with("region,cluster,pct_region,pct_global,relevant\n"));
    let back = SegmentReport::from_csv_str(&segments).unwrap();
    assert_eq!(back.rows.len(), run.report.rows.len());
    back.check_conservation(0.005).unwrap();

    let assignments = std::fs::read_to_string(dir.path().join("assignments.csv")).unwrap();
    assert_eq!(assignments.lines().count(), 3001);

    for r in &manifest.regions {
        if r.clustered {
            for sub in ["weights", "ga_trace", "transforms"] {
                let ext = if sub == "ga_trace" { "csv" } else { "json" };
                let rel = format!("{sub}/region_{}.{ext}", r.index);
                assert!(manifest.files.contains_key(&rel), "{rel}");
            }
        } else {
            assert!(r.reason.is_some(), "region {} has no reason", r.index);
        }
    }
    // The 0.04% region is too small to cluster, or empty at this size.
    let r3 = &manifest.regions[2];
    assert!(!r3.clustered);
    assert!(matches!(
        r3.reason,
        Some(SkipReason::TooFewRows | SkipReason::Empty)
    ));

    let weights: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("weights/region_7.json")).unwrap())
            .unwrap();
    let sum: f64 = weights["weights"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert_eq!(weights["spec_version"], "1.0");
}

#[test]
fn manifest_hashes_track_file_contents() {
    let table = generate_corpus(&demo_spec(2000, 6)).unwrap();
    let cfg = light(1);
    let run = run_segmentation_on(&table, &cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m1 = emit_reports(&run, &cfg, dir.path()).unwrap();

    let mut altered = run.clone();
    altered.report.rows[0].relevant = !altered.report.rows[0].relevant;
    let m2 = emit_reports(&altered, &cfg, dir.path()).unwrap();
    assert_ne!(m1.files["segments.csv"], m2.files["segments.csv"]);
    assert_eq!(m1.files["assignments.csv"], m2.files["assignments.csv"]);
    assert_eq!(m1.files["eda.json"], m2.files["eda.json"]);
}

#[test]
fn missing_inputs_are_config_errors() {
    assert!(run_segmentation(&PipelineConfig::default()).is_err());
    let cfg = PipelineConfig {
        schema: Some("/nonexistent/schema.json".into()),
        data: Some("/nonexistent/data.csv".into()),
        ..PipelineConfig::default()
    };
    let err = run_segmentation(&cfg).unwrap_err().to_string();
    assert!(err.contains("/nonexistent/schema.json"), "{err}");
}
