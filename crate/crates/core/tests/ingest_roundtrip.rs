mod common;

use std::path::PathBuf;

use ebv::io::output::write_sensor_csv;
use ebv::io::{ingest, IngestOptions};
use ebv::synthgen::{generate, random_hourly_gaps, ScenarioSpec};
use ebv::{HiveDataset, HiveType, ModelConfig};
use proptest::prelude::*;

fn options(datasets: &[HiveDataset]) -> IngestOptions {
    IngestOptions {
        utc_offset_hours: 0,
        hive_types: datasets.iter().map(|d| (d.hive_id().to_string(), d.hive_type())).collect(),
    }
}

fn write_and_ingest(dir: &tempfile::TempDir, name: &str, datasets: &[HiveDataset]) -> Vec<HiveDataset> {
    let path: PathBuf = dir.path().join(name);
    write_sensor_csv(&path, "test", datasets).unwrap();
    ingest(&[path], &options(datasets)).unwrap().datasets
}

#[test]
fn treated_and_control_hives_round_trip() {
    let config = ModelConfig::default();
    let mut control = common::recovery_scenario(3, 0.2);
    control.hive_id = "a-control".into();
    let mut treated = common::recovery_scenario(4, 0.2);
    treated.hive_id = "b-treated".into();
    treated.hive_type = HiveType::Treated;
    treated.ext_profile.heatwaves = vec![ebv::synthgen::Heatwave { day: 2, peak: 41.0 }];
    let datasets: Vec<HiveDataset> = [control, treated]
        .iter()
        .map(|s| generate(s, &config).unwrap().0)
        .collect();

    let dir = tempfile::tempdir().unwrap();
    let once = write_and_ingest(&dir, "first.csv", &datasets);
    assert_eq!(once, datasets);
    let twice = write_and_ingest(&dir, "second.csv", &once);
    assert_eq!(twice, once);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ingest_is_idempotent_with_gaps(seed in 0u64..10_000, core_gaps in 0usize..40, ext_gaps in 0usize..40) {
        let spec = common::recovery_scenario(seed, 0.1);
        let n = spec.num_ticks();
        let spec = ScenarioSpec {
            missing_pattern: random_hourly_gaps(n, core_gaps, seed + 1),
            ext_missing_pattern: random_hourly_gaps(n, ext_gaps, seed + 2),
            ..spec
        };
        let (d, _) = generate(&spec, &ModelConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let once = write_and_ingest(&dir, "a.csv", std::slice::from_ref(&d));
        prop_assert_eq!(&once[0], &d);
        let twice = write_and_ingest(&dir, "b.csv", &once);
        prop_assert_eq!(twice, once);
    }
}
