// SPDX-License-Identifier: Apache-2.0

//! Stored numbers and configurations reload to identical values.

use proptest::prelude::*;
use urc_cli::config::ExperimentConfig;
use urc_cli::output::{fmt_f64, parse_f64};

proptest! {
    #[test]
    fn floats_round_trip_bitwise(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(parse_f64(&fmt_f64(x)).unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn stored_config_reproduces_its_hash(
        seed in 0..=i64::MAX as u64,
        segments in 1usize..100,
        time in 0.01f64..20.0,
        weight in 0.0f64..10.0,
        rabi in 0.1f64..5.0,
    ) {
        let text = format!(
            "name = \"p\"\n[model]\nfamily = \"single_qubit\"\nrabi = {}\n[pulse]\nsegments = {segments}\ntime = {}\n\
             [target]\nfixture = \"single_qubit_z\"\n[objective]\nrobustness = \"universal\"\nweight = {}\n\
             [optimizer]\nseed = {seed}\n",
            fmt_f64(rabi), fmt_f64(time), fmt_f64(weight)
        );
        let first = ExperimentConfig::from_toml(&text).unwrap().resolve().unwrap();
        let again = ExperimentConfig::from_toml(&first.to_toml()).unwrap().resolve().unwrap();
        prop_assert_eq!(first.config_hash(), again.config_hash());
        prop_assert_eq!(first.model_hash(), again.model_hash());
    }
}

#[test]
fn seeds_beyond_toml_range_are_rejected() {
    let text = "preset = \"fig1.urc\"\n";
    let mut cfg = ExperimentConfig::from_toml(text).unwrap();
    cfg.optimizer.seed = u64::MAX;
    assert_eq!(cfg.resolve().unwrap_err().exit_code(), 2);
}
