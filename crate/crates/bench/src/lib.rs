//! Fixtures shared by the benchmarks.

use nesprindt_core::generator::{generate, GeneratorConfig, SPEAKER};
use nesprindt_core::sampling::undersample_level;
use nesprindt_core::{Dataset, RowIndexSet, SeedStream};

/// Default synthetic corpus for `seed`.
pub fn corpus(seed: u64) -> Dataset {
    generate(&GeneratorConfig {
        seed,
        ..GeneratorConfig::default()
    })
    .expect("default generator settings are valid")
}

/// One level-balanced undersample of `d`.
pub fn under_out(d: &Dataset, seed: u64) -> RowIndexSet {
    undersample_level(d, SPEAKER, "child", &SeedStream::new(seed))
        .expect("corpus has both speakers")
}

pub fn predictors() -> Vec<String> {
    ["PRN_TYPE", "MLU", "ETHN_GROUP", "AGE"]
        .map(String::from)
        .to_vec()
}
