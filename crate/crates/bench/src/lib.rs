//! Fixtures shared by the benchmarks.

use dsp_core::config::preset;
use dsp_core::data::{generate_synthetic, SyntheticData, SyntheticSpec};
use dsp_core::pipeline::{TrainConfig, Widths};

/// The default synthetic benchmark.
pub fn mini_data(seed: u64) -> SyntheticData {
    generate_synthetic(&SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    })
    .expect("default spec is valid")
}

/// The mini preset cut down to one epoch with narrow networks.
pub fn short_config() -> TrainConfig {
    let mut cfg = preset("mini").expect("mini preset exists");
    cfg.epochs = 1;
    cfg.n_syn = 50;
    cfg.classifier.epochs = 2;
    cfg.widths = Widths {
        g_hidden: 64,
        d_hidden: 64,
        v2sm_hidden: (64, 32),
        vope_hidden: 0,
    };
    cfg
}
