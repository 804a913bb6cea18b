//! Shared fixtures for the criterion benchmarks: a synthetic market frame,
//! its windowed dataset and a ready-to-run model of realistic size.

use qnbm_core::dataset::{build_windows, synth_generate, SynthSpec, WindowConfig, WindowedDataset};
use qnbm_core::model::{QnbmConfig, QnbmParams};
use qnbm_core::numkit::RngState;

pub fn bench_dataset(n_days: usize) -> WindowedDataset {
    let spec = SynthSpec { seed: 99, ..SynthSpec::default() };
    let frame = synth_generate(&spec, n_days).unwrap();
    build_windows(&frame, &WindowConfig::default()).unwrap()
}

pub fn bench_model(dataset: &WindowedDataset) -> QnbmParams {
    let mut rng = RngState::seed_from(1);
    QnbmParams::init(QnbmConfig::default(), dataset, &mut rng).unwrap()
}
