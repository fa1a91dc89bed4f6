//! Data ingest, configuration, experiment orchestration and artifact emission.

mod artifacts;
mod config;
mod experiment;
mod mnist;

pub use artifacts::{
    format_sig6, image_grid, write_file, CsvTable, GrayImage, Manifest, GRID_SIDE,
};
pub use config::{
    parse_regime, parse_source_mode, regime_name, source_mode_name, train_config_from_kv,
    train_config_to_kv, KvConfig,
};
pub use experiment::{
    eval_seed, experiment_train_config, load_or_train_classifier, median, run_comparison,
    run_sweep, sample_grid, sweep_summary, sweep_summary_table, sweep_table, CellOutput,
    ComparisonCell, ComparisonConfig, ComparisonResult, Digits, ExperimentData, SweepConfig,
    SweepPoint, SweepRow, SWEEP_HEADER,
};
pub use mnist::{
    encode_idx, filter_digit, load_mnist_idx, load_split, parse_idx_images, parse_idx_labels,
    pool_2x2, MnistSet, Split, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, RAW_SIDE, SIDE,
};
