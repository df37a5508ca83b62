//! Datasets, training, evaluation and inference.

mod config;
mod dataset;
mod infer;
mod metrics;
mod train;

pub use config::{ExperimentConfig, Task};
pub use dataset::{
    bumpy_radius, bumpy_sphere, gen_synthetic, ingest_registered_corpus, make_split, part_budgets,
    sample_part, save_template, stream_rng, Dataset, DatasetManifest, IngestOptions, ManifestEntry,
    Split, SplitMode, TemplateRecord, MANIFEST_FILE, MAX_VAL,
};
pub use infer::{infer_mesh, load_coords, ResolutionSpec};
pub use metrics::{
    bci_template, eval_samples, evaluate, evaluate_on, mean_vertex_error, predict_template,
    run_bci_baseline, MeshError, MetricsReport, METRIC_NAME,
};
pub use train::{
    run_ablation_no_fusion, train_model, train_reconstruction, train_superres, AblationReport,
    EpochLog, TrainOutcome, CHECKPOINT_FILE,
};
