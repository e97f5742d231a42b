//! Nested undersampling around significance-gated classification trees.
//!
//! Data with an imbalanced binary class *and* an imbalanced categorical
//! predictor (the nesting variable) are handled in two loops: the outer
//! loop undersamples the large level of the nesting variable to the size of
//! the small level, and the inner loop repeatedly undersamples the large
//! class, grows a tree, and scores it by balanced accuracy on the outer
//! sample. The best trees per outer sample are re-scored on the full data
//! and combined into ensembles.
//!
//! ```no_run
//! use nesprindt_core::{generator, nesprindt_run, RunConfig};
//!
//! let data = generator::generate(&generator::GeneratorConfig::default())?;
//! let cfg = RunConfig { outer_reps: 2, inner_reps: 20, ..RunConfig::default() };
//! let report = nesprindt_run(&data, &cfg)?;
//! println!("{}", report.best_by_outer);
//! # Ok::<(), nesprindt_core::Error>(())
//! ```

pub mod ctree;
pub mod dataset;
pub mod error;
pub mod export;
pub mod generator;
pub mod nesprindt;
pub mod prindt;
pub mod sampling;

pub use ctree::{grow_tree, render_tree, Tree, TreeParams};
pub use dataset::{Class, ClassLevels, ColumnKind, ColumnSchema, Dataset, RowIndexSet, RowRef};
pub use error::{Error, Result};
pub use nesprindt::{
    best_tree, heterogeneity_probe, nesprindt_run, Criterion, NesReport, Nesting, ProbeConfig,
    ProbeRecord, RunConfig, TreeRecord,
};
pub use prindt::{balanced_accuracy, Accuracy, Ensemble, ForbiddenCombination, ScoredTree};
pub use sampling::SeedStream;
