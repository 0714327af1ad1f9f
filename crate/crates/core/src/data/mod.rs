//! Series containers, CSV ingestion, windowing and synthetic generators.

mod dataset;
mod synth;
mod window;

pub use dataset::{load_csv, write_csv, SeriesDataset};
pub use synth::{corpus_windows, synth_corpus, FamilyKind, FamilyRanges, Sinusoid, SynthFamily, SynthSample};
pub use window::{
    few_shot_subset, make_windows, split_windows, Norm, Segments, SplitSpec, SplitWindows, WindowSample, NORM_EPS,
};
