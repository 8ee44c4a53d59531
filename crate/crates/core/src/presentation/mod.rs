//! Posterior map products: summaries, exceedance probabilities, rank
//! distributions, classified maps scored by true classification
//! probability, and file renderings.

mod classify;
mod render;
mod summary;

pub use classify::{
    classify, pooled_draws, quantile_partition, select_granularity, select_k, ClassifiedMap, Granularity, Partition,
};
pub use render::{
    default_palette, read_palette, render, write_palette, Palette, RenderOutputs, Rgb, NODATA_RGB,
};
pub use summary::{
    exceedance, export_ridgeline, rank_distribution, read_ridgeline, summarize, write_classified_csv,
    write_exceedance_csv, write_rank_csv, write_summary_csv, RankDistribution, UnitSummary,
};
