//! Point-to-model deviation and scoring against ground truth.

mod export;
mod score;
mod surface;

pub use export::{heatmap_image, ramp, write_deviation_csv, write_heatmap_png, HEATMAP_MAX};
pub use score::{
    compare_elements, compare_to_truth, greedy_match, ClassScore, MatchTolerances, MatchedPair, PairTest, ScoreCard,
};
pub use surface::{deviation, percentile, DeviationStats, Face, FaceShape, ModelSurfaces};

#[cfg(test)]
mod tests;
