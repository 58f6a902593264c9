//! Fidelity, variety and utility measures for synthetic image sets.

mod features;
mod frechet;
mod grid;
mod kl;
mod seg;
mod variety;
mod wilcoxon;

pub use features::{
    sidecar_path, FeatureSet, FeatureSidecar, Scale, Task, UMFT_HEADER_LEN, UMFT_MAGIC, UMFT_VERSION,
};
pub use frechet::{
    frechet_distance, gaussian_summary, sqrt_psd, FrechetDistance, GaussianSummary, NEGATIVE_EIG_TOL, RANK_TOL,
    RIDGE_SCALE,
};
pub use grid::{mm_fid, mm_std, normalize_grids, EvalGrid, GridKind};
pub use kl::{hu_histogram, kl_divergence, kl_hu_histogram, DEFAULT_BIN_WIDTH, DEFAULT_RANGE, SMOOTHING};
pub use seg::{dice, utility_score, DiceScore, UtilityScore};
pub use variety::{avg_image_compressed_size, compressed_size, AverageImageSize};
pub use wilcoxon::{average_ranks, wilcoxon_signed_rank, WilcoxonMethod, WilcoxonResult, EXACT_MAX_N, MIN_NONZERO_PAIRS};
