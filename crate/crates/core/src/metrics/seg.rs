use serde::Serialize;

use super::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};
use crate::error::{check_dims, Error, Result};
use crate::image::SegMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiceScore {
    pub value: f64,
    /// Neither mask contains the label; `value` is reported as 1.0.
    pub both_empty: bool,
}

/// `2|A ∩ B| / (|A| + |B|)` over the pixels carrying `label`.
pub fn dice(a: &SegMask, b: &SegMask, label: u8) -> Result<DiceScore> {
    check_dims(a.dims(), b.dims())?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        let (ia, ib) = (x == label, y == label);
        na += usize::from(ia);
        nb += usize::from(ib);
        inter += usize::from(ia && ib);
    }
    if na + nb == 0 {
        return Ok(DiceScore {
            value: 1.0,
            both_empty: true,
        });
    }
    Ok(DiceScore {
        value: 2.0 * inter as f64 / (na + nb) as f64,
        both_empty: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilityScore {
    /// Mean of `augmented - baseline` per case.
    pub mean_delta: f64,
    pub p_value: f64,
    /// Every paired difference was zero; the test is undefined and `p_value` is 1.
    pub degenerate: bool,
    pub test: Option<WilcoxonResult>,
}

/// Downstream segmentation gain from adding synthetic data, with a paired significance test.
pub fn utility_score(dice_augmented: &[f64], dice_baseline: &[f64]) -> Result<UtilityScore> {
    if dice_augmented.len() != dice_baseline.len() {
        return Err(Error::Parameter(format!(
            "paired Dice lists differ in length ({} vs {})",
            dice_augmented.len(),
            dice_baseline.len()
        )));
    }
    if dice_augmented.is_empty() {
        return Err(Error::InsufficientData("no paired Dice scores".into()));
    }
    let n = dice_augmented.len() as f64;
    let mean_delta = dice_augmented
        .iter()
        .zip(dice_baseline)
        .map(|(a, b)| a - b)
        .sum::<f64>()
        / n;
    if dice_augmented.iter().zip(dice_baseline).all(|(a, b)| a == b) {
        return Ok(UtilityScore {
            mean_delta: 0.0,
            p_value: 1.0,
            degenerate: true,
            test: None,
        });
    }
    let test = wilcoxon_signed_rank(dice_augmented, dice_baseline)?;
    Ok(UtilityScore {
        mean_delta,
        p_value: test.p_two_sided,
        degenerate: false,
        test: Some(test),
    })
}
