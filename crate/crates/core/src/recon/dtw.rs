use alloc::vec;

use super::ReconError;

/// Dynamic time warping between two code sequences with 0/1 substitution
/// cost and steps (1,0), (0,1), (1,1).
pub fn loss_dtw<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64, ReconError> {
    if a.is_empty() || b.is_empty() {
        return Err(ReconError::EmptySequence);
    }
    let m = b.len();
    let mut prev = vec![u32::MAX; m];
    let mut cur = vec![0u32; m];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            let cost = u32::from(x != y);
            let best = if i == 0 && j == 0 {
                0
            } else {
                let up = prev[j];
                let left = if j > 0 { cur[j - 1] } else { u32::MAX };
                let diag = if j > 0 { prev[j - 1] } else { u32::MAX };
                up.min(left).min(diag)
            };
            cur[j] = best + cost;
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    Ok(f64::from(prev[m - 1]))
}
