use crate::error::{Error, Result};

/// Partition of a sequence's frames into `k` contiguous, disjoint folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    /// `fold_of_frame[f]` is the fold id of frame `f`.
    pub fold_of_frame: Vec<usize>,
}

impl FoldPlan {
    /// Frame indices of fold `k`, ascending.
    pub fn frames_in(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_frame.len())
            .filter(|&f| self.fold_of_frame[f] == fold)
            .collect()
    }

    /// Frames used to train the auxiliary classifier of `fold`. With a
    /// single fold this is every frame.
    pub fn training_frames_for(&self, fold: usize) -> Vec<usize> {
        if self.k == 1 {
            return (0..self.fold_of_frame.len()).collect();
        }
        (0..self.fold_of_frame.len())
            .filter(|&f| self.fold_of_frame[f] != fold)
            .collect()
    }
}

/// Splits `frames` into `k` contiguous chunks; the first `frames % k` chunks
/// get one extra frame.
pub fn make_fold_plan(frames: usize, k: usize) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    if k > frames {
        return Err(Error::InvalidArgument(format!("K={k} exceeds frame count {frames}")));
    }
    let base = frames / k;
    let extra = frames % k;
    let mut fold_of_frame = Vec::with_capacity(frames);
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        fold_of_frame.extend(std::iter::repeat(fold).take(size));
    }
    Ok(FoldPlan { k, fold_of_frame })
}
