use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Base-classifier scores at every grid node of one level of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub frame_index: usize,
    pub level: usize,
    pub cols: usize,
    pub rows: usize,
    pub data: Vec<f64>,
}

impl ScoreMap {
    pub fn new(frame_index: usize, level: usize, cols: usize, rows: usize) -> Self {
        ScoreMap {
            frame_index,
            level,
            cols,
            rows,
            data: vec![0.0; cols * rows],
        }
    }

    #[inline]
    pub fn at(&self, gx: usize, gy: usize) -> f64 {
        self.data[gy * self.cols + gx]
    }

    /// Score at a possibly out-of-grid node.
    #[inline]
    pub fn get(&self, gx: i64, gy: i64) -> Option<f64> {
        if gx < 0 || gy < 0 || gx >= self.cols as i64 || gy >= self.rows as i64 {
            None
        } else {
            Some(self.data[gy as usize * self.cols + gx as usize])
        }
    }
}

/// Score maps keyed by frame. With a capacity, only the most recent
/// `capacity` frames are kept.
#[derive(Debug, Clone, Default)]
pub struct ScoreMapStore {
    capacity: Option<usize>,
    frames: BTreeMap<usize, Vec<ScoreMap>>,
}

impl ScoreMapStore {
    pub fn unbounded() -> Self {
        ScoreMapStore {
            capacity: None,
            frames: BTreeMap::new(),
        }
    }

    pub fn with_capacity(frames: usize) -> Self {
        ScoreMapStore {
            capacity: Some(frames.max(1)),
            frames: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, frame_index: usize, maps: Vec<ScoreMap>) {
        self.frames.insert(frame_index, maps);
        if let Some(cap) = self.capacity {
            while self.frames.len() > cap {
                self.frames.pop_first();
            }
        }
    }

    pub fn get(&self, frame_index: usize, level: usize) -> Result<&ScoreMap> {
        self.frames
            .get(&frame_index)
            .and_then(|maps| maps.get(level))
            .ok_or(Error::MissingScoreMap {
                frame: frame_index,
                level,
            })
    }

    pub fn frames_held(&self) -> usize {
        self.frames.len()
    }

    pub fn contains(&self, frame_index: usize) -> bool {
        self.frames.contains_key(&frame_index)
    }

    pub fn frame_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.frames.keys().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_retention_evicts_oldest() {
        let mut s = ScoreMapStore::with_capacity(3);
        for f in 0..6 {
            s.insert(f, vec![ScoreMap::new(f, 0, 2, 2)]);
            assert!(s.frames_held() <= 3);
        }
        assert_eq!(s.frame_indices().collect::<Vec<_>>(), vec![3, 4, 5]);
        assert!(matches!(s.get(2, 0), Err(Error::MissingScoreMap { frame: 2, level: 0 })));
        assert!(s.get(5, 1).is_err());
    }

    #[test]
    fn out_of_grid_reads() {
        let mut m = ScoreMap::new(0, 0, 3, 2);
        m.data[5] = 4.0;
        assert_eq!(m.get(2, 1), Some(4.0));
        assert_eq!(m.get(3, 1), None);
        assert_eq!(m.get(-1, 0), None);
    }
}
