//! Index sets over the flat parameter space, plus small pixel-grid types
//! shared by the segmentation stack.

/// Set of flat parameter indices, stored sorted ascending without duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParamMask {
    indices: Vec<u32>,
}

impl ParamMask {
    pub fn empty() -> Self {
        Self { indices: Vec::new() }
    }

    /// All indices `0..p`.
    pub fn full(p: usize) -> Self {
        Self { indices: (0..p as u32).collect() }
    }

    /// Build from arbitrary indices; sorts and dedups.
    pub fn from_indices(mut indices: Vec<u32>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn contains(&self, idx: u32) -> bool {
        self.indices.binary_search(&idx).is_ok()
    }

    /// Sorted union of two masks.
    pub fn union(&self, other: &ParamMask) -> ParamMask {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.indices.len() && j < other.indices.len() {
            let (a, b) = (self.indices[i], other.indices[j]);
            if a < b {
                out.push(a);
                i += 1;
            } else if b < a {
                out.push(b);
                j += 1;
            } else {
                out.push(a);
                i += 1;
                j += 1;
            }
        }
        out.extend_from_slice(&self.indices[i..]);
        out.extend_from_slice(&other.indices[j..]);
        ParamMask { indices: out }
    }

    /// Insert indices in the given order until the mask reaches `cap` entries;
    /// returns how many were actually added. Later entries are dropped first,
    /// so callers pass candidates in priority order.
    pub fn extend_capped(&mut self, candidates: &[u32], cap: usize) -> usize {
        let mut added = 0;
        for &idx in candidates {
            if self.indices.len() >= cap {
                break;
            }
            if let Err(pos) = self.indices.binary_search(&idx) {
                self.indices.insert(pos, idx);
                added += 1;
            }
        }
        added
    }

    /// Dense membership table of size `p` for O(1) lookups.
    pub fn to_dense(&self, p: usize) -> Vec<bool> {
        let mut dense = vec![false; p];
        for &i in &self.indices {
            dense[i as usize] = true;
        }
        dense
    }
}

/// Binary pixel mask over an H×W grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    pub height: usize,
    pub width: usize,
    data: Vec<bool>,
}

impl PixelMask {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![false; height * width] }
    }

    pub fn from_data(height: usize, width: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn intersects(&self, other: &PixelMask) -> bool {
        self.data.iter().zip(&other.data).any(|(&a, &b)| a && b)
    }
}

/// Per-pixel class ids over an H×W grid (u8, so at most 256 classes).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    pub height: usize,
    pub width: usize,
    data: Vec<u8>,
}

impl ClassMap {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0; height * width] }
    }

    pub fn from_data(height: usize, width: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_merges_sorted() {
        let a = ParamMask::from_indices(vec![5, 1, 9]);
        let b = ParamMask::from_indices(vec![2, 9, 0]);
        assert_eq!(a.union(&b).indices(), &[0, 1, 2, 5, 9]);
    }

    #[test]
    fn extend_capped_respects_priority_order() {
        let mut m = ParamMask::from_indices(vec![10, 20]);
        let added = m.extend_capped(&[7, 30, 40, 50], 4);
        assert_eq!(added, 2);
        assert_eq!(m.indices(), &[7, 10, 20, 30]);
    }

    #[test]
    fn extend_capped_skips_duplicates_without_consuming_budget() {
        let mut m = ParamMask::from_indices(vec![1]);
        let added = m.extend_capped(&[1, 2, 3], 3);
        assert_eq!(added, 2);
        assert_eq!(m.indices(), &[1, 2, 3]);
    }
}
