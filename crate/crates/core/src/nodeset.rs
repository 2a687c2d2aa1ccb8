use std::fmt;

/// A subset of the nodes of a space, stored as a membership mask.
#[derive(Clone, PartialEq, Eq)]
pub struct NodeSet {
    mask: Vec<bool>,
    count: usize,
}

impl NodeSet {
    pub fn empty(n: usize) -> Self {
        Self { mask: vec![false; n], count: 0 }
    }

    pub fn full(n: usize) -> Self {
        Self { mask: vec![true; n], count: n }
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        let count = mask.iter().filter(|&&b| b).count();
        Self { mask, count }
    }

    pub fn from_indices(n: usize, ids: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(n);
        for i in ids {
            s.insert(i);
        }
        s
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> bool) -> Self {
        Self::from_mask((0..n).map(f).collect())
    }

    /// Size of the ambient node set.
    pub fn universe(&self) -> usize {
        self.mask.len()
    }

    /// Number of members.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn insert(&mut self, i: usize) -> bool {
        if self.mask[i] {
            return false;
        }
        self.mask[i] = true;
        self.count += 1;
        true
    }

    pub fn remove(&mut self, i: usize) -> bool {
        if !self.mask[i] {
            return false;
        }
        self.mask[i] = false;
        self.count -= 1;
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn union(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a && !b)
    }

    pub fn complement(&self) -> Self {
        Self::from_mask(self.mask.iter().map(|&b| !b).collect())
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !(a && b))
    }

    fn zip(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Self {
        assert_eq!(self.mask.len(), other.mask.len(), "node sets over different spaces");
        Self::from_mask(self.mask.iter().zip(&other.mask).map(|(&a, &b)| f(a, b)).collect())
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeSet({} of {})", self.count, self.mask.len())
    }
}
