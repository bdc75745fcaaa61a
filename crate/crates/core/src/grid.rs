//! Regular lattice over an axis-aligned box, with dense bitmap point sets
//! and the spatial ball query used by the successor computation.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Regular lattice over `[lower, upper]` with a fixed number of points per
/// axis. Both box corners are lattice points, so closed faces are
/// representable. `h` is the covering radius: every point of the box lies
/// within `h` of some lattice point (half the cell diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    points_per_axis: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    total: usize,
    h: f64,
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points_per_axis: Vec<usize>) -> Result<Arc<Grid>> {
        let n = lower.len();
        if n == 0 || upper.len() != n || points_per_axis.len() != n {
            return Err(Error::parameter(
                "grid: dimension mismatch or zero dimension",
            ));
        }
        for i in 0..n {
            if !lower[i].is_finite() || !upper[i].is_finite() || lower[i] >= upper[i] {
                return Err(Error::parameter(format!(
                    "grid: axis {i} needs finite lower < upper, got [{}, {}]",
                    lower[i], upper[i]
                )));
            }
            if points_per_axis[i] < 2 {
                return Err(Error::parameter(format!(
                    "grid: axis {i} needs at least 2 points"
                )));
            }
        }
        let spacing: Vec<f64> = (0..n)
            .map(|i| (upper[i] - lower[i]) / (points_per_axis[i] - 1) as f64)
            .collect();
        let mut strides = vec![0usize; n];
        let mut acc = 1usize;
        for i in (0..n).rev() {
            strides[i] = acc;
            acc = acc
                .checked_mul(points_per_axis[i])
                .ok_or_else(|| Error::parameter("grid: total point count overflows"))?;
        }
        let h = 0.5 * spacing.iter().map(|s| s * s).sum::<f64>().sqrt();
        Ok(Arc::new(Grid {
            lower,
            upper,
            points_per_axis,
            spacing,
            strides,
            total: acc,
            h,
        }))
    }

    /// Unit box `[0,1]^n` with the same resolution on every axis.
    pub fn unit_box(n: usize, points_per_axis: usize) -> Result<Arc<Grid>> {
        Grid::new(vec![0.0; n], vec![1.0; n], vec![points_per_axis; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn points_per_axis(&self) -> &[usize] {
        &self.points_per_axis
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    /// Covering radius: half the cell diagonal.
    pub fn covering_radius(&self) -> f64 {
        self.h
    }

    /// Writes the coordinates of the lattice point `index` into `out`.
    pub fn point_of(&self, index: usize, out: &mut [f64]) {
        debug_assert!(index < self.total);
        let mut rest = index;
        for i in 0..self.dim() {
            let j = rest / self.strides[i];
            rest %= self.strides[i];
            out[i] = self.lower[i] + j as f64 * self.spacing[i];
        }
    }

    pub fn point_coords(&self, index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.point_of(index, &mut out);
        out
    }

    /// Nearest-lattice-point index of `x`. Errors when `x` lies outside the
    /// box (beyond half a cell of the closest face point counts as outside).
    pub fn index_of(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim() {
            return Err(Error::usage("index_of: dimension mismatch"));
        }
        let mut index = 0usize;
        for i in 0..self.dim() {
            if !x[i].is_finite() || x[i] < self.lower[i] || x[i] > self.upper[i] {
                return Err(Error::domain(format!(
                    "index_of: component {i} = {} outside [{}, {}]",
                    x[i], self.lower[i], self.upper[i]
                )));
            }
            let j = ((x[i] - self.lower[i]) / self.spacing[i]).round() as usize;
            let j = j.min(self.points_per_axis[i] - 1);
            index += j * self.strides[i];
        }
        Ok(index)
    }

    /// Visits every lattice point within Euclidean distance `radius` of
    /// `center` (which may lie outside the box). Stops early when the
    /// visitor returns `true`; the return value reports whether that
    /// happened.
    pub fn visit_ball(
        &self,
        center: &[f64],
        radius: f64,
        mut visit: impl FnMut(usize) -> bool,
    ) -> bool {
        debug_assert!(radius >= 0.0);
        let n = self.dim();
        debug_assert_eq!(center.len(), n);
        // One cell of slack on each side; the exact distance predicate below
        // is the arbiter.
        let mut lo = [0usize; MAX_DIM];
        let mut hi = [0usize; MAX_DIM];
        assert!(n <= MAX_DIM, "grid dimension above supported maximum");
        for i in 0..n {
            let lo_f = ((center[i] - radius - self.lower[i]) / self.spacing[i]).floor();
            let hi_f = ((center[i] + radius - self.lower[i]) / self.spacing[i]).ceil();
            if hi_f < 0.0 || lo_f > (self.points_per_axis[i] - 1) as f64 {
                return false;
            }
            lo[i] = lo_f.max(0.0) as usize;
            hi[i] = (hi_f as usize).min(self.points_per_axis[i] - 1);
        }
        let r2 = radius * radius;
        let mut idx = lo;
        loop {
            let mut d2 = 0.0;
            let mut linear = 0usize;
            for i in 0..n {
                let c = self.lower[i] + idx[i] as f64 * self.spacing[i];
                let d = c - center[i];
                d2 += d * d;
                linear += idx[i] * self.strides[i];
            }
            if d2 <= r2 && visit(linear) {
                return true;
            }
            // odometer increment
            let mut axis = n;
            loop {
                if axis == 0 {
                    return false;
                }
                axis -= 1;
                if idx[axis] < hi[axis] {
                    idx[axis] += 1;
                    break;
                }
                idx[axis] = lo[axis];
            }
        }
    }

    /// All lattice points within `radius` of `center`, as a point set.
    pub fn ball_query(self: &Arc<Grid>, center: &[f64], radius: f64) -> Result<PointSet> {
        if radius < 0.0 || !radius.is_finite() {
            return Err(Error::parameter(format!(
                "ball_query: invalid radius {radius}"
            )));
        }
        let mut set = PointSet::empty(self.clone());
        self.visit_ball(center, radius, |i| {
            set.insert(i);
            false
        });
        Ok(set)
    }
}

const MAX_DIM: usize = 8;

/// Subset of a grid's lattice points, stored as a dense bitmap.
///
/// Binary operations panic when the operands were built over different
/// grids; that is a programming error, not a data condition.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    grid: Arc<Grid>,
    words: Vec<u64>,
}

impl PointSet {
    pub fn empty(grid: Arc<Grid>) -> PointSet {
        let words = vec![0u64; grid.len().div_ceil(64)];
        PointSet { grid, words }
    }

    pub fn full(grid: Arc<Grid>) -> PointSet {
        let mut set = PointSet::empty(grid);
        set.words.fill(!0u64);
        set.mask_tail();
        set
    }

    pub fn from_indices(grid: Arc<Grid>, indices: impl IntoIterator<Item = usize>) -> PointSet {
        let mut set = PointSet::empty(grid);
        for i in indices {
            set.insert(i);
        }
        set
    }

    /// Builds a set by evaluating a predicate at every lattice point.
    pub fn from_predicate(grid: &Arc<Grid>, pred: impl Fn(&[f64]) -> bool) -> PointSet {
        let mut set = PointSet::empty(grid.clone());
        let mut buf = vec![0.0; grid.dim()];
        for i in 0..grid.len() {
            grid.point_of(i, &mut buf);
            if pred(&buf) {
                set.insert(i);
            }
        }
        set
    }

    fn mask_tail(&mut self) {
        let n = self.grid.len();
        if n % 64 != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << (n % 64)) - 1;
            }
        }
    }

    fn check_same_grid(&self, other: &PointSet) {
        assert!(
            self.grid == other.grid,
            "point-set operation on sets from different grids"
        );
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.words[index / 64] & (1u64 << (index % 64)) != 0
    }

    #[inline]
    pub fn insert(&mut self, index: usize) {
        debug_assert!(index < self.grid.len());
        self.words[index / 64] |= 1u64 << (index % 64);
    }

    #[inline]
    pub fn remove(&mut self, index: usize) {
        self.words[index / 64] &= !(1u64 << (index % 64));
    }

    pub fn cardinality(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn union_with(&mut self, other: &PointSet) {
        self.check_same_grid(other);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &PointSet) {
        self.check_same_grid(other);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn subtract(&mut self, other: &PointSet) {
        self.check_same_grid(other);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    pub fn union(&self, other: &PointSet) -> PointSet {
        let mut out = self.clone();
        out.union_with(other);
        out
    }

    pub fn intersection(&self, other: &PointSet) -> PointSet {
        let mut out = self.clone();
        out.intersect_with(other);
        out
    }

    pub fn difference(&self, other: &PointSet) -> PointSet {
        let mut out = self.clone();
        out.subtract(other);
        out
    }

    pub fn complement(&self) -> PointSet {
        let mut out = self.clone();
        for w in out.words.iter_mut() {
            *w = !*w;
        }
        out.mask_tail();
        out
    }

    pub fn is_subset_of(&self, other: &PointSet) -> bool {
        self.check_same_grid(other);
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    pub fn is_disjoint_from(&self, other: &PointSet) -> bool {
        self.check_same_grid(other);
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    /// Iterates set members in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }
}

/// One label code per lattice point.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelArray {
    grid: Arc<Grid>,
    codes: Vec<u8>,
}

impl LabelArray {
    pub fn filled(grid: Arc<Grid>, code: u8) -> LabelArray {
        let codes = vec![code; grid.len()];
        LabelArray { grid, codes }
    }

    pub fn from_codes(grid: Arc<Grid>, codes: Vec<u8>) -> Result<LabelArray> {
        if codes.len() != grid.len() {
            return Err(Error::usage(format!(
                "label array length {} does not match grid size {}",
                codes.len(),
                grid.len()
            )));
        }
        Ok(LabelArray { grid, codes })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn get(&self, index: usize) -> u8 {
        self.codes[index]
    }

    pub fn set(&mut self, index: usize, code: u8) {
        self.codes[index] = code;
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    /// Histogram over codes `0..=max_code`.
    pub fn counts(&self, max_code: u8) -> Vec<usize> {
        let mut counts = vec![0usize; max_code as usize + 1];
        for &c in &self.codes {
            counts[c as usize] += 1;
        }
        counts
    }
}
