//! Frequency grids, empirical characteristic functions and complex fields on grids.
//!
//! A [`FrequencyGrid`] is a symmetric rectangular lattice with an odd number of
//! nodes per axis, so the origin is always a node and every node `u` has its
//! mirror `-u` on the grid. Nodes are stored row-major (last axis fastest); the
//! point reflection `u -> -u` maps linear index `i` to `len - 1 - i`.

use std::io::{self, Write};

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::targets::TargetModel;

/// Default cap on the number of grid nodes.
pub const DEFAULT_NODE_BUDGET: usize = 1 << 24;

/// Largest supported dimension.
pub const MAX_DIM: usize = 3;

/// `n` observations in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<T> {
    data: Vec<T>,
    n: usize,
    d: usize,
}

impl<T: Scalar> SampleSet<T> {
    /// Wraps a row-major `n x d` buffer. Entries must be finite and `1 <= d <= 3`.
    pub fn new(data: Vec<T>, d: usize) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::InvalidSamples(format!("dimension {d} outside 1..=3")));
        }
        if data.len() % d != 0 {
            return Err(Error::InvalidSamples(format!(
                "buffer of length {} is not a multiple of d = {d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidSamples(format!(
                "non-finite entry in observation {}",
                pos / d
            )));
        }
        let n = data.len() / d;
        Ok(Self { data, n, d })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(1);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        Self::new(rows.iter().flatten().copied().collect(), d)
    }

    pub fn empty(d: usize) -> Result<Self> {
        Self::new(Vec::new(), d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, j: usize) -> &[T] {
        &self.data[j * self.d..(j + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.d)
    }

    /// Values of one coordinate across all observations.
    pub fn column(&self, axis: usize) -> Vec<T> {
        self.rows().map(|r| r[axis]).collect()
    }

    /// Observations of `self` followed by those of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: other.d,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self::new(data, self.d)
    }

    /// Every observation translated by `shift`.
    pub fn shifted(&self, shift: &[T]) -> Result<Self> {
        if shift.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: shift.len(),
            });
        }
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| x + shift[i % self.d])
            .collect();
        Self::new(data, self.d)
    }

    /// Converts the scalar type.
    pub fn cast<S: Scalar>(&self) -> SampleSet<S> {
        SampleSet {
            data: self.data.iter().map(|x| S::c(x.to_f64_lossy())).collect(),
            n: self.n,
            d: self.d,
        }
    }
}

/// Regular symmetric lattice `[-U_1, U_1] x ... x [-U_d, U_d]` in frequency space.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid<T> {
    extent: Vec<T>,
    points: Vec<usize>,
    spacing: Vec<T>,
    len: usize,
}

impl<T: Scalar> FrequencyGrid<T> {
    pub fn new(extent: &[T], points_per_axis: &[usize]) -> Result<Self> {
        Self::with_budget(extent, points_per_axis, DEFAULT_NODE_BUDGET)
    }

    /// Builds the grid, rejecting it when the node count exceeds `budget`.
    pub fn with_budget(extent: &[T], points_per_axis: &[usize], budget: usize) -> Result<Self> {
        let d = extent.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::InvalidGrid(format!("dimension {d} outside 1..=3")));
        }
        if points_per_axis.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: points_per_axis.len(),
            });
        }
        for (&u, &m) in extent.iter().zip(points_per_axis) {
            if !(u > T::zero()) || !u.is_finite() {
                return Err(Error::InvalidGrid(format!("extent {u} must be positive and finite")));
            }
            if m < 3 || m % 2 == 0 {
                return Err(Error::InvalidGrid(format!(
                    "points per axis must be odd and at least 3, got {m}"
                )));
            }
        }
        let nodes: u128 = points_per_axis.iter().map(|&m| m as u128).product();
        if nodes > budget as u128 {
            return Err(Error::GridBudget { nodes, budget });
        }
        let spacing: Vec<T> = extent
            .iter()
            .zip(points_per_axis)
            .map(|(&u, &m)| (u + u) / T::from_usize_lossy(m - 1))
            .collect();
        if spacing.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
            return Err(Error::InvalidGrid("spacing underflows".into()));
        }
        Ok(Self {
            extent: extent.to_vec(),
            points: points_per_axis.to_vec(),
            spacing,
            len: nodes as usize,
        })
    }

    /// Grid with the given node spacing whose extent is the smallest multiple of
    /// the spacing covering `min_extent` on every axis.
    pub fn from_spacing(spacing: &[T], min_extent: &[T], budget: usize) -> Result<Self> {
        if spacing.len() != min_extent.len() {
            return Err(Error::DimensionMismatch {
                expected: spacing.len(),
                found: min_extent.len(),
            });
        }
        let mut extent = Vec::with_capacity(spacing.len());
        let mut points = Vec::with_capacity(spacing.len());
        for (&h, &u) in spacing.iter().zip(min_extent) {
            if !(h > T::zero()) || !(u > T::zero()) {
                return Err(Error::InvalidGrid("spacing and extent must be positive".into()));
            }
            let half = (u / h).ceil().to_usize().unwrap_or(usize::MAX / 4).max(1);
            if half > budget {
                return Err(Error::GridBudget {
                    nodes: 2 * half as u128 + 1,
                    budget,
                });
            }
            extent.push(h * T::from_usize_lossy(half));
            points.push(2 * half + 1);
        }
        Self::with_budget(&extent, &points, budget)
    }

    pub fn dim(&self) -> usize {
        self.extent.len()
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn extent(&self) -> &[T] {
        &self.extent
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn spacing(&self) -> &[T] {
        &self.spacing
    }

    /// Index of the origin along `axis`.
    pub fn axis_center(&self, axis: usize) -> usize {
        (self.points[axis] - 1) / 2
    }

    /// Coordinate of node `j` along `axis`: `(j - c) * spacing`, exactly antisymmetric about the center.
    #[inline]
    pub fn coord(&self, axis: usize, j: usize) -> T {
        let c = self.axis_center(axis);
        if j >= c {
            T::from_usize_lossy(j - c) * self.spacing[axis]
        } else {
            -(T::from_usize_lossy(c - j) * self.spacing[axis])
        }
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<T> {
        (0..self.points[axis]).map(|j| self.coord(axis, j)).collect()
    }

    /// Linear index of the origin.
    pub fn center_index(&self) -> usize {
        (self.len - 1) / 2
    }

    /// Linear index of the node `-u` for the node `u` at `index`.
    #[inline]
    pub fn mirror_index(&self, index: usize) -> usize {
        self.len - 1 - index
    }

    /// Multi-index of a linear index.
    pub fn multi_index(&self, mut index: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for axis in (0..self.dim()).rev() {
            out[axis] = index % self.points[axis];
            index /= self.points[axis];
        }
        out
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.points)
            .fold(0, |acc, (&j, &m)| acc * m + j)
    }

    /// Coordinates of the node at `index`.
    pub fn node(&self, index: usize) -> Vec<T> {
        let mi = self.multi_index(index);
        (0..self.dim()).map(|k| self.coord(k, mi[k])).collect()
    }

    /// Product of the spacings (volume element of the Riemann sum).
    pub fn cell_volume(&self) -> T {
        self.spacing.iter().fold(T::one(), |acc, &h| acc * h)
    }

    /// True when the node lies on the outermost shell of the lattice.
    pub fn is_boundary(&self, index: usize) -> bool {
        let mi = self.multi_index(index);
        (0..self.dim()).any(|k| mi[k] == 0 || mi[k] + 1 == self.points[k])
    }

    /// Largest extent over the axes.
    pub fn max_extent(&self) -> T {
        self.extent.iter().fold(T::zero(), |a, &b| a.max(b))
    }

    pub fn cast<S: Scalar>(&self) -> FrequencyGrid<S> {
        FrequencyGrid {
            extent: self.extent.iter().map(|x| S::c(x.to_f64_lossy())).collect(),
            points: self.points.clone(),
            spacing: self.spacing.iter().map(|x| S::c(x.to_f64_lossy())).collect(),
            len: self.len,
        }
    }
}

/// Convenience constructor mirroring [`FrequencyGrid::new`].
pub fn make_grid<T: Scalar>(extent: &[T], points_per_axis: &[usize]) -> Result<FrequencyGrid<T>> {
    FrequencyGrid::new(extent, points_per_axis)
}

/// Complex values on every node of a [`FrequencyGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T> {
    grid: FrequencyGrid<T>,
    values: Vec<Complex<T>>,
}

impl<T: Scalar> GridField<T> {
    pub fn new(grid: FrequencyGrid<T>, values: Vec<Complex<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: FrequencyGrid<T>) -> Self {
        let values = vec![Complex::new(T::zero(), T::zero()); grid.len()];
        Self { grid, values }
    }

    /// Field computed node-by-node from coordinates.
    pub fn from_fn<F>(grid: FrequencyGrid<T>, f: F) -> Self
    where
        F: Fn(&[T]) -> Complex<T> + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| f(&grid.node(i)))
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &FrequencyGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }

    pub fn moduli(&self) -> Vec<T> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    pub fn value_at_origin(&self) -> Complex<T> {
        self.values[self.grid.center_index()]
    }

    /// Writes `u_1,...,u_d,re,im` rows in node order, with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let d = self.grid.dim();
        let header: Vec<String> = (1..=d).map(|k| format!("u_{k}")).collect();
        writeln!(out, "{},re,im", header.join(","))?;
        for (i, z) in self.values.iter().enumerate() {
            for u in self.grid.node(i) {
                write!(out, "{u},")?;
            }
            writeln!(out, "{},{}", z.re, z.im)?;
        }
        Ok(())
    }
}

/// Rows of the lattice (all axes but the last) processed per parallel task.
const ECF_ROW_BLOCK: usize = 4;

/// Empirical characteristic function `(1/n) sum_j exp(i<u, X_j>)` on every grid node.
///
/// Each node is reduced over the samples in their stored order with Kahan
/// compensation, so the output does not depend on the worker count. Only the
/// half-space up to the origin is computed; the other half is filled by
/// conjugate mirroring and the origin is set to exactly `1 + 0i`.
pub fn ecf_evaluate<T: Scalar>(samples: &SampleSet<T>, grid: &FrequencyGrid<T>) -> Result<GridField<T>> {
    if samples.d() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            found: samples.d(),
        });
    }
    if samples.is_empty() {
        return Err(Error::InvalidSamples("empty sample set".into()));
    }
    let d = grid.dim();
    let inner_len = grid.points()[d - 1];
    let center = grid.center_index();
    // rows of the leading axes that intersect the half-space [0, center]
    let half_rows = center / inner_len + 1;
    let inner_coords = grid.axis_coords(d - 1);
    let inv_n = T::one() / T::from_usize_lossy(samples.n());

    let blocks: Vec<Vec<Complex<T>>> = (0..half_rows)
        .step_by(ECF_ROW_BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|row_start| {
            let row_end = (row_start + ECF_ROW_BLOCK).min(half_rows);
            let rows = row_end - row_start;
            // per-row leading coordinates
            let lead_coords: Vec<Vec<T>> = (row_start..row_end)
                .map(|r| {
                    let mi = grid.multi_index(r * inner_len);
                    (0..d - 1).map(|k| grid.coord(k, mi[k])).collect()
                })
                .collect();
            let size = rows * inner_len;
            let mut sum_re = vec![T::zero(); size];
            let mut sum_im = vec![T::zero(); size];
            let mut comp_re = vec![T::zero(); size];
            let mut comp_im = vec![T::zero(); size];
            let mut inner = vec![(T::zero(), T::zero()); inner_len];
            for x in samples.rows() {
                let x_last = x[d - 1];
                for (slot, &u) in inner.iter_mut().zip(&inner_coords) {
                    let (s, c) = (u * x_last).sin_cos();
                    *slot = (c, s);
                }
                for (r, lead) in lead_coords.iter().enumerate() {
                    let phase = lead
                        .iter()
                        .zip(x)
                        .fold(T::zero(), |acc, (&u, &xi)| acc + u * xi);
                    let (ls, lc) = phase.sin_cos();
                    let base = r * inner_len;
                    for (j, &(c, s)) in inner.iter().enumerate() {
                        let re = lc * c - ls * s;
                        let im = lc * s + ls * c;
                        let k = base + j;
                        let y = re - comp_re[k];
                        let t = sum_re[k] + y;
                        comp_re[k] = (t - sum_re[k]) - y;
                        sum_re[k] = t;
                        let y = im - comp_im[k];
                        let t = sum_im[k] + y;
                        comp_im[k] = (t - sum_im[k]) - y;
                        sum_im[k] = t;
                    }
                }
            }
            sum_re
                .into_iter()
                .zip(sum_im)
                .map(|(re, im)| Complex::new(re * inv_n, im * inv_n))
                .collect()
        })
        .collect();

    let mut values: Vec<Complex<T>> = Vec::with_capacity(grid.len());
    for block in blocks {
        values.extend(block);
    }
    values.truncate(center + 1);
    values[center] = Complex::new(T::one(), T::zero());
    values.resize(grid.len(), Complex::new(T::zero(), T::zero()));
    for i in 0..center {
        let m = grid.mirror_index(i);
        values[m] = values[i].conj();
    }
    GridField::new(grid.clone(), values)
}

/// The analytic characteristic function of `model` sampled on every grid node.
pub fn cf_evaluate<T: Scalar>(model: &TargetModel, grid: &FrequencyGrid<T>) -> Result<GridField<T>> {
    if model.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            found: model.dim(),
        });
    }
    let g64: FrequencyGrid<f64> = grid.cast();
    let center = grid.center_index();
    let mut values: Vec<Complex<T>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let z = model.cf(&g64.node(i));
            Complex::new(T::c(z.re), T::c(z.im))
        })
        .collect();
    values[center] = Complex::new(T::one(), T::zero());
    GridField::new(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn one_dimensional_grid_nodes() {
        let g = make_grid(&[1.0_f64], &[3]).unwrap();
        assert_eq!(g.axis_coords(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(g.center_index(), 1);
    }

    #[test]
    fn two_dimensional_grid_nodes() {
        let g = make_grid(&[2.0_f64, 2.0], &[5, 5]).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(g.spacing(), &[1.0, 1.0]);
        assert_eq!(g.node(g.center_index()), vec![0.0, 0.0]);
        assert_eq!(g.node(0), vec![-2.0, -2.0]);
        assert_eq!(g.node(24), vec![2.0, 2.0]);
        for i in 0..25 {
            let u = g.node(i);
            let v = g.node(g.mirror_index(i));
            assert_eq!(u[0], -v[0]);
            assert_eq!(u[1], -v[1]);
        }
    }

    #[test]
    fn grid_guards() {
        assert!(matches!(
            make_grid(&[1.0_f64], &[(1 << 25) + 1]),
            Err(Error::GridBudget { .. })
        ));
        assert!(matches!(make_grid(&[1.0_f64], &[4]), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid(&[0.0_f64], &[5]), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid(&[-1.0_f64], &[5]), Err(Error::InvalidGrid(_))));
        assert!(make_grid::<f64>(&[1.0, 1.0, 1.0, 1.0], &[3, 3, 3, 3]).is_err());
    }

    #[test]
    fn from_spacing_rounds_extent_up() {
        let g = FrequencyGrid::from_spacing(&[0.25_f64], &[1.1], DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(g.points(), &[11]);
        assert_eq!(g.extent(), &[1.25]);
    }

    #[test]
    fn boundary_nodes() {
        let g = make_grid(&[1.0_f64, 1.0], &[3, 3]).unwrap();
        let boundary: Vec<bool> = (0..9).map(|i| g.is_boundary(i)).collect();
        assert_eq!(boundary.iter().filter(|b| !**b).count(), 1);
        assert!(!g.is_boundary(4));
    }

    #[test]
    fn ecf_two_point_cancellation() {
        let s = SampleSet::new(vec![0.0_f64, PI], 1).unwrap();
        let g = make_grid(&[1.0_f64], &[3]).unwrap();
        let f = ecf_evaluate(&s, &g).unwrap();
        assert_eq!(f.value_at_origin(), Complex::new(1.0, 0.0));
        assert!(f.values()[2].norm() < 1e-15);
        assert!(f.values()[0].norm() < 1e-15);
    }

    #[test]
    fn ecf_single_sample_is_pure_phase() {
        let s = SampleSet::new(vec![0.7_f64, -1.3], 2).unwrap();
        let g = make_grid(&[3.0_f64, 2.0], &[7, 9]).unwrap();
        let f = ecf_evaluate(&s, &g).unwrap();
        for (i, z) in f.values().iter().enumerate() {
            let u = g.node(i);
            let expected = Complex::new(0.0, u[0] * 0.7 - u[1] * 1.3).exp();
            assert!((z - expected).norm() < 1e-14);
            assert!((z.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn ecf_rejects_bad_inputs() {
        let g = make_grid(&[1.0_f64, 1.0], &[3, 3]).unwrap();
        let s = SampleSet::new(vec![0.0_f64], 1).unwrap();
        assert!(matches!(ecf_evaluate(&s, &g), Err(Error::DimensionMismatch { .. })));
        let e = SampleSet::<f64>::empty(2).unwrap();
        assert!(ecf_evaluate(&e, &g).is_err());
        assert!(SampleSet::new(vec![f64::NAN], 1).is_err());
        assert!(SampleSet::new(vec![1.0_f64; 4], 4).is_err());
    }

    #[test]
    fn ecf_matches_direct_sum_in_3d() {
        let data: Vec<f64> = (0..30).map(|k| ((k * 37 % 11) as f64 - 5.0) * 0.31).collect();
        let s = SampleSet::new(data, 3).unwrap();
        let g = make_grid(&[1.5_f64, 1.0, 2.0], &[5, 3, 7]).unwrap();
        let f = ecf_evaluate(&s, &g).unwrap();
        for i in 0..g.len() {
            let u = g.node(i);
            let direct: Complex<f64> = s
                .rows()
                .map(|x| Complex::new(0.0, u[0] * x[0] + u[1] * x[1] + u[2] * x[2]).exp())
                .sum::<Complex<f64>>()
                / 10.0;
            assert!((f.values()[i] - direct).norm() < 1e-14, "node {i}");
        }
    }

    #[test]
    fn f32_ecf_tracks_f64() {
        let data: Vec<f64> = (0..500).map(|k| (k as f64 * 0.618).sin() * 3.0).collect();
        let s64 = SampleSet::new(data, 1).unwrap();
        let s32: SampleSet<f32> = s64.cast();
        let g64 = make_grid(&[4.0_f64], &[41]).unwrap();
        let f64v = ecf_evaluate(&s64, &g64).unwrap();
        let f32v = ecf_evaluate(&s32, &g64.cast::<f32>()).unwrap();
        for (a, b) in f64v.values().iter().zip(f32v.values()) {
            assert!((a.re - b.re as f64).abs() < 1e-5);
            assert!((a.im - b.im as f64).abs() < 1e-5);
        }
    }

    #[test]
    fn csv_dump_layout() {
        let s = SampleSet::new(vec![0.5_f64], 1).unwrap();
        let g = make_grid(&[1.0_f64], &[3]).unwrap();
        let f = ecf_evaluate(&s, &g).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "u_1,re,im");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "0,1,0");
    }
}
