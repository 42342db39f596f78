//! Uniform tensor grids with homogeneous Dirichlet closure.
//!
//! A [`Grid`] stores only interior nodes of the box `Ω = Π [lower_i, upper_i]`;
//! the boundary values are implicitly zero. Quadrature is the product
//! trapezoid rule on that node set, which reduces to `h^d · Σ u_j` once the
//! boundary terms vanish. Nodes are laid out row-major with the last axis
//! contiguous.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("axis {axis}: bounds [{lower}, {upper}] do not form a nonempty interval")]
    Bounds { axis: usize, lower: f64, upper: f64 },
    #[error("axis {axis}: at least one interior node is required")]
    NoNodes { axis: usize },
    #[error("field has {got} values, grid has {expected} nodes")]
    Length { expected: usize, got: usize },
    #[error("field value at node {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("region does not fit strictly inside the computational box: {0}")]
    RegionOutside(String),
    #[error("invalid region: {0}")]
    Region(String),
    #[error("band width {width} is smaller than the grid spacing {spacing}")]
    BandTooNarrow { width: f64, spacing: f64 },
    #[error("boundary band around the region is empty; the region is under-resolved")]
    EmptyBand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    nodes: Vec<usize>,
    spacing: Vec<f64>,
}

impl Grid {
    pub fn new(lower: &[f64], upper: &[f64], nodes: &[usize]) -> Result<Self, GridError> {
        let dim = lower.len();
        if !(1..=2).contains(&dim) {
            return Err(GridError::Dimension(dim));
        }
        if upper.len() != dim || nodes.len() != dim {
            return Err(GridError::Dimension(upper.len().max(nodes.len())));
        }
        let mut spacing = Vec::with_capacity(dim);
        for axis in 0..dim {
            let (lo, hi) = (lower[axis], upper[axis]);
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(GridError::Bounds { axis, lower: lo, upper: hi });
            }
            if nodes[axis] == 0 {
                return Err(GridError::NoNodes { axis });
            }
            spacing.push((hi - lo) / (nodes[axis] + 1) as f64);
        }
        Ok(Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            nodes: nodes.to_vec(),
            spacing,
        })
    }

    /// One-dimensional grid on `[lower, upper]` with `nodes` interior points.
    pub fn line(lower: f64, upper: f64, nodes: usize) -> Result<Self, GridError> {
        Self::new(&[lower], &[upper], &[nodes])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight of every interior node, `Π h_i`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Lebesgue measure of Ω.
    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).product()
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + (i + 1) as f64 * self.spacing[axis]
    }

    /// Multi-index of a flat node index.
    pub fn multi_index(&self, index: usize) -> Vec<usize> {
        match self.dim() {
            1 => vec![index],
            _ => vec![index / self.nodes[1], index % self.nodes[1]],
        }
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        match self.dim() {
            1 => multi[0],
            _ => multi[0] * self.nodes[1] + multi[1],
        }
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        self.multi_index(index)
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.coordinate(axis, i))
            .collect()
    }

    /// All node coordinates, in flat-index order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|j| self.point(j)).collect()
    }

    /// True when `x` lies in the closed box Ω.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&xi, (&lo, &hi))| xi >= lo && xi <= hi)
    }

    /// Product trapezoid rule for a function that is sampled on the full
    /// closed node set, boundary included. Exact on constants and
    /// multilinear functions; shares weights with [`ScalarField::integrate`].
    pub fn integrate_fn<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        let axis_weights = |axis: usize| -> Vec<(f64, f64)> {
            let n = self.nodes[axis] + 2;
            let h = self.spacing[axis];
            (0..n)
                .map(|i| {
                    let x = self.lower[axis] + i as f64 * h;
                    let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
                    (x, w)
                })
                .collect()
        };
        match self.dim() {
            1 => axis_weights(0).iter().map(|&(x, w)| w * f(&[x])).sum(),
            _ => {
                let ax0 = axis_weights(0);
                let ax1 = axis_weights(1);
                let mut total = 0.0;
                for &(x, wx) in &ax0 {
                    for &(y, wy) in &ax1 {
                        total += wx * wy * f(&[x, y]);
                    }
                }
                total
            }
        }
    }

    /// Multilinear interpolation of nodal `values` at `x`, using zero at the
    /// boundary of Ω and outside it.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        // Per axis: (lower padded index, fractional offset) in the padded
        // index space where 0 and n+1 are boundary nodes.
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for axis in 0..self.dim() {
            let s = (x[axis] - self.lower[axis]) / self.spacing[axis];
            let n = self.nodes[axis];
            let i = (s.floor().max(0.0) as usize).min(n);
            base[axis] = i;
            frac[axis] = (s - i as f64).clamp(0.0, 1.0);
        }
        let padded = |axis: usize, i: usize| -> Option<usize> {
            if i == 0 || i > self.nodes[axis] {
                None
            } else {
                Some(i - 1)
            }
        };
        match self.dim() {
            1 => {
                let v = |i: usize| padded(0, i).map_or(0.0, |j| values[j]);
                let (i, t) = (base[0], frac[0]);
                (1.0 - t) * v(i) + t * v(i + 1)
            }
            _ => {
                let v = |i: usize, j: usize| match (padded(0, i), padded(1, j)) {
                    (Some(a), Some(b)) => values[a * self.nodes[1] + b],
                    _ => 0.0,
                };
                let (i, s) = (base[0], frac[0]);
                let (j, t) = (base[1], frac[1]);
                (1.0 - s) * ((1.0 - t) * v(i, j) + t * v(i, j + 1))
                    + s * ((1.0 - t) * v(i + 1, j) + t * v(i + 1, j + 1))
            }
        }
    }
}

/// Real nodal values on a shared grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length { expected: grid.len(), got: values.len() });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { index, value });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n] }
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: Arc<Grid>, f: F) -> Self {
        let values = (0..grid.len()).map(|j| f(&grid.point(j))).collect();
        Self { grid, values }
    }

    /// Builds a field without the finiteness scan. Callers guarantee the
    /// length matches the grid.
    pub(crate) fn from_values_unchecked(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    fn assert_same_grid(&self, other: &ScalarField) {
        assert!(self.same_grid(other), "fields live on different grids");
    }

    pub fn integrate(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// Quadrature inner product `∫ u v`.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        self.assert_same_grid(other);
        self.grid.cell_volume() * dot(&self.values, &other.values)
    }

    /// Quadrature L² norm.
    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, t: f64) -> ScalarField {
        let values = self.values.iter().map(|v| t * v).collect();
        Self { grid: self.grid.clone(), values }
    }

    /// `self + t·other`.
    pub fn axpy(&self, t: f64, other: &ScalarField) -> ScalarField {
        self.assert_same_grid(other);
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + t * b).collect();
        Self { grid: self.grid.clone(), values }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> ScalarField {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Value at an arbitrary point by multilinear interpolation.
    pub fn sample(&self, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    /// Index and value of the maximum; ties go to the lowest flat index.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (j, &v) in self.values.iter().enumerate() {
            if v > best.1 {
                best = (j, v);
            }
        }
        best
    }

    /// Location of the maximum refined per axis by the parabola through the
    /// argmax node and its two neighbours. Falls back to the node itself at
    /// the box edge or when the parabola is not concave.
    pub fn peak_location(&self) -> Vec<f64> {
        let g = &*self.grid;
        let (j, _) = self.argmax();
        let multi = g.multi_index(j);
        let mut x = g.point(j);
        for axis in 0..g.dim() {
            let i = multi[axis];
            if i == 0 || i + 1 == g.nodes()[axis] {
                continue;
            }
            let mut lo = multi.clone();
            let mut hi = multi.clone();
            lo[axis] -= 1;
            hi[axis] += 1;
            let (a, b, c) = (self.values[g.flat_index(&lo)], self.values[j], self.values[g.flat_index(&hi)]);
            let curvature = a - 2.0 * b + c;
            if curvature < 0.0 {
                x[axis] += 0.5 * (a - c) / curvature * g.spacing()[axis];
            }
        }
        x
    }

    /// Largest absolute value among nodes adjacent to ∂Ω.
    pub fn boundary_max(&self) -> f64 {
        let g = &*self.grid;
        let on_edge = |j: usize| {
            g.multi_index(j)
                .iter()
                .zip(g.nodes())
                .any(|(&i, &n)| i == 0 || i + 1 == n)
        };
        (0..g.len()).filter(|&j| on_edge(j)).fold(0.0, |m, j| m.max(self.values[j].abs()))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Second-order central difference Δ_h with zero Dirichlet closure, written
/// into `out`.
pub fn laplacian_into(grid: &Grid, u: &[f64], out: &mut [f64]) {
    match grid.dim() {
        1 => {
            let n = grid.nodes()[0];
            let inv = 1.0 / (grid.spacing()[0] * grid.spacing()[0]);
            for i in 0..n {
                let left = if i > 0 { u[i - 1] } else { 0.0 };
                let right = if i + 1 < n { u[i + 1] } else { 0.0 };
                out[i] = (left - 2.0 * u[i] + right) * inv;
            }
        }
        _ => {
            let (n0, n1) = (grid.nodes()[0], grid.nodes()[1]);
            let inv0 = 1.0 / (grid.spacing()[0] * grid.spacing()[0]);
            let inv1 = 1.0 / (grid.spacing()[1] * grid.spacing()[1]);
            for i in 0..n0 {
                for j in 0..n1 {
                    let c = u[i * n1 + j];
                    let up = if i > 0 { u[(i - 1) * n1 + j] } else { 0.0 };
                    let down = if i + 1 < n0 { u[(i + 1) * n1 + j] } else { 0.0 };
                    let left = if j > 0 { u[i * n1 + j - 1] } else { 0.0 };
                    let right = if j + 1 < n1 { u[i * n1 + j + 1] } else { 0.0 };
                    out[i * n1 + j] = (up - 2.0 * c + down) * inv0 + (left - 2.0 * c + right) * inv1;
                }
            }
        }
    }
}

pub fn laplacian_apply(u: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; u.values.len()];
    laplacian_into(&u.grid, &u.values, &mut out);
    ScalarField::from_values_unchecked(u.grid.clone(), out)
}

pub fn positive_part(u: &ScalarField) -> ScalarField {
    u.map(|v| v.max(0.0))
}

/// Concentration region Λ. Membership is the open set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    Box { center: Vec<f64>, half_widths: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Region {
    pub fn interval(lower: f64, upper: f64) -> Self {
        Region::Box { center: vec![0.5 * (lower + upper)], half_widths: vec![0.5 * (upper - lower)] }
    }

    pub fn center(&self) -> &[f64] {
        match self {
            Region::Box { center, .. } | Region::Ball { center, .. } => center,
        }
    }

    pub fn dim(&self) -> usize {
        self.center().len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Box { center, half_widths } => x
                .iter()
                .zip(center.iter().zip(half_widths))
                .all(|(xi, (c, w))| (xi - c).abs() < *w),
            Region::Ball { center, radius } => distance(x, center) < *radius,
        }
    }

    /// Euclidean distance from `x` to the topological boundary ∂Λ.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        match self {
            Region::Box { center, half_widths } => {
                let offsets: Vec<f64> = x
                    .iter()
                    .zip(center.iter().zip(half_widths))
                    .map(|(xi, (c, w))| (xi - c).abs() - w)
                    .collect();
                if offsets.iter().all(|&d| d <= 0.0) {
                    offsets.iter().map(|d| -d).fold(f64::INFINITY, f64::min)
                } else {
                    offsets.iter().map(|d| d.max(0.0).powi(2)).sum::<f64>().sqrt()
                }
            }
            Region::Ball { center, radius } => (distance(x, center) - radius).abs(),
        }
    }

    /// Structural checks plus strict containment of the closure in Ω.
    pub fn validate_within(&self, grid: &Grid) -> Result<(), GridError> {
        if self.dim() != grid.dim() {
            return Err(GridError::Region(format!(
                "region has dimension {}, grid has {}",
                self.dim(),
                grid.dim()
            )));
        }
        let extents: Vec<f64> = match self {
            Region::Box { center, half_widths } => {
                if half_widths.len() != center.len() || half_widths.iter().any(|w| !(*w > 0.0)) {
                    return Err(GridError::Region("box half widths must be positive".into()));
                }
                half_widths.clone()
            }
            Region::Ball { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(GridError::Region("ball radius must be positive".into()));
                }
                vec![*radius; center.len()]
            }
        };
        for (axis, (c, w)) in self.center().iter().zip(&extents).enumerate() {
            if !(c - w > grid.lower()[axis] && c + w < grid.upper()[axis]) {
                return Err(GridError::RegionOutside(format!(
                    "axis {axis}: [{}, {}] not inside ({}, {})",
                    c - w,
                    c + w,
                    grid.lower()[axis],
                    grid.upper()[axis]
                )));
            }
        }
        Ok(())
    }

    /// Points on ∂Λ: the two endpoints in 1D, `per_side` points per face of a
    /// box or `4·per_side` points on a circle in 2D.
    pub fn boundary_samples(&self, per_side: usize) -> Vec<Vec<f64>> {
        let per_side = per_side.max(2);
        match self {
            Region::Box { center, half_widths } if center.len() == 1 => {
                vec![vec![center[0] - half_widths[0]], vec![center[0] + half_widths[0]]]
            }
            Region::Ball { center, radius } if center.len() == 1 => {
                vec![vec![center[0] - radius], vec![center[0] + radius]]
            }
            Region::Box { center, half_widths } => {
                let (cx, cy) = (center[0], center[1]);
                let (wx, wy) = (half_widths[0], half_widths[1]);
                let mut pts = Vec::with_capacity(4 * per_side);
                for s in 0..per_side {
                    let t = -1.0 + 2.0 * s as f64 / (per_side - 1) as f64;
                    pts.push(vec![cx + t * wx, cy - wy]);
                    pts.push(vec![cx + t * wx, cy + wy]);
                    pts.push(vec![cx - wx, cy + t * wy]);
                    pts.push(vec![cx + wx, cy + t * wy]);
                }
                pts
            }
            Region::Ball { center, radius } => {
                let m = 4 * per_side;
                (0..m)
                    .map(|s| {
                        let phi = 2.0 * std::f64::consts::PI * s as f64 / m as f64;
                        vec![center[0] + radius * phi.cos(), center[1] + radius * phi.sin()]
                    })
                    .collect()
            }
        }
    }

    /// Diameter of Λ.
    pub fn diameter(&self) -> f64 {
        match self {
            Region::Box { half_widths, .. } => 2.0 * half_widths.iter().map(|w| w * w).sum::<f64>().sqrt(),
            Region::Ball { radius, .. } => 2.0 * radius,
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Node indices within `width` of ∂Λ; the discrete stand-in for the
/// boundary in `m_ℏ = max_{∂Λ} u_ℏ`.
pub fn boundary_band(grid: &Grid, region: &Region, width: f64) -> Result<Vec<usize>, GridError> {
    let spacing = grid.max_spacing();
    if !(width >= spacing * (1.0 - 1e-12)) {
        return Err(GridError::BandTooNarrow { width, spacing });
    }
    // Absorbs round-off in node coordinates that sit exactly `width` away.
    let reach = width * (1.0 + 1e-9);
    let band: Vec<usize> = (0..grid.len())
        .filter(|&j| region.distance_to_boundary(&grid.point(j)) <= reach)
        .collect();
    if band.is_empty() {
        return Err(GridError::EmptyBand);
    }
    Ok(band)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_line(n: usize) -> Arc<Grid> {
        Arc::new(Grid::line(0.0, 1.0, n).unwrap())
    }

    fn random_field(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> ScalarField {
        let values = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ScalarField::new(grid.clone(), values).unwrap()
    }

    #[test]
    fn spacing_and_interior_nodes() {
        let g = Grid::new(&[-4.0, 0.0], &[4.0, 2.0], &[79, 9]).unwrap();
        assert!((g.spacing()[0] - 0.1).abs() < 1e-15);
        assert!((g.spacing()[1] - 0.2).abs() < 1e-15);
        for j in 0..g.len() {
            let x = g.point(j);
            assert!(x[0] > -4.0 && x[0] < 4.0 && x[1] > 0.0 && x[1] < 2.0);
        }
        assert_eq!(g.multi_index(g.flat_index(&[3, 7])), vec![3, 7]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert_eq!(Grid::new(&[0.0; 3], &[1.0; 3], &[2; 3]), Err(GridError::Dimension(3)));
        assert!(matches!(Grid::line(1.0, 1.0, 4), Err(GridError::Bounds { .. })));
        assert!(matches!(Grid::line(0.0, 1.0, 0), Err(GridError::NoNodes { .. })));
        let g = unit_line(4);
        assert!(matches!(
            ScalarField::new(g.clone(), vec![0.0, f64::NAN, 0.0, 0.0]),
            Err(GridError::NonFinite { index: 1, .. })
        ));
        assert!(matches!(ScalarField::new(g, vec![0.0; 3]), Err(GridError::Length { .. })));
    }

    #[test]
    fn integrate_zero_and_quadratic() {
        let g = unit_line(99);
        assert_eq!(ScalarField::zeros(g.clone()).integrate(), 0.0);
        let u = ScalarField::from_fn(g.clone(), |x| x[0] * (1.0 - x[0]));
        // Trapezoid error for x(1-x) is h²/6 exactly.
        let h = g.spacing()[0];
        assert!((u.integrate() - 1.0 / 6.0).abs() <= h * h / 6.0 + 1e-15);
        assert_eq!(u.scaled(2.0).integrate(), 2.0 * u.integrate());
    }

    #[test]
    fn integrate_fn_exact_on_constants() {
        let g = Grid::new(&[-3.0, -1.0], &[5.0, 2.5], &[37, 21]).unwrap();
        let c = 2.75;
        let got = g.integrate_fn(|_| c);
        assert!((got - c * g.volume()).abs() <= 1e-12 * c * g.volume());
        let line = Grid::line(-1.0, 2.0, 17).unwrap();
        assert!((line.integrate_fn(|_| c) - 3.0 * c).abs() <= 1e-12 * 3.0 * c);
    }

    #[test]
    fn laplacian_of_quadratic_is_two_in_the_interior() {
        let g = Arc::new(Grid::line(-1.0, 3.0, 31).unwrap());
        assert!(laplacian_apply(&ScalarField::zeros(g.clone())).values().iter().all(|&v| v == 0.0));
        let u = ScalarField::from_fn(g.clone(), |x| x[0] * x[0]);
        let lap = laplacian_apply(&u);
        for &v in &lap.values()[1..30] {
            assert!((v - 2.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn laplacian_symmetric_and_negative_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for g in [unit_line(64), Arc::new(Grid::new(&[0.0, -1.0], &[2.0, 1.0], &[17, 23]).unwrap())] {
            for _ in 0..10 {
                let u = random_field(&g, &mut rng);
                let v = random_field(&g, &mut rng);
                let a = laplacian_apply(&u).inner(&v);
                let b = u.inner(&laplacian_apply(&v));
                assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
                assert!(-laplacian_apply(&u).inner(&u) >= 0.0);
            }
        }
    }

    fn fitted_order(errors: &[f64]) -> f64 {
        // Each refinement halves h.
        let rates: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        rates.iter().sum::<f64>() / rates.len() as f64
    }

    #[test]
    fn second_order_convergence() {
        let pi = std::f64::consts::PI;
        let mut quad_err = Vec::new();
        let mut lap_err = Vec::new();
        for n in [31usize, 63, 127] {
            // h = 1/(n+1) halves each time.
            let g = unit_line(n);
            let u = ScalarField::from_fn(g.clone(), |x| (pi * x[0]).sin() * x[0]);
            // ∫ x sin(πx) over [0,1] = 1/π.
            quad_err.push((u.integrate() - 1.0 / pi).abs());
            let lap = laplacian_apply(&u);
            let exact = |x: f64| 2.0 * pi * (pi * x).cos() - pi * pi * x * (pi * x).sin();
            let e = (0..g.len())
                .map(|j| (lap.values()[j] - exact(g.point(j)[0])).abs())
                .fold(0.0, f64::max);
            lap_err.push(e);
        }
        assert!((fitted_order(&quad_err) - 2.0).abs() <= 0.3, "{quad_err:?}");
        assert!((fitted_order(&lap_err) - 2.0).abs() <= 0.3, "{lap_err:?}");
    }

    #[test]
    fn band_on_a_line() {
        let g = Grid::line(-4.0, 4.0, 79).unwrap();
        let lambda = Region::interval(-1.0, 1.0);
        let band = boundary_band(&g, &lambda, 0.1).unwrap();
        let xs: Vec<f64> = band.iter().map(|&j| g.point(j)[0]).collect();
        let expected = [-1.1, -1.0, -0.9, 0.9, 1.0, 1.1];
        assert_eq!(xs.len(), expected.len());
        for (x, e) in xs.iter().zip(expected) {
            assert!((x - e).abs() < 1e-12);
        }
        assert!(matches!(boundary_band(&g, &lambda, 0.05), Err(GridError::BandTooNarrow { .. })));
    }

    #[test]
    fn band_on_a_square_matches_enumeration() {
        // 16×16 nodes on [0,17]²: h = 1, nodes at integers 1..=16.
        let g = Grid::new(&[0.0, 0.0], &[17.0, 17.0], &[16, 16]).unwrap();
        // ∂Λ is the outline of [5.5, 11.5]², half a cell away from the nodes.
        let lambda = Region::Box { center: vec![8.5, 8.5], half_widths: vec![3.0, 3.0] };
        let band = boundary_band(&g, &lambda, 1.0).unwrap();
        let mut expected = Vec::new();
        for i in 1..=16i32 {
            for j in 1..=16i32 {
                let (x, y) = (i as f64, j as f64);
                let dx = (x - 8.5).abs() - 3.0;
                let dy = (y - 8.5).abs() - 3.0;
                let d = if dx <= 0.0 && dy <= 0.0 {
                    (-dx).min(-dy)
                } else {
                    (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt()
                };
                if d <= 1.0 {
                    expected.push(((i - 1) * 16 + (j - 1)) as usize);
                }
            }
        }
        assert_eq!(band, expected);
        // Node rings at distance 0.5 on both sides: 8×8 block minus 4×4 core.
        assert_eq!(band.len(), 48);
    }

    #[test]
    fn region_containment_checks() {
        let g = Grid::new(&[-2.0, -2.0], &[2.0, 2.0], &[15, 15]).unwrap();
        let ok = Region::Ball { center: vec![0.0, 0.0], radius: 1.5 };
        assert!(ok.validate_within(&g).is_ok());
        let bad = Region::Ball { center: vec![1.0, 0.0], radius: 1.5 };
        assert!(matches!(bad.validate_within(&g), Err(GridError::RegionOutside(_))));
        assert!(ok.contains(&[1.0, 1.0]) && !ok.contains(&[1.5, 0.0]));
    }

    #[test]
    fn interpolation_exact_on_linear_data() {
        let g = Arc::new(Grid::new(&[0.0, 0.0], &[1.0, 2.0], &[9, 19]).unwrap());
        let ramp = ScalarField::from_fn(g.clone(), |x| 3.0 * x[0] - 0.5 * x[1] + 1.0);
        for &(x, y) in &[(0.1, 0.1), (0.37, 1.21), (0.9, 1.9), (0.5, 1.0)] {
            let exact = 3.0 * x - 0.5 * y + 1.0;
            assert!((ramp.sample(&[x, y]) - exact).abs() < 1e-12);
        }
        assert_eq!(ramp.sample(&[1.5, 0.5]), 0.0);
    }

    proptest! {
        #[test]
        fn positive_part_is_nonnegative_and_idempotent(values in proptest::collection::vec(-5.0f64..5.0, 16)) {
            let g = unit_line(16);
            let u = ScalarField::new(g, values).unwrap();
            let p = positive_part(&u);
            prop_assert!(p.values().iter().all(|&v| v >= 0.0));
            let twice = positive_part(&p);
            prop_assert_eq!(twice.values(), p.values());
        }

        #[test]
        fn integrate_is_linear(a in proptest::collection::vec(-5.0f64..5.0, 12),
                               b in proptest::collection::vec(-5.0f64..5.0, 12),
                               s in -3.0f64..3.0) {
            let g = unit_line(12);
            let u = ScalarField::new(g.clone(), a).unwrap();
            let v = ScalarField::new(g, b).unwrap();
            let lhs = u.axpy(s, &v).integrate();
            let rhs = u.integrate() + s * v.integrate();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn positive_part_constants() {
        let g = unit_line(5);
        let neg = ScalarField::new(g.clone(), vec![-1.0; 5]).unwrap();
        assert!(positive_part(&neg).values().iter().all(|&v| v == 0.0));
        let pos = ScalarField::new(g, vec![3.0; 5]).unwrap();
        assert!(positive_part(&pos).values().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn peak_location_recovers_parabola_vertex() {
        let g = Arc::new(Grid::new(&[-2.0, -2.0], &[2.0, 2.0], &[20, 17]).unwrap());
        let u = ScalarField::from_fn(g, |x| 5.0 - (x[0] - 0.13).powi(2) - 2.0 * (x[1] + 0.31).powi(2));
        let p = u.peak_location();
        assert!((p[0] - 0.13).abs() < 1e-12 && (p[1] + 0.31).abs() < 1e-12, "{p:?}");
    }
}
