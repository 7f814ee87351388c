//! Quadrature representations of compact metric spaces `(M, d, mu)`.
//!
//! Every space built through [`build_space`] is a tensor-product grid:
//! periodic axes use equispaced nodes with uniform weights, interval axes use
//! the composite trapezoid rule or Gauss-Legendre nodes. Points are stored
//! row-major with the last axis varying fastest. Weights always sum to one,
//! so `mu` is a probability measure on the grid.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Deref;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{invalid, Result};

/// Tolerance on `sum(weights) == 1` for a space.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;
/// Tolerance on `sum(f * w) == 1` for a density.
pub const MASS_TOLERANCE: f64 = 1e-10;

/// One coordinate of a configuration space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Axis {
    /// A circle `[0, period)` with the arc-length distance.
    Periodic { period: f64 },
    /// A closed interval `[lo, hi]` with the absolute-difference distance.
    Interval { lo: f64, hi: f64 },
}

impl Axis {
    /// The unit circle parameterized by angle, `[0, 2pi)`.
    pub fn circle() -> Self {
        Axis::Periodic { period: 2.0 * PI }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Axis::Periodic { period } => period,
            Axis::Interval { lo, hi } => hi - lo,
        }
    }

    pub fn distance(&self, x: f64, y: f64) -> f64 {
        match *self {
            Axis::Periodic { period } => {
                let r = rem_euclid(x - y, period);
                r.min(period - r)
            }
            Axis::Interval { .. } => (x - y).abs(),
        }
    }

    /// Signed difference `x - y`, taken as the shortest arc on a circle.
    pub fn difference(&self, x: f64, y: f64) -> f64 {
        match *self {
            Axis::Periodic { period } => {
                let r = rem_euclid(x - y, period);
                if r > 0.5 * period {
                    r - period
                } else {
                    r
                }
            }
            Axis::Interval { .. } => x - y,
        }
    }

    /// Canonical representative of `x`; `None` if it lies outside an interval.
    pub fn wrap(&self, x: f64) -> Option<f64> {
        match *self {
            Axis::Periodic { period } => {
                let r = rem_euclid(x, period);
                // rem_euclid can round up to exactly `period`
                Some(if r >= period { 0.0 } else { r })
            }
            Axis::Interval { lo, hi } => {
                let slack = 1e-9 * (hi - lo);
                if x < lo - slack || x > hi + slack {
                    None
                } else {
                    Some(x.clamp(lo, hi))
                }
            }
        }
    }

    fn check(&self) -> Result<()> {
        match *self {
            Axis::Periodic { period } if !(period.is_finite() && period > 0.0) => {
                Err(invalid!("periodic axis needs a positive finite period, got {period}"))
            }
            Axis::Interval { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                Err(invalid!("interval axis needs lo < hi, got [{lo}, {hi}]"))
            }
            _ => Ok(()),
        }
    }
}

fn rem_euclid(x: f64, m: f64) -> f64 {
    let r = x % m;
    if r < 0.0 {
        r + m
    } else {
        r
    }
}

/// Quadrature rule used on interval axes. Periodic axes always use the
/// equispaced rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    #[default]
    Trapezoid,
    GaussLegendre,
}

/// Axis together with its discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    pub axis: Axis,
    pub resolution: usize,
    pub quadrature: Quadrature,
}

impl AxisSpec {
    pub fn periodic(period: f64, resolution: usize) -> Self {
        Self { axis: Axis::Periodic { period }, resolution, quadrature: Quadrature::Trapezoid }
    }

    pub fn circle(resolution: usize) -> Self {
        Self { axis: Axis::circle(), resolution, quadrature: Quadrature::Trapezoid }
    }

    pub fn interval(lo: f64, hi: f64, resolution: usize) -> Self {
        Self { axis: Axis::Interval { lo, hi }, resolution, quadrature: Quadrature::Trapezoid }
    }

    pub fn with_quadrature(mut self, quadrature: Quadrature) -> Self {
        self.quadrature = quadrature;
        self
    }

    /// Nodes and normalized weights of this axis.
    pub fn nodes_and_weights(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        self.axis.check()?;
        let n = self.resolution;
        if n < 2 {
            return Err(invalid!("axis resolution must be at least 2, got {n}"));
        }
        Ok(match (self.axis, self.quadrature) {
            (Axis::Periodic { period }, _) => {
                let h = period / n as f64;
                ((0..n).map(|i| i as f64 * h).collect(), vec![1.0 / n as f64; n])
            }
            (Axis::Interval { lo, hi }, Quadrature::Trapezoid) => {
                let h = (hi - lo) / (n - 1) as f64;
                let mut nodes: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
                nodes[n - 1] = hi;
                let inner = 1.0 / (n - 1) as f64;
                let mut weights = vec![inner; n];
                weights[0] = 0.5 * inner;
                weights[n - 1] = 0.5 * inner;
                (nodes, weights)
            }
            (Axis::Interval { lo, hi }, Quadrature::GaussLegendre) => {
                let (x, w) = gauss_legendre(n);
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                (x.iter().map(|t| mid + half * t).collect(), w.iter().map(|w| 0.5 * w).collect())
            }
        })
    }
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (z * p1 - p0) / (z * z - 1.0))
}

/// How per-axis distances are combined into the product metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProductMetric {
    #[default]
    Max,
    Euclidean,
}

impl ProductMetric {
    fn combine(self, parts: impl Iterator<Item = f64>) -> f64 {
        match self {
            ProductMetric::Max => parts.fold(0.0, f64::max),
            ProductMetric::Euclidean => parts.map(|d| d * d).sum::<f64>().sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct TensorGrid {
    nodes: Vec<Vec<f64>>,
    shape: Vec<usize>,
    strides: Vec<usize>,
}

impl TensorGrid {
    fn new(nodes: Vec<Vec<f64>>) -> Self {
        let shape: Vec<usize> = nodes.iter().map(Vec::len).collect();
        let mut strides = vec![1; shape.len()];
        for a in (0..shape.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        Self { nodes, shape, strides }
    }
}

/// A finite quadrature representation of a compact metric probability space.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpace {
    axes: Vec<Axis>,
    metric: ProductMetric,
    coords: Vec<f64>,
    weights: Vec<f64>,
    grid: Option<TensorGrid>,
}

/// Builds the tensor-product grid of the given axes.
pub fn build_space(axes: &[AxisSpec]) -> Result<DiscreteSpace> {
    if axes.is_empty() {
        return Err(invalid!("a space needs at least one axis"));
    }
    let mut space = DiscreteSpace::singleton();
    for spec in axes {
        let (nodes, weights) = spec.nodes_and_weights()?;
        space = space.extend_with_axis(spec.axis, nodes, &weights);
    }
    space.renormalize();
    Ok(space)
}

/// The product space `a x b` with `d mu = d mu_a x d mu_b`. Points of `b`
/// vary fastest.
pub fn product_space(a: &DiscreteSpace, b: &DiscreteSpace) -> Result<DiscreteSpace> {
    if a.metric != b.metric {
        return Err(invalid!("product of spaces with different product metrics"));
    }
    let dim = a.dim() + b.dim();
    let mut coords = Vec::with_capacity(a.len() * b.len() * dim);
    let mut weights = Vec::with_capacity(a.len() * b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            coords.extend_from_slice(a.point(i));
            coords.extend_from_slice(b.point(j));
            weights.push(a.weights[i] * b.weights[j]);
        }
    }
    let grid = match (&a.grid, &b.grid) {
        (Some(ga), Some(gb)) => {
            let mut nodes = ga.nodes.clone();
            nodes.extend(gb.nodes.iter().cloned());
            Some(TensorGrid::new(nodes))
        }
        _ => None,
    };
    let mut axes = a.axes.clone();
    axes.extend_from_slice(&b.axes);
    let mut space = DiscreteSpace { axes, metric: a.metric, coords, weights, grid };
    space.renormalize();
    Ok(space)
}

impl DiscreteSpace {
    /// The one-point probability space (zero axes).
    pub fn singleton() -> Self {
        Self {
            axes: Vec::new(),
            metric: ProductMetric::Max,
            coords: Vec::new(),
            weights: vec![1.0],
            grid: Some(TensorGrid::new(Vec::new())),
        }
    }

    /// A space from an explicit point list. The axes only supply the metric;
    /// the result carries no tensor structure.
    pub fn from_points(
        axes: Vec<Axis>,
        coords: Vec<f64>,
        weights: Vec<f64>,
        metric: ProductMetric,
    ) -> Result<Self> {
        for axis in &axes {
            axis.check()?;
        }
        let dim = axes.len();
        if weights.is_empty() || coords.len() != weights.len() * dim {
            return Err(invalid!(
                "{} coordinates do not describe {} points of dimension {dim}",
                coords.len(),
                weights.len()
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(invalid!("quadrature weight {w} is not a nonnegative number"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(invalid!("weights sum to {total}, expected 1"));
        }
        Ok(Self { axes, metric, coords, weights, grid: None })
    }

    fn extend_with_axis(self, axis: Axis, nodes: Vec<f64>, weights: &[f64]) -> Self {
        let dim = self.dim();
        let n = nodes.len();
        let mut coords = Vec::with_capacity(self.len() * n * (dim + 1));
        let mut w = Vec::with_capacity(self.len() * n);
        for i in 0..self.len() {
            for (k, x) in nodes.iter().enumerate() {
                coords.extend_from_slice(self.point(i));
                coords.push(*x);
                w.push(self.weights[i] * weights[k]);
            }
        }
        let grid = self.grid.map(|g| {
            let mut all = g.nodes;
            all.push(nodes);
            TensorGrid::new(all)
        });
        let mut axes = self.axes;
        axes.push(axis);
        Self { axes, metric: self.metric, coords, weights: w, grid }
    }

    fn renormalize(&mut self) {
        let total: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= total;
        }
    }

    pub fn with_metric(mut self, metric: ProductMetric) -> Self {
        self.metric = metric;
        self
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn metric(&self) -> ProductMetric {
        self.metric
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    /// Grid shape for tensor-product spaces.
    pub fn shape(&self) -> Option<&[usize]> {
        self.grid.as_ref().map(|g| g.shape.as_slice())
    }

    /// Nodes of axis `axis` for tensor-product spaces.
    pub fn axis_nodes(&self, axis: usize) -> Option<&[f64]> {
        self.grid.as_ref().map(|g| g.nodes[axis].as_slice())
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distance_between(self.point(i), self.point(j))
    }

    pub fn distance_between(&self, x: &[f64], y: &[f64]) -> f64 {
        self.metric
            .combine(self.axes.iter().zip(x.iter().zip(y)).map(|(a, (x, y))| a.distance(*x, *y)))
    }

    /// `sum_i values[i] * w_i`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        compensated_sum(values.iter().zip(&self.weights).map(|(v, w)| v * w))
    }

    /// Multi-index of a point in a tensor-product space.
    pub fn multi_index(&self, i: usize) -> Option<Vec<usize>> {
        let g = self.grid.as_ref()?;
        Some(g.strides.iter().zip(&g.shape).map(|(s, n)| (i / s) % n).collect())
    }

    pub fn flat_index(&self, idx: &[usize]) -> Option<usize> {
        let g = self.grid.as_ref()?;
        if idx.len() != g.shape.len() || idx.iter().zip(&g.shape).any(|(k, n)| k >= n) {
            return None;
        }
        Some(idx.iter().zip(&g.strides).map(|(k, s)| k * s).sum())
    }

    /// Index of the grid point nearest to `x`, or `None` when `x` lies
    /// outside an interval axis.
    pub fn nearest_index(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        match &self.grid {
            Some(g) => {
                let mut flat = 0;
                for (a, axis) in self.axes.iter().enumerate() {
                    let xa = axis.wrap(x[a])?;
                    flat += nearest_node(axis, &g.nodes[a], xa) * g.strides[a];
                }
                Some(flat)
            }
            None => {
                for (a, axis) in self.axes.iter().enumerate() {
                    axis.wrap(x[a])?;
                }
                (0..self.len())
                    .map(|j| (j, self.distance_between(x, self.point(j))))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(j, _)| j)
            }
        }
    }

    /// Adjacent grid points: all `3^dim - 1` index offsets on tensor grids
    /// (wrapping on periodic axes), metric-nearest points otherwise.
    pub fn grid_neighbors(&self, i: usize) -> Vec<usize> {
        match &self.grid {
            Some(g) => {
                let dim = g.shape.len();
                let base = self.multi_index(i).unwrap_or_default();
                let mut out = Vec::new();
                let combos = 3usize.pow(dim as u32);
                let mut idx = vec![0usize; dim];
                'offsets: for code in 0..combos {
                    let mut c = code;
                    let mut all_zero = true;
                    for a in 0..dim {
                        let off = (c % 3) as isize - 1;
                        c /= 3;
                        all_zero &= off == 0;
                        let n = g.shape[a] as isize;
                        let k = base[a] as isize + off;
                        idx[a] = match self.axes[a] {
                            Axis::Periodic { .. } => k.rem_euclid(n) as usize,
                            Axis::Interval { .. } if k < 0 || k >= n => continue 'offsets,
                            Axis::Interval { .. } => k as usize,
                        };
                    }
                    if all_zero {
                        continue;
                    }
                    let j: usize = idx.iter().zip(&g.strides).map(|(k, s)| k * s).sum();
                    if j != i && !out.contains(&j) {
                        out.push(j);
                    }
                }
                out
            }
            None => {
                let dmin = (0..self.len())
                    .filter(|&j| j != i)
                    .map(|j| self.distance(i, j))
                    .filter(|d| *d > 0.0)
                    .fold(f64::INFINITY, f64::min);
                (0..self.len())
                    .filter(|&j| j != i && self.distance(i, j) <= dmin * (1.0 + 1e-9))
                    .collect()
            }
        }
    }
}

fn nearest_node(axis: &Axis, nodes: &[f64], x: f64) -> usize {
    let n = nodes.len();
    let pos = nodes.partition_point(|v| *v < x);
    let mut best = pos.min(n - 1);
    let mut best_d = axis.distance(nodes[best], x);
    let mut consider = |k: usize| {
        let d = axis.distance(nodes[k], x);
        if d < best_d {
            best = k;
            best_d = d;
        }
    };
    if pos > 0 {
        consider(pos - 1);
    }
    if matches!(axis, Axis::Periodic { .. }) {
        consider(0);
        consider(n - 1);
    }
    best
}

/// Nonnegative density `f` with `sum f_i w_i = 1` on a [`DiscreteSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    values: Vec<f64>,
}

impl Density {
    /// Wraps values that must already be a normalized density on `space`.
    pub fn new(space: &DiscreteSpace, values: Vec<f64>) -> Result<Self> {
        check_values(space, &values)?;
        let mass = space.integrate(&values);
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(invalid!("density has mass {mass}, expected 1"));
        }
        Ok(Self { values })
    }

    /// Scales nonnegative values to unit mass.
    pub fn normalized(space: &DiscreteSpace, mut values: Vec<f64>) -> Result<Self> {
        check_values(space, &values)?;
        let mass = space.integrate(&values);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(invalid!("cannot normalize values with mass {mass}"));
        }
        for v in &mut values {
            *v /= mass;
        }
        Ok(Self { values })
    }

    /// The isotropic state `f = 1`.
    pub fn uniform(space: &DiscreteSpace) -> Self {
        Self { values: vec![1.0; space.len()] }
    }

    /// Normalized indicator `1_A / mu(A)`.
    pub fn indicator(space: &DiscreteSpace, members: &[usize]) -> Result<Self> {
        let mut values = vec![0.0; space.len()];
        for &i in members {
            if i >= space.len() {
                return Err(invalid!("index {i} outside a space of {} points", space.len()));
            }
            values[i] = 1.0;
        }
        Self::normalized(space, values)
    }

    /// Point mass at grid point `i`.
    pub fn point_mass(space: &DiscreteSpace, i: usize) -> Result<Self> {
        Self::indicator(space, &[i])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }
}

impl Deref for Density {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

fn check_values(space: &DiscreteSpace, values: &[f64]) -> Result<()> {
    if values.len() != space.len() {
        return Err(invalid!(
            "density has {} values on a space of {} points",
            values.len(),
            space.len()
        ));
    }
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(invalid!("density value {v} at point {i} is not a nonnegative number"));
    }
    Ok(())
}

/// Outer product `f_a(p) f_b(q)` on [`product_space`]`(a, b)`.
pub fn product_density(a: &DiscreteSpace, fa: &Density, b: &DiscreteSpace, fb: &Density) -> Result<Density> {
    check_values(a, fa)?;
    check_values(b, fb)?;
    let mut values = Vec::with_capacity(fa.len() * fb.len());
    for x in fa.iter() {
        values.extend(fb.iter().map(|y| x * y));
    }
    Ok(Density::from_raw(values))
}

/// Entropy `sum f log f w` with `0 log 0 = 0`.
pub fn entropy(space: &DiscreteSpace, f: &[f64]) -> Result<f64> {
    check_values(space, f)?;
    Ok(entropy_unchecked(space, f))
}

pub(crate) fn entropy_unchecked(space: &DiscreteSpace, f: &[f64]) -> f64 {
    compensated_sum(f.iter().zip(space.weights()).map(|(v, w)| xlogx(*v) * w))
}

/// `x log x` with `0 log 0 = 0`.
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Neumaier summation. Energies are compared across iterations at a level
/// far below the rounding error of a naive sum over a large grid.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Bounded-Lipschitz distance between `f d mu` and `g d mu`.
///
/// This is the optimal transport cost for the truncated metric `min(d, 2)`.
/// It is exact on spaces of at most [`crate::transport::EXACT_SUPPORT_LIMIT`]
/// points carrying mass and a coarse-grained upper bound beyond that; see
/// [`crate::transport`].
pub fn bl_distance(space: &DiscreteSpace, f: &[f64], g: &[f64]) -> Result<f64> {
    check_values(space, f)?;
    check_values(space, g)?;
    let signed: Vec<f64> =
        f.iter().zip(g).zip(space.weights()).map(|((a, b), w)| (a - b) * w).collect();
    Ok(crate::transport::truncated_transport_cost(space, &signed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn circle_grid_of_four() {
        let s = build_space(&[AxisSpec::circle(4)]).unwrap();
        let pts: Vec<f64> = (0..4).map(|i| s.point(i)[0]).collect();
        for (p, e) in pts.iter().zip([0.0, PI / 2.0, PI, 1.5 * PI]) {
            assert_abs_diff_eq!(*p, e, epsilon = 1e-15);
        }
        assert!(s.weights().iter().all(|w| *w == 0.25));
    }

    #[test]
    fn torus_weights_are_uniform() {
        let n = 16;
        let s = build_space(&[AxisSpec::circle(n), AxisSpec::circle(n)]).unwrap();
        assert_eq!(s.len(), n * n);
        for w in s.weights() {
            assert_abs_diff_eq!(*w, 1.0 / (n * n) as f64, epsilon = 1e-18);
        }
    }

    #[test]
    fn interval_reproduces_mean() {
        for quad in [Quadrature::Trapezoid, Quadrature::GaussLegendre] {
            let l = 3.0;
            let s = build_space(&[AxisSpec::interval(0.0, l, 17).with_quadrature(quad)]).unwrap();
            let x: Vec<f64> = (0..s.len()).map(|i| s.point(i)[0]).collect();
            assert_abs_diff_eq!(s.integrate(&x), l / 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn gauss_legendre_is_exact_to_degree_2n_minus_1() {
        let n = 8;
        let (x, w) = gauss_legendre(n);
        for deg in 0..2 * n {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert_abs_diff_eq!(q, exact, epsilon = 1e-14);
        }
    }

    #[test]
    fn rejects_bad_axes() {
        assert!(build_space(&[]).is_err());
        assert!(build_space(&[AxisSpec::circle(0)]).is_err());
        assert!(build_space(&[AxisSpec::circle(1)]).is_err());
        assert!(build_space(&[AxisSpec::interval(1.0, 1.0, 8)]).is_err());
        assert!(build_space(&[AxisSpec::periodic(-1.0, 8)]).is_err());
    }

    #[test]
    fn product_with_point_is_a_copy() {
        let s = build_space(&[AxisSpec::interval(0.0, 1.0, 5)]).unwrap();
        let p = product_space(&s, &DiscreteSpace::singleton()).unwrap();
        assert_eq!(p.len(), s.len());
        assert_eq!(p.weights(), s.weights());
        assert_eq!(p.dim(), 1);
    }

    #[test]
    fn product_weights_are_outer_product() {
        let a = build_space(&[AxisSpec::interval(0.0, 1.0, 5)]).unwrap();
        let b = build_space(&[AxisSpec::circle(3)]).unwrap();
        let p = product_space(&a, &b).unwrap();
        for i in 0..a.len() {
            for j in 0..b.len() {
                let k = i * b.len() + j;
                assert_abs_diff_eq!(p.weight(k), a.weight(i) * b.weight(j), epsilon = 1e-17);
                assert_eq!(p.point(k)[0], a.point(i)[0]);
                assert_eq!(p.point(k)[1], b.point(j)[0]);
            }
        }
        assert_eq!(p.shape(), Some(&[5usize, 3][..]));
    }

    #[test]
    fn periodic_distance_wraps() {
        let a = Axis::circle();
        assert_abs_diff_eq!(a.distance(0.1, 2.0 * PI - 0.1), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(a.difference(0.1, 2.0 * PI - 0.1), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(a.difference(2.0 * PI - 0.1, 0.1), -0.2, epsilon = 1e-12);
    }

    #[test]
    fn nearest_index_wraps_and_rejects_outside() {
        let s = build_space(&[AxisSpec::circle(8), AxisSpec::interval(0.0, 1.0, 5)]).unwrap();
        let i = s.nearest_index(&[2.0 * PI - 0.01, 0.26]).unwrap();
        assert_eq!(s.multi_index(i).unwrap(), vec![0, 1]);
        assert!(s.nearest_index(&[0.0, 1.5]).is_none());
    }

    #[test]
    fn neighbors_on_torus() {
        let s = build_space(&[AxisSpec::circle(4), AxisSpec::circle(4)]).unwrap();
        assert_eq!(s.grid_neighbors(0).len(), 8);
        let line = build_space(&[AxisSpec::interval(0.0, 1.0, 4)]).unwrap();
        assert_eq!(line.grid_neighbors(0), vec![1]);
    }

    #[test]
    fn entropy_examples() {
        let s = build_space(&[AxisSpec::circle(64)]).unwrap();
        assert_eq!(entropy(&s, &Density::uniform(&s)).unwrap(), 0.0);
        let half: Vec<usize> = (0..32).collect();
        let f = Density::indicator(&s, &half).unwrap();
        assert_abs_diff_eq!(entropy(&s, &f).unwrap(), 2f64.ln(), epsilon = 1e-14);
        assert!(entropy(&s, &vec![-1.0; 64]).is_err());
    }

    #[test]
    fn density_validation() {
        let s = build_space(&[AxisSpec::circle(4)]).unwrap();
        assert!(Density::new(&s, vec![2.0; 4]).is_err());
        assert!(Density::new(&s, vec![1.0; 3]).is_err());
        assert!(Density::normalized(&s, vec![0.0; 4]).is_err());
        assert!(Density::normalized(&s, vec![1.0, -1.0, 1.0, 1.0]).is_err());
        let f = Density::normalized(&s, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(s.integrate(&f), 1.0, epsilon = 1e-15);
    }
}
