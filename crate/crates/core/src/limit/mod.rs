//! Zero-temperature analysis: zero sets of the kernel, concentration of
//! solutions on them, neighborhood profiles and the selection test.

pub mod selection;

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

pub use selection::{selection_test, Condition, PointMap, SelectionReport, SelectionSpec};

use crate::error::{invalid, Result};
use crate::kernel::KernelMatrix;
use crate::solver::OnsagerState;
use crate::space::{bl_distance, Axis, Density, DiscreteSpace, ProductMetric};

/// Default zero-set threshold relative to `sup k`.
pub const DEFAULT_RELATIVE_TAU: f64 = 1e-3;

/// A candidate support set `A` of a zero-temperature limit: grid points with
/// `k <= tolerance` on all pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSet {
    members: Vec<usize>,
    tolerance: f64,
    pairwise_max: f64,
}

impl ZeroSet {
    /// Fails if `members` is empty or some pair exceeds `tolerance`.
    pub fn new(k: &KernelMatrix, mut members: Vec<usize>, tolerance: f64) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(invalid!("a zero set needs at least one member"));
        }
        if let Some(&i) = members.iter().find(|&&i| i >= k.len()) {
            return Err(invalid!("member {i} outside a kernel of {} points", k.len()));
        }
        let pairwise_max = pairwise_max(k, &members);
        if pairwise_max > tolerance {
            return Err(invalid!("kernel reaches {pairwise_max:e} on the set, above the tolerance {tolerance:e}"));
        }
        Ok(Self { members, tolerance, pairwise_max })
    }

    /// For squared-feature kernels: the points with `(s - level)^2 <= tau / 4`,
    /// which keeps every pair within `tau`.
    pub fn feature_level(k: &KernelMatrix, level: f64, tau: f64) -> Result<Self> {
        let s = k.feature().ok_or_else(|| invalid!("feature level sets need a squared-feature kernel"))?;
        let members = (0..s.len()).filter(|&i| (s[i] - level).powi(2) <= tau / 4.0).collect();
        Self::new(k, members, tau)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn pairwise_max(&self) -> f64 {
        self.pairwise_max
    }

    pub fn measure(&self, space: &DiscreteSpace) -> f64 {
        self.members.iter().map(|&i| space.weight(i)).sum()
    }
}

fn pairwise_max(k: &KernelMatrix, members: &[usize]) -> f64 {
    if let Some(s) = k.feature() {
        let hi = members.iter().map(|&i| s[i]).fold(f64::NEG_INFINITY, f64::max);
        let lo = members.iter().map(|&i| s[i]).fold(f64::INFINITY, f64::min);
        return (hi - lo) * (hi - lo);
    }
    let mut m: f64 = 0.0;
    for &i in members {
        for &j in members {
            m = m.max(k.entry(i, j));
        }
    }
    m
}

/// The graph of grid pairs with `k(p_i, p_j) <= tau`, diagonal included.
///
/// Squared-feature kernels are stored as the sorted feature, where the
/// neighbors of a point are a contiguous range; other kernels as adjacency
/// lists.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroPairs {
    tau: f64,
    repr: PairRepr,
}

#[derive(Debug, Clone, PartialEq)]
enum PairRepr {
    Lists { offsets: Vec<usize>, cols: Vec<usize> },
    Sorted { order: Vec<usize>, values: Vec<f64>, feature: Vec<f64> },
}

pub fn zero_pairs(k: &KernelMatrix, tau: f64) -> Result<ZeroPairs> {
    if !(tau >= 0.0) {
        return Err(invalid!("tau must be nonnegative, got {tau}"));
    }
    let n = k.len();
    let repr = match k.feature() {
        Some(s) => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
            let values = order.iter().map(|&i| s[i]).collect();
            PairRepr::Sorted { order, values, feature: s.to_vec() }
        }
        None => {
            let mut offsets = vec![0];
            let mut cols = Vec::new();
            for i in 0..n {
                cols.extend((0..n).filter(|&j| k.entry(i, j) <= tau));
                offsets.push(cols.len());
            }
            PairRepr::Lists { offsets, cols }
        }
    };
    Ok(ZeroPairs { tau, repr })
}

impl ZeroPairs {
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        match &self.repr {
            PairRepr::Lists { offsets, .. } => offsets.len() - 1,
            PairRepr::Sorted { order, .. } => order.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sorted_range(&self, i: usize) -> (usize, usize) {
        let PairRepr::Sorted { values, feature, .. } = &self.repr else { unreachable!() };
        let (si, tau) = (feature[i], self.tau);
        let lo = values.partition_point(|v| *v < si && (si - v) * (si - v) > tau);
        let hi = values.partition_point(|v| *v <= si || (v - si) * (v - si) <= tau);
        (lo, hi)
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        match &self.repr {
            PairRepr::Lists { offsets, cols } => cols[offsets[i]..offsets[i + 1]].to_vec(),
            PairRepr::Sorted { order, .. } => {
                let (lo, hi) = self.sorted_range(i);
                let mut v = order[lo..hi].to_vec();
                v.sort_unstable();
                v
            }
        }
    }

    pub fn degree(&self, i: usize) -> usize {
        match &self.repr {
            PairRepr::Lists { offsets, .. } => offsets[i + 1] - offsets[i],
            PairRepr::Sorted { .. } => {
                let (lo, hi) = self.sorted_range(i);
                hi - lo
            }
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        match &self.repr {
            PairRepr::Lists { offsets, cols } => cols[offsets[i]..offsets[i + 1]].binary_search(&j).is_ok(),
            PairRepr::Sorted { feature, .. } => (feature[i] - feature[j]).powi(2) <= self.tau,
        }
    }

    /// Number of ordered pairs, diagonal included.
    pub fn pair_count(&self) -> usize {
        (0..self.len()).map(|i| self.degree(i)).sum()
    }

    /// Whether every point is related only to itself.
    pub fn is_diagonal_only(&self) -> bool {
        (0..self.len()).all(|i| self.degree(i) == 1 && self.contains(i, i))
    }

    /// Connected components of the graph, each sorted, ordered by smallest
    /// member. Components need not be zero sets themselves (the relation
    /// is not transitive).
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let union = |a: usize, b: usize, parent: &mut Vec<usize>| {
            let (ra, rb) = (find(parent, a), find(parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        };
        match &self.repr {
            PairRepr::Lists { offsets, cols } => {
                for i in 0..n {
                    for &j in &cols[offsets[i]..offsets[i + 1]] {
                        union(i, j, &mut parent);
                    }
                }
            }
            PairRepr::Sorted { order, values, .. } => {
                // consecutive sorted values within sqrt(tau) chain together
                for w in 0..n.saturating_sub(1) {
                    if (values[w + 1] - values[w]).powi(2) <= self.tau {
                        union(order[w], order[w + 1], &mut parent);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; n];
        for i in 0..n {
            let r = find(&mut parent, i);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(i);
        }
        groups
    }
}

/// Points within metric distance `eps` of `members` (`< eps` if `strict`).
///
/// Tensor grids with the max metric are dilated one axis at a time, which is
/// exact for that metric; other spaces are scanned pairwise.
pub fn neighborhood(space: &DiscreteSpace, members: &[usize], eps: f64, strict: bool) -> Vec<bool> {
    let n = space.len();
    let within = |d: f64| if strict { d < eps } else { d <= eps };
    let mut mark = vec![false; n];
    if within(0.0) {
        for &i in members {
            mark[i] = true;
        }
    }
    match space.shape() {
        Some(shape) if space.metric() == ProductMetric::Max && !shape.is_empty() => {
            let shape = shape.to_vec();
            let mut stride = 1;
            for a in (0..shape.len()).rev() {
                let nodes = space.axis_nodes(a).expect("tensor grid");
                let axis = space.axes()[a];
                let m = shape[a];
                let window: Vec<Vec<usize>> =
                    (0..m).map(|k| (0..m).filter(|&j| within(axis.distance(nodes[j], nodes[k]))).collect()).collect();
                let mut next = mark.clone();
                for i in 0..n {
                    if !mark[i] {
                        continue;
                    }
                    let k = (i / stride) % m;
                    let base = i - k * stride;
                    for &j in &window[k] {
                        next[base + j * stride] = true;
                    }
                }
                mark = next;
                stride *= m;
            }
            mark
        }
        _ => {
            for i in 0..n {
                if !mark[i] {
                    mark[i] = members.iter().any(|&a| within(space.distance(i, a)));
                }
            }
            mark
        }
    }
}

/// Diagnostics of a solution against candidate limit supports.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub b: f64,
    pub eps: f64,
    /// `int_{B(A, eps)} g d mu` per candidate.
    pub mass_in_neighborhood: Vec<f64>,
    /// `2 E_b[g] / b`, taken from the state.
    pub two_over_b_energy: Option<f64>,
    /// Bounded-Lipschitz distance from `g d mu` to the normalized uniform
    /// measure on each candidate.
    pub bl_to_candidate: Vec<f64>,
}

pub fn concentration(
    space: &DiscreteSpace,
    state: &OnsagerState,
    candidates: &[ZeroSet],
    eps: f64,
) -> Result<ConcentrationReport> {
    if !(eps > 0.0) {
        return Err(invalid!("eps must be positive, got {eps}"));
    }
    if candidates.is_empty() {
        return Err(invalid!("concentration needs at least one candidate set"));
    }
    if state.density.len() != space.len() {
        return Err(invalid!("state has {} values on a space of {} points", state.density.len(), space.len()));
    }
    let mut masses = Vec::with_capacity(candidates.len());
    let mut bl = Vec::with_capacity(candidates.len());
    for set in candidates {
        let near = neighborhood(space, set.members(), eps, false);
        let m: f64 = (0..space.len()).filter(|&i| near[i]).map(|i| state.density[i] * space.weight(i)).sum();
        masses.push(m.clamp(0.0, 1.0));
        let target = Density::indicator(space, set.members())?;
        bl.push(bl_distance(space, &state.density, &target)?);
    }
    Ok(ConcentrationReport {
        b: state.b,
        eps,
        mass_in_neighborhood: masses,
        two_over_b_energy: state.two_over_b_energy(),
        bl_to_candidate: bl,
    })
}

/// `(eps, mu(B(A, eps)))` for each `eps`.
pub fn neighborhood_volume_profile(set: &ZeroSet, space: &DiscreteSpace, eps_list: &[f64]) -> Vec<(f64, f64)> {
    eps_list
        .iter()
        .map(|&eps| {
            let near = neighborhood(space, set.members(), eps, false);
            (eps, (0..space.len()).filter(|&i| near[i]).map(|i| space.weight(i)).sum())
        })
        .collect()
}

/// On a one-dimensional grid: for each `eps`, the largest `mu`-measure of a
/// run of consecutive grid points containing `center` on which `k <= eps`
/// pairwise. These are the approximate zero sets through `center`, whose
/// size is what the entropy rewards as `b` grows.
pub fn kernel_diameter_profile(
    k: &KernelMatrix,
    space: &DiscreteSpace,
    center: usize,
    eps_list: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if space.dim() != 1 || space.shape().is_none() || matches!(space.axes()[0], Axis::Periodic { .. }) {
        return Err(invalid!("the diameter profile needs a one-dimensional interval grid"));
    }
    let n = space.len();
    if center >= n || k.len() != n {
        return Err(invalid!("center {center} or kernel size {} does not fit a grid of {n} points", k.len()));
    }
    let mut out = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        // largest right end for each left end, two pointers
        let ok_col = |j: usize, lo: usize, hi: usize| (lo..=hi).all(|i| k.entry(i, j) <= eps);
        let mut hi = center;
        while hi + 1 < n && ok_col(hi + 1, center, hi + 1) {
            hi += 1;
        }
        let measure = |lo: usize, hi: usize| (lo..=hi).map(|i| space.weight(i)).sum::<f64>();
        let mut best = measure(center, hi);
        let mut lo = center;
        while lo > 0 {
            let l = lo - 1;
            while hi > center && !ok_col(l, l, hi) {
                hi -= 1;
            }
            if !ok_col(l, l, hi) {
                break;
            }
            lo = l;
            best = best.max(measure(lo, hi));
        }
        out.push((eps, best));
    }
    Ok(out)
}
