//! Scalar self-consistency equations of the two-rod models.
//!
//! For the two-rod kernels every solution of the Onsager equation has the
//! form `g ∝ exp(-b (s - a)^2)` with `s` the kernel feature (`sin(p1 - p2)`,
//! or `x1 x2 sin(p1 - p2)` for rods of variable length), and `a` the
//! `g`-mean of `s`. Integrating out the common angle leaves the reduced space
//! `M'` (the angle difference `theta`, plus the two lengths), on which `a` is
//! a zero of `h_b(a) = int u exp(-b u^2)` with `u = s - a`.
//!
//! `h` is evaluated pairwise over `theta <-> -theta`, which makes
//! `h_b(-a) = -h_b(a)` and `h_b(0) = 0` hold exactly in floating point.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{invalid, Result};
use crate::space::{build_space, AxisSpec, Density, DiscreteSpace, Quadrature};

/// Reduced angle resolution for the two-rod model.
pub const TWO_ROD_THETA_RESOLUTION: usize = 4096;
/// Default per-axis resolution of the direct `(x1, x2, theta)` quadrature.
pub const SIZED_DEFAULT_RESOLUTION: usize = 64;
/// Default a-grid of [`find_branches`].
pub const DEFAULT_SCAN_RESOLUTION: usize = 2001;
/// Bisection stops once the bracket is this narrow.
pub const ROOT_TOLERANCE: f64 = 1e-12;
/// Roots closer than this are the same root.
pub const DEDUP_TOLERANCE: f64 = 1e-9;
/// Roots closer than this to zero are merged into `a = 0`.
pub const ZERO_MERGE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Example {
    /// Two unit rods; `a = <sin(p1 - p2)>`.
    TwoRods,
    /// Two rods with lengths in `[0, max_length]`; `a = <x1 x2 sin(p1 - p2)>`.
    SizedRods { max_length: f64 },
}

/// The reduced space `M'` with its feature, split into `theta <-> -theta`
/// pairs.
#[derive(Debug, Clone)]
pub struct OrderParameterModel {
    example: Example,
    space: DiscreteSpace,
    feature: Vec<f64>,
    /// `(s, w)` for each pair `{s, -s}` with `s > 0`; `w` is the weight of one member.
    pairs: Vec<(f64, f64)>,
    /// Total weight of points with `s = 0`.
    zero_weight: f64,
    /// Converts `mu'`-integrals to the normalization of `h` (`int d theta` for two rods).
    scale: f64,
    bound: f64,
}

impl OrderParameterModel {
    pub fn two_rods() -> Self {
        Self::two_rods_with_resolution(TWO_ROD_THETA_RESOLUTION).expect("valid default resolution")
    }

    /// `theta` on an equispaced circle grid of even size `n`.
    pub fn two_rods_with_resolution(n: usize) -> Result<Self> {
        check_even(n)?;
        let space = build_space(&[AxisSpec::circle(n)])?;
        let sines = mirrored_sines(n);
        Ok(Self::from_parts(Example::TwoRods, space, sines, 2.0 * PI, 1.0))
    }

    pub fn sized_rods(max_length: f64) -> Result<Self> {
        Self::sized_rods_with_resolution(max_length, SIZED_DEFAULT_RESOLUTION)
    }

    /// Gauss-Legendre lengths and an even equispaced `theta` grid, `n` points each.
    pub fn sized_rods_with_resolution(max_length: f64, n: usize) -> Result<Self> {
        if !(max_length > 0.0 && max_length.is_finite()) {
            return Err(invalid!("maximal rod length must be positive, got {max_length}"));
        }
        check_even(n)?;
        let length = AxisSpec::interval(0.0, max_length, n).with_quadrature(Quadrature::GaussLegendre);
        let space = build_space(&[length, length, AxisSpec::circle(n)])?;
        let sines = mirrored_sines(n);
        let mut feature = Vec::with_capacity(space.len());
        for i in 0..space.len() {
            let idx = space.multi_index(i).expect("tensor grid");
            let p = space.point(i);
            feature.push(p[0] * p[1] * sines[idx[2]]);
        }
        let l2 = max_length * max_length;
        Ok(Self::from_parts(Example::SizedRods { max_length }, space, feature, 1.0, l2))
    }

    fn from_parts(example: Example, space: DiscreteSpace, feature: Vec<f64>, scale: f64, bound: f64) -> Self {
        let mut pairs = Vec::new();
        let mut zero_weight = 0.0;
        for (s, w) in feature.iter().zip(space.weights()) {
            if *s > 0.0 {
                pairs.push((*s, *w));
            } else if *s == 0.0 {
                zero_weight += w;
            }
        }
        Self { example, space, feature, pairs, zero_weight, scale, bound }
    }

    pub fn example(&self) -> Example {
        self.example
    }

    /// The reduced space `M'`.
    pub fn space(&self) -> &DiscreteSpace {
        &self.space
    }

    /// `s` at the points of `M'`.
    pub fn feature(&self) -> &[f64] {
        &self.feature
    }

    /// Largest admissible `|a|`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    fn check_a(&self, a: f64) -> Result<()> {
        if !(a.abs() <= self.bound) {
            return Err(invalid!("order parameter {a} outside [-{0}, {0}]", self.bound));
        }
        Ok(())
    }

    /// The feature `s(p)` at a point of the full configuration space:
    /// `(p1, p2)` or `(x1, x2, p1, p2)`.
    pub fn full_feature(&self, p: &[f64]) -> f64 {
        match self.example {
            Example::TwoRods => (p[0] - p[1]).sin(),
            Example::SizedRods { .. } => p[0] * p[1] * (p[2] - p[3]).sin(),
        }
    }

    /// `g ∝ exp(-b (s - a)^2)` on the full configuration space.
    pub fn full_density(&self, space: &DiscreteSpace, a: f64, b: f64) -> Result<Density> {
        let want = match self.example {
            Example::TwoRods => 2,
            Example::SizedRods { .. } => 4,
        };
        if space.dim() != want {
            return Err(invalid!("expected a {want}-dimensional configuration space, got {}", space.dim()));
        }
        let e: Vec<f64> = (0..space.len())
            .map(|i| {
                let u = self.full_feature(space.point(i)) - a;
                b * u * u
            })
            .collect();
        let emin = e.iter().copied().fold(f64::INFINITY, f64::min);
        Density::normalized(space, e.iter().map(|e| (-(e - emin)).exp()).collect())
    }
}

fn check_even(n: usize) -> Result<()> {
    if n < 4 || n % 2 != 0 {
        return Err(invalid!("angle resolution must be even and at least 4, got {n}"));
    }
    Ok(())
}

/// `sin(2 pi j / n)` with `sin(theta_{n-j}) = -sin(theta_j)` bit for bit and
/// exact zeros at `0` and `pi`.
fn mirrored_sines(n: usize) -> Vec<f64> {
    let mut s = vec![0.0; n];
    for j in 1..n / 2 {
        let v = (2.0 * PI * j as f64 / n as f64).sin();
        s[j] = v;
        s[n - j] = -v;
    }
    s
}

fn gibbs_exponent(b: f64, u: f64) -> f64 {
    -b * u * u
}

/// `[phi]_b(a)`: the average of `phi` (given at the points of `M'`) under
/// the weight `exp(-b (s - a)^2) d mu'`.
pub fn weighted_average(model: &OrderParameterModel, phi: &[f64], a: f64, b: f64) -> Result<f64> {
    if phi.len() != model.space.len() {
        return Err(invalid!("phi has {} values, the reduced space has {} points", phi.len(), model.space.len()));
    }
    check_b(b)?;
    let ex: Vec<f64> = model.feature.iter().map(|s| gibbs_exponent(b, s - a)).collect();
    let top = ex.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for ((e, p), w) in ex.iter().zip(phi).zip(model.space.weights()) {
        let g = (e - top).exp() * w;
        num += p * g;
        den += g;
    }
    Ok(num / den)
}

fn check_b(b: f64) -> Result<()> {
    if !(b.is_finite() && b >= 0.0) {
        return Err(invalid!("b must be a nonnegative number, got {b}"));
    }
    Ok(())
}

/// The self-consistency residual `h_b(a) = int u exp(-b u^2)`, `u = s - a`.
/// Its zeros are exactly the solutions of `a = [s]_b(a)`.
pub fn h(model: &OrderParameterModel, a: f64, b: f64) -> Result<f64> {
    model.check_a(a)?;
    check_b(b)?;
    Ok(h_unchecked(model, a, b))
}

fn h_unchecked(model: &OrderParameterModel, a: f64, b: f64) -> f64 {
    let term = |u: f64| u * gibbs_exponent(b, u).exp();
    let mut sum = model.zero_weight * term(-a);
    for &(s, w) in &model.pairs {
        sum += w * (term(s - a) + term(-s - a));
    }
    model.scale * sum
}

/// The sized-rod residual through the closed-form `x2` integration:
/// `int u exp(-b u^2) d mu' = -(1 / (4 pi b L^2)) int int exp(-b a^2)
/// expm1(b L t (2a - L t)) / t dx d theta` with `t = x sin(theta)`.
///
/// Independent of [`h`] except for the model's `L`; `theta_resolution` must
/// be even. `b` must be positive.
pub fn h_reduced(max_length: f64, a: f64, b: f64, x_resolution: usize, theta_resolution: usize) -> Result<f64> {
    if !(max_length > 0.0 && max_length.is_finite()) {
        return Err(invalid!("maximal rod length must be positive, got {max_length}"));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(invalid!("the reduced form needs b > 0, got {b}"));
    }
    if !(a.abs() <= max_length * max_length) {
        return Err(invalid!("order parameter {a} outside [-L^2, L^2]"));
    }
    check_even(theta_resolution)?;
    let l = max_length;
    let (xs, wx) = AxisSpec::interval(0.0, l, x_resolution)
        .with_quadrature(Quadrature::GaussLegendre)
        .nodes_and_weights()?;
    let sines = mirrored_sines(theta_resolution);
    let damp = (-b * a * a).exp();
    let integrand = |t: f64| -> f64 {
        if t == 0.0 {
            // limit of expm1(b L t (2a - L t)) / t
            2.0 * a * b * l
        } else {
            (b * l * t * (2.0 * a - l * t)).exp_m1() / t
        }
    };
    let mut sum = 0.0;
    for (x, w) in xs.iter().zip(&wx) {
        for s in &sines {
            sum += w * integrand(x * s);
        }
    }
    // normalized weights: sum w = 1 stands for int dx / L, each theta for d theta / (2 pi)
    let dx_dtheta = l * 2.0 * PI / theta_resolution as f64;
    Ok(-damp * sum * dx_dtheta / (4.0 * PI * b * l * l))
}

/// A root of `h_b` and the signs of `h_b` just left and right of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint {
    pub b: f64,
    pub a: f64,
    pub h_value: f64,
    /// `[sign h(a - delta), sign h(a + delta)]`. `[1, -1]` is a root where
    /// `a - [s]_b(a)` crosses zero upward, the pattern of the branches that
    /// persist as `b` grows.
    pub stable_hint: [i8; 2],
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// All roots of `h_b` on `[-bound, bound]`: sign scan on a symmetric grid of
/// `scan_resolution` points, then bisection.
pub fn find_branches(model: &OrderParameterModel, b: f64, scan_resolution: usize) -> Result<Vec<BranchPoint>> {
    check_b(b)?;
    if scan_resolution < 3 {
        return Err(invalid!("scan resolution must be at least 3, got {scan_resolution}"));
    }
    // odd count so that 0 and every +-a pair are grid points
    let m = scan_resolution | 1;
    let half = (m - 1) / 2;
    let bound = model.bound;
    let grid: Vec<f64> = (0..m)
        .map(|k| bound * ((k as f64 - half as f64) / half as f64))
        .collect();
    let values: Vec<f64> = grid.iter().map(|a| h_unchecked(model, *a, b)).collect();

    let mut roots = vec![0.0];
    for k in 0..m {
        if values[k] == 0.0 {
            roots.push(grid[k]);
        }
        if k + 1 < m && values[k] != 0.0 && values[k + 1] != 0.0 && (values[k] > 0.0) != (values[k + 1] > 0.0) {
            roots.push(bisect(model, b, grid[k], grid[k + 1], values[k]));
        }
    }
    roots.sort_by(|x, y| x.total_cmp(y));
    let mut merged: Vec<f64> = Vec::new();
    for r in roots {
        let r = if r.abs() < ZERO_MERGE_TOLERANCE { 0.0 } else { r };
        if merged.last().is_none_or(|last| (r - last).abs() > DEDUP_TOLERANCE) {
            merged.push(r);
        }
    }
    let delta = (bound * 1e-6).max(ZERO_MERGE_TOLERANCE * 0.5).min(bound);
    Ok(merged
        .into_iter()
        .map(|a| BranchPoint {
            b,
            a,
            h_value: h_unchecked(model, a, b),
            stable_hint: [
                sign(h_unchecked(model, (a - delta).max(-bound), b)),
                sign(h_unchecked(model, (a + delta).min(bound), b)),
            ],
        })
        .collect())
}

fn bisect(model: &OrderParameterModel, b: f64, mut lo: f64, mut hi: f64, h_lo: f64) -> f64 {
    let lo_positive = h_lo > 0.0;
    while hi - lo > ROOT_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = h_unchecked(model, mid, b);
        if v == 0.0 {
            return mid;
        }
        if (v > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Roots along a schedule of `b`.
pub fn branch_sweep(model: &OrderParameterModel, schedule: &[f64], scan_resolution: usize) -> Result<Vec<(f64, Vec<BranchPoint>)>> {
    crate::solver::validate_schedule(schedule)?;
    schedule.iter().map(|&b| Ok((b, find_branches(model, b, scan_resolution)?))).collect()
}

/// Free energy of the branch state `g ∝ exp(-b (s - a)^2)`, with
/// `gamma = int s^2 g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchEnergy {
    pub energy: f64,
    /// `<s>_g`, equal to `a` at a root.
    pub mean: f64,
    pub gamma: f64,
}

/// `E_b[g] = int g log g + b Var_g(s)` on `M'`. Because `g` and the kernel
/// depend on the full configuration only through `s`, this is the free
/// energy of the corresponding state on the full space.
pub fn branch_energy(model: &OrderParameterModel, a: f64, b: f64) -> Result<BranchEnergy> {
    check_b(b)?;
    let e: Vec<f64> = model.feature.iter().map(|s| gibbs_exponent(b, s - a)).collect();
    let top = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let g: Vec<f64> = e.iter().map(|e| (e - top).exp()).collect();
    let g = Density::normalized(&model.space, g)?;
    let sp = &model.space;
    let mean: f64 = sp.integrate(&g.iter().zip(&model.feature).map(|(g, s)| g * s).collect::<Vec<_>>());
    let gamma: f64 = sp.integrate(&g.iter().zip(&model.feature).map(|(g, s)| g * s * s).collect::<Vec<_>>());
    let entropy = crate::space::entropy_unchecked(sp, &g);
    Ok(BranchEnergy { energy: entropy + b * (gamma - mean * mean), mean, gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn averages_at_trivial_parameters() {
        let m = OrderParameterModel::two_rods_with_resolution(256).unwrap();
        let sines = m.feature().to_vec();
        let ones = vec![1.0; sines.len()];
        assert_abs_diff_eq!(weighted_average(&m, &sines, 0.3, 0.0).unwrap(), 0.0, epsilon = 1e-15);
        for (a, b) in [(0.0, 0.0), (0.5, 10.0), (-0.9, 300.0)] {
            assert_abs_diff_eq!(weighted_average(&m, &ones, a, b).unwrap(), 1.0, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(weighted_average(&m, &sines, 0.0, 17.0).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn h_is_exactly_odd() {
        let m = OrderParameterModel::two_rods_with_resolution(512).unwrap();
        for b in [0.0, 1.0, 30.0, 1000.0] {
            assert_eq!(h(&m, 0.0, b).unwrap(), 0.0);
            for a in [0.1, 0.5, 0.97] {
                assert_eq!(h(&m, -a, b).unwrap(), -h(&m, a, b).unwrap());
            }
        }
        assert!(h(&m, 1.01, 1.0).is_err());
    }

    #[test]
    fn roots_solve_the_average_equation() {
        let m = OrderParameterModel::two_rods_with_resolution(1024).unwrap();
        let roots = find_branches(&m, 50.0, 401).unwrap();
        assert_eq!(roots.len(), 3);
        let s = m.feature().to_vec();
        for r in roots {
            assert_abs_diff_eq!(weighted_average(&m, &s, r.a, 50.0).unwrap(), r.a, epsilon = 1e-10);
        }
    }

    #[test]
    fn branch_energy_of_a_zero_b_state() {
        let m = OrderParameterModel::two_rods_with_resolution(64).unwrap();
        let e = branch_energy(&m, 0.3, 0.0).unwrap();
        assert_abs_diff_eq!(e.energy, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.gamma, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn reduced_form_has_a_finite_axis_limit() {
        let v = h_reduced(1.0, 0.2, 3.0, 16, 16).unwrap();
        assert!(v.is_finite());
        assert!(h_reduced(1.0, 0.0, 3.0, 16, 16).unwrap().abs() < 1e-14);
    }
}
