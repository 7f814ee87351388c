//! Interaction kernels and their grid matrices.
//!
//! The two rod kernels are squares of differences of a scalar feature,
//! `k(p, q) = (s(p) - s(q))^2`. Their matrices are stored as the feature
//! vector, which keeps four-dimensional grids affordable and makes `U[f]` an
//! `O(N)` operation. Other kernels are stored densely.

pub mod closed_form;
pub mod geometry;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use closed_form::{rhombus_kernel, sized_two_rod_kernel, two_rod_kernel};

use crate::error::{invalid, Error, Result};
use crate::space::{Axis, DiscreteSpace};

/// Which kernel to place on a space.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// Points `(p1, p2)`.
    TwoRodArea,
    /// Points `(x1, x2, p1, p2)` with `x1, x2 in [0, max_length]`.
    SizedTwoRodArea { max_length: f64 },
    /// Points `p in [0, pi/2]`.
    RhombusSymdiff,
    /// Row-major `n x n` entries over the grid points.
    Tabulated { entries: Vec<f64> },
}

/// Kind of an assembled kernel, without its data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    TwoRodArea,
    SizedTwoRodArea { max_length: f64 },
    RhombusSymdiff,
    Tabulated,
    /// `k1(p1, q1) + k2(p2, q2)` on a product space.
    Sum,
}

impl KernelSpec {
    pub fn kind(&self) -> KernelKind {
        match *self {
            KernelSpec::TwoRodArea => KernelKind::TwoRodArea,
            KernelSpec::SizedTwoRodArea { max_length } => KernelKind::SizedTwoRodArea { max_length },
            KernelSpec::RhombusSymdiff => KernelKind::RhombusSymdiff,
            KernelSpec::Tabulated { .. } => KernelKind::Tabulated,
        }
    }
}

impl KernelKind {
    /// Closed-form value at arbitrary (off-grid) points, if there is one.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        match *self {
            KernelKind::TwoRodArea => Some(two_rod_kernel([x[0], x[1]], [y[0], y[1]])),
            KernelKind::SizedTwoRodArea { .. } => {
                Some(closed_form::sized_unchecked([x[0], x[1], x[2], x[3]], [y[0], y[1], y[2], y[3]]))
            }
            KernelKind::RhombusSymdiff => rhombus_kernel(x[0], y[0]).ok(),
            KernelKind::Tabulated | KernelKind::Sum => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Dense(Vec<f64>),
    SquaredFeature(Vec<f64>),
}

/// A kernel evaluated on the points of a [`DiscreteSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    kind: KernelKind,
    n: usize,
    repr: Repr,
    sup_norm: f64,
    lipschitz_estimate: f64,
}

/// Seed of the sampling used for Lipschitz estimates and large validations.
const SAMPLING_SEED: u64 = 0x6b65_726e_656c;
const LIPSCHITZ_ANCHORS: usize = 512;
const LIPSCHITZ_TARGETS: usize = 256;
/// Matrices with at most this many entries are validated exhaustively.
const EXHAUSTIVE_ENTRIES: usize = 1 << 24;
const VALIDATION_ROWS: usize = 256;
/// Pass threshold for symmetry and diagonal violations.
pub const VALIDATION_TOLERANCE: f64 = 1e-10;

/// Evaluates `spec` on all point pairs of `space`.
pub fn assemble(spec: &KernelSpec, space: &DiscreteSpace) -> Result<KernelMatrix> {
    let n = space.len();
    let repr = match spec {
        KernelSpec::TwoRodArea => {
            expect_dim(space, 2, "two-rod")?;
            Repr::SquaredFeature((0..n).map(|i| two_rod_feature(space.point(i))).collect())
        }
        KernelSpec::SizedTwoRodArea { max_length } => {
            let l = *max_length;
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid!("maximal rod length must be positive, got {l}"));
            }
            expect_dim(space, 4, "sized two-rod")?;
            for a in 0..2 {
                match space.axes()[a] {
                    Axis::Interval { lo, hi } if lo >= 0.0 && hi <= l * (1.0 + 1e-12) => {}
                    other => return Err(invalid!("length axis {a} must lie in [0, {l}], got {other:?}")),
                }
            }
            Repr::SquaredFeature((0..n).map(|i| closed_form::sized_feature(space.point(i))).collect())
        }
        KernelSpec::RhombusSymdiff => {
            expect_dim(space, 1, "rhombus")?;
            match space.axes()[0] {
                Axis::Interval { lo, hi } if lo >= 0.0 && hi <= FRAC_PI_2 * (1.0 + 1e-12) => {}
                other => return Err(invalid!("rhombus axis must lie in [0, pi/2], got {other:?}")),
            }
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in i + 1..n {
                    let v = closed_form::rhombus_unchecked(
                        space.point(i)[0].min(FRAC_PI_2),
                        space.point(j)[0].min(FRAC_PI_2),
                    );
                    m[i * n + j] = v;
                    m[j * n + i] = v;
                }
            }
            Repr::Dense(m)
        }
        KernelSpec::Tabulated { entries } => {
            let k = KernelMatrix::tabulated(space, entries.clone())?;
            let report = validate(&k, space);
            if !report.passed {
                return Err(Error::KernelValidation(report.summary()));
            }
            return Ok(k);
        }
    };
    Ok(KernelMatrix::from_repr(spec.kind(), n, repr, space))
}

fn two_rod_feature(p: &[f64]) -> f64 {
    (p[0] - p[1]).sin()
}

fn expect_dim(space: &DiscreteSpace, dim: usize, name: &str) -> Result<()> {
    if space.dim() != dim {
        return Err(invalid!("{name} kernel needs a {dim}-dimensional space, got dimension {}", space.dim()));
    }
    Ok(())
}

impl KernelMatrix {
    fn from_repr(kind: KernelKind, n: usize, repr: Repr, space: &DiscreteSpace) -> Self {
        let sup_norm = match &repr {
            Repr::Dense(m) => m.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Repr::SquaredFeature(s) => {
                let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
                (hi - lo) * (hi - lo)
            }
        };
        let mut k = Self { kind, n, repr, sup_norm, lipschitz_estimate: 0.0 };
        k.lipschitz_estimate = k.estimate_lipschitz(space);
        k
    }

    /// A tabulated kernel, not yet validated (see [`validate`]).
    pub fn tabulated(space: &DiscreteSpace, entries: Vec<f64>) -> Result<Self> {
        let n = space.len();
        if entries.len() != n * n {
            return Err(invalid!("tabulated kernel has {} entries, a space of {n} points needs {}", entries.len(), n * n));
        }
        if let Some(v) = entries.iter().find(|v| !v.is_finite()) {
            return Err(invalid!("tabulated kernel entry {v} is not finite"));
        }
        Ok(Self::from_repr(KernelKind::Tabulated, n, Repr::Dense(entries), space))
    }

    /// The kernel `k1(p1, q1) + k2(p2, q2)` on `product`, which must be the
    /// product of the spaces of `k1` and `k2` (second factor fastest).
    pub fn sum_on_product(k1: &KernelMatrix, k2: &KernelMatrix, product: &DiscreteSpace) -> Result<Self> {
        let (n1, n2) = (k1.n, k2.n);
        let n = n1 * n2;
        if product.len() != n {
            return Err(invalid!("product space has {} points, expected {n1} x {n2}", product.len()));
        }
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = k1.entry(i / n2, j / n2) + k2.entry(i % n2, j % n2);
            }
        }
        Ok(Self::from_repr(KernelKind::Sum, n, Repr::Dense(m), product))
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Empirical Lipschitz constant: max of `|k(p_i, s) - k(p_j, s)| / d(p_i, p_j)`
    /// over grid neighbors `p_i, p_j` and sampled `s`.
    pub fn lipschitz_estimate(&self) -> f64 {
        self.lipschitz_estimate
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.repr {
            Repr::Dense(m) => m[i * self.n + j],
            Repr::SquaredFeature(s) => {
                let d = s[i] - s[j];
                d * d
            }
        }
    }

    /// The scalar feature of a squared-feature kernel.
    pub fn feature(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::SquaredFeature(s) => Some(s),
            Repr::Dense(_) => None,
        }
    }

    /// Dense row-major copy of all entries.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::SquaredFeature(_) => {
                let n = self.n;
                (0..n * n).map(|k| self.entry(k / n, k % n)).collect()
            }
        }
    }

    /// `out_i = sum_j k_ij v_j`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        match &self.repr {
            Repr::Dense(m) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = m[i * n..(i + 1) * n].iter().zip(v).map(|(k, v)| k * v).sum();
                }
            }
            Repr::SquaredFeature(s) => {
                let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
                for (si, vi) in s.iter().zip(v) {
                    m0 += vi;
                    m1 += vi * si;
                    m2 += vi * si * si;
                }
                for (o, si) in out.iter_mut().zip(s) {
                    // (s_i - s_j)^2 expanded; clamp the rounding of a sum of squares
                    *o = (m0 * si * si - 2.0 * si * m1 + m2).max(0.0);
                }
            }
        }
    }

    fn estimate_lipschitz(&self, space: &DiscreteSpace) -> f64 {
        let n = self.n;
        let mut rng = ChaCha8Rng::seed_from_u64(SAMPLING_SEED);
        let anchors = sample_indices(&mut rng, n, LIPSCHITZ_ANCHORS);
        let targets = sample_indices(&mut rng, n, LIPSCHITZ_TARGETS);
        let mut best: f64 = 0.0;
        for &i in &anchors {
            for j in space.grid_neighbors(i) {
                let d = space.distance(i, j);
                if d <= 0.0 {
                    continue;
                }
                for &s in &targets {
                    best = best.max((self.entry(i, s) - self.entry(j, s)).abs() / d);
                }
            }
        }
        best
    }
}

fn sample_indices(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    if n <= count {
        (0..n).collect()
    } else {
        (0..count).map(|_| rng.random_range(0..n)).collect()
    }
}

/// Outcome of [`validate`]. Witness indices refer to grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub passed: bool,
    /// Whether every entry was inspected (otherwise a seeded row sample).
    pub exhaustive: bool,
    pub max_symmetry_violation: f64,
    pub symmetry_witness: Option<(usize, usize)>,
    pub max_diagonal: f64,
    pub diagonal_witness: Option<usize>,
    pub min_entry: f64,
    pub min_witness: Option<(usize, usize)>,
    pub sup_norm: f64,
    pub lipschitz_estimate: f64,
}

impl ValidationReport {
    /// One-line description of the failures, or `"pass"`.
    pub fn summary(&self) -> alloc::string::String {
        if self.passed {
            return "pass".into();
        }
        let mut parts = Vec::new();
        if !(self.max_symmetry_violation < VALIDATION_TOLERANCE) {
            parts.push(format!(
                "asymmetric by {:e} at {:?}",
                self.max_symmetry_violation, self.symmetry_witness
            ));
        }
        if !(self.max_diagonal.abs() < VALIDATION_TOLERANCE) {
            parts.push(format!("diagonal entry {:e} at {:?}", self.max_diagonal, self.diagonal_witness));
        }
        if self.min_entry < 0.0 {
            parts.push(format!("negative entry {:e} at {:?}", self.min_entry, self.min_witness));
        }
        parts.join("; ")
    }
}

/// Checks symmetry, zero diagonal and nonnegativity.
pub fn validate(matrix: &KernelMatrix, space: &DiscreteSpace) -> ValidationReport {
    let _ = space;
    let n = matrix.n;
    let exhaustive = n.saturating_mul(n) <= EXHAUSTIVE_ENTRIES;
    let rows = if exhaustive {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(SAMPLING_SEED ^ 1);
        sample_indices(&mut rng, n, VALIDATION_ROWS)
    };
    let mut sym = (0.0, None);
    let mut diag: (f64, Option<usize>) = (0.0, None);
    let mut min = (f64::INFINITY, None);
    for &i in &rows {
        let d = matrix.entry(i, i);
        if d.abs() > diag.0.abs() || diag.1.is_none() {
            diag = (d, Some(i));
        }
        for j in 0..n {
            let v = matrix.entry(i, j);
            if v < min.0 {
                min = (v, Some((i, j)));
            }
            let s = (v - matrix.entry(j, i)).abs();
            if s > sym.0 {
                sym = (s, Some((i, j)));
            }
        }
    }
    let passed = sym.0 < VALIDATION_TOLERANCE && diag.0.abs() < VALIDATION_TOLERANCE && min.0 >= 0.0;
    ValidationReport {
        passed,
        exhaustive,
        max_symmetry_violation: sym.0,
        symmetry_witness: sym.1,
        max_diagonal: diag.0,
        diagonal_witness: diag.1,
        min_entry: min.0,
        min_witness: min.1,
        sup_norm: matrix.sup_norm,
        lipschitz_estimate: matrix.lipschitz_estimate,
    }
}
