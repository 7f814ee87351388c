//! Numerical check of the hypotheses under which, of two zero sets `A0` and
//! `A1`, the limit cannot concentrate on `A1`: a map `T` from a neighborhood
//! of `A1` into a neighborhood of `A0` that is one-to-one, does not increase
//! the kernel and expands measure by a factor `c > 1`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{neighborhood, ZeroSet};
use crate::error::{invalid, Result};
use crate::kernel::KernelMatrix;
use crate::space::{Axis, DiscreteSpace};

/// Relative slack on the kernel comparison, in units of `sup k`.
pub const KERNEL_SLACK: f64 = 1e-12;
/// Relative slack on the finite-difference Jacobian.
pub const JACOBIAN_SLACK: f64 = 1e-6;
const FD_STEP: f64 = 1e-6;
const SUBSAMPLES: usize = 4;
const TEST_SETS: usize = 12;
const EXHAUSTIVE_PAIRS: usize = 4_000_000;

/// A point map on coordinates. Periodic outputs need not be wrapped.
pub trait PointMap {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Option<Vec<f64>>;
    fn name(&self) -> String;
}

#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub dim: usize,
}

impl PointMap for Identity {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(x.to_vec())
    }
    fn name(&self) -> String {
        "identity".into()
    }
}

/// Two rods: keeps the second angle and moves the relative angle
/// `d = p1 - p2` from near `0` or `pi` to just below or above `pi/2`,
/// stretching it by `c`. Defined for all `d`; the branch is picked by
/// whether `d` is closer to `0` or to `pi`.
#[derive(Debug, Clone, Copy)]
pub struct TwoRodFold {
    pub c: f64,
    pub eps: f64,
}

impl PointMap for TwoRodFold {
    fn dim(&self) -> usize {
        2
    }
    fn apply(&self, x: &[f64]) -> Option<Vec<f64>> {
        let d = Axis::circle().difference(x[0], x[1]);
        let rel = if d.abs() <= FRAC_PI_2 {
            FRAC_PI_2 - self.c * (self.eps - d)
        } else {
            let d = if d < 0.0 { d + 2.0 * PI } else { d };
            FRAC_PI_2 - self.c * (PI - self.eps - d)
        };
        Some(vec![x[1] + rel, x[1]])
    }
    fn name(&self) -> String {
        format!("two-rod fold (c = {}, eps = {})", self.c, self.eps)
    }
}

/// Rhombus: `p -> pi/2 - c (q + eps - p)`, sending `(q - eps, q + eps)`
/// onto `(pi/2 - 2 c eps, pi/2)`.
#[derive(Debug, Clone, Copy)]
pub struct RhombusFold {
    pub c: f64,
    pub q: f64,
    pub eps: f64,
}

impl PointMap for RhombusFold {
    fn dim(&self) -> usize {
        1
    }
    fn apply(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![FRAC_PI_2 - self.c * (self.q + self.eps - x[0])])
    }
    fn name(&self) -> String {
        format!("rhombus fold (c = {}, q = {}, eps = {})", self.c, self.q, self.eps)
    }
}

pub struct SelectionSpec {
    pub set0: ZeroSet,
    pub set1: ZeroSet,
    pub map: Box<dyn PointMap>,
    pub c: f64,
    pub eps0: f64,
    pub eps1: f64,
}

impl core::fmt::Debug for SelectionSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("SelectionSpec")
            .field("set0", &self.set0)
            .field("set1", &self.set1)
            .field("map", &self.map.name())
            .field("c", &self.c)
            .field("eps0", &self.eps0)
            .field("eps1", &self.eps1)
            .finish()
    }
}

/// Grid spacing along the widest axis, used as snapping slack for `eps0`.
fn max_spacing(space: &DiscreteSpace) -> f64 {
    (0..space.dim())
        .filter_map(|a| space.axis_nodes(a).map(|n| space.axes()[a].length() / n.len().max(1) as f64))
        .fold(0.0, f64::max)
}

impl SelectionSpec {
    /// Two rods on a torus grid: `A1 = {sin(p1 - p2) = 0}`,
    /// `A0 = {sin(p1 - p2) = 1}`. Under the max metric `|p1 - p2| < eps`
    /// is the `eps / 2` neighborhood of the diagonal, and the image lies
    /// within `c eps` of `A0` plus one grid step.
    pub fn two_rods(k: &KernelMatrix, space: &DiscreteSpace, c: f64, eps: f64) -> Result<Self> {
        let tau = KERNEL_SLACK * k.sup_norm().max(1.0);
        Ok(Self {
            set0: ZeroSet::feature_level(k, 1.0, tau)?,
            set1: ZeroSet::feature_level(k, 0.0, tau)?,
            map: Box::new(TwoRodFold { c, eps }),
            c,
            eps0: c * eps + max_spacing(space),
            eps1: 0.5 * eps,
        })
    }

    /// Rhombus on `[0, pi/2]`: `A1` the grid point nearest `q`, `A0 = {pi/2}`.
    pub fn rhombus(k: &KernelMatrix, space: &DiscreteSpace, q: f64, c: f64, eps: f64) -> Result<Self> {
        let i1 = space.nearest_index(&[q]).ok_or_else(|| invalid!("q = {q} is outside the space"))?;
        let i0 = space.nearest_index(&[FRAC_PI_2]).ok_or_else(|| invalid!("pi/2 is outside the space"))?;
        let q = space.point(i1)[0];
        Ok(Self {
            set0: ZeroSet::new(k, vec![i0], 0.0)?,
            set1: ZeroSet::new(k, vec![i1], 0.0)?,
            map: Box::new(RhombusFold { c, q, eps }),
            c,
            eps0: 2.0 * c * eps + max_spacing(space),
            eps1: eps,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: &'static str,
    pub passed: bool,
    /// Worst value found; its meaning is given in `detail`.
    pub value: f64,
    pub witness: Option<(usize, usize)>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub passed: bool,
    pub conditions: Vec<Condition>,
    /// Number of grid points in the neighborhood of `A1`.
    pub domain_size: usize,
    pub verdict: String,
}

impl SelectionReport {
    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

struct Eval<'a> {
    k: &'a KernelMatrix,
    space: &'a DiscreteSpace,
}

impl Eval<'_> {
    /// Kernel at continuous points: the closed form if there is one,
    /// otherwise the matrix entry of the nearest grid points.
    fn at(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        if let Some(v) = self.k.kind().eval(x, y) {
            return Some(v);
        }
        Some(self.k.entry(self.space.nearest_index(x)?, self.space.nearest_index(y)?))
    }
}

fn wrap_point(space: &DiscreteSpace, x: &[f64]) -> Option<Vec<f64>> {
    space.axes().iter().zip(x).map(|(a, &v)| a.wrap(v)).collect()
}

fn determinant(mut m: Vec<f64>, n: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a * n + col].abs().total_cmp(&m[b * n + col].abs())).unwrap();
        if m[piv * n + col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            for j in 0..n {
                m.swap(piv * n + j, col * n + j);
            }
            det = -det;
        }
        det *= m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            for j in col..n {
                m[r * n + j] -= f * m[col * n + j];
            }
        }
    }
    det
}

/// Voronoi cell `[lo, hi]` of each node along one axis. Periodic cells may
/// extend past the ends of `[0, period)`.
fn cells(axis: &Axis, nodes: &[f64]) -> Vec<(f64, f64)> {
    let n = nodes.len();
    (0..n)
        .map(|k| {
            let lo = if k > 0 {
                0.5 * (nodes[k - 1] + nodes[k])
            } else {
                match *axis {
                    Axis::Periodic { period } => 0.5 * (nodes[n - 1] - period + nodes[0]),
                    Axis::Interval { lo, .. } => lo,
                }
            };
            let hi = if k + 1 < n {
                0.5 * (nodes[k] + nodes[k + 1])
            } else {
                match *axis {
                    Axis::Periodic { period } => 0.5 * (nodes[n - 1] + nodes[0] + period),
                    Axis::Interval { hi, .. } => hi,
                }
            };
            (lo, hi)
        })
        .collect()
}

/// Runs the checks on grid points within `eps1` of `A1`:
/// images defined and within `eps0` of `A0`; `T` one-to-one after snapping
/// to the grid; `k(Tp, Tq) <= k(p, q)`; `|det DT| >= c` by finite
/// differences; `mu(T(B)) >= c mu(B)` for `B` the whole neighborhood and
/// random unions of boxes, with images of supersampled cells snapped to the
/// grid; and `k(p, q) > 0` for `p` in `A1` and `q` outside the neighborhood.
/// Pairs are sampled when there are more than a few million.
pub fn selection_test(
    k: &KernelMatrix,
    space: &DiscreteSpace,
    spec: &SelectionSpec,
    samples: usize,
    seed: u64,
) -> Result<SelectionReport> {
    let dim = space.dim();
    if spec.map.dim() != dim {
        return Err(invalid!("map of dimension {} on a {dim}-dimensional space", spec.map.dim()));
    }
    if k.len() != space.len() {
        return Err(invalid!("kernel of {} points on a space of {}", k.len(), space.len()));
    }
    if !(spec.c > 1.0 && spec.eps0 > 0.0 && spec.eps1 > 0.0) {
        return Err(invalid!("need c > 1 and positive eps0, eps1"));
    }
    let shape = space.shape().ok_or_else(|| invalid!("the selection test needs a tensor grid"))?.to_vec();
    let n = space.len();
    let in_b1 = neighborhood(space, spec.set1.members(), spec.eps1, true);
    let b1: Vec<usize> = (0..n).filter(|&i| in_b1[i]).collect();
    if b1.is_empty() {
        return Err(invalid!("the neighborhood of A1 has no grid points"));
    }
    let eval = Eval { k, space };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conditions = Vec::new();

    // images
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(b1.len());
    let mut snapped = Vec::with_capacity(b1.len());
    let mut outside = None;
    for &i in &b1 {
        match spec.map.apply(space.point(i)).and_then(|y| wrap_point(space, &y)) {
            Some(y) => {
                snapped.push(space.nearest_index(&y).expect("wrapped point"));
                images.push(y);
            }
            None => {
                outside = Some(i);
                break;
            }
        }
    }
    if let Some(i) = outside {
        conditions.push(Condition {
            name: "maps into M",
            passed: false,
            value: f64::NAN,
            witness: Some((i, i)),
            detail: format!("T leaves the space at grid point {i}"),
        });
        return Ok(finish(conditions, b1.len()));
    }

    let mut worst_target = 0.0f64;
    let mut target_witness = None;
    for (t, y) in images.iter().enumerate() {
        let d = spec.set0.members().iter().map(|&a| space.distance_between(y, space.point(a))).fold(f64::INFINITY, f64::min);
        if d > worst_target {
            worst_target = d;
            target_witness = Some((b1[t], b1[t]));
        }
    }
    conditions.push(Condition {
        name: "maps into B0",
        passed: worst_target < spec.eps0,
        value: worst_target,
        witness: target_witness,
        detail: format!("largest distance from T(p) to A0 is {worst_target:.6e}, eps0 = {:.6e}", spec.eps0),
    });

    let mut order: Vec<usize> = (0..b1.len()).collect();
    order.sort_by_key(|&t| snapped[t]);
    let collision = order.windows(2).find(|w| snapped[w[0]] == snapped[w[1]]).map(|w| (b1[w[0]], b1[w[1]]));
    conditions.push(Condition {
        name: "injective",
        passed: collision.is_none(),
        value: collision.map_or(0.0, |_| 1.0),
        witness: collision,
        detail: match collision {
            Some((a, b)) => format!("grid points {a} and {b} snap to the same image"),
            None => format!("{} grid points have distinct snapped images", b1.len()),
        },
    });

    // kernel does not increase
    let m = b1.len();
    let pairs: Vec<(usize, usize)> = if m * (m - 1) / 2 <= samples {
        (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))).collect()
    } else {
        (0..samples).map(|_| (rng.random_range(0..m), rng.random_range(0..m))).collect()
    };
    let slack = KERNEL_SLACK * k.sup_norm().max(f64::MIN_POSITIVE);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for &(a, b) in &pairs {
        let before = k.entry(b1[a], b1[b]);
        let after = eval.at(&images[a], &images[b]).unwrap_or(f64::INFINITY);
        if after - before > worst {
            worst = after - before;
            witness = Some((b1[a], b1[b]));
        }
    }
    conditions.push(Condition {
        name: "kernel not increased",
        passed: worst <= slack,
        value: worst,
        witness,
        detail: format!("max of k(Tp, Tq) - k(p, q) over {} pairs is {worst:.6e}", pairs.len()),
    });

    // Jacobian
    let mut min_det = f64::INFINITY;
    let mut det_witness = None;
    for &i in &b1 {
        let x = space.point(i);
        let mut jac = vec![0.0; dim * dim];
        let mut ok = true;
        for col in 0..dim {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[col] += FD_STEP;
            xm[col] -= FD_STEP;
            match (spec.map.apply(&xp), spec.map.apply(&xm)) {
                (Some(yp), Some(ym)) => {
                    for row in 0..dim {
                        jac[row * dim + col] = space.axes()[row].difference(yp[row], ym[row]) / (2.0 * FD_STEP);
                    }
                }
                _ => ok = false,
            }
        }
        let det = if ok { determinant(jac, dim).abs() } else { 0.0 };
        if det < min_det {
            min_det = det;
            det_witness = Some((i, i));
        }
    }
    conditions.push(Condition {
        name: "jacobian",
        passed: min_det >= spec.c * (1.0 - JACOBIAN_SLACK),
        value: min_det,
        witness: det_witness,
        detail: format!("min |det DT| is {min_det:.6}, c = {}", spec.c),
    });

    // pushforward measure on test sets
    let axis_cells: Vec<Vec<(f64, f64)>> =
        (0..dim).map(|a| cells(&space.axes()[a], space.axis_nodes(a).expect("tensor grid"))).collect();
    let mut test_sets: Vec<Vec<usize>> = vec![b1.clone()];
    for _ in 0..TEST_SETS {
        let boxes = rng.random_range(1..=3usize);
        let mut mark = vec![false; n];
        for _ in 0..boxes {
            let centre = space.multi_index(b1[rng.random_range(0..m)]).expect("tensor grid");
            let half: Vec<usize> = shape.iter().map(|&s| rng.random_range(0..=(s / 32).max(1))).collect();
            let mut idx = vec![0usize; dim];
            let total: usize = half.iter().map(|h| 2 * h + 1).product();
            for code in 0..total {
                let mut c = code;
                let mut inside = true;
                for a in 0..dim {
                    let off = (c % (2 * half[a] + 1)) as isize - half[a] as isize;
                    c /= 2 * half[a] + 1;
                    let v = centre[a] as isize + off;
                    let s = shape[a] as isize;
                    idx[a] = match space.axes()[a] {
                        Axis::Periodic { .. } => v.rem_euclid(s) as usize,
                        Axis::Interval { .. } if (0..s).contains(&v) => v as usize,
                        _ => {
                            inside = false;
                            0
                        }
                    };
                }
                if inside {
                    let j = space.flat_index(&idx).expect("in range");
                    mark[j] = in_b1[j];
                }
            }
        }
        let set: Vec<usize> = (0..n).filter(|&j| mark[j]).collect();
        if !set.is_empty() {
            test_sets.push(set);
        }
    }
    let mut hit = vec![false; n];
    let mut min_ratio = f64::INFINITY;
    let mut ratio_witness = None;
    let subs = SUBSAMPLES.pow(dim as u32);
    for set in &test_sets {
        let mut touched = Vec::new();
        let mut pre = 0.0;
        for &i in set {
            let mut landed = 0;
            let idx = space.multi_index(i).expect("tensor grid");
            let mut x = vec![0.0; dim];
            for code in 0..subs {
                let mut c = code;
                for a in 0..dim {
                    let (lo, hi) = axis_cells[a][idx[a]];
                    x[a] = lo + (hi - lo) * ((c % SUBSAMPLES) as f64 + 0.5) / SUBSAMPLES as f64;
                    c /= SUBSAMPLES;
                }
                if let Some(j) = spec.map.apply(&x).and_then(|y| wrap_point(space, &y)).and_then(|y| space.nearest_index(&y)) {
                    landed += 1;
                    if !hit[j] {
                        hit[j] = true;
                        touched.push(j);
                    }
                }
            }
            // parts of a cell mapped out of M do not count towards B
            pre += space.weight(i) * landed as f64 / subs as f64;
        }
        let image: f64 = touched.iter().map(|&j| space.weight(j)).sum();
        for j in touched {
            hit[j] = false;
        }
        let ratio = image / pre;
        if ratio < min_ratio {
            min_ratio = ratio;
            ratio_witness = Some((set[0], set[set.len() - 1]));
        }
    }
    conditions.push(Condition {
        name: "measure expansion",
        passed: min_ratio >= spec.c,
        value: min_ratio,
        witness: ratio_witness,
        detail: format!("min mu(T(B)) / mu(B) over {} test sets is {min_ratio:.6}, c = {}", test_sets.len(), spec.c),
    });

    // separation
    let out: Vec<usize> = (0..n).filter(|&j| !in_b1[j]).collect();
    let a1 = spec.set1.members();
    let mut min_k = f64::INFINITY;
    let mut sep_witness = None;
    let mut check = |p: usize, q: usize| {
        let v = k.entry(p, q);
        if v < min_k {
            min_k = v;
            sep_witness = Some((p, q));
        }
    };
    let count = if out.is_empty() {
        0
    } else if a1.len() * out.len() <= EXHAUSTIVE_PAIRS {
        for &p in a1 {
            for &q in &out {
                check(p, q);
            }
        }
        a1.len() * out.len()
    } else {
        for _ in 0..samples {
            check(a1[rng.random_range(0..a1.len())], out[rng.random_range(0..out.len())]);
        }
        samples
    };
    conditions.push(Condition {
        name: "separation",
        passed: min_k > 0.0,
        value: min_k,
        witness: sep_witness,
        detail: format!("min k(p, q) for p in A1, q outside the neighborhood, over {count} pairs is {min_k:.6e}"),
    });

    Ok(finish(conditions, b1.len()))
}

fn finish(conditions: Vec<Condition>, domain_size: usize) -> SelectionReport {
    let failed: Vec<&str> = conditions.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    let passed = failed.is_empty();
    let verdict = if passed {
        String::from("hypotheses numerically satisfied (injectivity and measure expansion up to grid snapping)")
    } else {
        format!("hypotheses fail: {}", failed.join(", "))
    };
    SelectionReport { passed, conditions, domain_size, verdict }
}
