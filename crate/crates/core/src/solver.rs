//! Potentials, free energies and solutions of the Onsager equation.
//!
//! `solve` runs the damped fixed-point iteration
//! `f <- (1 - theta) f + theta Phi(f)` with `Phi(f) = exp(-b U[f]) / Z`.
//! A step is accepted only if it does not raise the free energy; otherwise
//! `theta` is halved. After an accepted step `theta` grows back by a factor
//! two up to the configured damping.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::kernel::KernelMatrix;
use crate::space::{compensated_sum, entropy_unchecked, xlogx, Density, DiscreteSpace};

/// Smallest damping tried before the iteration is declared stalled.
const MIN_DAMPING: f64 = 1e-12;
/// Relative slack on the energy comparison, absorbing rounding.
const ENERGY_SLACK: f64 = 1e-14;

/// Starting density of a solve or of a continuation run.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDensity {
    Uniform,
    /// `f ∝ max(0, 1 + amplitude * profile)`.
    Perturbed { amplitude: f64, profile: Vec<f64> },
    /// Values of a density (normalized on use).
    Tabulated(Vec<f64>),
}

impl InitialDensity {
    pub fn density(&self, space: &DiscreteSpace) -> Result<Density> {
        match self {
            InitialDensity::Uniform => Ok(Density::uniform(space)),
            InitialDensity::Perturbed { amplitude, profile } => {
                perturb(space, &vec![1.0; space.len()], *amplitude, profile)
            }
            InitialDensity::Tabulated(values) => Density::normalized(space, values.clone()),
        }
    }
}

fn perturb(space: &DiscreteSpace, base: &[f64], amplitude: f64, profile: &[f64]) -> Result<Density> {
    if profile.len() != space.len() {
        return Err(invalid!("perturbation profile has {} values on a space of {} points", profile.len(), space.len()));
    }
    let values = base.iter().zip(profile).map(|(f, p)| f * (1.0 + amplitude * p).max(0.0)).collect();
    Density::normalized(space, values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Mixing factor `theta in (0, 1]`.
    pub damping: f64,
    pub max_iterations: usize,
    /// Target for the `L1(mu)` fixed-point residual.
    pub tolerance: f64,
    /// Strictly increasing, nonnegative values of `b` for continuation.
    pub b_schedule: Vec<f64>,
    pub init: InitialDensity,
    /// Re-apply a [`InitialDensity::Perturbed`] perturbation to the previous
    /// solution before each continuation step, so that a symmetry-broken
    /// branch is not lost to rounding.
    pub reperturb: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iterations: 10_000,
            tolerance: 1e-10,
            b_schedule: Vec::new(),
            init: InitialDensity::Uniform,
            reperturb: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid!("damping must lie in (0, 1], got {}", self.damping));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid!("tolerance must be positive, got {}", self.tolerance));
        }
        if self.max_iterations == 0 {
            return Err(invalid!("max_iterations must be positive"));
        }
        validate_schedule(&self.b_schedule)
    }
}

/// Checks that `b` values are finite, nonnegative and strictly increasing.
pub fn validate_schedule(schedule: &[f64]) -> Result<()> {
    for (i, b) in schedule.iter().enumerate() {
        if !(b.is_finite() && *b >= 0.0) {
            return Err(invalid!("b_schedule[{i}] = {b} is not a nonnegative number"));
        }
        if i > 0 && *b <= schedule[i - 1] {
            return Err(invalid!("b_schedule must be strictly increasing, but b_schedule[{i}] = {b} follows {}", schedule[i - 1]));
        }
    }
    Ok(())
}

/// One accepted iteration of [`solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub energy: f64,
    pub residual: f64,
    pub damping: f64,
    /// `|sum f w - 1|` of the iterate.
    pub mass_error: f64,
    pub min_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnsagerState {
    pub density: Density,
    /// `U[f]` at the final density.
    pub potential: Vec<f64>,
    pub b: f64,
    /// `log Z_b[f] = log sum exp(-b U[f]) w`.
    pub log_partition: f64,
    pub energy: f64,
    /// `|| f - Phi(f) ||_{L1(mu)}`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl OnsagerState {
    pub fn partition(&self) -> f64 {
        self.log_partition.exp()
    }

    /// `2 E_b / b`, undefined at `b = 0`.
    pub fn two_over_b_energy(&self) -> Option<f64> {
        two_over_b(self.energy, self.b)
    }

    pub fn min_density(&self) -> f64 {
        self.density.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn two_over_b(energy: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| 2.0 * energy / b)
}

fn check_len(k: &KernelMatrix, space: &DiscreteSpace, f: &[f64]) -> Result<()> {
    if k.len() != space.len() || f.len() != space.len() {
        return Err(invalid!(
            "kernel of {} points, space of {} points and density of {} values do not match",
            k.len(),
            space.len(),
            f.len()
        ));
    }
    Ok(())
}

/// `U[f](p_i) = sum_j k(p_i, p_j) f_j w_j`.
pub fn potential(k: &KernelMatrix, space: &DiscreteSpace, f: &[f64]) -> Result<Vec<f64>> {
    check_len(k, space, f)?;
    Ok(potential_unchecked(k, space, f))
}

fn potential_unchecked(k: &KernelMatrix, space: &DiscreteSpace, f: &[f64]) -> Vec<f64> {
    let v: Vec<f64> = f.iter().zip(space.weights()).map(|(f, w)| f * w).collect();
    let mut u = vec![0.0; f.len()];
    k.apply(&v, &mut u);
    u
}

/// `E_b[f] = sum (log f + (b/2) U[f]) f w`.
pub fn free_energy(k: &KernelMatrix, space: &DiscreteSpace, f: &[f64], b: f64) -> Result<f64> {
    check_len(k, space, f)?;
    check_b(b)?;
    let u = potential_unchecked(k, space, f);
    Ok(energy_with(space, f, &u, b))
}

fn check_b(b: f64) -> Result<()> {
    if !(b.is_finite() && b >= 0.0) {
        return Err(invalid!("b must be a nonnegative number, got {b}"));
    }
    Ok(())
}

fn energy_with(space: &DiscreteSpace, f: &[f64], u: &[f64], b: f64) -> f64 {
    entropy_unchecked(space, f) + 0.5 * b * space.integrate(&mul(f, u))
}

fn energy_from_parts(space: &DiscreteSpace, f: &[f64], fl: &[f64], u: &[f64], b: f64) -> f64 {
    compensated_sum((0..f.len()).map(|i| (fl[i] + 0.5 * b * f[i] * u[i]) * space.weight(i)))
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| a * b).collect()
}

/// `exp(-b u) / Z` and `log Z`, evaluated with the minimum of `u` factored out.
pub fn gibbs(space: &DiscreteSpace, u: &[f64], b: f64) -> (Vec<f64>, f64) {
    let umin = u.iter().copied().fold(f64::INFINITY, f64::min);
    let mut g: Vec<f64> = u.iter().map(|u| (-b * (u - umin)).exp()).collect();
    let z = space.integrate(&g);
    for v in &mut g {
        *v /= z;
    }
    (g, -b * umin + z.ln())
}

/// One application of the Onsager map; returns `Phi(f)` and `log Z_b[f]`.
pub fn onsager_map(k: &KernelMatrix, space: &DiscreteSpace, f: &[f64], b: f64) -> Result<(Density, f64)> {
    check_len(k, space, f)?;
    check_b(b)?;
    let u = potential_unchecked(k, space, f);
    let (g, log_z) = gibbs(space, &u, b);
    Ok((Density::from_raw(g), log_z))
}

pub fn l1_distance(space: &DiscreteSpace, f: &[f64], g: &[f64]) -> f64 {
    f.iter().zip(g).zip(space.weights()).map(|((a, b), w)| (a - b).abs() * w).sum()
}

/// Damped fixed-point iteration from `init` at inverse temperature `b`.
///
/// Not reaching the tolerance is reported through `converged = false`.
pub fn solve(k: &KernelMatrix, space: &DiscreteSpace, cfg: &SolverConfig, b: f64, init: &Density) -> Result<OnsagerState> {
    cfg.validate()?;
    check_b(b)?;
    check_len(k, space, init)?;
    let mut f = init.values().to_vec();
    let mut u = potential_unchecked(k, space, &f);
    // f log f, kept so that each trial step costs one logarithm per point
    let mut fl: Vec<f64> = f.iter().map(|v| xlogx(*v)).collect();
    let mut energy = energy_from_parts(space, &f, &fl, &u, b);
    let mut theta = cfg.damping;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let (mut g, mut log_z) = gibbs(space, &u, b);
    let mut residual = l1_distance(space, &f, &g);
    loop {
        trace.push(TraceRow {
            iteration: iterations,
            energy,
            residual,
            damping: theta,
            mass_error: (space.integrate(&f) - 1.0).abs(),
            min_value: f.iter().copied().fold(f64::INFINITY, f64::min),
        });
        if residual < cfg.tolerance {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iterations {
            break;
        }
        // U is linear in f, so every trial step reuses U[f] and U[g]
        let ug = potential_unchecked(k, space, &g);
        let accepted = loop {
            let mut cand: Vec<f64> = f.iter().zip(&g).map(|(a, b)| (1.0 - theta) * a + theta * b).collect();
            let mass = space.integrate(&cand);
            for v in &mut cand {
                *v /= mass;
            }
            let uc: Vec<f64> = u.iter().zip(&ug).map(|(a, b)| ((1.0 - theta) * a + theta * b) / mass).collect();
            let cl: Vec<f64> = cand.iter().map(|v| xlogx(*v)).collect();
            // E[c] - E[f] summed pointwise: its rounding scales with the change, not with E
            let change = compensated_sum((0..f.len()).map(|i| {
                ((cl[i] - fl[i]) + 0.5 * b * (cand[i] * uc[i] - f[i] * u[i])) * space.weight(i)
            }));
            if change <= ENERGY_SLACK * energy.abs().max(1.0) {
                break Some((cand, cl, uc));
            }
            theta *= 0.5;
            if theta < MIN_DAMPING {
                break None;
            }
        };
        let Some((cand, cl, uc)) = accepted else { break };
        f = cand;
        fl = cl;
        u = uc;
        energy = energy_from_parts(space, &f, &fl, &u, b);
        iterations += 1;
        theta = (2.0 * theta).min(cfg.damping);
        (g, log_z) = gibbs(space, &u, b);
        residual = l1_distance(space, &f, &g);
    }

    Ok(OnsagerState {
        density: Density::from_raw(f),
        potential: u,
        b,
        log_partition: log_z,
        energy,
        residual,
        iterations,
        converged,
        trace,
    })
}

/// Solves along `cfg.b_schedule`, each step starting from the previous
/// solution. Non-converged steps are kept and flagged.
pub fn continue_in_b(k: &KernelMatrix, space: &DiscreteSpace, cfg: &SolverConfig) -> Result<Vec<OnsagerState>> {
    cfg.validate()?;
    let mut out: Vec<OnsagerState> = Vec::with_capacity(cfg.b_schedule.len());
    for &b in &cfg.b_schedule {
        let init = match (out.last(), &cfg.init) {
            (None, init) => init.density(space)?,
            (Some(prev), InitialDensity::Perturbed { amplitude, profile }) if cfg.reperturb => {
                perturb(space, &prev.density, *amplitude, profile)?
            }
            (Some(prev), _) => prev.density.clone(),
        };
        out.push(solve(k, space, cfg, b, &init)?);
    }
    Ok(out)
}

/// `log f + 1 + b U[f]`, the first variation of `E_b` at `f`.
pub fn first_variation(k: &KernelMatrix, space: &DiscreteSpace, f: &[f64], b: f64) -> Result<Vec<f64>> {
    check_len(k, space, f)?;
    check_positive(f)?;
    let u = potential_unchecked(k, space, f);
    Ok(f.iter().zip(&u).map(|(f, u)| f.ln() + 1.0 + b * u).collect())
}

fn check_positive(f: &[f64]) -> Result<()> {
    if let Some((i, v)) = f.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(invalid!("density must be strictly positive, got {v} at point {i}"));
    }
    Ok(())
}

/// Size of the first variation after removing its `f`-mean:
/// `sum |v - <v>_f| f w`. Vanishes exactly at solutions of the Onsager
/// equation, where `log f + b U[f]` is constant.
pub fn projected_variation(k: &KernelMatrix, space: &DiscreteSpace, f: &[f64], b: f64) -> Result<f64> {
    let v = first_variation(k, space, f, b)?;
    let mean = space.integrate(&mul(&v, f));
    Ok(v.iter().zip(f).zip(space.weights()).map(|((v, f), w)| (v - mean).abs() * f * w).sum())
}

/// Compares the analytic directional derivative `sum v h w` of `E_b` with
/// central differences along `directions` random mass-preserving directions
/// `h = f (r - <r>_f)`, `r` uniform in `[-1, 1]`.
///
/// Each deviation is relative to `sum |terms of v| |h| w`, the magnitude of
/// the summands, which stays meaningful when the derivative itself is close
/// to zero. Returns the largest deviation.
pub fn gateaux_check(
    k: &KernelMatrix,
    space: &DiscreteSpace,
    f: &[f64],
    b: f64,
    directions: usize,
    step: f64,
    seed: u64,
) -> Result<f64> {
    check_len(k, space, f)?;
    check_b(b)?;
    check_positive(f)?;
    if !(step > 0.0) {
        return Err(invalid!("finite-difference step must be positive, got {step}"));
    }
    let u = potential_unchecked(k, space, f);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let r: Vec<f64> = (0..f.len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let mean_r = space.integrate(&mul(&r, f));
        let h: Vec<f64> = f.iter().zip(&r).map(|(f, r)| f * (r - mean_r)).collect();
        let analytic: f64 = f
            .iter()
            .zip(&u)
            .zip(&h)
            .zip(space.weights())
            .map(|(((f, u), h), w)| (f.ln() + 1.0 + b * u) * h * w)
            .sum();
        let scale: f64 = f
            .iter()
            .zip(&u)
            .zip(&h)
            .zip(space.weights())
            .map(|(((f, u), h), w)| (f.ln().abs() + 1.0 + b * u.abs()) * h.abs() * w)
            .sum();
        let shifted = |t: f64| -> Vec<f64> { f.iter().zip(&h).map(|(f, h)| f + t * h).collect() };
        let (fp, fm) = (shifted(step), shifted(-step));
        let ep = energy_with(space, &fp, &potential_unchecked(k, space, &fp), b);
        let em = energy_with(space, &fm, &potential_unchecked(k, space, &fm), b);
        let numeric = (ep - em) / (2.0 * step);
        worst = worst.max((numeric - analytic).abs() / scale.max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{assemble, KernelSpec};
    use crate::space::{build_space, AxisSpec};
    use approx::assert_abs_diff_eq;
    use core::f64::consts::FRAC_PI_2;

    fn torus(n: usize) -> (DiscreteSpace, KernelMatrix) {
        let s = build_space(&[AxisSpec::circle(n), AxisSpec::circle(n)]).unwrap();
        let k = assemble(&KernelSpec::TwoRodArea, &s).unwrap();
        (s, k)
    }

    fn zero_kernel(s: &DiscreteSpace) -> KernelMatrix {
        KernelMatrix::tabulated(s, vec![0.0; s.len() * s.len()]).unwrap()
    }

    #[test]
    fn zero_kernel_gives_zero_potential() {
        let s = build_space(&[AxisSpec::circle(8)]).unwrap();
        let f = Density::normalized(&s, (1..=8).map(|i| i as f64).collect()).unwrap();
        assert!(potential(&zero_kernel(&s), &s, &f).unwrap().iter().all(|u| *u == 0.0));
    }

    #[test]
    fn point_mass_sifts_a_column() {
        let (s, k) = torus(16);
        let f = Density::point_mass(&s, 37).unwrap();
        let u = potential(&k, &s, &f).unwrap();
        for (i, ui) in u.iter().enumerate() {
            assert_abs_diff_eq!(*ui, k.entry(i, 37), epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_potential_of_two_rods() {
        let (s, k) = torus(64);
        let u = potential(&k, &s, &Density::uniform(&s)).unwrap();
        for (i, ui) in u.iter().enumerate() {
            let p = s.point(i);
            let sd = (p[0] - p[1]).sin();
            assert_abs_diff_eq!(*ui, sd * sd + 0.5, epsilon = 1e-10);
        }
        for b in [0.0, 1.0, 7.5] {
            assert_abs_diff_eq!(free_energy(&k, &s, &Density::uniform(&s), b).unwrap(), b / 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn indicator_of_a_zero_set_has_energy_minus_log_measure() {
        // rods with p1 = p2 do not interact with one another
        let (s, k) = torus(32);
        let members: Vec<usize> = (0..s.len()).filter(|&i| s.point(i)[0] == s.point(i)[1]).collect();
        let f = Density::indicator(&s, &members).unwrap();
        let mu: f64 = members.iter().map(|&i| s.weight(i)).sum();
        assert_abs_diff_eq!(free_energy(&k, &s, &f, 50.0).unwrap(), -mu.ln(), epsilon = 1e-12);
    }

    #[test]
    fn onsager_map_at_zero_b_is_uniform() {
        let (s, k) = torus(8);
        let f = Density::normalized(&s, (0..64).map(|i| 1.0 + (i % 3) as f64).collect()).unwrap();
        let (g, log_z) = onsager_map(&k, &s, &f, 0.0).unwrap();
        assert!(g.iter().all(|v| (*v - 1.0).abs() < 1e-15));
        assert_eq!(log_z, 0.0);
    }

    #[test]
    fn onsager_map_of_uniform_two_rods() {
        let (s, k) = torus(32);
        let b = 3.0;
        let (g, _) = onsager_map(&k, &s, &Density::uniform(&s), b).unwrap();
        let shape: Vec<f64> = (0..s.len())
            .map(|i| {
                let sd = (s.point(i)[0] - s.point(i)[1]).sin();
                (-b * sd * sd).exp()
            })
            .collect();
        let expected = Density::normalized(&s, shape).unwrap();
        for (a, e) in g.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn large_b_does_not_overflow() {
        let s = build_space(&[AxisSpec::interval(0.0, FRAC_PI_2, 32)]).unwrap();
        let k = assemble(&KernelSpec::RhombusSymdiff, &s).unwrap();
        let f = Density::point_mass(&s, 3).unwrap();
        let (g, log_z) = onsager_map(&k, &s, &f, 1e4).unwrap();
        assert!(log_z.is_finite());
        assert_abs_diff_eq!(s.integrate(&g), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_b_solves_in_one_step() {
        let (s, k) = torus(8);
        let cfg = SolverConfig { damping: 1.0, ..Default::default() };
        let init = Density::normalized(&s, (0..64).map(|i| 1.0 + (i % 5) as f64).collect()).unwrap();
        let st = solve(&k, &s, &cfg, 0.0, &init).unwrap();
        assert!(st.converged);
        assert_eq!(st.iterations, 1);
        assert!(st.density.iter().all(|v| (*v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn solve_reaches_a_fixed_point_with_descending_energy() {
        let (s, k) = torus(32);
        let st = solve(&k, &s, &SolverConfig::default(), 5.0, &Density::uniform(&s)).unwrap();
        assert!(st.converged, "residual {}", st.residual);
        assert!(st.residual < 1e-10);
        for w in st.trace.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-13 * w[0].energy.abs().max(1.0));
        }
        for row in &st.trace {
            assert!(row.mass_error < 1e-10 && row.min_value >= 0.0);
        }
        let (g, _) = onsager_map(&k, &s, &st.density, 5.0).unwrap();
        assert!(l1_distance(&s, &st.density, &g) < 1e-10);
        assert!(st.energy >= 0.0);
        assert!(st.min_density() > 0.0);
    }

    #[test]
    fn zero_kernel_continuation_stays_uniform() {
        let s = build_space(&[AxisSpec::circle(16)]).unwrap();
        let cfg = SolverConfig { b_schedule: vec![1.0, 10.0, 100.0], ..Default::default() };
        for st in continue_in_b(&zero_kernel(&s), &s, &cfg).unwrap() {
            assert!(st.converged);
            assert_eq!(st.energy, 0.0);
            assert!(st.density.iter().all(|v| *v == 1.0));
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            SolverConfig { damping: 0.0, ..Default::default() },
            SolverConfig { damping: 1.5, ..Default::default() },
            SolverConfig { tolerance: 0.0, ..Default::default() },
            SolverConfig { b_schedule: vec![1.0, 1.0], ..Default::default() },
            SolverConfig { b_schedule: vec![-1.0], ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        let e = validate_schedule(&[5.0, 2.0]).unwrap_err();
        assert!(alloc::format!("{e}").contains("b_schedule"));
    }

    #[test]
    fn interaction_part_of_variation_is_linear_in_b() {
        let (s, k) = torus(8);
        let f = Density::normalized(&s, (0..64).map(|i| 1.0 + 0.3 * ((i * 13) % 7) as f64).collect()).unwrap();
        let v1 = first_variation(&k, &s, &f, 2.0).unwrap();
        let v2 = first_variation(&k, &s, &f, 4.0).unwrap();
        let v0 = first_variation(&k, &s, &f, 0.0).unwrap();
        for i in 0..64 {
            assert_abs_diff_eq!(v2[i] - v0[i], 2.0 * (v1[i] - v0[i]), epsilon = 1e-12);
        }
    }

    #[test]
    fn gateaux_rejects_zeros() {
        let (s, k) = torus(4);
        let f = Density::point_mass(&s, 0).unwrap();
        assert!(gateaux_check(&k, &s, &f, 1.0, 1, 1e-5, 0).is_err());
    }
}
