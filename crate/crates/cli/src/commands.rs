//! Subcommands. Each writes its artifacts into the output directory and
//! returns a human-readable summary together with the exit status.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use onsager_core::branch::{branch_energy, branch_sweep, OrderParameterModel};
use onsager_core::kernel::{validate, KernelMatrix};
use onsager_core::limit::{concentration, selection_test, zero_pairs, ZeroSet, DEFAULT_RELATIVE_TAU};
use onsager_core::solver::{continue_in_b, solve as solve_at, OnsagerState};
use onsager_core::space::DiscreteSpace;
use serde::Serialize;

use crate::config::{self, BranchesConfig, ExperimentConfig, KernelConfig};
use crate::error::{CliError, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_VALIDATION};
use crate::io::{self, num};

pub struct Outcome {
    pub summary: String,
    pub exit: i32,
}

fn prepare(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(out.join(name), text).map_err(|e| CliError::Io(format!("{name}: {e}")))
}

fn write_summary(out: &Path, name: &str, summary: &str) -> Result<(), CliError> {
    fs::write(out.join(name), summary).map_err(|e| CliError::Io(format!("{name}: {e}")))
}

#[derive(Debug, Serialize)]
pub struct StateRecord {
    pub b: f64,
    pub energy: f64,
    pub two_over_b_energy: Option<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub log_partition: f64,
    pub min_density: f64,
    pub density_file: String,
}

fn density_name(step: usize) -> String {
    format!("density_{step:03}.txt")
}

/// Writes densities, `trace.csv` and `continuation.csv` for a list of states.
fn write_states(cfg: &ExperimentConfig, out: &Path, states: &[OnsagerState]) -> Result<Vec<StateRecord>, CliError> {
    let descriptor = cfg.space_descriptor();
    let mut trace = Vec::new();
    let mut table = Vec::new();
    let mut records = Vec::new();
    for (step, st) in states.iter().enumerate() {
        let file = density_name(step);
        io::write_density(&out.join(&file), &descriptor, Some(st.b), &st.density)?;
        for r in &st.trace {
            trace.push(vec![
                num(st.b),
                r.iteration.to_string(),
                num(r.energy),
                num(r.residual),
                st.b.gt(&0.0).then(|| num(2.0 * r.energy / st.b)).unwrap_or_default(),
                num(r.damping),
                num(r.mass_error),
                num(r.min_value),
            ]);
        }
        let rec = StateRecord {
            b: st.b,
            energy: st.energy,
            two_over_b_energy: st.two_over_b_energy(),
            residual: st.residual,
            iterations: st.iterations,
            converged: st.converged,
            log_partition: st.log_partition,
            min_density: st.min_density(),
            density_file: file,
        };
        table.push(vec![
            num(rec.b),
            num(rec.energy),
            rec.two_over_b_energy.map(num).unwrap_or_default(),
            num(rec.residual),
            rec.iterations.to_string(),
            rec.converged.to_string(),
            num(rec.log_partition),
            num(rec.min_density),
            rec.density_file.clone(),
        ]);
        records.push(rec);
    }
    io::write_csv(
        &out.join("trace.csv"),
        &["b", "iteration", "energy", "residual", "two_over_b_energy", "damping", "mass_error", "min_value"],
        &trace,
    )?;
    io::write_csv(
        &out.join("continuation.csv"),
        &["b", "energy", "two_over_b_energy", "residual", "iterations", "converged", "log_partition", "min_density", "density_file"],
        &table,
    )?;
    Ok(records)
}

fn state_lines(s: &mut String, records: &[StateRecord]) {
    for r in records {
        writeln!(
            s,
            "  b = {:<8} 2E/b = {:<12} residual = {:.3e}  iterations = {:<6}{}",
            num(r.b),
            r.two_over_b_energy.map_or("-".into(), |v| format!("{v:.6}")),
            r.residual,
            r.iterations,
            if r.converged { "" } else { "  NOT CONVERGED" }
        )
        .unwrap();
    }
}

struct Setup {
    space: DiscreteSpace,
    k: KernelMatrix,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let space = cfg.build_space()?;
    let k = cfg.kernel(&space)?;
    Ok(Setup { space, k })
}

#[derive(Debug, Serialize)]
struct SolveReport<'a> {
    command: &'static str,
    name: &'a str,
    space: String,
    states: Vec<StateRecord>,
}

pub fn solve(cfg: &ExperimentConfig, out: &Path, b: Option<f64>) -> Result<Outcome, CliError> {
    let b = match b.or_else(|| cfg.solver.b_schedule.last().copied()) {
        Some(b) => b,
        None => return Err(CliError::Usage("solve needs --b or a nonempty solver.b_schedule".into())),
    };
    if !(b.is_finite() && b >= 0.0) {
        return Err(CliError::Usage(format!("b must be finite and nonnegative, got {b}")));
    }
    prepare(out)?;
    let Setup { space, k } = setup(cfg)?;
    let scfg = cfg.solver_config(&space)?;
    let init = scfg.init.density(&space)?;
    let st = solve_at(&k, &space, &scfg, b, &init)?;
    let records = write_states(cfg, out, std::slice::from_ref(&st))?;
    let mut s = format!("solve `{}` at b = {}\n", cfg.name, num(b));
    state_lines(&mut s, &records);
    let exit = if st.converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
    write_json(out, "solve.json", &SolveReport { command: "solve", name: &cfg.name, space: cfg.space_descriptor(), states: records })?;
    write_summary(out, "solve.txt", &s)?;
    Ok(Outcome { summary: s, exit })
}

fn run_sweep(cfg: &ExperimentConfig, setup: &Setup, out: &Path) -> Result<(Vec<OnsagerState>, Vec<StateRecord>), CliError> {
    let scfg = cfg.solver_config(&setup.space)?;
    if scfg.b_schedule.is_empty() {
        return Err(CliError::Schema { path: "solver.b_schedule".into(), message: "a continuation needs at least one value".into() });
    }
    let states = continue_in_b(&setup.k, &setup.space, &scfg)?;
    let records = write_states(cfg, out, &states)?;
    Ok((states, records))
}

pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    prepare(out)?;
    let st = setup(cfg)?;
    let (states, records) = run_sweep(cfg, &st, out)?;
    let mut s = format!("continuation `{}` over {} values of b\n", cfg.name, states.len());
    state_lines(&mut s, &records);
    let exit = if states.iter().all(|s| s.converged) { EXIT_OK } else { EXIT_NOT_CONVERGED };
    write_json(out, "sweep.json", &SolveReport { command: "sweep", name: &cfg.name, space: cfg.space_descriptor(), states: records })?;
    write_summary(out, "sweep.txt", &s)?;
    Ok(Outcome { summary: s, exit })
}

#[derive(Debug, Serialize)]
pub struct BranchRecord {
    pub b: f64,
    pub roots: Vec<RootRecord>,
}

#[derive(Debug, Serialize)]
pub struct RootRecord {
    pub a: f64,
    pub h_residual: f64,
    pub stable_hint: [i8; 2],
    pub branch_energy: f64,
    pub two_over_b_energy: Option<f64>,
}

fn branch_table(bc: &BranchesConfig) -> Result<Vec<BranchRecord>, CliError> {
    let model = match bc.example {
        1 => OrderParameterModel::two_rods(),
        _ => OrderParameterModel::sized_rods(bc.max_length)?,
    };
    let mut out = Vec::new();
    for (b, points) in branch_sweep(&model, &bc.b, bc.scan_resolution)? {
        let mut roots = Vec::new();
        for p in points {
            let e = branch_energy(&model, p.a, b)?.energy;
            roots.push(RootRecord {
                a: p.a,
                h_residual: p.h_value,
                stable_hint: p.stable_hint,
                branch_energy: e,
                two_over_b_energy: onsager_core::solver::two_over_b(e, b),
            });
        }
        out.push(BranchRecord { b, roots });
    }
    Ok(out)
}

fn write_branches(out: &Path, table: &[BranchRecord]) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = table
        .iter()
        .flat_map(|r| {
            r.roots.iter().map(move |p| {
                vec![
                    num(r.b),
                    num(p.a),
                    num(p.h_residual),
                    format!("{}{}", p.stable_hint[0], p.stable_hint[1]),
                    num(p.branch_energy),
                    p.two_over_b_energy.map(num).unwrap_or_default(),
                ]
            })
        })
        .collect();
    io::write_csv(&out.join("branches.csv"), &["b", "root", "h_residual", "stable_hint", "branch_energy", "two_over_b_energy"], &rows)
}

fn branch_lines(s: &mut String, table: &[BranchRecord]) {
    for r in table {
        let roots: Vec<String> = r.roots.iter().map(|p| format!("{:.6}", p.a)).collect();
        writeln!(s, "  b = {:<8} {} root(s): {}", num(r.b), r.roots.len(), roots.join(", ")).unwrap();
    }
}

pub fn branches(bc: &BranchesConfig, out: &Path) -> Result<Outcome, CliError> {
    prepare(out)?;
    let table = branch_table(bc)?;
    write_branches(out, &table)?;
    let mut s = format!("self-consistency roots, example {}\n", bc.example);
    branch_lines(&mut s, &table);
    #[derive(Serialize)]
    struct Report<'a> {
        command: &'static str,
        example: u8,
        max_length: Option<f64>,
        branches: &'a [BranchRecord],
    }
    let max_length = (bc.example == 2).then_some(bc.max_length);
    write_json(out, "branches.json", &Report { command: "branches", example: bc.example, max_length, branches: &table })?;
    write_summary(out, "branches.txt", &s)?;
    Ok(Outcome { summary: s, exit: EXIT_OK })
}

#[derive(Debug, Serialize)]
pub struct ConditionRecord {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub witness: Option<(usize, usize)>,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct SelectionRecord {
    pub map: String,
    pub c: f64,
    pub eps0: f64,
    pub eps1: f64,
    pub set0_size: usize,
    pub set1_size: usize,
    pub domain_size: usize,
    pub passed: bool,
    pub verdict: String,
    pub conditions: Vec<ConditionRecord>,
}

fn run_selection(cfg: &ExperimentConfig, st: &Setup) -> Result<Vec<SelectionRecord>, CliError> {
    let mut records = Vec::new();
    for sel in &cfg.analysis.selection {
        let spec = cfg.selection_spec(sel, &st.k, &st.space)?;
        let r = selection_test(&st.k, &st.space, &spec, sel.samples(), cfg.seed)?;
        records.push(SelectionRecord {
            map: spec.map.name(),
            c: spec.c,
            eps0: spec.eps0,
            eps1: spec.eps1,
            set0_size: spec.set0.members().len(),
            set1_size: spec.set1.members().len(),
            domain_size: r.domain_size,
            passed: r.passed,
            verdict: r.verdict,
            conditions: r
                .conditions
                .into_iter()
                .map(|c| ConditionRecord { name: c.name, passed: c.passed, value: c.value, witness: c.witness, detail: c.detail })
                .collect(),
        });
    }
    Ok(records)
}

fn selection_lines(s: &mut String, records: &[SelectionRecord]) {
    for r in records {
        writeln!(s, "  {}: {}", r.map, r.verdict).unwrap();
        for c in &r.conditions {
            writeln!(s, "    [{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail).unwrap();
        }
    }
}

pub fn select(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    if cfg.analysis.selection.is_empty() {
        return Err(CliError::Schema { path: "analysis.selection".into(), message: "no selection test configured".into() });
    }
    prepare(out)?;
    let st = setup(cfg)?;
    let records = run_selection(cfg, &st)?;
    let mut s = format!("selection test `{}`\n", cfg.name);
    selection_lines(&mut s, &records);
    let exit = if records.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_VALIDATION };
    #[derive(Serialize)]
    struct Report<'a> {
        command: &'static str,
        name: &'a str,
        selection: &'a [SelectionRecord],
    }
    write_json(out, "select.json", &Report { command: "select", name: &cfg.name, selection: &records })?;
    write_summary(out, "select.txt", &s)?;
    Ok(Outcome { summary: s, exit })
}

#[derive(Debug, Serialize)]
pub struct ZeroSetRecord {
    pub tau: f64,
    pub points: usize,
    pub pair_count: usize,
    pub diagonal_only: bool,
    pub components: usize,
    pub largest_component: usize,
    /// Members of the largest components, at most ten components.
    pub component_members: Vec<Vec<usize>>,
}

fn run_zeroset(k: &KernelMatrix, tau: f64) -> Result<ZeroSetRecord, CliError> {
    let z = zero_pairs(k, tau)?;
    let mut comps = z.components();
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a[0].cmp(&b[0])));
    Ok(ZeroSetRecord {
        tau,
        points: z.len(),
        pair_count: z.pair_count(),
        diagonal_only: z.is_diagonal_only(),
        components: comps.len(),
        largest_component: comps.first().map_or(0, Vec::len),
        component_members: comps.into_iter().take(10).collect(),
    })
}

fn zeroset_lines(s: &mut String, r: &ZeroSetRecord) {
    writeln!(s, "  tau = {}, {} points, {} ordered pairs", num(r.tau), r.points, r.pair_count).unwrap();
    if r.diagonal_only {
        writeln!(s, "  diagonal only: every zero set is a single point, limits are point masses").unwrap();
    } else {
        writeln!(s, "  {} connected components, largest has {} points", r.components, r.largest_component).unwrap();
    }
}

pub fn zeroset(cfg: &ExperimentConfig, out: &Path, tau: Option<f64>) -> Result<Outcome, CliError> {
    prepare(out)?;
    let st = setup(cfg)?;
    let tau = tau
        .or_else(|| cfg.analysis.zeroset.as_ref().and_then(|z| z.tau))
        .unwrap_or(DEFAULT_RELATIVE_TAU * st.k.sup_norm());
    let r = run_zeroset(&st.k, tau)?;
    let mut s = format!("zero pairs of `{}`\n", cfg.name);
    zeroset_lines(&mut s, &r);
    write_json(out, "zeroset.json", &r)?;
    write_summary(out, "zeroset.txt", &s)?;
    Ok(Outcome { summary: s, exit: EXIT_OK })
}

#[derive(Debug, Serialize)]
pub struct ValidationRecord {
    pub passed: bool,
    pub exhaustive: bool,
    pub max_symmetry_violation: f64,
    pub symmetry_witness: Option<(usize, usize)>,
    pub max_diagonal: f64,
    pub diagonal_witness: Option<usize>,
    pub min_entry: f64,
    pub min_witness: Option<(usize, usize)>,
    pub sup_norm: f64,
    pub lipschitz_estimate: f64,
    pub summary: String,
}

pub fn validate_kernel(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    prepare(out)?;
    let space = cfg.build_space()?;
    // tabulated kernels are inspected without the validation gate of `assemble`
    let k = match &cfg.kernel {
        KernelConfig::Tabulated { .. } => {
            let onsager_core::kernel::KernelSpec::Tabulated { entries } = cfg.kernel_spec(&space)? else { unreachable!() };
            KernelMatrix::tabulated(&space, entries)?
        }
        _ => cfg.kernel(&space)?,
    };
    let v = validate(&k, &space);
    let rec = ValidationRecord {
        passed: v.passed,
        exhaustive: v.exhaustive,
        max_symmetry_violation: v.max_symmetry_violation,
        symmetry_witness: v.symmetry_witness,
        max_diagonal: v.max_diagonal,
        diagonal_witness: v.diagonal_witness,
        min_entry: v.min_entry,
        min_witness: v.min_witness,
        sup_norm: v.sup_norm,
        lipschitz_estimate: v.lipschitz_estimate,
        summary: v.summary(),
    };
    let s = format!(
        "kernel of `{}` on {} points: {}\n  sup_norm = {:.6}, lipschitz_estimate = {:.6}, symmetry violation = {:.3e}, max diagonal = {:.3e}, min entry = {:.3e}\n",
        cfg.name,
        space.len(),
        rec.summary,
        rec.sup_norm,
        rec.lipschitz_estimate,
        rec.max_symmetry_violation,
        rec.max_diagonal,
        rec.min_entry
    );
    write_json(out, "validate-kernel.json", &rec)?;
    write_summary(out, "validate-kernel.txt", &s)?;
    Ok(Outcome { summary: s, exit: if v.passed { EXIT_OK } else { EXIT_VALIDATION } })
}

#[derive(Debug, Serialize)]
pub struct ConcentrationRecord {
    pub b: f64,
    pub candidate: String,
    pub members: usize,
    pub tau: f64,
    pub eps: f64,
    pub mass: f64,
    pub bl_to_candidate: f64,
    pub two_over_b_energy: Option<f64>,
}

fn run_concentration(cfg: &ExperimentConfig, st: &Setup, states: &[OnsagerState]) -> Result<Vec<ConcentrationRecord>, CliError> {
    let Some(cc) = &cfg.analysis.concentration else { return Ok(Vec::new()) };
    let sets: Vec<ZeroSet> = cc.candidates.iter().map(|c| cfg.candidate(c, &st.k, &st.space)).collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for state in states {
        let r = concentration(&st.space, state, &sets, cc.eps)?;
        for (i, (c, set)) in cc.candidates.iter().zip(&sets).enumerate() {
            rows.push(ConcentrationRecord {
                b: r.b,
                candidate: c.name().to_string(),
                members: set.members().len(),
                tau: set.tolerance(),
                eps: r.eps,
                mass: r.mass_in_neighborhood[i],
                bl_to_candidate: r.bl_to_candidate[i],
                two_over_b_energy: r.two_over_b_energy,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
struct RunReport<'a> {
    command: &'static str,
    name: &'a str,
    seed: u64,
    space: String,
    points: usize,
    states: Vec<StateRecord>,
    branches: Vec<BranchRecord>,
    concentration: Vec<ConcentrationRecord>,
    zeroset: Option<ZeroSetRecord>,
    selection: Vec<SelectionRecord>,
}

/// Continuation plus every analysis the config requests.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    prepare(out)?;
    let st = setup(cfg)?;
    let mut s = format!("run `{}` on {} grid points\n", cfg.name, st.space.len());
    let (states, records) = if cfg.solver.b_schedule.is_empty() { (Vec::new(), Vec::new()) } else { run_sweep(cfg, &st, out)? };
    if !records.is_empty() {
        s.push_str("continuation:\n");
        state_lines(&mut s, &records);
    }
    let branches = match &cfg.analysis.branches {
        Some(bc) => {
            let t = branch_table(bc)?;
            write_branches(out, &t)?;
            s.push_str("self-consistency roots:\n");
            branch_lines(&mut s, &t);
            t
        }
        None => Vec::new(),
    };
    let conc = run_concentration(cfg, &st, &states)?;
    if !conc.is_empty() {
        let rows: Vec<Vec<String>> = conc
            .iter()
            .map(|r| {
                vec![
                    num(r.b),
                    r.candidate.clone(),
                    r.members.to_string(),
                    num(r.eps),
                    num(r.mass),
                    num(r.bl_to_candidate),
                    r.two_over_b_energy.map(num).unwrap_or_default(),
                ]
            })
            .collect();
        io::write_csv(&out.join("concentration.csv"), &["b", "candidate", "members", "eps", "mass", "bl_to_candidate", "two_over_b_energy"], &rows)?;
        let last_b = conc.last().map(|r| r.b).unwrap_or_default();
        writeln!(s, "concentration at b = {}:", num(last_b)).unwrap();
        for r in conc.iter().filter(|r| r.b == last_b) {
            writeln!(s, "  {:<12} mass within {} = {:.4}, bl distance = {:.4}", r.candidate, num(r.eps), r.mass, r.bl_to_candidate).unwrap();
        }
    }
    let zs = match &cfg.analysis.zeroset {
        Some(z) => {
            let r = run_zeroset(&st.k, z.tau.unwrap_or(DEFAULT_RELATIVE_TAU * st.k.sup_norm()))?;
            s.push_str("zero pairs:\n");
            zeroset_lines(&mut s, &r);
            Some(r)
        }
        None => None,
    };
    let selection = run_selection(cfg, &st)?;
    if !selection.is_empty() {
        s.push_str("selection:\n");
        selection_lines(&mut s, &selection);
    }
    let exit = if states.iter().any(|s| !s.converged) {
        EXIT_NOT_CONVERGED
    } else if selection.iter().any(|r| !r.passed) {
        EXIT_VALIDATION
    } else {
        EXIT_OK
    };
    let report = RunReport {
        command: "run",
        name: &cfg.name,
        seed: cfg.seed,
        space: cfg.space_descriptor(),
        points: st.space.len(),
        states: records,
        branches,
        concentration: conc,
        zeroset: zs,
        selection,
    };
    write_json(out, "run.json", &report)?;
    write_summary(out, "summary.txt", &s)?;
    Ok(Outcome { summary: s, exit })
}

/// Branch settings for `branches --example N`, from the built-in config.
pub fn builtin_branches(example: u8) -> Result<BranchesConfig, CliError> {
    let cfg = config::builtin(example)?;
    cfg.analysis
        .branches
        .ok_or_else(|| CliError::Usage(format!("example {example} has no self-consistency equation; use 1 or 2")))
}

pub fn default_out_dir(cfg: Option<&ExperimentConfig>) -> PathBuf {
    cfg.and_then(|c| c.output_dir.as_ref().map(|p| c.base_dir.join(p))).unwrap_or_else(|| PathBuf::from("onsager-out"))
}
