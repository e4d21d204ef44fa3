//! Command-line front end: configuration loading, runs and output files.
//!
//! Exit codes: 0 ok, 1 check failed, 2 usage or configuration error, 3 runtime abort.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock_oracle::{
    choi_cp_check, fock_to_wigner, generator_for, integrate_moments, propagate, FockTruncation, MomentGenerator,
    MomentState,
};
use crate::grid::SpatialGrid;
use crate::hartree::gronwall_monitor;
use crate::model::{
    apply_overrides, check_lindblad_condition, lindblad_to_diffusion, parse_experiment, ExperimentConfig,
    InitialSection, ParsedModel, RunSection,
};
use crate::propagator::{simulate, Dynamics, PhaseSpaceMoments, SimulationPlan, Trajectory};
use crate::states::snapshot::{Snapshot, SnapshotData};
use crate::states::{
    fock_mixture, gaussian_packet, ground_state, hermite_projection, random_mixed, superposition, wigner_transform,
    DensityState, WignerGrid,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ABORT: i32 = 3;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "QDSLAB_THREADS";

const CHOI_TOLERANCE: f64 = 1e-10;
const GRONWALL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "qdslab", version, about = "Quasifree open quantum dynamics in phase space")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Configuration file (TOML).
    pub config: PathBuf,
    /// Output directory.
    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,
    /// `dotted.key=value` assignment applied to the configuration; repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed for randomized initial states; replaces `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the Lindblad condition of the model.
    Validate(RunArgs),
    /// Run the phase-space propagator.
    Simulate(RunArgs),
    /// Propagate in the oscillator basis and check complete positivity.
    Oracle(RunArgs),
    /// Integrate the moment equations.
    Moments(RunArgs),
    /// Compare the propagator against the oscillator-basis oracle.
    Compare(RunArgs),
    /// Convert a binary snapshot to whitespace-separated columns.
    Export {
        snapshot: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    configure_threads();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(&cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|n| *n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::BlowUp { .. } | Error::NonFinite(_) | Error::Io(_) => EXIT_ABORT,
        Error::NotLindblad(_) => EXIT_CHECK_FAILED,
        _ => EXIT_USAGE,
    }
}

/// Runs one command, writing human-readable output to `out`.
pub fn execute(command: &Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Validate(a) => run_validate(&load(a)?, out),
        Command::Simulate(a) => run_simulate(&load(a)?, &prepare_dir(&a.out)?, out),
        Command::Oracle(a) => run_oracle(&load(a)?, &prepare_dir(&a.out)?, out),
        Command::Moments(a) => run_moments(&load(a)?, &prepare_dir(&a.out)?, out),
        Command::Compare(a) => run_compare(&load(a)?, &prepare_dir(&a.out)?, out),
        Command::Export { snapshot, out: dir } => run_export(snapshot, &prepare_dir(dir)?, out),
    }
}

/// Reads, overrides and parses a configuration file.
pub fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    parse_experiment(&apply_overrides(&text, &overrides)?)
}

fn prepare_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn section<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| Error::Config(format!("missing [{name}] table")))
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn grid_of(cfg: &ExperimentConfig) -> Result<SpatialGrid> {
    let g = section(&cfg.grid, "grid")?;
    if cfg.model.dim() != 1 {
        return Err(Error::Unsupported("grid runs are implemented for dimension 1".into()));
    }
    SpatialGrid::line(g.points, g.half_width)
}

fn seed_of(cfg: &ExperimentConfig) -> u64 {
    cfg.run.as_ref().map(|r| r.seed).unwrap_or(0)
}

fn initial_of(cfg: &ExperimentConfig) -> InitialSection {
    cfg.initial.clone().unwrap_or(InitialSection::Ground)
}

/// Initial density matrix on a position grid.
pub fn initial_density(init: &InitialSection, grid: SpatialGrid, seed: u64) -> Result<DensityState> {
    match init {
        InitialSection::Ground => ground_state(grid),
        InitialSection::FockMixture { weights } => fock_mixture(grid, weights),
        InitialSection::Superposition { amplitudes } => {
            superposition(grid, &amplitudes.iter().map(|p| Complex64::new(p[0], p[1])).collect::<Vec<_>>())
        }
        InitialSection::Gaussian { x0, p0, sigma } => gaussian_packet(grid, *x0, *p0, *sigma),
        InitialSection::Random { rank, levels } => Ok(random_mixed(grid, *rank, *levels, seed)?.0),
    }
}

/// Initial density matrix in the first `levels` oscillator states. Gaussian
/// packets are projected from `grid`.
pub fn initial_fock(
    init: &InitialSection,
    levels: usize,
    seed: u64,
    grid: Option<SpatialGrid>,
) -> Result<DMatrix<Complex64>> {
    let fits = |n: usize| {
        if n > levels {
            Err(Error::GridMismatch(format!("initial state uses {n} levels, the oracle keeps {levels}")))
        } else {
            Ok(())
        }
    };
    let mut rho = DMatrix::<Complex64>::zeros(levels, levels);
    match init {
        InitialSection::Ground => rho[(0, 0)] = Complex64::new(1.0, 0.0),
        InitialSection::FockMixture { weights } => {
            fits(weights.len())?;
            if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::InvalidInput("Fock weights must be finite and >= 0".into()));
            }
            for (n, w) in weights.iter().enumerate() {
                rho[(n, n)] = Complex64::new(*w, 0.0);
            }
        }
        InitialSection::Superposition { amplitudes } => {
            fits(amplitudes.len())?;
            let c: Vec<Complex64> = amplitudes.iter().map(|p| Complex64::new(p[0], p[1])).collect();
            let norm2: f64 = c.iter().map(|z| z.norm_sqr()).sum();
            if !(norm2.is_finite() && norm2 > 0.0) {
                return Err(Error::InvalidInput("superposition amplitudes must not all vanish".into()));
            }
            for a in 0..c.len() {
                for b in 0..c.len() {
                    rho[(a, b)] = c[a] * c[b].conj() / norm2;
                }
            }
        }
        InitialSection::Gaussian { x0, p0, sigma } => {
            let grid = grid.ok_or_else(|| Error::Config("a Gaussian packet needs a [grid] table".into()))?;
            rho = hermite_projection(&gaussian_packet(grid, *x0, *p0, *sigma)?, levels)?;
        }
        InitialSection::Random { rank, levels: used } => {
            fits(*used)?;
            let grid = match grid {
                Some(g) => g,
                None => SpatialGrid::line(16, 4.0)?,
            };
            let small = random_mixed(grid, *rank, *used, seed)?.1;
            rho.view_mut((0, 0), (*used, *used)).copy_from(&small);
        }
    }
    Ok(rho)
}

fn run_section(cfg: &ExperimentConfig) -> Result<&RunSection> {
    section(&cfg.run, "run")
}

fn steps_of(run: &RunSection) -> Result<usize> {
    if !(run.dt > 0.0 && run.t_end >= 0.0) {
        return Err(Error::Config("run.dt must be > 0 and run.t_end >= 0".into()));
    }
    let steps = (run.t_end / run.dt).round();
    if (steps * run.dt - run.t_end).abs() > 1e-9 * run.t_end.max(run.dt) {
        return Err(Error::Config("run.t_end must be a whole number of steps".into()));
    }
    Ok(steps as usize)
}

pub fn run_validate(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<i32> {
    let form = match &cfg.model {
        ParsedModel::Lindblad(m) => lindblad_to_diffusion(m)?,
        ParsedModel::Diffusion { form, .. } => form.clone(),
    };
    let report = check_lindblad_condition(&form)?;
    writeln!(out, "margin = {:.16e}", report.margin)?;
    for m in &report.messages {
        writeln!(out, "{m}")?;
    }
    if report.valid {
        writeln!(out, "verdict: valid (Dpp Dqq - Dpq^2 >= eta^2/4 holds)")?;
        Ok(EXIT_OK)
    } else {
        writeln!(out, "verdict: invalid (Dpp Dqq - Dpq^2 >= eta^2/4 fails; not a Lindblad generator)")?;
        Ok(EXIT_CHECK_FAILED)
    }
}

fn plan_of(cfg: &ExperimentConfig) -> Result<SimulationPlan> {
    let run = run_section(cfg)?;
    let grid = grid_of(cfg)?;
    let rho = initial_density(&initial_of(cfg), grid, run.seed)?;
    let w = wigner_transform(&rho)?;
    let mut plan = SimulationPlan::new(Dynamics::from_parsed(&cfg.model)?, w, run.t_end, run.dt);
    plan.splitting = run.splitting.parse()?;
    plan.diagnostics_every = run.diagnostics_every;
    plan.positivity_every = run.positivity_every;
    plan.keep_snapshots = run.snapshots;
    Ok(plan)
}

fn write_snapshot(path: &Path, w: &WignerGrid) -> Result<()> {
    let mut f = create(path)?;
    Snapshot::from_wigner(w).write_to(&mut f)?;
    f.flush()?;
    Ok(())
}

pub fn run_simulate(cfg: &ExperimentConfig, dir: &Path, out: &mut dyn Write) -> Result<i32> {
    let plan = plan_of(cfg)?;
    let traj = simulate(&plan)?;
    write_trajectory(&traj, dir)?;
    if let Some(b) = traj.abort {
        write_snapshot(&dir.join("last_good.qdsg"), &traj.final_state)?;
        writeln!(out, "aborted at t = {}: L2 norm grew by {:.3e}; last good state in last_good.qdsg", b.time, b.factor)?;
        return Ok(EXIT_ABORT);
    }
    let last = traj.reports.last().expect("at least one report");
    writeln!(out, "rows = {}", traj.reports.len())?;
    writeln!(out, "final mass drift = {:.6e}", traj.max_mass_drift())?;
    writeln!(out, "final energy: ekin = {:.10}, eext = {:.10}, esc = {:.10}, etot = {:.10}", last.ekin, last.eext, last.esc, last.etot)?;
    if cfg.model.hartree().is_some() && traj.reports.len() >= 2 && traj.reports[0].etot > 0.0 {
        let probe = gronwall_monitor(&traj.reports, f64::MAX.sqrt(), GRONWALL_TOLERANCE)?;
        let k = probe.empirical_k.max(0.0);
        let report = gronwall_monitor(&traj.reports, k, GRONWALL_TOLERANCE)?;
        writeln!(out, "gronwall: empirical K = {:.6e}, envelope {}", k, if report.passed { "holds" } else { "violated" })?;
        if !report.passed {
            return Ok(EXIT_CHECK_FAILED);
        }
    }
    Ok(EXIT_OK)
}

fn write_trajectory(traj: &Trajectory, dir: &Path) -> Result<()> {
    let mut f = create(&dir.join("diagnostics.csv"))?;
    traj.write_csv(&mut f)?;
    f.flush()?;
    for (k, (_, w)) in traj.snapshots.iter().enumerate() {
        write_snapshot(&dir.join(format!("snapshot_{k:05}.qdsg")), w)?;
    }
    Ok(())
}

fn moments_row(t: f64, m: &PhaseSpaceMoments) -> String {
    [t, m.trace, m.x, m.p, m.xx, m.xp, m.pp].iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(",")
}

const MOMENTS_HEADER: &str = "t,trace,x,p,xx,xp,pp";

fn oracle_levels(cfg: &ExperimentConfig) -> Result<usize> {
    Ok(section(&cfg.fock, "fock")?.levels)
}

pub fn run_oracle(cfg: &ExperimentConfig, dir: &Path, out: &mut dyn Write) -> Result<i32> {
    let levels = oracle_levels(cfg)?;
    let generator = generator_for(&cfg.model, levels)?;
    let fock = FockTruncation::new(levels, 0.0, false, &crate::model::ExternalPotential::None)?;
    let run = run_section(cfg)?;
    let steps = steps_of(run)?;
    let every = run.diagnostics_every.max(1);
    let mut rho = initial_fock(&initial_of(cfg), levels, run.seed, cfg.grid.as_ref().and_then(|_| grid_of(cfg).ok()))?;
    let trace0 = rho.trace().re;
    let mut f = create(&dir.join("oracle.csv"))?;
    writeln!(f, "{MOMENTS_HEADER}")?;
    let mut drift: f64 = 0.0;
    let mut s = 0;
    loop {
        let m = MomentState::from_fock(&rho, &fock).to_phase_space()?;
        drift = drift.max((m.trace - trace0).abs() / trace0.abs().max(f64::MIN_POSITIVE));
        writeln!(f, "{}", moments_row(s as f64 * run.dt, &m))?;
        if s >= steps {
            break;
        }
        let chunk = every.min(steps - s);
        rho = propagate(&generator, &rho, chunk as f64 * run.dt)?;
        s += chunk;
    }
    f.flush()?;
    let choi_time = section(&cfg.fock, "fock")?.choi_time;
    let choi = choi_cp_check(&generator, choi_time)?;
    writeln!(out, "trace drift = {drift:.6e}")?;
    writeln!(out, "choi min eigenvalue at t = {choi_time}: {:.6e}", choi.min_eigenvalue)?;
    if choi.min_eigenvalue < -CHOI_TOLERANCE {
        writeln!(out, "verdict: not completely positive")?;
        Ok(EXIT_CHECK_FAILED)
    } else {
        writeln!(out, "verdict: completely positive")?;
        Ok(EXIT_OK)
    }
}

fn initial_moments(cfg: &ExperimentConfig) -> Result<MomentState> {
    let seed = seed_of(cfg);
    if cfg.grid.is_some() {
        let rho = initial_density(&initial_of(cfg), grid_of(cfg)?, seed)?;
        return Ok(MomentState::from_phase_space(&PhaseSpaceMoments::of(&wigner_transform(&rho)?)));
    }
    let levels = oracle_levels(cfg)?;
    let fock = FockTruncation::new(levels, 0.0, false, &crate::model::ExternalPotential::None)?;
    Ok(MomentState::from_fock(&initial_fock(&initial_of(cfg), levels, seed, None)?, &fock))
}

pub fn run_moments(cfg: &ExperimentConfig, dir: &Path, out: &mut dyn Write) -> Result<i32> {
    let generator = MomentGenerator::from_parsed(&cfg.model)?;
    let run = run_section(cfg)?;
    let steps = steps_of(run)?.max(1);
    let start = initial_moments(cfg)?;
    let series = integrate_moments(&generator, &start, run.t_end, steps)?;
    let mut f = create(&dir.join("moments.csv"))?;
    writeln!(f, "{MOMENTS_HEADER},energy,energy_rate")?;
    let conf = cfg.model.confinement();
    for (k, s) in series.iter().enumerate() {
        if k % run.diagnostics_every.max(1) != 0 && k != steps {
            continue;
        }
        let t = run.t_end * k as f64 / steps as f64;
        writeln!(
            f,
            "{},{},{}",
            moments_row(t, &s.to_phase_space()?),
            fmt(s.energy(conf)),
            fmt(generator.energy_rate(s, conf))
        )?;
    }
    f.flush()?;
    let last = series.last().expect("non-empty series");
    writeln!(out, "energy(0) = {:.10}, energy(t_end) = {:.10}", start.energy(conf), last.energy(conf))?;
    writeln!(out, "initial heating rate = {:.10e}", generator.energy_rate(&start, conf))?;
    Ok(EXIT_OK)
}

/// Result of [`compare_runs`].
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub times: Vec<f64>,
    pub wigner_linf: Vec<f64>,
    pub moment_rel: Vec<f64>,
}

impl Comparison {
    pub fn max_wigner(&self) -> f64 {
        self.wigner_linf.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_moment(&self) -> f64 {
        self.moment_rel.iter().cloned().fold(0.0, f64::max)
    }
}

fn moment_discrepancy(a: &PhaseSpaceMoments, b: &PhaseSpaceMoments) -> f64 {
    let pa = [a.trace, a.x, a.p, a.xx, a.xp, a.pp];
    let pb = [b.trace, b.x, b.p, b.xx, b.xp, b.pp];
    let scale = pb.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Propagator, oscillator-basis oracle and moment equations at `samples` evenly spaced times.
pub fn compare_runs(cfg: &ExperimentConfig) -> Result<Comparison> {
    if cfg.model.hartree().is_some() {
        return Err(Error::Unsupported("the oracle is undefined for Hartree models".into()));
    }
    let compare = cfg.compare.clone().unwrap_or(crate::model::CompareSection {
        wigner_tolerance: 1e-4,
        moment_tolerance: 1e-4,
        samples: 4,
    });
    let run = run_section(cfg)?;
    let steps = steps_of(run)?;
    if compare.samples == 0 || steps % compare.samples != 0 {
        return Err(Error::Config(format!("{steps} steps cannot be split into {} samples", compare.samples)));
    }
    let levels = oracle_levels(cfg)?;
    let grid = grid_of(cfg)?;
    let mut rho = initial_fock(&initial_of(cfg), levels, run.seed, Some(grid))?;
    let generator = generator_for(&cfg.model, levels)?;
    let moment_gen = MomentGenerator::from_parsed(&cfg.model)?;

    let mut plan = plan_of(cfg)?;
    plan.diagnostics_every = steps / compare.samples;
    plan.keep_snapshots = true;
    plan.positivity_every = 0;
    let traj = simulate(&plan)?.into_result()?;
    let start = MomentState::from_phase_space(&traj.moments[0]);
    let ode = integrate_moments(&moment_gen, &start, run.t_end, steps.max(1))?;

    let mut result = Comparison { times: Vec::new(), wigner_linf: Vec::new(), moment_rel: Vec::new() };
    let mut t_prev = 0.0;
    for (k, (t, w)) in traj.snapshots.iter().enumerate().skip(1) {
        rho = propagate(&generator, &rho, t - t_prev)?;
        t_prev = *t;
        let reference = fock_to_wigner(&rho, grid)?;
        let ode_state = ode[k * plan.diagnostics_every].to_phase_space()?;
        result.times.push(*t);
        result.wigner_linf.push(w.max_abs_diff(&reference));
        result.moment_rel.push(moment_discrepancy(&traj.moments[k], &ode_state));
    }
    Ok(result)
}

pub fn run_compare(cfg: &ExperimentConfig, dir: &Path, out: &mut dyn Write) -> Result<i32> {
    let result = compare_runs(cfg)?;
    let (wtol, mtol) = cfg.compare.as_ref().map(|c| (c.wigner_tolerance, c.moment_tolerance)).unwrap_or((1e-4, 1e-4));
    let mut f = create(&dir.join("compare.csv"))?;
    writeln!(f, "t,wigner_linf,moment_rel")?;
    for ((t, w), m) in result.times.iter().zip(&result.wigner_linf).zip(&result.moment_rel) {
        writeln!(f, "{},{},{}", fmt(*t), fmt(*w), fmt(*m))?;
    }
    f.flush()?;
    let (w, m) = (result.max_wigner(), result.max_moment());
    writeln!(out, "max Wigner L-inf discrepancy = {w:.6e} (tolerance {wtol:e})")?;
    writeln!(out, "max relative moment discrepancy = {m:.6e} (tolerance {mtol:e})")?;
    if w <= wtol && m <= mtol {
        writeln!(out, "verdict: agree")?;
        Ok(EXIT_OK)
    } else {
        writeln!(out, "verdict: disagree")?;
        Ok(EXIT_CHECK_FAILED)
    }
}

/// Writes `x xi w` columns with a blank line between `x` rows.
pub fn run_export(snapshot: &Path, dir: &Path, out: &mut dyn Write) -> Result<i32> {
    let snap = Snapshot::read_from(fs::File::open(snapshot)?)?;
    let values = match &snap.data {
        SnapshotData::Real(v) => v.clone(),
        SnapshotData::Complex(v) => v.iter().map(|z| z.re).collect(),
    };
    let axes: Vec<Vec<f64>> = snap
        .counts
        .iter()
        .zip(&snap.half_widths)
        .map(|(&n, &l)| (0..n).map(|i| -l + 2.0 * l * i as f64 / n as f64).collect())
        .collect();
    let stem = snapshot.file_stem().and_then(|s| s.to_str()).unwrap_or("snapshot");
    let path = dir.join(format!("{stem}.dat"));
    let mut f = create(&path)?;
    match axes.as_slice() {
        [x] => {
            for (xi, v) in x.iter().zip(&values) {
                writeln!(f, "{} {}", fmt(*xi), fmt(*v))?;
            }
        }
        [x, p] => {
            for (i, xv) in x.iter().enumerate() {
                for (l, pv) in p.iter().enumerate() {
                    writeln!(f, "{} {} {}", fmt(*xv), fmt(*pv), fmt(values[i * p.len() + l]))?;
                }
                writeln!(f)?;
            }
        }
        _ => return Err(Error::Unsupported("export handles one- and two-axis snapshots".into())),
    }
    f.flush()?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(EXIT_OK)
}
