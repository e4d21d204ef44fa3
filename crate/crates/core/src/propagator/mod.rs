//! Operator-splitting integrator for the phase-space equation in one dimension.
//!
//! The generator splits into free transport `T`, the potential operator `P`
//! (confinement, external potential and Hartree field) and the quadratic
//! Fokker-Planck part `Q`; each piece is solved exactly.

mod steps;

use std::io::Write;
use std::str::FromStr;

pub use steps::{
    step_diffusion, step_potential, step_transport, DiffusionStep, HalfGridPotential, PotentialStep, QuadraticFlow,
    TransportStep,
};

use crate::error::{Error, Result};
use crate::hartree::{potential_1d_fine, EnergyReport};
use crate::model::{lindblad_to_diffusion, DiffusionForm, ExternalPotential, HartreeCoupling, LindbladModel, ParsedModel};
use crate::states::{inverse_wigner, WignerGrid};

/// Default abort threshold on `||w||_2 / ||w_0||_2`.
pub const BLOWUP_FACTOR: f64 = 1e3;

/// Coefficients of the phase-space equation for a one-dimensional model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    pub flow: QuadraticFlow,
    pub confinement: bool,
    pub v1: ExternalPotential,
    pub hartree: Option<HartreeCoupling>,
}

impl Dynamics {
    /// `a = R + 2 mu`, `e = R - 2 mu` with `R = sum Re(alpha conj beta)`.
    pub fn from_lindblad(model: &LindbladModel) -> Result<Self> {
        let form = lindblad_to_diffusion(model)?;
        let mut flow = QuadraticFlow::from_diffusion(&form)?;
        flow.friction = form.eta + 2.0 * model.mu;
        flow.dilation = form.eta - 2.0 * model.mu;
        Ok(Self { flow, confinement: model.confinement, v1: model.v1.clone(), hartree: model.hartree })
    }

    /// Template `Q` of `form` plus an extra `mu (x.p + p.x)` Hamiltonian.
    pub fn from_diffusion(
        form: &DiffusionForm,
        mu: f64,
        confinement: bool,
        v1: ExternalPotential,
        hartree: Option<HartreeCoupling>,
    ) -> Result<Self> {
        if form.eta < 0.0 {
            return Err(Error::InvalidInput(format!("friction eta = {} must be >= 0", form.eta)));
        }
        let mut flow = QuadraticFlow::from_diffusion(form)?;
        flow.friction += 2.0 * mu;
        flow.dilation -= 2.0 * mu;
        Ok(Self { flow, confinement, v1, hartree })
    }

    pub fn from_parsed(model: &ParsedModel) -> Result<Self> {
        match model {
            ParsedModel::Lindblad(m) => Self::from_lindblad(m),
            ParsedModel::Diffusion { form, mu, confinement, v1, hartree } => {
                Self::from_diffusion(form, *mu, *confinement, v1.clone(), *hartree)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splitting {
    /// `T(dt/2) P(dt/2) Q(dt) P(dt/2) T(dt/2)`, second order.
    Strang,
    /// `Q(dt) P(dt) T(dt)`, first order.
    Lie,
}

impl FromStr for Splitting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "strang" => Ok(Self::Strang),
            "lie" => Ok(Self::Lie),
            other => Err(Error::Config(format!("unknown splitting '{other}', expected strang or lie"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub dynamics: Dynamics,
    pub initial: WignerGrid,
    pub t_end: f64,
    pub dt: f64,
    pub splitting: Splitting,
    /// Steps between diagnostic rows.
    pub diagnostics_every: usize,
    /// Diagnostic rows between eigenvalue checks; 0 disables them.
    pub positivity_every: usize,
    pub keep_snapshots: bool,
    pub blowup_factor: f64,
}

impl SimulationPlan {
    pub fn new(dynamics: Dynamics, initial: WignerGrid, t_end: f64, dt: f64) -> Self {
        Self {
            dynamics,
            initial,
            t_end,
            dt,
            splitting: Splitting::Strang,
            diagnostics_every: 1,
            positivity_every: 0,
            keep_snapshots: false,
            blowup_factor: BLOWUP_FACTOR,
        }
    }

    fn steps(&self) -> Result<usize> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::InvalidInput(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if self.t_end > 0.0 && self.t_end < self.dt {
            return Err(Error::InvalidInput(format!("t_end = {} is shorter than dt = {}", self.t_end, self.dt)));
        }
        let steps = (self.t_end / self.dt).round();
        if (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(self.dt) {
            return Err(Error::InvalidInput(format!(
                "t_end = {} is not a whole number of steps of {}",
                self.t_end, self.dt
            )));
        }
        if self.diagnostics_every == 0 {
            return Err(Error::InvalidInput("diagnostics_every must be >= 1".into()));
        }
        Ok(steps as usize)
    }
}

/// Unnormalized phase-space moments `int f w` for `f = 1, x, xi, x^2, x xi, xi^2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseSpaceMoments {
    pub trace: f64,
    pub x: f64,
    pub p: f64,
    pub xx: f64,
    pub xp: f64,
    pub pp: f64,
}

impl PhaseSpaceMoments {
    pub fn of(w: &WignerGrid) -> Self {
        let xs = w.grid_x.coordinates();
        let ps = w.grid_xi.coordinates();
        let n = w.points();
        let dv = w.dx() * w.dxi();
        let mut m = Self::default();
        for (i, &x) in xs.iter().enumerate() {
            let row = &w.values[i * n..(i + 1) * n];
            let (mut r0, mut r1, mut r2) = (0.0, 0.0, 0.0);
            for (&v, &p) in row.iter().zip(&ps) {
                r0 += v;
                r1 += v * p;
                r2 += v * p * p;
            }
            m.trace += r0;
            m.x += x * r0;
            m.xx += x * x * r0;
            m.p += r1;
            m.xp += x * r1;
            m.pp += r2;
        }
        m.trace *= dv;
        m.x *= dv;
        m.p *= dv;
        m.xx *= dv;
        m.xp *= dv;
        m.pp *= dv;
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowUp {
    pub time: f64,
    pub factor: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub reports: Vec<EnergyReport>,
    pub moments: Vec<PhaseSpaceMoments>,
    /// `|trace(t) - trace(0)| / |trace(0)|` per report.
    pub mass_drift: Vec<f64>,
    pub snapshots: Vec<(f64, WignerGrid)>,
    /// Last state that passed the blow-up check.
    pub final_state: WignerGrid,
    pub abort: Option<BlowUp>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.time).collect()
    }

    pub fn max_mass_drift(&self) -> f64 {
        self.mass_drift.iter().cloned().fold(0.0, f64::max)
    }

    pub fn into_result(self) -> Result<Self> {
        match self.abort {
            Some(b) => Err(Error::BlowUp { time: b.time, factor: b.factor }),
            None => Ok(self),
        }
    }

    /// Diagnostics table with 17 significant digits.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "t,trace,min_eig,ekin,eext,esc,etot,mass_drift")?;
        for (r, drift) in self.reports.iter().zip(&self.mass_drift) {
            let row = [r.time, r.trace, r.min_eig, r.ekin, r.eext, r.esc, r.etot, *drift];
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

struct Stepper {
    transport: TransportStep,
    base: HalfGridPotential,
    has_potential: bool,
    hartree: Option<HartreeCoupling>,
    frozen: Option<PotentialStep>,
    flow: Option<DiffusionStep>,
    splitting: Splitting,
    dt: f64,
}

impl Stepper {
    fn new(plan: &SimulationPlan) -> Result<Self> {
        let w = &plan.initial;
        if w.grid_x.dim != 1 {
            return Err(Error::Unsupported("the phase-space propagator is implemented for d = 1".into()));
        }
        let d = &plan.dynamics;
        let base = HalfGridPotential::from_model(&w.grid_x, d.confinement, &d.v1)?;
        let has_potential = base.values.iter().any(|v| *v != 0.0);
        let p_dt = match plan.splitting {
            Splitting::Strang => plan.dt / 2.0,
            Splitting::Lie => plan.dt,
        };
        let frozen = (has_potential && d.hartree.is_none()).then(|| PotentialStep::new(&base, w.points(), p_dt));
        let flow = (!d.flow.is_zero()).then(|| DiffusionStep::new(&d.flow, &w.grid_x, plan.dt));
        Ok(Self {
            transport: TransportStep::new(&w.grid_x, &w.grid_xi),
            base,
            has_potential,
            hartree: d.hartree,
            frozen,
            flow,
            splitting: plan.splitting,
            dt: plan.dt,
        })
    }

    fn potential(&self, w: &WignerGrid, dt: f64) -> Option<PotentialStep> {
        let coupling = self.hartree?;
        let n = w.position_density();
        let mut v = self.base.clone();
        v.add(&potential_1d_fine(&w.grid_x, &n), coupling.strength);
        Some(PotentialStep::new(&v, w.points(), dt))
    }

    fn apply_potential(&self, w: &mut WignerGrid, step: &Option<PotentialStep>) {
        if let Some(p) = step.as_ref().or(self.frozen.as_ref()) {
            p.apply(&mut w.values);
        }
    }

    fn step(&self, w: &mut WignerGrid) {
        match self.splitting {
            Splitting::Strang => {
                self.transport.apply(&mut w.values, self.dt / 2.0);
                let p = self.potential(w, self.dt / 2.0);
                self.apply_potential(w, &p);
                if let Some(q) = &self.flow {
                    q.apply(&mut w.values);
                }
                self.apply_potential(w, &p);
                self.transport.apply(&mut w.values, self.dt / 2.0);
            }
            Splitting::Lie => {
                if let Some(q) = &self.flow {
                    q.apply(&mut w.values);
                }
                let p = self.potential(w, self.dt);
                self.apply_potential(w, &p);
                self.transport.apply(&mut w.values, self.dt);
            }
        }
    }

    fn report(&self, w: &WignerGrid, time: f64, positivity: bool) -> Result<(EnergyReport, PhaseSpaceMoments)> {
        let m = PhaseSpaceMoments::of(w);
        let ekin = 0.5 * m.pp;
        let eext = if self.has_potential { self.external_energy(w) } else { 0.0 };
        let esc = match self.hartree {
            Some(c) => {
                let n = w.position_density();
                let phi = potential_1d_fine(&w.grid_x, &n);
                0.5 * c.strength * n.iter().enumerate().map(|(i, v)| v * phi[2 * i]).sum::<f64>() * w.dx()
            }
            None => 0.0,
        };
        let min_eig = if positivity { inverse_wigner(w)?.spectral_diagnostics()?.min_eigenvalue } else { f64::NAN };
        let report = EnergyReport {
            time,
            trace: m.trace,
            min_eig,
            ekin,
            eext,
            esc,
            etot: ekin + eext + esc,
            energy_norm: m.trace + m.pp + m.xx,
        };
        Ok((report, m))
    }

    /// `int V n` for the confinement and external potential.
    fn external_energy(&self, w: &WignerGrid) -> f64 {
        let n = w.position_density();
        n.iter().enumerate().map(|(i, v)| v * self.base.values[2 * i]).sum::<f64>() * w.dx()
    }
}

/// Runs the plan. A blow-up stops the run early and is recorded in
/// [`Trajectory::abort`]; use [`Trajectory::into_result`] to turn it into an error.
pub fn simulate(plan: &SimulationPlan) -> Result<Trajectory> {
    let steps = plan.steps()?;
    let stepper = Stepper::new(plan)?;
    let mut w = plan.initial.clone();
    let norm0 = w.l2_norm();
    if !norm0.is_finite() {
        return Err(Error::NonFinite("initial Wigner function"));
    }
    let mut traj = Trajectory {
        reports: Vec::new(),
        moments: Vec::new(),
        mass_drift: Vec::new(),
        snapshots: Vec::new(),
        final_state: w.clone(),
        abort: None,
    };
    let mut trace0 = 0.0;
    let mut record = |w: &WignerGrid, time: f64, traj: &mut Trajectory| -> Result<()> {
        let row = traj.reports.len();
        let positivity = plan.positivity_every > 0 && row % plan.positivity_every == 0;
        let (report, m) = stepper.report(w, time, positivity)?;
        if row == 0 {
            trace0 = report.trace;
        }
        let drift = if trace0 != 0.0 { (report.trace - trace0).abs() / trace0.abs() } else { report.trace.abs() };
        traj.reports.push(report);
        traj.moments.push(m);
        traj.mass_drift.push(drift);
        if plan.keep_snapshots {
            traj.snapshots.push((time, w.clone()));
        }
        Ok(())
    };
    record(&w, 0.0, &mut traj)?;
    for s in 1..=steps {
        stepper.step(&mut w);
        let time = s as f64 * plan.dt;
        let factor = w.l2_norm() / norm0;
        if !(factor <= plan.blowup_factor) {
            traj.abort = Some(BlowUp { time, factor });
            break;
        }
        if s % plan.diagnostics_every == 0 || s == steps {
            record(&w, time, &mut traj)?;
        }
        traj.final_state.values.copy_from_slice(&w.values);
    }
    Ok(traj)
}
