//! TOML configuration documents.
//!
//! Model keys live at the top level; experiment settings (`grid`, `initial`,
//! `run`, `fock`, `compare`) are optional tables used by the command-line tool.
//! Unknown keys are rejected everywhere.

use num_complex::Complex64;
use serde::Deserialize;

use super::{DiffusionForm, ExternalPotential, HartreeCoupling, LindbladModel, LindbladTerm};
use crate::error::{Error, Result};

/// Either parameterization of the dissipative dynamics, plus the Hamiltonian part.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedModel {
    Lindblad(LindbladModel),
    /// Diffusion coefficients; the Hamiltonian options are carried alongside.
    Diffusion {
        form: DiffusionForm,
        mu: f64,
        confinement: bool,
        v1: ExternalPotential,
        hartree: Option<HartreeCoupling>,
    },
}

impl ParsedModel {
    pub fn dim(&self) -> usize {
        match self {
            ParsedModel::Lindblad(m) => m.dim,
            ParsedModel::Diffusion { form, .. } => form.dim(),
        }
    }

    pub fn hartree(&self) -> Option<HartreeCoupling> {
        match self {
            ParsedModel::Lindblad(m) => m.hartree,
            ParsedModel::Diffusion { hartree, .. } => *hartree,
        }
    }

    pub fn confinement(&self) -> bool {
        match self {
            ParsedModel::Lindblad(m) => m.confinement,
            ParsedModel::Diffusion { confinement, .. } => *confinement,
        }
    }

    pub fn v1(&self) -> &ExternalPotential {
        match self {
            ParsedModel::Lindblad(m) => &m.v1,
            ParsedModel::Diffusion { v1, .. } => v1,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    alpha: Vec<[f64; 2]>,
    beta: Vec<[f64; 2]>,
    #[serde(default)]
    gamma: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiffusion {
    dpp: f64,
    dqq: f64,
    #[serde(default)]
    dpq: f64,
    #[serde(default)]
    eta: f64,
    #[serde(default)]
    drift_x: Option<f64>,
    #[serde(default)]
    drift_p: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawHartree {
    Flag(bool),
    Table(RawHartreeTable),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHartreeTable {
    #[serde(default = "one")]
    strength: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawPotential {
    None,
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    Cosine {
        amplitude: f64,
        wavenumber: f64,
    },
    Tabulated {
        half_width: f64,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub points: usize,
    pub half_width: f64,
}

/// Initial state. Fock-basis variants are exact in both the grid and the oracle representation.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSection {
    Ground,
    /// Diagonal mixture of oscillator levels with the given weights.
    FockMixture { weights: Vec<f64> },
    /// Pure superposition of oscillator levels; amplitudes are `[re, im]` pairs.
    Superposition { amplitudes: Vec<[f64; 2]> },
    /// Gaussian wave packet `exp(-(x-x0)^2/(2 sigma^2) + i p0 x)`.
    Gaussian {
        x0: f64,
        p0: f64,
        #[serde(default = "one")]
        sigma: f64,
    },
    /// Random mixed state over the first `levels` oscillator levels, drawn from `seed`.
    Random { rank: usize, levels: usize },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "default_splitting")]
    pub splitting: String,
    #[serde(default = "default_every")]
    pub diagnostics_every: usize,
    /// Eigensolve the reconstructed density matrix every this many diagnostics rows (0: never).
    #[serde(default)]
    pub positivity_every: usize,
    #[serde(default)]
    pub snapshots: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_splitting() -> String {
    "strang".into()
}

fn default_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FockSection {
    pub levels: usize,
    #[serde(default = "default_choi_time")]
    pub choi_time: f64,
}

fn default_choi_time() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    #[serde(default = "default_wigner_tol")]
    pub wigner_tolerance: f64,
    #[serde(default = "default_moment_tol")]
    pub moment_tolerance: f64,
    /// Number of comparison times spread evenly over `(0, t_end]`.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_wigner_tol() -> f64 {
    1e-4
}

fn default_moment_tol() -> f64 {
    1e-4
}

fn default_samples() -> usize {
    4
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    dimension: usize,
    #[serde(default)]
    mu: f64,
    #[serde(default)]
    confinement: bool,
    #[serde(default)]
    v1: Option<RawPotential>,
    #[serde(default)]
    hartree: Option<RawHartree>,
    #[serde(default)]
    lindblad: Option<Vec<RawTerm>>,
    #[serde(default)]
    diffusion: Option<RawDiffusion>,
    #[serde(default)]
    grid: Option<GridSection>,
    #[serde(default)]
    initial: Option<InitialSection>,
    #[serde(default)]
    run: Option<RunSection>,
    #[serde(default)]
    fock: Option<FockSection>,
    #[serde(default)]
    compare: Option<CompareSection>,
}

/// A full experiment document.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ParsedModel,
    pub grid: Option<GridSection>,
    pub initial: Option<InitialSection>,
    pub run: Option<RunSection>,
    pub fock: Option<FockSection>,
    pub compare: Option<CompareSection>,
}

fn complex(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

fn convert_potential(raw: Option<RawPotential>) -> ExternalPotential {
    match raw {
        None | Some(RawPotential::None) => ExternalPotential::None,
        Some(RawPotential::Gaussian { amplitude, width, center }) => {
            ExternalPotential::Gaussian { amplitude, width, center }
        }
        Some(RawPotential::Cosine { amplitude, wavenumber }) => {
            ExternalPotential::Cosine { amplitude, wavenumber }
        }
        Some(RawPotential::Tabulated { half_width, values }) => {
            ExternalPotential::Tabulated { half_width, values }
        }
    }
}

fn build_model(raw: &mut RawDocument) -> Result<ParsedModel> {
    let hartree = match raw.hartree.take() {
        None | Some(RawHartree::Flag(false)) => None,
        Some(RawHartree::Flag(true)) => Some(HartreeCoupling::default()),
        Some(RawHartree::Table(t)) => Some(HartreeCoupling { strength: t.strength }),
    };
    let v1 = convert_potential(raw.v1.take());
    match (raw.lindblad.take(), raw.diffusion.take()) {
        (Some(_), Some(_)) => Err(Error::Config(
            "both `lindblad` and `diffusion` are present; give exactly one".into(),
        )),
        (None, None) => Err(Error::Config("one of `lindblad` or `diffusion` is required".into())),
        (Some(terms), None) => {
            let terms = terms
                .into_iter()
                .map(|t| {
                    LindbladTerm::new(
                        t.alpha.into_iter().map(complex).collect(),
                        t.beta.into_iter().map(complex).collect(),
                        t.gamma.map(complex).unwrap_or_default(),
                    )
                })
                .collect();
            let model = LindbladModel {
                dim: raw.dimension,
                terms,
                mu: raw.mu,
                confinement: raw.confinement,
                v1,
                hartree,
            };
            model.validate().map_err(|e| Error::Config(e.to_string()))?;
            Ok(ParsedModel::Lindblad(model))
        }
        (None, Some(d)) => {
            let dim = raw.dimension;
            if !(1..=3).contains(&dim) {
                return Err(Error::Config(format!("dimension {dim} not in 1..=3")));
            }
            let form = DiffusionForm::isotropic(dim, d.dpp, d.dqq, d.dpq, d.eta)
                .with_drift(vec![d.drift_x.unwrap_or(0.0); dim], vec![d.drift_p.unwrap_or(0.0); dim]);
            if let Some(h) = hartree {
                if h.strength <= 0.0 {
                    return Err(Error::Config("Hartree coupling must be repulsive".into()));
                }
            }
            Ok(ParsedModel::Diffusion { form, mu: raw.mu, confinement: raw.confinement, v1, hartree })
        }
    }
}

fn parse_raw(text: &str) -> Result<RawDocument> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// Applies `dotted.key=value` assignments to a document. Values are read as
/// TOML literals and fall back to plain strings.
pub fn apply_overrides(text: &str, overrides: &[String]) -> Result<String> {
    if overrides.is_empty() {
        return Ok(text.to_string());
    }
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    for item in overrides {
        let (path, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{item}' is not of the form key=value")))?;
        let keys: Vec<&str> = path.trim().split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(Error::Config(format!("override '{item}' has an empty key")));
        }
        let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
        let mut table = &mut doc;
        for key in &keys[..keys.len() - 1] {
            let entry = table.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override '{item}': '{key}' is not a table")))?;
        }
        table.insert(keys[keys.len() - 1].to_string(), value);
    }
    toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))
}

/// Parses the model part of a configuration document.
pub fn parse_model_config(text: &str) -> Result<ParsedModel> {
    let mut raw = parse_raw(text)?;
    build_model(&mut raw)
}

/// Parses a configuration document including the experiment tables.
pub fn parse_experiment(text: &str) -> Result<ExperimentConfig> {
    let mut raw = parse_raw(text)?;
    let model = build_model(&mut raw)?;
    Ok(ExperimentConfig {
        model,
        grid: raw.grid,
        initial: raw.initial,
        run: raw.run,
        fock: raw.fock,
        compare: raw.compare,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_replace_nested_values() {
        let text = "dimension = 1\nconfinement = true\n[[lindblad]]\nalpha = [[0.5, 0.0]]\nbeta = [[0.0, 0.0]]\n[run]\nt_end = 1.0\ndt = 0.01\n";
        let out = apply_overrides(text, &["run.dt=0.02".into(), "run.splitting=lie".into(), "mu=0.1".into()]).unwrap();
        let cfg = parse_experiment(&out).unwrap();
        let run = cfg.run.unwrap();
        assert_eq!(run.dt, 0.02);
        assert_eq!(run.splitting, "lie");
        assert!(matches!(cfg.model, ParsedModel::Lindblad(ref m) if m.mu == 0.1));
        assert!(apply_overrides(text, &["run".into()]).is_err());
        assert!(apply_overrides(text, &["confinement.x=1".into()]).is_err());
    }

    #[test]
    fn minimal_lindblad_document() {
        let text = r#"
dimension = 1
[[lindblad]]
alpha = [[1.0, 0.0]]
beta = [[0.0, 0.0]]
gamma = [0.0, 0.0]
"#;
        match parse_model_config(text).unwrap() {
            ParsedModel::Lindblad(m) => {
                assert_eq!(m.m(), 1);
                assert_eq!(m.terms[0].alpha[0], Complex64::new(1.0, 0.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn diffusion_only_document() {
        let text = "dimension = 1\ndiffusion = { dpp = 1.0, dqq = 0.0, dpq = 0.0, eta = 1.0 }\n";
        match parse_model_config(text).unwrap() {
            ParsedModel::Diffusion { form, .. } => assert_eq!(form, DiffusionForm::scalar(1.0, 0.0, 0.0, 1.0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn both_blocks_are_rejected() {
        let text = r#"
dimension = 1
diffusion = { dpp = 1.0, dqq = 1.0 }
[[lindblad]]
alpha = [[1.0, 0.0]]
beta = [[0.0, 0.0]]
"#;
        assert!(matches!(parse_model_config(text), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected_with_context() {
        let text = "dimension = 1\nfriction = 2.0\ndiffusion = { dpp = 1.0, dqq = 1.0 }\n";
        let err = parse_model_config(text).unwrap_err().to_string();
        assert!(err.contains("friction"), "{err}");
        let text = "dimension = 1\ndiffusion = { dpp = 1.0, dqq = 1.0, gamma = 3 }\n";
        assert!(parse_model_config(text).is_err());
    }

    #[test]
    fn wrong_component_count_is_rejected() {
        let text = r#"
dimension = 2
[[lindblad]]
alpha = [[1.0, 0.0]]
beta = [[0.0, 0.0]]
"#;
        assert!(parse_model_config(text).is_err());
    }

    #[test]
    fn hartree_flag_and_table() {
        let base = "dimension = 1\ndiffusion = { dpp = 1.0, dqq = 1.0 }\n";
        let m = parse_model_config(&format!("hartree = true\n{base}")).unwrap();
        assert_eq!(m.hartree(), Some(HartreeCoupling { strength: 1.0 }));
        let m = parse_model_config(&format!("hartree = {{ strength = 0.5 }}\n{base}")).unwrap();
        assert_eq!(m.hartree(), Some(HartreeCoupling { strength: 0.5 }));
    }
}
