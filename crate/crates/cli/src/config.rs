use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use mesoloc_core::{
    locality_support, Causality, CostSpec, LinearSystem, LocalityRule, PlantConfig, SupportSpec, SynthesisMode,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lqr,
    #[value(name = "mdesign")]
    MDesign,
    Sls,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Lqr, Mode::MDesign, Mode::Sls];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lqr => "lqr",
            Self::MDesign => "mdesign",
            Self::Sls => "sls",
        }
    }

    pub fn synthesis(self) -> Option<SynthesisMode> {
        match self {
            Self::Lqr => None,
            Self::MDesign => Some(SynthesisMode::MDesign),
            Self::Sls => Some(SynthesisMode::Sls),
        }
    }
}

/// `"identity"`, `{"diag": [...]}` or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QSpec {
    Keyword(String),
    Diagonal { diag: Vec<f64> },
    Matrix(Vec<Vec<f64>>),
}

impl Default for QSpec {
    fn default() -> Self {
        Self::Keyword("identity".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default)]
    pub q: QSpec,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            q: QSpec::default(),
            eps: default_eps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalityConfig {
    pub d: usize,
    #[serde(default)]
    pub comm_delay: usize,
    #[serde(default)]
    pub self_delay: usize,
    /// When false only M is masked; R is left free.
    #[serde(default = "yes")]
    pub localize_r: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// Unit disturbance at a 1-based node.
    Impulse {
        node: usize,
        #[serde(default)]
        time: usize,
        #[serde(default)]
        steps: Option<usize>,
    },
    /// Uniform disturbance in `[-amplitude, amplitude]`, seeded by `seed`.
    Random {
        steps: usize,
        #[serde(default = "unit")]
        amplitude: f64,
    },
    /// Sparse CSV `t,node,value` with 1-based nodes; relative paths resolve
    /// against the config file.
    File {
        path: PathBuf,
        #[serde(default)]
        steps: Option<usize>,
    },
    Zero {
        steps: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantConfig,
    #[serde(default)]
    pub cost: CostConfig,
    /// `null` leaves every spectral element unconstrained.
    #[serde(default)]
    pub locality: Option<LocalityConfig>,
    pub horizon: usize,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// Lets M-Design use `M(0)`.
    #[serde(default = "yes")]
    pub mdesign_m0: bool,
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_activity_tol")]
    pub activity_tol: f64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_eps() -> f64 {
    1e-6
}

fn default_tau() -> f64 {
    mesoloc_core::spectral::DEFAULT_TAU
}

fn default_activity_tol() -> f64 {
    1e-6
}

fn default_mode() -> Mode {
    Mode::Sls
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

fn unit() -> f64 {
    1.0
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(Scenario::File { path: file, .. }) = &mut config.scenario {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(config)
    }

    pub fn system(&self) -> Result<LinearSystem> {
        self.plant.build().context("building plant")
    }

    pub fn cost(&self, n: usize) -> Result<CostSpec> {
        let q = match &self.cost.q {
            QSpec::Keyword(k) if k == "identity" => DMatrix::identity(n, n),
            QSpec::Keyword(k) => bail!("unknown Q form {k:?}; use \"identity\", {{\"diag\": [...]}} or a matrix"),
            QSpec::Diagonal { diag } => {
                if diag.len() != n {
                    bail!("Q diagonal has {} entries for {n} states", diag.len());
                }
                DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag))
            }
            QSpec::Matrix(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    bail!("Q must be {n}x{n}");
                }
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
        };
        CostSpec::new(q, self.cost.eps).context("invalid cost")
    }

    pub fn causality(&self, mode: Mode) -> Causality {
        if mode == Mode::MDesign && self.mdesign_m0 {
            Causality::CausalM
        } else {
            Causality::StrictlyCausal
        }
    }

    /// Masks for a localized mode; LQR gets all-true masks.
    pub fn support(&self, sys: &LinearSystem, mode: Mode) -> Result<SupportSpec> {
        let causality = self.causality(mode);
        let (n, m) = (sys.state_dim(), sys.input_dim());
        let spec = match (&self.locality, mode) {
            (Some(loc), Mode::MDesign | Mode::Sls) => {
                let rule = LocalityRule {
                    d: loc.d,
                    comm_delay: loc.comm_delay,
                    self_delay: loc.self_delay,
                };
                let spec = locality_support(sys, rule, self.horizon, causality)?;
                if loc.localize_r {
                    spec
                } else {
                    spec.without_r_constraints()
                }
            }
            _ => SupportSpec::permissive(n, m, self.horizon, causality),
        };
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            bail!("horizon must be at least 1");
        }
        if !(self.tau >= 0.0) {
            bail!("tau must be nonnegative");
        }
        if !(self.activity_tol >= 0.0) {
            bail!("activity_tol must be nonnegative");
        }
        Ok(())
    }

    pub fn mode_dir(&self, mode: Mode) -> PathBuf {
        self.out.join(mode.as_str())
    }
}
