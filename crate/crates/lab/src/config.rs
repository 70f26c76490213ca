//! Config documents. Everything is JSON; sub-documents (`model`, `observable`,
//! `elo`) may be given inline or as a path relative to the config file.

use std::path::{Path, PathBuf};

use chernoff_core::chain::{FiniteKernel, FiniteMarkovModel, FiniteMetricSpace, KernelSequence, ObservableSequence};
use chernoff_core::elo::{uniform_pairs, EloConfig, EloState, EnvDynamics, EnvKind, EnvironmentState, TrackingOptions};
use chernoff_core::models::{dyadic_grid, identity_model, mixing_model, random_chain, random_lazy_chain, random_observable};
use chernoff_core::{BoundParams, HermitianMatrix, StreamKey};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::error::RunError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub model: Option<Value>,
    pub observable: Option<Value>,
    pub horizon: Option<usize>,
    pub bounds: Option<BoundsSpec>,
    pub simulate: Option<SimulateSpec>,
    pub elo: Option<Value>,
    pub verify: Option<VerifySpec>,
}

/// A parsed config together with the bytes it was read from.
#[derive(Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub raw: Vec<u8>,
    pub base: PathBuf,
}

fn parse<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, RunError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        RunError::Config(format!(
            "{origin}: line {} column {}, field `{}`: {inner}",
            inner.line(),
            inner.column(),
            e.path()
        ))
    })
}

fn from_value<T: DeserializeOwned>(value: Value, field: &str) -> Result<T, RunError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let at = if path == "." { field.to_string() } else { format!("{field}.{path}") };
        RunError::Config(format!("field `{at}`: {}", e.inner()))
    })
}

impl LoadedConfig {
    pub fn from_file(path: &Path) -> Result<Self, RunError> {
        let raw = std::fs::read(path).map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        let text = String::from_utf8(raw.clone()).map_err(|_| RunError::Config(format!("{} is not UTF-8", path.display())))?;
        let config = parse(&text, &path.display().to_string())?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, raw, base })
    }

    pub fn from_text(text: &str) -> Result<Self, RunError> {
        Ok(LoadedConfig { config: parse(text, "config")?, raw: text.as_bytes().to_vec(), base: PathBuf::new() })
    }

    /// Parses the sub-document `field`, following a file reference if it is a string.
    fn section<T: DeserializeOwned>(&self, value: Option<&Value>, field: &str) -> Result<Option<T>, RunError> {
        match value {
            None => Ok(None),
            Some(Value::String(rel)) => {
                let path = self.base.join(rel);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| RunError::Config(format!("field `{field}`: cannot read {}: {e}", path.display())))?;
                parse(&text, &path.display().to_string()).map(Some)
            }
            Some(v) => from_value(v.clone(), field).map(Some),
        }
    }

    pub fn model(&self) -> Result<FiniteMarkovModel, RunError> {
        let spec: ModelSpec = self
            .section(self.config.model.as_ref(), "model")?
            .ok_or_else(|| RunError::Config("missing field `model`".into()))?;
        spec.build()
    }

    pub fn observable(&self, size: usize) -> Result<Option<ObservableSequence>, RunError> {
        let spec: Option<ObservableSpec> = self.section(self.config.observable.as_ref(), "observable")?;
        spec.map(|s| s.build(size)).transpose()
    }

    pub fn elo(&self) -> Result<EloSpec, RunError> {
        self.section(self.config.elo.as_ref(), "elo")?
            .ok_or_else(|| RunError::Config("missing field `elo`".into()))
    }
}

fn config_err(field: &str, e: impl std::fmt::Display) -> RunError {
    RunError::Config(format!("field `{field}`: {e}"))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Pairwise distances, one row per state.
    pub dist: Option<Vec<Vec<f64>>>,
    /// States on the real line; an alternative to `dist`.
    pub points: Option<Vec<f64>>,
    pub mu0: Option<Vec<f64>>,
    /// Transition matrices, applied in order and repeated periodically.
    pub kernels: Option<Vec<Vec<Vec<f64>>>>,
    pub rule: Option<RuleSpec>,
    #[serde(default = "yes")]
    pub check_triangle: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RuleSpec {
    Identity,
    Mixing { pi: Vec<f64> },
    /// Halving chain on the grid `jD/2^level`; carries its own state space.
    Dyadic { level: u32, diameter: f64 },
    /// Random lazy kernels drawn afresh at every step.
    RandomLazy { size: usize, seed: u64 },
    /// `horizon` unrestricted random kernels.
    Random { size: usize, horizon: usize, seed: u64 },
}

impl ModelSpec {
    fn space(&self) -> Result<FiniteMetricSpace, RunError> {
        match (&self.dist, &self.points) {
            (Some(d), None) => FiniteMetricSpace::new(d.clone(), self.check_triangle).map_err(|e| config_err("model.dist", e)),
            (None, Some(p)) => FiniteMetricSpace::on_line(p).map_err(|e| config_err("model.points", e)),
            _ => Err(RunError::Config("field `model`: give exactly one of `dist` or `points`".into())),
        }
    }

    fn mu0(&self, size: usize) -> Vec<f64> {
        self.mu0.clone().unwrap_or_else(|| vec![1.0 / size as f64; size])
    }

    pub fn build(&self) -> Result<FiniteMarkovModel, RunError> {
        let own_space = matches!(self.rule, Some(RuleSpec::Dyadic { .. } | RuleSpec::RandomLazy { .. } | RuleSpec::Random { .. }));
        if own_space && (self.dist.is_some() || self.points.is_some() || self.mu0.is_some()) {
            return Err(RunError::Config("field `model.rule`: this rule builds its own space and mu0".into()));
        }
        let err = |e| config_err("model", e);
        match (&self.kernels, &self.rule) {
            (Some(ks), None) => {
                let space = self.space()?;
                let mu0 = self.mu0(space.size());
                let kernels = ks
                    .iter()
                    .enumerate()
                    .map(|(i, k)| FiniteKernel::new(k.clone()).map_err(|e| config_err(&format!("model.kernels[{i}]"), e)))
                    .collect::<Result<Vec<_>, _>>()?;
                if kernels.is_empty() {
                    return Err(RunError::Config("field `model.kernels`: empty".into()));
                }
                FiniteMarkovModel::new(space, mu0, KernelSequence::periodic(kernels)).map_err(err)
            }
            (None, Some(rule)) => match rule {
                RuleSpec::Identity => {
                    let space = self.space()?;
                    let mu0 = self.mu0(space.size());
                    identity_model(space, mu0).map_err(err)
                }
                RuleSpec::Mixing { pi } => {
                    let space = self.space()?;
                    let mu0 = self.mu0(space.size());
                    mixing_model(space, mu0, pi).map_err(err)
                }
                RuleSpec::Dyadic { level, diameter } => dyadic_grid(*level, *diameter, None).map_err(err),
                RuleSpec::RandomLazy { size, seed } => random_lazy_chain(*size, StreamKey::root(*seed)).map_err(err),
                RuleSpec::Random { size, horizon, seed } => random_chain(*size, *horizon, StreamKey::root(*seed)).map_err(err),
            },
            _ => Err(RunError::Config("field `model`: give exactly one of `kernels` or `rule`".into())),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Real(Vec<Vec<f64>>),
    Complex { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

impl MatrixSpec {
    fn build(&self, field: &str) -> Result<HermitianMatrix, RunError> {
        let (re, im) = match self {
            MatrixSpec::Real(re) => (re.clone(), vec![vec![0.0; re.len()]; re.len()]),
            MatrixSpec::Complex { re, im } => (re.clone(), im.clone()),
        };
        let m = re.len();
        if re.iter().chain(&im).any(|r| r.len() != m) || im.len() != m {
            return Err(config_err(field, "matrix parts must be square and of equal size"));
        }
        for i in 0..m {
            for j in 0..m {
                let scale = 1.0 + re[i][j].abs().max(im[i][j].abs());
                if (re[i][j] - re[j][i]).abs() > 1e-12 * scale || (im[i][j] + im[j][i]).abs() > 1e-12 * scale {
                    return Err(config_err(field, format!("matrix is not Hermitian at ({i}, {j})")));
                }
            }
        }
        HermitianMatrix::from_parts(&re, &im).map_err(|e| config_err(field, e))
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservableSpec {
    /// One real value per state.
    Scalar { values: Vec<f64> },
    Constant { matrix: MatrixSpec },
    /// `tables[k][x]` is the matrix at state `x` for steps `t ≡ k + 1` (mod the period).
    Table { tables: Vec<Vec<MatrixSpec>> },
    Random { m: usize, period: usize, scale: f64, seed: u64 },
}

impl ObservableSpec {
    pub fn build(&self, size: usize) -> Result<ObservableSequence, RunError> {
        match self {
            ObservableSpec::Scalar { values } => {
                if values.len() != size {
                    return Err(config_err("observable.values", format!("expected {size} values, got {}", values.len())));
                }
                Ok(ObservableSequence::scalar(values))
            }
            ObservableSpec::Constant { matrix } => Ok(ObservableSequence::constant(matrix.build("observable.matrix")?)),
            ObservableSpec::Table { tables } => {
                let mut built = Vec::with_capacity(tables.len());
                for (k, table) in tables.iter().enumerate() {
                    if table.len() != size {
                        return Err(config_err(&format!("observable.tables[{k}]"), format!("expected {size} matrices")));
                    }
                    let row = table
                        .iter()
                        .enumerate()
                        .map(|(x, m)| m.build(&format!("observable.tables[{k}][{x}]")))
                        .collect::<Result<Vec<_>, _>>()?;
                    built.push(row);
                }
                ObservableSequence::periodic(built).map_err(|e| config_err("observable.tables", e))
            }
            ObservableSpec::Random { m, period, scale, seed } => {
                if *m == 0 || *period == 0 {
                    return Err(config_err("observable", "m and period must be positive"));
                }
                Ok(random_observable(size, *m, *period, *scale, &mut StreamKey::root(*seed).rng()))
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.from],
            k => (0..k)
                .map(|i| (self.from * (k - 1 - i) as f64 + self.to * i as f64) / (k - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub m: Option<usize>,
    pub lipschitz: Option<f64>,
    pub diameter: Option<f64>,
    pub delta_op: Option<f64>,
    pub delta_f: Option<f64>,
    pub kappa: Option<f64>,
    pub lambda: Option<f64>,
    pub sigma_inf: Option<f64>,
    pub kappa_tilde: Option<f64>,
}

impl ParamSpec {
    pub fn to_params(&self, n: usize) -> BoundParams {
        BoundParams {
            m: self.m,
            n: Some(n),
            eps: None,
            lipschitz: self.lipschitz,
            diameter: self.diameter,
            delta_op: self.delta_op,
            delta_f: self.delta_f,
            kappa: self.kappa,
            lambda: self.lambda,
            sigma_inf: self.sigma_inf,
            kappa_tilde: self.kappa_tilde,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub n: usize,
    /// Explicit constants; without them they are computed from `model` and `observable`.
    pub params: Option<ParamSpec>,
    pub eps: Option<Vec<f64>>,
    pub eps_sweep: Option<Sweep>,
    /// Confidence level for the sample-size inversion columns.
    pub delta: Option<f64>,
}

impl BoundsSpec {
    pub fn grid(&self) -> Result<Vec<f64>, RunError> {
        let grid = match (&self.eps, &self.eps_sweep) {
            (Some(e), None) => e.clone(),
            (None, Some(s)) => s.values(),
            _ => return Err(RunError::Config("field `bounds`: give exactly one of `eps` or `eps_sweep`".into())),
        };
        if grid.is_empty() || grid.iter().any(|e| !(*e > 0.0)) {
            return Err(RunError::Config("field `bounds.eps`: need at least one positive value".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub n: usize,
    pub reps: usize,
    #[serde(default = "twenty")]
    pub grid_points: usize,
    pub eps: Option<Vec<f64>>,
}

fn twenty() -> usize {
    20
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub kind: String,
    #[serde(default)]
    pub params: Option<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArParams {
    noise_radius: f64,
    q_base: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EloSpec {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: f64,
    pub eta: f64,
    pub nu: f64,
    pub env: EnvSpec,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "T0")]
    pub burn_in: usize,
    pub reps: usize,
    pub seed: Option<u64>,
    pub eps: f64,
    pub delta: f64,
    #[serde(rename = "C_sweep")]
    pub c_sweep: Vec<f64>,
    /// Initial skills; default spreads them evenly over `[−M/2, M/2]`.
    pub rho0: Option<Vec<f64>>,
    /// Initial pair distribution over `i < j` in lexicographic order; default uniform.
    pub q0: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_resamples")]
    pub drift_resamples: usize,
    pub drift_stride: Option<usize>,
    /// Write the match-by-match log of this run.
    pub match_log: Option<usize>,
}

fn default_resamples() -> usize {
    32
}

impl EloSpec {
    pub fn build(&self, seed: u64) -> Result<(EloConfig, TrackingOptions), RunError> {
        let (n, m) = (self.n, self.m);
        if n < 2 {
            return Err(config_err("elo.n", "need at least two players"));
        }
        let kind = match self.env.kind.as_str() {
            "static" => {
                if self.env.params.as_ref().is_some_and(|p| !p.is_null()) {
                    return Err(config_err("elo.env.params", "the static environment takes no parameters"));
                }
                EnvKind::Static
            }
            "ar-contract" => {
                let p: ArParams = from_value(self.env.params.clone().unwrap_or(Value::Null), "elo.env.params")?;
                EnvKind::ArContract { nu: self.nu, noise_radius: p.noise_radius, q_base: p.q_base.unwrap_or_else(|| uniform_pairs(n)) }
            }
            other => {
                return Err(config_err(
                    "elo.env.kind",
                    format!("unknown environment `{other}`; the CLI knows `static` and `ar-contract`"),
                ))
            }
        };
        let env = EnvDynamics::new(kind, m).map_err(|e| config_err("elo.env", e))?;
        let rho = self
            .rho0
            .clone()
            .unwrap_or_else(|| (0..n).map(|i| m * (i as f64 / (n - 1) as f64 - 0.5)).collect());
        let q = self.q0.clone().unwrap_or_else(|| uniform_pairs(n));
        let initial_env = EnvironmentState::new(rho, q, m).map_err(|e| config_err("elo.rho0/q0", e))?;
        let initial_x = match &self.x0 {
            Some(x) => EloState::new(x.clone(), m).map_err(|e| config_err("elo.x0", e))?,
            None => EloState::zeros(n),
        };
        let config = EloConfig {
            players: n,
            box_radius: m,
            eta: self.eta,
            nu: self.nu,
            env,
            initial_env,
            initial_x,
            horizon: self.horizon,
            burn_in: self.burn_in,
            reps: self.reps,
            seed,
        };
        config.validate().map_err(|e| config_err("elo", e))?;
        if self.c_sweep.is_empty() || self.c_sweep.iter().any(|c| !(*c > 0.0)) {
            return Err(config_err("elo.C_sweep", "need at least one positive constant"));
        }
        let options = TrackingOptions {
            eps: self.eps,
            delta: self.delta,
            c_sweep: self.c_sweep.clone(),
            drift_resamples: self.drift_resamples.max(1),
            drift_stride: self.drift_stride.unwrap_or((self.horizon / 200).max(1)),
        };
        Ok((config, options))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Random instances per check.
    pub instances: Option<usize>,
    /// Trajectories for the dyadic tightness experiment.
    pub tightness_reps: Option<usize>,
}
