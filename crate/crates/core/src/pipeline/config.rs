//! Run configuration: per-exemplar presets overlaid with a user TOML file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::eql::parse_dictionary;
use crate::error::{Error, Result};
use crate::optimizer::AcqKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Vae,
    Al,
    Dae,
    Eql,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Vae => "vae",
            Stage::Al => "al",
            Stage::Dae => "dae",
            Stage::Eql => "eql",
        }
    }

    /// Offset added to the master seed for this stage.
    pub fn seed_offset(self) -> u64 {
        match self {
            Stage::Vae => 0,
            Stage::Al => 1,
            Stage::Dae => 2,
            Stage::Eql => 3,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exemplar {
    Projectile,
    Ising,
    Surrogate,
    LotkaVolterra,
    VanDerPol,
    MagneticMoment,
}

impl Exemplar {
    pub const ALL: [Exemplar; 6] = [
        Exemplar::Projectile,
        Exemplar::Ising,
        Exemplar::Surrogate,
        Exemplar::LotkaVolterra,
        Exemplar::VanDerPol,
        Exemplar::MagneticMoment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Exemplar::Projectile => "projectile",
            Exemplar::Ising => "ising",
            Exemplar::Surrogate => "surrogate",
            Exemplar::LotkaVolterra => "lotka_volterra",
            Exemplar::VanDerPol => "van_der_pol",
            Exemplar::MagneticMoment => "magnetic_moment",
        }
    }

    /// Stages in execution order. Ising searches the scalar initial
    /// magnetization directly and needs neither autoencoder.
    pub fn chain(self) -> &'static [Stage] {
        match self {
            Exemplar::Projectile => &[Stage::Vae, Stage::Al, Stage::Dae, Stage::Eql],
            Exemplar::Ising | Exemplar::Surrogate => &[Stage::Al, Stage::Eql],
            Exemplar::LotkaVolterra | Exemplar::VanDerPol | Exemplar::MagneticMoment => &[Stage::Eql],
        }
    }

    /// Name of the learned quantity in equation output.
    pub fn target(self) -> &'static str {
        match self {
            Exemplar::Projectile => "H",
            Exemplar::Ising => "y",
            Exemplar::Surrogate => "D_e",
            Exemplar::LotkaVolterra | Exemplar::VanDerPol => "xdot",
            Exemplar::MagneticMoment => "mu",
        }
    }
}

impl fmt::Display for Exemplar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Exemplar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Exemplar::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| Error::Unknown { kind: "exemplar", name: s.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeStageConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub recon_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlStageConfig {
    pub n_init: usize,
    pub budget: usize,
    /// `ei` or `ucb`.
    pub acquisition: String,
    pub lambda: f64,
    /// Latent search box `[-half_width, half_width]^d`.
    pub half_width: f64,
}

impl AlStageConfig {
    pub fn acq_kind(&self) -> Result<AcqKind> {
        match self.acquisition.as_str() {
            "ei" => Ok(AcqKind::Ei),
            "ucb" => Ok(AcqKind::Ucb { lambda: self.lambda }),
            other => Err(Error::Config(format!("al.acquisition '{other}' is not ei or ucb"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaeStageConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Share of AL experiments, ranked by objective, kept as realistic.
    pub realistic_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqlStageConfig {
    /// Comma-separated unit dictionary, e.g. `sq,prod,sin`.
    pub dict: String,
    pub copies: usize,
    pub sparsity: f64,
    pub min_layer_connections: usize,
    pub epochs: usize,
    pub restarts: usize,
    /// Relative MSE slack of weak-term removal.
    pub tau: f64,
    pub standardize_inputs: bool,
    /// Input columns; empty means every non-attribute column.
    pub inputs: Vec<String>,
    /// Rows of generated benchmark data.
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsingStageConfig {
    pub side: usize,
    pub n_beta: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub n_init: usize,
    pub budget: usize,
    /// Independent chains measured per temperature.
    pub chains: usize,
    /// Measurement sweeps per chain after burn-in.
    pub sweeps: usize,
    pub eps: f64,
    pub window: usize,
    pub cap: usize,
}

/// Gain-factor inputs. Unset autonomous figures are measured by the AL stage
/// where the exemplar supports it; see [`GainConfig::measured`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainConfig {
    pub n_human: Option<f64>,
    pub n_auto: Option<f64>,
    pub variety_human: Option<f64>,
    pub variety_auto: Option<f64>,
    pub value_human: Option<f64>,
    pub value_auto: Option<f64>,
}

impl GainConfig {
    /// Fields the AL stage of `exemplar` can measure itself.
    pub fn measured(exemplar: Exemplar) -> &'static [&'static str] {
        match exemplar {
            Exemplar::Projectile => &["n_auto", "variety_human", "variety_auto", "value_auto"],
            Exemplar::Ising => &["value_auto"],
            Exemplar::Surrogate => &["n_auto"],
            _ => &[],
        }
    }

    fn fields(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("n_human", self.n_human),
            ("n_auto", self.n_auto),
            ("variety_human", self.variety_human),
            ("variety_auto", self.variety_auto),
            ("value_human", self.value_human),
            ("value_auto", self.value_auto),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub exemplar: Exemplar,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub stages: Vec<Stage>,
    pub vae: VaeStageConfig,
    pub al: AlStageConfig,
    pub dae: DaeStageConfig,
    pub eql: EqlStageConfig,
    pub ising: IsingStageConfig,
    pub gain: GainConfig,
}

impl PipelineConfig {
    /// Settings used when a config file leaves a key out.
    pub fn preset(exemplar: Exemplar) -> Self {
        let mut eql = EqlStageConfig {
            dict: "sq,prod".into(),
            copies: 3,
            sparsity: 0.9,
            min_layer_connections: 4,
            epochs: 1500,
            restarts: 3,
            tau: 0.05,
            standardize_inputs: false,
            inputs: Vec::new(),
            rows: 500,
        };
        let mut al =
            AlStageConfig { n_init: 50, budget: 500, acquisition: "ei".into(), lambda: AcqKind::DEFAULT_LAMBDA, half_width: 3.0 };
        let mut gain = GainConfig { n_human: Some(10.0), value_human: Some(1.0), ..Default::default() };
        match exemplar {
            Exemplar::Projectile => {
                eql.inputs = vec!["z_1".into()];
                eql.standardize_inputs = true;
            }
            Exemplar::Ising => {
                eql.dict = "sinh".into();
                eql.min_layer_connections = 1;
                gain.n_auto = Some(10.0);
                gain.variety_human = Some(1.0);
                gain.variety_auto = Some(1.0);
            }
            Exemplar::Surrogate => {
                al.n_init = 200;
                al.budget = 1000;
                // AL records crowd the optimum corner; z-scoring and extra
                // restarts keep the weak z2^2 term from being pruned.
                eql.standardize_inputs = true;
                eql.restarts = 8;
                gain = GainConfig {
                    n_human: Some(1e6),
                    n_auto: None,
                    variety_human: Some(0.1),
                    variety_auto: Some(100.0),
                    value_human: Some(1.0),
                    value_auto: Some(2.0),
                };
            }
            Exemplar::LotkaVolterra | Exemplar::VanDerPol | Exemplar::MagneticMoment => gain = GainConfig::default(),
        }
        Self {
            exemplar,
            seed: 0,
            out_dir: PathBuf::from("runs"),
            stages: exemplar.chain().to_vec(),
            vae: VaeStageConfig { epochs: 600, batch_size: 128, lr: 1e-3, recon_weight: 1000.0 },
            al,
            dae: DaeStageConfig {
                latent_dim: 2,
                hidden: vec![32, 16],
                gamma: 1.0,
                epochs: 300,
                batch_size: 64,
                lr: 3e-3,
                realistic_fraction: 0.25,
            },
            eql,
            ising: IsingStageConfig {
                side: 32,
                n_beta: 12,
                beta_min: 0.45,
                beta_max: 1.2,
                n_init: 4,
                budget: 12,
                chains: 5,
                sweeps: 10_000,
                eps: 0.02,
                window: 50,
                cap: 50_000,
            },
            gain,
        }
    }

    /// Parse TOML over the preset of its `exemplar`; any problem is a
    /// [`Error::Config`].
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let user: toml::Table = s.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let exemplar: Exemplar = match user.get("exemplar") {
            Some(toml::Value::String(name)) => name.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            Some(_) => return Err(Error::Config("exemplar must be a string".into())),
            None => return Err(Error::Config("missing key 'exemplar'".into())),
        };
        let mut merged = toml::Table::try_from(Self::preset(exemplar)).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        self.seed.wrapping_add(stage.seed_offset())
    }

    /// Stages must be a nonempty prefix of the exemplar's chain, so every
    /// stage has its input produced by an earlier one.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let chain = self.exemplar.chain();
        if self.stages.is_empty() || self.stages.len() > chain.len() || self.stages[..] != chain[..self.stages.len()] {
            let names: Vec<&str> = chain.iter().map(|s| s.name()).collect();
            return bad(format!("stages must be a nonempty prefix of [{}] for {}", names.join(", "), self.exemplar));
        }
        if self.out_dir.as_os_str().is_empty() {
            return bad("out_dir is empty".into());
        }
        let uses = |s: Stage| self.stages.contains(&s);
        if uses(Stage::Vae) {
            let v = &self.vae;
            if v.epochs == 0 || v.batch_size == 0 || !(v.lr > 0.0) || !(v.recon_weight > 0.0) {
                return bad(format!("vae settings {v:?}"));
            }
        }
        if uses(Stage::Al) && self.exemplar != Exemplar::Ising {
            let a = &self.al;
            self.al.acq_kind()?;
            if a.n_init == 0 || a.budget <= a.n_init || !(a.half_width > 0.0) || !(a.lambda >= 0.0) {
                return bad(format!("al settings {a:?}: need 0 < n_init < budget and a positive box"));
            }
        }
        if uses(Stage::Dae) {
            let d = &self.dae;
            if d.latent_dim == 0 || d.hidden.contains(&0) || d.epochs == 0 || d.batch_size < 2 || !(d.lr > 0.0) {
                return bad(format!("dae settings {d:?}"));
            }
            if !(d.gamma >= 0.0) || !(d.realistic_fraction > 0.0 && d.realistic_fraction <= 1.0) {
                return bad(format!("dae gamma {} / realistic_fraction {}", d.gamma, d.realistic_fraction));
            }
        }
        if uses(Stage::Eql) {
            let e = &self.eql;
            let dict = parse_dictionary(&e.dict).map_err(|err| Error::Config(format!("eql.dict: {err}")))?;
            if dict.is_empty() || e.copies == 0 || e.epochs == 0 || e.restarts == 0 || e.rows < 50 {
                return bad(format!("eql settings {e:?}"));
            }
            if !(e.sparsity > 0.0 && e.sparsity < 1.0) || !(e.tau >= 0.0) {
                return bad(format!("eql sparsity {} / tau {}", e.sparsity, e.tau));
            }
        }
        if self.exemplar == Exemplar::Ising && uses(Stage::Al) {
            let i = &self.ising;
            if i.side < 2 || i.n_beta < 2 || i.chains == 0 || i.sweeps == 0 || i.n_init == 0 || i.budget <= i.n_init {
                return bad(format!("ising settings {i:?}"));
            }
            if !(i.beta_min > 0.0 && i.beta_min < i.beta_max) || !(i.eps > 0.0) || i.window == 0 || i.cap < i.window {
                return bad(format!("ising settings {i:?}"));
            }
        }
        for (name, v) in self.gain.fields() {
            match v {
                Some(v) if !(v > 0.0) => return bad(format!("gain.{name} must be positive, got {v}")),
                None if uses(Stage::Al) && !GainConfig::measured(self.exemplar).contains(&name) => {
                    return bad(format!("gain.{name} is required for {}", self.exemplar));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Equal apart from the stage list, which a resumed run may extend.
    pub fn same_run(&self, other: &Self) -> bool {
        Self { stages: Vec::new(), ..self.clone() } == Self { stages: Vec::new(), ..other.clone() }
    }
}

/// Recursive table overlay; non-table values in `over` replace.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
