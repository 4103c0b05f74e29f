//! Job files: one versioned JSON document per run.

use std::path::{Path, PathBuf};

use mimo_placement::greedy::LogDetDirection;
use mimo_placement::oracle::DEFAULT_ENUMERATION_CAP;
use mimo_placement::{
    scenarios, Aggregation, Budgets, Criterion, CriterionKind, DeltaGrid, DeltaTheta, RadarConfig, TargetParams,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    GreedyMfp,
    GreedyLogdet,
    Convex,
    Exhaustive,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::GreedyMfp => "greedy_mfp",
            Self::GreedyLogdet => "greedy_logdet",
            Self::Convex => "convex",
            Self::Exhaustive => "exhaustive",
        }
    }
}

/// Difference grid, either explicit or generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Points {
        points: Vec<DeltaTheta>,
    },
    /// Cartesian lattice; `du` is a direction-cosine difference, `dv` is in m/s.
    Lattice {
        du: (f64, f64),
        dv: (f64, f64),
        nu: usize,
        nv: usize,
        #[serde(default)]
        exclusion: f64,
    },
    /// Symmetric lattice of `extent` resolution cells per side.
    ResolutionCells {
        extent: f64,
        per_axis: usize,
        #[serde(default)]
        exclusion: f64,
    },
}

impl GridSpec {
    pub fn build(&self, cfg: &RadarConfig) -> mimo_placement::Result<DeltaGrid> {
        match self {
            Self::Points { points } => DeltaGrid::from_points(points.clone()),
            Self::Lattice { du, dv, nu, nv, exclusion } => {
                mimo_placement::fim::build_grid(*du, *dv, *nu, *nv, *exclusion)
            }
            Self::ResolutionCells { extent, per_axis, exclusion } => {
                DeltaGrid::resolution_cells(cfg, *extent, *per_axis, *exclusion)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    #[serde(rename = "K_P", default, skip_serializing_if = "Option::is_none")]
    pub k_p: Option<usize>,
    #[serde(rename = "K_R", default, skip_serializing_if = "Option::is_none")]
    pub k_r: Option<usize>,
    /// Whole transmitters instead of individual pulses (exhaustive only).
    #[serde(rename = "K_I", default, skip_serializing_if = "Option::is_none")]
    pub k_i: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    #[serde(default = "default_true")]
    pub lazy: bool,
    #[serde(default)]
    pub direction: LogDetDirection,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_cap")]
    pub enumeration_cap: u128,
}

fn default_true() -> bool {
    true
}

fn default_rounds() -> usize {
    mimo_placement::convex::DEFAULT_ROUNDS
}

fn default_cap() -> u128 {
    DEFAULT_ENUMERATION_CAP
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            lazy: true,
            direction: LogDetDirection::Removal,
            rounds: default_rounds(),
            enumeration_cap: default_cap(),
        }
    }
}

/// Axis `[lo, hi]` sampled at `n` points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        mimo_placement::oracle::axis(self.lo, self.hi, self.n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleSpec {
    pub trials: usize,
    pub targets: Vec<TargetParams>,
    /// Coarse search axes; direction cosine and m/s.
    pub search_u: AxisSpec,
    pub search_v: AxisSpec,
    #[serde(default)]
    pub least_squares_amplitudes: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSpec {
    /// Velocity-difference axis in m/s; defaults to the unambiguous interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<AxisSpec>,
    /// Direction-cosine axis; defaults to `[-1, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<AxisSpec>,
    /// Points per axis of the joint surface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mle: Option<MleSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub version: u32,
    /// Named starting point for `radar` and `grid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radar: Option<RadarConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub criterion: Criterion,
    #[serde(default)]
    pub budgets: BudgetSpec,
    pub solver: SolverKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub options: SolverOptions,
    #[serde(default)]
    pub evaluate: EvaluateSpec,
}

/// A job with its radar and grid resolved.
#[derive(Clone, Debug)]
pub struct Job {
    pub config: JobConfig,
    pub radar: RadarConfig,
    pub grid: DeltaGrid,
    /// SHA-256 of the canonical config without seed and output directory.
    pub hash: String,
}

impl JobConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported config version {} (expected {SCHEMA_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        Self::from_json(&text)
    }

    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.seed = 0;
        canonical.output_dir = None;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn resolve(self) -> Result<Job, CliError> {
        let base = match &self.scenario {
            Some(name) => Some(
                scenarios::by_name(name)
                    .ok_or_else(|| {
                        CliError::Config(format!(
                            "unknown scenario {name:?}; known: {}",
                            scenarios::NAMES.join(", ")
                        ))
                    })??,
            ),
            None => None,
        };
        let radar = match (&self.radar, &base) {
            (Some(r), _) => r.clone(),
            (None, Some(s)) => s.config.clone(),
            (None, None) => return Err(CliError::Config("either `radar` or `scenario` is required".into())),
        };
        radar.validate()?;
        let grid = match (&self.grid, base) {
            (Some(g), _) => g.build(&radar)?,
            (None, Some(s)) if self.radar.is_none() => s.grid,
            _ => DeltaGrid::default_for(&radar)?,
        };
        let hash = self.hash();
        let job = Job {
            config: self,
            radar,
            grid,
            hash,
        };
        job.check_combination()?;
        Ok(job)
    }
}

impl Job {
    pub fn budgets(&self) -> Budgets {
        let b = self.config.budgets;
        Budgets::new(
            b.k_p.unwrap_or(self.radar.transmitters * self.radar.pulses),
            b.k_r.unwrap_or(self.radar.receivers),
        )
    }

    pub fn with_budgets(&self, budgets: Budgets) -> Result<Job, CliError> {
        let mut job = self.clone();
        job.config.budgets.k_p = Some(budgets.pulses);
        job.config.budgets.k_r = Some(budgets.receivers);
        job.hash = job.config.hash();
        job.check_combination()?;
        Ok(job)
    }

    /// Rejects solver/criterion/budget combinations the solvers cannot run.
    pub fn check_combination(&self) -> Result<(), CliError> {
        let c = &self.config.criterion;
        let b = self.config.budgets;
        let illegal = |msg: &str| Err(CliError::Illegal(msg.to_string()));
        if b.k_i.is_some() && self.config.solver != SolverKind::Exhaustive {
            return illegal("K_I (whole-transmitter budgets) is only supported by the exhaustive solver");
        }
        match self.config.solver {
            SolverKind::GreedyMfp => {
                if !matches!(c.kind, CriterionKind::Mfp | CriterionKind::Fp)
                    || c.aggregation != Aggregation::MeanOverGrid
                {
                    return illegal("greedy_mfp needs an MFP or FP criterion with MEAN_OVER_GRID aggregation");
                }
            }
            SolverKind::GreedyLogdet => {
                if c.kind != CriterionKind::DOpt {
                    return illegal("greedy_logdet needs the D_OPT criterion");
                }
                if b.k_r.is_some_and(|k| k != self.radar.receivers) {
                    return illegal("greedy_logdet keeps every receiver fixed; K_R must equal the receiver count");
                }
            }
            SolverKind::Convex => {
                if c.kind != CriterionKind::EOpt || c.aggregation != Aggregation::MaxOverGrid {
                    return illegal("convex needs the E_OPT criterion with MAX_OVER_GRID aggregation");
                }
            }
            SolverKind::Exhaustive => {
                if !c.is_fim_based() {
                    return illegal("exhaustive search needs an A_OPT, D_OPT or E_OPT criterion");
                }
            }
        }
        let budgets = self.budgets();
        if b.k_i.is_none() {
            budgets.check(self.radar.transmitters * self.radar.pulses, self.radar.receivers)?;
        } else if b.k_i > Some(self.radar.transmitters) || budgets.receivers > self.radar.receivers {
            return Err(CliError::Core(mimo_placement::Error::InfeasibleBudget(format!(
                "K_I = {} with {} transmitters",
                b.k_i.unwrap_or(0),
                self.radar.transmitters
            ))));
        }
        Ok(())
    }
}
