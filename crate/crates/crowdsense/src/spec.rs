//! Experiment specification files.

use std::path::{Path, PathBuf};

use crowdsense_core::domain::Region;
use crowdsense_core::mechanisms::MechanismKind;
use crowdsense_core::payments::Accuracy;
use crowdsense_core::population::PopulationConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::io::{load_json, load_population_config, load_region};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    Budget(Vec<f64>),
    TargetUtility(Vec<f64>),
    ObfuscationRadius(Vec<f64>),
}

impl Sweep {
    pub fn values(&self) -> &[f64] {
        match self {
            Sweep::Budget(v) | Sweep::TargetUtility(v) | Sweep::ObfuscationRadius(v) => v,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Sweep::Budget(_) => "budget",
            Sweep::TargetUtility(_) => "target_utility",
            Sweep::ObfuscationRadius(_) => "obfuscation_radius",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    Fixed(f64),
    Optimized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaymentSettings {
    /// Compute threshold payments for truthful mechanisms. When off their
    /// total payment is reported as null.
    pub enabled: bool,
    /// Hoeffding accuracy as a fraction of the budget.
    pub epsilon_fraction: f64,
    pub delta: f64,
}

impl Default for PaymentSettings {
    fn default() -> Self {
        PaymentSettings { enabled: true, epsilon_fraction: 0.01, delta: 0.05 }
    }
}

impl PaymentSettings {
    pub fn accuracy(&self, budget: f64) -> Accuracy {
        Accuracy { epsilon: self.epsilon_fraction * budget, delta: self.delta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaSearch {
    /// Prior realizations the candidate `α` must stay feasible on.
    pub probes: usize,
    pub grid_step: f64,
}

impl Default for AlphaSearch {
    fn default() -> Self {
        AlphaSearch { probes: 5, grid_step: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSearch {
    /// A budget qualifies once realized utility reaches `target - utility_tolerance`.
    pub utility_tolerance: f64,
    /// Bisection stops when the bracket is narrower than this.
    pub bracket: f64,
}

impl Default for BudgetSearch {
    fn default() -> Self {
        BudgetSearch { utility_tolerance: 0.0, bracket: 0.001 }
    }
}

/// Desk-scale instances for the verification battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    pub instances: usize,
    pub n_users: usize,
    pub max_profiles: usize,
    pub n_locations: usize,
    pub budget_min: f64,
    pub budget_max: f64,
    pub bid_grid: usize,
    pub submodularity_triples: usize,
    pub approximation_monte_carlo: usize,
    pub max_counterexamples: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            instances: 200,
            n_users: 5,
            max_profiles: 2,
            n_locations: 8,
            budget_min: 0.2,
            budget_max: 2.0,
            bid_grid: 50,
            submodularity_triples: 20,
            approximation_monte_carlo: 2000,
            max_counterexamples: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub region_path: PathBuf,
    pub population_config_path: PathBuf,
    pub mechanisms: Vec<MechanismKind>,
    pub sweep: Sweep,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_alpha_mode")]
    pub alpha_mode: AlphaMode,
    /// Budget when the sweep is not over budgets.
    #[serde(default)]
    pub budget: Option<f64>,
    /// Target for the budget-required metric when the sweep is not over targets.
    #[serde(default)]
    pub target_utility: Option<f64>,
    #[serde(default)]
    pub payments: PaymentSettings,
    #[serde(default)]
    pub alpha_search: AlphaSearch,
    #[serde(default)]
    pub budget_search: BudgetSearch,
    #[serde(default)]
    pub verify: VerifySettings,
    #[serde(default)]
    pub write_traces: bool,
}

fn default_trials() -> usize {
    200
}

fn default_alpha_mode() -> AlphaMode {
    AlphaMode::Fixed(2.0)
}

fn spec_error(msg: impl Into<String>) -> HarnessError {
    HarnessError::Spec(msg.into())
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.mechanisms.is_empty() {
            return Err(spec_error("mechanism list is empty"));
        }
        if self.trials < 1 {
            return Err(spec_error("trials must be at least 1"));
        }
        let values = self.sweep.values();
        if values.is_empty() {
            return Err(spec_error("sweep list is empty"));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(spec_error("sweep values must be finite and strictly increasing"));
        }
        match self.sweep {
            Sweep::Budget(ref v) if v[0] <= 0.0 => return Err(spec_error("swept budgets must be positive")),
            Sweep::TargetUtility(ref v) if v[0] < 0.0 => return Err(spec_error("swept targets must be non-negative")),
            Sweep::ObfuscationRadius(ref v) if v[0] < 0.0 => {
                return Err(spec_error("swept radii must be non-negative"))
            }
            Sweep::Budget(_) => {}
            _ if !self.budget.is_some_and(|b| b > 0.0 && b.is_finite()) => {
                return Err(spec_error("a positive budget is required unless the sweep is over budgets"))
            }
            _ => {}
        }
        if let AlphaMode::Fixed(a) = self.alpha_mode {
            if !(a >= 1.0 && a.is_finite()) {
                return Err(spec_error(format!("fixed alpha {a} must be at least 1")));
            }
        }
        if let Some(t) = self.target_utility {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(spec_error("target utility must be a non-negative real"));
            }
        }
        let p = &self.payments;
        if !(p.epsilon_fraction > 0.0 && p.delta > 0.0 && p.delta < 1.0) {
            return Err(spec_error("payment accuracy needs epsilon_fraction > 0 and 0 < delta < 1"));
        }
        if self.alpha_search.probes == 0 || !(self.alpha_search.grid_step > 0.0) {
            return Err(spec_error("alpha search needs at least one probe and a positive grid step"));
        }
        let b = &self.budget_search;
        if !(b.bracket > 0.0 && b.utility_tolerance >= 0.0) {
            return Err(spec_error("budget search needs a positive bracket and non-negative tolerance"));
        }
        let v = &self.verify;
        if v.n_users == 0 || v.max_profiles == 0 || v.n_locations == 0 || v.bid_grid < 2 {
            return Err(spec_error("verify settings need users, profiles, locations and at least 2 grid points"));
        }
        if !(v.budget_min > 0.0 && v.budget_min <= v.budget_max) {
            return Err(spec_error("verify budgets need 0 < budget_min <= budget_max"));
        }
        Ok(())
    }
}

/// A validated spec with its region and population config loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub region: Region,
    pub population: PopulationConfig,
}

impl Experiment {
    pub fn new(spec: ExperimentSpec, region: Region, population: PopulationConfig) -> Result<Self> {
        spec.validate()?;
        population.validate()?;
        Ok(Experiment { spec, region, population })
    }

    /// Load a spec; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let spec: ExperimentSpec = load_json(path)?;
        spec.validate()?;
        let base = path.parent().unwrap_or(Path::new("."));
        let region = load_region(&base.join(&spec.region_path))?;
        let population = load_population_config(&base.join(&spec.population_config_path))?;
        Self::new(spec, region, population)
    }
}
