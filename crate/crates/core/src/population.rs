//! Synthetic populations over a region: homes, costs, sensing radii, true
//! sensing profiles and obfuscated privacy profiles.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::Rng as _;
use rand_distr::{Exp, LogNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{LocationId, PrivacyProfile, Region, SensingProfile, User};
use crate::error::{invalid, Result};
use crate::rng::{rng_from, Rng};

const EARTH_RADIUS_MILES: f64 = 3958.7613;

// stream labels for seed derivation
const USER_STREAM: u64 = 1;
const CANDIDATE_STREAM: u64 = 2;

/// Great-circle distance in miles.
pub fn haversine_miles(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = libm::pow(libm::sin(dp / 2.0), 2.0) + libm::cos(p1) * libm::cos(p2) * libm::pow(libm::sin(dl / 2.0), 2.0);
    2.0 * EARTH_RADIUS_MILES * libm::asin(libm::sqrt(h.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObfuscationModel {
    /// Candidate homes: every location in the same city.
    City,
    /// Candidate homes: every location in the same county.
    StateOrCounty,
    /// Candidate homes: every location within `radius_miles` of home.
    /// A radius of zero disables obfuscation.
    FixedRadius { radius_miles: f64 },
}

impl ObfuscationModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ObfuscationModel::FixedRadius { radius_miles } if !(radius_miles >= 0.0) || !radius_miles.is_finite() => {
                Err(invalid!("obfuscation radius {radius_miles} must be a non-negative real"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalParams {
    /// Fit by median and 95th percentile.
    pub fn from_median_p95(median: f64, p95: f64) -> Self {
        const Z95: f64 = 1.644_853_626_951_472_2;
        LogNormalParams { mu: libm::log(median), sigma: (libm::log(p95) - libm::log(median)) / Z95 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialParams {
    pub mean: f64,
    /// Draws above `max` are redrawn.
    #[serde(default)]
    pub max: Option<f64>,
}

/// A scalar distribution used for bids and sensing radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    /// Piecewise-uniform over `bins` edges (`weights.len() + 1` of them).
    Histogram {
        bins: Vec<f64>,
        weights: Vec<f64>,
    },
    Lognormal {
        params: LogNormalParams,
    },
    Exponential {
        params: ExponentialParams,
    },
}

impl Distribution {
    pub fn default_bids() -> Self {
        Distribution::Lognormal { params: LogNormalParams::from_median_p95(0.1, 0.8) }
    }

    /// Exponential with mean 18 miles truncated at 100 miles.
    pub fn default_mobility() -> Self {
        Distribution::Exponential { params: ExponentialParams { mean: 18.0, max: Some(100.0) } }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Distribution::Histogram { bins, weights } => {
                if weights.is_empty() || bins.len() != weights.len() + 1 {
                    return Err(invalid!("histogram needs weights.len() + 1 bin edges"));
                }
                if bins.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(invalid!("histogram bin edges must be strictly increasing"));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || !weights.iter().any(|w| *w > 0.0) {
                    return Err(invalid!("histogram weights must be non-negative and not all zero"));
                }
            }
            Distribution::Lognormal { params } => {
                if !(params.sigma >= 0.0) || !params.mu.is_finite() {
                    return Err(invalid!("lognormal parameters invalid"));
                }
            }
            Distribution::Exponential { params } => {
                if !(params.mean > 0.0) || params.max.is_some_and(|m| !(m > 0.0)) {
                    return Err(invalid!("exponential parameters invalid"));
                }
            }
        }
        Ok(())
    }

    /// Raw draw in the distribution's own units.
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            Distribution::Histogram { bins, weights } => {
                let k = WeightedIndex::new(weights).expect("validated histogram").sample(rng);
                rng.random_range(bins[k]..bins[k + 1])
            }
            Distribution::Lognormal { params } => {
                LogNormal::new(params.mu, params.sigma).expect("validated lognormal").sample(rng)
            }
            Distribution::Exponential { params } => {
                let exp = Exp::new(1.0 / params.mean).expect("validated exponential");
                loop {
                    let x: f64 = exp.sample(rng);
                    if params.max.is_none_or(|m| x <= m) {
                        return x;
                    }
                }
            }
        }
    }

    /// Draw mapped into `[lo, hi]`: histograms are rescaled linearly from
    /// their bin range, parametric draws are clamped.
    pub fn sample_in(&self, rng: &mut Rng, lo: f64, hi: f64) -> f64 {
        let x = self.sample(rng);
        match self {
            Distribution::Histogram { bins, .. } => {
                let (a, b) = (bins[0], bins[bins.len() - 1]);
                (lo + (x - a) / (b - a) * (hi - lo)).clamp(lo, hi)
            }
            _ => x.clamp(lo, hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub n_users: usize,
    #[serde(default = "default_c_min")]
    pub c_min: f64,
    #[serde(default = "default_c_max")]
    pub c_max: f64,
    #[serde(default = "default_f_max_cap")]
    pub f_max_cap: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "Distribution::default_bids")]
    pub bid_distribution: Distribution,
    #[serde(default = "Distribution::default_mobility")]
    pub mobility_distribution: Distribution,
    pub obfuscation: ObfuscationModel,
}

fn default_c_min() -> f64 {
    0.01
}
fn default_c_max() -> f64 {
    1.0
}
fn default_f_max_cap() -> usize {
    15
}

impl PopulationConfig {
    pub fn new(n_users: usize, obfuscation: ObfuscationModel, seed: u64) -> Self {
        PopulationConfig {
            n_users,
            c_min: default_c_min(),
            c_max: default_c_max(),
            f_max_cap: default_f_max_cap(),
            seed,
            bid_distribution: Distribution::default_bids(),
            mobility_distribution: Distribution::default_mobility(),
            obfuscation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_min > 0.0 && self.c_min <= self.c_max) {
            return Err(invalid!("need 0 < c_min <= c_max, got [{}, {}]", self.c_min, self.c_max));
        }
        if self.f_max_cap < 1 {
            return Err(invalid!("f_max_cap must be at least 1"));
        }
        self.bid_distribution.validate()?;
        self.mobility_distribution.validate()?;
        self.obfuscation.validate()
    }
}

/// Pairwise distances of a region, computed once and reused across
/// populations.
#[derive(Debug, Clone)]
pub struct Geography<'a> {
    region: &'a Region,
    distance: Vec<f64>,
}

impl<'a> Geography<'a> {
    pub fn new(region: &'a Region) -> Self {
        let n = region.len();
        let locs = region.locations();
        let mut distance = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = haversine_miles(locs[i].lat, locs[i].lon, locs[j].lat, locs[j].lon);
                distance[i * n + j] = d;
                distance[j * n + i] = d;
            }
        }
        Geography { region, distance }
    }

    pub fn region(&self) -> &'a Region {
        self.region
    }

    pub fn distance(&self, a: LocationId, b: LocationId) -> f64 {
        self.distance[a.index() * self.region.len() + b.index()]
    }

    /// Home plus every other location within `radius` miles, ascending.
    pub fn within(&self, home: LocationId, radius: f64) -> Vec<LocationId> {
        (0..self.region.len() as u32)
            .map(LocationId)
            .filter(|&a| a == home || (radius > 0.0 && self.distance(home, a) <= radius))
            .collect()
    }

    /// Up to `cap` locations sampled uniformly without replacement from the
    /// disc of `radius` around `home`, always including `home`.
    pub fn sensing_profile(&self, home: LocationId, radius: f64, cap: usize, rng: &mut Rng) -> SensingProfile {
        let others: Vec<LocationId> = self.within(home, radius).into_iter().filter(|&a| a != home).collect();
        let keep = cap.saturating_sub(1).min(others.len());
        let mut chosen: Vec<LocationId> =
            rand::seq::index::sample(rng, others.len(), keep).into_iter().map(|k| others[k]).collect();
        chosen.push(home);
        SensingProfile::new(chosen)
    }

    /// Candidate homes the obfuscation model cannot distinguish from `home`.
    pub fn candidate_homes(&self, home: LocationId, model: &ObfuscationModel) -> Vec<LocationId> {
        let locs = self.region.locations();
        let h = &locs[home.index()];
        match *model {
            ObfuscationModel::City => (0..locs.len() as u32)
                .map(LocationId)
                .filter(|&a| a == home || locs[a.index()].city == h.city)
                .collect(),
            ObfuscationModel::StateOrCounty => (0..locs.len() as u32)
                .map(LocationId)
                .filter(|&a| a == home || locs[a.index()].county == h.county)
                .collect(),
            ObfuscationModel::FixedRadius { radius_miles } => self.within(home, radius_miles),
        }
    }

    /// Privacy profile of one user: one freshly sampled sensing profile per
    /// candidate home (the true home maps to the true profile), uniform over
    /// candidates, equal profiles merged. Returns the profile and the
    /// support index of the true profile.
    pub fn build_privacy_profile(
        &self,
        request: &ProfileRequest<'_>,
        cfg: &PopulationConfig,
    ) -> Result<(PrivacyProfile, usize)> {
        let homes = self.candidate_homes(request.home, &cfg.obfuscation);
        let mut candidates = Vec::with_capacity(homes.len().max(1));
        let mut true_slot = None;
        for (k, &h) in homes.iter().enumerate() {
            if h == request.home {
                true_slot = Some(k);
                candidates.push(request.true_profile.clone());
            } else {
                let mut rng = rng_from(cfg.seed, &[CANDIDATE_STREAM, request.user as u64, k as u64]);
                candidates.push(self.sensing_profile(h, request.radius, cfg.f_max_cap, &mut rng));
            }
        }
        let true_slot = match true_slot {
            Some(k) => k,
            None => {
                candidates.push(request.true_profile.clone());
                candidates.len() - 1
            }
        };
        let (pp, slots) = PrivacyProfile::uniform_over(&candidates)?;
        Ok((pp, slots[true_slot]))
    }

    /// Seeded population of `cfg.n_users` users.
    pub fn sample_population(&self, cfg: &PopulationConfig) -> Result<Vec<User>> {
        cfg.validate()?;
        if cfg.n_users == 0 {
            return Ok(Vec::new());
        }
        if self.region.is_empty() {
            return Err(invalid!("cannot sample a population over an empty region"));
        }
        let weights: Vec<f64> = self.region.locations().iter().map(|l| l.population).collect();
        let homes = WeightedIndex::new(&weights).map_err(|_| invalid!("population weights are all zero"))?;
        let mut users = Vec::with_capacity(cfg.n_users);
        for id in 0..cfg.n_users {
            let mut rng = rng_from(cfg.seed, &[USER_STREAM, id as u64]);
            let home = LocationId(homes.sample(&mut rng) as u32);
            let cost = cfg.bid_distribution.sample_in(&mut rng, cfg.c_min, cfg.c_max);
            let radius = cfg.mobility_distribution.sample(&mut rng).max(0.0);
            let true_profile = self.sensing_profile(home, radius, cfg.f_max_cap, &mut rng);
            let request = ProfileRequest { user: id, home, radius, true_profile: &true_profile };
            let (pp, true_index) = self.build_privacy_profile(&request, cfg)?;
            let mut user = User::new(id, cost, pp, true_index)?;
            user.home = Some(home);
            users.push(user);
        }
        Ok(users)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProfileRequest<'p> {
    pub user: usize,
    pub home: LocationId,
    pub radius: f64,
    pub true_profile: &'p SensingProfile,
}

pub fn sample_population(region: &Region, cfg: &PopulationConfig) -> Result<Vec<User>> {
    Geography::new(region).sample_population(cfg)
}
