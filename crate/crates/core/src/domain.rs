//! Locations, sensing and privacy profiles, observations and realizations,
//! together with the sensing utility and its (conditional) expectations.
//!
//! Users are identified by their index in the population slice; every
//! function taking `users: &[User]` assumes `users[k].id == k`
//! (see [`validate_users`]).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, precondition, Error, Result};
use crate::rng::{rng_from, Rng};

/// Exact enumeration of joint outcomes is used up to this many outcomes.
pub const ENUMERATION_CAP: f64 = 1e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocationId(pub u32);

impl LocationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub zip: String,
    pub lat: f64,
    pub lon: f64,
    pub city: String,
    pub county: String,
    pub population: f64,
}

/// A finite set of locations with a non-negative value per location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    locations: Vec<Location>,
    location_values: Vec<f64>,
}

impl Region {
    pub fn new(locations: Vec<Location>, location_values: Vec<f64>) -> Result<Self> {
        if locations.len() != location_values.len() {
            return Err(invalid!("{} locations but {} location values", locations.len(), location_values.len()));
        }
        if let Some(k) = location_values.iter().position(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(invalid!("location value {} at index {k} is not a non-negative real", location_values[k]));
        }
        if let Some(k) = locations.iter().position(|l| !(l.population >= 0.0)) {
            return Err(invalid!("negative population weight at location {k}"));
        }
        if locations.len() > u32::MAX as usize {
            return Err(invalid!("too many locations"));
        }
        Ok(Region { locations, location_values })
    }

    /// Region with unit value for every location.
    pub fn with_unit_values(locations: Vec<Location>) -> Result<Self> {
        let n = locations.len();
        Self::new(locations, vec![1.0; n])
    }

    /// Abstract region of `n` unit-valued locations without geography.
    pub fn abstract_unit(n: usize) -> Self {
        Self::abstract_weighted(vec![1.0; n]).expect("unit weights are valid")
    }

    pub fn abstract_weighted(values: Vec<f64>) -> Result<Self> {
        let locations = (0..values.len())
            .map(|k| Location {
                zip: alloc::format!("{k}"),
                lat: 0.0,
                lon: 0.0,
                city: String::new(),
                county: String::new(),
                population: 1.0,
            })
            .collect();
        Self::new(locations, values)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn location(&self, id: LocationId) -> Option<&Location> {
        self.locations.get(id.index())
    }

    pub fn location_values(&self) -> &[f64] {
        &self.location_values
    }

    pub fn max_value(&self) -> f64 {
        self.location_values.iter().copied().fold(0.0, f64::max)
    }

    pub fn check(&self, id: LocationId) -> Result<()> {
        if id.index() < self.len() {
            Ok(())
        } else {
            Err(Error::InvalidLocation { index: id.0, len: self.len() })
        }
    }

    /// Number of distinct city names.
    pub fn city_count(&self) -> usize {
        count_distinct(self.locations.iter().map(|l| l.city.as_str()))
    }

    /// Number of distinct county names.
    pub fn county_count(&self) -> usize {
        count_distinct(self.locations.iter().map(|l| l.county.as_str()))
    }
}

fn count_distinct<'a>(names: impl Iterator<Item = &'a str>) -> usize {
    let mut v: Vec<&str> = names.collect();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Dense bit set over the locations of a region.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LocationSet {
    words: Vec<u64>,
}

impl LocationSet {
    pub fn with_capacity(n_locations: usize) -> Self {
        LocationSet { words: vec![0; n_locations.div_ceil(64)] }
    }

    #[inline]
    pub fn contains(&self, id: LocationId) -> bool {
        let i = id.index();
        self.words.get(i / 64).is_some_and(|w| w & (1 << (i % 64)) != 0)
    }

    /// Returns true if the location was newly inserted.
    #[inline]
    pub fn insert(&mut self, id: LocationId) -> bool {
        let i = id.index();
        if i / 64 >= self.words.len() {
            self.words.resize(i / 64 + 1, 0);
        }
        let bit = 1 << (i % 64);
        let fresh = self.words[i / 64] & bit == 0;
        self.words[i / 64] |= bit;
        fresh
    }

    pub fn insert_profile(&mut self, profile: &SensingProfile) {
        for &a in profile.locations() {
            self.insert(a);
        }
    }

    pub fn intersects(&self, other: &LocationSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = LocationId> + '_ {
        self.words.iter().enumerate().flat_map(|(k, &w)| {
            (0..64).filter(move |b| w & (1 << b) != 0).map(move |b| LocationId((k * 64 + b) as u32))
        })
    }
}

impl FromIterator<LocationId> for LocationSet {
    fn from_iter<I: IntoIterator<Item = LocationId>>(iter: I) -> Self {
        let mut s = LocationSet::default();
        for a in iter {
            s.insert(a);
        }
        s
    }
}

/// The set of locations a user's device covers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SensingProfile {
    covered: Vec<LocationId>,
}

impl SensingProfile {
    pub fn new(mut covered: Vec<LocationId>) -> Self {
        covered.sort_unstable();
        covered.dedup();
        SensingProfile { covered }
    }

    pub fn from_indices(idx: &[u32]) -> Self {
        Self::new(idx.iter().map(|&k| LocationId(k)).collect())
    }

    pub fn locations(&self) -> &[LocationId] {
        &self.covered
    }

    pub fn len(&self) -> usize {
        self.covered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covered.is_empty()
    }

    pub fn check(&self, region: &Region) -> Result<()> {
        self.covered.iter().try_for_each(|&a| region.check(a))
    }
}

/// A finite distribution over sensing profiles: the system's belief about a
/// user after obfuscation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(SensingProfile, f64)>", into = "Vec<(SensingProfile, f64)>")]
pub struct PrivacyProfile {
    support: Vec<(SensingProfile, f64)>,
    #[serde(skip)]
    footprint: LocationSet,
}

impl PrivacyProfile {
    pub fn new(support: Vec<(SensingProfile, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(invalid!("privacy profile has empty support"));
        }
        if let Some((_, p)) = support.iter().find(|(_, p)| !(*p > 0.0 && *p <= 1.0)) {
            return Err(invalid!("support probability {p} not in (0, 1]"));
        }
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid!("support probabilities sum to {total}, not 1"));
        }
        for (k, (a, _)) in support.iter().enumerate() {
            if support[..k].iter().any(|(b, _)| a == b) {
                return Err(invalid!("duplicate profile in support"));
            }
        }
        let footprint = support.iter().flat_map(|(s, _)| s.locations().iter().copied()).collect();
        Ok(PrivacyProfile { support, footprint })
    }

    /// Point mass on a single profile (no obfuscation).
    pub fn deterministic(profile: SensingProfile) -> Self {
        Self::new(vec![(profile, 1.0)]).expect("point mass is valid")
    }

    /// Uniform distribution over the candidates, with equal profiles merged
    /// and their probabilities summed. Returns the merged profile list index
    /// of each candidate alongside.
    pub fn uniform_over(candidates: &[SensingProfile]) -> Result<(Self, Vec<usize>)> {
        if candidates.is_empty() {
            return Err(invalid!("no candidate profiles"));
        }
        let n = candidates.len();
        let mut distinct: Vec<(SensingProfile, usize)> = Vec::new();
        let mut slot = Vec::with_capacity(n);
        for c in candidates {
            match distinct.iter().position(|(d, _)| d == c) {
                Some(k) => {
                    distinct[k].1 += 1;
                    slot.push(k);
                }
                None => {
                    slot.push(distinct.len());
                    distinct.push((c.clone(), 1));
                }
            }
        }
        let support = distinct.into_iter().map(|(s, m)| (s, m as f64 / n as f64)).collect();
        Ok((Self::new(support)?, slot))
    }

    pub fn support(&self) -> &[(SensingProfile, f64)] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn profile(&self, k: usize) -> &SensingProfile {
        &self.support[k].0
    }

    pub fn probability(&self, k: usize) -> f64 {
        self.support[k].1
    }

    /// Union of all locations any support profile covers.
    pub fn footprint(&self) -> &LocationSet {
        &self.footprint
    }

    pub fn index_of(&self, profile: &SensingProfile) -> Option<usize> {
        self.support.iter().position(|(s, _)| s == profile)
    }

    /// Probability that location `a` is covered.
    pub fn inclusion_probability(&self, a: LocationId) -> f64 {
        self.support.iter().filter(|(s, _)| s.locations().binary_search(&a).is_ok()).map(|(_, p)| p).sum()
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, (_, p)) in self.support.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        self.support.len() - 1
    }
}

impl TryFrom<Vec<(SensingProfile, f64)>> for PrivacyProfile {
    type Error = Error;
    fn try_from(v: Vec<(SensingProfile, f64)>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PrivacyProfile> for Vec<(SensingProfile, f64)> {
    fn from(p: PrivacyProfile) -> Self {
        p.support
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: usize,
    pub true_cost: f64,
    pub bid: f64,
    pub privacy_profile: PrivacyProfile,
    /// Index of the true sensing profile within `privacy_profile.support()`.
    pub true_index: usize,
    /// Home location for generated populations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home: Option<LocationId>,
}

impl User {
    pub fn new(id: usize, cost: f64, privacy_profile: PrivacyProfile, true_index: usize) -> Result<Self> {
        if true_index >= privacy_profile.len() {
            return Err(invalid!("user {id}: true profile index {true_index} outside support"));
        }
        if !(cost > 0.0) {
            return Err(invalid!("user {id}: cost {cost} must be positive"));
        }
        Ok(User { id, true_cost: cost, bid: cost, privacy_profile, true_index, home: None })
    }

    /// User whose profile is known exactly.
    pub fn deterministic(id: usize, cost: f64, profile: SensingProfile) -> Self {
        Self::new(id, cost, PrivacyProfile::deterministic(profile), 0).expect("valid deterministic user")
    }

    pub fn true_profile(&self) -> &SensingProfile {
        self.privacy_profile.profile(self.true_index)
    }

    pub fn with_bid(mut self, bid: f64) -> Self {
        self.bid = bid;
        self
    }
}

/// Check ids are dense and costs/bids lie in `[c_min, c_max]`.
pub fn validate_users(users: &[User], region: &Region, c_min: f64, c_max: f64) -> Result<()> {
    if !(c_min > 0.0 && c_min <= c_max) {
        return Err(invalid!("cost bounds [{c_min}, {c_max}] invalid"));
    }
    for (k, u) in users.iter().enumerate() {
        if u.id != k {
            return Err(invalid!("user at position {k} has id {}", u.id));
        }
        for v in [u.true_cost, u.bid] {
            if !(c_min..=c_max).contains(&v) {
                return Err(invalid!("user {k}: cost/bid {v} outside [{c_min}, {c_max}]"));
            }
        }
        for (s, _) in u.privacy_profile.support() {
            s.check(region)?;
        }
    }
    Ok(())
}

pub fn bids(users: &[User]) -> Vec<f64> {
    users.iter().map(|u| u.bid).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub user: usize,
    pub profile_index: usize,
    pub profile: SensingProfile,
}

/// Users revealed so far, in allocation order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservationSet {
    entries: Vec<Observation>,
}

impl ObservationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, obs: Observation) -> Result<()> {
        if self.contains(obs.user) {
            return Err(invalid!("user {} observed twice", obs.user));
        }
        self.entries.push(obs);
        Ok(())
    }

    /// Observe `user` with its realized profile.
    pub fn reveal(&mut self, users: &[User], realization: &Realization, user: usize) -> Result<()> {
        let k = realization.profile_index(user);
        self.push(Observation { user, profile_index: k, profile: users[user].privacy_profile.profile(k).clone() })
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, user: usize) -> bool {
        self.entries.iter().any(|o| o.user == user)
    }

    pub fn get(&self, user: usize) -> Option<&Observation> {
        self.entries.iter().find(|o| o.user == user)
    }

    /// Prefix of the first `n` observations.
    pub fn prefix(&self, n: usize) -> Self {
        ObservationSet { entries: self.entries[..n.min(self.entries.len())].to_vec() }
    }

    pub fn covered(&self, n_locations: usize) -> LocationSet {
        let mut s = LocationSet::with_capacity(n_locations);
        for o in &self.entries {
            s.insert_profile(&o.profile);
        }
        s
    }
}

/// One support index per user: a full joint outcome of all privacy profiles.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Realization {
    assignment: Vec<usize>,
}

impl Realization {
    pub fn new(users: &[User], assignment: Vec<usize>) -> Result<Self> {
        if assignment.len() != users.len() {
            return Err(invalid!("realization assigns {} of {} users", assignment.len(), users.len()));
        }
        if let Some(k) = (0..users.len()).find(|&k| assignment[k] >= users[k].privacy_profile.len()) {
            return Err(invalid!("realization profile index out of support for user {k}"));
        }
        Ok(Realization { assignment })
    }

    /// The users' true profiles.
    pub fn truth(users: &[User]) -> Self {
        Realization { assignment: users.iter().map(|u| u.true_index).collect() }
    }

    /// Independent draw from the users' privacy profiles.
    pub fn sample(users: &[User], rng: &mut Rng) -> Self {
        Realization { assignment: users.iter().map(|u| u.privacy_profile.sample(rng)).collect() }
    }

    /// Draw unobserved users from their priors, keeping observed users fixed.
    pub fn sample_consistent(users: &[User], obs: &ObservationSet, rng: &mut Rng) -> Self {
        let mut r = Self::sample(users, rng);
        for o in obs.entries() {
            r.assignment[o.user] = o.profile_index;
        }
        r
    }

    pub fn profile_index(&self, user: usize) -> usize {
        self.assignment[user]
    }

    pub fn profile<'a>(&self, users: &'a [User], user: usize) -> &'a SensingProfile {
        users[user].privacy_profile.profile(self.assignment[user])
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn is_consistent(&self, obs: &ObservationSet) -> bool {
        obs.entries().iter().all(|o| self.assignment.get(o.user) == Some(&o.profile_index))
    }

    /// Unconditional probability under the factorial prior.
    pub fn probability(&self, users: &[User]) -> f64 {
        users.iter().zip(&self.assignment).map(|(u, &k)| u.privacy_profile.probability(k)).product()
    }
}

/// Number of realizations consistent with `obs` (product of the support
/// sizes of unobserved users), as a float to avoid overflow.
pub fn consistent_realization_count(users: &[User], obs: &ObservationSet) -> f64 {
    users.iter().filter(|u| !obs.contains(u.id)).map(|u| u.privacy_profile.len() as f64).product()
}

/// Enumerate every realization consistent with `obs`, in lexicographic
/// order of the unobserved users' support indices (lowest user id varies
/// slowest).
pub fn consistent_realizations(users: &[User], obs: &ObservationSet) -> RealizationIter {
    let mut base = vec![0; users.len()];
    let mut free = Vec::new();
    for u in users {
        match obs.get(u.id) {
            Some(o) => base[u.id] = o.profile_index,
            None => free.push((u.id, u.privacy_profile.len())),
        }
    }
    RealizationIter { current: Some(base), free }
}

pub struct RealizationIter {
    current: Option<Vec<usize>>,
    free: Vec<(usize, usize)>,
}

impl Iterator for RealizationIter {
    type Item = Realization;

    fn next(&mut self) -> Option<Realization> {
        let out = self.current.clone()?;
        let cur = self.current.as_mut().expect("checked above");
        let mut advanced = false;
        for &(user, size) in self.free.iter().rev() {
            cur[user] += 1;
            if cur[user] < size {
                advanced = true;
                break;
            }
            cur[user] = 0;
        }
        if !advanced {
            self.current = None;
        }
        Some(Realization { assignment: out })
    }
}

/// `P(Y_W = r | obs)` under the factorial prior: the product of the prior
/// probabilities of unobserved users, or zero when `r` contradicts `obs`.
pub fn conditional_realization_weight(r: &Realization, obs: &ObservationSet, users: &[User]) -> f64 {
    if !r.is_consistent(obs) {
        return 0.0;
    }
    users.iter().filter(|u| !obs.contains(u.id)).map(|u| u.privacy_profile.probability(r.profile_index(u.id))).product()
}

/// A monotone submodular utility over covered location sets.
pub trait Utility {
    fn value(&self, covered: &LocationSet) -> f64;

    /// `value(covered ∪ profile) - value(covered)`.
    fn gain(&self, covered: &LocationSet, profile: &SensingProfile) -> f64 {
        let mut after = covered.clone();
        after.insert_profile(profile);
        self.value(&after) - self.value(covered)
    }

    /// Largest value a single profile can contribute.
    fn single_profile_value(&self, profile: &SensingProfile) -> f64 {
        self.gain(&LocationSet::default(), profile)
    }

    /// Whether the gain of a profile depends only on which of its own
    /// locations are already covered. Enables gain caching in the
    /// allocation engine.
    fn is_local(&self) -> bool {
        false
    }

    /// Closed-form expected gain of an independent random profile, given
    /// for each location the probability it is still uncovered.
    fn expected_gain_independent(&self, _uncovered_prob: &[f64], _support: &PrivacyProfile) -> Option<f64> {
        None
    }

    /// Closed-form expected value of the union of independent profiles.
    fn expected_value_independent(&self, _supports: &[&PrivacyProfile]) -> Option<f64> {
        None
    }
}

/// Weighted coverage: one unit of `d_a` for each distinct covered location.
impl Utility for Region {
    fn value(&self, covered: &LocationSet) -> f64 {
        covered.iter().map(|a| self.location_values[a.index()]).sum()
    }

    #[inline]
    fn gain(&self, covered: &LocationSet, profile: &SensingProfile) -> f64 {
        let mut acc = 0.0;
        for &a in profile.locations() {
            if !covered.contains(a) {
                acc += self.location_values[a.index()];
            }
        }
        acc
    }

    fn is_local(&self) -> bool {
        true
    }

    #[inline]
    fn expected_gain_independent(&self, uncovered_prob: &[f64], support: &PrivacyProfile) -> Option<f64> {
        let mut total = 0.0;
        for (s, p) in support.support() {
            let mut acc = 0.0;
            for &a in s.locations() {
                acc += self.location_values[a.index()] * uncovered_prob[a.index()];
            }
            total += p * acc;
        }
        Some(total)
    }

    fn expected_value_independent(&self, supports: &[&PrivacyProfile]) -> Option<f64> {
        let mut uncovered = vec![1.0; self.len()];
        for pp in supports {
            for a in pp.footprint().iter() {
                uncovered[a.index()] *= 1.0 - pp.inclusion_probability(a);
            }
        }
        Some(self.location_values.iter().zip(&uncovered).map(|(d, q)| d * (1.0 - q)).sum())
    }
}

/// `f(A) = Σ d_j` over the distinct locations of `covered`.
pub fn coverage_utility(region: &Region, covered: &[LocationId]) -> Result<f64> {
    covered.iter().try_for_each(|&a| region.check(a))?;
    let set: LocationSet = covered.iter().copied().collect();
    Ok(region.value(&set))
}

/// `g(y_S)`: utility of the union of revealed profiles.
pub fn realized_utility<U: Utility + ?Sized>(utility: &U, obs: &ObservationSet) -> f64 {
    let mut covered = LocationSet::default();
    for o in obs.entries() {
        covered.insert_profile(&o.profile);
    }
    utility.value(&covered)
}

/// Expected gain `Σ_y P(y) [g(covered ∪ y) - g(covered)]` of a privacy profile.
#[inline]
pub fn support_gain<U: Utility + ?Sized>(utility: &U, covered: &LocationSet, pp: &PrivacyProfile) -> f64 {
    let mut total = 0.0;
    for (s, p) in pp.support() {
        total += p * utility.gain(covered, s);
    }
    total
}

/// Conditional expected marginal gain `Δ_g(w | y_S)`. Profiles are
/// independent, so conditioning on `obs` only fixes the covered set.
pub fn expected_marginal_gain<U: Utility + ?Sized>(w: &User, obs: &ObservationSet, utility: &U) -> Result<f64> {
    if obs.contains(w.id) {
        return Err(precondition!("user {} already observed", w.id));
    }
    let mut covered = LocationSet::default();
    for o in obs.entries() {
        covered.insert_profile(&o.profile);
    }
    Ok(support_gain(utility, &covered, &w.privacy_profile))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub exact: bool,
    pub n_samples: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, std_error: 0.0, exact: true, n_samples: 0 }
    }
}

/// `G(S) = E[g(y_S)]` for a fixed set of users.
///
/// Uses the utility's closed form when it has one, exact enumeration when
/// the joint support has at most [`ENUMERATION_CAP`] outcomes, and a seeded
/// Monte-Carlo estimate with `mc_samples` draws otherwise.
pub fn expected_utility_nonadaptive<U: Utility + ?Sized>(
    selected: &[usize],
    users: &[User],
    utility: &U,
    mc_samples: usize,
    seed: u64,
) -> Estimate {
    let supports: Vec<&PrivacyProfile> = selected.iter().map(|&s| &users[s].privacy_profile).collect();
    if let Some(v) = utility.expected_value_independent(&supports) {
        return Estimate::exact(v);
    }
    expected_utility_by_enumeration(selected, users, utility)
        .unwrap_or_else(|| expected_utility_monte_carlo(selected, users, utility, mc_samples, seed))
}

/// Exact `G(S)` by enumerating the selected users' joint support, or `None`
/// above [`ENUMERATION_CAP`].
pub fn expected_utility_by_enumeration<U: Utility + ?Sized>(
    selected: &[usize],
    users: &[User],
    utility: &U,
) -> Option<Estimate> {
    let size: f64 = selected.iter().map(|&s| users[s].privacy_profile.len() as f64).product();
    if size > ENUMERATION_CAP {
        return None;
    }
    let mut idx = vec![0usize; selected.len()];
    let mut total = 0.0;
    loop {
        let mut covered = LocationSet::default();
        let mut p = 1.0;
        for (k, &s) in selected.iter().enumerate() {
            let pp = &users[s].privacy_profile;
            covered.insert_profile(pp.profile(idx[k]));
            p *= pp.probability(idx[k]);
        }
        total += p * utility.value(&covered);
        let mut k = selected.len();
        loop {
            if k == 0 {
                return Some(Estimate::exact(total));
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < users[selected[k]].privacy_profile.len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

pub fn expected_utility_monte_carlo<U: Utility + ?Sized>(
    selected: &[usize],
    users: &[User],
    utility: &U,
    samples: usize,
    seed: u64,
) -> Estimate {
    let n = samples.max(2);
    let mut rng = rng_from(seed, &[0x6e6f_6e61]);
    let (mut mean, mut m2) = (0.0, 0.0);
    for t in 0..n {
        let mut covered = LocationSet::default();
        for &s in selected {
            let pp = &users[s].privacy_profile;
            covered.insert_profile(pp.profile(pp.sample(&mut rng)));
        }
        let x = utility.value(&covered);
        let d = x - mean;
        mean += d / (t + 1) as f64;
        m2 += d * (x - mean);
    }
    let var = m2 / (n - 1) as f64;
    Estimate { value: mean, std_error: libm::sqrt(var / n as f64), exact: false, n_samples: n }
}
