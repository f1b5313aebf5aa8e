//! Deterministic two-scenario population and event-log simulator.
//!
//! Every impression gets a known ground-truth click probability
//!
//! ```text
//! p = sigmoid(b_s + b_c + affinity_weight * a_u[card] + w_sc)
//! ```
//!
//! where `b_s` is the scenario base logit, `b_c` the card base logit,
//! `a_u` the user's per-card affinity vector (shared across scenarios, so
//! cross-scenario preference transfer genuinely exists), and `w_sc` a
//! scenario-card interaction. Clicks are Bernoulli draws from `p`, which
//! makes Bayes-optimal ranking computable and lets tests compare any model
//! against the oracle.
//!
//! # Randomness
//!
//! All draws come from `ChaCha8Rng` streams seeded as
//! `splitmix(seed, stream_tag, day, user_id)`. Each user's draws are
//! independent of iteration order, so generation may be parallelized across
//! users; outputs are merged with a total sort by `(timestamp, user_id,
//! item_id, action)`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::domain::{ActionKind, CardType, Event, Impression, Scenario};
use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Latent interest dimensions behind the per-card affinity vector.
pub const LATENT_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityLevel {
    Active,
    ColdStart,
}

impl ActivityLevel {
    pub fn index(self) -> usize {
        match self {
            ActivityLevel::Active => 0,
            ActivityLevel::ColdStart => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioMembership {
    ClassicOnly,
    CopilotOnly,
    Both,
}

impl ScenarioMembership {
    pub fn index(self) -> usize {
        match self {
            ScenarioMembership::ClassicOnly => 0,
            ScenarioMembership::CopilotOnly => 1,
            ScenarioMembership::Both => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub user_id: u64,
    pub activity_level: ActivityLevel,
    /// Per-card preference in [-1, 1], shared across scenarios.
    pub affinity: [f64; CardType::COUNT],
    pub scenario_membership: ScenarioMembership,
}

/// Membership mix as probabilities of (classic__only, both, copilot_only).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipMix {
    pub classic_only: f64,
    pub both: f64,
    pub copilot_only: f64,
}

impl MembershipMix {
    fn validate(&self, who: &str) -> Result<()> {
        for (name, p) in [
            ("classic_only", self.classic_only),
            ("both", self.both),
            ("copilot_only", self.copilot_only),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{who}.{name} = {p} outside [0,1]")));
            }
        }
        let sum = self.classic_only + self.both + self.copilot_only;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("{who} probabilities sum to {sum}, expected 1")));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> ScenarioMembership {
        let x: f64 = rng.gen();
        if x < self.classic_only {
            ScenarioMembership::ClassicOnly
        } else if x < self.classic_only + self.both {
            ScenarioMembership::Both
        } else {
            ScenarioMembership::CopilotOnly
        }
    }
}

/// Generator configuration. Serialized as JSON with a `schema_version` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub schema_version: u32,
    pub n_users: usize,
    /// Fraction of users drawn as cold-start.
    pub cold_start_fraction: f64,
    pub active_membership: MembershipMix,
    pub cold_membership: MembershipMix,
    /// Expected impressions per active user per day (Poisson rate).
    pub active_daily_rate: f64,
    /// Cold-start rate as a fraction of the active rate.
    pub cold_rate_ratio: f64,
    /// For users in both scenarios, probability an impression lands in copilot.
    pub p_copilot_given_both: f64,
    /// Card-type sampling weights per scenario; copilot_content weight must be
    /// zero in classic.
    pub card_mix_classic: [f64; CardType::COUNT],
    pub card_mix_copilot: [f64; CardType::COUNT],
    /// Scenario base logits (classic, copilot), calibrated against the CTR
    /// targets below.
    pub scenario_base_logit: [f64; 2],
    pub card_base_logit: [f64; CardType::COUNT],
    /// Weight on the user-card affinity term.
    pub affinity_weight: f64,
    /// Scenario x card logit offsets.
    pub scenario_card_interaction: [[f64; CardType::COUNT]; 2],
    /// Per-card loading rows mapping the 2-dim latent interest to affinities.
    pub affinity_loadings: [[f64; LATENT_DIM]; CardType::COUNT],
    pub n_items_per_card: u64,
    /// Dwell model: dwell = exp(base + boost*clicked + std*z).
    pub dwell_base_log: f64,
    pub dwell_click_boost: f64,
    pub dwell_noise_std: f64,
}

impl GenConfig {
    /// Defaults calibrated so that empirical CTR lands near 1% in classic and
    /// 0.1% in copilot. The scenario base logits were derived by bisection
    /// (see [`calibrate_scenario_logit`]) and frozen here.
    pub fn calibrated_default() -> GenConfig {
        GenConfig {
            schema_version: 1,
            n_users: 20_000,
            cold_start_fraction: 0.3,
            active_membership: MembershipMix {
                classic_only: 0.78,
                both: 0.22,
                copilot_only: 0.0,
            },
            cold_membership: MembershipMix {
                classic_only: 0.10,
                both: 0.30,
                copilot_only: 0.60,
            },
            active_daily_rate: 1.4,
            cold_rate_ratio: 0.1,
            p_copilot_given_both: 0.30,
            card_mix_classic: [0.15, 0.20, 0.40, 0.25, 0.0],
            card_mix_copilot: [0.08, 0.12, 0.30, 0.20, 0.30],
            scenario_base_logit: [-4.777, -7.164],
            card_base_logit: [-0.5, -0.2, 0.3, 0.1, 0.2],
            affinity_weight: 1.5,
            scenario_card_interaction: [
                [0.0, 0.0, 0.1, -0.1, 0.0],
                [-0.2, -0.1, -0.3, 0.2, 0.4],
            ],
            affinity_loadings: [
                [0.1, 0.4],
                [0.9, 0.1],
                [0.8, 0.3],
                [0.2, 0.9],
                [0.6, 0.6],
            ],
            n_items_per_card: 1000,
            dwell_base_log: 1.8,
            dwell_click_boost: 1.2,
            dwell_noise_std: 0.6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cold_start_fraction) {
            return Err(Error::config(format!(
                "cold_start_fraction = {} outside [0,1]",
                self.cold_start_fraction
            )));
        }
        self.active_membership.validate("active_membership")?;
        self.cold_membership.validate("cold_membership")?;
        if self.active_daily_rate < 0.0 {
            return Err(Error::config("active_daily_rate must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.cold_rate_ratio) {
            return Err(Error::config("cold_rate_ratio outside [0,1]"));
        }
        if !(0.0..=1.0).contains(&self.p_copilot_given_both) {
            return Err(Error::config("p_copilot_given_both outside [0,1]"));
        }
        for (name, mix) in [
            ("card_mix_classic", &self.card_mix_classic),
            ("card_mix_copilot", &self.card_mix_copilot),
        ] {
            if mix.iter().any(|&w| w < 0.0) {
                return Err(Error::config(format!("{name} has negative weight")));
            }
            if mix.iter().sum::<f64>() <= 0.0 {
                return Err(Error::config(format!("{name} sums to zero")));
            }
        }
        // Copilot-generated cards exist only on the copilot surface.
        if self.card_mix_classic[CardType::CopilotContent.index()] != 0.0 {
            return Err(Error::config("classic card mix must give copilot_content zero weight"));
        }
        if self.n_items_per_card == 0 {
            return Err(Error::config("n_items_per_card must be >= 1"));
        }
        if self.dwell_noise_std < 0.0 {
            return Err(Error::config("dwell_noise_std must be >= 0"));
        }
        Ok(())
    }

    fn daily_rate(&self, activity: ActivityLevel) -> f64 {
        match activity {
            ActivityLevel::Active => self.active_daily_rate,
            ActivityLevel::ColdStart => self.active_daily_rate * self.cold_rate_ratio,
        }
    }

    fn membership_mix(&self, activity: ActivityLevel) -> &MembershipMix {
        match activity {
            ActivityLevel::Active => &self.active_membership,
            ActivityLevel::ColdStart => &self.cold_membership,
        }
    }

    fn card_mix(&self, scenario: Scenario) -> &[f64; CardType::COUNT] {
        match scenario {
            Scenario::Classic => &self.card_mix_classic,
            Scenario::Copilot => &self.card_mix_copilot,
        }
    }

    /// Ground-truth click probability for (user affinity, scenario, card).
    pub fn true_click_probability(
        &self,
        affinity: &[f64; CardType::COUNT],
        scenario: Scenario,
        card: CardType,
    ) -> f64 {
        let logit = self.scenario_base_logit[scenario.index()]
            + self.card_base_logit[card.index()]
            + self.affinity_weight * affinity[card.index()]
            + self.scenario_card_interaction[scenario.index()][card.index()];
        sigmoid(logit)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One simulated day: the event log (timestamp-sorted), the labeled
/// impressions that produced it, and the aligned ground-truth click
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDay {
    pub events: Vec<Event>,
    pub impressions: Vec<Impression>,
    /// True click probability per impression, same order as `impressions`.
    pub truth: Vec<f64>,
}

const STREAM_POPULATION: u64 = 0x504f50; // "POP"
const STREAM_DAY: u64 = 0x444159; // "DAY"

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Documented stream-splitting scheme: one independent ChaCha8 stream per
/// (seed, tag, day, user).
fn stream_rng(seed: u64, tag: u64, day: u64, user: u64) -> ChaCha8Rng {
    let mut s = splitmix64(seed ^ splitmix64(tag));
    s = splitmix64(s ^ splitmix64(day));
    s = splitmix64(s ^ splitmix64(user));
    ChaCha8Rng::seed_from_u64(s)
}

/// Draws the user population. Deterministic per (config, seed); each user's
/// draws come from an independent stream.
pub fn generate_population(config: &GenConfig, seed: u64) -> Result<Vec<UserProfile>> {
    config.validate()?;
    let mut population = Vec::with_capacity(config.n_users);
    for user_id in 0..config.n_users as u64 {
        let mut rng = stream_rng(seed, STREAM_POPULATION, 0, user_id);
        let activity = if rng.gen::<f64>() < config.cold_start_fraction {
            ActivityLevel::ColdStart
        } else {
            ActivityLevel::Active
        };
        let membership = config.membership_mix(activity).sample(&mut rng);
        let latent_dist = Normal::new(0.0, 1.0).expect("unit normal");
        let mut latent = [0.0; LATENT_DIM];
        for slot in latent.iter_mut() {
            *slot = latent_dist.sample(&mut rng);
        }
        let mut affinity = [0.0; CardType::COUNT];
        for (c, row) in config.affinity_loadings.iter().enumerate() {
            let mut dot = 0.0;
            for (l, w) in row.iter().enumerate() {
                dot += w * latent[l];
            }
            affinity[c] = dot.tanh();
        }
        population.push(UserProfile {
            user_id,
            activity_level: activity,
            affinity,
            scenario_membership: membership,
        });
    }
    Ok(population)
}

fn sample_card<R: Rng>(mix: &[f64; CardType::COUNT], rng: &mut R) -> CardType {
    let total: f64 = mix.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, &w) in mix.iter().enumerate() {
        x -= w;
        if x < 0.0 {
            return CardType::from_index(i).expect("index in range");
        }
    }
    CardType::from_index(CardType::COUNT - 1).expect("last card")
}

/// Simulates one day of traffic for the population. Impressions are sorted
/// by (timestamp, user, item); the event log carries one view per impression
/// plus one click event per clicked impression and is fully sorted.
pub fn simulate_day(
    population: &[UserProfile],
    day_index: u64,
    config: &GenConfig,
    seed: u64,
) -> Result<SimulatedDay> {
    config.validate()?;
    let day_start = day_index as i64 * SECONDS_PER_DAY;
    let mut labeled: Vec<(Impression, f64)> = Vec::new();

    for user in population {
        let mut rng = stream_rng(seed, STREAM_DAY, day_index, user.user_id);
        let rate = config.daily_rate(user.activity_level);
        let n_impressions = if rate <= 0.0 {
            0
        } else {
            Poisson::new(rate)
                .map_err(|e| Error::config(format!("invalid impression rate {rate}: {e}")))?
                .sample(&mut rng) as u64
        };
        for _ in 0..n_impressions {
            let timestamp = day_start + rng.gen_range(0..SECONDS_PER_DAY);
            let scenario = match user.scenario_membership {
                ScenarioMembership::ClassicOnly => Scenario::Classic,
                ScenarioMembership::CopilotOnly => Scenario::Copilot,
                ScenarioMembership::Both => {
                    if rng.gen::<f64>() < config.p_copilot_given_both {
                        Scenario::Copilot
                    } else {
                        Scenario::Classic
                    }
                }
            };
            let card = sample_card(config.card_mix(scenario), &mut rng);
            let item_id = card.index() as u64 * config.n_items_per_card
                + rng.gen_range(0..config.n_items_per_card);
            let p = config.true_click_probability(&user.affinity, scenario, card);
            let clicked = rng.gen::<f64>() < p;
            let dwell_dist = Normal::new(
                config.dwell_base_log + if clicked { config.dwell_click_boost } else { 0.0 },
                config.dwell_noise_std.max(1e-12),
            )
            .expect("valid dwell distribution");
            let dwell_seconds = dwell_dist.sample(&mut rng).exp();
            labeled.push((
                Impression {
                    user_id: user.user_id,
                    timestamp,
                    scenario,
                    card_type: card,
                    item_id,
                    clicked,
                    dwell_seconds,
                },
                p,
            ));
        }
    }

    labeled.sort_by_key(|(im, _)| (im.timestamp, im.user_id, im.item_id));
    let mut events = Vec::with_capacity(labeled.len() * 2);
    for (im, _) in &labeled {
        events.push(Event {
            user_id: im.user_id,
            timestamp: im.timestamp,
            scenario: im.scenario,
            card_type: im.card_type,
            action: ActionKind::View,
            item_id: im.item_id,
        });
        if im.clicked {
            events.push(Event {
                user_id: im.user_id,
                timestamp: im.timestamp,
                scenario: im.scenario,
                card_type: im.card_type,
                action: ActionKind::Click,
                item_id: im.item_id,
            });
        }
    }
    events.sort_by_key(Event::sort_key);
    let (impressions, truth): (Vec<_>, Vec<_>) = labeled.into_iter().unzip();
    Ok(SimulatedDay {
        events,
        impressions,
        truth,
    })
}

/// Simulates a contiguous range of days.
pub fn simulate_days(
    population: &[UserProfile],
    days: std::ops::Range<u64>,
    config: &GenConfig,
    seed: u64,
) -> Result<Vec<SimulatedDay>> {
    days.map(|d| simulate_day(population, d, config, seed)).collect()
}

/// AUC of the ground-truth probabilities against the realized labels: the
/// Bayes-optimal ranking bound no model can beat in expectation.
pub fn oracle_auc(labels: &[bool], ground_truth: &[f64]) -> Result<f64> {
    if labels.len() != ground_truth.len() {
        return Err(Error::contract(format!(
            "oracle_auc length mismatch: {} labels vs {} truths",
            labels.len(),
            ground_truth.len()
        )));
    }
    Ok(crate::metrics::auc(labels, ground_truth)?)
}

/// Bisects the scenario base logit until the expected CTR over the
/// scenario's impression mixture matches `target_ctr`. Used to derive the
/// frozen constants in [`GenConfig::calibrated_default`]; exposed so tests
/// can re-derive them.
pub fn calibrate_scenario_logit(
    config: &GenConfig,
    scenario: Scenario,
    target_ctr: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if !(0.0 < target_ctr && target_ctr < 1.0) {
        return Err(Error::config(format!("target_ctr {target_ctr} outside (0,1)")));
    }
    config.validate()?;

    // Sample (logit residual, weight) pairs from the scenario's impression
    // mixture: users weighted by impression rate times the probability their
    // impressions land in this scenario.
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0xca11b8));
    let latent_dist = Normal::new(0.0, 1.0).expect("unit normal");
    let mut residuals = Vec::with_capacity(n_samples);
    let mut weights = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let activity = if rng.gen::<f64>() < config.cold_start_fraction {
            ActivityLevel::ColdStart
        } else {
            ActivityLevel::Active
        };
        let membership = config.membership_mix(activity).sample(&mut rng);
        let p_scenario = match (membership, scenario) {
            (ScenarioMembership::ClassicOnly, Scenario::Classic) => 1.0,
            (ScenarioMembership::ClassicOnly, Scenario::Copilot) => 0.0,
            (ScenarioMembership::CopilotOnly, Scenario::Copilot) => 1.0,
            (ScenarioMembership::CopilotOnly, Scenario::Classic) => 0.0,
            (ScenarioMembership::Both, Scenario::Copilot) => config.p_copilot_given_both,
            (ScenarioMembership::Both, Scenario::Classic) => 1.0 - config.p_copilot_given_both,
        };
        let weight = config.daily_rate(activity) * p_scenario;
        if weight <= 0.0 {
            continue;
        }
        let mut latent = [0.0; LATENT_DIM];
        for slot in latent.iter_mut() {
            *slot = latent_dist.sample(&mut rng);
        }
        let card = sample_card(config.card_mix(scenario), &mut rng);
        let mut dot = 0.0;
        for (l, w) in config.affinity_loadings[card.index()].iter().enumerate() {
            dot += w * latent[l];
        }
        let residual = config.card_base_logit[card.index()]
            + config.affinity_weight * dot.tanh()
            + config.scenario_card_interaction[scenario.index()][card.index()];
        residuals.push(residual);
        weights.push(weight);
    }
    if residuals.is_empty() {
        return Err(Error::config(format!(
            "no impressions reach scenario {scenario}; cannot calibrate"
        )));
    }

    let weight_sum: f64 = weights.iter().sum();
    let expected_ctr = |b: f64| -> f64 {
        residuals
            .iter()
            .zip(&weights)
            .map(|(&r, &w)| w * sigmoid(b + r))
            .sum::<f64>()
            / weight_sum
    };
    let (mut lo, mut hi) = (-30.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_ctr(mid) < target_ctr {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
