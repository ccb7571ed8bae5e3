//! Synthetic campaigns with known ground truth.
//!
//! Each consumer owns one or more device userIDs, a baseline conversion
//! rate, an individual causal effect and a latent winner/loser type. The
//! generator emits the same three log streams a bidder would, plus one
//! truth row per consumer.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{Assigner, Assignment, HashConfig};
use crate::identity::{IdGraph, IdentityError};
use crate::model::{
    BidOppRecord, CampaignLogs, ConfigError, ConnectedId, EventRecord, ImpressionRecord,
    ImpressionTag, Timestamp, UserId,
};

/// First opportunity timestamp. Background events fall before it and can
/// never be attributed.
pub const CAMPAIGN_START: Timestamp = 1_000_000;

const CHUNK: u64 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContaminationMode {
    /// One device per consumer.
    #[default]
    None,
    /// Exactly `k` devices per consumer, 100% win rate, conversions split
    /// across devices.
    CrossDeviceToy,
    /// Like the toy, with a mix of one- and two-device consumers.
    Mixed1d2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversionProcess {
    /// At most one conversion per unit.
    #[default]
    Bernoulli,
    /// Poisson count of conversions per unit.
    Poisson,
}

/// Which identifier the campaign hashes for assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignBy {
    #[default]
    UserId,
    Consumer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_consumers: u64,
    pub campaign_id: String,
    pub holdout: f64,
    pub hash_digits: u32,
    pub salt: String,
    pub pv_window: u64,
    /// `(devices, probability)` pairs.
    pub device_count_distribution: Vec<(u32, f64)>,
    pub base_rate: f64,
    /// Baselines are spread uniformly over `base·(1 ± spread)`.
    pub baseline_spread: f64,
    /// Relative effect `a`; each consumer's effect is `a` times its baseline.
    pub true_lift: f64,
    /// Probability that a consumer is a winner type.
    pub win_rate: f64,
    /// Baseline multiplier applied to winner types.
    pub winner_baseline_multiplier: f64,
    pub opps_per_device: u32,
    /// Opportunities fall in `[CAMPAIGN_START, CAMPAIGN_START + horizon)`.
    pub horizon: u64,
    /// Expected non-attributable events per device.
    pub background_rate: f64,
    pub conversion_process: ConversionProcess,
    pub contamination_mode: ContaminationMode,
    pub assign_by: AssignBy,
    /// Draw wins per opportunity instead of per consumer.
    pub per_opp_wins: bool,
    pub emit_bid_opps: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_consumers: 10_000,
            campaign_id: "sim".into(),
            holdout: 0.1,
            hash_digits: 6,
            salt: "sim".into(),
            pv_window: 7 * 86_400,
            device_count_distribution: vec![(1, 1.0)],
            base_rate: 0.01,
            baseline_spread: 0.0,
            true_lift: 0.2,
            win_rate: 0.5,
            winner_baseline_multiplier: 1.0,
            opps_per_device: 3,
            horizon: 30 * 86_400,
            background_rate: 0.0,
            conversion_process: ConversionProcess::Bernoulli,
            contamination_mode: ContaminationMode::None,
            assign_by: AssignBy::UserId,
            per_opp_wins: false,
            emit_bid_opps: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> SimError {
    SimError::Invalid {
        field,
        reason: reason.into(),
    }
}

impl SimConfig {
    /// Cross-device toy with `k` devices per consumer and a 1% baseline.
    pub fn contamination_toy(k: u32, p: f64, a: f64, n_consumers: u64, seed: u64) -> Self {
        Self {
            n_consumers,
            holdout: p,
            device_count_distribution: vec![(k, 1.0)],
            base_rate: 0.01,
            true_lift: a,
            win_rate: 1.0,
            opps_per_device: 1,
            contamination_mode: ContaminationMode::CrossDeviceToy,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.campaign_id.is_empty() {
            return Err(ConfigError::EmptyCampaignId.into());
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(ConfigError::HoldoutOutOfRange(self.holdout).into());
        }
        self.assigner()?;
        if self.pv_window == 0 {
            return Err(ConfigError::EmptyPvWindow.into());
        }
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be positive"));
        }
        if self.opps_per_device == 0 {
            return Err(invalid("opps_per_device", "must be positive"));
        }
        let dist = &self.device_count_distribution;
        if dist.is_empty() {
            return Err(invalid("device_count_distribution", "is empty"));
        }
        if dist
            .iter()
            .any(|&(k, q)| k == 0 || !(0.0..=1.0).contains(&q))
        {
            return Err(invalid(
                "device_count_distribution",
                "needs device counts >= 1 and probabilities in [0, 1]",
            ));
        }
        let total: f64 = dist.iter().map(|&(_, q)| q).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(
                "device_count_distribution",
                format!("sums to {total}"),
            ));
        }
        if !(self.win_rate > 0.0 && self.win_rate <= 1.0) {
            return Err(invalid("win_rate", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.base_rate) {
            return Err(invalid("base_rate", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.baseline_spread) {
            return Err(invalid("baseline_spread", "must lie in [0, 1]"));
        }
        if self.winner_baseline_multiplier.is_nan() || self.winner_baseline_multiplier <= 0.0 {
            return Err(invalid("winner_baseline_multiplier", "must be positive"));
        }
        if self.true_lift.is_nan() || self.true_lift <= -1.0 {
            return Err(invalid("true_lift", "must exceed -1"));
        }
        if !(self.background_rate >= 0.0 && self.background_rate.is_finite()) {
            return Err(invalid(
                "background_rate",
                "must be a finite non-negative rate",
            ));
        }
        let treated_peak = self.base_rate
            * (1.0 + self.baseline_spread)
            * self.winner_baseline_multiplier.max(1.0)
            * (1.0 + self.true_lift.max(0.0));
        if self.conversion_process == ConversionProcess::Bernoulli && treated_peak > 1.0 {
            return Err(invalid(
                "true_lift",
                format!("treated conversion probability reaches {treated_peak}"),
            ));
        }
        match self.contamination_mode {
            ContaminationMode::None => {
                if dist.iter().any(|&(k, q)| k != 1 && q > 0.0) {
                    return Err(invalid(
                        "device_count_distribution",
                        "mode `none` needs one device per consumer",
                    ));
                }
            }
            mode => {
                if self.win_rate != 1.0 {
                    return Err(invalid(
                        "win_rate",
                        "contamination modes assume a 100% win rate",
                    ));
                }
                if self.conversion_process != ConversionProcess::Bernoulli || self.per_opp_wins {
                    return Err(invalid(
                        "contamination_mode",
                        "contamination modes use type-level wins and Bernoulli conversions",
                    ));
                }
                let support: Vec<u32> = dist.iter().filter(|d| d.1 > 0.0).map(|d| d.0).collect();
                let ok = match mode {
                    ContaminationMode::CrossDeviceToy => support.len() == 1,
                    _ => support.iter().all(|&k| k == 1 || k == 2),
                };
                if !ok {
                    return Err(invalid(
                        "device_count_distribution",
                        "does not fit the contamination mode",
                    ));
                }
            }
        }
        Ok(())
    }

    fn assigner(&self) -> Result<Assigner, SimError> {
        let hash = HashConfig::new(self.hash_digits, self.salt.clone())?;
        Ok(Assigner::new(self.holdout, hash)?)
    }
}

/// Ground truth for one consumer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumerTruth {
    pub consumer_id: String,
    pub n_devices: u32,
    pub n_control_devices: u32,
    pub winner_type: bool,
    pub exposed: bool,
    /// Conversion rate without exposure.
    pub rate_untreated: f64,
    /// Conversion rate under exposure.
    pub rate_treated: f64,
    pub conversions: u64,
}

impl ConsumerTruth {
    pub fn individual_effect(&self) -> f64 {
        self.rate_treated - self.rate_untreated
    }

    pub fn device_id(&self, j: u32) -> String {
        device_id(&self.consumer_id, j)
    }
}

fn device_id(consumer: &str, j: u32) -> String {
    format!("{consumer}-d{j}")
}

/// Aggregates over the truth rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthSummary {
    pub n_consumers: u64,
    pub n_devices: u64,
    pub n_winner_type: u64,
    pub n_exposed: u64,
    /// Mean individual effect over exposed consumers.
    pub true_att: f64,
    /// Mean untreated rate of exposed consumers.
    pub true_r_cw: f64,
    pub true_atl: f64,
    /// Mean untreated rate of exposed minus unexposed consumers.
    pub true_selection_bias: f64,
}

impl TruthSummary {
    pub fn from_rows(rows: &[ConsumerTruth]) -> Self {
        let mut s = TruthSummary {
            n_consumers: rows.len() as u64,
            ..Self::default()
        };
        let (mut effect, mut base_exposed, mut base_unexposed) = (0.0, 0.0, 0.0);
        for row in rows {
            s.n_devices += u64::from(row.n_devices);
            s.n_winner_type += u64::from(row.winner_type);
            if row.exposed {
                s.n_exposed += 1;
                effect += row.individual_effect();
                base_exposed += row.rate_untreated;
            } else {
                base_unexposed += row.rate_untreated;
            }
        }
        let n_unexposed = s.n_consumers - s.n_exposed;
        if s.n_exposed > 0 {
            s.true_att = effect / s.n_exposed as f64;
            s.true_r_cw = base_exposed / s.n_exposed as f64;
            if s.true_r_cw > 0.0 {
                s.true_atl = s.true_att / s.true_r_cw;
            }
            if n_unexposed > 0 {
                s.true_selection_bias = s.true_r_cw - base_unexposed / n_unexposed as f64;
            }
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignTruth {
    pub rows: Vec<ConsumerTruth>,
    pub summary: TruthSummary,
}

impl CampaignTruth {
    /// Complete identity graph: every device linked to its consumer.
    pub fn id_graph(&self) -> Result<IdGraph, IdentityError> {
        let mut graph = IdGraph::new();
        for row in &self.rows {
            let cid = ConnectedId::new(row.consumer_id.clone()).expect("non-empty consumer id");
            for j in 0..row.n_devices {
                let user = UserId::new(row.device_id(j)).expect("non-empty device id");
                graph.insert(user, cid.clone())?;
            }
        }
        Ok(graph)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        for row in &self.rows {
            csv.serialize(row)?;
        }
        if self.rows.is_empty() {
            csv.write_record([
                "consumer_id",
                "n_devices",
                "n_control_devices",
                "winner_type",
                "exposed",
                "rate_untreated",
                "rate_treated",
                "conversions",
            ])?;
        }
        csv.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimOutput {
    pub logs: CampaignLogs,
    pub truth: CampaignTruth,
}

#[derive(Default)]
struct Chunk {
    logs: CampaignLogs,
    rows: Vec<ConsumerTruth>,
}

struct Generator<'a> {
    cfg: &'a SimConfig,
    assigner: Assigner,
}

struct Device {
    user: UserId,
    arm: Assignment,
    opps: Vec<Timestamp>,
}

impl Generator<'_> {
    fn consumer(&self, idx: u64, out: &mut Chunk) {
        let cfg = self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(idx);

        let consumer_id = format!("c{idx}");
        let n_devices = self.draw_device_count(&mut rng);
        let mut devices: Vec<Device> = (0..n_devices)
            .map(|j| {
                let id = device_id(&consumer_id, j);
                let key = match cfg.assign_by {
                    AssignBy::UserId => id.as_str(),
                    AssignBy::Consumer => consumer_id.as_str(),
                };
                let arm = self.assigner.assign_key(key);
                let mut opps: Vec<Timestamp> = (0..cfg.opps_per_device)
                    .map(|_| CAMPAIGN_START + rng.random_range(0..cfg.horizon))
                    .collect();
                opps.sort_unstable();
                Device {
                    user: UserId::new(id).expect("non-empty device id"),
                    arm,
                    opps,
                }
            })
            .collect();

        let wins: Vec<Vec<bool>> = if cfg.per_opp_wins {
            devices
                .iter()
                .map(|d| {
                    d.opps
                        .iter()
                        .map(|_| rng.random_bool(cfg.win_rate))
                        .collect()
                })
                .collect()
        } else {
            let winner = rng.random_bool(cfg.win_rate);
            devices.iter().map(|d| vec![winner; d.opps.len()]).collect()
        };
        let winner_type = wins.iter().flatten().any(|&w| w);

        let spread = 1.0 + cfg.baseline_spread * (2.0 * rng.random::<f64>() - 1.0);
        let multiplier = if winner_type {
            cfg.winner_baseline_multiplier
        } else {
            1.0
        };
        let rate_untreated = cfg.base_rate * multiplier * spread;
        let rate_treated = rate_untreated * (1.0 + cfg.true_lift);

        let n_control = devices
            .iter()
            .filter(|d| d.arm == Assignment::Control)
            .count() as u32;
        let exposed = match cfg.contamination_mode {
            ContaminationMode::None => devices[0].arm == Assignment::Test && winner_type,
            _ => n_control < n_devices,
        };

        for (device, won) in devices.iter().zip(&wins) {
            for (o, (&t, &w)) in device.opps.iter().zip(won).enumerate() {
                let tag = match (device.arm, w) {
                    (Assignment::Control, _) => ImpressionTag::Control,
                    (Assignment::Test, true) => ImpressionTag::TestWin,
                    (Assignment::Test, false) => ImpressionTag::TestLoss,
                };
                out.logs.impressions.push(ImpressionRecord {
                    user_id: device.user.clone(),
                    timestamp: t,
                    campaign_id: cfg.campaign_id.clone(),
                    tag,
                });
                if cfg.emit_bid_opps {
                    out.logs.bid_opps.push(BidOppRecord {
                        user_id: device.user.clone(),
                        timestamp: t,
                        request_id: format!("{}-{o}", device.user),
                        exchange_id: format!("x{}", o % 4),
                    });
                }
            }
        }

        let mut conversions = 0;
        match cfg.contamination_mode {
            ContaminationMode::None => {
                let rate = if exposed {
                    rate_treated
                } else {
                    rate_untreated
                };
                let n = match cfg.conversion_process {
                    ConversionProcess::Bernoulli => u64::from(rng.random_bool(rate)),
                    ConversionProcess::Poisson if rate > 0.0 => {
                        Poisson::new(rate).expect("positive rate").sample(&mut rng) as u64
                    }
                    ConversionProcess::Poisson => 0,
                };
                for _ in 0..n {
                    self.emit_conversion(&devices[0], &mut rng, out);
                }
                conversions = n;
            }
            _ if exposed => {
                if rng.random_bool(rate_treated) {
                    let j = rng.random_range(0..devices.len());
                    self.emit_conversion(&devices[j], &mut rng, out);
                    conversions = 1;
                }
            }
            _ => {
                let per_device = rate_untreated / f64::from(n_devices);
                for device in &devices {
                    if rng.random_bool(per_device) {
                        self.emit_conversion(device, &mut rng, out);
                        conversions += 1;
                    }
                }
            }
        }

        if cfg.background_rate > 0.0 {
            let background = Poisson::new(cfg.background_rate).expect("positive rate");
            for device in &mut devices {
                let n = background.sample(&mut rng) as u64;
                for _ in 0..n {
                    out.logs.events.push(EventRecord {
                        user_id: device.user.clone(),
                        timestamp: rng.random_range(0..CAMPAIGN_START),
                        campaign_id: cfg.campaign_id.clone(),
                    });
                }
            }
        }

        out.rows.push(ConsumerTruth {
            consumer_id,
            n_devices,
            n_control_devices: n_control,
            winner_type,
            exposed,
            rate_untreated,
            rate_treated,
            conversions,
        });
    }

    fn draw_device_count(&self, rng: &mut ChaCha8Rng) -> u32 {
        let dist = &self.cfg.device_count_distribution;
        if dist.len() == 1 {
            return dist[0].0;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(k, q) in dist {
            acc += q;
            if u < acc {
                return k;
            }
        }
        dist.iter().rev().find(|d| d.1 > 0.0).map_or(1, |d| d.0)
    }

    /// A conversion inside the window of a uniformly chosen opportunity.
    fn emit_conversion(&self, device: &Device, rng: &mut ChaCha8Rng, out: &mut Chunk) {
        let opp = device.opps[rng.random_range(0..device.opps.len())];
        out.logs.events.push(EventRecord {
            user_id: device.user.clone(),
            timestamp: opp + rng.random_range(1..=self.cfg.pv_window),
            campaign_id: self.cfg.campaign_id.clone(),
        });
    }
}

/// Generates one campaign. Output depends only on `cfg`; consumers are
/// generated in parallel from per-consumer RNG streams and emitted in
/// consumer order.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let generator = Generator {
        cfg,
        assigner: cfg.assigner()?,
    };
    let n_chunks = cfg.n_consumers.div_ceil(CHUNK);
    let chunks: Vec<Chunk> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut chunk = Chunk::default();
            for idx in c * CHUNK..((c + 1) * CHUNK).min(cfg.n_consumers) {
                generator.consumer(idx, &mut chunk);
            }
            chunk
        })
        .collect();

    let mut out = SimOutput::default();
    for chunk in chunks {
        out.logs.bid_opps.extend(chunk.logs.bid_opps);
        out.logs.impressions.extend(chunk.logs.impressions);
        out.logs.events.extend(chunk.logs.events);
        out.truth.rows.extend(chunk.rows);
    }
    out.truth.summary = TruthSummary::from_rows(&out.truth.rows);
    Ok(out)
}

pub fn simulate_contamination_toy(
    k: u32,
    p: f64,
    a: f64,
    n_consumers: u64,
    seed: u64,
) -> Result<SimOutput, SimError> {
    if k == 0 {
        return Err(invalid("devices_per_consumer", "must be at least 1"));
    }
    simulate(&SimConfig::contamination_toy(k, p, a, n_consumers, seed))
}
