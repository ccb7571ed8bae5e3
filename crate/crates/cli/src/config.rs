//! Flat `key = value` configuration files.
//!
//! One setting per line; `#` starts a comment. Later lines override
//! earlier ones, and command-line flags override the file.

use std::str::FromStr;

use adlift::estimators::CountMode;
use adlift::gibbs::{GibbsConfig, NonResponderSplit};
use adlift::identity::DEFAULT_MIN_DEGREE;
use adlift::model::CampaignConfig;
use adlift::simulator::{AssignBy, ContaminationMode, ConversionProcess, SimConfig};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigFileError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("missing required setting `{0}`")]
    Missing(&'static str),
}

/// `(line, key, value)` triples in file order.
pub fn parse_flat(text: &str) -> Result<Vec<(usize, String, String)>, ConfigFileError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(ConfigFileError::Syntax { line: i + 1 })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigFileError::Syntax { line: i + 1 });
        }
        out.push((i + 1, key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigFileError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| ConfigFileError::BadValue {
            line,
            key: key.to_string(),
            reason: e.to_string(),
        })
}

fn bad(line: usize, key: &str, reason: &str) -> ConfigFileError {
    ConfigFileError::BadValue {
        line,
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Grain {
    #[default]
    User,
    Cid,
}

impl FromStr for Grain {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "user" | "userid" => Ok(Grain::User),
            "cid" => Ok(Grain::Cid),
            other => Err(format!("expected `user` or `cid`, got `{other}`")),
        }
    }
}

pub fn parse_count_mode(s: &str) -> Result<CountMode, String> {
    match s {
        "conversions" => Ok(CountMode::Conversions),
        "responders" => Ok(CountMode::Responders),
        other => Err(format!(
            "expected `conversions` or `responders`, got `{other}`"
        )),
    }
}

pub fn parse_split(s: &str) -> Result<NonResponderSplit, String> {
    match s {
        "posterior" => Ok(NonResponderSplit::Posterior),
        "response-weighted" | "response_weighted" => Ok(NonResponderSplit::ResponseWeighted),
        other => Err(format!(
            "expected `posterior` or `response-weighted`, got `{other}`"
        )),
    }
}

/// Everything `analyze` needs besides its inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisSettings {
    pub campaign_id: Option<String>,
    pub holdout_fraction: f64,
    pub pv_window_seconds: u64,
    pub hash_digits: u32,
    pub salt: Option<String>,
    pub grain: Grain,
    pub count_mode: CountMode,
    pub min_degree: usize,
    pub gibbs: GibbsConfig,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            campaign_id: None,
            holdout_fraction: 0.1,
            pv_window_seconds: 7 * 86_400,
            hash_digits: 6,
            salt: None,
            grain: Grain::User,
            count_mode: CountMode::Conversions,
            min_degree: DEFAULT_MIN_DEGREE,
            gibbs: GibbsConfig::default(),
        }
    }
}

impl AnalysisSettings {
    pub fn from_text(text: &str) -> Result<Self, ConfigFileError> {
        let mut s = Self::default();
        for (line, key, value) in parse_flat(text)? {
            s.set(line, &key, &value)?;
        }
        Ok(s)
    }

    pub fn set(&mut self, line: usize, key: &str, v: &str) -> Result<(), ConfigFileError> {
        match key {
            "campaign_id" => self.campaign_id = Some(v.to_string()),
            "holdout_fraction" => self.holdout_fraction = parse(line, key, v)?,
            "pv_window_seconds" => self.pv_window_seconds = parse(line, key, v)?,
            "hash_digits" => self.hash_digits = parse(line, key, v)?,
            "salt" => self.salt = Some(v.to_string()),
            "grain" => self.grain = parse(line, key, v)?,
            "count_mode" => {
                self.count_mode = parse_count_mode(v).map_err(|e| bad(line, key, &e))?
            }
            "min_degree" => self.min_degree = parse(line, key, v)?,
            "gibbs.burn_in" => self.gibbs.burn_in = parse(line, key, v)?,
            "gibbs.samples" => self.gibbs.samples = parse(line, key, v)?,
            "gibbs.chains" => self.gibbs.chains = parse(line, key, v)?,
            "gibbs.seed" | "seed" => self.gibbs.seed = parse(line, key, v)?,
            "gibbs.split" => self.gibbs.split = parse_split(v).map_err(|e| bad(line, key, &e))?,
            _ => {
                return Err(ConfigFileError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Campaign settings; the salt defaults to the campaign id.
    pub fn campaign(&self) -> Result<CampaignConfig, ConfigFileError> {
        let campaign_id = self
            .campaign_id
            .clone()
            .ok_or(ConfigFileError::Missing("campaign_id"))?;
        Ok(CampaignConfig {
            salt: self.salt.clone().unwrap_or_else(|| campaign_id.clone()),
            campaign_id,
            holdout_fraction: self.holdout_fraction,
            pv_window: self.pv_window_seconds,
            hash_digits: self.hash_digits,
        })
    }
}

fn parse_distribution(line: usize, key: &str, v: &str) -> Result<Vec<(u32, f64)>, ConfigFileError> {
    v.split(',')
        .map(|pair| {
            let (k, q) = pair
                .split_once(':')
                .ok_or_else(|| bad(line, key, "expected `devices:probability` pairs"))?;
            Ok((parse(line, key, k.trim())?, parse(line, key, q.trim())?))
        })
        .collect()
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ConfigFileError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(line, key, "expected true or false")),
    }
}

pub fn sim_config_from_text(text: &str) -> Result<SimConfig, ConfigFileError> {
    let mut c = SimConfig::default();
    for (line, key, v) in parse_flat(text)? {
        set_sim(&mut c, line, &key, &v)?;
    }
    Ok(c)
}

pub fn set_sim(c: &mut SimConfig, line: usize, key: &str, v: &str) -> Result<(), ConfigFileError> {
    let k = key;
    match key {
        "n_consumers" => c.n_consumers = parse(line, k, v)?,
        "campaign_id" => c.campaign_id = v.to_string(),
        "holdout_fraction" => c.holdout = parse(line, k, v)?,
        "hash_digits" => c.hash_digits = parse(line, k, v)?,
        "salt" => c.salt = v.to_string(),
        "pv_window_seconds" => c.pv_window = parse(line, k, v)?,
        "device_count_distribution" => {
            c.device_count_distribution = parse_distribution(line, k, v)?
        }
        "base_rate" => c.base_rate = parse(line, k, v)?,
        "baseline_spread" => c.baseline_spread = parse(line, k, v)?,
        "true_lift" => c.true_lift = parse(line, k, v)?,
        "win_rate" => c.win_rate = parse(line, k, v)?,
        "winner_baseline_multiplier" => c.winner_baseline_multiplier = parse(line, k, v)?,
        "opps_per_device" => c.opps_per_device = parse(line, k, v)?,
        "horizon_seconds" => c.horizon = parse(line, k, v)?,
        "background_rate" => c.background_rate = parse(line, k, v)?,
        "conversion_process" => {
            c.conversion_process = match v {
                "bernoulli" => ConversionProcess::Bernoulli,
                "poisson" => ConversionProcess::Poisson,
                _ => return Err(bad(line, k, "expected bernoulli or poisson")),
            }
        }
        "contamination_mode" => {
            c.contamination_mode = match v {
                "none" => ContaminationMode::None,
                "cross_device_toy" => ContaminationMode::CrossDeviceToy,
                "mixed_1d2d" => ContaminationMode::Mixed1d2d,
                _ => {
                    return Err(bad(
                        line,
                        k,
                        "expected none, cross_device_toy or mixed_1d2d",
                    ))
                }
            }
        }
        "assign_by" => c.assign_by = parse_assign_by(v).map_err(|e| bad(line, k, &e))?,
        "per_opp_wins" => c.per_opp_wins = parse_bool(line, k, v)?,
        "emit_bid_opps" => c.emit_bid_opps = parse_bool(line, k, v)?,
        "seed" => c.seed = parse(line, k, v)?,
        _ => {
            return Err(ConfigFileError::UnknownKey {
                line,
                key: key.to_string(),
            })
        }
    }
    Ok(())
}

pub fn parse_assign_by(v: &str) -> Result<AssignBy, String> {
    match v {
        "user" | "userid" => Ok(AssignBy::UserId),
        "consumer" | "cid" => Ok(AssignBy::Consumer),
        other => Err(format!("expected `user` or `consumer`, got `{other}`")),
    }
}

/// Config text `analyze` can read back for a simulated campaign.
pub fn campaign_config_text(c: &SimConfig) -> String {
    format!(
        "campaign_id = {}\nholdout_fraction = {}\npv_window_seconds = {}\nhash_digits = {}\nsalt = {}\n",
        c.campaign_id, c.holdout, c.pv_window, c.hash_digits, c.salt
    )
}
