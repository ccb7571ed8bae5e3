//! Deterministic Test/Control assignment and the pre-/post-bid logging
//! decisions built on top of it.
//!
//! A userID hashes to a `k`-digit decimal bucket; buckets below
//! `p * 10^k` are Control. Assignment is a pure function of
//! `(userID, salt, p, k)`, so a userID seen on many bid requests always
//! lands in the same arm, under either randomization procedure.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64;

use crate::model::{CampaignConfig, ConfigError, ImpressionTag, UserId};

pub const MAX_HASH_DIGITS: u32 = 18;

/// Separates salt from id in the hashed byte string so that
/// `("ab", "c")` and `("a", "bc")` hash differently.
const SALT_SEPARATOR: u8 = 0x1f;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Assignment {
    Test,
    Control,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HashConfig {
    pub digits: u32,
    pub salt: String,
}

impl HashConfig {
    pub fn new(digits: u32, salt: impl Into<String>) -> Result<Self, ConfigError> {
        if !(1..=MAX_HASH_DIGITS).contains(&digits) {
            return Err(ConfigError::HashDigits(digits));
        }
        Ok(Self {
            digits,
            salt: salt.into(),
        })
    }

    pub fn modulus(&self) -> u64 {
        10u64.pow(self.digits)
    }
}

/// `k`-digit decimal hash of a salted identifier, in `[0, 10^k)`.
pub fn hash_digits(id: &str, cfg: &HashConfig) -> u64 {
    let mut bytes = Vec::with_capacity(cfg.salt.len() + 1 + id.len());
    bytes.extend_from_slice(cfg.salt.as_bytes());
    bytes.push(SALT_SEPARATOR);
    bytes.extend_from_slice(id.as_bytes());
    xxh3_64(&bytes) % cfg.modulus()
}

/// The Control band `[0, p·10^k)` expressed as an exact bucket count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HoldoutBand {
    control_buckets: u64,
    modulus: u64,
}

impl HoldoutBand {
    /// Accepts `p` in `[0, 1]` when `p·10^k` is an integer.
    pub fn new(p: f64, digits: u32) -> Result<Self, ConfigError> {
        if !(1..=MAX_HASH_DIGITS).contains(&digits) {
            return Err(ConfigError::HashDigits(digits));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(ConfigError::HoldoutOutOfRange(p));
        }
        let modulus = 10u64.pow(digits);
        let scaled = p * modulus as f64;
        let rounded = scaled.round();
        // Tolerate the representation error of decimal fractions like 0.1.
        if (scaled - rounded).abs() > 1e-6 * scaled.max(1.0) {
            return Err(ConfigError::HoldoutNotRepresentable { p, digits });
        }
        Ok(Self {
            control_buckets: rounded as u64,
            modulus,
        })
    }

    pub fn control_buckets(&self) -> u64 {
        self.control_buckets
    }

    pub fn contains(&self, bucket: u64) -> bool {
        bucket % self.modulus < self.control_buckets
    }
}

/// Precomputed assignment function for one campaign.
#[derive(Debug, Clone)]
pub struct Assigner {
    hash: HashConfig,
    band: HoldoutBand,
}

impl Assigner {
    pub fn new(p: f64, hash: HashConfig) -> Result<Self, ConfigError> {
        let band = HoldoutBand::new(p, hash.digits)?;
        Ok(Self { hash, band })
    }

    pub fn for_campaign(campaign: &CampaignConfig) -> Result<Self, ConfigError> {
        campaign.validate()?;
        Self::new(campaign.holdout_fraction, campaign.hash_config())
    }

    /// Assigns any identifier string; CID-grain assignment hashes the CID.
    pub fn assign_key(&self, key: &str) -> Assignment {
        if self.band.contains(hash_digits(key, &self.hash)) {
            Assignment::Control
        } else {
            Assignment::Test
        }
    }

    pub fn assign(&self, user: &UserId) -> Assignment {
        self.assign_key(user.as_str())
    }
}

pub fn assign(user: &UserId, p: f64, cfg: &HashConfig) -> Result<Assignment, ConfigError> {
    Ok(Assigner::new(p, cfg.clone())?.assign(user))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("auction outcome supplied for a Control userID, which is never bid on")]
    OutcomeForControl,
    #[error("auction outcome missing for a Test userID")]
    MissingOutcome,
}

/// Whether the bidder may submit a bid for this userID under pre-bid
/// randomization. Control userIDs are never bid on.
pub fn should_bid(user: &UserId, assigner: &Assigner) -> bool {
    assigner.assign(user) == Assignment::Test
}

/// Impression tag logged under pre-bid randomization.
///
/// `won` is the auction outcome and must be present exactly for Test
/// userIDs.
pub fn prebid_decide(
    user: &UserId,
    assigner: &Assigner,
    won: Option<bool>,
) -> Result<ImpressionTag, ContractError> {
    match (assigner.assign(user), won) {
        (Assignment::Control, None) => Ok(ImpressionTag::Control),
        (Assignment::Control, Some(_)) => Err(ContractError::OutcomeForControl),
        (Assignment::Test, None) => Err(ContractError::MissingOutcome),
        (Assignment::Test, Some(true)) => Ok(ImpressionTag::TestWin),
        (Assignment::Test, Some(false)) => Ok(ImpressionTag::TestLoss),
    }
}

/// Impression tag logged under post-bid randomization, after an auction
/// win. Control userIDs get a PSA and a phantom control impression.
pub fn postbid_decide(user: &UserId, assigner: &Assigner) -> ImpressionTag {
    match assigner.assign(user) {
        Assignment::Control => ImpressionTag::ControlPostbid,
        Assignment::Test => ImpressionTag::TestPostbid,
    }
}
