//! Connected-ID remapping and the closed-form cross-device contamination
//! models.
//!
//! A consumer reached on several devices shows up as several userIDs that
//! may land in different arms. Remapping the logs onto a deterministic
//! connected ID (CID) restores one unit per consumer; the two formulas
//! here predict what happens when that is not done.

use std::collections::HashMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    BidOppRecord, CampaignLogs, ConnectedId, EventRecord, ImpressionRecord, UserId,
};

pub const DEFAULT_MIN_DEGREE: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentityError {
    #[error("userID {user} maps to both {first} and {second}")]
    ConflictingMapping {
        user: UserId,
        first: ConnectedId,
        second: ConnectedId,
    },
    #[error("graph csv line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error("minimum CID degree must be at least 1")]
    ZeroMinDegree,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContaminationError {
    #[error("devices per consumer must be at least 1")]
    NoDevices,
    #[error("holdout fraction {0} must lie strictly between 0 and 1")]
    Holdout(f64),
    #[error("true lift {0} must exceed -1")]
    Lift(f64),
    #[error("dilution denominator {0} is not positive")]
    NonPositiveDenominator(f64),
}

/// Deterministic many-to-one map from userIDs to connected IDs.
#[derive(Debug, Clone, Default)]
pub struct IdGraph {
    edges: HashMap<UserId, ConnectedId>,
    degree: HashMap<ConnectedId, usize>,
}

#[derive(Deserialize)]
struct GraphRow {
    user_id: String,
    cid: String,
}

impl IdGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an edge. Repeating an identical edge is a no-op; linking a
    /// userID to a second CID is an error.
    pub fn insert(&mut self, user: UserId, cid: ConnectedId) -> Result<(), IdentityError> {
        if let Some(existing) = self.edges.get(&user) {
            if *existing == cid {
                return Ok(());
            }
            return Err(IdentityError::ConflictingMapping {
                user,
                first: existing.clone(),
                second: cid,
            });
        }
        *self.degree.entry(cid.clone()).or_default() += 1;
        self.edges.insert(user, cid);
        Ok(())
    }

    pub fn from_edges(
        edges: impl IntoIterator<Item = (UserId, ConnectedId)>,
    ) -> Result<Self, IdentityError> {
        let mut graph = Self::new();
        for (user, cid) in edges {
            graph.insert(user, cid)?;
        }
        Ok(graph)
    }

    /// Reads a `user_id,cid` CSV with a header row.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, IdentityError> {
        let mut csv = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut graph = Self::new();
        for row in csv.deserialize::<GraphRow>() {
            let row = row.map_err(|e| IdentityError::Csv {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = graph.edges.len() as u64 + 2;
            let bad = |what: &str| IdentityError::Csv {
                line,
                reason: format!("empty {what}"),
            };
            let user = UserId::new(row.user_id).map_err(|_| bad("user_id"))?;
            let cid = ConnectedId::new(row.cid).map_err(|_| bad("cid"))?;
            graph.insert(user, cid)?;
        }
        Ok(graph)
    }

    /// Writes the graph as `user_id,cid` CSV, sorted by userID.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut edges: Vec<_> = self.edges.iter().collect();
        edges.sort();
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["user_id", "cid"])?;
        for (user, cid) in edges {
            csv.write_record([user.as_str(), cid.as_str()])?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn cid_of(&self, user: &UserId) -> Option<&ConnectedId> {
        self.edges.get(user)
    }

    /// Number of distinct userIDs linked to `cid` anywhere in the graph.
    pub fn degree(&self, cid: &ConnectedId) -> usize {
        self.degree.get(cid).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn cid_count(&self) -> usize {
        self.degree.len()
    }
}

/// Records dropped while remapping one stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemapTally {
    pub unmapped: u64,
    pub low_degree: u64,
}

impl RemapTally {
    pub fn total(&self) -> u64 {
        self.unmapped + self.low_degree
    }

    fn add(self, other: RemapTally) -> RemapTally {
        RemapTally {
            unmapped: self.unmapped + other.unmapped,
            low_degree: self.low_degree + other.low_degree,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemapDiscards {
    pub bid_opps: RemapTally,
    pub impressions: RemapTally,
    pub events: RemapTally,
}

impl RemapDiscards {
    pub fn total(&self) -> RemapTally {
        self.bid_opps.add(self.impressions).add(self.events)
    }
}

/// A log record keyed by a unit identifier.
pub trait UnitRecord: Clone + Send + Sync {
    fn unit(&self) -> &UserId;
    fn with_unit(&self, unit: UserId) -> Self;
}

impl UnitRecord for BidOppRecord {
    fn unit(&self) -> &UserId {
        &self.user_id
    }
    fn with_unit(&self, unit: UserId) -> Self {
        Self {
            user_id: unit,
            ..self.clone()
        }
    }
}

impl UnitRecord for ImpressionRecord {
    fn unit(&self) -> &UserId {
        &self.user_id
    }
    fn with_unit(&self, unit: UserId) -> Self {
        Self {
            user_id: unit,
            ..self.clone()
        }
    }
}

impl UnitRecord for EventRecord {
    fn unit(&self) -> &UserId {
        &self.user_id
    }
    fn with_unit(&self, unit: UserId) -> Self {
        Self {
            user_id: unit,
            ..self.clone()
        }
    }
}

enum Outcome<R> {
    Kept(R),
    Unmapped,
    LowDegree,
}

/// Rewrites one stream onto CID units, keeping input order.
pub fn remap_records<R: UnitRecord>(
    records: &[R],
    graph: &IdGraph,
    min_degree: usize,
) -> (Vec<R>, RemapTally) {
    let outcomes: Vec<Outcome<R>> = records
        .par_iter()
        .map(|rec| match graph.cid_of(rec.unit()) {
            None => Outcome::Unmapped,
            Some(cid) if graph.degree(cid) < min_degree => Outcome::LowDegree,
            Some(cid) => Outcome::Kept(rec.with_unit(cid.as_unit())),
        })
        .collect();
    let mut kept = Vec::with_capacity(outcomes.len());
    let mut tally = RemapTally::default();
    for outcome in outcomes {
        match outcome {
            Outcome::Kept(rec) => kept.push(rec),
            Outcome::Unmapped => tally.unmapped += 1,
            Outcome::LowDegree => tally.low_degree += 1,
        }
    }
    (kept, tally)
}

/// Moves all three streams to CID grain. Records of unmapped userIDs and
/// of CIDs linking fewer than `min_degree` userIDs are dropped.
///
/// Impression tags are carried over unchanged, so the logs must come from
/// a campaign that assigned arms by CID; otherwise attribution will report
/// mixed-arm units.
pub fn remap_to_cid(
    logs: &CampaignLogs,
    graph: &IdGraph,
    min_degree: usize,
) -> Result<(CampaignLogs, RemapDiscards), IdentityError> {
    if min_degree == 0 {
        return Err(IdentityError::ZeroMinDegree);
    }
    let (bid_opps, bid_tally) = remap_records(&logs.bid_opps, graph, min_degree);
    let (impressions, imp_tally) = remap_records(&logs.impressions, graph, min_degree);
    let (events, ev_tally) = remap_records(&logs.events, graph, min_degree);
    Ok((
        CampaignLogs {
            bid_opps,
            impressions,
            events,
        },
        RemapDiscards {
            bid_opps: bid_tally,
            impressions: imp_tally,
            events: ev_tally,
        },
    ))
}

/// The cross-device toy: every consumer has exactly `k` devices, each
/// hashed independently into Control with probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationScenario {
    pub devices_per_consumer: u32,
    pub holdout: f64,
    pub true_lift: f64,
}

impl ContaminationScenario {
    pub fn new(k: u32, p: f64, a: f64) -> Result<Self, ContaminationError> {
        let s = Self {
            devices_per_consumer: k,
            holdout: p,
            true_lift: a,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ContaminationError> {
        if self.devices_per_consumer == 0 {
            return Err(ContaminationError::NoDevices);
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(ContaminationError::Holdout(self.holdout));
        }
        if self.true_lift.is_nan() || self.true_lift <= -1.0 {
            return Err(ContaminationError::Lift(self.true_lift));
        }
        Ok(())
    }

    /// Probability that all `k` devices of a consumer are in Control.
    pub fn all_control_prob(&self) -> f64 {
        self.holdout.powi(self.devices_per_consumer as i32 - 1)
    }
}

/// Lift measured at userID grain when true consumer lift is `a`:
/// `a·p^(k-1) / (1 + a - a·p^(k-1))`.
pub fn diluted_atl(s: &ContaminationScenario) -> Result<f64, ContaminationError> {
    s.validate()?;
    let a = s.true_lift;
    let q = s.all_control_prob();
    let denom = 1.0 + a - a * q;
    if denom <= 0.0 {
        return Err(ContaminationError::NonPositiveDenominator(denom));
    }
    Ok(a * q / denom)
}

/// Expected over-representation of two-device consumers in Control
/// relative to Test, `(2 - p) / (1 + p)`.
pub fn multidevice_skew_factor(p: f64) -> Result<f64, ContaminationError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ContaminationError::Holdout(p));
    }
    Ok((2.0 - p) / (1.0 + p))
}
