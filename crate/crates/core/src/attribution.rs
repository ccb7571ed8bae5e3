//! From raw impression and event logs to a [`CountTable`].
//!
//! Each userID (or CID, after remapping) is one unit covering all of its bid
//! opportunities. A Test unit is a winner if any of its opportunities was won.
//! A conversion is attributed to a unit when some opportunity of that unit
//! precedes it by at most the post-view window.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64;

use crate::model::{CountTable, EventRecord, ImpressionRecord, ImpressionTag, Timestamp, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum UnitGroup {
    TestWin,
    TestLoss,
    Control,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttributionError {
    #[error("unit {0} has both Control and Test impressions; assignment is corrupt")]
    MixedArm(UserId),
    #[error("unit {0} mixes pre-bid and post-bid impression tags")]
    MixedMode(UserId),
}

/// Everything attribution knows about one unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnitLedger {
    pub unit_id: UserId,
    pub group: UnitGroup,
    /// Sorted ascending, never empty.
    pub opp_timestamps: Vec<Timestamp>,
    pub attributed_conversions: u64,
}

impl UnitLedger {
    /// Whether an event at `t` falls within `pv_window` after some opportunity.
    pub fn attributes(&self, t: Timestamp, pv_window: u64) -> bool {
        // Latest opportunity at or before t.
        let idx = self.opp_timestamps.partition_point(|&opp| opp <= t);
        idx > 0 && t - self.opp_timestamps[idx - 1] <= pv_window
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ledgers {
    pub units: BTreeMap<UserId, UnitLedger>,
    /// Events whose unit never appeared in the impression log.
    pub unknown_unit_events: u64,
    /// Events of known units that fell outside every PV window.
    pub unattributed_events: u64,
}

#[derive(Default)]
struct TagSummary {
    win: bool,
    loss: bool,
    control: bool,
    prebid: bool,
    postbid: bool,
    opps: Vec<Timestamp>,
}

impl TagSummary {
    fn observe(&mut self, tag: ImpressionTag, t: Timestamp) {
        match tag {
            ImpressionTag::TestWin | ImpressionTag::TestPostbid => self.win = true,
            ImpressionTag::TestLoss => self.loss = true,
            ImpressionTag::Control | ImpressionTag::ControlPostbid => self.control = true,
        }
        if tag.is_postbid() {
            self.postbid = true;
        } else {
            self.prebid = true;
        }
        self.opps.push(t);
    }

    fn group(&self, unit: &UserId) -> Result<UnitGroup, AttributionError> {
        if self.prebid && self.postbid {
            return Err(AttributionError::MixedMode(unit.clone()));
        }
        match (self.control, self.win, self.loss) {
            (true, false, false) => Ok(UnitGroup::Control),
            (true, _, _) => Err(AttributionError::MixedArm(unit.clone())),
            (false, true, _) => Ok(UnitGroup::TestWin),
            (false, false, _) => Ok(UnitGroup::TestLoss),
        }
    }
}

fn summarize<'a>(
    impressions: impl IntoIterator<Item = &'a ImpressionRecord>,
) -> BTreeMap<UserId, TagSummary> {
    let mut summaries: BTreeMap<UserId, TagSummary> = BTreeMap::new();
    for imp in impressions {
        summaries
            .entry(imp.user_id.clone())
            .or_default()
            .observe(imp.tag, imp.timestamp);
    }
    summaries
}

/// Assigns every unit to TW, TL or C.
///
/// Post-bid tags map onto the same groups: `T_postbid` units were all
/// exposed (TW), `C_postbid` units are Control.
pub fn classify_units<'a>(
    impressions: impl IntoIterator<Item = &'a ImpressionRecord>,
) -> Result<BTreeMap<UserId, UnitGroup>, AttributionError> {
    summarize(impressions)
        .into_iter()
        .map(|(unit, summary)| {
            let group = summary.group(&unit)?;
            Ok((unit, group))
        })
        .collect()
}

/// Classifies units and records their opportunity timestamps, with no
/// conversions attributed yet.
pub fn build_ledgers<'a>(
    impressions: impl IntoIterator<Item = &'a ImpressionRecord>,
) -> Result<Ledgers, AttributionError> {
    let mut units = BTreeMap::new();
    for (unit, mut summary) in summarize(impressions) {
        let group = summary.group(&unit)?;
        summary.opps.sort_unstable();
        units.insert(
            unit.clone(),
            UnitLedger {
                unit_id: unit,
                group,
                opp_timestamps: summary.opps,
                attributed_conversions: 0,
            },
        );
    }
    Ok(Ledgers {
        units,
        ..Ledgers::default()
    })
}

/// Adds every attributable event to its unit's conversion count.
pub fn attribute_conversions<'a>(
    ledgers: &mut Ledgers,
    events: impl IntoIterator<Item = &'a EventRecord>,
    pv_window: u64,
) {
    for event in events {
        match ledgers.units.get_mut(&event.user_id) {
            Some(unit) if unit.attributes(event.timestamp, pv_window) => {
                unit.attributed_conversions += 1;
            }
            Some(_) => ledgers.unattributed_events += 1,
            None => ledgers.unknown_unit_events += 1,
        }
    }
}

pub fn build_count_table<'a>(units: impl IntoIterator<Item = &'a UnitLedger>) -> CountTable {
    let mut table = CountTable::default();
    for unit in units {
        let conversions = unit.attributed_conversions;
        let responder = u64::from(conversions > 0);
        match unit.group {
            UnitGroup::TestWin => {
                table.uniq_t += 1;
                table.uniq_tw += 1;
                table.conv_t += conversions;
                table.conv_tw += conversions;
                table.tw1 += responder;
                table.tw0 += 1 - responder;
            }
            UnitGroup::TestLoss => {
                table.uniq_t += 1;
                table.conv_t += conversions;
                table.tl1 += responder;
                table.tl0 += 1 - responder;
            }
            UnitGroup::Control => {
                table.uniq_c += 1;
                table.conv_c += conversions;
                table.c1 += responder;
                table.c0 += 1 - responder;
            }
        }
    }
    table
}

/// Result of running attribution end to end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribution {
    pub table: CountTable,
    pub unknown_unit_events: u64,
    pub unattributed_events: u64,
}

impl Attribution {
    fn merge(self, other: Attribution) -> Attribution {
        Attribution {
            table: self.table.merge(&other.table),
            unknown_unit_events: self.unknown_unit_events + other.unknown_unit_events,
            unattributed_events: self.unattributed_events + other.unattributed_events,
        }
    }
}

/// Classify, attribute and count in a single pass over one shard.
pub fn attribute<'a>(
    impressions: impl IntoIterator<Item = &'a ImpressionRecord>,
    events: impl IntoIterator<Item = &'a EventRecord>,
    pv_window: u64,
) -> Result<Attribution, AttributionError> {
    let mut ledgers = build_ledgers(impressions)?;
    attribute_conversions(&mut ledgers, events, pv_window);
    Ok(Attribution {
        table: build_count_table(ledgers.units.values()),
        unknown_unit_events: ledgers.unknown_unit_events,
        unattributed_events: ledgers.unattributed_events,
    })
}

/// Shard index for a unit; all records of one unit land in one shard.
pub fn shard_of(unit: &UserId, shards: usize) -> usize {
    (xxh3_64(unit.as_str().as_bytes()) % shards.max(1) as u64) as usize
}

/// [`attribute`] over `shards` unit-hash partitions processed in parallel,
/// merged with [`CountTable::merge`].
pub fn attribute_sharded(
    impressions: &[ImpressionRecord],
    events: &[EventRecord],
    pv_window: u64,
    shards: usize,
) -> Result<Attribution, AttributionError> {
    let shards = shards.max(1);
    let mut imp_parts: Vec<Vec<&ImpressionRecord>> = vec![Vec::new(); shards];
    for imp in impressions {
        imp_parts[shard_of(&imp.user_id, shards)].push(imp);
    }
    let mut ev_parts: Vec<Vec<&EventRecord>> = vec![Vec::new(); shards];
    for ev in events {
        ev_parts[shard_of(&ev.user_id, shards)].push(ev);
    }
    let results: Vec<Result<Attribution, AttributionError>> = imp_parts
        .into_par_iter()
        .zip(ev_parts.into_par_iter())
        .map(|(imps, evs)| attribute(imps, evs, pv_window))
        .collect();
    let mut total = Attribution {
        table: CountTable::default(),
        unknown_unit_events: 0,
        unattributed_events: 0,
    };
    for part in results {
        total = total.merge(part?);
    }
    Ok(total)
}
