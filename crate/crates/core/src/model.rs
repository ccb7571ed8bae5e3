//! Shared vocabulary: identifiers, log records, campaign configuration and
//! the count table consumed by every estimator.
//!
//! Log records travel as JSON Lines. Field names on the wire are short:
//!
//! | kind       | fields               |
//! |------------|----------------------|
//! | bidopp     | `u`, `t`, `r`, `e`   |
//! | impression | `u`, `t`, `c`, `tag` |
//! | event      | `u`, `t`, `c`        |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Epoch seconds.
pub type Timestamp = u64;

/// Device- or browser-scoped identifier (cookie, mobile advertising ID).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UserId(String);

/// Master identifier linking the userIDs of one consumer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ConnectedId(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("identifier must be non-empty")]
pub struct EmptyIdentifier;

macro_rules! string_id {
    ($ty:ident) => {
        impl $ty {
            pub fn new(value: impl Into<String>) -> Result<Self, EmptyIdentifier> {
                let value = value.into();
                if value.is_empty() {
                    Err(EmptyIdentifier)
                } else {
                    Ok(Self(value))
                }
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $ty {
            type Error = EmptyIdentifier;
            fn try_from(value: String) -> Result<Self, Self::Error> {
                Self::new(value)
            }
        }

        impl From<$ty> for String {
            fn from(id: $ty) -> String {
                id.0
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

string_id!(UserId);
string_id!(ConnectedId);

impl ConnectedId {
    /// The CID reinterpreted as an analysis unit key. Used once logs are
    /// remapped to CID grain, where the record's id field carries the CID.
    pub fn as_unit(&self) -> UserId {
        UserId(self.0.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("holdout fraction {0} must lie strictly between 0 and 1")]
    HoldoutOutOfRange(f64),
    #[error("holdout fraction {p} is not a multiple of 10^-{digits}")]
    HoldoutNotRepresentable { p: f64, digits: u32 },
    #[error("hash digits must be between 1 and 18, got {0}")]
    HashDigits(u32),
    #[error("post-view window must be positive")]
    EmptyPvWindow,
    #[error("campaign id must be non-empty")]
    EmptyCampaignId,
}

/// Per-campaign measurement settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub campaign_id: String,
    pub holdout_fraction: f64,
    pub pv_window: u64,
    pub hash_digits: u32,
    /// Assignment salt. Related campaigns that must share Test/Control
    /// membership should share a salt.
    pub salt: String,
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.campaign_id.is_empty() {
            return Err(ConfigError::EmptyCampaignId);
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(ConfigError::HoldoutOutOfRange(self.holdout_fraction));
        }
        if self.pv_window == 0 {
            return Err(ConfigError::EmptyPvWindow);
        }
        crate::assignment::HoldoutBand::new(self.holdout_fraction, self.hash_digits)?;
        Ok(())
    }

    pub fn hash_config(&self) -> crate::assignment::HashConfig {
        crate::assignment::HashConfig {
            digits: self.hash_digits,
            salt: self.salt.clone(),
        }
    }
}

/// Impression log tag. `C`, `TW` and `TL` come from pre-bid runs; the
/// `*_postbid` tags from post-bid runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ImpressionTag {
    Control,
    TestWin,
    TestLoss,
    TestPostbid,
    ControlPostbid,
}

impl ImpressionTag {
    pub const ALL: [ImpressionTag; 5] = [
        ImpressionTag::Control,
        ImpressionTag::TestWin,
        ImpressionTag::TestLoss,
        ImpressionTag::TestPostbid,
        ImpressionTag::ControlPostbid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ImpressionTag::Control => "C",
            ImpressionTag::TestWin => "TW",
            ImpressionTag::TestLoss => "TL",
            ImpressionTag::TestPostbid => "T_postbid",
            ImpressionTag::ControlPostbid => "C_postbid",
        }
    }

    pub fn is_postbid(self) -> bool {
        matches!(
            self,
            ImpressionTag::TestPostbid | ImpressionTag::ControlPostbid
        )
    }

    pub fn is_control(self) -> bool {
        matches!(self, ImpressionTag::Control | ImpressionTag::ControlPostbid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown impression tag {0:?}")]
pub struct UnknownTag(pub String);

impl FromStr for ImpressionTag {
    type Err = UnknownTag;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ImpressionTag::ALL
            .into_iter()
            .find(|tag| tag.as_str() == s)
            .ok_or_else(|| UnknownTag(s.to_string()))
    }
}

impl fmt::Display for ImpressionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BidOppRecord {
    pub user_id: UserId,
    pub timestamp: Timestamp,
    pub request_id: String,
    pub exchange_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImpressionRecord {
    pub user_id: UserId,
    pub timestamp: Timestamp,
    pub campaign_id: String,
    pub tag: ImpressionTag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub user_id: UserId,
    pub timestamp: Timestamp,
    pub campaign_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogKind {
    BidOpp,
    Impression,
    Event,
}

/// The three log streams of one campaign.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CampaignLogs {
    pub bid_opps: Vec<BidOppRecord>,
    pub impressions: Vec<ImpressionRecord>,
    pub events: Vec<EventRecord>,
}

impl CampaignLogs {
    pub fn len(&self) -> usize {
        self.bid_opps.len() + self.impressions.len() + self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogRecord {
    BidOpp(BidOppRecord),
    Impression(ImpressionRecord),
    Event(EventRecord),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed line at byte {offset}: field `{field}`: {reason}")]
    Malformed {
        offset: usize,
        field: String,
        reason: String,
    },
    #[error(transparent)]
    UnknownTag(#[from] UnknownTag),
}

struct FieldReader<'a> {
    line: &'a str,
    object: Map<String, Value>,
}

impl<'a> FieldReader<'a> {
    fn new(line: &'a str) -> Result<Self, ParseError> {
        let value: Value = serde_json::from_str(line).map_err(|err| ParseError::Malformed {
            // serde_json columns are 1-based byte columns on the offending line.
            offset: err.column().saturating_sub(1),
            field: String::new(),
            reason: err.to_string(),
        })?;
        match value {
            Value::Object(object) => Ok(Self { line, object }),
            _ => Err(ParseError::Malformed {
                offset: 0,
                field: String::new(),
                reason: "expected a JSON object".into(),
            }),
        }
    }

    fn offset_of(&self, field: &str) -> usize {
        let key = format!("\"{field}\"");
        self.line.find(&key).unwrap_or(self.line.len())
    }

    fn error(&self, field: &str, reason: impl Into<String>) -> ParseError {
        ParseError::Malformed {
            offset: self.offset_of(field),
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    fn string(&self, field: &str) -> Result<String, ParseError> {
        match self.object.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(self.error(field, format!("expected string, found {other}"))),
            None => Err(self.error(field, "missing field")),
        }
    }

    fn user_id(&self, field: &str) -> Result<UserId, ParseError> {
        UserId::new(self.string(field)?).map_err(|e| self.error(field, e.to_string()))
    }

    fn timestamp(&self, field: &str) -> Result<Timestamp, ParseError> {
        match self.object.get(field) {
            Some(Value::Number(n)) => n.as_u64().ok_or_else(|| {
                self.error(field, format!("expected non-negative integer, found {n}"))
            }),
            Some(other) => Err(self.error(field, format!("expected integer, found {other}"))),
            None => Err(self.error(field, "missing field")),
        }
    }
}

/// Parses one JSONL record of the given kind.
pub fn parse_log_line(line: &str, kind: LogKind) -> Result<LogRecord, ParseError> {
    let reader = FieldReader::new(line.trim_end())?;
    let user_id = reader.user_id("u")?;
    let timestamp = reader.timestamp("t")?;
    Ok(match kind {
        LogKind::BidOpp => LogRecord::BidOpp(BidOppRecord {
            user_id,
            timestamp,
            request_id: reader.string("r")?,
            exchange_id: reader.string("e")?,
        }),
        LogKind::Impression => {
            let campaign_id = reader.string("c")?;
            let tag = reader.string("tag")?.parse()?;
            LogRecord::Impression(ImpressionRecord {
                user_id,
                timestamp,
                campaign_id,
                tag,
            })
        }
        LogKind::Event => LogRecord::Event(EventRecord {
            user_id,
            timestamp,
            campaign_id: reader.string("c")?,
        }),
    })
}

#[derive(Serialize)]
struct BidOppWire<'a> {
    u: &'a str,
    t: Timestamp,
    r: &'a str,
    e: &'a str,
}

#[derive(Serialize)]
struct ImpressionWire<'a> {
    u: &'a str,
    t: Timestamp,
    c: &'a str,
    tag: &'a str,
}

#[derive(Serialize)]
struct EventWire<'a> {
    u: &'a str,
    t: Timestamp,
    c: &'a str,
}

impl LogRecord {
    pub fn kind(&self) -> LogKind {
        match self {
            LogRecord::BidOpp(_) => LogKind::BidOpp,
            LogRecord::Impression(_) => LogKind::Impression,
            LogRecord::Event(_) => LogKind::Event,
        }
    }

    /// Serializes to a single JSONL line (no trailing newline).
    pub fn to_json_line(&self) -> String {
        let out = match self {
            LogRecord::BidOpp(r) => serde_json::to_string(&BidOppWire {
                u: r.user_id.as_str(),
                t: r.timestamp,
                r: &r.request_id,
                e: &r.exchange_id,
            }),
            LogRecord::Impression(r) => serde_json::to_string(&ImpressionWire {
                u: r.user_id.as_str(),
                t: r.timestamp,
                c: &r.campaign_id,
                tag: r.tag.as_str(),
            }),
            LogRecord::Event(r) => serde_json::to_string(&EventWire {
                u: r.user_id.as_str(),
                t: r.timestamp,
                c: &r.campaign_id,
            }),
        };
        out.expect("wire structs always serialize")
    }
}

/// Observed counts for the three pre-bid populations TW, TL and C.
///
/// `*1`/`*0` are responder and non-responder unit counts, `conv_*` are total
/// attributed conversions (a unit may contribute several), `uniq_*` are unit
/// counts. TL totals are implied: `uniq_t - uniq_tw` units and
/// `conv_t - conv_tw` conversions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountTable {
    pub tw1: u64,
    pub tw0: u64,
    pub tl1: u64,
    pub tl0: u64,
    pub c1: u64,
    pub c0: u64,
    pub conv_t: u64,
    pub conv_tw: u64,
    pub conv_c: u64,
    pub uniq_t: u64,
    pub uniq_tw: u64,
    pub uniq_c: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub constraint: &'static str,
    pub fields: &'static [&'static str],
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (fields: {})",
            self.constraint,
            self.fields.join(", ")
        )
    }
}

impl CountTable {
    /// Builds a table from unique-unit and conversion totals in the layout
    /// of a results table (TU, TC, TWU, TWC, CU, CC), treating every
    /// conversion as a distinct responder.
    pub fn from_unit_totals(tu: u64, tc: u64, twu: u64, twc: u64, cu: u64, cc: u64) -> Self {
        let tlu = tu.saturating_sub(twu);
        let tlc = tc.saturating_sub(twc);
        CountTable {
            tw1: twc,
            tw0: twu.saturating_sub(twc),
            tl1: tlc,
            tl0: tlu.saturating_sub(tlc),
            c1: cc,
            c0: cu.saturating_sub(cc),
            conv_t: tc,
            conv_tw: twc,
            conv_c: cc,
            uniq_t: tu,
            uniq_tw: twu,
            uniq_c: cu,
        }
    }

    pub fn uniq_tl(&self) -> u64 {
        self.uniq_t.saturating_sub(self.uniq_tw)
    }

    pub fn conv_tl(&self) -> u64 {
        self.conv_t.saturating_sub(self.conv_tw)
    }

    /// Component-wise sum of two tables built from disjoint unit sets.
    pub fn merge(&self, other: &CountTable) -> CountTable {
        CountTable {
            tw1: self.tw1 + other.tw1,
            tw0: self.tw0 + other.tw0,
            tl1: self.tl1 + other.tl1,
            tl0: self.tl0 + other.tl0,
            c1: self.c1 + other.c1,
            c0: self.c0 + other.c0,
            conv_t: self.conv_t + other.conv_t,
            conv_tw: self.conv_tw + other.conv_tw,
            conv_c: self.conv_c + other.conv_c,
            uniq_t: self.uniq_t + other.uniq_t,
            uniq_tw: self.uniq_tw + other.uniq_tw,
            uniq_c: self.uniq_c + other.uniq_c,
        }
    }

    /// Every violated invariant; empty iff the table is consistent.
    pub fn violations(&self) -> Vec<Violation> {
        let t = self;
        let checks: [(bool, &'static str, &'static [&'static str]); 9] = [
            (
                t.uniq_tw <= t.uniq_t,
                "uniq_tw ≤ uniq_t",
                &["uniq_tw", "uniq_t"],
            ),
            (t.tw1 <= t.uniq_tw, "tw1 ≤ uniq_tw", &["tw1", "uniq_tw"]),
            (
                t.tw1 + t.tw0 == t.uniq_tw,
                "tw1 + tw0 = uniq_tw",
                &["tw1", "tw0", "uniq_tw"],
            ),
            (
                t.uniq_tw <= t.uniq_t && t.tl1 + t.tl0 == t.uniq_t - t.uniq_tw,
                "tl1 + tl0 = uniq_t − uniq_tw",
                &["tl1", "tl0", "uniq_t", "uniq_tw"],
            ),
            (
                t.c1 + t.c0 == t.uniq_c,
                "c1 + c0 = uniq_c",
                &["c1", "c0", "uniq_c"],
            ),
            (
                t.conv_tw <= t.conv_t,
                "conv_tw ≤ conv_t",
                &["conv_tw", "conv_t"],
            ),
            (t.tw1 <= t.conv_tw, "tw1 ≤ conv_tw", &["tw1", "conv_tw"]),
            (
                t.conv_tw > t.conv_t || t.tl1 <= t.conv_t - t.conv_tw,
                "tl1 ≤ conv_t − conv_tw",
                &["tl1", "conv_t", "conv_tw"],
            ),
            (t.c1 <= t.conv_c, "c1 ≤ conv_c", &["c1", "conv_c"]),
        ];
        checks
            .into_iter()
            .filter(|(ok, _, _)| !ok)
            .map(|(_, constraint, fields)| Violation { constraint, fields })
            .collect()
    }
}

/// Checks every CountTable invariant, returning the violations as data.
pub fn validate_count_table(table: &CountTable) -> Result<(), Vec<Violation>> {
    let violations = table.violations();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Unobserved responder/non-responder split of the Control population into
/// winner types (CW) and loser types (CL).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenCounts {
    pub cw1: u64,
    pub cw0: u64,
    pub cl1: u64,
    pub cl0: u64,
}

impl HiddenCounts {
    pub fn is_consistent_with(&self, table: &CountTable) -> bool {
        self.cw1 + self.cl1 == table.c1 && self.cw0 + self.cl0 == table.c0
    }
}
