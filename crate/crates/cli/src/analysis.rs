//! The full analysis pipeline: logs (or a ready count table) to report.

use adlift::attribution::{attribute_sharded, AttributionError};
use adlift::estimators::{
    point_estimates, rounded_trace, standard_estimator, CountMode, EstimateError, LiftEstimate,
    RoundedTrace,
};
use adlift::gibbs::{run_chain, GibbsConfig, GibbsError, GibbsResult};
use adlift::identity::{remap_to_cid, IdGraph, IdentityError, RemapDiscards};
use adlift::model::{
    validate_count_table, CampaignConfig, CampaignLogs, ConfigError, CountTable, Violation,
};
use serde::Serialize;
use thiserror::Error;

use crate::config::{AnalysisSettings, ConfigFileError, Grain};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    ConfigFile(#[from] ConfigFileError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Gibbs(#[from] GibbsError),
    #[error("count table is inconsistent: {}", join(.0))]
    InvalidTable(Vec<Violation>),
    #[error("CID grain needs a CID graph")]
    MissingGraph,
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl AnalysisError {
    pub fn kind(&self) -> &'static str {
        match self {
            AnalysisError::Config(_) | AnalysisError::ConfigFile(_) => "config",
            AnalysisError::Attribution(_) => "attribution",
            AnalysisError::Identity(_) => "identity",
            AnalysisError::Estimate(_) => "estimate",
            AnalysisError::Gibbs(_) => "gibbs",
            AnalysisError::InvalidTable(_) => "invalid_table",
            AnalysisError::MissingGraph => "config",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateSection {
    pub point: LiftEstimate,
    /// Exposed rate minus the pooled unexposed rate; absent when undefined.
    pub standard: Option<f64>,
    /// Calculation rounded at every step, as one would do by hand.
    pub hand_trace: Option<RoundedTrace>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Discards {
    pub other_campaign_impressions: u64,
    pub other_campaign_events: u64,
    pub unknown_unit_events: u64,
    pub unattributed_events: u64,
    pub remap: Option<RemapDiscards>,
    /// How CID degree was counted for the minimum-degree filter.
    pub degree_basis: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub input: &'static str,
    pub campaign: CampaignConfig,
    pub grain: Grain,
    pub count_mode: CountMode,
    pub min_degree: usize,
    pub gibbs: Option<GibbsConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub campaign_id: String,
    pub grain: Grain,
    pub counts: CountTable,
    pub estimate: EstimateSection,
    pub gibbs: Option<GibbsResult>,
    pub discards: Discards,
    pub config: ConfigEcho,
    pub seed: u64,
    pub version: &'static str,
}

fn finish(
    table: CountTable,
    campaign: CampaignConfig,
    settings: &AnalysisSettings,
    input: &'static str,
    discards: Discards,
    run_gibbs: bool,
) -> Result<AnalysisReport, AnalysisError> {
    let mode = settings.count_mode;
    let point = point_estimates(&table, mode)?;
    let gibbs = if run_gibbs {
        Some(run_chain(&table, &settings.gibbs)?)
    } else {
        None
    };
    Ok(AnalysisReport {
        campaign_id: campaign.campaign_id.clone(),
        grain: settings.grain,
        counts: table,
        estimate: EstimateSection {
            point,
            standard: standard_estimator(&table, mode).ok(),
            hand_trace: rounded_trace(&table, mode).ok(),
        },
        gibbs,
        discards,
        config: ConfigEcho {
            input,
            campaign,
            grain: settings.grain,
            count_mode: mode,
            min_degree: settings.min_degree,
            gibbs: run_gibbs.then_some(settings.gibbs),
        },
        seed: settings.gibbs.seed,
        version: VERSION,
    })
}

/// Attributes the logs and estimates lift. At CID grain the logs are first
/// remapped through `graph`.
pub fn analyze_logs(
    logs: &CampaignLogs,
    settings: &AnalysisSettings,
    graph: Option<&IdGraph>,
    run_gibbs: bool,
) -> Result<AnalysisReport, AnalysisError> {
    let campaign = settings.campaign()?;
    campaign.validate()?;
    let mut discards = Discards::default();

    let mut own = CampaignLogs {
        bid_opps: logs.bid_opps.clone(),
        impressions: Vec::with_capacity(logs.impressions.len()),
        events: Vec::with_capacity(logs.events.len()),
    };
    for imp in &logs.impressions {
        if imp.campaign_id == campaign.campaign_id {
            own.impressions.push(imp.clone());
        } else {
            discards.other_campaign_impressions += 1;
        }
    }
    for ev in &logs.events {
        if ev.campaign_id == campaign.campaign_id {
            own.events.push(ev.clone());
        } else {
            discards.other_campaign_events += 1;
        }
    }

    if settings.grain == Grain::Cid {
        let graph = graph.ok_or(AnalysisError::MissingGraph)?;
        let (remapped, tally) = remap_to_cid(&own, graph, settings.min_degree)?;
        own = remapped;
        discards.remap = Some(tally);
        discards.degree_basis = Some("distinct userIDs linked in the CID graph");
    }

    let shards = rayon::current_num_threads();
    let attribution = attribute_sharded(&own.impressions, &own.events, campaign.pv_window, shards)?;
    discards.unknown_unit_events = attribution.unknown_unit_events;
    discards.unattributed_events = attribution.unattributed_events;
    finish(
        attribution.table,
        campaign,
        settings,
        "logs",
        discards,
        run_gibbs,
    )
}

/// Estimates lift from an already aggregated count table.
pub fn analyze_table(
    table: &CountTable,
    settings: &AnalysisSettings,
    run_gibbs: bool,
) -> Result<AnalysisReport, AnalysisError> {
    validate_count_table(table).map_err(AnalysisError::InvalidTable)?;
    let campaign = settings.campaign()?;
    if campaign.campaign_id.is_empty() {
        return Err(ConfigError::EmptyCampaignId.into());
    }
    finish(
        *table,
        campaign,
        settings,
        "counts",
        Discards::default(),
        run_gibbs,
    )
}
