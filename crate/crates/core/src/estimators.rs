//! Point estimates of causal effect from a [`CountTable`].
//!
//! Under pre-bid randomization only Test winners are exposed, so the Test vs
//! Control difference (ACE, the intent-to-treat effect) understates the
//! effect on the treated. Winner types are equally common in Test and
//! Control, and loser types respond identically in both arms, which gives
//! `ATT = ACE / w` with `w` the observed win rate. The counterfactual rate
//! of exposed units follows as `R_CW = R_TW − ATT`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::CountTable;

/// Which outcome the rates count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    /// At most one response per unit (binary outcome).
    Responders,
    /// Total attributed conversions per unit.
    #[default]
    Conversions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    Test,
    TestWin,
    Control,
    Unexposed,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("population {0:?} has no units")]
    EmptyPopulation(Population),
    #[error("no Test unit won an auction; win rate is 0 and ATT is undefined")]
    DegenerateWinRate,
    #[error("inferred counterfactual rate {0} is not positive; ATL is undefined")]
    NonPositiveBaseline(f64),
    #[error("exposed response rate is 0; INC is undefined")]
    ZeroExposedRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftEstimate {
    pub mode: CountMode,
    pub r_t: f64,
    pub r_c: f64,
    pub r_tw: f64,
    /// `None` when every Test unit won.
    pub r_tl: Option<f64>,
    pub w: f64,
    pub ace: f64,
    pub att: f64,
    pub r_cw_inferred: f64,
    pub atl: f64,
    pub inc: f64,
}

fn rate(numerator: u64, denominator: u64) -> f64 {
    numerator as f64 / denominator as f64
}

struct Rates {
    r_t: f64,
    r_c: f64,
    r_tw: f64,
    r_tl: Option<f64>,
}

fn rates(t: &CountTable, mode: CountMode) -> Rates {
    let (test, winners, losers, control) = match mode {
        CountMode::Conversions => (t.conv_t, t.conv_tw, t.conv_tl(), t.conv_c),
        CountMode::Responders => (t.tw1 + t.tl1, t.tw1, t.tl1, t.c1),
    };
    Rates {
        r_t: rate(test, t.uniq_t),
        r_c: rate(control, t.uniq_c),
        r_tw: rate(winners, t.uniq_tw),
        r_tl: (t.uniq_tl() > 0).then(|| rate(losers, t.uniq_tl())),
    }
}

/// ATL and INC from ATT and the exposed rate. A zero effect is zero lift
/// even when the baseline is zero.
fn lift_ratios(att: f64, r_tw: f64, r_cw: f64) -> Result<(f64, f64), EstimateError> {
    if att == 0.0 {
        return Ok((0.0, 0.0));
    }
    if r_cw <= 0.0 {
        return Err(EstimateError::NonPositiveBaseline(r_cw));
    }
    if r_tw == 0.0 {
        return Err(EstimateError::ZeroExposedRate);
    }
    Ok((att / r_cw, att / r_tw))
}

/// Pre-bid point estimates corrected for auction non-compliance.
pub fn point_estimates(t: &CountTable, mode: CountMode) -> Result<LiftEstimate, EstimateError> {
    if t.uniq_t == 0 {
        return Err(EstimateError::EmptyPopulation(Population::Test));
    }
    if t.uniq_c == 0 {
        return Err(EstimateError::EmptyPopulation(Population::Control));
    }
    if t.uniq_tw == 0 {
        return Err(EstimateError::DegenerateWinRate);
    }
    let Rates {
        r_t,
        r_c,
        r_tw,
        r_tl,
    } = rates(t, mode);
    let w = rate(t.uniq_tw, t.uniq_t);
    let ace = r_t - r_c;
    let att = ace / w;
    let r_cw_inferred = r_tw - att;
    let (atl, inc) = lift_ratios(att, r_tw, r_cw_inferred)?;
    Ok(LiftEstimate {
        mode,
        r_t,
        r_c,
        r_tw,
        r_tl,
        w,
        ace,
        att,
        r_cw_inferred,
        atl,
        inc,
    })
}

/// Exposed rate minus the pooled rate of all unexposed units (Control and
/// Test losers). Biased by any difference between won and lost units.
pub fn standard_estimator(t: &CountTable, mode: CountMode) -> Result<f64, EstimateError> {
    if t.uniq_tw == 0 {
        return Err(EstimateError::EmptyPopulation(Population::TestWin));
    }
    let unexposed_units = t.uniq_c + t.uniq_tl();
    if unexposed_units == 0 {
        return Err(EstimateError::EmptyPopulation(Population::Unexposed));
    }
    let unexposed = match mode {
        CountMode::Conversions => t.conv_c + t.conv_tl(),
        CountMode::Responders => t.c1 + t.tl1,
    };
    Ok(rates(t, mode).r_tw - rate(unexposed, unexposed_units))
}

/// Estimates for a post-bid run, where every Test unit was exposed and
/// Control units saw a PSA: `ATT = R_T − R_C`.
pub fn postbid_estimates(t: &CountTable, mode: CountMode) -> Result<LiftEstimate, EstimateError> {
    if t.uniq_t == 0 {
        return Err(EstimateError::EmptyPopulation(Population::Test));
    }
    if t.uniq_c == 0 {
        return Err(EstimateError::EmptyPopulation(Population::Control));
    }
    let Rates { r_t, r_c, r_tl, .. } = rates(t, mode);
    let att = r_t - r_c;
    let (atl, inc) = lift_ratios(att, r_t, r_c)?;
    Ok(LiftEstimate {
        mode,
        r_t,
        r_c,
        r_tw: r_t,
        r_tl,
        w: 1.0,
        ace: att,
        att,
        r_cw_inferred: r_c,
        atl,
        inc,
    })
}

/// Rounds half away from zero to whole basis points.
pub fn to_bp(x: f64) -> i64 {
    (x * 1e4).round() as i64
}

/// Rounds half away from zero to whole percent.
pub fn to_pct(x: f64) -> i64 {
    (x * 100.0).round() as i64
}

/// A by-hand calculation where every displayed quantity is rounded before
/// it feeds the next step: rates and ATT in bp, win rate and ratios in
/// percent.
///
/// Useful for explaining a report line by line. Because rounding errors
/// compound, the final ATL/INC may differ by a point or more from the
/// rounded full-precision [`LiftEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RoundedTrace {
    pub r_t_bp: i64,
    pub r_c_bp: i64,
    pub r_tw_bp: i64,
    pub w_pct: i64,
    pub ace_bp: i64,
    pub att_bp: i64,
    pub r_cw_bp: i64,
    pub atl_pct: Option<i64>,
    pub inc_pct: Option<i64>,
}

pub fn rounded_trace(t: &CountTable, mode: CountMode) -> Result<RoundedTrace, EstimateError> {
    let est = point_estimates(t, mode).or_else(|err| match err {
        // The trace recomputes ATL/INC from rounded values itself.
        EstimateError::NonPositiveBaseline(_) | EstimateError::ZeroExposedRate => {
            let Rates {
                r_t,
                r_c,
                r_tw,
                r_tl,
            } = rates(t, mode);
            let w = rate(t.uniq_tw, t.uniq_t);
            Ok(LiftEstimate {
                mode,
                r_t,
                r_c,
                r_tw,
                r_tl,
                w,
                ace: r_t - r_c,
                att: (r_t - r_c) / w,
                r_cw_inferred: r_tw - (r_t - r_c) / w,
                atl: 0.0,
                inc: 0.0,
            })
        }
        other => Err(other),
    })?;
    let r_t_bp = to_bp(est.r_t);
    let r_c_bp = to_bp(est.r_c);
    let r_tw_bp = to_bp(est.r_tw);
    let w_pct = to_pct(est.w);
    let ace_bp = r_t_bp - r_c_bp;
    let att_bp = (ace_bp as f64 * 100.0 / w_pct as f64).round() as i64;
    let r_cw_bp = r_tw_bp - att_bp;
    let ratio =
        |num: i64, den: i64| (den > 0).then(|| (100.0 * num as f64 / den as f64).round() as i64);
    Ok(RoundedTrace {
        r_t_bp,
        r_c_bp,
        r_tw_bp,
        w_pct,
        ace_bp,
        att_bp,
        r_cw_bp,
        atl_pct: ratio(att_bp, r_cw_bp),
        inc_pct: ratio(att_bp, r_tw_bp),
    })
}
