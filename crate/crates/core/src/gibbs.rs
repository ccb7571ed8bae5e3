//! Gibbs sampler for the joint posterior of the win rate and the three
//! response rates, giving percentile intervals for ATT and ATL.
//!
//! Observed data are responder / non-responder counts of TW, TL and C. The
//! split of Control into winner types (CW) and loser types (CL) is latent.
//! Each iteration imputes that split from the current parameters, then
//! redraws every parameter from its Beta posterior under a uniform
//! `Beta(1, 1)` prior:
//!
//! ```text
//! w    ~ Beta(1 + CW1 + CW0 + TW1 + TW0, 1 + CL1 + CL0 + TL1 + TL0)
//! R_TW ~ Beta(1 + TW1, 1 + TW0)
//! R_CW ~ Beta(1 + CW1, 1 + CW0)
//! R_L  ~ Beta(1 + CL1 + TL1, 1 + CL0 + TL0)
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::estimators::Population;
use crate::model::{CountTable, HiddenCounts};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamVector {
    pub w: f64,
    pub r_tw: f64,
    pub r_cw: f64,
    pub r_l: f64,
}

impl ParamVector {
    pub fn att(&self) -> f64 {
        self.r_tw - self.r_cw
    }

    pub fn atl(&self) -> f64 {
        self.att() / self.r_cw
    }
}

/// How Control non-responders are split between winner and loser types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonResponderSplit {
    /// `P(winner | non-responder) = w(1−R_CW) / [w(1−R_CW) + (1−w)(1−R_L)]`,
    /// the exact conditional under the generative model.
    #[default]
    Posterior,
    /// `(1−w)R_L / [(1−w)R_L + wR_CW]`, weighting non-responders by response
    /// probabilities. Kept for comparison; it does not target the model
    /// posterior and biases R_CW.
    ResponseWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub burn_in: usize,
    pub samples: usize,
    pub seed: u64,
    pub chains: usize,
    pub split: NonResponderSplit,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            samples: 2000,
            seed: 0,
            chains: 1,
            split: NonResponderSplit::Posterior,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GibbsError {
    #[error("population {0:?} has no units")]
    EmptyPopulation(Population),
    #[error("{count} control units to split but both mixture weights are zero")]
    DegenerateProbability { count: u64 },
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Starting point: observed win rate, the Test-winner rate for both
/// winner-type rates, and the Test-loser rate for losers.
///
/// With no Test losers (100% win rate) the loser rate starts at the
/// Control response rate, or 0.5 if Control is empty too.
pub fn init_params(t: &CountTable) -> Result<ParamVector, GibbsError> {
    let tw = t.tw0 + t.tw1;
    let tl = t.tl0 + t.tl1;
    let c = t.c0 + t.c1;
    if tw == 0 {
        return Err(GibbsError::EmptyPopulation(Population::TestWin));
    }
    let r_tw = t.tw1 as f64 / tw as f64;
    let r_l = if tl > 0 {
        t.tl1 as f64 / tl as f64
    } else if c > 0 {
        t.c1 as f64 / c as f64
    } else {
        0.5
    };
    Ok(ParamVector {
        w: tw as f64 / (tw + tl) as f64,
        r_tw,
        r_cw: r_tw,
        r_l,
    })
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 {
        return 0;
    }
    Binomial::new(n, p.clamp(0.0, 1.0))
        .expect("probability clamped to [0, 1]")
        .sample(rng)
}

fn winner_share(winner: f64, loser: f64, count: u64) -> Result<f64, GibbsError> {
    let total = winner + loser;
    if count > 0 && (total.is_nan() || total <= 0.0) {
        return Err(GibbsError::DegenerateProbability { count });
    }
    Ok(if count == 0 { 0.0 } else { winner / total })
}

/// Imputes the winner/loser split of Control responders and non-responders.
pub fn draw_hidden<R: Rng + ?Sized>(
    t: &CountTable,
    p: &ParamVector,
    split: NonResponderSplit,
    rng: &mut R,
) -> Result<HiddenCounts, GibbsError> {
    let responders = winner_share(p.w * p.r_cw, (1.0 - p.w) * p.r_l, t.c1)?;
    let non_responders = match split {
        NonResponderSplit::Posterior => {
            winner_share(p.w * (1.0 - p.r_cw), (1.0 - p.w) * (1.0 - p.r_l), t.c0)?
        }
        NonResponderSplit::ResponseWeighted => {
            winner_share((1.0 - p.w) * p.r_l, p.w * p.r_cw, t.c0)?
        }
    };
    let cw1 = binomial(t.c1, responders, rng);
    let cw0 = binomial(t.c0, non_responders, rng);
    Ok(HiddenCounts {
        cw1,
        cw0,
        cl1: t.c1 - cw1,
        cl0: t.c0 - cw0,
    })
}

/// Posterior Beta parameters `(α, β)` for w, R_TW, R_CW and R_L given the
/// completed counts.
pub fn posterior_shapes(t: &CountTable, h: &HiddenCounts) -> [(f64, f64); 4] {
    let f = |x: u64| x as f64;
    [
        (
            1.0 + f(h.cw1 + h.cw0 + t.tw1 + t.tw0),
            1.0 + f(h.cl1 + h.cl0 + t.tl1 + t.tl0),
        ),
        (1.0 + f(t.tw1), 1.0 + f(t.tw0)),
        (1.0 + f(h.cw1), 1.0 + f(h.cw0)),
        (1.0 + f(h.cl1 + t.tl1), 1.0 + f(h.cl0 + t.tl0)),
    ]
}

fn beta<R: Rng + ?Sized>((a, b): (f64, f64), rng: &mut R) -> f64 {
    Beta::new(a, b)
        .expect("shape parameters are ≥ 1")
        .sample(rng)
}

/// Draws all four parameters from their conjugate posteriors. A zero R_CW
/// (possible only through floating-point underflow) is redrawn, since ATL
/// divides by it.
pub fn draw_params<R: Rng + ?Sized>(t: &CountTable, h: &HiddenCounts, rng: &mut R) -> ParamVector {
    let [w, r_tw, r_cw, r_l] = posterior_shapes(t, h);
    let w = beta(w, rng);
    let r_tw = beta(r_tw, rng);
    let r_cw = loop {
        let draw = beta(r_cw, rng);
        if draw > 0.0 {
            break draw;
        }
    };
    let r_l = beta(r_l, rng);
    ParamVector { w, r_tw, r_cw, r_l }
}

/// Type-7 percentile (linear interpolation between order statistics) of
/// sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Mass above zero of a Gaussian fitted to the ATL draws, Φ(μ/σ).
///
/// Heavy right tails (small Control counts) inflate σ and drag this
/// towards 0.5 even when nearly every draw is positive; see
/// [`posterior_positive`].
pub fn gaussian_confidence(atl_draws: &[f64]) -> f64 {
    let (mean, sd) = mean_sd(atl_draws);
    if sd > 0.0 {
        normal_cdf(mean / sd)
    } else if mean > 0.0 {
        1.0
    } else if mean < 0.0 {
        0.0
    } else {
        0.5
    }
}

/// Fraction of draws above zero, counting exact zeros as half.
pub fn posterior_positive(draws: &[f64]) -> f64 {
    let above = draws.iter().filter(|&&x| x > 0.0).count() as f64;
    let ties = draws.iter().filter(|&&x| x == 0.0).count() as f64;
    (above + 0.5 * ties) / draws.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
}

impl Percentiles {
    pub fn of(draws: &[f64]) -> Self {
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            p5: percentile(&sorted, 0.05),
            p50: percentile(&sorted, 0.50),
            p95: percentile(&sorted, 0.95),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.p5 <= x && x <= self.p95
    }
}

/// One recorded post-burn-in draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Draw {
    pub chain: usize,
    /// Iteration index within the chain, counting from 1 after the
    /// initial point.
    pub iter: usize,
    pub params: ParamVector,
    pub att: f64,
    pub atl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsResult {
    pub config: GibbsConfig,
    pub att: Percentiles,
    pub atl: Percentiles,
    pub att_mean: f64,
    pub atl_mean: f64,
    /// Directional confidence: posterior probability that ATL > 0.
    pub g_conf: f64,
    /// Φ(μ/σ) of a Gaussian fitted to the ATL draws.
    pub g_conf_gaussian: f64,
    pub param_means: ParamVector,
    #[serde(skip)]
    pub draws: Vec<Draw>,
}

impl GibbsResult {
    pub fn att_draws(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.att).collect()
    }

    pub fn atl_draws(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.atl).collect()
    }

    /// Draws as CSV with header `chain,iter,w,r_tw,r_cw,r_l,att,atl`.
    pub fn draws_csv(&self) -> String {
        let mut out = String::from("chain,iter,w,r_tw,r_cw,r_l,att,atl\n");
        for d in &self.draws {
            let p = d.params;
            out.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                d.chain, d.iter, p.w, p.r_tw, p.r_cw, p.r_l, d.att, d.atl
            ));
        }
        out
    }
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn run_single_chain(
    t: &CountTable,
    cfg: &GibbsConfig,
    chain: usize,
) -> Result<Vec<Draw>, GibbsError> {
    let mut rng = chain_rng(cfg.seed, chain);
    let mut params = init_params(t)?;
    let mut draws = Vec::with_capacity(cfg.samples);
    for iter in 1..=cfg.burn_in + cfg.samples {
        let hidden = draw_hidden(t, &params, cfg.split, &mut rng)?;
        params = draw_params(t, &hidden, &mut rng);
        if iter > cfg.burn_in {
            draws.push(Draw {
                chain,
                iter,
                params,
                att: params.att(),
                atl: params.atl(),
            });
        }
    }
    Ok(draws)
}

/// Runs `cfg.chains` independent chains (in parallel), concatenating their
/// post-burn-in draws in chain order.
pub fn run_chain(t: &CountTable, cfg: &GibbsConfig) -> Result<GibbsResult, GibbsError> {
    if cfg.samples == 0 {
        return Err(GibbsError::InvalidConfig("samples must be at least 1"));
    }
    if cfg.burn_in == 0 {
        return Err(GibbsError::InvalidConfig("burn-in must be at least 1"));
    }
    if cfg.chains == 0 {
        return Err(GibbsError::InvalidConfig("chains must be at least 1"));
    }
    let per_chain: Vec<Result<Vec<Draw>, GibbsError>> = (0..cfg.chains)
        .into_par_iter()
        .map(|chain| run_single_chain(t, cfg, chain))
        .collect();
    let mut draws = Vec::with_capacity(cfg.samples * cfg.chains);
    for chain in per_chain {
        draws.extend(chain?);
    }

    let att: Vec<f64> = draws.iter().map(|d| d.att).collect();
    let atl: Vec<f64> = draws.iter().map(|d| d.atl).collect();
    let n = draws.len() as f64;
    let mean_of = |f: fn(&ParamVector) -> f64| draws.iter().map(|d| f(&d.params)).sum::<f64>() / n;
    Ok(GibbsResult {
        config: *cfg,
        att: Percentiles::of(&att),
        atl: Percentiles::of(&atl),
        att_mean: att.iter().sum::<f64>() / n,
        atl_mean: atl.iter().sum::<f64>() / n,
        g_conf: posterior_positive(&atl),
        g_conf_gaussian: gaussian_confidence(&atl),
        param_means: ParamVector {
            w: mean_of(|p| p.w),
            r_tw: mean_of(|p| p.r_tw),
            r_cw: mean_of(|p| p.r_cw),
            r_l: mean_of(|p| p.r_l),
        },
        draws,
    })
}

/// Medians of the first and second half of the draws, and the
/// interquartile range of all of them. A stationary chain has the two
/// medians close relative to the IQR.
pub fn split_half_medians(draws: &[f64]) -> (f64, f64, f64) {
    let mid = draws.len() / 2;
    let median = |xs: &[f64]| Percentiles::of(xs).p50;
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = percentile(&sorted, 0.75) - percentile(&sorted, 0.25);
    (median(&draws[..mid]), median(&draws[mid..]), iqr)
}
