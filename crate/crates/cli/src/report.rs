//! Rendering reports as JSON and as one Table-1-style line.

use adlift::estimators::{to_bp, to_pct, CountMode};
use serde::Serialize;
use serde_json::{Number, Value};

use crate::analysis::AnalysisReport;

/// Significant digits kept for every float in JSON output.
pub const FLOAT_DIGITS: usize = 12;

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            let rounded: f64 = format!("{:.*e}", FLOAT_DIGITS - 1, x)
                .parse()
                .expect("formatted float parses");
            if let Some(r) = Number::from_f64(rounded) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Pretty JSON, fields in declaration order, floats at fixed precision.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("report types serialize");
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

pub const TABLE_HEADER: &str = "id,ATL,INC,ATT,gConf,g5,g50,g95,R_T,R_C,R_TW,w,TU,TC,TWU,TWC,CU,CC";

/// One results line: ATL, INC, gConf and the Gibbs percentiles in whole
/// percent, rates and ATT in basis points.
pub fn table_row(id: &str, r: &AnalysisReport) -> String {
    let e = &r.estimate.point;
    let t = &r.counts;
    let (tc, twc, cc) = match e.mode {
        CountMode::Conversions => (t.conv_t, t.conv_tw, t.conv_c),
        CountMode::Responders => (t.tw1 + t.tl1, t.tw1, t.c1),
    };
    let gibbs = match &r.gibbs {
        Some(g) => [g.g_conf, g.atl.p5, g.atl.p50, g.atl.p95]
            .map(|x| to_pct(x).to_string())
            .join(","),
        None => "-,-,-,-".to_string(),
    };
    format!(
        "{id},{},{},{},{gibbs},{},{},{},{},{},{tc},{},{twc},{},{cc}",
        to_pct(e.atl),
        to_pct(e.inc),
        to_bp(e.att),
        to_bp(e.r_t),
        to_bp(e.r_c),
        to_bp(e.r_tw),
        to_pct(e.w),
        t.uniq_t,
        t.uniq_tw,
        t.uniq_c,
    )
}
