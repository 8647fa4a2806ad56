use serde::{Deserialize, Serialize};

use super::special::chi_square_sf;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalRecord {
    pub case_id: String,
    /// Follow-up time in days.
    pub time: f64,
    /// `true` when death was observed, `false` when censored.
    pub event: bool,
    pub label: Option<String>,
}

impl ClinicalRecord {
    pub fn new(case_id: impl Into<String>, time: f64, event: bool) -> Self {
        Self {
            case_id: case_id.into(),
            time,
            event,
            label: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub time: f64,
    /// `S(t)` just after `time`.
    pub survival: f64,
    /// Number at risk just before `time`.
    pub at_risk: usize,
    pub events: usize,
    pub censored: usize,
}

/// Product-limit step function. The first point is `(0, 1, n)` unless an
/// observation sits at time zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub group: String,
    pub points: Vec<SurvivalPoint>,
}

impl SurvivalCurve {
    /// `S(t)` as a right-continuous step function.
    pub fn survival_at(&self, t: f64) -> f64 {
        let mut s = 1.0;
        for p in &self.points {
            if p.time <= t {
                s = p.survival;
            } else {
                break;
            }
        }
        s
    }

    /// First time with `S(t) ≤ 0.5`.
    pub fn median(&self) -> Option<f64> {
        self.points.iter().find(|p| p.survival <= 0.5).map(|p| p.time)
    }

    pub fn last_time(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.time)
    }

    pub fn last_survival(&self) -> f64 {
        self.points.last().map_or(1.0, |p| p.survival)
    }

    /// `∫₀^τ S(t) dt`.
    pub fn restricted_mean(&self, tau: f64) -> f64 {
        let mut area = 0.0;
        let mut prev_t = 0.0;
        let mut s = 1.0;
        for p in &self.points {
            if p.time >= tau {
                break;
            }
            area += s * (p.time - prev_t);
            prev_t = p.time;
            s = p.survival;
        }
        area + s * (tau - prev_t).max(0.0)
    }
}

fn validate(records: &[ClinicalRecord]) -> Result<()> {
    for r in records {
        if !(r.time >= 0.0) || !r.time.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "case `{}` has invalid survival time {}",
                r.case_id, r.time
            )));
        }
    }
    Ok(())
}

/// Distinct observation times with `(events, censored)` counts, ascending.
fn tally(records: &[&ClinicalRecord]) -> Vec<(f64, usize, usize)> {
    let mut v: Vec<(f64, bool)> = records.iter().map(|r| (r.time, r.event)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    for (t, e) in v {
        match out.last_mut() {
            Some(last) if last.0 == t => {
                if e {
                    last.1 += 1
                } else {
                    last.2 += 1
                }
            }
            _ => out.push((t, e as usize, (!e) as usize)),
        }
    }
    out
}

pub fn km_curve(records: &[ClinicalRecord]) -> Result<SurvivalCurve> {
    km_curve_named(records.iter(), "")
}

pub fn km_curve_named<'a>(
    records: impl IntoIterator<Item = &'a ClinicalRecord>,
    group: &str,
) -> Result<SurvivalCurve> {
    let records: Vec<&ClinicalRecord> = records.into_iter().collect();
    if records.is_empty() {
        return Err(Error::EmptyInput("km_curve"));
    }
    for r in &records {
        validate(std::slice::from_ref(*r))?;
    }
    let table = tally(&records);
    let mut at_risk = records.len();
    let mut s = 1.0;
    let mut points = Vec::with_capacity(table.len() + 1);
    if table[0].0 > 0.0 {
        points.push(SurvivalPoint {
            time: 0.0,
            survival: 1.0,
            at_risk,
            events: 0,
            censored: 0,
        });
    }
    for (t, d, c) in table {
        if d > 0 {
            s *= (at_risk - d) as f64 / at_risk as f64;
        }
        points.push(SurvivalPoint {
            time: t,
            survival: s,
            at_risk,
            events: d,
            censored: c,
        });
        at_risk -= d + c;
    }
    Ok(SurvivalCurve {
        group: group.to_string(),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRankResult {
    pub group_a: String,
    pub group_b: String,
    pub observed: [f64; 2],
    pub expected: [f64; 2],
    pub variance: f64,
    /// `(O_A − E_A)² / V`, one degree of freedom.
    pub statistic: f64,
    pub p_value: f64,
    /// Zero variance, e.g. no informative events.
    pub degenerate: bool,
}

/// Two-group log-rank test with hypergeometric variance.
pub fn logrank_test(a: &[ClinicalRecord], b: &[ClinicalRecord]) -> Result<LogRankResult> {
    logrank_named(a.iter(), b.iter(), "A", "B")
}

pub fn logrank_named<'a>(
    a: impl IntoIterator<Item = &'a ClinicalRecord>,
    b: impl IntoIterator<Item = &'a ClinicalRecord>,
    name_a: &str,
    name_b: &str,
) -> Result<LogRankResult> {
    let a: Vec<&ClinicalRecord> = a.into_iter().collect();
    let b: Vec<&ClinicalRecord> = b.into_iter().collect();
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("logrank_test group"));
    }
    for r in a.iter().chain(&b) {
        validate(std::slice::from_ref(*r))?;
    }
    let mut pooled: Vec<(f64, bool, bool)> = a
        .iter()
        .map(|r| (r.time, r.event, true))
        .chain(b.iter().map(|r| (r.time, r.event, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut n_a = a.len() as f64;
    let mut n_b = b.len() as f64;
    let mut obs = [0.0; 2];
    let mut exp = [0.0; 2];
    let mut var = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let t = pooled[i].0;
        let (mut d_a, mut d_b, mut leave_a, mut leave_b) = (0.0, 0.0, 0.0, 0.0);
        while i < pooled.len() && pooled[i].0 == t {
            let (_, event, in_a) = pooled[i];
            match (event, in_a) {
                (true, true) => d_a += 1.0,
                (true, false) => d_b += 1.0,
                _ => {}
            }
            if in_a {
                leave_a += 1.0
            } else {
                leave_b += 1.0
            }
            i += 1;
        }
        let d = d_a + d_b;
        let n = n_a + n_b;
        if d > 0.0 {
            obs[0] += d_a;
            obs[1] += d_b;
            exp[0] += d * n_a / n;
            exp[1] += d * n_b / n;
            if n > 1.0 {
                var += d * (n_a / n) * (n_b / n) * (n - d) / (n - 1.0);
            }
        }
        n_a -= leave_a;
        n_b -= leave_b;
    }
    let (statistic, p_value, degenerate) = if var > 0.0 {
        let s = (obs[0] - exp[0]).powi(2) / var;
        (s, chi_square_sf(s, 1.0), false)
    } else {
        (0.0, 1.0, true)
    };
    Ok(LogRankResult {
        group_a: name_a.to_string(),
        group_b: name_b.to_string(),
        observed: obs,
        expected: exp,
        variance: var,
        statistic,
        p_value,
        degenerate,
    })
}
