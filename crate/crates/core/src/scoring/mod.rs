//! Safety score of an ego across scenario types and risk levels, plus the
//! collision rate / time / distance indicators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::RiskReport;
use crate::sim::SimulationTrace;

/// Scenarios scored per (type, risk level) cell.
pub const DEFAULT_N_S: usize = 20;
pub const K_MU: f64 = 0.5;
pub const K_SIGMA: f64 = 0.1;
/// Risk levels used for the total score unless told otherwise.
pub const DEFAULT_OMEGAS: [f64; 5] = [0.0, 0.3, 0.5, 0.7, 1.0];

/// `(100 / n_s) * sum(1 - adv_norm)`.
pub fn q_cell(reports: &[RiskReport], n_s: usize) -> Result<f64> {
    if reports.len() != n_s {
        return Err(Error::Dimension { expected: n_s, got: reports.len() });
    }
    let sum: f64 = reports.iter().map(|r| 1.0 - r.adv_norm).sum();
    Ok(100.0 / n_s as f64 * sum)
}

/// Gaussian weight of a risk level, peaking at 1 for `omega = 0.5`.
pub fn k_weight(omega: f64) -> f64 {
    (-(omega - K_MU).powi(2) / (2.0 * K_SIGMA * K_SIGMA)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub scenario_id: String,
    pub omega: f64,
    pub q: f64,
}

fn same_omega(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

fn find_cell<'a>(cells: &'a [CellScore], id: &str, omega: f64) -> Option<&'a CellScore> {
    cells.iter().find(|c| c.scenario_id == id && same_omega(c.omega, omega))
}

/// K-weighted mean of the cells over `omega_set` x `scenario_ids`.
pub fn total_score(cells: &[CellScore], omega_set: &[f64], scenario_ids: &[&str]) -> Result<f64> {
    if scenario_ids.is_empty() || omega_set.is_empty() {
        return Err(Error::Empty("score grid".into()));
    }
    let mut grid = Vec::with_capacity(omega_set.len() * scenario_ids.len());
    for &omega in omega_set {
        for id in scenario_ids {
            let cell = find_cell(cells, id, omega).ok_or_else(|| Error::MissingCell {
                scenario: id.to_string(),
                omega,
            })?;
            grid.push((k_weight(omega), cell.q));
        }
    }
    // Offset from the smallest cell so a constant grid comes back exact.
    let base = grid.iter().map(|g| g.1).fold(f64::INFINITY, f64::min);
    let num: f64 = grid.iter().map(|(k, q)| k * (q - base)).sum();
    let den: f64 = grid.iter().map(|g| g.0).sum();
    Ok(base + num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    pub cr: f64,
    pub act_s: f64,
    pub acd_m: f64,
    pub scenarios: usize,
    /// Scenarios with at least one collision.
    pub collisions: usize,
    pub total_time_s: f64,
    pub total_distance_m: f64,
}

impl IndicatorReport {
    pub fn from_totals(scenarios: usize, collisions: usize, total_time_s: f64, total_distance_m: f64) -> Result<Self> {
        if scenarios == 0 {
            return Err(Error::Empty("indicator input".into()));
        }
        let per = |total: f64| if collisions == 0 { f64::INFINITY } else { total / collisions as f64 };
        Ok(Self {
            cr: collisions as f64 / scenarios as f64,
            act_s: per(total_time_s),
            acd_m: per(total_distance_m),
            scenarios,
            collisions,
            total_time_s,
            total_distance_m,
        })
    }
}

pub fn indicators(traces: &[SimulationTrace]) -> Result<IndicatorReport> {
    IndicatorReport::from_totals(
        traces.len(),
        traces.iter().filter(|t| t.has_collision()).count(),
        traces.iter().map(|t| t.sim_time_s).sum(),
        traces.iter().map(|t| t.ego_distance_m).sum(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scenario_id: String,
    pub omega: f64,
    pub q: f64,
    pub indicators: IndicatorReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBook {
    pub cells: Vec<CellSummary>,
    pub weights: Vec<(f64, f64)>,
    pub total: f64,
    pub n_s: usize,
    pub omega_set: Vec<f64>,
}

pub const SUMMARY_HEADER: &str = "scenario_id,omega,Q,K,CR,ACT,ACD,total";

impl ScoreBook {
    /// Fails with the first missing (type, omega) cell.
    pub fn build(cells: Vec<CellSummary>, omega_set: &[f64], scenario_ids: &[&str], n_s: usize) -> Result<Self> {
        let scores: Vec<CellScore> = cells
            .iter()
            .map(|c| CellScore { scenario_id: c.scenario_id.clone(), omega: c.omega, q: c.q })
            .collect();
        let total = total_score(&scores, omega_set, scenario_ids)?;
        Ok(Self {
            weights: omega_set.iter().map(|&w| (w, k_weight(w))).collect(),
            cells,
            total,
            n_s,
            omega_set: omega_set.to_vec(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for c in &self.cells {
            out.push_str(&summary_row(c, self.total));
        }
        out
    }
}

/// One summary line; `total` is whatever the caller has (NaN before the
/// whole grid is known).
pub fn summary_row(c: &CellSummary, total: f64) -> String {
    let i = &c.indicators;
    format!(
        "{},{},{},{},{},{},{},{}\n",
        c.scenario_id,
        c.omega,
        c.q,
        k_weight(c.omega),
        i.cr,
        i.act_s,
        i.acd_m,
        total
    )
}
