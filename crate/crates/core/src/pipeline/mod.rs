//! Run configuration, on-disk layout and the train / generate / score /
//! replay operations behind the command line.
//!
//! ```text
//! <out>/<ls>/ls.toml                   logical scenario used for the run
//! <out>/<ls>/run.toml                  metadata: config hash, seed, version
//! <out>/<ls>/<omega>/scenario_<k>.record
//! <out>/<ls>/<omega>/trace_<k>.csv
//! <out>/<ls>/<omega>/summary.csv       one row; `total` is NaN until scored
//! <out>/summary.csv                    written by `score`
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::naturalness::{ingest_csv, synthetic_events, train_flow, CsvSchema, extract_events, FlowModel, TrainConfig, TrainReport};
use crate::risk::{adv, ttc_series, CollisionLabel, RiskReport};
use crate::scenario::{catalog_entry, parse_scenario_config, to_config_string, ConcreteScenario, LogicalScenario};
use crate::scoring::{q_cell, summary_row, CellSummary, IndicatorReport, ScoreBook, SUMMARY_HEADER};
use crate::search::{objective, run_search, SearchConfig};
use crate::sim::{export::trace_to_csv, simulate, SimulationTrace};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tolerance of the stored-vs-recomputed objective check.
pub const G_TOLERANCE: f64 = 1e-9;

/// Loads a catalog id, or else a scenario config file at that path.
pub fn resolve_ls(source: &str) -> Result<LogicalScenario> {
    if let Some(ls) = catalog_entry(source) {
        return Ok(ls);
    }
    let text = fs::read_to_string(source).map_err(|e| Error::io(source, e))?;
    parse_scenario_config(&text)
}

/// Directory name of a risk level: `0.0`, `0.5`, `0.25`.
pub fn omega_dir(omega: f64) -> String {
    format!("{omega:?}")
}

pub fn cell_dir(out: &Path, ls_id: &str, omega: f64) -> PathBuf {
    out.join(ls_id).join(omega_dir(omega))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub enum TrainSource {
    Csv(PathBuf),
    Synthetic { episodes: usize },
}

/// Ingest or synthesize, extract, train. Too few events surfaces as
/// [`Error::TooFewSamples`].
pub fn train(ls: &LogicalScenario, source: &TrainSource, cfg: &TrainConfig, seed: u64) -> Result<(FlowModel, TrainReport)> {
    let events = match source {
        TrainSource::Csv(path) => {
            let ingested = ingest_csv(path, &CsvSchema::default())?;
            extract_events(&ingested.points, ls)
        }
        TrainSource::Synthetic { episodes } => synthetic_events(ls, *episodes, seed)?,
    };
    train_flow(&ls.id, &events, cfg, seed)
}

/// Everything `generate` needs besides the scenario and model themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub omegas: Vec<f64>,
    pub population: usize,
    pub iterations: usize,
    pub c_spec: f64,
    pub seed: u64,
    /// Scenarios kept per cell.
    pub n_s: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SearchConfig::default();
        Self {
            omegas: vec![0.0, 0.3, 0.5, 0.7, 1.0],
            population: s.population,
            iterations: s.iterations,
            c_spec: s.c_spec,
            seed: 0,
            n_s: crate::scoring::DEFAULT_N_S,
        }
    }
}

impl RunConfig {
    pub fn search_config(&self, omega: f64, threads: usize) -> SearchConfig {
        SearchConfig {
            omega,
            population: self.population,
            iterations: self.iterations,
            c_spec: self.c_spec,
            seed: self.seed,
            threads,
            ..SearchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.omegas.is_empty() {
            return Err(Error::validation("omega", "no risk levels given"));
        }
        for &w in &self.omegas {
            self.search_config(w, 0).validate()?;
        }
        if self.n_s == 0 {
            return Err(Error::validation("n_s", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub ls_id: String,
    pub seed: u64,
    pub model_sha256: String,
    pub config_hash: String,
    pub config: RunConfig,
}

/// One simulated and scored concrete scenario.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub trace: SimulationTrace,
    pub risk: RiskReport,
    pub nat_loglik: f64,
    pub nat_norm: f64,
}

pub fn evaluate(ls: &LogicalScenario, model: &FlowModel, values: &[f64], seed: u64) -> Result<Evaluation> {
    let cs = ConcreteScenario::new(ls, values.to_vec(), seed)?;
    let trace = simulate(ls, &cs)?;
    let risk = adv(&trace)?;
    let nat_loglik = model.log_likelihood(&cs)?;
    Ok(Evaluation {
        trace,
        risk,
        nat_loglik,
        nat_norm: model.nat_norm(nat_loglik),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub ls_id: String,
    pub omega: f64,
    pub index: usize,
    pub seed: u64,
    pub species_id: usize,
    pub values: Vec<f64>,
    pub g: f64,
    pub adv_raw: f64,
    pub adv_norm: f64,
    pub min_ttc_s: f64,
    pub collision_count: usize,
    pub collision_types: Vec<CollisionLabel>,
    pub nat_loglik: f64,
    pub nat_norm: f64,
    pub sim_time_s: f64,
    pub ego_distance_m: f64,
    pub trace: String,
}

impl ScenarioRecord {
    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::validation("record", e.to_string()))
    }

    /// Parses and checks that the stored objective matches its own fields.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        let rec: Self = toml::from_str(&text).map_err(|e| Error::from_toml(&text, e))?;
        let g = objective(rec.adv_norm, rec.nat_norm, rec.omega);
        if !((g - rec.g).abs() <= G_TOLERANCE) {
            return Err(Error::Inconsistent {
                path: path.to_path_buf(),
                message: format!("stored G {} but fields give {g}", rec.g),
            });
        }
        Ok(rec)
    }

    fn risk(&self) -> RiskReport {
        RiskReport {
            min_ttc_s: self.min_ttc_s,
            collision_count: self.collision_count,
            adv_raw: self.adv_raw,
            adv_norm: self.adv_norm,
            collision_types: self.collision_types.clone(),
        }
    }
}

fn indicators_of(records: &[ScenarioRecord]) -> Result<IndicatorReport> {
    IndicatorReport::from_totals(
        records.len(),
        records.iter().filter(|r| r.collision_count > 0).count(),
        records.iter().map(|r| r.sim_time_s).sum(),
        records.iter().map(|r| r.ego_distance_m).sum(),
    )
}

fn cell_summary(ls_id: &str, omega: f64, records: &[ScenarioRecord], n_s: usize) -> Result<CellSummary> {
    let risks: Vec<RiskReport> = records.iter().map(ScenarioRecord::risk).collect();
    Ok(CellSummary {
        scenario_id: ls_id.to_string(),
        omega,
        q: q_cell(&risks, n_s)?,
        indicators: indicators_of(records)?,
    })
}

/// Searches one risk level and writes its cell directory. The top `n_s`
/// scenarios by G are kept; a smaller set is cycled to fill the cell.
pub fn generate_cell(
    ls: &LogicalScenario,
    model: &FlowModel,
    cfg: &RunConfig,
    omega: f64,
    out: &Path,
    threads: usize,
) -> Result<CellSummary> {
    let scfg = cfg.search_config(omega, threads);
    let set = run_search(ls, &scfg, |x| {
        let e = evaluate(ls, model, x, cfg.seed)?;
        Ok((e.risk.adv_norm, e.nat_norm))
    })?;
    let ranked = set.ranked();

    let dir = cell_dir(out, &ls.id, omega);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut records = Vec::with_capacity(cfg.n_s);
    for k in 0..cfg.n_s {
        let s = ranked[k % ranked.len()];
        let e = evaluate(ls, model, &s.values, cfg.seed).map_err(|err| Error::Evaluation {
            values: s.values.clone(),
            message: err.to_string(),
        })?;
        let trace_name = format!("trace_{k}.csv");
        write(&dir.join(&trace_name), &trace_to_csv(&e.trace))?;
        let rec = ScenarioRecord {
            ls_id: ls.id.clone(),
            omega,
            index: k,
            seed: cfg.seed,
            species_id: s.species_id,
            values: s.values.clone(),
            g: objective(e.risk.adv_norm, e.nat_norm, omega),
            adv_raw: e.risk.adv_raw,
            adv_norm: e.risk.adv_norm,
            min_ttc_s: e.risk.min_ttc_s,
            collision_count: e.risk.collision_count,
            collision_types: e.risk.collision_types.clone(),
            nat_loglik: e.nat_loglik,
            nat_norm: e.nat_norm,
            sim_time_s: e.trace.sim_time_s,
            ego_distance_m: e.trace.ego_distance_m,
            trace: trace_name,
        };
        write(&dir.join(format!("scenario_{k}.record")), &rec.to_text()?)?;
        records.push(rec);
    }
    let summary = cell_summary(&ls.id, omega, &records, cfg.n_s)?;
    write(&dir.join("summary.csv"), &format!("{SUMMARY_HEADER}\n{}", summary_row(&summary, f64::NAN)))?;
    Ok(summary)
}

/// Runs every requested risk level for `ls` and writes the run metadata.
pub fn generate(ls: &LogicalScenario, model: &FlowModel, model_bytes: &[u8], cfg: &RunConfig, out: &Path, threads: usize) -> Result<Vec<CellSummary>> {
    cfg.validate()?;
    if model.ls_id != ls.id || model.dim() != ls.dim() {
        return Err(Error::validation(
            "model",
            format!("trained for {} (D = {}), scenario is {} (D = {})", model.ls_id, model.dim(), ls.id, ls.dim()),
        ));
    }
    let root = out.join(&ls.id);
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    write(&root.join("ls.toml"), &to_config_string(ls))?;

    let model_sha256 = sha256_hex(model_bytes);
    let cfg_text = toml::to_string(cfg).map_err(|e| Error::validation("config", e.to_string()))?;
    let meta = RunMetadata {
        tool_version: TOOL_VERSION.to_string(),
        ls_id: ls.id.clone(),
        seed: cfg.seed,
        config_hash: sha256_hex(format!("{}\n{cfg_text}{model_sha256}", ls.id).as_bytes()),
        model_sha256,
        config: cfg.clone(),
    };
    let meta_text = toml::to_string(&meta).map_err(|e| Error::validation("metadata", e.to_string()))?;
    write(&root.join("run.toml"), &meta_text)?;

    cfg.omegas.iter().map(|&w| generate_cell(ls, model, cfg, w, out, threads)).collect()
}

/// Reads back a cell's records in index order, checking each one.
pub fn load_cell(out: &Path, ls_id: &str, omega: f64) -> Result<Vec<ScenarioRecord>> {
    let dir = cell_dir(out, ls_id, omega);
    let mut records = Vec::new();
    for k in 0.. {
        let path = dir.join(format!("scenario_{k}.record"));
        if !path.exists() {
            break;
        }
        records.push(ScenarioRecord::load(&path)?);
    }
    Ok(records)
}

/// Cells of the grid with no summary on disk.
pub fn missing_cells(out: &Path, ids: &[&str], omegas: &[f64]) -> Vec<(String, f64)> {
    ids.iter()
        .flat_map(|id| omegas.iter().map(move |&w| (id.to_string(), w)))
        .filter(|(id, w)| !cell_dir(out, id, *w).join("summary.csv").exists())
        .collect()
}

/// Scores the full grid and writes `<out>/summary.csv`.
pub fn score(out: &Path, ids: &[&str], omegas: &[f64], n_s: usize) -> Result<ScoreBook> {
    if let Some((scenario, omega)) = missing_cells(out, ids, omegas).into_iter().next() {
        return Err(Error::MissingCell { scenario, omega });
    }
    let mut cells = Vec::new();
    for id in ids {
        for &w in omegas {
            cells.push(cell_summary(id, w, &load_cell(out, id, w)?, n_s)?);
        }
    }
    let book = ScoreBook::build(cells, omegas, ids, n_s)?;
    write(&out.join("summary.csv"), &book.to_csv())?;
    Ok(book)
}

pub struct Replay {
    pub trace_path: PathBuf,
    pub ttc_path: PathBuf,
    pub risk: RiskReport,
}

pub fn ttc_csv(trace: &SimulationTrace) -> String {
    let mut out = String::from("time,ttc\n");
    for (step, ttc) in trace.steps.iter().zip(ttc_series(trace)) {
        out.push_str(&format!("{},{}\n", step.time, ttc));
    }
    out
}

/// Re-simulates a stored record from `<cell>/../ls.toml` and writes its
/// trace and TTC series into `dest`.
pub fn replay(record_path: &Path, dest: &Path) -> Result<Replay> {
    let rec = ScenarioRecord::load(record_path)?;
    let ls_path = record_path
        .parent()
        .and_then(Path::parent)
        .map(|p| p.join("ls.toml"))
        .ok_or_else(|| Error::validation("record", "not inside a cell directory"))?;
    let ls = parse_scenario_config(&read(&ls_path)?)?;
    let cs = ConcreteScenario::new(&ls, rec.values.clone(), rec.seed)?;
    let trace = simulate(&ls, &cs)?;
    let risk = adv(&trace)?;
    if risk.adv_norm != rec.adv_norm {
        return Err(Error::Inconsistent {
            path: record_path.to_path_buf(),
            message: format!("replayed adv_norm {} differs from stored {}", risk.adv_norm, rec.adv_norm),
        });
    }
    fs::create_dir_all(dest).map_err(|e| Error::io(dest, e))?;
    let trace_path = dest.join(format!("trace_{}.csv", rec.index));
    let ttc_path = dest.join(format!("ttc_{}.csv", rec.index));
    write(&trace_path, &trace_to_csv(&trace))?;
    write(&ttc_path, &ttc_csv(&trace))?;
    Ok(Replay { trace_path, ttc_path, risk })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::naturalness::FlowModel;

    fn small_run(out: &Path, ls: &LogicalScenario, omegas: Vec<f64>) -> Vec<CellSummary> {
        let model = FlowModel::identity(&ls.id, ls.dim(), 2, [8, 8]);
        let cfg = RunConfig { omegas, population: 6, iterations: 2, seed: 3, n_s: 8, ..RunConfig::default() };
        generate(ls, &model, b"model", &cfg, out, 1).unwrap()
    }

    #[test]
    fn omega_dir_names() {
        assert_eq!(omega_dir(0.0), "0.0");
        assert_eq!(omega_dir(1.0), "1.0");
        assert_eq!(omega_dir(0.25), "0.25");
    }

    #[test]
    fn generate_writes_cells_and_replays() {
        let tmp = tempfile::tempdir().unwrap();
        let ls = catalog_entry("FB").unwrap();
        let cells = small_run(tmp.path(), &ls, vec![0.0, 1.0]);
        assert_eq!(cells.len(), 2);
        for w in [0.0, 1.0] {
            let records = load_cell(tmp.path(), "FB", w).unwrap();
            assert_eq!(records.len(), 8);
            let rec_path = cell_dir(tmp.path(), "FB", w).join("scenario_0.record");
            let out = tmp.path().join("replay");
            let r = replay(&rec_path, &out).unwrap();
            let original = fs::read(cell_dir(tmp.path(), "FB", w).join("trace_0.csv")).unwrap();
            assert_eq!(fs::read(&r.trace_path).unwrap(), original);
            let ttc = fs::read_to_string(&r.ttc_path).unwrap();
            assert_eq!(ttc.lines().count() - 1, ttc_series_len(&rec_path));
        }
        assert!(tmp.path().join("FB/run.toml").exists());
    }

    fn ttc_series_len(rec_path: &Path) -> usize {
        let rec = ScenarioRecord::load(rec_path).unwrap();
        let ls = catalog_entry(&rec.ls_id).unwrap();
        let cs = ConcreteScenario::new(&ls, rec.values, rec.seed).unwrap();
        simulate(&ls, &cs).unwrap().steps.len()
    }

    #[test]
    fn tampered_record_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let ls = catalog_entry("FB").unwrap();
        small_run(tmp.path(), &ls, vec![0.5]);
        let path = cell_dir(tmp.path(), "FB", 0.5).join("scenario_0.record");
        let mut rec = ScenarioRecord::load(&path).unwrap();
        rec.g += 1e-6;
        fs::write(&path, rec.to_text().unwrap()).unwrap();
        assert!(matches!(ScenarioRecord::load(&path), Err(Error::Inconsistent { .. })));
    }

    #[test]
    fn score_reports_missing_cells() {
        let tmp = tempfile::tempdir().unwrap();
        let ls = catalog_entry("FB").unwrap();
        small_run(tmp.path(), &ls, vec![0.5]);
        let missing = missing_cells(tmp.path(), &["FB", "OVTP"], &[0.5]);
        assert_eq!(missing, vec![("OVTP".to_string(), 0.5)]);
        assert!(matches!(score(tmp.path(), &["FB", "OVTP"], &[0.5], 8), Err(Error::MissingCell { .. })));
        let book = score(tmp.path(), &["FB"], &[0.5], 8).unwrap();
        assert!((0.0..=100.0).contains(&book.total));
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let ls = catalog_entry("FB").unwrap();
        let model = FlowModel::identity("OVTP", ls.dim(), 1, [4, 4]);
        assert!(generate(&ls, &model, b"", &RunConfig::default(), tmp.path(), 1).is_err());
    }
}
