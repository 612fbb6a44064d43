//! Resumable, manifest-tracked runner for the eight pipeline stages.
//!
//! Each stage reads the files of the stage before it from the run directory
//! (`output_dir/run_id/`) and writes its own subdirectory. Rerunning a stage
//! clears its directory and every downstream one.

pub mod config;
pub mod manifest;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotator::{annotate_conclusion, AnnotationRecord};
use crate::corpus::{
    keyword_filter, load_corpus, record_manual_check, verify_full_text, verify_title_abstract,
    CorpusError, ManualCheck, PaperEntry, PaperStatus, TruncationEvent,
};
use crate::extraction::{extract_paper, Conclusion, ExtractionError, ExtractionRecord, ScreeningFlag};
use crate::gateway::{
    Gateway, Provider, ProviderRole, RecordingProvider, ReplayProvider, ResponseCache, Role,
};
use crate::predictor::{run_conclusion, AttemptRecord, ConclusionRunResult, PredictError, RunConfig, Strategy};
use crate::report::{self, CellAnalysis, CellInput};
use crate::synthetic::SimulatedProvider;
use crate::variantgen::{build_triple, ConclusionTriple, QuarantinedTriple, TripleOutcome, VariantError};

pub use config::{Overrides, PipelineConfig, ProviderKind};
pub use manifest::{Counts, Manifest, StageRecord, StageStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Verify,
    Extract,
    Variants,
    Predict,
    Annotate,
    Analyze,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Verify,
        Stage::Extract,
        Stage::Variants,
        Stage::Predict,
        Stage::Annotate,
        Stage::Analyze,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Verify => "verify",
            Stage::Extract => "extract",
            Stage::Variants => "variants",
            Stage::Predict => "predict",
            Stage::Annotate => "annotate",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
        }
    }

    fn needs_models(self) -> bool {
        matches!(
            self,
            Stage::Verify | Stage::Extract | Stage::Variants | Stage::Predict | Stage::Annotate
        )
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{stage}: missing input {path}; run the earlier stages first")]
    MissingInput { stage: Stage, path: String },
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
    #[error("{stage}: {message}")]
    FixtureMiss { stage: Stage, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 for configuration errors, 3 for a missing replay fixture, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::FixtureMiss { .. } => 3,
            _ => 2,
        }
    }

    fn stage(stage: Stage, e: impl fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }

    fn from_model(stage: Stage, e: impl fmt::Display, fixture_miss: bool) -> Self {
        if fixture_miss {
            PipelineError::FixtureMiss {
                stage,
                message: e.to_string(),
            }
        } else {
            Self::stage(stage, e)
        }
    }
}

/// A verification answer that could not be read, or a manual decision that
/// could not be applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyFlag {
    pub paper_id: String,
    pub step: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantinedPaper {
    pub paper_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleRow {
    pub paper_id: String,
    #[serde(flatten)]
    pub triple: ConclusionTriple,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantinedTripleRow {
    pub paper_id: String,
    #[serde(flatten)]
    pub triple: QuarantinedTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConclusionRow {
    pub paper_id: String,
    pub conclusion_id: String,
    pub accuracy: f64,
    pub correct: usize,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortedConclusion {
    pub paper_id: String,
    pub conclusion_id: String,
    pub failures: usize,
    pub budget: u32,
    pub last_error: String,
    pub partial: Vec<AttemptRecord>,
}

/// One predictor model run with one strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub model: String,
    pub strategy: Strategy,
    pub name: String,
}

impl Cell {
    pub fn new(model: &str, strategy: Strategy) -> Self {
        let safe: String = model
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-') { c } else { '-' })
            .collect();
        Self {
            model: model.to_string(),
            strategy,
            name: format!("{safe}_{strategy}"),
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("records serialize");
        buf.push(b'\n');
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    std::fs::write(path, buf).map_err(|e| PipelineError::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            PipelineError::io(
                path,
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)),
            )
        })?;
        out.push(item);
    }
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

struct Services {
    gateway: Gateway,
    preprocessor: ProviderRole,
    predictors: HashMap<String, ProviderRole>,
    recorders: Vec<Arc<RecordingProvider>>,
}

/// Drives the stages of one run.
pub struct Pipeline {
    cfg: PipelineConfig,
    run_dir: PathBuf,
    record: Option<PathBuf>,
    services: OnceLock<Services>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let run_dir = cfg.run_dir();
        Ok(Self {
            cfg,
            run_dir,
            record: None,
            services: OnceLock::new(),
        })
    }

    /// Records every model exchange and writes them as fixtures to `path`.
    pub fn record_to(mut self, path: PathBuf) -> Self {
        self.record = Some(path);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn cells(&self) -> Vec<Cell> {
        let p = &self.cfg.predictor;
        p.models
            .iter()
            .flat_map(|m| p.strategies.iter().map(move |s| Cell::new(m, *s)))
            .collect()
    }

    /// Runs every stage in order; with `resume`, intact completed stages are kept.
    pub fn run_all(&self, resume: bool) -> Result<(), PipelineError> {
        let mut manifest = self.open_manifest()?;
        if !resume {
            manifest.drop_from(Stage::Ingest);
            self.clear_from(Stage::Ingest)?;
        }
        for stage in Stage::ALL {
            if resume && manifest.is_intact(stage, &self.run_dir) {
                log::info!("{stage}: up to date, skipping");
                continue;
            }
            self.run_stage_with(stage, &mut manifest)?;
        }
        Ok(())
    }

    /// Runs one stage against the outputs already in the run directory.
    pub fn run_stage(&self, stage: Stage) -> Result<(), PipelineError> {
        let mut manifest = self.open_manifest()?;
        self.run_stage_with(stage, &mut manifest)
    }

    /// Writes recorded exchanges, if recording; merges with nothing on disk.
    pub fn write_recording(&self) -> Result<(), PipelineError> {
        let (Some(path), Some(svc)) = (&self.record, self.services.get()) else {
            return Ok(());
        };
        let mut merged = BTreeMap::new();
        for r in &svc.recorders {
            for rec in r.records() {
                merged.insert(rec.key.clone(), rec);
            }
        }
        let records: Vec<_> = merged.into_values().collect();
        write_jsonl(path, &records)?;
        log::info!("wrote {} fixtures to {}", records.len(), path.display());
        Ok(())
    }

    fn snapshot(&self) -> Result<serde_json::Value, PipelineError> {
        let digest = |p: &Path| manifest::file_digest(&self.cfg.resolve(p));
        let mut v = serde_json::to_value(&self.cfg).expect("config serializes");
        let obj = v.as_object_mut().expect("config is an object");
        obj.remove("output_dir");
        obj.remove("cache");
        obj.insert("corpus".into(), digest(&self.cfg.corpus)?.into());
        for key in ["fixtures", "manual_checks"] {
            let path = match key {
                "fixtures" => &self.cfg.fixtures,
                _ => &self.cfg.manual_checks,
            };
            let value = match path {
                Some(p) => digest(p)?.into(),
                None => serde_json::Value::Null,
            };
            obj.insert(key.into(), value);
        }
        Ok(v)
    }

    fn open_manifest(&self) -> Result<Manifest, PipelineError> {
        let snapshot = self.snapshot()?;
        std::fs::create_dir_all(&self.run_dir).map_err(|e| PipelineError::io(&self.run_dir, e))?;
        match Manifest::load(&self.run_dir)? {
            Some(m) if m.config == snapshot && m.run_id == self.cfg.run_id && m.seed == self.cfg.seed => Ok(m),
            Some(_) => {
                log::warn!("configuration changed since the last run; earlier stage records dropped");
                Ok(Manifest::new(&self.cfg.run_id, self.cfg.seed, snapshot))
            }
            None => Ok(Manifest::new(&self.cfg.run_id, self.cfg.seed, snapshot)),
        }
    }

    fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.run_dir.join(stage.as_str())
    }

    fn clear_from(&self, stage: Stage) -> Result<(), PipelineError> {
        for s in Stage::ALL.into_iter().filter(|s| *s >= stage) {
            let dir = self.stage_dir(s);
            if dir.exists() {
                std::fs::remove_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
            }
        }
        Ok(())
    }

    fn run_stage_with(&self, stage: Stage, manifest: &mut Manifest) -> Result<(), PipelineError> {
        log::info!("{stage}: starting");
        manifest.drop_from(stage);
        self.clear_from(stage)?;
        let dir = self.stage_dir(stage);
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;

        let result = self.execute(stage);
        let outputs = manifest::list_files(&self.run_dir, &dir)?;
        let record = match &result {
            Ok(counts) => StageRecord {
                stage,
                status: StageStatus::Complete,
                error: None,
                outputs,
                counts: counts.clone(),
            },
            Err(e) => StageRecord {
                stage,
                status: StageStatus::Failed,
                error: Some(e.to_string()),
                outputs,
                counts: Counts::new(),
            },
        };
        manifest.record(record);
        manifest.refresh_files(&self.run_dir)?;
        manifest.save(&self.run_dir)?;
        match result {
            Ok(counts) => {
                log::info!("{stage}: done {counts:?}");
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    fn execute(&self, stage: Stage) -> Result<Counts, PipelineError> {
        let svc = if stage.needs_models() {
            Some(self.services(stage)?)
        } else {
            None
        };
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Verify => self.verify(svc.expect("models")),
            Stage::Extract => self.extract(svc.expect("models")),
            Stage::Variants => self.variants(svc.expect("models")),
            Stage::Predict => self.predict(svc.expect("models")),
            Stage::Annotate => self.annotate(svc.expect("models")),
            Stage::Analyze => self.analyze(),
            Stage::Report => self.report(),
        }
    }

    fn services(&self, stage: Stage) -> Result<&Services, PipelineError> {
        if let Some(s) = self.services.get() {
            return Ok(s);
        }
        let built = self.build_services().map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(m),
            other => PipelineError::stage(stage, other),
        })?;
        Ok(self.services.get_or_init(|| built))
    }

    fn build_services(&self) -> Result<Services, PipelineError> {
        let cfg = &self.cfg;
        let mut replay: Option<Arc<dyn Provider>> = None;
        let mut simulated: Option<Arc<dyn Provider>> = None;
        let mut recorders = Vec::new();
        let mut make = |kind: ProviderKind,
                        key_env: &Option<String>,
                        base_url: &Option<String>|
         -> Result<Arc<dyn Provider>, PipelineError> {
            let provider: Arc<dyn Provider> = match kind {
                ProviderKind::Replay => {
                    if replay.is_none() {
                        let path = cfg.resolve(cfg.fixtures.as_ref().expect("validated"));
                        let p = ReplayProvider::load(&path).map_err(|e| {
                            PipelineError::Config(format!("cannot load fixtures {}: {e}", path.display()))
                        })?;
                        replay = Some(Arc::new(p));
                    }
                    replay.clone().expect("just set")
                }
                ProviderKind::Simulated => {
                    if simulated.is_none() {
                        let corpus = load_corpus(&cfg.resolve(&cfg.corpus))
                            .map_err(|e| PipelineError::Config(e.to_string()))?;
                        simulated = Some(Arc::new(SimulatedProvider::new(&corpus)));
                    }
                    simulated.clone().expect("just set")
                }
                ProviderKind::Openai | ProviderKind::Anthropic => {
                    live_provider(kind, key_env.clone().expect("validated"), base_url.clone())?
                }
            };
            Ok(match &self.record {
                Some(_) => {
                    let r = Arc::new(RecordingProvider::new(provider));
                    recorders.push(r.clone());
                    r
                }
                None => provider,
            })
        };

        let pre = ProviderRole::new(Role::Preprocessor, cfg.preprocessor.model.clone());
        let pre_provider = make(
            cfg.preprocessor.provider,
            &cfg.preprocessor.api_key_env,
            &cfg.preprocessor.base_url,
        )?;
        let pred_provider = make(
            cfg.predictor.provider,
            &cfg.predictor.api_key_env,
            &cfg.predictor.base_url,
        )?;
        let cache = match &cfg.cache.dir {
            Some(dir) => {
                let dir = cfg.resolve(dir);
                ResponseCache::open(&dir).map_err(|e| PipelineError::io(&dir, e))?
            }
            None => ResponseCache::in_memory(),
        };
        let mut builder = Gateway::builder()
            .bind(pre.clone(), pre_provider)
            .cache(cache)
            .retry(cfg.retry.policy())
            .max_in_flight(cfg.max_in_flight);
        let mut predictors = HashMap::new();
        for model in &cfg.predictor.models {
            let role = ProviderRole::new(Role::Predictor, model.clone());
            builder = builder.bind(role.clone(), pred_provider.clone());
            predictors.insert(model.clone(), role);
        }
        let gateway = builder.build().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(Services {
            gateway,
            preprocessor: pre,
            predictors,
            recorders,
        })
    }

    fn input(&self, stage: Stage, rel: &str) -> Result<PathBuf, PipelineError> {
        let path = self.run_dir.join(rel);
        if path.exists() {
            Ok(path)
        } else {
            Err(PipelineError::MissingInput {
                stage,
                path: rel.to_string(),
            })
        }
    }

    fn out(&self, stage: Stage, name: &str) -> PathBuf {
        self.stage_dir(stage).join(name)
    }

    fn ingest(&self) -> Result<Counts, PipelineError> {
        let st = Stage::Ingest;
        let mut papers =
            load_corpus(&self.cfg.resolve(&self.cfg.corpus)).map_err(|e| PipelineError::stage(st, e))?;
        for p in &mut papers {
            let to = if keyword_filter(p, &self.cfg.keywords) {
                PaperStatus::KeywordPassed
            } else {
                PaperStatus::Rejected
            };
            p.advance(to).map_err(|e| PipelineError::stage(st, e))?;
        }
        write_jsonl(&self.out(st, "papers.jsonl"), &papers)?;
        let passed = papers.iter().filter(|p| p.status == PaperStatus::KeywordPassed).count();
        Ok(counts(&[
            ("papers", papers.len()),
            ("keyword_passed", passed),
            ("rejected", papers.len() - passed),
        ]))
    }

    fn verify(&self, svc: &Services) -> Result<Counts, PipelineError> {
        let st = Stage::Verify;
        let papers: Vec<PaperEntry> = read_jsonl(&self.input(st, "ingest/papers.jsonl")?)?;
        let gw = &svc.gateway;
        let budget = self.cfg.context_budget_chars;
        type Verified = (PaperEntry, Vec<VerifyFlag>, Option<TruncationEvent>);
        let outcomes: Vec<Result<Verified, CorpusError>> = papers
            .into_par_iter()
            .map(|mut p| {
                let mut flags = Vec::new();
                let mut truncation = None;
                if p.status != PaperStatus::KeywordPassed {
                    return Ok((p, flags, truncation));
                }
                let mut session = gw.open_session(&svc.preprocessor)?;
                match verify_title_abstract(gw, &mut session, &mut p) {
                    Ok(_) => {}
                    Err(CorpusError::UnparseableAnswer { id, response }) => {
                        flags.push(VerifyFlag {
                            paper_id: id,
                            step: "title_abstract".into(),
                            detail: response,
                        });
                        return Ok((p, flags, truncation));
                    }
                    Err(e) => return Err(e),
                }
                if p.status == PaperStatus::Stage1Passed {
                    let mut session = gw.open_session(&svc.preprocessor)?;
                    match verify_full_text(gw, &mut session, &mut p, budget) {
                        Ok((_, ev)) => truncation = ev,
                        Err(CorpusError::UnparseableAnswer { id, response }) => flags.push(VerifyFlag {
                            paper_id: id,
                            step: "full_text".into(),
                            detail: response,
                        }),
                        Err(e) => return Err(e),
                    }
                }
                Ok((p, flags, truncation))
            })
            .collect();

        let mut papers = Vec::new();
        let mut flags = Vec::new();
        let mut truncations = Vec::new();
        for o in outcomes {
            let (p, f, t) = o.map_err(|e| {
                let miss = e.is_fixture_miss();
                PipelineError::from_model(st, e, miss)
            })?;
            papers.push(p);
            flags.extend(f);
            truncations.extend(t);
        }

        let checks = self.manual_checks()?;
        let mut manual = (0, 0);
        for check in checks {
            let Some(p) = papers.iter_mut().find(|p| p.id == check.paper_id) else {
                flags.push(VerifyFlag {
                    paper_id: check.paper_id.clone(),
                    step: "manual_check".into(),
                    detail: "no such paper".into(),
                });
                continue;
            };
            match record_manual_check(p, check.decision, &check.reason) {
                Ok(updated) => {
                    if updated.status == PaperStatus::Rejected {
                        manual.1 += 1;
                    } else {
                        manual.0 += 1;
                    }
                    *p = updated;
                }
                Err(e) => flags.push(VerifyFlag {
                    paper_id: check.paper_id.clone(),
                    step: "manual_check".into(),
                    detail: e.to_string(),
                }),
            }
        }

        write_jsonl(&self.out(st, "papers.jsonl"), &papers)?;
        write_jsonl(&self.out(st, "flags.jsonl"), &flags)?;
        write_jsonl(&self.out(st, "truncations.jsonl"), &truncations)?;
        let at = |s: PaperStatus| papers.iter().filter(|p| p.status == s).count();
        Ok(counts(&[
            ("stage2_passed_unreviewed", at(PaperStatus::Stage2Passed)),
            ("manual_accepted", manual.0),
            ("manual_rejected", manual.1),
            ("rejected", at(PaperStatus::Rejected)),
            ("flagged", flags.len()),
            ("truncated", truncations.len()),
            ("accepted", papers.iter().filter(|p| is_accepted(p)).count()),
        ]))
    }

    fn manual_checks(&self) -> Result<Vec<ManualCheck>, PipelineError> {
        match &self.cfg.manual_checks {
            Some(p) => read_jsonl(&self.cfg.resolve(p)),
            None => Ok(Vec::new()),
        }
    }

    fn extract(&self, svc: &Services) -> Result<Counts, PipelineError> {
        let st = Stage::Extract;
        let papers: Vec<PaperEntry> = read_jsonl(&self.input(st, "verify/papers.jsonl")?)?;
        let accepted: Vec<PaperEntry> = papers.into_iter().filter(is_accepted).collect();
        let gw = &svc.gateway;
        let outcomes: Vec<_> = accepted
            .par_iter()
            .map(|p| extract_paper(gw, &svc.preprocessor, &p.id, &p.full_text))
            .collect();

        let mut records = Vec::new();
        let mut screening: Vec<ScreeningFlag> = Vec::new();
        let mut quarantined = Vec::new();
        for (p, o) in accepted.iter().zip(outcomes) {
            match o {
                Ok((record, flags)) if flags.is_empty() => records.push(record),
                Ok((_, flags)) => {
                    let fields: Vec<&str> = flags.iter().map(|f| f.field.as_str()).collect();
                    quarantined.push(QuarantinedPaper {
                        paper_id: p.id.clone(),
                        reason: format!("settings repeat a conclusion in: {}", fields.join(", ")),
                    });
                    screening.extend(flags);
                }
                Err(ExtractionError::Gateway(e)) => {
                    let miss = e.is_fixture_miss();
                    return Err(PipelineError::from_model(st, format!("{}: {e}", p.id), miss));
                }
                Err(e) => quarantined.push(QuarantinedPaper {
                    paper_id: p.id.clone(),
                    reason: e.to_string(),
                }),
            }
        }
        write_jsonl(&self.out(st, "extractions.jsonl"), &records)?;
        write_jsonl(&self.out(st, "screening_flags.jsonl"), &screening)?;
        write_jsonl(&self.out(st, "quarantined.jsonl"), &quarantined)?;
        Ok(counts(&[
            ("papers", records.len()),
            ("conclusions", records.iter().map(|r| r.conclusions.len()).sum()),
            ("quarantined_papers", quarantined.len()),
            ("screening_flags", screening.len()),
        ]))
    }

    fn variants(&self, svc: &Services) -> Result<Counts, PipelineError> {
        let st = Stage::Variants;
        let records: Vec<ExtractionRecord> = read_jsonl(&self.input(st, "extract/extractions.jsonl")?)?;
        let conclusions: Vec<&Conclusion> = records.iter().flat_map(|r| &r.conclusions).collect();
        let gw = &svc.gateway;
        let phrases = &self.cfg.no_relation_phrases;
        let outcomes: Vec<_> = conclusions
            .par_iter()
            .map(|c| build_triple(gw, &svc.preprocessor, c, phrases))
            .collect();

        let mut admitted = Vec::new();
        let mut quarantined = Vec::new();
        for (c, o) in conclusions.iter().zip(outcomes) {
            let paper_id = c.paper_id.clone();
            match o {
                Ok(TripleOutcome::Admitted(triple)) => admitted.push(TripleRow { paper_id, triple }),
                Ok(TripleOutcome::Quarantined(triple)) => {
                    quarantined.push(QuarantinedTripleRow { paper_id, triple })
                }
                Err(VariantError::Gateway(e)) => {
                    let miss = e.is_fixture_miss();
                    return Err(PipelineError::from_model(st, format!("{}: {e}", c.id), miss));
                }
                Err(e) => quarantined.push(QuarantinedTripleRow {
                    paper_id,
                    triple: QuarantinedTriple {
                        conclusion_id: c.id.clone(),
                        original: c.text.clone(),
                        reasons: vec![e.to_string()],
                    },
                }),
            }
        }
        write_jsonl(&self.out(st, "triples.jsonl"), &admitted)?;
        write_jsonl(&self.out(st, "quarantined.jsonl"), &quarantined)?;
        Ok(counts(&[("admitted", admitted.len()), ("quarantined", quarantined.len())]))
    }

    fn settings_by_paper(&self, stage: Stage) -> Result<BTreeMap<String, ExtractionRecord>, PipelineError> {
        let records: Vec<ExtractionRecord> = read_jsonl(&self.input(stage, "extract/extractions.jsonl")?)?;
        Ok(records.into_iter().map(|r| (r.paper_id.clone(), r)).collect())
    }

    fn predict(&self, svc: &Services) -> Result<Counts, PipelineError> {
        let st = Stage::Predict;
        let triples: Vec<TripleRow> = read_jsonl(&self.input(st, "variants/triples.jsonl")?)?;
        let extractions = self.settings_by_paper(st)?;
        let mut totals = Counts::new();
        for cell in self.cells() {
            let role = &svc.predictors[&cell.model];
            let config = RunConfig {
                strategy: cell.strategy,
                repeats: self.cfg.predictor.repeats,
                model_id: cell.model.clone(),
                rng_seed: self.cfg.seed,
                attempt_failure_budget: self.cfg.predictor.attempt_failure_budget,
            };
            let outcomes: Vec<Result<ConclusionRunResult, PredictError>> = triples
                .par_iter()
                .map(|t| {
                    let settings = &extractions
                        .get(&t.paper_id)
                        .expect("triples come from extracted papers")
                        .settings;
                    run_conclusion(&svc.gateway, role, &t.paper_id, settings, &t.triple, &config)
                })
                .collect();

            let mut attempts = Vec::new();
            let mut rows = Vec::new();
            let mut aborted = Vec::new();
            for (t, o) in triples.iter().zip(outcomes) {
                match o {
                    Ok(r) => {
                        rows.push(ConclusionRow {
                            paper_id: r.paper_id.clone(),
                            conclusion_id: r.conclusion_id.clone(),
                            accuracy: r.accuracy,
                            correct: r.correct_count(),
                            attempts: r.attempts.len(),
                        });
                        attempts.extend(r.attempts);
                    }
                    Err(PredictError::BudgetExceeded {
                        conclusion_id,
                        failures,
                        budget,
                        last,
                        partial,
                    }) => aborted.push(AbortedConclusion {
                        paper_id: t.paper_id.clone(),
                        conclusion_id,
                        failures,
                        budget,
                        last_error: last,
                        partial,
                    }),
                    Err(e) => {
                        let miss = e.is_fixture_miss();
                        return Err(PipelineError::from_model(
                            st,
                            format!("{} {}: {e}", cell.name, t.triple.conclusion_id),
                            miss,
                        ));
                    }
                }
            }
            let dir = self.stage_dir(st).join(&cell.name);
            write_jsonl(&dir.join("attempts.jsonl"), &attempts)?;
            write_jsonl(&dir.join("conclusions.jsonl"), &rows)?;
            write_jsonl(&dir.join("aborted.jsonl"), &aborted)?;
            *totals.entry("cells".into()).or_default() += 1;
            *totals.entry("attempts".into()).or_default() += attempts.len() as u64;
            *totals.entry("conclusions".into()).or_default() += rows.len() as u64;
            *totals.entry("aborted".into()).or_default() += aborted.len() as u64;
        }
        Ok(totals)
    }

    fn annotate(&self, svc: &Services) -> Result<Counts, PipelineError> {
        let st = Stage::Annotate;
        let triples: Vec<TripleRow> = read_jsonl(&self.input(st, "variants/triples.jsonl")?)?;
        let extractions = self.settings_by_paper(st)?;
        let targets: Vec<(&Conclusion, &ExtractionRecord)> = triples
            .iter()
            .map(|t| {
                let rec = &extractions[&t.paper_id];
                let c = rec
                    .conclusions
                    .iter()
                    .find(|c| c.id == t.triple.conclusion_id)
                    .expect("triples come from extracted conclusions");
                (c, rec)
            })
            .collect();
        let outcomes: Vec<_> = targets
            .par_iter()
            .map(|(c, rec)| annotate_conclusion(&svc.gateway, &svc.preprocessor, c, &rec.settings))
            .collect();
        let mut records = Vec::new();
        for ((c, _), o) in targets.iter().zip(outcomes) {
            match o {
                Ok(r) => records.push(r),
                Err(e) => {
                    let miss = e.is_fixture_miss();
                    return Err(PipelineError::from_model(st, format!("{}: {e}", c.id), miss));
                }
            }
        }
        write_jsonl(&self.out(st, "annotations.jsonl"), &records)?;
        let labeled = records.iter().filter(|r| r.is_labeled()).count();
        Ok(counts(&[("labeled", labeled), ("refused", records.len() - labeled)]))
    }

    fn analyze(&self) -> Result<Counts, PipelineError> {
        let st = Stage::Analyze;
        let papers: Vec<PaperEntry> = read_jsonl(&self.input(st, "verify/papers.jsonl")?)?;
        let years: BTreeMap<String, i32> = papers.iter().map(|p| (p.id.clone(), p.year)).collect();
        let annotations: Vec<AnnotationRecord> =
            read_jsonl(&self.input(st, "annotate/annotations.jsonl")?)?;
        let mut fitted = 0;
        for cell in self.cells() {
            let base = format!("predict/{}", cell.name);
            let rows: Vec<ConclusionRow> = read_jsonl(&self.input(st, &format!("{base}/conclusions.jsonl"))?)?;
            let attempts: Vec<AttemptRecord> = read_jsonl(&self.input(st, &format!("{base}/attempts.jsonl"))?)?;
            let mut by_id: BTreeMap<String, Vec<AttemptRecord>> = BTreeMap::new();
            for a in attempts {
                by_id.entry(a.conclusion_id.clone()).or_default().push(a);
            }
            let results: Vec<ConclusionRunResult> = rows
                .into_iter()
                .map(|r| ConclusionRunResult {
                    attempts: by_id.remove(&r.conclusion_id).unwrap_or_default(),
                    paper_id: r.paper_id,
                    conclusion_id: r.conclusion_id,
                    accuracy: r.accuracy,
                })
                .collect();
            let analysis = report::analyze_cell(&CellInput {
                cell: &cell.name,
                strategy: cell.strategy,
                model_id: &cell.model,
                repeats: self.cfg.predictor.repeats,
                results: &results,
                annotations: &annotations,
                years: &years,
                topic_scale: self.cfg.regression.topic_scale,
            })
            .map_err(|e| PipelineError::stage(st, format!("{}: {e}", cell.name)))?;
            if matches!(analysis.regression, report::RegressionOutcome::Fitted { .. }) {
                fitted += 1;
            }
            let mut text = serde_json::to_string_pretty(&analysis).expect("analysis serializes");
            text.push('\n');
            write_text(&self.out(st, &format!("{}.json", cell.name)), &text)?;
        }
        Ok(counts(&[("cells", self.cells().len()), ("regressions_fitted", fitted)]))
    }

    fn report(&self) -> Result<Counts, PipelineError> {
        let st = Stage::Report;
        let mut cells = Vec::new();
        for cell in self.cells() {
            let path = self.input(st, &format!("analyze/{}.json", cell.name))?;
            let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
            let analysis: CellAnalysis =
                serde_json::from_str(&text).map_err(|e| PipelineError::stage(st, format!("{}: {e}", path.display())))?;
            cells.push(analysis);
        }
        let fail = |e: report::ReportError| PipelineError::stage(st, e);
        write_text(&self.out(st, "accuracy_summary.csv"), &report::accuracy_summary_csv(&cells).map_err(fail)?)?;
        for c in &cells {
            let name = &c.cell;
            write_text(
                &self.out(st, &format!("regression_{name}.csv")),
                &report::regression_csv(&c.regression).map_err(fail)?,
            )?;
            write_text(
                &self.out(st, &format!("histogram_conclusion_{name}.csv")),
                &report::histogram_csv(&c.conclusion_histogram).map_err(fail)?,
            )?;
            write_text(
                &self.out(st, &format!("histogram_paper_{name}.csv")),
                &report::histogram_csv(&c.paper_histogram).map_err(fail)?,
            )?;
            write_text(
                &self.out(st, &format!("accuracy_by_year_{name}.csv")),
                &report::accuracy_by_year_csv(&c.accuracy_by_year).map_err(fail)?,
            )?;
        }
        write_text(&self.out(st, "summary.md"), &report::summary_markdown(&self.cfg.run_id, &cells))?;
        Ok(counts(&[("cells", cells.len())]))
    }
}

fn is_accepted(p: &PaperEntry) -> bool {
    matches!(p.status, PaperStatus::Stage2Passed | PaperStatus::ManualAccepted)
}

fn counts(items: &[(&str, usize)]) -> Counts {
    items.iter().map(|(k, v)| (k.to_string(), *v as u64)).collect()
}

#[cfg(feature = "live")]
fn live_provider(
    kind: ProviderKind,
    key_env: String,
    base_url: Option<String>,
) -> Result<Arc<dyn Provider>, PipelineError> {
    use crate::gateway::live::{AnthropicProvider, OpenAiProvider};
    let cfg_err = |e: crate::gateway::ProviderError| PipelineError::Config(e.to_string());
    Ok(match kind {
        ProviderKind::Openai => Arc::new(OpenAiProvider::new(base_url, key_env).map_err(cfg_err)?),
        _ => Arc::new(AnthropicProvider::new(base_url, key_env).map_err(cfg_err)?),
    })
}

#[cfg(not(feature = "live"))]
fn live_provider(
    _kind: ProviderKind,
    _key_env: String,
    _base_url: Option<String>,
) -> Result<Arc<dyn Provider>, PipelineError> {
    Err(PipelineError::Config(
        "this build has no live provider support; enable the `live` feature".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_names_are_path_safe() {
        assert_eq!(Cell::new("gpt-4o/mini", Strategy::Cot).name, "gpt-4o-mini_cot");
        assert_eq!(Cell::new("sim-alpha", Strategy::Basic).name, "sim-alpha_basic");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::Config("x".into()).exit_code(), 1);
        let miss = PipelineError::FixtureMiss {
            stage: Stage::Predict,
            message: "k".into(),
        };
        assert_eq!(miss.exit_code(), 3);
        assert_eq!(PipelineError::stage(Stage::Verify, "boom").exit_code(), 2);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x/rows.jsonl");
        let rows = vec![
            QuarantinedPaper {
                paper_id: "a".into(),
                reason: "r".into(),
            },
            QuarantinedPaper {
                paper_id: "b".into(),
                reason: "s".into(),
            },
        ];
        write_jsonl(&path, &rows).unwrap();
        let back: Vec<QuarantinedPaper> = read_jsonl(&path).unwrap();
        assert_eq!(back, rows);
    }
}
