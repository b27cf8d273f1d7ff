//! End-to-end orchestration: detect, payload, questions, experts, summary,
//! deliberation and report, with every stage output written to the run store.

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use thiserror::Error;

use crate::audit::{tags, AuditSink};
use crate::config::AppConfig;
use crate::deliberation::{
    consolidate, deliberate, render_final_report, BackendIdentity, DeliberationError, DeliberationTranscript,
    Outcome, Panel, Provenance, ReportInputs, SummaryReport,
};
use crate::detector::{detect, Anomaly, AnomalyKind};
use crate::experts::{formulate_questions, ExpertContext, ExpertError, ExpertOutcome, ExpertRoster, QuestionSet};
use crate::gateway::{ChatBackend, Gateway, GatewayError, TemplateSet};
use crate::payload::{build_payload, ValidationPayload};
use crate::providers::{
    FixtureMarketData, FixtureSearch, HttpSearch, KnowledgeBase, MarketData, ProviderBackend, SearchProvider,
    Toolbox, YahooChartClient,
};
use crate::runstore::{new_run_id, Clock, Redactor, RunHandle, RunStore, RunStoreError, StoredEvent};
use crate::series::{load_metadata, load_series, DailySeries, SeriesFormat, SeriesMetadata};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Input(String),
    #[error("no anomalies")]
    NoAnomalies { run_id: Option<String> },
    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String, run_id: String },
    #[error("audit failure: {0}")]
    Audit(String),
}

impl PipelineError {
    /// 1 stage failure, 2 input error, 3 no anomalies, 4 audit failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Stage { .. } => 1,
            Self::Input(_) => 2,
            Self::NoAnomalies { .. } => 3,
            Self::Audit(_) => 4,
        }
    }
}

impl From<RunStoreError> for PipelineError {
    fn from(e: RunStoreError) -> Self {
        Self::Audit(e.to_string())
    }
}

fn input(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Input(e.to_string())
}

/// What the run starts from.
pub enum RunSource {
    Series { series: DailySeries, metadata: SeriesMetadata },
    Payload(ValidationPayload),
}

impl RunSource {
    /// Loads series and metadata named by `config.inputs`.
    pub fn from_config(config: &AppConfig) -> Result<Self, PipelineError> {
        let series_path = config
            .inputs
            .series
            .as_ref()
            .ok_or_else(|| input("no series file given"))?;
        let metadata_path = config
            .inputs
            .metadata
            .as_ref()
            .ok_or_else(|| input("no metadata file given"))?;
        let mut series = load_series(series_path, SeriesFormat::from_path(series_path)).map_err(input)?;
        if let Some(id) = &config.inputs.series_id {
            series = series.with_id(id.clone()).map_err(input)?;
        }
        let metadata = load_metadata(metadata_path).map_err(input)?;
        Ok(Self::Series { series, metadata })
    }

    pub fn series_id(&self) -> &str {
        match self {
            Self::Series { series, .. } => series.series_id(),
            Self::Payload(p) => &p.series_id,
        }
    }

    pub fn metadata(&self) -> &SeriesMetadata {
        match self {
            Self::Series { metadata, .. } => metadata,
            Self::Payload(p) => &p.metadata,
        }
    }
}

/// Anomalies implied by a payload file: values become outliers without a
/// z-score, nulls become missing observations.
pub fn anomalies_from_payload(payload: &ValidationPayload) -> Vec<Anomaly> {
    payload
        .data
        .iter()
        .map(|(date, value)| match value {
            Some(v) => Anomaly {
                date: *date,
                kind: AnomalyKind::Outlier,
                observed_value: Some(*v),
                z_score: None,
            },
            None => Anomaly::missing(*date),
        })
        .collect()
}

/// Everything built from configuration before a run directory exists.
struct Components {
    backend: Arc<dyn ChatBackend>,
    templates: TemplateSet,
    search: Arc<dyn SearchProvider>,
    market: Arc<dyn MarketData>,
    knowledge: Arc<KnowledgeBase>,
    panel: Panel,
    redactor: Redactor,
}

fn secret_from_env(var: &Option<String>) -> Option<String> {
    var.as_ref().and_then(|v| std::env::var(v).ok())
}

impl Components {
    fn build(config: &AppConfig) -> Result<Self, PipelineError> {
        config.validate().map_err(input)?;
        let backend = Gateway::backend_from_config(&config.gateway).map_err(input)?;
        let templates = Gateway::templates_from_config(&config.gateway).map_err(input)?;
        let p = &config.providers;
        let timeout = Duration::from_secs(p.timeout_secs.max(1));
        let (search, market): (Arc<dyn SearchProvider>, Arc<dyn MarketData>) = match p.backend {
            ProviderBackend::Fixture => (
                Arc::new(FixtureSearch::load(p.search_corpus.as_ref().expect("validated")).map_err(input)?),
                Arc::new(FixtureMarketData::load(p.closes.as_ref().expect("validated")).map_err(input)?),
            ),
            ProviderBackend::Live => (
                Arc::new(HttpSearch::new(
                    p.search_url.as_deref().expect("validated"),
                    secret_from_env(&p.search_api_key_env),
                    timeout,
                )),
                Arc::new(YahooChartClient::new(&p.market_url, timeout)),
            ),
        };
        let knowledge = KnowledgeBase::load_with_window(
            p.knowledge_dir.as_ref().expect("validated"),
            p.knowledge_excerpt_chars,
        )
        .map_err(input)?;
        let panel = Panel::from_config(&config.deliberation.panel).map_err(input)?;

        let mut redactor = Redactor::new();
        let secrets = config
            .interpolated
            .iter()
            .cloned()
            .chain(secret_from_env(&config.gateway.api_key_env))
            .chain(secret_from_env(&p.search_api_key_env));
        for secret in secrets {
            redactor = redactor.with_secret(&secret);
        }
        Ok(Self {
            backend,
            templates,
            search,
            market,
            knowledge: Arc::new(knowledge),
            panel,
            redactor,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub report_path: PathBuf,
    pub outcome: Outcome,
    pub report: String,
}

struct ActiveRun {
    handle: Arc<RunHandle>,
    run_id: String,
}

impl ActiveRun {
    fn record(&self, stage: &str, payload: Value) -> Result<(), PipelineError> {
        self.handle
            .record(stage, payload)
            .map(|_| ())
            .map_err(|e| PipelineError::Audit(e.to_string()))
    }

    /// Records the failure, seals the run and returns the stage error.
    fn fail(&self, stage: &str, message: String) -> PipelineError {
        if let Err(e) = self.record(tags::STAGE_ERROR, json!({ "stage": stage, "message": message })) {
            return e;
        }
        if let Err(e) = self.handle.seal("failed") {
            return e.into();
        }
        PipelineError::Stage {
            stage: stage.to_string(),
            message,
            run_id: self.run_id.clone(),
        }
    }
}

fn gateway_audit(e: &GatewayError) -> Option<PipelineError> {
    matches!(e, GatewayError::Audit(_)).then(|| PipelineError::Audit(e.to_string()))
}

fn expert_error(run: &ActiveRun, stage: &str, e: ExpertError) -> PipelineError {
    if e.is_audit_failure() {
        return PipelineError::Audit(e.to_string());
    }
    run.fail(stage, e.to_string())
}

fn deliberation_error(run: &ActiveRun, stage: &str, e: DeliberationError) -> PipelineError {
    if let DeliberationError::Gateway(g) = &e {
        if let Some(audit) = gateway_audit(g) {
            return audit;
        }
    }
    run.fail(stage, e.to_string())
}

fn to_value(v: &impl serde::Serialize) -> Value {
    serde_json::to_value(v).expect("stage output serializes")
}

/// Runs the whole pipeline for `source` and seals the run directory.
pub fn run_pipeline(config: &AppConfig, source: RunSource, clock: Clock) -> Result<RunOutput, PipelineError> {
    let components = Components::build(config)?;
    let digest = config.digest();
    let run_id = new_run_id(&clock, &digest);
    let store = RunStore::new(&config.output.run_root);
    let handle = Arc::new(store.create_run(&run_id, &digest, clock, components.redactor.clone())?);
    let run = ActiveRun {
        handle: handle.clone(),
        run_id: run_id.clone(),
    };
    let audit: Arc<dyn AuditSink> = handle.clone();
    let gateway = Gateway::from_parts(&config.gateway, components.backend.clone(), components.templates.clone(), audit.clone());
    let toolbox = Toolbox::new(
        components.search.clone(),
        components.market.clone(),
        components.knowledge.clone(),
        audit,
    );

    let mut backends = vec![BackendIdentity {
        component: "gateway".into(),
        identity: components.backend.identity(),
    }];
    backends.extend(
        toolbox
            .identities()
            .into_iter()
            .map(|(component, identity)| BackendIdentity { component, identity }),
    );
    let provenance = Provenance {
        run_id: run_id.clone(),
        config_digest: digest.clone(),
        backends,
    };
    let series_id = source.series_id().to_string();
    let metadata = source.metadata().clone();
    run.record(
        tags::STAGE_RUN_START,
        json!({
            "series_id": series_id,
            "series_title": metadata.title,
            "provenance": provenance,
            "config": config.audit_view(),
        }),
    )?;

    let (anomalies, payload) = match source {
        RunSource::Series { series, metadata } => {
            let anomalies = match detect(&series, &config.detection) {
                Ok(a) => a,
                Err(e) => return Err(run.fail("detect", e.to_string())),
            };
            run.record(
                tags::STAGE_DETECT,
                json!({ "source": "series", "observations": series.len(), "anomalies": anomalies }),
            )?;
            if anomalies.is_empty() {
                handle.seal("no_anomalies")?;
                return Err(PipelineError::NoAnomalies { run_id: Some(run_id) });
            }
            let payload = match build_payload(series.series_id(), &anomalies, &metadata) {
                Ok(p) => p,
                Err(e) => return Err(run.fail("payload", e.to_string())),
            };
            (anomalies, payload)
        }
        RunSource::Payload(payload) => {
            let anomalies = anomalies_from_payload(&payload);
            run.record(
                tags::STAGE_DETECT,
                json!({ "source": "payload", "anomalies": anomalies }),
            )?;
            (anomalies, payload)
        }
    };
    run.record(tags::STAGE_PAYLOAD, json!({ "payload": payload }))?;

    let questions = formulate_questions(&payload, &gateway).map_err(|e| expert_error(&run, "questions", e))?;
    run.record(tags::STAGE_QUESTIONS, to_value(&questions))?;

    let ctx = ExpertContext {
        gateway: &gateway,
        toolbox: &toolbox,
        payload: &payload,
        settings: &config.experts,
    };
    let outcomes = ExpertRoster::standard()
        .run_all(&questions, &ctx)
        .map_err(|e| expert_error(&run, "experts", e))?;
    run.record(tags::STAGE_FINDINGS, json!({ "outcomes": outcomes }))?;

    let summary = consolidate(&questions, &outcomes, &gateway).map_err(|e| deliberation_error(&run, "summary", e))?;
    run.record(tags::STAGE_SUMMARY, to_value(&summary))?;

    let transcript = deliberate(
        &summary,
        &metadata.title,
        &components.panel,
        &gateway,
        config.deliberation.max_rounds,
    )
    .map_err(|e| deliberation_error(&run, "deliberation", e))?;
    run.record(tags::STAGE_DELIBERATION, to_value(&transcript))?;

    let report = render_final_report(&ReportInputs {
        series_id: &series_id,
        series_title: &metadata.title,
        anomalies: &anomalies,
        questions: &questions,
        outcomes: &outcomes,
        summary: &summary,
        transcript: &transcript,
        provenance: &provenance,
    });
    run.record(tags::STAGE_REPORT, json!({ "report": report }))?;
    handle.seal(transcript.outcome.as_str())?;

    let report_path = config
        .output
        .report_path
        .clone()
        .unwrap_or_else(|| handle.dir().join("report.md"));
    if let Some(parent) = report_path.parent() {
        fs::create_dir_all(parent).map_err(|e| PipelineError::Audit(format!("{}: {e}", parent.display())))?;
    }
    fs::write(&report_path, &report).map_err(|e| PipelineError::Audit(format!("{}: {e}", report_path.display())))?;

    Ok(RunOutput {
        run_id,
        run_dir: handle.dir().to_path_buf(),
        report_path,
        outcome: transcript.outcome,
        report,
    })
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Store(#[from] RunStoreError),
    #[error("run has no `{0}` event; it did not complete")]
    MissingStage(String),
    #[error("event {sequence} ({stage}) is malformed: {message}")]
    Malformed { sequence: u64, stage: String, message: String },
}

fn stage_event<'a>(events: &'a [StoredEvent], stage: &str) -> Result<&'a StoredEvent, ReplayError> {
    events
        .iter()
        .rev()
        .find(|e| e.stage == stage)
        .ok_or_else(|| ReplayError::MissingStage(stage.to_string()))
}

fn field<T: DeserializeOwned>(event: &StoredEvent, pointer: &str) -> Result<T, ReplayError> {
    let value = event.payload.pointer(pointer).cloned().unwrap_or(Value::Null);
    serde_json::from_value(value).map_err(|e| ReplayError::Malformed {
        sequence: event.sequence,
        stage: event.stage.clone(),
        message: format!("{pointer}: {e}"),
    })
}

/// Re-renders the final report of a sealed run from its stored events alone.
pub fn replay(store: &RunStore, run_id: &str) -> Result<String, ReplayError> {
    let (_, events) = store.load_sealed(run_id)?;
    let start = stage_event(&events, tags::STAGE_RUN_START)?;
    let series_id: String = field(start, "/series_id")?;
    let series_title: String = field(start, "/series_title")?;
    let provenance: Provenance = field(start, "/provenance")?;
    let anomalies: Vec<Anomaly> = field(stage_event(&events, tags::STAGE_DETECT)?, "/anomalies")?;
    let questions: QuestionSet = field(stage_event(&events, tags::STAGE_QUESTIONS)?, "")?;
    let outcomes: Vec<ExpertOutcome> = field(stage_event(&events, tags::STAGE_FINDINGS)?, "/outcomes")?;
    let summary: SummaryReport = field(stage_event(&events, tags::STAGE_SUMMARY)?, "")?;
    let transcript: DeliberationTranscript = field(stage_event(&events, tags::STAGE_DELIBERATION)?, "")?;
    Ok(render_final_report(&ReportInputs {
        series_id: &series_id,
        series_title: &series_title,
        anomalies: &anomalies,
        questions: &questions,
        outcomes: &outcomes,
        summary: &summary,
        transcript: &transcript,
        provenance: &provenance,
    }))
}

/// The report text stored in a sealed run's `stage.report` event.
pub fn stored_report(store: &RunStore, run_id: &str) -> Result<String, ReplayError> {
    let (_, events) = store.load_sealed(run_id)?;
    field(stage_event(&events, tags::STAGE_REPORT)?, "/report")
}
