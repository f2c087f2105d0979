//! HTTP routes over per-actor engines.
//!
//! Each actor's engine sits behind its own `RwLock`: reads share it, signal
//! and answer posts take it exclusively, and different actors never contend.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use rogue_core::collective::{aggregate, alert, anonymize, CollectiveAlert, EpisodeSignature, PopulationPattern};
use rogue_core::decoherence::{Choice, ClarificationAnswer, ClarificationRequest, EngineMode};
use rogue_core::divergence::RogueCandidate;
use rogue_core::engine::{Engine, TracePoint};
use rogue_core::linalg::ComplexMatrixJson;
use rogue_core::memory::{EpisodeStore, MemoryError, RogueEpisode};
use rogue_core::mpg::{MpgSnapshot, NodeId, RelationKind, SignalEvent};
use rogue_core::quantum::StateVector;
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;

use crate::config::ServiceConfig;
use crate::error::ApiError;

pub struct AppState {
    config: ServiceConfig,
    actors: RwLock<HashMap<String, Arc<RwLock<Engine>>>>,
    store: Mutex<EpisodeStore>,
    signatures: RwLock<Vec<EpisodeSignature>>,
}

pub type Shared = Arc<AppState>;

impl AppState {
    /// Opens the episode log (replaying it into the collective pool).
    pub fn new(config: ServiceConfig) -> Result<Shared, MemoryError> {
        let store = match &config.episode_log {
            Some(path) => EpisodeStore::open(path)?,
            None => EpisodeStore::in_memory(),
        };
        let salt = config.salt.as_bytes();
        let signatures = store.episodes().iter().map(|e| anonymize(e, salt)).collect();
        Ok(Arc::new(AppState {
            config,
            actors: RwLock::new(HashMap::new()),
            store: Mutex::new(store),
            signatures: RwLock::new(signatures),
        }))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    async fn engine(&self, id: &str) -> Result<Arc<RwLock<Engine>>, ApiError> {
        self.actors
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_actor(id))
    }

    async fn record(&self, episode: &RogueEpisode) -> Result<(), ApiError> {
        self.store
            .lock()
            .expect("episode store lock poisoned")
            .record(episode.clone())?;
        let sig = anonymize(episode, self.config.salt.as_bytes());
        self.signatures.write().await.push(sig);
        Ok(())
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/actors", get(list_actors))
        .route("/actors/{id}", axum::routing::put(create_actor))
        .route("/actors/{id}/state", get(get_state))
        .route("/actors/{id}/graph", get(get_graph))
        .route("/actors/{id}/operator", get(get_operator))
        .route("/actors/{id}/divergence", get(get_divergence))
        .route("/actors/{id}/clarifications/pending", get(get_pending))
        .route("/actors/{id}/clarifications/{rid}/answer", post(post_answer))
        .route("/actors/{id}/signals", post(post_signals))
        .route("/actors/{id}/prediction", get(get_prediction))
        .route("/actors/{id}/recommendation", get(get_recommendation))
        .route("/actors/{id}/actions", post(post_action))
        .route("/collective/patterns", get(get_patterns))
        .route("/collective/signatures", post(post_signatures))
        .with_state(state)
}

async fn list_actors(State(app): State<Shared>) -> Json<Vec<String>> {
    let mut ids: Vec<String> = app.actors.read().await.keys().cloned().collect();
    ids.sort();
    Json(ids)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub actor_id: String,
    pub t: u64,
}

async fn create_actor(
    State(app): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<MpgSnapshot>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let Json(snapshot) = body?;
    let t = snapshot.t;
    let mut actors = app.actors.write().await;
    if actors.contains_key(&id) {
        return Err(ApiError::new(StatusCode::CONFLICT, "ActorExists", format!("actor {id} already exists")));
    }
    let engine = Engine::new(id.clone(), snapshot, app.config.engine)?;
    actors.insert(id.clone(), Arc::new(RwLock::new(engine)));
    Ok((StatusCode::CREATED, Json(Created { actor_id: id, t })))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StateView {
    pub actor_id: String,
    pub t: u64,
    #[serde(flatten)]
    pub mode: EngineMode,
    pub snapshot: MpgSnapshot,
    pub state: StateVector,
    pub weights: BTreeMap<NodeId, f64>,
}

fn weights(engine: &Engine) -> BTreeMap<NodeId, f64> {
    engine.weights().iter().map(|(n, w)| (n.clone(), w)).collect()
}

async fn get_state(State(app): State<Shared>, Path(id): Path<String>) -> Result<Json<StateView>, ApiError> {
    let engine = app.engine(&id).await?;
    let e = engine.read().await;
    Ok(Json(StateView {
        actor_id: id,
        t: e.t(),
        mode: e.mode().clone(),
        snapshot: e.snapshot().clone(),
        state: e.state().clone(),
        weights: weights(&e),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: NodeId,
    pub weight: f64,
    pub relevance: f64,
    pub uncertainty: f64,
    pub risk: f64,
    pub phase: f64,
    /// Loading in the latest window operator's dominant direction.
    pub loading: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: RelationKind,
    pub weight: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GraphView {
    pub actor_id: String,
    pub t: u64,
    pub suspended: bool,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

async fn get_graph(State(app): State<Shared>, Path(id): Path<String>) -> Result<Json<GraphView>, ApiError> {
    let engine = app.engine(&id).await?;
    let e = engine.read().await;
    let w = weights(&e);
    let loadings = e.loadings();
    let nodes = e
        .snapshot()
        .nodes
        .iter()
        .map(|(n, f)| GraphNode {
            id: n.clone(),
            weight: w.get(n).copied().unwrap_or(0.0),
            relevance: f.relevance,
            uncertainty: f.uncertainty,
            risk: f.risk,
            phase: f.phase,
            loading: loadings.get(n).copied(),
        })
        .collect();
    let edges = e
        .snapshot()
        .edges
        .iter()
        .map(|(k, f)| GraphEdge {
            from: k.from.clone(),
            to: k.to.clone(),
            kind: k.kind,
            weight: f.weight,
        })
        .collect();
    Ok(Json(GraphView {
        actor_id: id,
        t: e.t(),
        suspended: e.mode().is_suspended(),
        nodes,
        edges,
    }))
}

async fn get_operator(State(app): State<Shared>, Path(id): Path<String>) -> Result<Json<ComplexMatrixJson>, ApiError> {
    let engine = app.engine(&id).await?;
    let e = engine.read().await;
    Ok(Json(e.operator_json()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DivergenceView {
    pub actor_id: String,
    pub trace: Vec<TracePoint>,
}

async fn get_divergence(State(app): State<Shared>, Path(id): Path<String>) -> Result<Json<DivergenceView>, ApiError> {
    let engine = app.engine(&id).await?;
    let e = engine.read().await;
    Ok(Json(DivergenceView {
        actor_id: id,
        trace: e.trace().to_vec(),
    }))
}

async fn get_pending(
    State(app): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<Vec<ClarificationRequest>>, ApiError> {
    let engine = app.engine(&id).await?;
    let e = engine.read().await;
    Ok(Json(e.pending().cloned().into_iter().collect()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerBody {
    pub chosen: Choice,
    /// Defaults to the engine's current step.
    #[serde(default)]
    pub answered_at: Option<u64>,
    #[serde(default)]
    pub free_text: Option<String>,
}

async fn post_answer(
    State(app): State<Shared>,
    Path((id, rid)): Path<(String, String)>,
    body: Result<Json<AnswerBody>, JsonRejection>,
) -> Result<Json<RogueEpisode>, ApiError> {
    let Json(body) = body?;
    let engine = app.engine(&id).await?;
    let mut e = engine.write().await;
    let answer = ClarificationAnswer {
        request_id: rid,
        chosen: body.chosen,
        answered_at: body.answered_at.unwrap_or_else(|| e.t()),
        free_text: body.free_text,
    };
    let episode = e.resolve(answer)?;
    app.record(&episode).await?;
    Ok(Json(episode))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SignalBatch {
    /// Step time; defaults to the latest event time, or the next step.
    #[serde(default)]
    pub t: Option<u64>,
    #[serde(default)]
    pub events: Vec<SignalEvent>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StepView {
    #[serde(flatten)]
    pub point: TracePoint,
    pub candidate: Option<RogueCandidate>,
    /// Request issued by this step, if it suspended the engine.
    pub suspended: Option<String>,
}

async fn post_signals(
    State(app): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<SignalBatch>, JsonRejection>,
) -> Result<Json<StepView>, ApiError> {
    let Json(batch) = body?;
    let engine = app.engine(&id).await?;
    let mut e = engine.write().await;
    let t = batch
        .t
        .or_else(|| batch.events.iter().map(|ev| ev.t).max())
        .unwrap_or(e.t() + 1);
    let out = e.step(t, &batch.events)?;
    Ok(Json(StepView {
        point: out.point,
        candidate: out.candidate,
        suspended: out.suspended,
    }))
}

async fn get_prediction(State(app): State<Shared>, Path(id): Path<String>) -> Result<Json<StateVector>, ApiError> {
    let engine = app.engine(&id).await?;
    let e = engine.read().await;
    Ok(Json(e.predict()?))
}

#[derive(Debug, Deserialize)]
pub struct TopQuery {
    pub top: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Ranked {
    pub node: NodeId,
    pub weight: f64,
}

async fn get_recommendation(
    State(app): State<Shared>,
    Path(id): Path<String>,
    query: Result<Query<TopQuery>, QueryRejection>,
) -> Result<Json<Vec<Ranked>>, ApiError> {
    let Query(q) = query?;
    let engine = app.engine(&id).await?;
    let e = engine.read().await;
    let ranked = e.recommend(q.top.unwrap_or(5))?;
    Ok(Json(ranked.into_iter().map(|(node, weight)| Ranked { node, weight }).collect()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActionBody {
    pub action: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActionView {
    pub message: String,
}

async fn post_action(
    State(app): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<ActionBody>, JsonRejection>,
) -> Result<Json<ActionView>, ApiError> {
    let Json(body) = body?;
    let engine = app.engine(&id).await?;
    let e = engine.read().await;
    Ok(Json(ActionView {
        message: e.act(&body.action)?,
    }))
}

#[derive(Debug, Deserialize)]
pub struct PatternQuery {
    pub min_actors: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PatternsView {
    pub min_actors: usize,
    pub patterns: Vec<PopulationPattern>,
    pub alerts: Vec<CollectiveAlert>,
}

async fn get_patterns(
    State(app): State<Shared>,
    query: Result<Query<PatternQuery>, QueryRejection>,
) -> Result<Json<PatternsView>, ApiError> {
    let Query(q) = query?;
    // Callers may raise the actor floor but never lower it.
    let min_actors = q.min_actors.unwrap_or(0).max(app.config.min_actors);
    let sigs = app.signatures.read().await;
    let patterns = aggregate(&sigs, min_actors);
    let alerts = alert(&patterns, &app.config.alerts);
    Ok(Json(PatternsView {
        min_actors: min_actors.max(2),
        patterns,
        alerts,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Accepted {
    pub accepted: usize,
}

async fn post_signatures(
    State(app): State<Shared>,
    body: Result<Json<Vec<EpisodeSignature>>, JsonRejection>,
) -> Result<(StatusCode, Json<Accepted>), ApiError> {
    let Json(sigs) = body?;
    let n = sigs.len();
    app.signatures.write().await.extend(sigs);
    Ok((StatusCode::ACCEPTED, Json(Accepted { accepted: n })))
}

/// Binds `0.0.0.0:port` and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<(), crate::ServeError> {
    let port = config.port;
    let state = AppState::new(config)?;
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
        .await
        .map_err(|source| crate::ServeError::Bind { port, source })?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(crate::ServeError::Io)
}
