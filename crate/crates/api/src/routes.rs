use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::header::CONTENT_TYPE;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Extension, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use veritrack_core::access::Action;
use veritrack_core::canonical::to_canonical_bytes;
use veritrack_core::command::Command;
use veritrack_core::project::{Answer, ObservationState, ProjectParameterization};
use veritrack_core::status::{
    cc_check, nonconformity_metrics, view_configuration_items, view_item, view_process_status,
};
use veritrack_core::store::{ProjectLedger, Store, StoreError};
use veritrack_core::Role;

use crate::auth::Caller;
use crate::error::ApiError;
use crate::AppState;

type ApiResult = Result<Response, ApiError>;

pub(crate) fn routes() -> Router<AppState> {
    Router::new()
        .route("/norms", get(list_norms).post(upload_norm))
        .route("/projects", get(list_projects).post(create_project))
        .route("/projects/{p}/status", get(project_status))
        .route("/projects/{p}/metrics", get(project_metrics))
        .route("/projects/{p}/processes/{v}", get(process_view))
        .route("/projects/{p}/processes/{v}/items", post(register_item))
        .route("/projects/{p}/checklists/{c}/answers/{q}", put(answer_question))
        .route("/projects/{p}/items/{i}", get(item_view))
        .route("/projects/{p}/items/{i}/observations", post(open_observation))
        .route(
            "/projects/{p}/observations/{o}/transitions",
            post(transition_observation),
        )
        .route("/projects/{p}/evidence", get(evidence))
        .route("/projects/{p}/users/{u}", put(assign_user))
        .fallback(unknown_route)
}

async fn unknown_route() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "UnknownRoute", "no such endpoint")
}

fn canonical<T: Serialize>(status: StatusCode, body: &T) -> Response {
    (
        status,
        [(CONTENT_TYPE, "application/json")],
        to_canonical_bytes(body),
    )
        .into_response()
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid_request(e.to_string()))
}

async fn blocking<T, F>(state: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Store) -> Result<T, ApiError> + Send + 'static,
{
    let store = state.store.clone();
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| {
            ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "StorageFailure",
                e.to_string(),
            )
        })?
}

/// Reads a project after checking the caller may perform `action` there.
async fn read_project<T, F>(
    state: &AppState,
    caller: &Caller,
    project_id: String,
    action: Action,
    f: F,
) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&ProjectLedger) -> Result<T, ApiError> + Send + 'static,
{
    caller.check_project(&project_id)?;
    let user = caller.user_id().to_string();
    blocking(state, move |store| {
        store
            .read(&project_id, |ledger| {
                ledger.project().require(&user, action)?;
                f(ledger)
            })
            .map_err(|e| ApiError::from(e).with("project_id", project_id.as_str()))?
    })
    .await
}

async fn execute(
    state: &AppState,
    caller: &Caller,
    project_id: String,
    command: Command,
    created: bool,
) -> ApiResult {
    caller.check_project(&project_id)?;
    let user = caller.user_id().to_string();
    let executed = blocking(state, move |store| {
        store
            .execute(&project_id, &user, &command)
            .map_err(|e| ApiError::from(e).with("project_id", project_id.as_str()))
    })
    .await?;
    let status = if created {
        StatusCode::CREATED
    } else {
        StatusCode::OK
    };
    Ok(canonical(status, &executed))
}

async fn list_norms(State(state): State<AppState>) -> ApiResult {
    let norms: Vec<_> = state
        .store
        .norms()
        .iter()
        .map(|n| {
            json!({
                "norm_id": n.norm_id,
                "title": n.title,
                "assurance_levels": n.assurance_levels.iter().map(|l| &l.symbol).collect::<Vec<_>>(),
                "processes": n.process_templates.iter().map(|p| &p.process_id).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(canonical(StatusCode::OK, &norms))
}

async fn upload_norm(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    body: Bytes,
) -> ApiResult {
    caller.check_platform(Action::ManageNorms)?;
    let norm = blocking(&state, move |store| {
        store.add_norm(&body).map_err(ApiError::from)
    })
    .await?;
    let warnings: Vec<String> = norm
        .applicability_warnings()
        .iter()
        .map(ToString::to_string)
        .collect();
    Ok(canonical(
        StatusCode::CREATED,
        &json!({"norm_id": norm.norm_id, "warnings": warnings}),
    ))
}

async fn list_projects(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
) -> ApiResult {
    let user = caller.user_id().to_string();
    let rows = blocking(&state, move |store| {
        let mut rows = Vec::new();
        for id in store.project_ids()? {
            if !caller.may_access(&id) {
                continue;
            }
            let row = store.read(&id, |ledger| {
                let p = ledger.project();
                p.require(&user, Action::ReadStatus).ok().map(|role| {
                    json!({
                        "project_id": p.project_id(),
                        "norm_ref": p.parameterization.norm_ref,
                        "assurance_level": p.parameterization.assurance_level,
                        "project_status": cc_check(p).project_status,
                        "role": role,
                    })
                })
            })?;
            rows.extend(row);
        }
        Ok::<_, StoreError>(rows)
    }
    .map_err(ApiError::from))
    .await?;
    Ok(canonical(StatusCode::OK, &rows))
}

async fn create_project(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    body: Bytes,
) -> ApiResult {
    let params: ProjectParameterization = parse(&body)?;
    caller.check_project(&params.project_id)?;
    let user = caller.user_id().to_string();
    let executed = blocking(&state, move |store| {
        let id = params.project_id.clone();
        store
            .create_project(&user, params)
            .map_err(|e| ApiError::from(e).with("project_id", id))
    })
    .await?;
    Ok(canonical(StatusCode::CREATED, &executed))
}

async fn project_status(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Path(p): Path<String>,
) -> ApiResult {
    let report = read_project(&state, &caller, p, Action::ReadStatus, |l| {
        Ok(cc_check(l.project()))
    })
    .await?;
    Ok(canonical(StatusCode::OK, &report))
}

async fn project_metrics(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Path(p): Path<String>,
) -> ApiResult {
    let metrics = read_project(&state, &caller, p, Action::ReadStatus, |l| {
        Ok(nonconformity_metrics(l.project()))
    })
    .await?;
    Ok(canonical(StatusCode::OK, &metrics))
}

async fn process_view(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Path((p, v)): Path<(String, String)>,
) -> ApiResult {
    let body = read_project(&state, &caller, p, Action::ReadAll, move |l| {
        let project = l.project();
        let view = view_process_status(project, &v).map_err(StoreError::from)?;
        let items = view_configuration_items(project, Some(&v)).map_err(StoreError::from)?;
        Ok(json!({"process": view, "items": items}))
    })
    .await?;
    Ok(canonical(StatusCode::OK, &body))
}

async fn item_view(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Path((p, i)): Path<(String, String)>,
) -> ApiResult {
    let view = read_project(&state, &caller, p, Action::ReadAll, move |l| {
        view_item(l.project(), &i).map_err(|e| StoreError::from(e).into())
    })
    .await?;
    Ok(canonical(StatusCode::OK, &view))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisterItemBody {
    item_id: String,
    spec_id: String,
    title: String,
    #[serde(default = "initial_version")]
    version_label: String,
}

fn initial_version() -> String {
    "initial".into()
}

async fn register_item(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Path((p, v)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let b: RegisterItemBody = parse(&body)?;
    let command = Command::RegisterItem {
        process_id: v,
        item_id: b.item_id,
        spec_id: b.spec_id,
        title: b.title,
        version_label: b.version_label,
    };
    execute(&state, &caller, p, command, true).await
}

async fn answer_question(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Path((p, c, q)): Path<(String, String, String)>,
    body: Bytes,
) -> ApiResult {
    let answer: Answer = parse(&body)?;
    let command = Command::AnswerChecklist {
        checklist_id: c,
        question_id: q,
        answer,
    };
    execute(&state, &caller, p, command, false).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OpenObservationBody {
    text: String,
}

async fn open_observation(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Path((p, i)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let b: OpenObservationBody = parse(&body)?;
    let command = Command::OpenObservation {
        item_id: i,
        text: b.text,
    };
    execute(&state, &caller, p, command, true).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionBody {
    to_state: ObservationState,
    comment: String,
}

async fn transition_observation(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Path((p, o)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let b: TransitionBody = parse(&body)?;
    let command = Command::TransitionObservation {
        observation_id: o,
        to_state: b.to_state,
        comment: b.comment,
    };
    execute(&state, &caller, p, command, false).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignUserBody {
    role: Role,
    #[serde(default)]
    display_name: Option<String>,
}

async fn assign_user(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Path((p, u)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let b: AssignUserBody = parse(&body)?;
    let command = Command::AssignUser {
        user_id: u,
        role: b.role,
        display_name: b.display_name,
    };
    execute(&state, &caller, p, command, false).await
}

#[derive(Debug, Deserialize)]
struct EvidenceQuery {
    up_to: Option<u64>,
}

async fn evidence(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Path(p): Path<String>,
    Query(query): Query<EvidenceQuery>,
) -> ApiResult {
    let package = read_project(&state, &caller, p, Action::ReadAll, move |l| {
        l.export_evidence(query.up_to).map_err(ApiError::from)
    })
    .await?;
    Ok(canonical(StatusCode::OK, &package))
}
