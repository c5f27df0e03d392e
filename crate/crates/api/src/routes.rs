use std::collections::BTreeSet;

use axum::body::Bytes;
use axum::extract::{RawQuery, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::json;
use vulgd_core::embedder::{retrieve, EmbedderError, ModelId, Origin};
use vulgd_core::export::{
    export_nodes, export_relationships, parse_edge_type, parse_label, parse_props, ExportError, ExportFormat,
};
use vulgd_core::graph::GraphView;
use vulgd_core::query::{run_query, ResultValue};

use crate::error::ApiError;
use crate::{AppState, BASE_PATH, ORIGIN_HEADER};

/// Decoded query string that keeps repeated keys.
struct Params(Vec<(String, String)>);

impl Params {
    fn parse(raw: Option<String>) -> Self {
        Params(
            form_urlencoded::parse(raw.unwrap_or_default().as_bytes())
                .map(|(k, v)| (k.into_owned(), v.into_owned()))
                .collect(),
        )
    }

    fn one(&self, name: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
            .filter(|v| !v.trim().is_empty())
    }

    fn required(&self, name: &str) -> Result<&str, ApiError> {
        self.one(name)
            .ok_or_else(|| ApiError::bad_request("missing parameter", format!("{name} is required")))
    }

    /// Values of `name` and `name[]`, repeated or comma-separated.
    fn list(&self, name: &str) -> Result<Vec<String>, ApiError> {
        let bracketed = format!("{name}[]");
        let raw: Vec<&str> = self
            .0
            .iter()
            .filter(|(k, _)| *k == name || *k == bracketed)
            .map(|(_, v)| v.as_str())
            .collect();
        parse_props(&raw).map_err(export_error)
    }

    fn format(&self) -> Result<ExportFormat, ApiError> {
        self.one("file_format").unwrap_or("csv").parse().map_err(export_error)
    }
}

fn export_error(e: ExportError) -> ApiError {
    let error = match e {
        ExportError::UnknownLabel(_) => "unknown label",
        ExportError::UnknownType(_) => "unknown relationship type",
        ExportError::UnsupportedFormat(_) => "unsupported format",
        ExportError::NoProps | ExportError::BadProp(_) => "invalid properties",
    };
    ApiError::bad_request(error, e.to_string())
}

fn view(state: &AppState) -> Result<GraphView, ApiError> {
    state.store().try_view().ok_or_else(ApiError::busy)
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn download(body: Vec<u8>, format: ExportFormat, name: &str) -> Response {
    let disposition = format!("attachment; filename=\"{name}.{}\"", format.extension());
    let mut resp = body.into_response();
    let h = resp.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static(format.content_type()));
    if let Ok(v) = HeaderValue::from_str(&disposition) {
        h.insert(header::CONTENT_DISPOSITION, v);
    }
    resp
}

pub async fn node_download(State(state): State<AppState>, RawQuery(q): RawQuery) -> Result<Response, ApiError> {
    let p = Params::parse(q);
    let label = parse_label(p.required("node_type")?).map_err(export_error)?;
    let props = p.list("props")?;
    let format = p.format()?;
    let g = view(&state)?;
    let body = blocking(move || export_nodes(&g, label, &props, format).map_err(export_error)).await?;
    Ok(download(body, format, label.as_str()))
}

pub async fn relationship_download(
    State(state): State<AppState>,
    RawQuery(q): RawQuery,
) -> Result<Response, ApiError> {
    let p = Params::parse(q);
    let edge_type = parse_edge_type(p.required("rel_type")?).map_err(export_error)?;
    let props = p.list("props")?;
    let format = p.format()?;
    let g = view(&state)?;
    let body = blocking(move || export_relationships(&g, edge_type, &props, format).map_err(export_error)).await?;
    Ok(download(body, format, edge_type.as_str()))
}

#[derive(Debug, Deserialize)]
pub struct CypherRequest {
    pub query: String,
}

#[derive(Debug, Serialize)]
pub struct CypherResponse {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<ResultValue>>,
    pub row_count: usize,
    pub truncated: bool,
}

pub async fn cypher_query(State(state): State<AppState>, body: Bytes) -> Result<Json<CypherResponse>, ApiError> {
    let req: CypherRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request("invalid body", format!("expected {{\"query\": string}}: {e}")))?;
    let permit = state.query_slots().try_acquire_owned().map_err(|_| ApiError::busy())?;
    let g = view(&state)?;
    let cap = state.settings().cypher_row_cap;
    let resp = blocking(move || {
        let _permit = permit;
        let mut table = run_query(&req.query, &g).map_err(|e| {
            let (status, error) = if e.is_read_only_violation() {
                (StatusCode::FORBIDDEN, "read-only subset")
            } else {
                (StatusCode::BAD_REQUEST, "query error")
            };
            ApiError::new(status, error, e.to_string()).with_position(e.position())
        })?;
        let truncated = table.rows.len() > cap;
        table.rows.truncate(cap);
        Ok(CypherResponse {
            columns: table.columns,
            row_count: table.rows.len(),
            rows: table.rows,
            truncated,
        })
    })
    .await?;
    Ok(Json(resp))
}

fn origin(headers: &HeaderMap) -> Origin {
    match headers.get(ORIGIN_HEADER).and_then(|v| v.to_str().ok()) {
        Some(v) if v.trim().eq_ignore_ascii_case("browser") => Origin::Browser,
        _ => Origin::Api,
    }
}

fn too_large(rows: usize, cap: usize) -> ApiError {
    ApiError::new(
        StatusCode::PAYLOAD_TOO_LARGE,
        "row cap exceeded",
        format!("request covers {rows} rows, the limit is {cap}; page through the year with the ids parameter"),
    )
}

pub async fn llm_embedding(
    State(state): State<AppState>,
    headers: HeaderMap,
    RawQuery(q): RawQuery,
) -> Result<Response, ApiError> {
    let p = Params::parse(q);
    let year: i32 = p
        .required("year")?
        .parse()
        .map_err(|_| ApiError::bad_request("invalid parameter", "year must be an integer"))?;
    let model: ModelId = p
        .one("model")
        .unwrap_or("HASH_DEFAULT")
        .parse()
        .map_err(|e: EmbedderError| ApiError::bad_request("invalid parameter", e.to_string()))?;
    let dim: usize = p
        .required("dim")?
        .parse()
        .map_err(|_| ApiError::bad_request("invalid parameter", "dim must be a positive integer"))?;
    let raw_ids: Vec<String> = p
        .0
        .iter()
        .filter(|(k, _)| k == "ids" || k == "ids[]")
        .flat_map(|(_, v)| v.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect();
    let ids: Option<Vec<String>> = (!raw_ids.is_empty()).then(|| {
        let unique: BTreeSet<String> = raw_ids.into_iter().collect();
        unique.into_iter().collect()
    });
    let cap = state.settings().embedding_row_cap;
    if let Some(ids) = &ids {
        if ids.len() > cap {
            return Err(too_large(ids.len(), cap));
        }
    }
    if dim == 0 || dim > model.native_dim() {
        return Err(ApiError::bad_request(
            "invalid parameter",
            format!("dim must be within 1..={} for {model}", model.native_dim()),
        ));
    }
    let origin = origin(&headers);
    let tiers = state.tiers();
    let resp = blocking(move || {
        let set = tiers.load(year, model).map_err(|e| match e {
            EmbedderError::MissingTier { .. } => ApiError::new(StatusCode::NOT_FOUND, "tier not found", e.to_string()),
            other => ApiError::internal(other.to_string()),
        })?;
        if ids.is_none() && set.rows() > cap {
            return Err(too_large(set.rows(), cap));
        }
        retrieve(&set, dim, origin, ids.as_deref()).map_err(|e| match e {
            EmbedderError::DimOutOfRange { .. } | EmbedderError::ComponentRange { .. } | EmbedderError::Degenerate(_) => {
                ApiError::bad_request("invalid parameter", e.to_string())
            }
            other => ApiError::internal(other.to_string()),
        })
    })
    .await?;
    Ok(Json(resp).into_response())
}

pub async fn docs(State(state): State<AppState>) -> Json<serde_json::Value> {
    let s = state.settings();
    let p = |name: &str, required: bool, description: &str| json!({"name": name, "required": required, "description": description});
    Json(json!({
        "base_path": BASE_PATH,
        "limits": {
            "embedding_row_cap": s.embedding_row_cap,
            "cypher_row_cap": s.cypher_row_cap,
            "rate_limit_per_minute": s.rate_limit_per_minute,
        },
        "errors": "JSON body {error, detail, position?}",
        "endpoints": [
            {
                "path": format!("{BASE_PATH}/docs"),
                "method": "GET",
                "description": "Documentation of query parameters, configurations and limits",
                "params": [],
            },
            {
                "path": format!("{BASE_PATH}/node_download"),
                "method": "GET",
                "description": "Export nodes of one label with selected properties",
                "params": [
                    p("node_type", true, "node label, e.g. Vulnerability"),
                    p("props", true, "property names, repeated or comma-separated"),
                    p("file_format", false, "csv (default) or json"),
                ],
            },
            {
                "path": format!("{BASE_PATH}/relationship_download"),
                "method": "GET",
                "description": "Export relationships of one type with source and target node keys",
                "params": [
                    p("rel_type", true, "relationship type, e.g. EXPLOITS"),
                    p("props", false, "relationship property names"),
                    p("file_format", false, "csv (default) or json"),
                ],
            },
            {
                "path": format!("{BASE_PATH}/cypher_query"),
                "method": "POST",
                "description": "Run a read-only Cypher query; body {\"query\": string}",
                "params": [p("query", true, "query text in the JSON body")],
            },
            {
                "path": format!("{BASE_PATH}/llm_embedding"),
                "method": "GET",
                "description": "Retrieve description embeddings for one year and model",
                "params": [
                    p("year", true, "CVE year"),
                    p("model", false, "HASH_DEFAULT (default), MPNET_LIKE, SECBERT_LIKE or FASTTEXT_LIKE"),
                    p("dim", true, "requested dimensionality"),
                    p("ids", false, "cveIDs to select, repeated or comma-separated"),
                ],
                "headers": [{"name": ORIGIN_HEADER, "description": "set to 'browser' for client-side reduction"}],
            },
        ],
    }))
}

pub async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not found", "no such endpoint; see /api/v1/docs")
}
