//! Typed client for `batchrender-server`.

use batchrender::wire::{
    EnvCreated, EnvStats, ErrorBody, LayoutRequest, Observation, RenderRequest, RenderResponse, ResetRequest,
    StepRequest, StepResponse,
};
use batchrender::{BenchConfig, BenchReport, EnvConfig, TileLayout};
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("{status} {kind}: {message}")]
    Api {
        status: u16,
        kind: String,
        message: String,
    },
}

impl ClientError {
    /// The server's error kind, if the request reached it.
    pub fn kind(&self) -> Option<&str> {
        match self {
            ClientError::Api { kind, .. } => Some(kind),
            ClientError::Http(_) => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    async fn send<T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&impl Serialize>) -> Result<T> {
        let mut req = self.http.request(method, format!("{}{}", self.base, path));
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = check(req.send().await?).await?;
        Ok(resp.json().await?)
    }

    pub async fn health(&self) -> Result<serde_json::Value> {
        self.send(Method::GET, "/healthz", None::<&()>).await
    }

    pub async fn create_env(&self, config: &EnvConfig) -> Result<EnvCreated> {
        self.send(Method::POST, "/v1/envs", Some(config)).await
    }

    pub async fn reset(&self, id: &str, seed: u64) -> Result<Observation> {
        self.send(Method::POST, &format!("/v1/envs/{id}/reset"), Some(&ResetRequest { seed }))
            .await
    }

    pub async fn step(&self, id: &str, actions: &[f64]) -> Result<StepResponse> {
        let body = StepRequest {
            actions: actions.to_vec(),
        };
        self.send(Method::POST, &format!("/v1/envs/{id}/step"), Some(&body)).await
    }

    pub async fn stats(&self, id: &str) -> Result<EnvStats> {
        self.send(Method::GET, &format!("/v1/envs/{id}/stats"), None::<&()>).await
    }

    pub async fn delete_env(&self, id: &str) -> Result<()> {
        let resp = self
            .http
            .delete(format!("{}/v1/envs/{id}", self.base))
            .send()
            .await?;
        check(resp).await.map(|_| ())
    }

    pub async fn render(&self, req: &RenderRequest) -> Result<RenderResponse> {
        self.send(Method::POST, "/v1/render", Some(req)).await
    }

    pub async fn layout(&self, req: &LayoutRequest) -> Result<TileLayout> {
        self.send(Method::POST, "/v1/layout", Some(req)).await
    }

    pub async fn bench(&self, config: &BenchConfig) -> Result<BenchReport> {
        self.send(Method::POST, "/v1/bench", Some(config)).await
    }
}

async fn check(resp: reqwest::Response) -> Result<reqwest::Response> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let text = resp.text().await.unwrap_or_default();
    let body = serde_json::from_str::<ErrorBody>(&text).unwrap_or(ErrorBody {
        kind: if status == StatusCode::NOT_FOUND { "not_found" } else { "http" }.into(),
        message: text,
    });
    Err(ClientError::Api {
        status: status.as_u16(),
        kind: body.kind,
        message: body.message,
    })
}
