#![allow(dead_code)]

pub mod exposition;
#[path = "../../../core/tests/common/schema.rs"]
pub mod schema;

use std::sync::{Arc, OnceLock};
use std::time::Duration;

use fa_core::analytics::training::train_default;
use fa_core::analytics::MlpModel;
use fa_service::api::{serve, AppState};

pub fn model() -> MlpModel {
    static MODEL: OnceLock<MlpModel> = OnceLock::new();
    MODEL
        .get_or_init(|| train_default(42).expect("training succeeds").model)
        .clone()
}

/// Serve `state` on an ephemeral port from a background runtime.
pub fn start(state: Arc<AppState>) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            serve(listener, state).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(60)))
        .build()
        .into()
}
