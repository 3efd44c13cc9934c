use std::path::PathBuf;

use fa_service::config::{ConfigError, ServiceConfig};

fn vars(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn defaults() {
    let c = ServiceConfig::default();
    assert_eq!(c.port, 8080);
    assert!(c.model_path.is_none() && c.sidecar_url.is_none());
    assert_eq!(c.pipeline.weights.telemetry, 0.5);
    assert_eq!(ServiceConfig::parse("", "empty").unwrap(), c);
}

#[test]
fn file_values_and_nested_pipeline() {
    let text = r#"
port = 9100
telemetry_dir = "/var/fa/telemetry"
sidecar_url = "http://127.0.0.1:9000"

[pipeline]
window_ms = 600000
top_k = 7

[pipeline.weights]
telemetry = 0.6
retrieval = 0.2
prior = 0.2
"#;
    let c = ServiceConfig::parse(text, "fa.toml").unwrap();
    assert_eq!(c.port, 9100);
    assert_eq!(c.telemetry_dir, Some(PathBuf::from("/var/fa/telemetry")));
    assert_eq!(c.pipeline.window_ms, 600_000);
    assert_eq!(c.pipeline.top_k, 7);
    assert_eq!(c.pipeline.weights.telemetry, 0.6);
    assert_eq!(c.pipeline.max_hypotheses, 3);
}

#[test]
fn errors_name_the_key_path() {
    let err = ServiceConfig::parse("[pipeline]\ntop_k = \"five\"\n", "fa.toml").unwrap_err();
    assert!(
        matches!(&err, ConfigError::Parse { message, .. } if message.starts_with("pipeline.top_k")),
        "{err}"
    );
    let err = ServiceConfig::parse("prot = 1\n", "fa.toml").unwrap_err();
    assert!(err.to_string().contains("prot"), "{err}");
}

#[test]
fn environment_overrides_file() {
    let mut c = ServiceConfig::parse("port = 9100\nsidecar_url = \"http://x\"\n", "fa.toml").unwrap();
    c.apply_env(vars(&[
        ("FA_PORT", "7000"),
        ("FA_WEIGHT_PRIOR", "0.4"),
        ("FA_WINDOW_MS", "1000"),
        ("FA_INDEX_PATH", "/tmp/idx"),
        ("FA_SIDECAR_URL", ""),
        ("FA_UPSERT", "false"),
        ("FA_UNRELATED", "whatever"),
        ("PATH", "/bin"),
    ]))
    .unwrap();
    assert_eq!(c.port, 7000);
    assert_eq!(c.pipeline.weights.prior, 0.4);
    assert_eq!(c.pipeline.window_ms, 1000);
    assert_eq!(c.index_path, Some(PathBuf::from("/tmp/idx")));
    assert_eq!(c.sidecar_url, None);
    assert!(!c.pipeline.upsert);
}

#[test]
fn bad_environment_value_is_reported() {
    let mut c = ServiceConfig::default();
    let err = c.apply_env(vars(&[("FA_PORT", "eighty")])).unwrap_err();
    assert!(matches!(&err, ConfigError::Env { var, .. } if var == "FA_PORT"));
    assert!(err.to_string().contains("eighty"));
}

#[test]
fn load_reports_missing_file() {
    let err = ServiceConfig::load(std::path::Path::new("/nonexistent/fa.toml")).unwrap_err();
    assert!(matches!(err, ConfigError::Read { .. }));
}
