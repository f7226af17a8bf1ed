use std::fs;
use std::path::{Path, PathBuf};

use aiwasm_core::chain::GasSchedule;
use serde::Deserialize;

use crate::CliError;

/// Settings shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub cache_root: PathBuf,
    pub data_dir: PathBuf,
    pub chain_id: String,
    pub gas: GasSchedule,
    pub model_id: String,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            cache_root: PathBuf::from("models"),
            data_dir: PathBuf::from(".aiwasm"),
            chain_id: "local-1".into(),
            gas: GasSchedule::default(),
            model_id: "toy-256x16".into(),
        }
    }
}

/// Gas fields that a config file may override.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GasOverrides {
    g_base: Option<u64>,
    g_per_kib_model: Option<u64>,
    g_per_token: Option<u64>,
    g_per_storage_op: Option<u64>,
    tx_gas_limit: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    cache_root: Option<PathBuf>,
    data_dir: Option<PathBuf>,
    chain_id: Option<String>,
    model_id: Option<String>,
    #[serde(default)]
    gas: GasOverrides,
}

/// Values given on the command line or through the environment; these win
/// over the config file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub cache_root: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub chain_id: Option<String>,
    pub model_id: Option<String>,
    pub tx_gas_limit: Option<u64>,
}

pub fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        let at = if at == "." { String::new() } else { format!(" at `{at}`") };
        CliError::Usage(format!("{}{at}: {}", path.display(), e.inner()))
    })
}

impl CliConfig {
    pub fn load(file: Option<&Path>, over: Overrides) -> Result<Self, CliError> {
        let mut cfg = CliConfig::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            let f: ConfigFile = parse_json(path, &text)?;
            let g = &mut cfg.gas;
            g.g_base = f.gas.g_base.unwrap_or(g.g_base);
            g.g_per_kib_model = f.gas.g_per_kib_model.unwrap_or(g.g_per_kib_model);
            g.g_per_token = f.gas.g_per_token.unwrap_or(g.g_per_token);
            g.g_per_storage_op = f.gas.g_per_storage_op.unwrap_or(g.g_per_storage_op);
            g.tx_gas_limit = f.gas.tx_gas_limit.unwrap_or(g.tx_gas_limit);
            cfg.cache_root = f.cache_root.unwrap_or(cfg.cache_root);
            cfg.data_dir = f.data_dir.unwrap_or(cfg.data_dir);
            cfg.chain_id = f.chain_id.unwrap_or(cfg.chain_id);
            cfg.model_id = f.model_id.unwrap_or(cfg.model_id);
        }
        cfg.cache_root = over.cache_root.unwrap_or(cfg.cache_root);
        cfg.data_dir = over.data_dir.unwrap_or(cfg.data_dir);
        cfg.chain_id = over.chain_id.unwrap_or(cfg.chain_id);
        cfg.model_id = over.model_id.unwrap_or(cfg.model_id);
        cfg.gas.tx_gas_limit = over.tx_gas_limit.unwrap_or(cfg.gas.tx_gas_limit);

        if cfg.chain_id.is_empty() {
            return Err(CliError::Usage("chain_id must not be empty".into()));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let dir = std::env::temp_dir().join(format!("aiwasm-cfg-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        fs::write(&path, r#"{"chain_id":"file-1","gas":{"g_per_token":7,"tx_gas_limit":5000}}"#).unwrap();
        let cfg = CliConfig::load(Some(&path), Overrides { tx_gas_limit: Some(9000), ..Default::default() }).unwrap();
        assert_eq!(cfg.chain_id, "file-1");
        assert_eq!(cfg.gas.g_per_token, 7);
        assert_eq!(cfg.gas.tx_gas_limit, 9000);
        assert_eq!(cfg.gas.g_base, 1000);

        fs::write(&path, r#"{"gas":{"g_per_tokens":7}}"#).unwrap();
        match CliConfig::load(Some(&path), Overrides::default()) {
            Err(CliError::Usage(msg)) => assert!(msg.contains("gas"), "{msg}"),
            other => panic!("{other:?}"),
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn empty_chain_id() {
        let over = Overrides { chain_id: Some(String::new()), ..Default::default() };
        assert!(matches!(CliConfig::load(None, over), Err(CliError::Usage(_))));
    }
}
