use std::path::{Path, PathBuf};

use causeway::augment::EdaConfig;
use causeway::classifier::{BinaryConfig, ClassWeights};
use causeway::crf::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;
use crate::Cli;

pub const DEFAULT_SEED: u64 = 13;

/// Everything a run may be configured with. Unused sections are ignored by
/// a given subcommand but still echoed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub lenient: bool,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub crf: TrainConfig,
    pub classifier: BinaryConfig,
    pub class_weights: ClassWeights,
    /// EDA settings; the mode's defaults apply when absent.
    pub eda: Option<EdaConfig>,
    pub lexicon: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub slots: Option<PathBuf>,
    pub n: Option<usize>,
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

/// Reads `--config` and applies global flag overrides.
pub fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.lenient |= cli.lenient;
    let seed = cfg.seed();
    cfg.seed = Some(seed);
    cfg.crf.seed = seed;
    cfg.classifier.seed = seed;
    if let Some(eda) = &mut cfg.eda {
        eda.seed = seed;
    }
    Ok(cfg)
}

/// A path the config refers to must exist; otherwise the config is wrong.
pub fn existing(path: Option<&Path>, key: &str) -> Result<PathBuf, Failure> {
    let path = path.ok_or_else(|| Failure::Config(format!("`{key}` is not set")))?;
    if !path.is_file() {
        return Err(Failure::Config(format!(
            "`{key}` file {} does not exist",
            path.display()
        )));
    }
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// `out.jsonl` → `out.jsonl.config.json`, next to the output.
pub fn sidecar(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    output.with_file_name(name)
}
