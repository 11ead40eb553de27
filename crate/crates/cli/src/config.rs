//! Engine configuration, layered: built-in defaults, then the config file,
//! then environment variables (LLM endpoint and token), then flags.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use entscore::extraction::{WorkerConnection, WorkerPool};
use entscore::llm::BackendKind;
use entscore::{Extractor, Lexicon, LlmConfig, SectionSelector, Weights};
use serde::Deserialize;

/// Where entities come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtractorSpec {
    /// A phrase lexicon; `None` is the bundled one.
    Lexicon(Option<PathBuf>),
    /// A running NER worker reachable over TCP.
    Tcp(String),
    /// A NER worker started as a subprocess speaking over stdio.
    Spawn(Vec<String>),
}

impl FromStr for ExtractorSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "lexicon" {
            return Ok(Self::Lexicon(None));
        }
        if let Some(path) = s.strip_prefix("lexicon:") {
            return Ok(Self::Lexicon(Some(PathBuf::from(path))));
        }
        if let Some(addr) = s.strip_prefix("tcp:") {
            return Ok(Self::Tcp(addr.to_string()));
        }
        if let Some(cmd) = s.strip_prefix("spawn:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err("spawn: needs a command".into());
            }
            return Ok(Self::Spawn(argv));
        }
        Err(format!("unknown extractor {s:?} (lexicon, lexicon:PATH, tcp:HOST:PORT, spawn:COMMAND)"))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileWeights {
    mismatch: Option<f64>,
    missing: Option<f64>,
    surplus: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileLlm {
    backend: Option<String>,
    base_url: Option<String>,
    model_name: Option<String>,
    temperature: Option<f64>,
    max_retries: Option<u32>,
    timeout_secs: Option<f64>,
    max_in_flight: Option<usize>,
    api_token: Option<String>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    extractor: Option<String>,
    section: Option<String>,
    concurrency: Option<usize>,
    worker_timeout_secs: Option<f64>,
    #[serde(default)]
    weights: FileWeights,
    #[serde(default)]
    llm: FileLlm,
}

/// Flag values that override the file. `None` means "not given".
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub extractor: Option<String>,
    pub llm: Option<String>,
    pub weights: Option<String>,
    pub section: Option<String>,
    pub concurrency: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub extractor: ExtractorSpec,
    pub llm: LlmConfig,
    pub weights: Weights,
    pub section: SectionSelector,
    pub concurrency: usize,
    pub worker_timeout: Duration,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            extractor: ExtractorSpec::Lexicon(None),
            llm: LlmConfig::default(),
            weights: Weights::default(),
            section: SectionSelector::Both,
            concurrency: 1,
            worker_timeout: Duration::from_secs(30),
        }
    }
}

fn apply_llm_flag(llm: &mut LlmConfig, value: &str) -> Result<()> {
    if value.starts_with("http://") || value.starts_with("https://") {
        llm.backend = BackendKind::Http;
        llm.base_url = Some(value.to_string());
    } else {
        llm.backend = value.parse().map_err(anyhow::Error::msg)?;
    }
    Ok(())
}

impl EngineConfig {
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let file = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str::<FileConfig>(&text).with_context(|| format!("parsing config {}", path.display()))?
            }
            None => FileConfig::default(),
        };
        Self::resolve(file, flags)
    }

    fn resolve(file: FileConfig, flags: &Overrides) -> Result<Self> {
        let mut cfg = Self::default();

        if let Some(s) = &file.extractor {
            cfg.extractor = s.parse().map_err(anyhow::Error::msg)?;
        }
        if let Some(s) = &file.section {
            cfg.section = s.parse().map_err(anyhow::Error::msg)?;
        }
        if let Some(n) = file.concurrency {
            cfg.concurrency = n;
        }
        if let Some(secs) = file.worker_timeout_secs {
            if !(secs.is_finite() && secs > 0.0) {
                bail!("worker_timeout_secs must be positive");
            }
            cfg.worker_timeout = Duration::from_secs_f64(secs);
        }
        let w = file.weights;
        cfg.weights = Weights::new(
            w.mismatch.unwrap_or(cfg.weights.mismatch),
            w.missing.unwrap_or(cfg.weights.missing),
            w.surplus.unwrap_or(cfg.weights.surplus),
        )?;
        let l = file.llm;
        if let Some(b) = &l.backend {
            cfg.llm.backend = b.parse().map_err(anyhow::Error::msg)?;
        }
        cfg.llm.base_url = l.base_url.or(cfg.llm.base_url);
        cfg.llm.model_name = l.model_name.unwrap_or(cfg.llm.model_name);
        cfg.llm.temperature = l.temperature.unwrap_or(cfg.llm.temperature);
        cfg.llm.max_retries = l.max_retries.unwrap_or(cfg.llm.max_retries);
        cfg.llm.timeout_secs = l.timeout_secs.unwrap_or(cfg.llm.timeout_secs);
        cfg.llm.max_in_flight = l.max_in_flight.unwrap_or(cfg.llm.max_in_flight);
        cfg.llm.api_token = l.api_token.or(cfg.llm.api_token);
        cfg.llm.seed = l.seed.or(cfg.llm.seed);

        cfg.llm.apply_env();

        if let Some(s) = &flags.extractor {
            cfg.extractor = s.parse().map_err(anyhow::Error::msg)?;
        }
        if let Some(s) = &flags.llm {
            apply_llm_flag(&mut cfg.llm, s)?;
        }
        if let Some(s) = &flags.weights {
            cfg.weights = cfg.weights.with_overrides(s)?;
        }
        if let Some(s) = &flags.section {
            cfg.section = s.parse().map_err(anyhow::Error::msg)?;
        }
        if let Some(n) = flags.concurrency {
            cfg.concurrency = n;
        }
        if let Some(seed) = flags.seed {
            cfg.llm.seed = Some(seed);
        }

        if cfg.concurrency == 0 {
            bail!("concurrency must be at least 1");
        }
        if let ExtractorSpec::Lexicon(Some(path)) = &cfg.extractor {
            if !path.is_file() {
                bail!("lexicon file {} does not exist", path.display());
            }
        }
        cfg.llm.validate()?;
        Ok(cfg)
    }

    /// Loads the lexicon or connects to the NER workers. A failure to reach
    /// a worker is a backend error; a bad lexicon file is an input error.
    pub fn build_extractor(&self) -> Result<Box<dyn Extractor>, BuildError> {
        match &self.extractor {
            ExtractorSpec::Lexicon(None) => Ok(Box::new(Lexicon::builtin())),
            ExtractorSpec::Lexicon(Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading lexicon {}", path.display()))
                    .map_err(BuildError::Input)?;
                let lex = Lexicon::parse(&text)
                    .with_context(|| format!("parsing lexicon {}", path.display()))
                    .map_err(BuildError::Input)?;
                Ok(Box::new(lex))
            }
            ExtractorSpec::Tcp(addr) => {
                let conns = (0..self.concurrency)
                    .map(|_| WorkerConnection::connect(addr.as_str(), self.worker_timeout))
                    .collect::<Result<Vec<_>, _>>()
                    .with_context(|| format!("connecting to NER worker at {addr}"))
                    .map_err(BuildError::Backend)?;
                Ok(Box::new(WorkerPool::new(conns)))
            }
            ExtractorSpec::Spawn(argv) => {
                let conns = (0..self.concurrency)
                    .map(|_| {
                        let mut cmd = Command::new(&argv[0]);
                        cmd.args(&argv[1..]);
                        WorkerConnection::spawn(&mut cmd, self.worker_timeout)
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .with_context(|| format!("starting NER worker {:?}", argv.join(" ")))
                    .map_err(BuildError::Backend)?;
                Ok(Box::new(WorkerPool::new(conns)))
            }
        }
    }
}

#[derive(Debug)]
pub enum BuildError {
    Input(anyhow::Error),
    Backend(anyhow::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> FileConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn defaults() {
        let cfg = EngineConfig::resolve(FileConfig::default(), &Overrides::default()).unwrap();
        assert_eq!(cfg.extractor, ExtractorSpec::Lexicon(None));
        assert_eq!(cfg.weights, Weights::default());
        assert_eq!(cfg.section, SectionSelector::Both);
        assert_eq!(cfg.concurrency, 1);
        assert_eq!(cfg.llm.backend, BackendKind::Mock);
    }

    #[test]
    fn flags_beat_file_beats_defaults() {
        let f = file(
            r#"
            section = "impression"
            concurrency = 3
            [weights]
            missing = 3.0
            mismatch = 1.0
            [llm]
            max_retries = 1
            seed = 5
            "#,
        );
        let flags = Overrides {
            weights: Some("mismatch=2.5".into()),
            concurrency: Some(8),
            seed: Some(9),
            ..Overrides::default()
        };
        let cfg = EngineConfig::resolve(f, &flags).unwrap();
        assert_eq!(cfg.section, SectionSelector::ImpressionOnly);
        assert_eq!(cfg.concurrency, 8);
        assert_eq!((cfg.weights.missing, cfg.weights.mismatch, cfg.weights.surplus), (3.0, 2.5, 1.0));
        assert_eq!(cfg.llm.max_retries, 1);
        assert_eq!(cfg.llm.seed, Some(9));
    }

    #[test]
    fn llm_flag_accepts_url() {
        let flags = Overrides { llm: Some("http://127.0.0.1:9/v1".into()), ..Overrides::default() };
        let cfg = EngineConfig::resolve(FileConfig::default(), &flags).unwrap();
        assert_eq!(cfg.llm.backend, BackendKind::Http);
        assert_eq!(cfg.llm.base_url.as_deref(), Some("http://127.0.0.1:9/v1"));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(toml::from_str::<FileConfig>("colour = 1").is_err());
        let zero = Overrides { concurrency: Some(0), ..Overrides::default() };
        assert!(EngineConfig::resolve(FileConfig::default(), &zero).is_err());
        let missing = Overrides { extractor: Some("lexicon:/no/such/file".into()), ..Overrides::default() };
        assert!(EngineConfig::resolve(FileConfig::default(), &missing).is_err());
        let http = Overrides { llm: Some("http".into()), ..Overrides::default() };
        if std::env::var_os(entscore::llm::ENV_LLM_URL).is_none() {
            assert!(EngineConfig::resolve(FileConfig::default(), &http).is_err());
        }
    }

    #[test]
    fn extractor_specs() {
        assert_eq!("tcp:127.0.0.1:7000".parse(), Ok(ExtractorSpec::Tcp("127.0.0.1:7000".into())));
        assert_eq!(
            "spawn:python3 -m worker".parse(),
            Ok(ExtractorSpec::Spawn(vec!["python3".into(), "-m".into(), "worker".into()]))
        );
        assert!("regex:x".parse::<ExtractorSpec>().is_err());
    }
}
