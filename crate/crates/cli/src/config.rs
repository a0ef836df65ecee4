//! Run configuration and corpus loading. A run config is one JSON
//! document naming the ambient conditions, the search space, the
//! optimizer settings, the data directories, and the oracle to query.
//! Unknown keys are rejected and every referenced path must exist when
//! the file loads, so a config that parses is a config that runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Deserialize;
use voxtube::acoustics::{Environment, DEFAULT_TEMPERATURE_K};
use voxtube::asi::adapter;
use voxtube::asi::{AdapterOracle, MfccConfig, Oracle, SpeakerModel};
use voxtube::attack::{DeConfig, SearchSpace};
use voxtube::signal::{read_wav, AudioBuffer};
use voxtube::{Error, Result};

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentConfig {
    pub temperature_k: f64,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            temperature_k: DEFAULT_TEMPERATURE_K,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus_dir: PathBuf,
    pub output_dir: PathBuf,
}

/// Which model answers identification queries.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum OracleConfig {
    /// Enrolled surrogate model file.
    SurrogateModelFile(PathBuf),
    /// Command line of an external adapter subprocess.
    AdapterCommand(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub environment: EnvironmentConfig,
    /// Feature settings for enrollment; a saved model carries its own.
    #[serde(default)]
    pub mfcc: Option<MfccConfig>,
    #[serde(default = "SearchSpace::single_tube")]
    pub search_space: SearchSpace,
    #[serde(default)]
    pub de: DeConfig,
    #[serde(default)]
    pub paths: Option<PathsConfig>,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        Environment::new(self.environment.temperature_k)?;
        if let Some(mfcc) = &self.mfcc {
            mfcc.validate()?;
        }
        self.search_space.validate()?;
        self.de.validate()?;
        if let Some(paths) = &self.paths {
            require_dir(&paths.corpus_dir)?;
            require_dir(&paths.output_dir)?;
        }
        match &self.oracle {
            Some(OracleConfig::SurrogateModelFile(file)) if !file.is_file() => {
                Err(Error::InvalidArgument(format!(
                    "oracle model file {} does not exist",
                    file.display()
                )))
            }
            Some(OracleConfig::AdapterCommand(argv)) if argv.is_empty() => Err(
                Error::InvalidArgument("adapter command is empty".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn environment(&self) -> Environment {
        Environment::new(self.environment.temperature_k).expect("validated at load")
    }

    pub fn paths(&self) -> Result<&PathsConfig> {
        self.paths
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("config has no paths section".into()))
    }

    pub fn build_oracle(&self) -> Result<Box<dyn Oracle>> {
        let choice = self
            .oracle
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("config has no oracle section".into()))?;
        match choice {
            OracleConfig::SurrogateModelFile(file) => Ok(Box::new(SpeakerModel::load(file)?)),
            OracleConfig::AdapterCommand(argv) => {
                let mut cmd = Command::new(&argv[0]);
                cmd.args(&argv[1..]);
                Ok(Box::new(AdapterOracle::spawn(cmd, adapter::DEFAULT_TIMEOUT)?))
            }
        }
    }
}

pub fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{} is not a directory",
            path.display()
        )))
    }
}

fn wav_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "wav"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Every `*.wav` in one directory, in file-name order.
pub fn load_wav_dir(dir: &Path) -> Result<Vec<AudioBuffer>> {
    require_dir(dir)?;
    let paths = wav_paths(dir)?;
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no .wav files in {}",
            dir.display()
        )));
    }
    paths.iter().map(read_wav).collect()
}

/// A `<speaker>/<utterance>.wav` corpus tree, speakers and utterances
/// both in name order.
pub fn load_corpus(dir: &Path) -> Result<BTreeMap<String, Vec<AudioBuffer>>> {
    require_dir(dir)?;
    let mut speaker_dirs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.is_dir())
        .collect();
    speaker_dirs.sort();
    let mut corpus = BTreeMap::new();
    for speaker_dir in speaker_dirs {
        let name = speaker_dir
            .file_name()
            .expect("read_dir yields named entries")
            .to_string_lossy()
            .into_owned();
        corpus.insert(name, load_wav_dir(&speaker_dir)?);
    }
    if corpus.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no speaker directories in {}",
            dir.display()
        )));
    }
    Ok(corpus)
}

/// The corpus flattened to one signal list (speaker then utterance
/// order) for studies that ignore identity.
pub fn load_signals(dir: &Path) -> Result<Vec<AudioBuffer>> {
    Ok(load_corpus(dir)?.into_values().flatten().collect())
}
