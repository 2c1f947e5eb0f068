//! End-to-end run: normalize, train, predict, restore spelling, evaluate.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builtin;
use crate::corpus::{load_parallel, ParallelCorpus, Split};
use crate::metrics::{evaluate, EvalReport};
use crate::normalize::{compile_table, normalize, NormalizationTable};
use crate::rules::{load_rules, Converter, RuleSet};
use crate::seq2seq::{train, Preprocessing, TrainConfig};
use crate::text::OrthographyProfile;

/// Prefix for profile and rule references that name a built-in instead of a file.
pub const BUILTIN_PREFIX: &str = "builtin:";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Normalize,
    Train,
    Predict,
    Evaluate,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Normalize => "normalize",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    fn new(stage: Stage, message: impl fmt::Display) -> Self {
        PipelineError {
            stage,
            message: message.to_string(),
        }
    }
}

/// Paths are resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Profile id to a JSON file, or to `builtin:<id>`.
    #[serde(default)]
    pub profiles: BTreeMap<String, String>,
    pub source_profile: Option<String>,
    pub target_profile: Option<String>,
    /// Rule file (or `builtin:<id>`) scored alongside the model as a baseline.
    pub rules: Option<String>,
    #[serde(default)]
    pub train: TrainConfig,
    pub corpus: PathBuf,
    pub model: PathBuf,
    pub report: PathBuf,
    #[serde(default = "yes")]
    pub normalize: bool,
    #[serde(default)]
    pub evaluate_normalized: bool,
    /// Overrides `train.seed` when set.
    pub seed: Option<u64>,
}

fn yes() -> bool {
    true
}

impl PipelineConfig {
    pub fn from_json(json: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut config: PipelineConfig =
            serde_json::from_str(json).map_err(|e| PipelineError::new(Stage::Config, e))?;
        config.resolve(base);
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let json = fs::read_to_string(path)
            .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_json(&json, base).map_err(|e| {
            PipelineError::new(Stage::Config, format!("{}: {}", path.display(), e.message))
        })
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        for value in self.profiles.values_mut() {
            if !value.starts_with(BUILTIN_PREFIX) {
                *value = join(Path::new(value)).display().to_string();
            }
        }
        if let Some(r) = self
            .rules
            .as_mut()
            .filter(|r| !r.starts_with(BUILTIN_PREFIX))
        {
            *r = join(Path::new(r)).display().to_string();
        }
        self.corpus = join(&self.corpus);
        self.model = join(&self.model);
        self.report = join(&self.report);
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed.unwrap_or(self.train.seed),
            ..self.train.clone()
        }
    }

    /// Checks every reference before any work is done.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::new(Stage::Config, m));
        for (id, location) in &self.profiles {
            match location.strip_prefix(BUILTIN_PREFIX) {
                Some(name) if builtin::profile(name).is_none() => {
                    return fail(format!("profiles.{id}: no built-in profile {name:?}"))
                }
                Some(_) => {}
                None if !Path::new(location).is_file() => {
                    return fail(format!("profiles.{id}: file {location} does not exist"))
                }
                None => {}
            }
        }
        for (field, id) in [
            ("source_profile", &self.source_profile),
            ("target_profile", &self.target_profile),
        ] {
            if let Some(id) = id {
                if !self.profiles.contains_key(id) && builtin::profile(id).is_none() {
                    return fail(format!(
                        "{field}: profile {id:?} is neither listed in profiles nor built in"
                    ));
                }
            }
        }
        if (self.normalize || self.rules.is_some())
            && (self.source_profile.is_none() || self.target_profile.is_none())
        {
            return fail("source_profile and target_profile are required when normalize is on or rules are given".into());
        }
        if let Some(r) = &self.rules {
            match r.strip_prefix(BUILTIN_PREFIX) {
                Some(name) if builtin::rules(name).is_none() => {
                    return fail(format!("rules: no built-in rule set {name:?}"))
                }
                Some(_) => {}
                None if !Path::new(r).is_file() => {
                    return fail(format!("rules: file {r} does not exist"))
                }
                None => {}
            }
        }
        if !self.corpus.is_file() {
            return fail(format!(
                "corpus: file {} does not exist",
                self.corpus.display()
            ));
        }
        for (field, path) in [("model", &self.model), ("report", &self.report)] {
            let parent = path
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            if !parent.is_dir() {
                return fail(format!(
                    "{field}: directory {} does not exist",
                    parent.display()
                ));
            }
        }
        self.train_config()
            .validate()
            .map_err(|e| PipelineError::new(Stage::Config, e))
    }

    /// Resolves a profile id through the config's map, then the built-ins.
    pub fn profile(&self, id: &str) -> Result<OrthographyProfile, PipelineError> {
        let load_err = |m: String| PipelineError::new(Stage::Load, m);
        match self.profiles.get(id) {
            Some(location) => match location.strip_prefix(BUILTIN_PREFIX) {
                Some(name) => builtin::profile(name)
                    .ok_or_else(|| load_err(format!("no built-in profile {name:?}"))),
                None => OrthographyProfile::load(Path::new(location))
                    .map_err(|e| load_err(e.to_string())),
            },
            None => builtin::profile(id).ok_or_else(|| load_err(format!("unknown profile {id:?}"))),
        }
    }

    fn load_rule_set(&self, location: &str) -> Result<RuleSet, PipelineError> {
        match location.strip_prefix(BUILTIN_PREFIX) {
            Some(name) => builtin::rules(name).ok_or_else(|| {
                PipelineError::new(Stage::Load, format!("no built-in rule set {name:?}"))
            }),
            None => load_rules(Path::new(location)).map_err(|e| PipelineError::new(Stage::Load, e)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub train_examples: usize,
    pub test_examples: usize,
    pub truncated: usize,
    pub epoch_losses: Vec<f64>,
    pub model: EvalReport,
    /// The source sentences themselves, scored as predictions.
    pub copy_source: EvalReport,
    pub rules: Option<EvalReport>,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn tables(
    config: &PipelineConfig,
) -> Result<
    (
        Option<(OrthographyProfile, OrthographyProfile)>,
        Preprocessing,
    ),
    PipelineError,
> {
    let (Some(src_id), Some(tgt_id)) = (&config.source_profile, &config.target_profile) else {
        return Ok((None, Preprocessing::none()));
    };
    let source = config.profile(src_id)?;
    let target = config.profile(tgt_id)?;
    let prep = if config.normalize {
        let table = |p: &OrthographyProfile| -> Result<NormalizationTable, PipelineError> {
            compile_table(p)
                .map_err(|e| PipelineError::new(Stage::Normalize, format!("profile {}: {e}", p.id)))
        };
        Preprocessing {
            source: Some(table(&source)?),
            target: Some(table(&target)?),
            evaluate_normalized: config.evaluate_normalized,
        }
    } else {
        Preprocessing {
            evaluate_normalized: config.evaluate_normalized,
            ..Preprocessing::none()
        }
    };
    Ok((Some((source, target)), prep))
}

/// Runs the whole experiment and writes the model checkpoint and report.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport, PipelineError> {
    config.validate()?;
    let (profiles, prep) = tables(config)?;
    let rules = config
        .rules
        .as_deref()
        .map(|r| config.load_rule_set(r))
        .transpose()?;
    let corpus = load_parallel(&config.corpus).map_err(|e| PipelineError::new(Stage::Load, e))?;
    if corpus.is_empty() {
        return Err(PipelineError::new(
            Stage::Load,
            format!("{}: corpus is empty", config.corpus.display()),
        ));
    }
    let (train_part, test_part) = if corpus.is_labeled() {
        (corpus.part(Split::Train), corpus.part(Split::Test))
    } else {
        (corpus.clone(), corpus.clone())
    };
    if test_part.is_empty() {
        return Err(PipelineError::new(
            Stage::Load,
            format!("{}: no test examples", config.corpus.display()),
        ));
    }

    let train_norm = prep.normalize_corpus(&train_part);
    let (model, log) = train(&train_norm, &config.train_config())
        .map_err(|e| PipelineError::new(Stage::Train, e))?;

    let (_, model_report) = prep
        .evaluate_model(&model, &test_part)
        .map_err(|e| PipelineError::new(Stage::Evaluate, e))?;
    let copy_source = score_copy(&prep, &test_part)?;
    let rules_report = match (&rules, &profiles) {
        (Some(rules), Some((source, target))) => {
            let converter = Converter::new(rules, source, target)
                .map_err(|e| PipelineError::new(Stage::Predict, e))?;
            let hyp = converter
                .convert_all(&test_part.sources())
                .map_err(|e| PipelineError::new(Stage::Predict, e))?;
            Some(score(&prep, &hyp, &test_part)?)
        }
        _ => None,
    };

    let report = PipelineReport {
        train_examples: train_part.len(),
        test_examples: test_part.len(),
        truncated: log.truncated,
        epoch_losses: log.epoch_losses,
        model: model_report,
        copy_source,
        rules: rules_report,
    };
    let write = |path: &Path, bytes: &[u8]| {
        write_atomic(path, bytes)
            .map_err(|e| PipelineError::new(Stage::Write, format!("{}: {e}", path.display())))
    };
    write(&config.model, model.to_json().as_bytes())?;
    write(&config.report, report.to_json().as_bytes())?;
    Ok(report)
}

fn score(
    prep: &Preprocessing,
    hyp: &[String],
    reference: &ParallelCorpus,
) -> Result<EvalReport, PipelineError> {
    let result = if prep.evaluate_normalized {
        let norm = |t: &Option<NormalizationTable>, s: &str| {
            t.as_ref()
                .map_or_else(|| s.to_string(), |t| normalize(s, t))
        };
        let h: Vec<String> = hyp.iter().map(|s| norm(&prep.target, s)).collect();
        let r: Vec<String> = reference
            .targets()
            .iter()
            .map(|s| norm(&prep.target, s))
            .collect();
        evaluate(&h, &r)
    } else {
        evaluate(hyp, &reference.targets())
    };
    result.map_err(|e| PipelineError::new(Stage::Evaluate, e))
}

fn score_copy(prep: &Preprocessing, test: &ParallelCorpus) -> Result<EvalReport, PipelineError> {
    let sources: Vec<String> = test.sources().iter().map(|s| s.to_string()).collect();
    score(prep, &sources, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, save_parallel, split};

    fn setup(dir: &Path) -> PipelineConfig {
        let corpus = generate_synthetic(
            &builtin::catholic_profile(),
            &builtin::official_profile(),
            &builtin::catholic_to_official_rules(),
            60,
            3,
            0.0,
        )
        .unwrap();
        let corpus = split(&corpus, (40, 10, 10), 3).unwrap();
        save_parallel(&corpus, &dir.join("corpus.tsv")).unwrap();
        let json = r#"{
            "profiles": {"catholic": "builtin:catholic"},
            "source_profile": "catholic",
            "target_profile": "official",
            "rules": "builtin:catholic-official",
            "train": {"epochs": 1, "embed_dim": 6, "hidden_dim": 8, "batch_size": 8},
            "corpus": "corpus.tsv",
            "model": "model.json",
            "report": "report.json",
            "seed": 4
        }"#;
        PipelineConfig::from_json(json, dir).unwrap()
    }

    #[test]
    fn runs_and_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config = setup(dir.path());
        let report = run_pipeline(&config).unwrap();
        assert_eq!((report.train_examples, report.test_examples), (40, 10));
        assert!(report.model.cer.is_finite() && report.model.wer.is_finite());
        assert_eq!(report.rules.as_ref().unwrap().cer, 0.0);
        assert!(config.model.is_file() && config.report.is_file());
        let leftovers = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_string_lossy()
                    .contains(".tmp-")
            })
            .count();
        assert_eq!(leftovers, 0);
    }

    #[test]
    fn repeated_runs_are_identical() {
        let dir = tempfile::tempdir().unwrap();
        let config = setup(dir.path());
        run_pipeline(&config).unwrap();
        let first = (
            fs::read(&config.model).unwrap(),
            fs::read(&config.report).unwrap(),
        );
        run_pipeline(&config).unwrap();
        assert_eq!(
            first,
            (
                fs::read(&config.model).unwrap(),
                fs::read(&config.report).unwrap()
            )
        );
    }

    #[test]
    fn seed_override() {
        let dir = tempfile::tempdir().unwrap();
        let config = setup(dir.path());
        assert_eq!(config.train_config().seed, 4);
    }

    #[test]
    fn missing_files_fail_before_work() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = setup(dir.path());
        config.corpus = dir.path().join("absent.tsv");
        let err = run_pipeline(&config).unwrap_err();
        assert_eq!(err.stage, Stage::Config);
        assert!(err.to_string().contains("absent.tsv"));
        assert!(!config.model.exists());

        let mut config = setup(dir.path());
        config.profiles.insert("x".into(), "nowhere.json".into());
        assert!(run_pipeline(&config)
            .unwrap_err()
            .message
            .contains("profiles.x"));

        let mut config = setup(dir.path());
        config.model = dir.path().join("no/such/dir/model.json");
        assert!(run_pipeline(&config).unwrap_err().message.contains("model"));
    }

    #[test]
    fn failing_stage_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = setup(dir.path());
        config.train.optimizer = crate::seq2seq::Optimizer::Sgd;
        config.train.learning_rate = 1e300;
        config.train.clip_norm = 1e300;
        let err = run_pipeline(&config).unwrap_err();
        assert_eq!(err.stage, Stage::Train);
        assert!(err.to_string().starts_with("train stage failed"));
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = PipelineConfig::from_json(
            r#"{"corpus":"a","model":"b","report":"c","colour":1}"#,
            Path::new(""),
        )
        .unwrap_err();
        assert_eq!(err.stage, Stage::Config);
        assert!(err.message.contains("colour"));
    }

    #[test]
    fn normalize_needs_profiles() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = setup(dir.path());
        config.source_profile = None;
        assert!(config
            .validate()
            .unwrap_err()
            .message
            .contains("source_profile"));
        config.rules = None;
        config.normalize = false;
        config.validate().unwrap();
    }
}
