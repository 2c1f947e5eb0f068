use std::fmt;

use serde::{Deserialize, Serialize};

use super::train::{train, Seq2SeqModel, TrainConfig};
use super::Seq2SeqError;
use crate::corpus::{Example, ParallelCorpus, Split};
use crate::metrics::{evaluate, EvalReport, MetricsError};
use crate::normalize::{normalize, NormalizationTable};

/// Digraph unification applied around the model.
#[derive(Debug, Clone, Default)]
pub struct Preprocessing {
    pub source: Option<NormalizationTable>,
    pub target: Option<NormalizationTable>,
    /// Score normalized text instead of restoring the natural spelling first.
    pub evaluate_normalized: bool,
}

impl Preprocessing {
    pub fn none() -> Self {
        Preprocessing::default()
    }

    pub fn normalize_corpus(&self, corpus: &ParallelCorpus) -> ParallelCorpus {
        let norm = |t: &Option<NormalizationTable>, s: &str| match t {
            Some(t) => normalize(s, t),
            None => s.to_string(),
        };
        ParallelCorpus {
            examples: corpus
                .examples
                .iter()
                .map(|e| Example {
                    source: norm(&self.source, &e.source),
                    target: norm(&self.target, &e.target),
                    ..e.clone()
                })
                .collect(),
        }
    }

    /// Maps unified characters in a prediction back to their spelling.
    ///
    /// The target table is tried first, then the source table; anything else
    /// is left as predicted.
    pub fn restore(&self, prediction: &str) -> String {
        let mut out = String::with_capacity(prediction.len());
        for c in prediction.chars() {
            let from_target = self.target.as_ref().and_then(|t| t.source_of(c));
            let from_source = self.source.as_ref().and_then(|t| t.source_of(c));
            match from_target.or(from_source) {
                Some(s) => out.push_str(s),
                None => out.push(c),
            }
        }
        out
    }

    /// Predicts every source of `corpus` (given in natural spelling) and scores against its targets.
    pub fn evaluate_model(
        &self,
        model: &Seq2SeqModel,
        corpus: &ParallelCorpus,
    ) -> Result<(Vec<String>, EvalReport), MetricsError> {
        let normalized = self.normalize_corpus(corpus);
        let raw = model.predict_all(&normalized.sources());
        if self.evaluate_normalized {
            let report = evaluate(&raw, &normalized.targets())?;
            Ok((raw, report))
        } else {
            let restored: Vec<String> = raw.iter().map(|p| self.restore(p)).collect();
            let report = evaluate(&restored, &corpus.targets())?;
            Ok((restored, report))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub parameters: String,
    pub config: TrainConfig,
    pub cer: Option<f64>,
    pub wer: Option<f64>,
    pub error: Option<String>,
    pub truncated: usize,
    pub epoch_losses: Vec<f64>,
    pub best: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.best)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>10} {:>10}", "Parameters", "CER", "WER")?;
        for r in &self.rows {
            let mark = if r.best { " *" } else { "" };
            match (r.cer, r.wer, &r.error) {
                (Some(c), Some(w), _) => {
                    writeln!(f, "{:<24} {:>10.4} {:>10.4}{mark}", r.parameters, c, w)?
                }
                (_, _, err) => writeln!(
                    f,
                    "{:<24} {:>10} {:>10}  {}",
                    r.parameters,
                    "failed",
                    "-",
                    err.as_deref().unwrap_or("")
                )?,
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    #[serde(default)]
    base: TrainConfig,
    epochs: Vec<usize>,
    max_len: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GridFile {
    List(Vec<TrainConfig>),
    Product(GridSpec),
}

/// Reads a grid: either a list of configs, or
/// `{"base": {...}, "epochs": [..], "max_len": [..]}` expanded epochs-major.
pub fn parse_grid(json: &str) -> Result<Vec<TrainConfig>, Seq2SeqError> {
    let grid: GridFile = serde_json::from_str(json)
        .map_err(|e| Seq2SeqError::InvalidConfig(format!("grid: {e}")))?;
    let configs = match grid {
        GridFile::List(list) => list,
        GridFile::Product(spec) => spec
            .epochs
            .iter()
            .flat_map(|&epochs| spec.max_len.iter().map(move |&max_len| (epochs, max_len)))
            .map(|(epochs, max_len)| TrainConfig {
                epochs,
                max_len,
                ..spec.base.clone()
            })
            .collect(),
    };
    if configs.is_empty() {
        return Err(Seq2SeqError::EmptyGrid);
    }
    Ok(configs)
}

/// Trains one model per config and scores each on the test split (or the
/// whole corpus when unlabeled). Failures are recorded per row. The best row
/// has the lowest WER, then the lowest CER.
pub fn run_sweep(
    corpus: &ParallelCorpus,
    grid: &[TrainConfig],
    prep: &Preprocessing,
) -> Result<SweepReport, Seq2SeqError> {
    if grid.is_empty() {
        return Err(Seq2SeqError::EmptyGrid);
    }
    let (train_part, test_part) = if corpus.is_labeled() {
        (corpus.part(Split::Train), corpus.part(Split::Test))
    } else {
        (corpus.clone(), corpus.clone())
    };
    let train_norm = prep.normalize_corpus(&train_part);

    let mut rows = Vec::with_capacity(grid.len());
    for config in grid {
        let mut row = SweepRow {
            parameters: config.label(),
            config: config.clone(),
            cer: None,
            wer: None,
            error: None,
            truncated: 0,
            epoch_losses: Vec::new(),
            best: false,
        };
        match train(&train_norm, config) {
            Ok((model, log)) => {
                row.truncated = log.truncated;
                row.epoch_losses = log.epoch_losses;
                match prep.evaluate_model(&model, &test_part) {
                    Ok((_, report)) => {
                        row.cer = Some(report.cer);
                        row.wer = Some(report.wer);
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    let best = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| Some((i, r.wer?, r.cer?)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)))
        .map(|(i, _, _)| i);
    if let Some(i) = best {
        rows[i].best = true;
    }
    Ok(SweepReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::normalize::compile_table;
    use crate::seq2seq::Optimizer;

    fn corpus() -> ParallelCorpus {
        ParallelCorpus::from_pairs(&[("mba", "mbà"), ("ndo", "ndò"), ("ba", "bà")])
    }

    fn tiny(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            embed_dim: 4,
            hidden_dim: 6,
            batch_size: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn empty_grid() {
        assert!(matches!(
            run_sweep(&corpus(), &[], &Preprocessing::none()),
            Err(Seq2SeqError::EmptyGrid)
        ));
    }

    #[test]
    fn one_config_one_row() {
        let r = run_sweep(&corpus(), &[tiny(1)], &Preprocessing::none()).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!(r.rows[0].best);
        assert!(r.to_string().contains("1 ep., length 40"));
    }

    #[test]
    fn failed_row_does_not_abort() {
        let diverging = TrainConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 1e300,
            clip_norm: 1e300,
            ..tiny(1)
        };
        let r = run_sweep(&corpus(), &[tiny(1), diverging], &Preprocessing::none()).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.rows[0].cer.is_some() && r.rows[0].best);
        assert!(r.rows[1].error.as_deref().unwrap().contains("diverged"));
        assert!(r.to_string().contains("failed"));
    }

    #[test]
    fn grid_forms() {
        let g =
            parse_grid(r#"{"base": {"hidden_dim": 16}, "epochs": [1, 4, 7], "max_len": [25, 40]}"#)
                .unwrap();
        let labels: Vec<String> = g.iter().map(|c| c.label()).collect();
        assert_eq!(
            labels[..3],
            ["1 ep., length 25", "1 ep., length 40", "4 ep., length 25"]
        );
        assert_eq!(g.len(), 6);
        assert!(g.iter().all(|c| c.hidden_dim == 16));
        assert_eq!(parse_grid(r#"[{"epochs": 2}]"#).unwrap()[0].epochs, 2);
        assert!(matches!(parse_grid("[]"), Err(Seq2SeqError::EmptyGrid)));
        assert!(parse_grid(r#"{"epochs": [1]}"#).is_err());
    }

    #[test]
    fn restore_undoes_normalization() {
        let table = compile_table(&builtin::official_profile()).unwrap();
        let prep = Preprocessing {
            source: Some(table.clone()),
            target: Some(table.clone()),
            evaluate_normalized: false,
        };
        let n = prep.normalize_corpus(&corpus());
        assert_eq!(n.examples[0].source.chars().count(), 2);
        assert_eq!(
            prep.restore(&n.examples[0].target),
            corpus().examples[0].target
        );
    }
}
