use std::path::Path;

use orthoconv::builtin;
use orthoconv::corpus::{generate_synthetic, split, ParallelCorpus};
use orthoconv::metrics::evaluate;
use orthoconv::normalize::{compile_table, denormalize, normalize, NormalizationTable};
use orthoconv::pipeline::{run_pipeline, PipelineConfig, Stage, BUILTIN_PREFIX};
use orthoconv::rules::{load_rules, Converter, RuleSet};
use orthoconv::seq2seq::{
    parse_grid, run_sweep, train, Preprocessing, Seq2SeqError, Seq2SeqModel, TrainConfig,
};
use orthoconv::tagger::{apply_tags, derive_tags, parse_tsv, to_tsv, tokenize};
use orthoconv::text::{nfc, OrthographyProfile};

use crate::io::{emit, emit_lines, guard_output, read_lines, read_text, CliError, CliResult};
use crate::{Command, InOut, ProfilePair};

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Normalize(args) => {
            let table = table_for(&args.profile)?;
            guard_output(args.io.out.as_deref(), "--out", &[args.io.input.as_ref()])?;
            let lines = read_lines(args.io.input.as_deref())?;
            let out: Vec<String> = lines.iter().map(|l| normalize(l, &table)).collect();
            emit_lines(args.io.out.as_deref(), &out)
        }
        Command::Denormalize(args) => {
            let table = table_for(&args.profile)?;
            guard_output(args.io.out.as_deref(), "--out", &[args.io.input.as_ref()])?;
            let lines = read_lines(args.io.input.as_deref())?;
            let file = input_label(&args.io);
            let out = lines
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    denormalize(l, &table)
                        .map_err(|e| CliError::data(format!("{file}: line {}: {e}", i + 1)))
                })
                .collect::<CliResult<Vec<String>>>()?;
            emit_lines(args.io.out.as_deref(), &out)
        }
        Command::ConvertRules {
            rules,
            from_profile,
            to_profile,
            io,
        } => {
            let rules = load_rule_arg(&rules)?;
            let converter = Converter::new(
                &rules,
                &load_profile(&from_profile)?,
                &load_profile(&to_profile)?,
            )
            .map_err(|e| CliError::data(format!("--rules: {e}")))?;
            guard_output(io.out.as_deref(), "--out", &[io.input.as_ref()])?;
            let lines = read_lines(io.input.as_deref())?;
            let out = converter
                .convert_all(&lines)
                .map_err(|e| CliError::data(format!("{}: {e}", input_label(&io))))?;
            emit_lines(io.out.as_deref(), &out)
        }
        Command::DeriveTags { src, tgt, out } => {
            guard_output(out.as_deref(), "--out", &[Some(&src), Some(&tgt)])?;
            let sources = read_lines(Some(&src))?;
            let targets = read_lines(Some(&tgt))?;
            if sources.len() != targets.len() {
                return Err(CliError::data(format!(
                    "{} has {} lines but {} has {} lines",
                    src.display(),
                    sources.len(),
                    tgt.display(),
                    targets.len()
                )));
            }
            let tagged: Vec<_> = sources
                .iter()
                .zip(&targets)
                .map(|(s, t)| derive_tags(&tokenize(s), &tokenize(t)))
                .collect();
            emit(out.as_deref(), &nfc(&to_tsv(&tagged)))
        }
        Command::ApplyTags(io) => {
            guard_output(io.out.as_deref(), "--out", &[io.input.as_ref()])?;
            let text = orthoconv::text::nfd(&read_text(io.input.as_deref())?);
            let file = input_label(&io);
            let sentences = parse_tsv(&text).map_err(|e| CliError::data(format!("{file}: {e}")))?;
            let out = sentences
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    apply_tags(s)
                        .map(|t| t.join(" "))
                        .map_err(|e| CliError::data(format!("{file}: sentence {}: {e}", i + 1)))
                })
                .collect::<CliResult<Vec<String>>>()?;
            emit_lines(io.out.as_deref(), &out)
        }
        Command::Generate {
            profile_src,
            profile_tgt,
            rules,
            n,
            seed,
            noise,
            out,
        } => {
            let source = load_profile(&profile_src)?;
            let target = load_profile(&profile_tgt)?;
            let rules = load_rule_arg(&rules)?;
            let corpus = generate_synthetic(&source, &target, &rules, n, seed, noise)
                .map_err(CliError::data)?;
            emit(out.as_deref(), &corpus.to_tsv().map_err(CliError::data)?)
        }
        Command::Split { sizes, seed, io } => {
            guard_output(io.out.as_deref(), "--out", &[io.input.as_ref()])?;
            let corpus = read_corpus(io.input.as_deref())?;
            let labeled = split(&corpus, sizes, seed)
                .map_err(|e| CliError::data(format!("{}: {e}", input_label(&io))))?;
            emit(
                io.out.as_deref(),
                &labeled.to_tsv().map_err(CliError::data)?,
            )
        }
        Command::Train {
            corpus,
            config,
            out,
            seed,
            profiles,
        } => {
            guard_output(Some(&out), "--out", &[Some(&corpus), config.as_ref()])?;
            let mut config = match &config {
                Some(path) => read_train_config(path)?,
                None => TrainConfig::default(),
            };
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let prep = preprocessing(&profiles)?;
            let data = prep.normalize_corpus(&read_corpus(Some(&corpus))?);
            let (model, log) = train(&data, &config).map_err(seq2seq_error)?;
            for (i, loss) in log.epoch_losses.iter().enumerate() {
                eprintln!("epoch {}: loss {loss:.6}", i + 1);
            }
            if log.truncated > 0 {
                eprintln!(
                    "{} examples truncated to {} characters",
                    log.truncated, config.max_len
                );
            }
            emit(Some(&out), &model.to_json())
        }
        Command::Predict {
            model,
            io,
            profiles,
        } => {
            guard_output(
                io.out.as_deref(),
                "--out",
                &[io.input.as_ref(), Some(&model)],
            )?;
            let json = read_text(Some(&model))?;
            let model = Seq2SeqModel::from_json(&json)
                .map_err(|e| CliError::data(format!("{}: {e}", model.display())))?;
            let prep = preprocessing(&profiles)?;
            let lines = read_lines(io.input.as_deref())?;
            let inputs: Vec<String> = match &prep.source {
                Some(t) => lines.iter().map(|l| normalize(l, t)).collect(),
                None => lines,
            };
            let out: Vec<String> = model
                .predict_all(&inputs)
                .iter()
                .map(|p| prep.restore(p))
                .collect();
            emit_lines(io.out.as_deref(), &out)
        }
        Command::Sweep {
            grid,
            corpus,
            seed,
            json,
            out,
            profiles,
        } => {
            guard_output(out.as_deref(), "--out", &[Some(&grid), Some(&corpus)])?;
            let mut configs = parse_grid(&read_text(Some(&grid))?)
                .map_err(|e| CliError::data(format!("{}: {e}", grid.display())))?;
            if let Some(seed) = seed {
                configs.iter_mut().for_each(|c| c.seed = seed);
            }
            let prep = preprocessing(&profiles)?;
            let data = read_corpus(Some(&corpus))?;
            let report = run_sweep(&data, &configs, &prep).map_err(seq2seq_error)?;
            let text = if json {
                report.to_json() + "\n"
            } else {
                report.to_string()
            };
            emit(out.as_deref(), &text)
        }
        Command::Evaluate {
            hyp,
            reference,
            json,
        } => {
            let h = read_lines(Some(&hyp))?;
            let r = read_lines(Some(&reference))?;
            if h.len() != r.len() {
                return Err(CliError::data(format!(
                    "{} has {} lines but {} has {} lines",
                    hyp.display(),
                    h.len(),
                    reference.display(),
                    r.len()
                )));
            }
            let report = evaluate(&h, &r)
                .map_err(|e| CliError::data(format!("{}: {e}", reference.display())))?;
            let text = if json {
                report.to_json() + "\n"
            } else {
                format!("{report}\n")
            };
            emit(None, &text)
        }
        Command::Pipeline { config, seed, json } => {
            let mut cfg = PipelineConfig::load(&config).map_err(CliError::data)?;
            if seed.is_some() {
                cfg.seed = seed;
            }
            let report = run_pipeline(&cfg).map_err(|e| match e.stage {
                Stage::Train | Stage::Write => CliError::runtime(e),
                _ => CliError::data(e),
            })?;
            if json {
                emit(None, &report.to_json())
            } else {
                let mut text = format!(
                    "model        {}\ncopy source  {}\n",
                    report.model, report.copy_source
                );
                if let Some(r) = &report.rules {
                    text.push_str(&format!("rules        {r}\n"));
                }
                emit(None, &text)?;
                eprintln!(
                    "model written to {}\nreport written to {}",
                    cfg.model.display(),
                    cfg.report.display()
                );
                Ok(())
            }
        }
        Command::Builtin { name } => {
            let name = name.strip_prefix(BUILTIN_PREFIX).unwrap_or(&name);
            if let Some(p) = builtin::profile(name) {
                emit(None, &(nfc(&p.to_json()) + "\n"))
            } else if let Some(r) = builtin::rules(name) {
                emit(None, &(nfc(&r.to_json()) + "\n"))
            } else {
                Err(CliError::usage(format!(
                    "no built-in profile or rule set named {name:?}"
                )))
            }
        }
    }
}

fn input_label(io: &InOut) -> String {
    io.input
        .as_ref()
        .map_or_else(|| "<stdin>".to_string(), |p| p.display().to_string())
}

/// A path to a profile file, `builtin:<id>`, or a bare built-in id when no such file exists.
pub fn load_profile(arg: &str) -> CliResult<OrthographyProfile> {
    if let Some(name) = arg.strip_prefix(BUILTIN_PREFIX) {
        return builtin::profile(name)
            .ok_or_else(|| CliError::data(format!("no built-in profile {name:?}")));
    }
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(p) = builtin::profile(arg) {
            return Ok(p);
        }
    }
    OrthographyProfile::load(path).map_err(CliError::data)
}

pub fn load_rule_arg(arg: &str) -> CliResult<RuleSet> {
    if let Some(name) = arg.strip_prefix(BUILTIN_PREFIX) {
        return builtin::rules(name)
            .ok_or_else(|| CliError::data(format!("no built-in rule set {name:?}")));
    }
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(r) = builtin::rules(arg) {
            return Ok(r);
        }
    }
    load_rules(path).map_err(CliError::data)
}

fn table_for(profile: &str) -> CliResult<NormalizationTable> {
    let p = load_profile(profile)?;
    compile_table(&p).map_err(|e| CliError::data(format!("--profile {profile}: {e}")))
}

fn preprocessing(profiles: &ProfilePair) -> CliResult<Preprocessing> {
    match (&profiles.profile_src, &profiles.profile_tgt) {
        (Some(s), Some(t)) => Ok(Preprocessing {
            source: Some(table_for(s)?),
            target: Some(table_for(t)?),
            evaluate_normalized: false,
        }),
        _ => Ok(Preprocessing::none()),
    }
}

fn read_corpus(path: Option<&Path>) -> CliResult<ParallelCorpus> {
    let bytes = crate::io::read_bytes(path)?;
    let file = path.map_or_else(|| "<stdin>".to_string(), |p| p.display().to_string());
    ParallelCorpus::parse_tsv(&bytes, &file).map_err(CliError::data)
}

fn read_train_config(path: &Path) -> CliResult<TrainConfig> {
    let text = read_text(Some(path))?;
    let config: TrainConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    config
        .validate()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(config)
}

fn seq2seq_error(e: Seq2SeqError) -> CliError {
    match e {
        Seq2SeqError::Divergence { .. } => CliError::runtime(e),
        _ => CliError::data(e),
    }
}
