use orthoconv::builtin;
use orthoconv::corpus::{generate_synthetic, load_parallel, save_parallel, split, Split};
use orthoconv::metrics::evaluate;
use orthoconv::normalize::{compile_table, denormalize, normalize};
use orthoconv::rules::{load_rules, Converter};
use orthoconv::seq2seq::{train, Seq2SeqModel, TrainConfig};
use orthoconv::tagger::{iterate, tokenize, UnigramPredictor};
use orthoconv::text::{nfc, OrthographyProfile};

fn corpus(n: usize, noise: f64) -> orthoconv::corpus::ParallelCorpus {
    generate_synthetic(
        &builtin::catholic_profile(),
        &builtin::official_profile(),
        &builtin::catholic_to_official_rules(),
        n,
        21,
        noise,
    )
    .unwrap()
}

#[test]
fn tsv_round_trip_keeps_labels_and_text() {
    let dir = tempfile::tempdir().unwrap();
    let labeled = split(&corpus(50, 0.0), (30, 10, 10), 1).unwrap();
    let path = dir.path().join("c.tsv");
    save_parallel(&labeled, &path).unwrap();
    let on_disk = std::fs::read_to_string(&path).unwrap();
    assert_eq!(on_disk, nfc(&on_disk));
    let back = load_parallel(&path).unwrap();
    assert_eq!(back.sources(), labeled.sources());
    assert_eq!(back.targets(), labeled.targets());
    assert_eq!(
        (
            back.count(Split::Train),
            back.count(Split::Valid),
            back.count(Split::Test)
        ),
        (30, 10, 10)
    );
}

#[test]
fn noise_costs_exactly_one_edit_per_perturbed_sentence() {
    let n = 400;
    let noisy = corpus(n, 0.25);
    let converter = Converter::new(
        &builtin::catholic_to_official_rules(),
        &builtin::catholic_profile(),
        &builtin::official_profile(),
    )
    .unwrap();
    let hyp = converter.convert_all(&noisy.sources()).unwrap();
    let report = evaluate(&hyp, &noisy.targets()).unwrap();
    assert_eq!(report.total_char_edits, 100);
    assert_eq!(corpus(n, 0.0).sources(), noisy.sources());
}

#[test]
fn profile_and_rules_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let profile_path = dir.path().join("official.json");
    std::fs::write(&profile_path, builtin::official_profile().to_json()).unwrap();
    let rules_path = dir.path().join("rules.json");
    std::fs::write(&rules_path, builtin::catholic_to_official_rules().to_json()).unwrap();

    let official = OrthographyProfile::load(&profile_path).unwrap();
    assert_eq!(official, builtin::official_profile());
    let rules = load_rules(&rules_path).unwrap();
    let converter = Converter::new(&rules, &builtin::catholic_profile(), &official).unwrap();
    assert_eq!(
        converter.convert_sentence("ɓáɓa ɓa", 1).unwrap(),
        orthoconv::text::nfd("bábâ bà")
    );

    let table = compile_table(&official).unwrap();
    let text = orthoconv::text::nfd("mbɔ̀ŋ nyɛ̀");
    let unified = normalize(&text, &table);
    assert_eq!(
        unified
            .chars()
            .filter(|c| orthoconv::text::is_private_use(*c))
            .count(),
        2
    );
    assert_eq!(denormalize(&unified, &table).unwrap(), text);
}

#[test]
fn unigram_tagger_learns_word_corrections() {
    let pairs: Vec<(Vec<String>, Vec<String>)> = [
        ("he go home", "he goes home"),
        ("she go out", "she goes out"),
        ("they run home", "they run home"),
        ("a well known man", "a well-known man"),
    ]
    .iter()
    .map(|(s, t)| (tokenize(s), tokenize(t)))
    .collect();
    let predictor = UnigramPredictor::train(&pairs);
    let out = iterate(&tokenize("it go well known"), &predictor, 3).unwrap();
    assert_eq!(out.tokens, tokenize("it goes well-known"));
    assert!(out.converged);
}

#[test]
fn checkpoint_file_reloads_to_same_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(40, 0.0);
    let config = TrainConfig {
        epochs: 2,
        embed_dim: 8,
        hidden_dim: 10,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let (model, _) = train(&data, &config).unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(&path, model.to_json()).unwrap();
    let back = Seq2SeqModel::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(
        back.predict_all(&data.sources()),
        model.predict_all(&data.sources())
    );
}
