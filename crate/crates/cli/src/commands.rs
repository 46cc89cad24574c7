use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use docket::attackdetect::{detect_in_text, load_bank, DEFAULT_TAU};
use docket::corpusgen::{
    generate, load_document, load_rfe_text, CorpusConfig, CorpusDocument, CorpusManifest,
    TextChannel, SPECIALTY_OCCUPATION,
};
use docket::drafting::{
    draft_response, BeneficiaryStore, DraftInputs, FieldPatterns, TemplateLibrary,
};
use docket::ensemble::{Document, LabeledDocument};
use docket::evalharness::{
    evaluate_attacks, evaluate_documents, stratified_split, EvalError, LabeledRfe,
};
use docket::fsio::write_atomic;
use docket::imagefeat::{decode_pgm, featurizer_hash};
use docket::linclass::{load_model, save_model, ClassSet};
use docket::textprep::Stopwords;
use docket::vectorspace::Vocabulary;
use docket::{DocumentClassifier, ExampleBank, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::FileConfig;
use crate::{
    usage, ClassifyArgs, Cli, Command, DetectArgs, DraftArgs, EvalAttacksArgs, EvalDocsArgs,
    GenCorpusArgs, TrainDocsArgs,
};

pub fn dispatch(cli: &Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::GenCorpus(a) => gen_corpus(a, &file),
        Command::TrainDocs(a) => train_docs(a, &file),
        Command::Classify(a) => classify(a),
        Command::Detect(a) => detect(a, &file),
        Command::Draft(a) => draft(a, &file),
        Command::EvalDocs(a) => eval_docs(a),
        Command::EvalAttacks(a) => eval_attacks(a, &file),
    }
}

/// Prints the effective configuration and its hash to stderr.
fn echo<S: Serialize>(command: &str, effective: &S) -> String {
    let text = serde_json::to_string(effective).expect("config serializes");
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    eprintln!("docket {command}: effective config {text}");
    eprintln!("docket {command}: config hash {hash}");
    hash
}

fn emit(value: serde_json::Value) {
    println!("{value}");
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn check_tau(tau: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&tau) {
        Ok(tau)
    } else {
        Err(usage(format!("tau {tau} is outside [0, 1]")))
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

// ---------------------------------------------------------------------------

fn gen_corpus(a: &GenCorpusArgs, file: &FileConfig) -> Result<()> {
    let f = &file.corpus;
    let mut config = CorpusConfig::default();
    if let Some(classes) = &f.classes {
        config.classes = classes.clone();
    }
    if let Some(mix) = &f.attack_mix {
        config.attack_mix = mix.clone();
    }
    config.seed = a.seed.or(f.seed).unwrap_or(config.seed);
    if let Some(n) = a.docs_per_class.or(f.docs_per_class) {
        for c in &mut config.classes {
            c.n_docs = n;
        }
    }
    config.n_rfes = a.rfes.or(f.n_rfes).unwrap_or(config.n_rfes);
    config.ocr_noise_rate = a
        .noise
        .or(f.ocr_noise_rate)
        .unwrap_or(config.ocr_noise_rate);
    config.validate().map_err(|e| usage(e.to_string()))?;
    let hash = echo("gen-corpus", &config);

    let corpus = generate(&config)?;
    corpus.write(&a.out)?;
    emit(json!({
        "command": "gen-corpus",
        "out": path_str(&a.out),
        "seed": config.seed,
        "config_hash": hash,
        "documents": corpus.documents.len(),
        "rfes": corpus.rfes.len(),
    }));
    Ok(())
}

// ---------------------------------------------------------------------------

pub const BUNDLE_FILE: &str = "bundle.json";
const BUNDLE_FORMAT: &str = "docket-model";
const IMAGE_MODEL: &str = "image.model";
const TEXT_MODEL: &str = "text.model";
const VOCAB: &str = "vocab.txt";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSettings {
    channel: TextChannel,
    test_fraction: f64,
    split_seed: u64,
    all: bool,
    l2: f64,
    learning_rate: f64,
    max_iters: usize,
    grad_tol: f64,
}

/// `bundle.json` in a model directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Bundle {
    format: String,
    version: u32,
    classes: Vec<String>,
    channel: TextChannel,
    image_model: String,
    text_model: String,
    vocab: String,
    corpus_config_hash: String,
    settings: TrainSettings,
    train_ids: Vec<String>,
    test_ids: Vec<String>,
}

fn parse_channel(s: &str) -> Result<TextChannel> {
    match s {
        "clean" => Ok(TextChannel::Clean),
        "degraded" => Ok(TextChannel::Degraded),
        other => Err(usage(format!(
            "channel must be clean or degraded, not {other:?}"
        ))),
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(usage(format!("{name} must be a positive number, not {v}")))
    }
}

fn train_docs(a: &TrainDocsArgs, file: &FileConfig) -> Result<()> {
    let f = &file.train;
    let defaults = TrainConfig::default();
    let channel = parse_channel(
        a.channel
            .as_deref()
            .or(f.channel.as_deref())
            .unwrap_or("degraded"),
    )?;
    let test_fraction = a.test_fraction.or(f.test_fraction).unwrap_or(0.2);
    if !a.all && !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(usage(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let l2 = a.l2.or(f.l2).unwrap_or(defaults.l2);
    if !(l2.is_finite() && l2 >= 0.0) {
        return Err(usage(format!("l2 must be non-negative, not {l2}")));
    }
    let settings = TrainSettings {
        channel,
        test_fraction,
        split_seed: a.split_seed.or(f.split_seed).unwrap_or(42),
        all: a.all,
        l2,
        learning_rate: positive(
            "learning rate",
            a.learning_rate
                .or(f.learning_rate)
                .unwrap_or(defaults.learning_rate),
        )?,
        max_iters: a.max_iters.or(f.max_iters).unwrap_or(defaults.max_iters),
        grad_tol: positive("grad_tol", f.grad_tol.unwrap_or(defaults.grad_tol))?,
    };
    let hash = echo("train-docs", &settings);

    let manifest = CorpusManifest::load(&a.corpus)?;
    let labels: Vec<&str> = manifest
        .documents
        .iter()
        .map(|d| d.label.as_str())
        .collect();
    let (train, test) = if settings.all {
        ((0..labels.len()).collect(), Vec::new())
    } else {
        stratified_split(&labels, settings.test_fraction, settings.split_seed)?
    };
    let docs: Vec<Document> = train
        .iter()
        .map(|&i| load_document(&a.corpus, &manifest.documents[i], channel))
        .collect::<Result<_, _>>()?;
    let labeled: Vec<LabeledDocument> = docs
        .iter()
        .zip(&train)
        .map(|(doc, &i)| LabeledDocument {
            doc,
            label: &manifest.documents[i].label,
        })
        .collect();
    let classes = ClassSet::new(manifest.classes.clone())?;
    let config = TrainConfig {
        l2: settings.l2,
        learning_rate: settings.learning_rate,
        max_iters: settings.max_iters,
        grad_tol: settings.grad_tol,
    };
    let clf = DocumentClassifier::train(&labeled, &classes, &config)?;

    let ids = |idx: &[usize]| -> Vec<String> {
        idx.iter()
            .map(|&i| manifest.documents[i].id.clone())
            .collect()
    };
    let bundle = Bundle {
        format: BUNDLE_FORMAT.into(),
        version: 1,
        classes: manifest.classes.clone(),
        channel,
        image_model: IMAGE_MODEL.into(),
        text_model: TEXT_MODEL.into(),
        vocab: VOCAB.into(),
        corpus_config_hash: manifest.config_hash.clone(),
        settings,
        train_ids: ids(&train),
        test_ids: ids(&test),
    };
    write_file(&a.out.join(IMAGE_MODEL), &save_model(&clf.image_model))?;
    write_file(&a.out.join(TEXT_MODEL), &save_model(&clf.text_model))?;
    write_file(&a.out.join(VOCAB), clf.vocab.to_file_string().as_bytes())?;
    let json = serde_json::to_string_pretty(&bundle)? + "\n";
    write_file(&a.out.join(BUNDLE_FILE), json.as_bytes())?;
    emit(json!({
        "command": "train-docs",
        "out": path_str(&a.out),
        "config_hash": hash,
        "train": train.len(),
        "test": test.len(),
        "vocab_terms": clf.vocab.len(),
    }));
    Ok(())
}

fn load_bundle(dir: &Path) -> Result<(Bundle, DocumentClassifier)> {
    let bundle: Bundle = serde_json::from_str(&read_text(&dir.join(BUNDLE_FILE))?)
        .with_context(|| format!("parsing {}", dir.join(BUNDLE_FILE).display()))?;
    if bundle.format != BUNDLE_FORMAT || bundle.version != 1 {
        bail!("{}: unsupported model bundle", dir.display());
    }
    let vocab = Vocabulary::parse(&read_text(&dir.join(&bundle.vocab))?)
        .with_context(|| format!("parsing {}", dir.join(&bundle.vocab).display()))?;
    let read = |name: &str| {
        std::fs::read(dir.join(name))
            .with_context(|| format!("reading {}", dir.join(name).display()))
    };
    let image_model = load_model(&read(&bundle.image_model)?, &featurizer_hash())
        .with_context(|| format!("loading {}", bundle.image_model))?;
    let text_model = load_model(&read(&bundle.text_model)?, &vocab.content_hash())
        .with_context(|| format!("loading {}", bundle.text_model))?;
    if image_model.classes().labels() != bundle.classes.as_slice()
        || text_model.classes().labels() != bundle.classes.as_slice()
    {
        bail!("{}: model classes disagree with bundle.json", dir.display());
    }
    Ok((
        bundle,
        DocumentClassifier {
            image_model,
            text_model,
            vocab,
        },
    ))
}

// ---------------------------------------------------------------------------

fn text_file_name(channel: TextChannel) -> &'static str {
    match channel {
        TextChannel::Clean => "clean.txt",
        TextChannel::Degraded => "ocr.txt",
    }
}

fn has_ext(p: &Path, ext: &str) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn read_page(path: &Path) -> Result<docket::imagefeat::PageImage> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_pgm(&bytes).with_context(|| format!("decoding {}", path.display()))
}

/// A directory holds `*.pgm` pages (by file name order) and a text file:
/// the bundle channel's (`ocr.txt` or `clean.txt`), else `text.txt`.
fn load_input(path: &Path, channel: TextChannel) -> Result<Document> {
    let id = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path_str(path));
    if path.is_dir() {
        let mut page_paths: Vec<PathBuf> = std::fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && has_ext(p, "pgm"))
            .collect();
        page_paths.sort();
        let pages = page_paths
            .iter()
            .map(|p| read_page(p))
            .collect::<Result<_>>()?;
        let text = [text_file_name(channel), "text.txt"]
            .iter()
            .map(|n| path.join(n))
            .find(|p| p.is_file())
            .map(|p| read_text(&p))
            .transpose()?
            .unwrap_or_default();
        return Ok(Document { id, pages, text });
    }
    if has_ext(path, "pgm") {
        return Ok(Document {
            id,
            pages: vec![read_page(path)?],
            text: String::new(),
        });
    }
    if has_ext(path, "txt") {
        return Ok(Document {
            id,
            pages: Vec::new(),
            text: read_text(path)?,
        });
    }
    bail!("{}: expected a directory, .pgm or .txt", path.display())
}

fn classify(a: &ClassifyArgs) -> Result<()> {
    let effective = json!({
        "model": path_str(&a.model),
        "move": a.move_to.as_deref().map(path_str),
        "inputs": a.inputs.iter().map(|p| path_str(p)).collect::<Vec<_>>(),
    });
    echo("classify", &effective);
    if let Some(dest) = &a.move_to {
        if dest.exists() && !dest.is_dir() {
            return Err(usage(format!("{} is not a directory", dest.display())));
        }
    }
    let (bundle, clf) = load_bundle(&a.model)?;

    for input in &a.inputs {
        let name = input
            .file_name()
            .ok_or_else(|| anyhow!("{}: no file name", input.display()))?;
        if !input.exists() {
            // a previous --move may already have placed it
            if let Some(dest) = &a.move_to {
                let placed: Vec<PathBuf> = bundle
                    .classes
                    .iter()
                    .map(|c| dest.join(c).join(name))
                    .filter(|p| p.exists())
                    .collect();
                if placed.len() == 1 {
                    emit(json!({
                        "input": path_str(input),
                        "status": "already-placed",
                        "moved_to": path_str(&placed[0]),
                    }));
                    continue;
                }
            }
            bail!("{}: no such file or directory", input.display());
        }
        let doc = load_input(input, bundle.channel)?;
        let trace = clf.classify(&doc)?;
        let branch = |b: &Option<docket::ensemble::BranchOutput<f64>>| {
            b.as_ref().map(|b| {
                json!({
                    "probs": b.probs.probs(),
                    "entropy": b.entropy,
                    "weight": b.weight,
                })
            })
        };
        let mut out = json!({
            "input": path_str(input),
            "predicted": trace.predicted,
            "fused": trace.fused.probs(),
            "classes": bundle.classes,
            "image": branch(&trace.image),
            "text": branch(&trace.text),
        });
        if let Some(dest) = &a.move_to {
            let class_dir = dest.join(&trace.predicted);
            let target = class_dir.join(name);
            let same = target.exists()
                && std::fs::canonicalize(&target).ok() == std::fs::canonicalize(input).ok();
            if !same {
                if target.exists() {
                    bail!("{} already exists", target.display());
                }
                std::fs::create_dir_all(&class_dir)
                    .with_context(|| format!("creating {}", class_dir.display()))?;
                std::fs::rename(input, &target).with_context(|| {
                    format!("moving {} to {}", input.display(), target.display())
                })?;
            }
            out["moved_to"] = json!(path_str(&target));
        }
        emit(out);
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn detect(a: &DetectArgs, file: &FileConfig) -> Result<()> {
    let tau = check_tau(a.tau.or(file.detect.tau).unwrap_or(DEFAULT_TAU))?;
    echo(
        "detect",
        &json!({
            "bank": path_str(&a.bank),
            "tau": tau,
            "rfes": a.rfes.iter().map(|p| path_str(p)).collect::<Vec<_>>(),
        }),
    );
    let bank: ExampleBank = load_bank(&read_text(&a.bank)?, Stopwords::default())
        .with_context(|| format!("loading {}", a.bank.display()))?;
    for path in &a.rfes {
        let report = detect_in_text(&read_text(path)?, &bank, tau)?;
        let mut out = report.to_json(&bank);
        out["rfe"] = json!(path_str(path));
        emit(out);
    }
    Ok(())
}

// ---------------------------------------------------------------------------

struct DraftPaths {
    bank: PathBuf,
    store: PathBuf,
    templates: PathBuf,
    patterns: Option<PathBuf>,
}

fn draft_paths(a: &DraftArgs) -> Result<DraftPaths> {
    let manifest = match &a.corpus {
        Some(dir) => Some(CorpusManifest::load(dir).map_err(|e| usage(e.to_string()))?),
        None => None,
    };
    let from_corpus = |pick: fn(&CorpusManifest) -> &String| {
        a.corpus
            .as_ref()
            .zip(manifest.as_ref())
            .map(|(dir, m)| dir.join(pick(m)))
    };
    let need = |flag: &Option<PathBuf>, derived: Option<PathBuf>, name: &str| {
        flag.clone()
            .or(derived)
            .ok_or_else(|| usage(format!("--{name} is required without --corpus")))
    };
    Ok(DraftPaths {
        bank: need(&a.bank, from_corpus(|m| &m.bank), "bank")?,
        store: need(&a.store, from_corpus(|m| &m.beneficiaries), "store")?,
        templates: need(&a.templates, from_corpus(|m| &m.templates), "templates")?,
        patterns: a.patterns.clone().or(from_corpus(|m| &m.patterns)),
    })
}

fn draft(a: &DraftArgs, file: &FileConfig) -> Result<()> {
    let tau = check_tau(a.tau.or(file.detect.tau).unwrap_or(DEFAULT_TAU))?;
    let today = match &a.today {
        Some(s) => Some(
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|_| usage(format!("--today {s:?} is not YYYY-MM-DD")))?,
        ),
        None => None,
    };
    let paths = draft_paths(a)?;
    echo(
        "draft",
        &json!({
            "rfe": path_str(&a.rfe),
            "bank": path_str(&paths.bank),
            "store": path_str(&paths.store),
            "templates": path_str(&paths.templates),
            "patterns": paths.patterns.as_deref().map(path_str),
            "tau": tau,
            "today": today.map(|d| d.to_string()),
            "out": path_str(&a.out),
        }),
    );

    let bank: ExampleBank = load_bank(&read_text(&paths.bank)?, Stopwords::default())
        .with_context(|| format!("loading {}", paths.bank.display()))?;
    let store = BeneficiaryStore::parse(&read_text(&paths.store)?)
        .with_context(|| format!("loading {}", paths.store.display()))?;
    let library = TemplateLibrary::load_dir(&paths.templates)?;
    let patterns = match &paths.patterns {
        Some(p) => FieldPatterns::parse(&read_text(p)?)
            .with_context(|| format!("loading {}", p.display()))?,
        None => FieldPatterns::default(),
    };
    let inputs = DraftInputs {
        bank: &bank,
        store: &store,
        library: &library,
        patterns: &patterns,
        tau,
        today,
    };
    let outcome = draft_response(&read_text(&a.rfe)?, &inputs)?;
    write_file(&a.out, outcome.draft.text().as_bytes())?;
    let manifest = outcome.manifest_json(&bank);
    if let Some(m) = &a.manifest {
        write_file(
            m,
            (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes(),
        )?;
    }
    if let Some(e) = &outcome.lookup_error {
        log::warn!("{e}");
    }
    emit(json!({
        "command": "draft",
        "rfe": path_str(&a.rfe),
        "out": path_str(&a.out),
        "status": manifest["status"],
        "missing_fields": manifest["missing_fields"],
        "detected": manifest["report"]["detected"],
        "sections": outcome.draft.sections.iter().map(|s| &s.template_id).collect::<Vec<_>>(),
    }));
    Ok(())
}

// ---------------------------------------------------------------------------

fn eval_docs(a: &EvalDocsArgs) -> Result<()> {
    echo(
        "eval-docs",
        &json!({
            "corpus": path_str(&a.corpus),
            "model": path_str(&a.model),
            "all": a.all,
            "report": a.report.as_deref().map(path_str),
        }),
    );
    let (bundle, clf) = load_bundle(&a.model)?;
    let manifest = CorpusManifest::load(&a.corpus)?;
    if manifest.classes != bundle.classes {
        bail!(
            "corpus classes {:?} do not match model classes {:?}",
            manifest.classes,
            bundle.classes
        );
    }
    let entries: Vec<_> = if a.all {
        manifest.documents.iter().collect()
    } else {
        if bundle.test_ids.is_empty() {
            bail!("the model holds out no documents; pass --all");
        }
        bundle
            .test_ids
            .iter()
            .map(|id| {
                manifest
                    .documents
                    .iter()
                    .find(|d| &d.id == id)
                    .ok_or_else(|| anyhow!("held-out document {id} is not in the corpus"))
            })
            .collect::<Result<_>>()?
    };
    let docs: Vec<CorpusDocument> = entries
        .iter()
        .map(|e| {
            Ok(CorpusDocument {
                doc: load_document(&a.corpus, e, bundle.channel)?,
                label: e.label.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let ev = evaluate_documents(&clf, &docs)?;
    println!("Ensemble\n{}", ev.ensemble.render());
    println!("Image only\n{}", ev.image_only.render());
    print!("Text only\n{}", ev.text_only.render());
    if let Some(path) = &a.report {
        let report = json!({
            "documents": docs.len(),
            "ensemble": ev.ensemble.to_json(),
            "image_only": ev.image_only.to_json(),
            "text_only": ev.text_only.to_json(),
            "predictions": ev.predictions,
        });
        write_file(
            path,
            (serde_json::to_string_pretty(&report)? + "\n").as_bytes(),
        )?;
    }
    Ok(())
}

fn eval_attacks(a: &EvalAttacksArgs, file: &FileConfig) -> Result<()> {
    let tau = check_tau(a.tau.or(file.detect.tau).unwrap_or(DEFAULT_TAU))?;
    let attack = a
        .attack
        .clone()
        .or(file.detect.attack.clone())
        .unwrap_or_else(|| SPECIALTY_OCCUPATION.to_string());
    let manifest = CorpusManifest::load(&a.corpus).map_err(|e| usage(e.to_string()))?;
    let bank_path = a
        .bank
        .clone()
        .unwrap_or_else(|| a.corpus.join(&manifest.bank));
    echo(
        "eval-attacks",
        &json!({
            "corpus": path_str(&a.corpus),
            "bank": path_str(&bank_path),
            "tau": tau,
            "attack": attack,
            "report": a.report.as_deref().map(path_str),
        }),
    );
    let bank: ExampleBank = load_bank(&read_text(&bank_path)?, Stopwords::default())
        .with_context(|| format!("loading {}", bank_path.display()))?;
    let texts: Vec<String> = manifest
        .rfes
        .iter()
        .map(|r| load_rfe_text(&a.corpus, r))
        .collect::<Result<_, _>>()?;
    let rfes: Vec<LabeledRfe> = manifest
        .rfes
        .iter()
        .zip(&texts)
        .map(|(r, text)| LabeledRfe {
            id: &r.id,
            text,
            attacks: &r.attacks,
        })
        .collect();
    let ev = match evaluate_attacks(&bank, tau, &rfes, &attack) {
        Err(EvalError::UnknownAttack(id)) => {
            return Err(usage(format!("unknown attack id {id:?}")))
        }
        r => r?,
    };
    print!("{}", ev.render());
    if let Some(path) = &a.report {
        write_file(
            path,
            (serde_json::to_string_pretty(&ev.to_json())? + "\n").as_bytes(),
        )?;
    }
    Ok(())
}
