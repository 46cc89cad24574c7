//! Seeded synthetic corpus: labeled supporting documents (page images plus
//! clean and OCR-degraded text), RFEs with planted attacks, beneficiary
//! records, the example bank, a template library and a field pattern file.
//!
//! Every random choice comes from a ChaCha8 stream keyed by
//! `(seed, component, item)`, so a document or RFE depends only on the seed
//! and its own position, never on how many other items were generated.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attackdetect::{BankRecord, DetectError, ExampleBank};
use crate::drafting::{
    format_date, BeneficiaryRecord, BeneficiaryStore, DraftError, RfeFields, TemplateLibrary,
    DEFAULT_PATTERNS, LIBRARY_MANIFEST,
};
use crate::ensemble::Document;
use crate::fsio::write_atomic;
use crate::imagefeat::{decode_pgm, encode_pgm, PageImage, PgmError};
use crate::scalar::Real;
use crate::textprep::{normalize, tokenize, Stopwords};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "docket-corpus";
pub const BANK_FILE: &str = "bank.json";
pub const BENEFICIARIES_FILE: &str = "beneficiaries.json";
pub const TEMPLATES_DIR: &str = "templates";
pub const PATTERNS_FILE: &str = "patterns.toml";

pub const PAGE_WIDTH: usize = 128;
pub const PAGE_HEIGHT: usize = 160;

/// Lower bound on the token overlap of a paraphrase with its source.
pub const MIN_OVERLAP: f64 = 0.6;

pub const SPECIALTY_OCCUPATION: &str = "specialty_occupation";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid corpus config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("corpus manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: PgmError },
    #[error(transparent)]
    Draft(#[from] DraftError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CorpusError {
    CorpusError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Page geometry family of a document class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutStyle {
    Approval,
    Receipt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub label: String,
    pub n_docs: usize,
    pub layout: LayoutStyle,
}

/// One attack combination and the share of RFEs that carry it. An empty
/// `attacks` list means a clean RFE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixEntry {
    pub attacks: Vec<String>,
    pub proportion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub seed: u64,
    pub classes: Vec<ClassSpec>,
    pub n_rfes: usize,
    pub attack_mix: Vec<MixEntry>,
    /// Per-character corruption probability of the degraded text channel.
    pub ocr_noise_rate: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        let mix = |attacks: &[&str], proportion| MixEntry {
            attacks: attacks.iter().map(|s| s.to_string()).collect(),
            proportion,
        };
        CorpusConfig {
            seed: 42,
            classes: vec![
                ClassSpec {
                    label: "i797-approval".into(),
                    n_docs: 52,
                    layout: LayoutStyle::Approval,
                },
                ClassSpec {
                    label: "i797-receipt".into(),
                    n_docs: 52,
                    layout: LayoutStyle::Receipt,
                },
            ],
            n_rfes: 49,
            attack_mix: vec![
                mix(&[SPECIALTY_OCCUPATION], 0.35),
                mix(&[SPECIALTY_OCCUPATION, "employer_employee"], 0.18),
                mix(&["employer_employee"], 0.20),
                mix(
                    &["beneficiary_qualifications", "maintenance_of_status"],
                    0.15,
                ),
                mix(&[], 0.12),
            ],
            ocr_noise_rate: 0.15,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidConfig(m));
        if self.classes.is_empty() {
            return bad("at least one class is required".into());
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.label.trim().is_empty() || c.label.contains(['/', '\\']) {
                return bad(format!("class label {:?} is not usable", c.label));
            }
            if self.classes[..i].iter().any(|o| o.label == c.label) {
                return bad(format!("duplicate class label {:?}", c.label));
            }
            if c.n_docs == 0 {
                return bad(format!("class {:?} has no documents", c.label));
            }
        }
        if !(0.0..1.0).contains(&self.ocr_noise_rate) {
            return bad(format!(
                "ocr_noise_rate {} outside [0, 1)",
                self.ocr_noise_rate
            ));
        }
        if self.n_rfes >= 90_000 {
            return bad("n_rfes must be below 90000".into());
        }
        if self.n_rfes > 0 && self.attack_mix.is_empty() {
            return bad("attack_mix is empty".into());
        }
        let known = attack_ids();
        let mut total = 0.0;
        for m in &self.attack_mix {
            if !m.proportion.is_finite() || m.proportion < 0.0 {
                return bad(format!(
                    "proportion {} is not a non-negative number",
                    m.proportion
                ));
            }
            total += m.proportion;
            for (i, a) in m.attacks.iter().enumerate() {
                if !known.contains(&a.as_str()) {
                    return bad(format!("unknown attack id {a:?}"));
                }
                if m.attacks[..i].contains(a) {
                    return bad(format!("attack {a:?} repeated in one mix entry"));
                }
            }
        }
        if !self.attack_mix.is_empty() && (total - 1.0).abs() > 1e-9 {
            return bad(format!("attack_mix proportions sum to {total}, not 1"));
        }
        Ok(())
    }

    /// SHA-256 of the config's canonical JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Splits `total` into integer counts proportional to `weights`, largest
/// remainder first; ties go to the earlier entry. Counts sum to `total`.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

const STREAM_DOCS: u64 = 1;
const STREAM_OCR: u64 = 2;
const STREAM_RFE_PLAN: u64 = 3;
const STREAM_RFES: u64 = 4;
const STREAM_PEOPLE: u64 = 5;

fn stream(seed: u64, component: u64, item: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((component << 48) | item);
    rng
}

// ---------------------------------------------------------------------------
// Paraphrase

const SYNONYMS: &[(&str, &[&str])] = &[
    ("common", &["standard", "typical"]),
    ("complex", &["complicated", "intricate"]),
    ("contracts", &["agreements"]),
    ("control", &["direct"]),
    ("copies", &["duplicates"]),
    ("copy", &["duplicate"]),
    ("degree", &["diploma"]),
    ("demonstrate", &["establish", "show"]),
    ("duties", &["responsibilities", "tasks"]),
    ("employer", &["company"]),
    ("establish", &["demonstrate", "show"]),
    ("evidence", &["documentation", "proof"]),
    ("explain", &["clarify", "describe"]),
    ("gaps", &["breaks", "interruptions"]),
    ("industry", &["field", "sector"]),
    ("lawful", &["legal"]),
    ("maintained", &["kept", "preserved"]),
    ("minimum", &["lowest", "baseline"]),
    ("normally", &["typically", "usually"]),
    ("perform", &["carry", "provide"]),
    ("position", &["job", "role"]),
    ("provide", &["submit", "furnish"]),
    ("qualified", &["eligible"]),
    ("recent", &["latest"]),
    ("record", &["file"]),
    ("relationship", &["connection"]),
    ("requirement", &["prerequisite"]),
    ("requires", &["demands", "needs"]),
    ("show", &["demonstrate"]),
    ("similar", &["comparable"]),
    ("specialized", &["advanced"]),
    ("specific", &["particular"]),
    ("submit", &["provide", "furnish"]),
    ("supervise", &["oversee"]),
    ("valid", &["genuine"]),
];

pub fn synonyms(word: &str) -> &'static [&'static str] {
    SYNONYMS
        .binary_search_by(|(w, _)| (*w).cmp(word))
        .map(|i| SYNONYMS[i].1)
        .unwrap_or(&[])
}

/// A bounded paraphrase: applied as substitution, then swap, then drop.
/// `swap` swaps positions `j` and `j + 1`; `drop` indexes the sequence after
/// the swap.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParaphraseEdits {
    pub substitute: Option<(usize, String)>,
    pub swap: Option<usize>,
    pub drop: Option<usize>,
}

pub fn apply_edits(tokens: &[String], edits: &ParaphraseEdits) -> Vec<String> {
    let mut out = tokens.to_vec();
    if let Some((i, w)) = &edits.substitute {
        out[*i] = w.clone();
    }
    if let Some(j) = edits.swap {
        out.swap(j, j + 1);
    }
    if let Some(k) = edits.drop {
        out.remove(k);
    }
    out
}

/// Multiset intersection size over the original length.
pub fn token_overlap(original: &[String], paraphrase: &[String]) -> f64 {
    if original.is_empty() {
        return 1.0;
    }
    let mut pool: BTreeMap<&str, usize> = BTreeMap::new();
    for t in paraphrase {
        *pool.entry(t.as_str()).or_default() += 1;
    }
    let mut shared = 0usize;
    for t in original {
        if let Some(c) = pool.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                shared += 1;
            }
        }
    }
    shared as f64 / original.len() as f64
}

/// Draws at most one of each edit. Lossy edits (drop, substitute) are
/// capped so at least 60% of the tokens survive.
pub fn draw_edits<R: Rng + ?Sized>(tokens: &[String], rng: &mut R) -> ParaphraseEdits {
    let n = tokens.len();
    let mut edits = ParaphraseEdits::default();
    if n < 3 {
        return edits;
    }
    let budget = 4 * n / 10;
    let mut lossy = 0;
    if lossy < budget && rng.gen_bool(0.5) {
        let candidates: Vec<usize> = (0..n)
            .filter(|&i| !synonyms(&tokens[i]).is_empty())
            .collect();
        if let Some(&i) = candidates.choose(rng) {
            let w = synonyms(&tokens[i]).choose(rng).expect("non-empty");
            edits.substitute = Some((i, w.to_string()));
            lossy += 1;
        }
    }
    if rng.gen_bool(0.5) {
        edits.swap = Some(rng.gen_range(0..n - 1));
    }
    if lossy < budget && rng.gen_bool(0.5) {
        edits.drop = Some(rng.gen_range(0..n));
    }
    edits
}

/// Paraphrases a tokenized sentence. Sentences under three tokens come
/// back unchanged.
pub fn paraphrase_sentence<R: Rng + ?Sized>(tokens: &[String], rng: &mut R) -> Vec<String> {
    apply_edits(tokens, &draw_edits(tokens, rng))
}

// ---------------------------------------------------------------------------
// Fixed content

struct AttackDef {
    id: &'static str,
    description: &'static str,
    sentences: &'static [&'static str],
}

const ATTACKS: &[AttackDef] = &[
    AttackDef {
        id: SPECIALTY_OCCUPATION,
        description: "The offered position does not qualify as a specialty occupation",
        sentences: &[
            "The evidence does not establish that the proffered position qualifies as a specialty occupation.",
            "You have not shown that a bachelor's degree in a specific specialty is normally the minimum requirement for entry into the position.",
            "The record does not demonstrate that the duties of the position are so specialized and complex that they require a baccalaureate degree.",
            "The degree requirement is not common to the industry in parallel positions among similar organizations.",
            "Submit evidence that the employer normally requires a degree or its equivalent for the position.",
        ],
    },
    AttackDef {
        id: "employer_employee",
        description: "No valid employer-employee relationship",
        sentences: &[
            "The evidence does not establish that a valid employer employee relationship exists between the petitioner and the beneficiary.",
            "Submit evidence that the petitioner will have the right to control the beneficiary's work.",
            "Provide contracts, statements of work, and itineraries for the end client sites where the beneficiary will work.",
            "The record does not show who will supervise the beneficiary's day to day work at the third party worksite.",
        ],
    },
    AttackDef {
        id: "beneficiary_qualifications",
        description: "The beneficiary is not shown to be qualified",
        sentences: &[
            "The evidence does not establish that the beneficiary is qualified to perform services in the specialty occupation.",
            "Submit a copy of the beneficiary's foreign degree together with a credentials evaluation from a reliable service.",
            "Provide an evaluation of the beneficiary's education and progressively responsible experience equivalent to a degree.",
            "The beneficiary's degree is not in a field directly related to the duties of the position.",
        ],
    },
    AttackDef {
        id: "maintenance_of_status",
        description: "Maintenance of nonimmigrant status is not shown",
        sentences: &[
            "Submit evidence that the beneficiary has maintained lawful nonimmigrant status in the United States.",
            "Provide copies of the beneficiary's recent pay statements and Form W-2 issued by the current employer.",
            "The record does not contain the beneficiary's Form I-94 arrival and departure record.",
            "Explain any gaps in the beneficiary's employment while in H-1B status.",
        ],
    },
];

pub fn attack_ids() -> Vec<&'static str> {
    ATTACKS.iter().map(|a| a.id).collect()
}

/// The example bank shipped with every generated corpus.
pub fn bank_records() -> Vec<BankRecord> {
    ATTACKS
        .iter()
        .flat_map(|a| {
            a.sentences.iter().map(move |s| BankRecord {
                attack_id: a.id.to_string(),
                description: a.description.to_string(),
                sentence: s.to_string(),
            })
        })
        .collect()
}

const RFE_OPENINGS: &[&str] = &[
    "Additional evidence is required before a decision can be made on this petition.",
    "USCIS has reviewed the petition and the evidence submitted with it.",
    "The petitioner filed the petition seeking to classify the beneficiary as a temporary worker.",
    "This request is issued under the regulations governing nonimmigrant petitions.",
    "The petitioner seeks to employ the beneficiary in what it describes as a specialty occupation.",
    "The petitioner indicates that the position is a specialty occupation requiring a degree.",
];

const RFE_DISTRACTORS: &[&str] = &[
    "All documents must be submitted with this notice placed on top.",
    "Documents in a foreign language must be accompanied by a certified English translation.",
    "If you submit a document that is not requested it may delay processing.",
    "The position title listed on the labor condition application is software developer.",
    "The petitioner describes itself as a technology consulting firm with several employees.",
    "The evidence submitted so far is not sufficient to establish eligibility for the benefit sought.",
    "Please label each exhibit and include a table of contents.",
    "The petitioner states that the beneficiary will work at its headquarters office.",
    "Copies are acceptable unless an original is specifically requested.",
    "The labor condition application was certified for the occupation listed on the petition.",
    "Provide a clear explanation of how each document relates to this request.",
    "The petition requests an extension of stay for the beneficiary.",
];

const RFE_CLOSINGS: &[&str] = &[
    "You must submit all requested evidence at the same time.",
    "Failure to respond by the due date will result in a decision based on the record.",
    "Submit the requested evidence to the address shown on this notice.",
    "Please retain a copy of your submission for your records.",
];

const SHARED_PHRASES: &[&str] = &[
    "Department of Homeland Security",
    "U.S. Citizenship and Immigration Services",
    "Form I-797 Notice of Action",
    "Case Type I129 Petition for a Nonimmigrant Worker",
    "Please see the additional information on the back",
    "You will be notified separately about any other cases you filed",
    "If you have questions contact the USCIS Contact Center",
    "The petitioner and beneficiary names are listed above",
    "Keep this notice with your immigration papers",
    "This notice is not a visa and may not be used in place of one",
];

const APPROVAL_PHRASES: &[&str] = &[
    "Notice Type Approval Notice",
    "The above petition has been approved",
    "Valid from the start date to the end date shown below",
    "The petition indicates that the beneficiary is in the United States",
    "Class H1B requested and granted",
    "The beneficiary may continue employment under the approved terms",
    "This approval does not guarantee admission at a port of entry",
    "Contact the appropriate consulate regarding visa issuance",
    "The tear off form at the bottom is the new arrival record",
    "Approved petition details are shown in the box below",
];

const RECEIPT_PHRASES: &[&str] = &[
    "Notice Type Receipt Notice",
    "Amount received 460 00 U S",
    "The above application or petition has been received",
    "Processing times vary by form type",
    "We will notify you of any further action on this case",
    "You may check the status of this case online",
    "This notice does not grant any immigration status or benefit",
    "Please save this notice for future reference",
    "If any of the information above is incorrect call us immediately",
    "Section nonimmigrant petition for alien worker received",
];

fn class_phrases(style: LayoutStyle) -> (&'static [&'static str], &'static [&'static str]) {
    match style {
        LayoutStyle::Approval => (APPROVAL_PHRASES, RECEIPT_PHRASES),
        LayoutStyle::Receipt => (RECEIPT_PHRASES, APPROVAL_PHRASES),
    }
}

const FIRST_NAMES: &[&str] = &[
    "Aarav", "Mei", "Carlos", "Priya", "Olena", "Kwame", "Sofia", "Hiroshi", "Fatima", "Lukas",
    "Ana", "Rahul", "Chen", "Amara", "Diego", "Yuki",
];
const LAST_NAMES: &[&str] = &[
    "Sharma",
    "Wang",
    "Garcia",
    "Patel",
    "Kovalenko",
    "Mensah",
    "Rossi",
    "Tanaka",
    "Haddad",
    "Becker",
    "Silva",
    "Iyer",
    "Liu",
    "Okafor",
    "Morales",
    "Sato",
];
const EMPLOYERS: &[&str] = &[
    "Acme Widgets, Inc.",
    "Bluefin Analytics LLC",
    "Cobalt Systems Corp.",
    "Delta Ridge Consulting",
    "Evergreen Health Partners",
    "Foxglove Software, Inc.",
    "Granite Peak Engineering",
    "Harbor Light Financial",
];
const ATTORNEYS: &[&str] = &[
    "Margaret Ellis, Esq.",
    "David Okonkwo, Esq.",
    "Laura Chen, Esq.",
    "Samuel Brooks, Esq.",
];
const CASE_PREFIXES: &[&str] = &["EAC", "WAC", "SRC", "LIN", "IOE"];

struct Occupation {
    soc: &'static str,
    fields: &'static [&'static str],
}

const OCCUPATIONS: &[Occupation] = &[
    Occupation {
        soc: "15-1252",
        fields: &["Computer Science", "Software Engineering"],
    },
    Occupation {
        soc: "15-1211",
        fields: &["Information Systems", "Computer Science"],
    },
    Occupation {
        soc: "15-2051",
        fields: &["Statistics", "Applied Mathematics"],
    },
    Occupation {
        soc: "17-2071",
        fields: &["Electrical Engineering"],
    },
    Occupation {
        soc: "13-2011",
        fields: &["Accounting", "Finance"],
    },
];
const DEGREES: &[&str] = &["Bachelor of Science", "Master of Science"];
const INSTITUTIONS: &[&str] = &[
    "University of Mumbai",
    "Tsinghua University",
    "University of Sao Paulo",
    "Kyiv Polytechnic Institute",
    "University of Ghana",
    "Ohio State University",
];

struct TemplateDef {
    id: &'static str,
    attack: &'static str,
    soc: Option<&'static [&'static str]>,
    body: &'static str,
}

const TEMPLATES: &[TemplateDef] = &[
    TemplateDef {
        id: "so-computing",
        attack: SPECIALTY_OCCUPATION,
        soc: Some(&["15-1211", "15-1252", "15-2051"]),
        body: "ISSUE: SPECIALTY OCCUPATION

The position offered to {{employee_name}} by {{employer_name}} falls under SOC code {{soc_code}}. Positions in this computing occupation require the theoretical and practical application of a body of highly specialized knowledge, and a bachelor's degree in a specific specialty is normally the minimum requirement for entry.

{{employee_name}} holds a {{degree}} in {{field_of_study}} from {{institution}}, a field directly related to the duties of the position. Enclosed are a detailed description of the duties, industry surveys of parallel positions, and an expert opinion letter.
",
    },
    TemplateDef {
        id: "so-engineering",
        attack: SPECIALTY_OCCUPATION,
        soc: Some(&["17-2071"]),
        body: "ISSUE: SPECIALTY OCCUPATION

{{employer_name}} seeks to employ {{employee_name}} in an engineering position classified under SOC code {{soc_code}}. State licensing practice and industry hiring standards require a degree in engineering for this work.

{{employee_name}} earned a {{degree}} in {{field_of_study}} from {{institution}}. Enclosed are the position description, organizational chart, and job postings from comparable employers.
",
    },
    TemplateDef {
        id: "so-general",
        attack: SPECIALTY_OCCUPATION,
        soc: None,
        body: "ISSUE: SPECIALTY OCCUPATION

{{employer_name}} respectfully submits that the position offered to {{employee_name}} is a specialty occupation. The duties described in the enclosed letter require a bachelor's degree or higher in a specific specialty, and the petitioner has historically required such a degree for the role.

Enclosed are the position description, evidence of the petitioner's past hiring practices, and the beneficiary's {{degree}} diploma from {{institution}}.
",
    },
    TemplateDef {
        id: "ee-general",
        attack: "employer_employee",
        soc: None,
        body: "ISSUE: EMPLOYER-EMPLOYEE RELATIONSHIP

{{employer_name}} will retain the right to control the work of {{employee_name}} throughout the requested validity period. The petitioner hires, pays, supervises, and evaluates the beneficiary, and may terminate the employment.

Enclosed are the employment agreement, the supervision plan, and the relevant client contracts and statements of work.
",
    },
    TemplateDef {
        id: "bq-general",
        attack: "beneficiary_qualifications",
        soc: None,
        body: "ISSUE: BENEFICIARY QUALIFICATIONS

{{employee_name}} is qualified to perform services in the specialty occupation. The beneficiary holds a {{degree}} in {{field_of_study}} from {{institution}}.

Enclosed are copies of the diploma and transcripts together with a credentials evaluation from a recognized evaluation service.
",
    },
    TemplateDef {
        id: "ms-general",
        attack: "maintenance_of_status",
        soc: None,
        body: "ISSUE: MAINTENANCE OF STATUS

{{employee_name}} has maintained lawful nonimmigrant status while in the United States.

Enclosed are the beneficiary's Form I-94 record, recent pay statements, and Forms W-2 issued by {{employer_name}}.
",
    },
];

// ---------------------------------------------------------------------------
// Ground truth

/// Manifest entry for one supporting document. Paths are relative to the
/// corpus root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentEntry {
    pub id: String,
    pub label: String,
    pub pages: Vec<String>,
    pub clean_text: String,
    pub degraded_text: String,
}

/// A bank sentence paraphrased into an RFE. `line` is the 0-based line
/// number in the RFE file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSentence {
    pub attack_id: String,
    pub bank_record: usize,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfeEntry {
    pub id: String,
    pub path: String,
    pub attacks: Vec<String>,
    pub fields: RfeFields,
    pub planted: Vec<PlantedSentence>,
}

impl RfeEntry {
    pub fn has_attack(&self, attack_id: &str) -> bool {
        self.attacks.iter().any(|a| a == attack_id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub format: String,
    pub version: u32,
    pub config: CorpusConfig,
    pub config_hash: String,
    pub classes: Vec<String>,
    pub documents: Vec<DocumentEntry>,
    pub rfes: Vec<RfeEntry>,
    pub bank: String,
    pub beneficiaries: String,
    pub templates: String,
    pub patterns: String,
}

impl CorpusManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let m: CorpusManifest =
            serde_json::from_str(text).map_err(|e| CorpusError::Manifest(e.to_string()))?;
        if m.format != MANIFEST_FORMAT || m.version != 1 {
            return Err(CorpusError::Manifest(format!(
                "unsupported format {:?} version {}",
                m.format, m.version
            )));
        }
        for d in &m.documents {
            if !m.classes.contains(&d.label) {
                return Err(CorpusError::Manifest(format!(
                    "document {} has unknown label {:?}",
                    d.id, d.label
                )));
            }
        }
        Ok(m)
    }

    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        Self::parse(&text)
    }

    pub fn rfe(&self, id: &str) -> Option<&RfeEntry> {
        self.rfes.iter().find(|r| r.id == id)
    }
}

/// Which text channel feeds the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextChannel {
    Clean,
    Degraded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedDocument {
    pub entry: DocumentEntry,
    pub pages: Vec<PageImage>,
    pub clean_text: String,
    pub degraded_text: String,
}

impl GeneratedDocument {
    pub fn document(&self, channel: TextChannel) -> Document {
        Document {
            id: self.entry.id.clone(),
            pages: self.pages.clone(),
            text: match channel {
                TextChannel::Clean => self.clean_text.clone(),
                TextChannel::Degraded => self.degraded_text.clone(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedRfe {
    pub entry: RfeEntry,
    pub text: String,
}

/// A generated corpus held in memory.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub documents: Vec<GeneratedDocument>,
    pub rfes: Vec<GeneratedRfe>,
    pub bank: Vec<BankRecord>,
    pub beneficiaries: Vec<BeneficiaryRecord>,
}

impl Corpus {
    pub fn store(&self) -> Result<BeneficiaryStore, CorpusError> {
        Ok(BeneficiaryStore::from_records(self.beneficiaries.clone())?)
    }

    pub fn example_bank<T: Real>(&self) -> Result<ExampleBank<T>, CorpusError> {
        Ok(ExampleBank::from_records(&self.bank, Stopwords::default())?)
    }

    pub fn library(&self) -> Result<TemplateLibrary, CorpusError> {
        Ok(TemplateLibrary::from_manifest(
            &library_manifest(),
            |file| {
                TEMPLATES
                    .iter()
                    .find(|t| template_file(t) == file)
                    .map(|t| t.body.to_string())
                    .ok_or_else(|| "no such template".to_string())
            },
        )?)
    }

    pub fn rfe(&self, id: &str) -> Option<&GeneratedRfe> {
        self.rfes.iter().find(|r| r.entry.id == id)
    }

    /// Every file of the corpus as `(relative path, bytes)`, sorted by path.
    pub fn files(&self) -> Vec<(String, Vec<u8>)> {
        let mut out: Vec<(String, Vec<u8>)> = Vec::new();
        out.push((MANIFEST_FILE.into(), self.manifest.to_json().into_bytes()));
        let bank = serde_json::to_string_pretty(&self.bank).expect("bank serializes") + "\n";
        out.push((BANK_FILE.into(), bank.into_bytes()));
        let store =
            serde_json::to_string_pretty(&self.beneficiaries).expect("records serialize") + "\n";
        out.push((BENEFICIARIES_FILE.into(), store.into_bytes()));
        out.push((PATTERNS_FILE.into(), DEFAULT_PATTERNS.as_bytes().to_vec()));
        out.push((
            format!("{TEMPLATES_DIR}/{LIBRARY_MANIFEST}"),
            library_manifest().into_bytes(),
        ));
        for t in TEMPLATES {
            out.push((
                format!("{TEMPLATES_DIR}/{}", template_file(t)),
                t.body.as_bytes().to_vec(),
            ));
        }
        for d in &self.documents {
            for (path, page) in d.entry.pages.iter().zip(&d.pages) {
                out.push((path.clone(), encode_pgm(page)));
            }
            out.push((
                d.entry.clean_text.clone(),
                d.clean_text.clone().into_bytes(),
            ));
            out.push((
                d.entry.degraded_text.clone(),
                d.degraded_text.clone().into_bytes(),
            ));
        }
        for r in &self.rfes {
            out.push((r.entry.path.clone(), r.text.clone().into_bytes()));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CorpusError> {
        std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
        for (rel, bytes) in self.files() {
            let path = out_dir.join(&rel);
            write_atomic(&path, &bytes).map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }
}

fn template_file(t: &TemplateDef) -> String {
    format!("{}.txt", t.id)
}

fn library_manifest() -> String {
    let mut s = String::from("version = 1\n");
    for t in TEMPLATES {
        let soc = match t.soc {
            None => "\"*\"".to_string(),
            Some(codes) => format!(
                "[{}]",
                codes
                    .iter()
                    .map(|c| format!("\"{c}\""))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        };
        let _ = write!(
            s,
            "\n[[template]]\nid = \"{}\"\nattack = \"{}\"\nsoc = {}\nfile = \"{}\"\n",
            t.id,
            t.attack,
            soc,
            template_file(t)
        );
    }
    s
}

// ---------------------------------------------------------------------------
// Generation

/// Generates the whole corpus in memory.
pub fn generate(config: &CorpusConfig) -> Result<Corpus, CorpusError> {
    config.validate()?;
    let mut documents = Vec::new();
    for (c, class) in config.classes.iter().enumerate() {
        for k in 0..class.n_docs {
            let id = format!("doc-{:04}", documents.len());
            documents.push(generate_document(config, c, k, id));
        }
    }

    let plan = rfe_plan(config);
    let mut rfes = Vec::new();
    let mut beneficiaries = Vec::new();
    for (i, mix) in plan.iter().enumerate() {
        let person = generate_person(config.seed, i);
        let rfe = generate_rfe(config.seed, i, &config.attack_mix[*mix].attacks, &person);
        beneficiaries.push(person.record);
        rfes.push(rfe);
    }
    beneficiaries.sort_by(|a, b| a.case_number.cmp(&b.case_number));

    let manifest = CorpusManifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        config: config.clone(),
        config_hash: config.hash(),
        classes: config.classes.iter().map(|c| c.label.clone()).collect(),
        documents: documents.iter().map(|d| d.entry.clone()).collect(),
        rfes: rfes.iter().map(|r| r.entry.clone()).collect(),
        bank: BANK_FILE.into(),
        beneficiaries: BENEFICIARIES_FILE.into(),
        templates: TEMPLATES_DIR.into(),
        patterns: PATTERNS_FILE.into(),
    };
    Ok(Corpus {
        manifest,
        documents,
        rfes,
        bank: bank_records(),
        beneficiaries,
    })
}

/// Generates the corpus and writes it under `out_dir`.
pub fn generate_corpus(
    config: &CorpusConfig,
    out_dir: &Path,
) -> Result<CorpusManifest, CorpusError> {
    let corpus = generate(config)?;
    corpus.write(out_dir)?;
    Ok(corpus.manifest)
}

/// Index into `attack_mix` for each RFE, with exact counts per entry.
fn rfe_plan(config: &CorpusConfig) -> Vec<usize> {
    let weights: Vec<f64> = config.attack_mix.iter().map(|m| m.proportion).collect();
    let counts = apportion(config.n_rfes, &weights);
    let mut plan: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat_n(i, n))
        .collect();
    plan.shuffle(&mut stream(
        config.seed,
        STREAM_RFE_PLAN,
        config.n_rfes as u64,
    ));
    plan
}

fn generate_document(
    config: &CorpusConfig,
    class: usize,
    k: usize,
    id: String,
) -> GeneratedDocument {
    let spec = &config.classes[class];
    let item = ((class as u64) << 24) | k as u64;
    let mut rng = stream(config.seed, STREAM_DOCS, item);

    // some scans hold only a cover sheet, with no class layout at all
    let pages = if rng.gen_bool(0.1) {
        vec![render_continuation(&mut rng)]
    } else if rng.gen_bool(0.25) {
        vec![
            render_page(spec.layout, &mut rng),
            render_continuation(&mut rng),
        ]
    } else {
        vec![render_page(spec.layout, &mut rng)]
    };
    let n_pages = pages.len();
    let clean_text = document_text(spec.layout, &mut rng);
    let degraded_text = degrade(
        &clean_text,
        config.ocr_noise_rate,
        &mut stream(config.seed, STREAM_OCR, item),
    );
    let dir = format!("docs/{id}");
    GeneratedDocument {
        entry: DocumentEntry {
            pages: (1..=n_pages)
                .map(|p| format!("{dir}/page-{p}.pgm"))
                .collect(),
            clean_text: format!("{dir}/clean.txt"),
            degraded_text: format!("{dir}/ocr.txt"),
            label: spec.label.clone(),
            id,
        },
        pages,
        clean_text,
        degraded_text,
    }
}

fn document_text<R: Rng>(style: LayoutStyle, rng: &mut R) -> String {
    let (own, other) = class_phrases(style);
    let mut lines: Vec<String> = SHARED_PHRASES
        .choose_multiple(rng, 6)
        .map(|s| s.to_string())
        .collect();
    let n_own = rng.gen_range(3..=5);
    lines.extend(own.choose_multiple(rng, n_own).map(|s| s.to_string()));
    if rng.gen_bool(0.3) {
        lines.push(other.choose(rng).expect("non-empty").to_string());
    }
    lines.shuffle(rng);
    let name = format!(
        "Beneficiary {} {}",
        FIRST_NAMES.choose(rng).expect("non-empty"),
        LAST_NAMES.choose(rng).expect("non-empty")
    );
    let petitioner = format!("Petitioner {}", EMPLOYERS.choose(rng).expect("non-empty"));
    let receipt = format!(
        "Receipt Number {}{}",
        CASE_PREFIXES.choose(rng).expect("non-empty"),
        rng.gen_range(2_100_000_000u64..2_399_999_999)
    );
    let at = rng.gen_range(0..=lines.len());
    lines.insert(at, receipt);
    lines.push(petitioner);
    lines.push(name);
    lines.join("\n") + "\n"
}

/// Corrupts each non-newline character with probability `rate`: a random
/// letter replaces it, it is deleted, or a random letter follows it.
pub fn degrade<R: Rng + ?Sized>(text: &str, rate: f64, rng: &mut R) -> String {
    if rate <= 0.0 {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        if ch == '\n' || !rng.gen_bool(rate) {
            out.push(ch);
            continue;
        }
        let letter = (b'a' + rng.gen_range(0..26u8)) as char;
        match rng.gen_range(0..5) {
            0..=2 => out.push(letter),
            3 => {}
            _ => {
                out.push(ch);
                out.push(letter);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Page rendering

struct Canvas {
    img: PageImage,
    dx: i64,
    dy: i64,
}

impl Canvas {
    fn new<R: Rng>(rng: &mut R) -> Self {
        let paper = rng.gen_range(236..=252);
        Canvas {
            img: PageImage::filled(PAGE_WIDTH, PAGE_HEIGHT, paper),
            dx: rng.gen_range(-5..=5),
            dy: rng.gen_range(-5..=5),
        }
    }

    fn rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, v: u8) {
        let clip = |a: i64, max: usize| a.clamp(0, max as i64) as usize;
        let (w, h) = (PAGE_WIDTH, PAGE_HEIGHT);
        self.img.fill_rect(
            clip(x0 + self.dx, w),
            clip(y0 + self.dy, h),
            clip(x1 + self.dx, w),
            clip(y1 + self.dy, h),
            v,
        );
    }

    fn outline(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, v: u8) {
        self.rect(x0, y0, x1, y0 + 1, v);
        self.rect(x0, y1 - 1, x1, y1, v);
        self.rect(x0, y0, x0 + 1, y1, v);
        self.rect(x1 - 1, y0, x1, y1, v);
    }

    /// Rows of word-like dashes.
    fn text<R: Rng>(&mut self, rng: &mut R, x0: i64, x1: i64, y0: i64, y1: i64, pitch: i64) {
        let ink = rng.gen_range(50..=110);
        let mut y = y0;
        while y + 2 <= y1 {
            let end = if rng.gen_bool(0.2) {
                rng.gen_range(x0 + (x1 - x0) / 3..=x1)
            } else {
                x1
            };
            let mut x = x0;
            while x < end {
                let w = rng.gen_range(3..=9).min(end - x);
                self.rect(x, y, x + w, y + 2, ink);
                x += w + rng.gen_range(2..=3);
            }
            y += pitch;
        }
    }

    fn finish<R: Rng>(mut self, rng: &mut R) -> PageImage {
        if rng.gen_bool(0.15) {
            // washed-out scan with speckle
            let lift = rng.gen_range(40..=90) as f64;
            for y in 0..PAGE_HEIGHT {
                for x in 0..PAGE_WIDTH {
                    let p = self.img.get(x, y) as f64;
                    let v = lift + p * (255.0 - lift) / 255.0 + rng.gen_range(-20.0..20.0);
                    self.img.set(x, y, v.clamp(0.0, 255.0) as u8);
                }
            }
        }
        if rng.gen_bool(0.1) {
            let x = rng.gen_range(0..PAGE_WIDTH as i64 - 24);
            let y = rng.gen_range(0..PAGE_HEIGHT as i64 - 30);
            let v = rng.gen_range(60..=140);
            let (dx, dy) = (self.dx, self.dy);
            self.rect(
                x - dx,
                y - dy,
                x - dx + rng.gen_range(12..=24),
                y - dy + rng.gen_range(12..=30),
                v,
            );
        }
        self.img
    }
}

fn render_page<R: Rng>(style: LayoutStyle, rng: &mut R) -> PageImage {
    let mut c = Canvas::new(rng);
    let j = |rng: &mut R| rng.gen_range(-3..=3i64);
    match style {
        LayoutStyle::Approval => {
            let top = 8 + j(rng);
            let band = rng.gen_range(40..=80);
            c.rect(6, top, 122, top + rng.gen_range(9..=12), band);
            c.text(rng, 8, 100, top + 16, top + 26, 5);
            let by = 38 + j(rng);
            c.outline(6, by, 62, by + 34, 70);
            c.outline(66, by, 122, by + 34, 70);
            c.text(rng, 9, 59, by + 4, by + 31, 5);
            c.text(rng, 69, 119, by + 4, by + 31, 5);
            c.text(rng, 8, 120, by + 40, by + 80, 6);
            let tear = 126 + j(rng);
            let mut x = 4;
            while x < 124 {
                c.rect(x, tear, x + 4, tear + 1, 90);
                x += 7;
            }
            c.outline(8, tear + 6, 72, tear + 28, 80);
            c.text(rng, 11, 68, tear + 10, tear + 26, 5);
        }
        LayoutStyle::Receipt => {
            let top = 14 + j(rng);
            let band = rng.gen_range(40..=80);
            c.rect(6, top, 84, top + rng.gen_range(9..=12), band);
            c.rect(96, top - 4, 118, top + 16, rng.gen_range(30..=70));
            c.text(rng, 8, 84, top + 18, top + 26, 5);
            let by = 46 + j(rng);
            c.outline(6, by, 122, by + 30, 70);
            c.text(rng, 10, 118, by + 4, by + 27, 5);
            c.text(rng, 8, 120, by + 36, by + 84, 5);
            let bar = 136 + j(rng);
            let mut x = 10;
            while x < 70 {
                let w = rng.gen_range(1..=3);
                c.rect(x, bar, x + w, bar + 12, 30);
                x += w + rng.gen_range(1..=3);
            }
        }
    }
    c.finish(rng)
}

/// A plain text page shared by every class.
fn render_continuation<R: Rng>(rng: &mut R) -> PageImage {
    let mut c = Canvas::new(rng);
    c.rect(6, 8, 60, 12, rng.gen_range(60..=100));
    c.text(rng, 8, 120, 20, 140, 6);
    c.finish(rng)
}

// ---------------------------------------------------------------------------
// RFEs

struct Person {
    record: BeneficiaryRecord,
    name: String,
    employer: &'static str,
    attorney: Option<&'static str>,
}

fn case_number<R: Rng>(rng: &mut R, index: usize) -> String {
    let serial = 10_000 + (index as u64 * 7_919) % 90_000;
    format!(
        "{}{}{:03}{:05}",
        CASE_PREFIXES.choose(rng).expect("non-empty"),
        rng.gen_range(21..=23),
        rng.gen_range(0..1000),
        serial
    )
}

fn generate_person(seed: u64, index: usize) -> Person {
    let mut rng = stream(seed, STREAM_PEOPLE, index as u64);
    let case = case_number(&mut rng, index);
    let name = format!(
        "{} {}",
        FIRST_NAMES.choose(&mut rng).expect("non-empty"),
        LAST_NAMES.choose(&mut rng).expect("non-empty")
    );
    let occupation = OCCUPATIONS.choose(&mut rng).expect("non-empty");
    let record = BeneficiaryRecord {
        case_number: case,
        soc_code: occupation.soc.to_string(),
        field_of_study: occupation
            .fields
            .choose(&mut rng)
            .expect("non-empty")
            .to_string(),
        degree: DEGREES.choose(&mut rng).expect("non-empty").to_string(),
        institution: INSTITUTIONS
            .choose(&mut rng)
            .expect("non-empty")
            .to_string(),
    };
    let employer = EMPLOYERS.choose(&mut rng).expect("non-empty");
    let attorney = if rng.gen_bool(0.1) {
        None
    } else {
        Some(*ATTORNEYS.choose(&mut rng).expect("non-empty"))
    };
    Person {
        record,
        name,
        employer,
        attorney,
    }
}

/// Renders tokens as a sentence line.
fn sentence_line(tokens: &[String]) -> String {
    let mut s = tokens.join(" ");
    if let Some(first) = s.get(..1) {
        let upper = first.to_ascii_uppercase();
        s.replace_range(..1, &upper);
    }
    s.push('.');
    s
}

fn generate_rfe(seed: u64, index: usize, attacks: &[String], person: &Person) -> GeneratedRfe {
    let mut rng = stream(seed, STREAM_RFES, index as u64);
    let base = NaiveDate::from_ymd_opt(2021, 1, 4).expect("valid date");
    let notice = base + Days::new(rng.gen_range(0..900));
    let due = notice + Days::new(84);

    let mut lines = vec![
        "U.S. Department of Homeland Security".to_string(),
        "U.S. Citizenship and Immigration Services".to_string(),
        "REQUEST FOR EVIDENCE".to_string(),
        format!("Receipt Number: {}", person.record.case_number),
        format!("Date of Notice: {}", format_date(notice)),
        format!("Response Due: {}", due.format("%m/%d/%Y")),
        format!("Petitioner: {}", person.employer),
        format!("Beneficiary: {}", person.name),
    ];
    if let Some(a) = person.attorney {
        lines.push(format!("Attorney of Record: {a}"));
    }
    lines.push(String::new());
    let n_open = rng.gen_range(1..=2);
    lines.extend(
        RFE_OPENINGS
            .choose_multiple(&mut rng, n_open)
            .map(|s| s.to_string()),
    );

    // body: planted paraphrases and distractors, shuffled together
    let bank = bank_records();
    let mut body: Vec<(String, Option<(String, usize)>)> = Vec::new();
    for attack in attacks {
        let indices: Vec<usize> = (0..bank.len())
            .filter(|&i| &bank[i].attack_id == attack)
            .collect();
        let n = if rng.gen_bool(0.4) { 2 } else { 1 };
        for &i in indices.choose_multiple(&mut rng, n) {
            let tokens = tokenize(&normalize(&bank[i].sentence));
            let para = paraphrase_sentence(&tokens, &mut rng);
            body.push((sentence_line(&para), Some((attack.clone(), i))));
        }
    }
    let n_distract = rng.gen_range(3..=5);
    body.extend(
        RFE_DISTRACTORS
            .choose_multiple(&mut rng, n_distract)
            .map(|s| (s.to_string(), None)),
    );
    body.shuffle(&mut rng);
    let mut planted = Vec::new();
    for (line, source) in body {
        if let Some((attack_id, bank_record)) = source {
            planted.push(PlantedSentence {
                attack_id,
                bank_record,
                line: lines.len(),
            });
        }
        lines.push(line);
    }
    let n_close = rng.gen_range(1..=2);
    lines.extend(
        RFE_CLOSINGS
            .choose_multiple(&mut rng, n_close)
            .map(|s| s.to_string()),
    );

    let id = format!("rfe-{:03}", index + 1);
    GeneratedRfe {
        entry: RfeEntry {
            path: format!("rfes/{id}.txt"),
            id,
            attacks: attacks.to_vec(),
            fields: RfeFields {
                case_number: Some(person.record.case_number.clone()),
                employee_name: Some(person.name.clone()),
                employer_name: Some(person.employer.to_string()),
                attorney_name: person.attorney.map(str::to_string),
                rfe_date: Some(notice),
                response_due_date: Some(due),
            },
            planted,
        },
        text: lines.join("\n") + "\n",
    }
}

/// A planted sentence whose emitted tokens fall below the overlap bound.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapViolation {
    pub rfe: String,
    pub line: usize,
    pub overlap: f64,
}

/// Re-reads every planted line from the RFE text and checks it against its
/// source bank sentence.
pub fn audit_overlap(rfes: &[GeneratedRfe], bank: &[BankRecord]) -> Vec<OverlapViolation> {
    let mut out = Vec::new();
    for r in rfes {
        let lines: Vec<&str> = r.text.lines().collect();
        for p in &r.entry.planted {
            let emitted = lines
                .get(p.line)
                .map(|l| tokenize(&normalize(l)))
                .unwrap_or_default();
            let source = bank
                .get(p.bank_record)
                .map(|b| tokenize(&normalize(&b.sentence)))
                .unwrap_or_default();
            let overlap = token_overlap(&source, &emitted);
            if source.is_empty() || overlap < MIN_OVERLAP {
                out.push(OverlapViolation {
                    rfe: r.entry.id.clone(),
                    line: p.line,
                    overlap,
                });
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Loading a written corpus

#[derive(Clone, Debug)]
pub struct CorpusDocument {
    pub doc: Document,
    pub label: String,
}

pub fn load_document(
    dir: &Path,
    entry: &DocumentEntry,
    channel: TextChannel,
) -> Result<Document, CorpusError> {
    let mut pages = Vec::new();
    for p in &entry.pages {
        let path = dir.join(p);
        let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
        pages.push(decode_pgm(&bytes).map_err(|source| CorpusError::Image { path, source })?);
    }
    let rel = match channel {
        TextChannel::Clean => &entry.clean_text,
        TextChannel::Degraded => &entry.degraded_text,
    };
    let path = dir.join(rel);
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    Ok(Document {
        id: entry.id.clone(),
        pages,
        text,
    })
}

pub fn load_documents(
    dir: &Path,
    manifest: &CorpusManifest,
    channel: TextChannel,
) -> Result<Vec<CorpusDocument>, CorpusError> {
    manifest
        .documents
        .iter()
        .map(|e| {
            Ok(CorpusDocument {
                doc: load_document(dir, e, channel)?,
                label: e.label.clone(),
            })
        })
        .collect()
}

pub fn load_rfe_text(dir: &Path, entry: &RfeEntry) -> Result<String, CorpusError> {
    let path = dir.join(&entry.path);
    std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))
}
