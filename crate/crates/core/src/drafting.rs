//! RFE response drafting: field extraction, beneficiary lookup, template
//! selection and filling, and assembly of the final draft.
//!
//! Field extraction runs on the raw RFE text (no normalization), using the
//! regular expressions in a pattern file. Placeholders in templates have the
//! form `{{name}}`, where `name` is one of [`RFE_FIELDS`], [`RECORD_FIELDS`]
//! or `today`.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::attackdetect::{detect_in_text, AttackReport, DetectError, ExampleBank};
use crate::scalar::Real;

pub const RFE_FIELDS: [&str; 6] = [
    "case_number",
    "employee_name",
    "employer_name",
    "attorney_name",
    "rfe_date",
    "response_due_date",
];
pub const RECORD_FIELDS: [&str; 4] = ["soc_code", "field_of_study", "degree", "institution"];
pub const TODAY: &str = "today";

pub const DEFAULT_PATTERNS: &str = include_str!("../data/patterns.toml");

/// Fixed case header placed before the filled sections.
pub const PREAMBLE_TEMPLATE: &str = "\
RESPONSE TO REQUEST FOR EVIDENCE

Receipt Number: {{case_number}}
Petitioner: {{employer_name}}
Beneficiary: {{employee_name}}
Attorney of Record: {{attorney_name}}
Date of Request: {{rfe_date}}
Response Due: {{response_due_date}}
Date of Response: {{today}}

The petitioner respectfully submits the following in response to each issue raised in the Request for Evidence.";

/// Separates the preamble and consecutive sections in the draft text.
pub const SECTION_DELIMITER: &str = "\n\n----------------------------------------\n\n";

const DATE_OUT: &str = "%B %-d, %Y";

pub fn is_known_field(name: &str) -> bool {
    name == TODAY || RFE_FIELDS.contains(&name) || RECORD_FIELDS.contains(&name)
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum DraftError {
    #[error("pattern file: {0}")]
    Patterns(String),
    #[error("beneficiary store: {0}")]
    Store(String),
    #[error("duplicate case number {0:?} in beneficiary store")]
    DuplicateCase(String),
    #[error("invalid SOC code {0:?}; expected NN-NNNN")]
    BadSoc(String),
    #[error("no beneficiary record for case number {0:?}")]
    NotFound(String),
    #[error("template library: {0}")]
    Library(String),
    #[error("template {template:?}: {message}")]
    Template { template: String, message: String },
    #[error("no template applies to detected attack {0:?}")]
    NoTemplate(String),
    #[error("missing values for placeholders: {}", .0.join(", "))]
    MissingPlaceholders(Vec<String>),
    #[error("a draft needs at least one section")]
    EmptyDraft,
    #[error(transparent)]
    Detect(#[from] DetectError),
}

/// Values pulled out of an RFE. Anything not found is `None`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfeFields {
    pub case_number: Option<String>,
    pub employee_name: Option<String>,
    pub employer_name: Option<String>,
    pub attorney_name: Option<String>,
    pub rfe_date: Option<NaiveDate>,
    pub response_due_date: Option<NaiveDate>,
}

pub fn format_date(d: NaiveDate) -> String {
    d.format(DATE_OUT).to_string()
}

/// Accepts `Month DD, YYYY` and `MM/DD/YYYY`.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%B %d, %Y")
        .or_else(|_| NaiveDate::parse_from_str(s, "%m/%d/%Y"))
        .ok()
}

impl RfeFields {
    /// Placeholder values for the fields that are present.
    pub fn values(&self) -> FieldMap {
        let mut m = FieldMap::new();
        let strings = [
            ("case_number", &self.case_number),
            ("employee_name", &self.employee_name),
            ("employer_name", &self.employer_name),
            ("attorney_name", &self.attorney_name),
        ];
        for (k, v) in strings {
            if let Some(v) = v {
                m.insert(k.to_string(), v.clone());
            }
        }
        for (k, v) in [
            ("rfe_date", self.rfe_date),
            ("response_due_date", self.response_due_date),
        ] {
            if let Some(d) = v {
                m.insert(k.to_string(), format_date(d));
            }
        }
        m
    }
}

pub type FieldMap = BTreeMap<String, String>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternFile {
    version: u32,
    fields: BTreeMap<String, String>,
}

/// Compiled extraction patterns, one per RFE field.
#[derive(Clone, Debug)]
pub struct FieldPatterns {
    patterns: Vec<(String, Regex)>,
}

impl FieldPatterns {
    pub fn parse(text: &str) -> Result<Self, DraftError> {
        let file: PatternFile =
            toml::from_str(text).map_err(|e| DraftError::Patterns(e.to_string()))?;
        if file.version != 1 {
            return Err(DraftError::Patterns(format!(
                "unsupported version {}",
                file.version
            )));
        }
        let mut patterns = Vec::new();
        for (name, src) in file.fields {
            if !RFE_FIELDS.contains(&name.as_str()) {
                return Err(DraftError::Patterns(format!("unknown field {name:?}")));
            }
            let re = Regex::new(&src).map_err(|e| DraftError::Patterns(format!("{name}: {e}")))?;
            if !re.capture_names().any(|n| n == Some("value")) {
                return Err(DraftError::Patterns(format!(
                    "{name}: pattern has no `value` group"
                )));
            }
            patterns.push((name, re));
        }
        Ok(FieldPatterns { patterns })
    }

    fn capture<'t>(&self, field: &str, text: &'t str) -> Option<&'t str> {
        let (_, re) = self.patterns.iter().find(|(n, _)| n == field)?;
        re.captures(text)
            .and_then(|c| c.name("value"))
            .map(|m| m.as_str())
    }
}

impl Default for FieldPatterns {
    fn default() -> Self {
        FieldPatterns::parse(DEFAULT_PATTERNS).expect("shipped patterns are valid")
    }
}

/// Pulls the labeled fields out of raw RFE text.
pub fn extract_fields(raw_text: &str, patterns: &FieldPatterns) -> RfeFields {
    let text = |f| patterns.capture(f, raw_text).map(str::to_string);
    let date = |f| {
        let raw = patterns.capture(f, raw_text)?;
        let parsed = parse_date(raw);
        if parsed.is_none() {
            log::warn!("{f}: unparseable date {raw:?}");
        }
        parsed
    };
    let mut fields = RfeFields {
        case_number: text("case_number"),
        employee_name: text("employee_name"),
        employer_name: text("employer_name"),
        attorney_name: text("attorney_name"),
        rfe_date: date("rfe_date"),
        response_due_date: date("response_due_date"),
    };
    if let (Some(issued), Some(due)) = (fields.rfe_date, fields.response_due_date) {
        if due < issued {
            log::warn!("response due date {due} precedes notice date {issued}; ignoring it");
            fields.response_due_date = None;
        }
    }
    fields
}

fn valid_soc(code: &str) -> bool {
    let b = code.as_bytes();
    b.len() == 7
        && b[2] == b'-'
        && b.iter()
            .enumerate()
            .all(|(i, c)| i == 2 || c.is_ascii_digit())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeneficiaryRecord {
    pub case_number: String,
    pub soc_code: String,
    pub field_of_study: String,
    pub degree: String,
    pub institution: String,
}

impl BeneficiaryRecord {
    pub fn values(&self) -> FieldMap {
        [
            ("soc_code", &self.soc_code),
            ("field_of_study", &self.field_of_study),
            ("degree", &self.degree),
            ("institution", &self.institution),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
    }
}

/// Beneficiary records keyed by case number.
#[derive(Clone, Debug, Default)]
pub struct BeneficiaryStore {
    records: BTreeMap<String, BeneficiaryRecord>,
}

impl BeneficiaryStore {
    pub fn from_records(records: Vec<BeneficiaryRecord>) -> Result<Self, DraftError> {
        let mut map = BTreeMap::new();
        for r in records {
            if r.case_number.is_empty() {
                return Err(DraftError::Store("empty case number".into()));
            }
            if !valid_soc(&r.soc_code) {
                return Err(DraftError::BadSoc(r.soc_code));
            }
            let key = r.case_number.clone();
            if map.insert(key.clone(), r).is_some() {
                return Err(DraftError::DuplicateCase(key));
            }
        }
        Ok(BeneficiaryStore { records: map })
    }

    /// Parses the store file: a JSON array of records.
    pub fn parse(text: &str) -> Result<Self, DraftError> {
        let records: Vec<BeneficiaryRecord> =
            serde_json::from_str(text).map_err(|e| DraftError::Store(e.to_string()))?;
        Self::from_records(records)
    }

    pub fn to_json(&self) -> String {
        let records: Vec<&BeneficiaryRecord> = self.records.values().collect();
        serde_json::to_string_pretty(&records).expect("records serialize") + "\n"
    }

    pub fn lookup(&self, case_number: &str) -> Result<&BeneficiaryRecord, DraftError> {
        self.records
            .get(case_number)
            .ok_or_else(|| DraftError::NotFound(case_number.to_string()))
    }

    pub fn without(&self, case_number: &str) -> Self {
        let mut records = self.records.clone();
        records.remove(case_number);
        BeneficiaryStore { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Which SOC codes a template is written for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SocSelector {
    Any,
    Codes(BTreeSet<String>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Template {
    pub id: String,
    pub applicable_attack: String,
    pub soc_selector: SocSelector,
    pub body: String,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

/// Splits a body into literal text and `{{name}}` slots. Any `{{` that does
/// not open a well-formed slot is an error.
fn parse_body(body: &str) -> Result<Vec<Piece<'_>>, String> {
    let mut pieces = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        if start > 0 {
            pieces.push(Piece::Text(&rest[..start]));
        }
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| "unterminated `{{`".to_string())?;
        let name = after[..end].trim();
        if name.is_empty() || !name.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') {
            return Err(format!("malformed placeholder {:?}", &after[..end]));
        }
        pieces.push(Piece::Slot(name));
        rest = &after[end + 2..];
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest));
    }
    Ok(pieces)
}

impl Template {
    pub fn new(
        id: impl Into<String>,
        applicable_attack: impl Into<String>,
        soc_selector: SocSelector,
        body: impl Into<String>,
    ) -> Result<Self, DraftError> {
        let t = Template {
            id: id.into(),
            applicable_attack: applicable_attack.into(),
            soc_selector,
            body: body.into(),
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<(), DraftError> {
        let fail = |message: String| DraftError::Template {
            template: self.id.clone(),
            message,
        };
        if self.id.is_empty() || self.applicable_attack.is_empty() {
            return Err(fail("id and attack must be non-empty".into()));
        }
        if let SocSelector::Codes(codes) = &self.soc_selector {
            if codes.is_empty() {
                return Err(fail("empty SOC selector".into()));
            }
            if let Some(bad) = codes.iter().find(|c| !valid_soc(c)) {
                return Err(fail(format!("invalid SOC code {bad:?}")));
            }
        }
        for p in parse_body(&self.body).map_err(fail)? {
            if let Piece::Slot(name) = p {
                if !is_known_field(name) {
                    return Err(fail(format!("unknown placeholder {name:?}")));
                }
            }
        }
        Ok(())
    }

    /// Distinct placeholder names in order of first use.
    pub fn placeholders(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in parse_body(&self.body).unwrap_or_default() {
            if let Piece::Slot(n) = p {
                if !out.iter().any(|o| o == n) {
                    out.push(n.to_string());
                }
            }
        }
        out
    }

    fn matches_soc(&self, soc: &str) -> bool {
        matches!(&self.soc_selector, SocSelector::Codes(c) if c.contains(soc))
    }
}

/// Text produced by filling a template. `inserted` holds the byte ranges
/// of substituted values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Filled {
    pub text: String,
    pub inserted: Vec<Range<usize>>,
    pub missing: Vec<String>,
}

fn fill(body: &str, values: &FieldMap) -> Filled {
    let mut out = Filled {
        text: String::with_capacity(body.len()),
        inserted: Vec::new(),
        missing: Vec::new(),
    };
    // bodies are validated on construction; an unparseable one is kept verbatim
    let pieces = parse_body(body).unwrap_or_else(|_| vec![Piece::Text(body)]);
    for p in pieces {
        match p {
            Piece::Text(t) => out.text.push_str(t),
            Piece::Slot(name) => match values.get(name) {
                Some(v) => {
                    let start = out.text.len();
                    out.text.push_str(v);
                    out.inserted.push(start..out.text.len());
                }
                None => {
                    out.text.push_str(&format!("[MISSING: {name}]"));
                    if !out.missing.iter().any(|m| m == name) {
                        out.missing.push(name.to_string());
                    }
                }
            },
        }
    }
    out
}

/// Replaces every placeholder in one pass; values are never re-expanded.
/// Fails, naming every missing value, if any placeholder has no value.
pub fn fill_template(t: &Template, values: &FieldMap) -> Result<Filled, DraftError> {
    let filled = fill(&t.body, values);
    if filled.missing.is_empty() {
        Ok(filled)
    } else {
        Err(DraftError::MissingPlaceholders(filled.missing))
    }
}

/// Like [`fill_template`] but renders missing values as `[MISSING: name]`
/// and reports them instead of failing.
pub fn fill_template_partial(t: &Template, values: &FieldMap) -> Filled {
    fill(&t.body, values)
}

/// Byte offsets of `{{` markers in `text` that are not inside an
/// inserted value.
pub fn unresolved_markers(text: &str, inserted: &[Range<usize>]) -> Vec<usize> {
    text.match_indices("{{")
        .map(|(i, _)| i)
        .filter(|&i| !inserted.iter().any(|r| r.start <= i && i < r.end))
        .collect()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SocEntry {
    Wildcard(String),
    Codes(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    id: String,
    attack: String,
    soc: SocEntry,
    file: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryManifest {
    version: u32,
    #[serde(default)]
    template: Vec<ManifestEntry>,
}

/// Name of the manifest inside a template library directory.
pub const LIBRARY_MANIFEST: &str = "manifest.toml";

#[derive(Clone, Debug, Default)]
pub struct TemplateLibrary {
    templates: Vec<Template>,
}

impl TemplateLibrary {
    pub fn new(templates: Vec<Template>) -> Result<Self, DraftError> {
        for (i, t) in templates.iter().enumerate() {
            t.validate()?;
            if templates[..i].iter().any(|o| o.id == t.id) {
                return Err(DraftError::Library(format!(
                    "duplicate template id {:?}",
                    t.id
                )));
            }
        }
        Ok(TemplateLibrary { templates })
    }

    /// Builds from manifest text, reading bodies through `read_body`.
    pub fn from_manifest(
        manifest: &str,
        mut read_body: impl FnMut(&str) -> Result<String, String>,
    ) -> Result<Self, DraftError> {
        let m: LibraryManifest =
            toml::from_str(manifest).map_err(|e| DraftError::Library(e.to_string()))?;
        if m.version != 1 {
            return Err(DraftError::Library(format!(
                "unsupported version {}",
                m.version
            )));
        }
        let mut templates = Vec::new();
        for e in m.template {
            let soc_selector = match e.soc {
                SocEntry::Wildcard(s) if s == "*" => SocSelector::Any,
                SocEntry::Wildcard(s) => {
                    return Err(DraftError::Library(format!(
                        "{}: soc must be \"*\" or a list, got {s:?}",
                        e.id
                    )))
                }
                SocEntry::Codes(c) => SocSelector::Codes(c.into_iter().collect()),
            };
            let body = read_body(&e.file)
                .map_err(|err| DraftError::Library(format!("{}: {err}", e.file)))?;
            templates.push(Template {
                id: e.id,
                applicable_attack: e.attack,
                soc_selector,
                body,
            });
        }
        Self::new(templates)
    }

    pub fn load_dir(dir: &Path) -> Result<Self, DraftError> {
        let manifest = std::fs::read_to_string(dir.join(LIBRARY_MANIFEST))
            .map_err(|e| DraftError::Library(format!("{}: {e}", dir.display())))?;
        Self::from_manifest(&manifest, |file| {
            if file.contains("..") || Path::new(file).is_absolute() {
                return Err("template paths must stay inside the library".into());
            }
            std::fs::read_to_string(dir.join(file)).map_err(|e| e.to_string())
        })
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn get(&self, id: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.id == id)
    }
}

/// For each detected attack, in report order: every template written for
/// the beneficiary's SOC code, or else that attack's wildcard templates.
/// Without a SOC code only wildcards qualify.
pub fn select_templates<'l, T: Real>(
    report: &AttackReport<T>,
    soc_code: Option<&str>,
    library: &'l TemplateLibrary,
) -> Result<Vec<&'l Template>, DraftError> {
    let mut out = Vec::new();
    for attack in &report.detected {
        let for_attack = || {
            library
                .templates
                .iter()
                .filter(|t| t.applicable_attack == attack.id)
        };
        let specific: Vec<&Template> = match soc_code {
            Some(soc) => for_attack().filter(|t| t.matches_soc(soc)).collect(),
            None => Vec::new(),
        };
        let chosen = if specific.is_empty() {
            for_attack()
                .filter(|t| t.soc_selector == SocSelector::Any)
                .collect()
        } else {
            specific
        };
        if chosen.is_empty() {
            return Err(DraftError::NoTemplate(attack.id.clone()));
        }
        out.extend(chosen);
    }
    Ok(out)
}

/// Similarity pair that triggered a section's attack.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvidenceRef {
    pub sentence: usize,
    pub example: usize,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub template_id: String,
    pub attack_id: String,
    pub filled: Filled,
    pub evidence: Vec<EvidenceRef>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DraftStatus {
    Complete,
    Incomplete,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResponseDraft {
    pub preamble: Filled,
    pub sections: Vec<Section>,
    /// Placeholders left unfilled in the selected templates, sorted.
    pub missing_fields: Vec<String>,
    /// RFE fields missing from the preamble; informational only.
    pub preamble_missing: Vec<String>,
    pub status: DraftStatus,
}

fn trim_newlines(s: &str) -> &str {
    s.trim_end_matches(['\n', '\r'])
}

impl ResponseDraft {
    /// Preamble, then each section, separated by [`SECTION_DELIMITER`],
    /// ending with a single newline.
    pub fn text(&self) -> String {
        let mut out = trim_newlines(&self.preamble.text).to_string();
        for s in &self.sections {
            out.push_str(SECTION_DELIMITER);
            out.push_str(trim_newlines(&s.filled.text));
        }
        out.push('\n');
        out
    }

    /// Template-authored `{{` markers left in the output; always empty for
    /// drafts built by [`assemble_response`].
    pub fn unresolved_markers(&self) -> Vec<usize> {
        let mut found = unresolved_markers(&self.preamble.text, &self.preamble.inserted);
        for s in &self.sections {
            found.extend(unresolved_markers(&s.filled.text, &s.filled.inserted));
        }
        found
    }

    pub fn manifest_json(&self) -> serde_json::Value {
        json!({
            "status": self.status,
            "missing_fields": self.missing_fields,
            "preamble_missing": self.preamble_missing,
            "sections": self.sections.iter().map(|s| json!({
                "template_id": s.template_id,
                "attack_id": s.attack_id,
                "missing_fields": s.filled.missing,
                "evidence": s.evidence,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Prepends the case-header preamble to the filled sections.
pub fn assemble_response(
    sections: Vec<Section>,
    fields: &RfeFields,
    today: Option<NaiveDate>,
) -> Result<ResponseDraft, DraftError> {
    if sections.is_empty() {
        return Err(DraftError::EmptyDraft);
    }
    let mut values = fields.values();
    if let Some(d) = today {
        values.insert(TODAY.to_string(), format_date(d));
    }
    let preamble = fill(PREAMBLE_TEMPLATE, &values);
    let missing: BTreeSet<String> = sections
        .iter()
        .flat_map(|s| s.filled.missing.iter().cloned())
        .collect();
    Ok(ResponseDraft {
        preamble_missing: preamble.missing.clone(),
        preamble,
        status: if missing.is_empty() {
            DraftStatus::Complete
        } else {
            DraftStatus::Incomplete
        },
        missing_fields: missing.into_iter().collect(),
        sections,
    })
}

/// Everything a draft is built from besides the RFE text.
pub struct DraftInputs<'a, T> {
    pub bank: &'a ExampleBank<T>,
    pub store: &'a BeneficiaryStore,
    pub library: &'a TemplateLibrary,
    pub patterns: &'a FieldPatterns,
    pub tau: T,
    /// Value of `{{today}}`; defaults to the RFE's notice date.
    pub today: Option<NaiveDate>,
}

#[derive(Clone, Debug)]
pub struct DraftOutcome<T> {
    pub fields: RfeFields,
    pub report: AttackReport<T>,
    pub record: Option<BeneficiaryRecord>,
    /// Why the beneficiary lookup failed, if it did.
    pub lookup_error: Option<DraftError>,
    pub draft: ResponseDraft,
}

impl<T: Real> DraftOutcome<T> {
    pub fn manifest_json(&self, bank: &ExampleBank<T>) -> serde_json::Value {
        let mut m = self.draft.manifest_json();
        let obj = m.as_object_mut().expect("object");
        obj.insert("case_number".into(), json!(self.fields.case_number));
        obj.insert("beneficiary_found".into(), json!(self.record.is_some()));
        obj.insert(
            "lookup_error".into(),
            json!(self.lookup_error.as_ref().map(|e| e.to_string())),
        );
        obj.insert("report".into(), self.report.to_json(bank));
        m
    }
}

/// Detect, extract, look up, select, fill and assemble.
///
/// A failed beneficiary lookup does not abort: templates are chosen from
/// wildcards and the draft comes back incomplete.
pub fn draft_response<T: Real>(
    rfe_text: &str,
    inputs: &DraftInputs<'_, T>,
) -> Result<DraftOutcome<T>, DraftError> {
    let report = detect_in_text(rfe_text, inputs.bank, inputs.tau)?;
    let fields = extract_fields(rfe_text, inputs.patterns);
    let lookup = match &fields.case_number {
        Some(case) => inputs.store.lookup(case).cloned(),
        None => Err(DraftError::NotFound(String::new())),
    };
    let (record, lookup_error) = match lookup {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e)),
    };
    let today = inputs.today.or(fields.rfe_date);

    let mut values = fields.values();
    if let Some(r) = &record {
        values.extend(r.values());
    }
    if let Some(d) = today {
        values.insert(TODAY.to_string(), format_date(d));
    }

    let selected = select_templates(
        &report,
        record.as_ref().map(|r| r.soc_code.as_str()),
        inputs.library,
    )?;
    let sections = selected
        .into_iter()
        .map(|t| {
            let attack = inputs
                .bank
                .attack_index(&t.applicable_attack)
                .expect("detected attack");
            Section {
                template_id: t.id.clone(),
                attack_id: t.applicable_attack.clone(),
                filled: fill_template_partial(t, &values),
                evidence: report
                    .evidence_for(attack)
                    .map(|e| EvidenceRef {
                        sentence: e.sentence,
                        example: inputs.bank.examples()[e.example].record,
                        similarity: e.similarity.to_f64().unwrap_or(f64::NAN),
                    })
                    .collect(),
            }
        })
        .collect();
    let draft = assemble_response(sections, &fields, today)?;
    Ok(DraftOutcome {
        fields,
        report,
        record,
        lookup_error,
        draft,
    })
}
