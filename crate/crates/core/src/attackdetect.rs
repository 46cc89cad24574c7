//! Similarity-threshold detection of RFE attack types.
//!
//! Every sentence of an RFE is compared against every example sentence in
//! the bank. An attack is present when some pair's cosine similarity strictly
//! exceeds the threshold and the example belongs to that attack.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::scalar::Real;
use crate::textprep::{clean_tokens, normalize, split_sentences, tokenize, Stopwords};
use crate::vectorspace::{
    cosine, fit_vocab, tfidf_vector, NRange, SparseVector, VectorError, Vocabulary,
};

pub const DEFAULT_TAU: f64 = 0.6;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("example bank is empty")]
    EmptyBank,
    #[error("attack type {0:?} has no usable example sentences")]
    NoExamples(String),
    #[error("attack id {0:?} is declared with conflicting descriptions")]
    DuplicateId(String),
    #[error("attack id must be non-empty")]
    EmptyId,
    #[error("bank file: {0}")]
    Parse(String),
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("similarity matrix has {found} columns but the bank has {expected} examples")]
    Shape { expected: usize, found: usize },
    #[error("unknown attack id {0:?}")]
    UnknownAttack(String),
    #[error(transparent)]
    Vector(#[from] VectorError),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttackType {
    pub id: String,
    pub description: String,
}

/// One line of the bank file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankRecord {
    pub attack_id: String,
    pub description: String,
    pub sentence: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    /// Index into [`ExampleBank::attacks`].
    pub attack: usize,
    /// Position of the source record in the bank file.
    pub record: usize,
    pub tokens: Vec<String>,
}

/// Labeled example sentences in a TF-IDF space fitted on the examples.
#[derive(Clone, Debug)]
pub struct ExampleBank<T> {
    attacks: Vec<AttackType>,
    examples: Vec<Example>,
    vectors: Vec<SparseVector<T>>,
    vocab: Vocabulary,
    stopwords: Stopwords,
    dropped: Vec<usize>,
}

fn clean_sentence(sentence: &str, stopwords: &Stopwords) -> Vec<String> {
    clean_tokens(&tokenize(&normalize(sentence)), stopwords)
}

struct Prepared {
    attacks: Vec<AttackType>,
    examples: Vec<Example>,
    dropped: Vec<usize>,
}

fn prepare(records: &[BankRecord], stopwords: &Stopwords) -> Result<Prepared, DetectError> {
    if records.is_empty() {
        return Err(DetectError::EmptyBank);
    }
    let mut attacks: Vec<AttackType> = Vec::new();
    let mut examples = Vec::new();
    let mut dropped = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.attack_id.is_empty() {
            return Err(DetectError::EmptyId);
        }
        let attack = match attacks.iter().position(|a| a.id == r.attack_id) {
            Some(a) if attacks[a].description != r.description => {
                return Err(DetectError::DuplicateId(r.attack_id.clone()))
            }
            Some(a) => a,
            None => {
                attacks.push(AttackType {
                    id: r.attack_id.clone(),
                    description: r.description.clone(),
                });
                attacks.len() - 1
            }
        };
        let tokens = clean_sentence(&r.sentence, stopwords);
        if tokens.is_empty() {
            log::warn!(
                "bank record {i} ({}) has no tokens after cleaning; dropped",
                r.attack_id
            );
            dropped.push(i);
            continue;
        }
        examples.push(Example {
            attack,
            record: i,
            tokens,
        });
    }
    for (a, attack) in attacks.iter().enumerate() {
        if !examples.iter().any(|e| e.attack == a) {
            return Err(DetectError::NoExamples(attack.id.clone()));
        }
    }
    Ok(Prepared {
        attacks,
        examples,
        dropped,
    })
}

impl<T: Real> ExampleBank<T> {
    /// Cleans the example sentences and fits a vocabulary with n in {1, 2, 3}
    /// on them. Attacks are ordered by first appearance.
    pub fn from_records(records: &[BankRecord], stopwords: Stopwords) -> Result<Self, DetectError> {
        let prepared = prepare(records, &stopwords)?;
        let corpus: Vec<&[String]> = prepared
            .examples
            .iter()
            .map(|e| e.tokens.as_slice())
            .collect();
        let vocab = fit_vocab(&corpus, &NRange::up_to_trigrams())?;
        Ok(Self::assemble(prepared, vocab, stopwords))
    }

    /// Like [`ExampleBank::from_records`] but vectorizes in a given space.
    pub fn with_vocabulary(
        records: &[BankRecord],
        stopwords: Stopwords,
        vocab: Vocabulary,
    ) -> Result<Self, DetectError> {
        let prepared = prepare(records, &stopwords)?;
        Ok(Self::assemble(prepared, vocab, stopwords))
    }

    fn assemble(prepared: Prepared, vocab: Vocabulary, stopwords: Stopwords) -> Self {
        let vectors = prepared
            .examples
            .iter()
            .map(|e| tfidf_vector(&e.tokens, &vocab))
            .collect();
        ExampleBank {
            attacks: prepared.attacks,
            examples: prepared.examples,
            vectors,
            vocab,
            stopwords,
            dropped: prepared.dropped,
        }
    }

    /// Attack types in declaration order.
    pub fn attacks(&self) -> &[AttackType] {
        &self.attacks
    }

    pub fn attack_index(&self, id: &str) -> Option<usize> {
        self.attacks.iter().position(|a| a.id == id)
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn vectors(&self) -> &[SparseVector<T>] {
        &self.vectors
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn stopwords(&self) -> &Stopwords {
        &self.stopwords
    }

    /// Record positions dropped because they cleaned to nothing.
    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Cleaned sentences of an RFE, split on newlines with the bank's
    /// stopwords.
    pub fn sentences(&self, text: &str) -> Vec<Vec<String>> {
        split_sentences(text, &self.stopwords)
    }
}

/// Parses the bank file: a JSON array of `{attack_id, description, sentence}`.
pub fn parse_bank_records(text: &str) -> Result<Vec<BankRecord>, DetectError> {
    if text.trim().is_empty() {
        return Err(DetectError::EmptyBank);
    }
    serde_json::from_str(text).map_err(|e| DetectError::Parse(e.to_string()))
}

pub fn load_bank<T: Real>(text: &str, stopwords: Stopwords) -> Result<ExampleBank<T>, DetectError> {
    ExampleBank::from_records(&parse_bank_records(text)?, stopwords)
}

/// Row-major `sentences x examples` cosine similarities.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> SimilarityMatrix<T> {
    pub fn from_rows(rows: Vec<Vec<T>>, cols: usize) -> Self {
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        SimilarityMatrix {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn similarity_matrix<T: Real>(
    rfe_sentences: &[Vec<String>],
    bank: &ExampleBank<T>,
) -> SimilarityMatrix<T> {
    let cols = bank.vectors.len();
    let mut data = Vec::with_capacity(rfe_sentences.len() * cols);
    for s in rfe_sentences {
        let v = tfidf_vector::<T>(s, &bank.vocab);
        for e in &bank.vectors {
            data.push(cosine(&v, e).expect("same vocabulary"));
        }
    }
    SimilarityMatrix {
        rows: rfe_sentences.len(),
        cols,
        data,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evidence<T> {
    pub sentence: usize,
    pub example: usize,
    pub attack: usize,
    pub similarity: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackReport<T> {
    /// Detected attack types in bank declaration order.
    pub detected: Vec<AttackType>,
    /// Every pair above threshold, most similar first; ties by sentence,
    /// then example index.
    pub evidence: Vec<Evidence<T>>,
    pub threshold: T,
}

impl<T: Real> AttackReport<T> {
    pub fn contains(&self, attack_id: &str) -> bool {
        self.detected.iter().any(|a| a.id == attack_id)
    }

    pub fn evidence_for(&self, attack: usize) -> impl Iterator<Item = &Evidence<T>> {
        self.evidence.iter().filter(move |e| e.attack == attack)
    }

    pub fn to_json(&self, bank: &ExampleBank<T>) -> serde_json::Value {
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        json!({
            "threshold": f(self.threshold),
            "detected": self.detected.iter().map(|a| &a.id).collect::<Vec<_>>(),
            "evidence": self.evidence.iter().map(|e| json!({
                "sentence": e.sentence,
                "example": bank.examples[e.example].record,
                "attack_id": bank.attacks[e.attack].id,
                "similarity": f(e.similarity),
            })).collect::<Vec<_>>(),
        })
    }
}

pub fn check_threshold<T: Real>(tau: T) -> Result<(), DetectError> {
    if tau >= T::zero() && tau <= T::one() {
        Ok(())
    } else {
        Err(DetectError::Threshold(tau.to_f64().unwrap_or(f64::NAN)))
    }
}

/// Applies the strict `> tau` rule to every matrix entry.
pub fn detect_attacks<T: Real>(
    matrix: &SimilarityMatrix<T>,
    bank: &ExampleBank<T>,
    tau: T,
) -> Result<AttackReport<T>, DetectError> {
    check_threshold(tau)?;
    if matrix.cols != bank.examples.len() {
        return Err(DetectError::Shape {
            expected: bank.examples.len(),
            found: matrix.cols,
        });
    }
    let mut hit = vec![false; bank.attacks.len()];
    let mut evidence = Vec::new();
    for i in 0..matrix.rows {
        for (j, &s) in matrix.row(i).iter().enumerate() {
            if s > tau {
                let attack = bank.examples[j].attack;
                hit[attack] = true;
                evidence.push(Evidence {
                    sentence: i,
                    example: j,
                    attack,
                    similarity: s,
                });
            }
        }
    }
    // stable sort keeps (sentence, example) order among equal similarities
    evidence.sort_by(|a, b| b.similarity.partial_cmp(&a.similarity).expect("finite"));
    let detected = bank
        .attacks
        .iter()
        .zip(&hit)
        .filter(|(_, &h)| h)
        .map(|(a, _)| a.clone())
        .collect();
    Ok(AttackReport {
        detected,
        evidence,
        threshold: tau,
    })
}

/// Splits, vectorizes and thresholds one RFE's raw text.
pub fn detect_in_text<T: Real>(
    text: &str,
    bank: &ExampleBank<T>,
    tau: T,
) -> Result<AttackReport<T>, DetectError> {
    let sentences = bank.sentences(text);
    detect_attacks(&similarity_matrix(&sentences, bank), bank, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, s: &str) -> BankRecord {
        BankRecord {
            attack_id: id.into(),
            description: id.to_uppercase(),
            sentence: s.into(),
        }
    }

    fn bank() -> ExampleBank<f64> {
        ExampleBank::from_records(
            &[
                rec("so", "position does not qualify as a specialty occupation"),
                rec("so", "duties are not so complex that a degree is required"),
                rec(
                    "so",
                    "the proffered position normally requires a bachelor degree",
                ),
                rec(
                    "eer",
                    "petitioner has not established an employer employee relationship",
                ),
                rec(
                    "eer",
                    "evidence of the right to control the work of the beneficiary",
                ),
                rec("eer", "itinerary of the work locations was not submitted"),
            ],
            Stopwords::default(),
        )
        .unwrap()
    }

    #[test]
    fn load_bank_examples() {
        let b = bank();
        assert_eq!(b.len(), 6);
        assert_eq!(b.vectors().len(), 6);
        assert_eq!(b.attacks().len(), 2);
        assert_eq!(b.vocab().n_range(), &NRange::up_to_trigrams());
        for v in b.vectors() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sentences_cleaning_to_nothing_are_dropped() {
        let b: ExampleBank<f64> = ExampleBank::from_records(
            &[
                rec("so", "the of and 123"),
                rec("so", "specialty occupation"),
            ],
            Stopwords::default(),
        )
        .unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.dropped(), &[0]);
        assert_eq!(b.examples()[0].record, 1);

        let err = ExampleBank::<f64>::from_records(
            &[rec("so", "specialty occupation"), rec("eer", "!!! 42")],
            Stopwords::default(),
        )
        .unwrap_err();
        assert_eq!(err, DetectError::NoExamples("eer".into()));
    }

    #[test]
    fn bank_file_errors() {
        assert_eq!(
            load_bank::<f64>("", Stopwords::default()).unwrap_err(),
            DetectError::EmptyBank
        );
        assert_eq!(
            load_bank::<f64>("[]", Stopwords::default()).unwrap_err(),
            DetectError::EmptyBank
        );
        assert!(matches!(
            load_bank::<f64>("{", Stopwords::default()),
            Err(DetectError::Parse(_))
        ));
        let conflicting = r#"[
            {"attack_id":"so","description":"Specialty","sentence":"specialty occupation"},
            {"attack_id":"so","description":"Other","sentence":"degree required"}
        ]"#;
        assert_eq!(
            load_bank::<f64>(conflicting, Stopwords::default()).unwrap_err(),
            DetectError::DuplicateId("so".into())
        );
    }

    #[test]
    fn similarity_matrix_examples() {
        let b = bank();
        let sents =
            b.sentences("Position does not qualify as a specialty occupation.\nlunch menu tuesday");
        let m = similarity_matrix(&sents, &b);
        assert_eq!((m.rows(), m.cols()), (2, 6));
        assert!((m.get(0, 0) - 1.0).abs() < 1e-9);
        assert!(m.row(1).iter().all(|&v| v == 0.0));
        assert_eq!(similarity_matrix(&[], &b).rows(), 0);
    }

    fn matrix(rows: Vec<Vec<f64>>) -> SimilarityMatrix<f64> {
        SimilarityMatrix::from_rows(rows, 6)
    }

    #[test]
    fn detect_examples() {
        let b = bank();
        let r = detect_attacks(&matrix(vec![vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]]), &b, 0.6).unwrap();
        assert_eq!(
            r.detected.iter().map(|a| a.id.as_str()).collect::<Vec<_>>(),
            ["so"]
        );

        let r = detect_attacks(&matrix(vec![vec![0.6, 0.5, 0.0, 0.6, 0.1, 0.0]]), &b, 0.6).unwrap();
        assert!(r.detected.is_empty() && r.evidence.is_empty());

        let r = detect_attacks(
            &matrix(vec![
                vec![0.0, 0.7, 0.0, 0.0, 0.0, 0.0],
                vec![0.9, 0.0, 0.0, 0.0, 0.0, 0.0],
            ]),
            &b,
            0.6,
        )
        .unwrap();
        assert_eq!(r.detected.len(), 1);
        assert_eq!(r.evidence.len(), 2);
        assert_eq!((r.evidence[0].sentence, r.evidence[0].example), (1, 0));
        assert_eq!((r.evidence[1].sentence, r.evidence[1].example), (0, 1));
    }

    #[test]
    fn detect_errors() {
        let b = bank();
        let m = matrix(vec![]);
        assert_eq!(
            detect_attacks(&m, &b, 1.5).unwrap_err(),
            DetectError::Threshold(1.5)
        );
        assert!(detect_attacks(&m, &b, -0.1).is_err());
        assert!(detect_attacks(&m, &b, f64::NAN).is_err());
        let wrong = SimilarityMatrix::from_rows(vec![vec![0.0; 3]], 3);
        assert_eq!(
            detect_attacks(&wrong, &b, 0.5).unwrap_err(),
            DetectError::Shape {
                expected: 6,
                found: 3
            }
        );
    }

    #[test]
    fn declaration_order_is_kept() {
        let b = bank();
        let r =
            detect_attacks(&matrix(vec![vec![0.0, 0.0, 0.0, 0.9, 0.0, 0.95]]), &b, 0.6).unwrap();
        assert_eq!(r.detected[0].id, "eer");
        let r = detect_attacks(&matrix(vec![vec![0.7, 0.0, 0.0, 0.9, 0.0, 0.0]]), &b, 0.6).unwrap();
        assert_eq!(
            r.detected.iter().map(|a| a.id.as_str()).collect::<Vec<_>>(),
            ["so", "eer"]
        );
    }

    const WORDS: [&str; 6] = [
        "degree",
        "position",
        "specialty",
        "occupation",
        "employer",
        "control",
    ];

    fn sentence() -> impl Strategy<Value = String> {
        prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..6).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn monotone_in_tau(rfe in prop::collection::vec(sentence(), 0..5), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let b = bank();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let text = rfe.join("\n");
            let a = detect_in_text(&text, &b, lo).unwrap();
            let z = detect_in_text(&text, &b, hi).unwrap();
            for d in &z.detected {
                prop_assert!(a.detected.contains(d));
            }
        }

        #[test]
        fn sentence_order_does_not_matter(rfe in prop::collection::vec(sentence(), 0..5), tau in 0.0f64..1.0) {
            let b = bank();
            let mut rev = rfe.clone();
            rev.reverse();
            let a = detect_in_text(&rfe.join("\n"), &b, tau).unwrap();
            let z = detect_in_text(&rev.join("\n"), &b, tau).unwrap();
            prop_assert_eq!(a.detected, z.detected);
            prop_assert_eq!(a.evidence.len(), z.evidence.len());
        }

        #[test]
        fn more_examples_in_fixed_space_never_lose_attacks(
            rfe in prop::collection::vec(sentence(), 1..5),
            extra in prop::collection::vec(sentence(), 1..4),
            tau in 0.0f64..1.0,
        ) {
            let base = vec![rec("so", "specialty occupation degree"), rec("eer", "employer control")];
            let mut grown = base.clone();
            grown.extend(extra.iter().map(|s| rec("eer", s)));
            let all: Vec<Vec<String>> = WORDS.iter().map(|w| vec![w.to_string()]).collect();
            let vocab = fit_vocab(&all, &NRange::up_to_trigrams()).unwrap();
            let small: ExampleBank<f64> =
                ExampleBank::with_vocabulary(&base, Stopwords::default(), vocab.clone()).unwrap();
            let big: ExampleBank<f64> =
                ExampleBank::with_vocabulary(&grown, Stopwords::default(), vocab).unwrap();
            let text = rfe.join("\n");
            let a = detect_in_text(&text, &small, tau).unwrap();
            let z = detect_in_text(&text, &big, tau).unwrap();
            for d in &a.detected {
                prop_assert!(z.detected.contains(d));
            }
        }
    }
}
