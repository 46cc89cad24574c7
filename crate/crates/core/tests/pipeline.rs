use std::collections::BTreeSet;

use docket::attackdetect::{detect_attacks, similarity_matrix, DEFAULT_TAU};
use docket::corpusgen::{
    generate, generate_corpus, load_documents, CorpusConfig, CorpusManifest, TextChannel,
};
use docket::ExampleBank;

fn grams(tokens: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for n in 1..=3 {
        for w in tokens.windows(n) {
            out.push(w.join(" "));
        }
    }
    out
}

// Every pair, every term, no sparse structures.
fn dense_matrix(bank_tokens: &[Vec<String>], sentences: &[Vec<String>]) -> Vec<Vec<f64>> {
    let terms: BTreeSet<String> = bank_tokens.iter().flat_map(|t| grams(t)).collect();
    let terms: Vec<String> = terms.into_iter().collect();
    let nn = bank_tokens.len() as f64;
    let idf: Vec<f64> = terms
        .iter()
        .map(|term| {
            let df = bank_tokens
                .iter()
                .filter(|t| grams(t).contains(term))
                .count() as f64;
            ((1.0 + nn) / (1.0 + df)).ln() + 1.0
        })
        .collect();
    let vector = |tokens: &[String]| -> Vec<f64> {
        let g = grams(tokens);
        let w: Vec<f64> = terms
            .iter()
            .zip(&idf)
            .map(|(term, idf)| g.iter().filter(|x| *x == term).count() as f64 * idf)
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            w
        } else {
            w.iter().map(|x| x / norm).collect()
        }
    };
    let bank_vecs: Vec<Vec<f64>> = bank_tokens.iter().map(|t| vector(t)).collect();
    sentences
        .iter()
        .map(|s| {
            let v = vector(s);
            bank_vecs
                .iter()
                .map(|b| v.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().min(1.0))
                .collect()
        })
        .collect()
}

#[test]
fn three_sentence_rfe_matches_dense_oracle() {
    let corpus = generate(&CorpusConfig::default()).unwrap();
    let bank: ExampleBank = corpus.example_bank().unwrap();
    let rfe = corpus
        .rfes
        .iter()
        .find(|r| !r.entry.planted.is_empty())
        .unwrap();
    let lines: Vec<&str> = rfe.text.lines().collect();
    let planted = rfe.entry.planted[0].line;
    let text = [lines[0], lines[planted], lines[lines.len() - 1]].join("\n");

    let sentences = bank.sentences(&text);
    assert_eq!(sentences.len(), 3);
    let m = similarity_matrix(&sentences, &bank);
    let bank_tokens: Vec<Vec<String>> = bank.examples().iter().map(|e| e.tokens.clone()).collect();
    let oracle = dense_matrix(&bank_tokens, &sentences);
    assert_eq!((m.rows(), m.cols()), (3, bank.len()));
    for (i, row) in oracle.iter().enumerate() {
        for (j, want) in row.iter().enumerate() {
            assert!(
                (m.get(i, j) - want).abs() < 1e-9,
                "({i},{j}) {} vs {want}",
                m.get(i, j)
            );
        }
    }

    let report = detect_attacks(&m, &bank, DEFAULT_TAU).unwrap();
    assert!(report.contains(&rfe.entry.planted[0].attack_id));
}

#[test]
fn corpus_on_disk_matches_memory() {
    let mut config = CorpusConfig::default();
    for c in &mut config.classes {
        c.n_docs = 6;
    }
    config.n_rfes = 5;
    let dir = tempfile::tempdir().unwrap();
    let written = generate_corpus(&config, dir.path()).unwrap();
    let memory = generate(&config).unwrap();
    assert_eq!(written, memory.manifest);
    assert_eq!(CorpusManifest::load(dir.path()).unwrap(), written);

    for channel in [TextChannel::Clean, TextChannel::Degraded] {
        let loaded = load_documents(dir.path(), &written, channel).unwrap();
        assert_eq!(loaded.len(), memory.documents.len());
        for (disk, mem) in loaded.iter().zip(&memory.documents) {
            assert_eq!(disk.doc, mem.document(channel));
            assert_eq!(disk.label, mem.entry.label);
        }
    }
}
