//! Word n-grams, TF-IDF vocabularies, sparse vectors and cosine similarity.
//!
//! Weighting is raw term count times smoothed inverse document frequency,
//! `idf = ln((1 + N) / (1 + df)) + 1`, followed by L2 normalization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::Real;

/// Header line of the vocabulary file format.
pub const VOCAB_MAGIC: &str = "docket-vocab";
pub const VOCAB_VERSION: u32 = 1;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum VectorError {
    #[error("cannot fit a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid sparse entry at position {0}: indices must increase, stay below dim, and weights must be positive and finite")]
    InvalidEntry(usize),
    #[error("vocabulary file, line {line}: {message}")]
    Format { line: usize, message: String },
}

/// The set of n-gram orders to generate, kept sorted and deduplicated.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct NRange(Vec<usize>);

impl NRange {
    pub fn new(orders: impl IntoIterator<Item = usize>) -> Result<Self, VectorError> {
        let set: BTreeSet<usize> = orders.into_iter().collect();
        if set.is_empty() || set.contains(&0) {
            return Err(VectorError::InvalidOrder);
        }
        Ok(NRange(set.into_iter().collect()))
    }

    /// `{2, 3}`, used by the document text classifier.
    pub fn bigrams_trigrams() -> Self {
        NRange(vec![2, 3])
    }

    /// `{1, 2, 3}`, used by attack detection.
    pub fn up_to_trigrams() -> Self {
        NRange(vec![1, 2, 3])
    }

    pub fn orders(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Debug for NRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for NRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// All contiguous n-grams for each order, ascending order first, then
/// document position. Duplicates are kept.
pub fn ngrams(tokens: &[String], n_range: &NRange) -> Vec<String> {
    let mut out = Vec::new();
    for &n in n_range.orders() {
        if tokens.len() < n {
            continue;
        }
        out.extend(tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

/// A fitted n-gram vocabulary with document frequencies.
#[derive(Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    doc_freq: Vec<usize>,
    corpus_size: usize,
    n_range: NRange,
}

impl fmt::Debug for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Vocabulary")
            .field("terms", &self.terms.len())
            .field("corpus_size", &self.corpus_size)
            .field("n_range", &self.n_range)
            .finish()
    }
}

/// Fits a vocabulary. Columns are assigned in lexicographic n-gram order.
pub fn fit_vocab<S: AsRef<[String]>>(
    corpus: &[S],
    n_range: &NRange,
) -> Result<Vocabulary, VectorError> {
    if corpus.is_empty() {
        return Err(VectorError::EmptyCorpus);
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        let distinct: BTreeSet<String> = ngrams(doc.as_ref(), n_range).into_iter().collect();
        for g in distinct {
            *df.entry(g).or_default() += 1;
        }
    }
    let (terms, doc_freq): (Vec<String>, Vec<usize>) = df.into_iter().unzip();
    Ok(Vocabulary::from_parts(
        terms,
        doc_freq,
        corpus.len(),
        n_range.clone(),
    ))
}

impl Vocabulary {
    fn from_parts(
        terms: Vec<String>,
        doc_freq: Vec<usize>,
        corpus_size: usize,
        n_range: NRange,
    ) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            terms,
            index,
            doc_freq,
            corpus_size,
            n_range,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn n_range(&self) -> &NRange {
        &self.n_range
    }

    pub fn index_of(&self, ngram: &str) -> Option<usize> {
        self.index.get(ngram).copied()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn doc_freq(&self, index: usize) -> usize {
        self.doc_freq[index]
    }

    pub fn idf<T: Real>(&self, index: usize) -> T {
        let n = T::from_count(self.corpus_size);
        let df = T::from_count(self.doc_freq[index]);
        ((T::one() + n) / (T::one() + df)).ln() + T::one()
    }

    /// Renders the versioned flat file:
    ///
    /// ```text
    /// docket-vocab 1
    /// corpus_size\t<N>
    /// n_range\t<n1,n2,...>
    /// terms\t<V>
    /// <index>\t<doc_freq>\t<ngram>      (V lines, ascending index)
    /// ```
    pub fn to_file_string(&self) -> String {
        let mut out = format!(
            "{VOCAB_MAGIC} {VOCAB_VERSION}\ncorpus_size\t{}\nn_range\t{}\nterms\t{}\n",
            self.corpus_size,
            self.n_range,
            self.terms.len()
        );
        for (i, (t, df)) in self.terms.iter().zip(&self.doc_freq).enumerate() {
            out.push_str(&format!("{i}\t{df}\t{t}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, VectorError> {
        let err = |line: usize, message: &str| VectorError::Format {
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| err(0, &format!("missing {what}")))
        };

        let (ln, header) = next("header")?;
        let version = header
            .strip_prefix(VOCAB_MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| err(ln, "bad header"))?;
        if version != VOCAB_VERSION {
            return Err(err(ln, &format!("unsupported version {version}")));
        }
        let mut field = |key: &str| -> Result<(usize, String), VectorError> {
            let (ln, l) = next(key)?;
            let (k, v) = l
                .split_once('\t')
                .ok_or_else(|| err(ln, "expected key<TAB>value"))?;
            if k != key {
                return Err(err(ln, &format!("expected {key}")));
            }
            Ok((ln, v.to_string()))
        };
        let (ln, v) = field("corpus_size")?;
        let corpus_size: usize = v.parse().map_err(|_| err(ln, "bad corpus_size"))?;
        if corpus_size == 0 {
            return Err(err(ln, "corpus_size must be at least 1"));
        }
        let (ln, v) = field("n_range")?;
        let orders: Result<Vec<usize>, _> = v.split(',').map(str::parse).collect();
        let n_range = orders
            .ok()
            .and_then(|o| NRange::new(o).ok())
            .ok_or_else(|| err(ln, "bad n_range"))?;
        let (ln, v) = field("terms")?;
        let count: usize = v.parse().map_err(|_| err(ln, "bad term count"))?;

        let mut terms: Vec<String> = Vec::with_capacity(count);
        let mut doc_freq = Vec::with_capacity(count);
        for expected in 0..count {
            let (ln, l) = next("term line")?;
            let mut parts = l.splitn(3, '\t');
            let idx: usize = parts
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| err(ln, "bad index"))?;
            if idx != expected {
                return Err(err(ln, "indices must be dense and ascending"));
            }
            let df: usize = parts
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| err(ln, "bad doc_freq"))?;
            if df == 0 || df > corpus_size {
                return Err(err(ln, "doc_freq out of range"));
            }
            let term = parts.next().ok_or_else(|| err(ln, "missing n-gram"))?;
            if let Some(prev) = terms.last() {
                if term <= prev.as_str() {
                    return Err(err(ln, "n-grams must be strictly increasing"));
                }
            }
            terms.push(term.to_string());
            doc_freq.push(df);
        }
        if let Ok((ln, _)) = next("eof") {
            return Err(err(ln, "trailing content"));
        }
        Ok(Vocabulary::from_parts(
            terms,
            doc_freq,
            corpus_size,
            n_range,
        ))
    }

    /// SHA-256 (hex) of [`Vocabulary::to_file_string`].
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }
}

/// Sparse vector with strictly increasing indices and positive weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVector<T> {
    indices: Vec<usize>,
    values: Vec<T>,
    dim: usize,
}

impl<T: Real> SparseVector<T> {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            indices: Vec::new(),
            values: Vec::new(),
            dim,
        }
    }

    /// Builds from `(index, weight)` pairs, validating the invariants.
    pub fn new(dim: usize, entries: Vec<(usize, T)>) -> Result<Self, VectorError> {
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (pos, (i, w)) in entries.into_iter().enumerate() {
            let ordered = indices.last().is_none_or(|&last| i > last);
            if !ordered || i >= dim || !(w > T::zero()) || !w.is_finite() {
                return Err(VectorError::InvalidEntry(pos));
            }
            indices.push(i);
            values.push(w);
        }
        Ok(SparseVector {
            indices,
            values,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|&w| w * w).sum::<T>().sqrt()
    }

    /// Multiplies every weight by `alpha > 0`.
    pub fn scaled(&self, alpha: T) -> Self {
        assert!(alpha > T::zero(), "scale must be positive");
        SparseVector {
            indices: self.indices.clone(),
            values: self.values.iter().map(|&w| w * alpha).collect(),
            dim: self.dim,
        }
    }

    pub fn dot(&self, other: &Self) -> Result<T, VectorError> {
        if self.dim != other.dim {
            return Err(VectorError::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        let (mut a, mut b) = (0, 0);
        let mut acc = T::zero();
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc = acc + self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        Ok(acc)
    }

    /// Dot product with a dense slice of length `dim`.
    pub fn dot_dense(&self, dense: &[T]) -> T {
        self.iter().map(|(i, w)| w * dense[i]).sum()
    }

    pub fn to_dense(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for (i, w) in self.iter() {
            out[i] = w;
        }
        out
    }
}

/// TF-IDF vector of a token stream in the vocabulary's space, L2-normalized.
/// Unknown n-grams are ignored; a document with none known maps to zero.
pub fn tfidf_vector<T: Real>(tokens: &[String], vocab: &Vocabulary) -> SparseVector<T> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for g in ngrams(tokens, vocab.n_range()) {
        if let Some(i) = vocab.index_of(&g) {
            *counts.entry(i).or_default() += 1;
        }
    }
    let weighted: Vec<(usize, T)> = counts
        .into_iter()
        .map(|(i, tf)| (i, T::from_count(tf) * vocab.idf::<T>(i)))
        .collect();
    let norm = weighted.iter().map(|&(_, w)| w * w).sum::<T>().sqrt();
    SparseVector {
        indices: weighted.iter().map(|&(i, _)| i).collect(),
        values: weighted.iter().map(|&(_, w)| w / norm).collect(),
        dim: vocab.len(),
    }
}

/// Cosine similarity. Zero if either vector is zero.
pub fn cosine<T: Real>(u: &SparseVector<T>, v: &SparseVector<T>) -> Result<T, VectorError> {
    let dot = u.dot(v)?;
    if u.is_zero() || v.is_zero() {
        return Ok(T::zero());
    }
    // weights are positive, so only rounding can push the ratio past 1
    Ok((dot / (u.norm() * v.norm())).min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    fn n(orders: &[usize]) -> NRange {
        NRange::new(orders.iter().copied()).unwrap()
    }

    #[test]
    fn ngram_examples() {
        assert_eq!(
            ngrams(&toks(&["a", "b", "c"]), &n(&[2, 3])),
            toks(&["a b", "b c", "a b c"])
        );
        assert!(ngrams(&toks(&["a"]), &n(&[2, 3])).is_empty());
        assert_eq!(
            ngrams(&toks(&["a", "b"]), &n(&[1, 2, 3])),
            toks(&["a", "b", "a b"])
        );
        assert_eq!(NRange::new([0]), Err(VectorError::InvalidOrder));
    }

    #[test]
    fn fit_vocab_examples() {
        let v = fit_vocab(&[toks(&["a", "b"]), toks(&["a", "c"])], &n(&[1])).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.corpus_size(), 2);
        let df = |t: &str| v.doc_freq(v.index_of(t).unwrap());
        assert_eq!((df("a"), df("b"), df("c")), (2, 1, 1));
        assert_eq!(v.index_of("a"), Some(0));
        assert_eq!(v.index_of("c"), Some(2));

        let v = fit_vocab(&[toks(&["a", "a"])], &n(&[1])).unwrap();
        assert_eq!(v.doc_freq(0), 1);

        let v = fit_vocab(&[Vec::<String>::new()], &n(&[1])).unwrap();
        assert_eq!((v.len(), v.corpus_size()), (0, 1));

        assert_eq!(
            fit_vocab::<Vec<String>>(&[], &n(&[1])).unwrap_err(),
            VectorError::EmptyCorpus
        );
    }

    #[test]
    fn tfidf_examples() {
        let v = fit_vocab(&[toks(&["a", "b"]), toks(&["a", "c"])], &n(&[1])).unwrap();
        let z: SparseVector<f64> = tfidf_vector(&toks(&["x", "y"]), &v);
        assert!(z.is_zero());
        assert_eq!(z.dim(), 3);

        let one: SparseVector<f64> = tfidf_vector(&toks(&["b", "b", "b"]), &v);
        assert_eq!(one.iter().collect::<Vec<_>>(), vec![(1, 1.0)]);

        // frozen from a scalar evaluation of the weighting formula:
        // a: 1 * (ln(3/3) + 1) = 1, b: 2 * (ln(3/2) + 1) = 2.8109302162163288
        let doc: SparseVector<f64> = tfidf_vector(&toks(&["a", "b", "b"]), &v);
        let got: Vec<_> = doc.iter().collect();
        assert_eq!(got.len(), 2);
        assert!((got[0].1 - 0.335_175_743_327_926).abs() < 1e-12);
        assert!((got[1].1 - 0.942_155_624_663_236).abs() < 1e-12);
    }

    #[test]
    fn cosine_examples() {
        let v = SparseVector::new(5, vec![(0, 0.3f64), (3, 2.0)]).unwrap();
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        let w = SparseVector::new(5, vec![(1, 1.0f64), (4, 2.0)]).unwrap();
        assert_eq!(cosine(&v, &w).unwrap(), 0.0);
        assert_eq!(cosine(&SparseVector::zeros(5), &v).unwrap(), 0.0);
        assert_eq!(
            cosine(&SparseVector::zeros(4), &v),
            Err(VectorError::DimensionMismatch { left: 4, right: 5 })
        );
    }

    #[test]
    fn sparse_vector_rejects_bad_entries() {
        assert!(SparseVector::new(3, vec![(1, 1.0f64), (1, 1.0)]).is_err());
        assert!(SparseVector::new(3, vec![(3, 1.0f64)]).is_err());
        assert!(SparseVector::new(3, vec![(0, 0.0f64)]).is_err());
        assert!(SparseVector::new(3, vec![(0, f64::NAN)]).is_err());
    }

    #[test]
    fn vocab_file_roundtrip_and_rejects() {
        let v = fit_vocab(&[toks(&["a", "b", "c"]), toks(&["b", "c"])], &n(&[1, 2])).unwrap();
        let text = v.to_file_string();
        assert!(
            text.starts_with("docket-vocab 1\ncorpus_size\t2\nn_range\t1,2\nterms\t5\n0\t1\ta\n")
        );
        let back = Vocabulary::parse(&text).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.content_hash(), v.content_hash());

        assert!(Vocabulary::parse(&text.replace("docket-vocab 1", "docket-vocab 2")).is_err());
        assert!(Vocabulary::parse(&text.replace("terms\t5", "terms\t6")).is_err());
        assert!(Vocabulary::parse(&format!("{text}extra\n")).is_err());
    }

    // Dense oracle: explicit loops over every n-gram of every document.
    fn dense_tfidf(
        corpus: &[Vec<String>],
        doc: &[String],
        orders: &[usize],
    ) -> (Vec<String>, Vec<f64>) {
        let grams = |t: &[String]| {
            let mut out = Vec::new();
            for &n in orders {
                let mut i = 0;
                while i + n <= t.len() {
                    out.push(t[i..i + n].join(" "));
                    i += 1;
                }
            }
            out
        };
        let mut terms: Vec<String> = corpus.iter().flat_map(|d| grams(d)).collect();
        terms.sort();
        terms.dedup();
        let doc_grams = grams(doc);
        let mut w = vec![0.0; terms.len()];
        for (k, term) in terms.iter().enumerate() {
            let tf = doc_grams.iter().filter(|g| *g == term).count() as f64;
            let df = corpus.iter().filter(|d| grams(d).contains(term)).count() as f64;
            let nn = corpus.len() as f64;
            w[k] = tf * (((1.0 + nn) / (1.0 + df)).ln() + 1.0);
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            w.iter_mut().for_each(|x| *x /= norm);
        }
        (terms, w)
    }

    fn dense_cos(a: &[f64], b: &[f64]) -> f64 {
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
    }

    fn doc_strategy() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..=6)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn matches_dense_oracle(
            corpus in prop::collection::vec(doc_strategy(), 1..=10),
            d1 in doc_strategy(),
            d2 in doc_strategy(),
            orders in prop::sample::subsequence(vec![1usize, 2, 3], 1..=3),
        ) {
            let vocab = fit_vocab(&corpus, &NRange::new(orders.clone()).unwrap()).unwrap();
            let (terms, w1) = dense_tfidf(&corpus, &d1, &orders);
            let (_, w2) = dense_tfidf(&corpus, &d2, &orders);
            prop_assert_eq!(terms.len(), vocab.len());
            let s1: SparseVector<f64> = tfidf_vector(&d1, &vocab);
            let s2: SparseVector<f64> = tfidf_vector(&d2, &vocab);
            for (a, b) in s1.to_dense().iter().zip(&w1) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            let c = cosine(&s1, &s2).unwrap();
            prop_assert!((c - dense_cos(&w1, &w2)).abs() < 1e-9);
            for s in [&s1, &s2] {
                prop_assert!(s.is_zero() || (s.norm() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in prop::collection::btree_map(0usize..20, 0.01f64..10.0, 0..8),
            b in prop::collection::btree_map(0usize..20, 0.01f64..10.0, 0..8),
            alpha in 0.001f64..1000.0,
        ) {
            let u = SparseVector::new(20, a.into_iter().collect()).unwrap();
            let v = SparseVector::new(20, b.into_iter().collect()).unwrap();
            let c = cosine(&u, &v).unwrap();
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!((c - cosine(&v, &u).unwrap()).abs() < 1e-12);
            prop_assert!((c - cosine(&u.scaled(alpha), &v).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn f32_vectors_are_unit_norm(doc in doc_strategy()) {
            let corpus = vec![doc.clone(), vec!["a".to_string(), "b".to_string()]];
            let vocab = fit_vocab(&corpus, &NRange::up_to_trigrams()).unwrap();
            let v: SparseVector<f32> = tfidf_vector(&doc, &vocab);
            prop_assert!(v.is_zero() || (v.norm() - 1.0).abs() < 1e-5);
        }
    }
}
