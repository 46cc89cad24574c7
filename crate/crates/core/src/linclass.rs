//! Multinomial logistic regression over dense or sparse features.
//!
//! The same head serves the page-image branch (grid features) and the text
//! branch (TF-IDF vectors). Training is full-batch gradient descent from zero
//! weights, so a given dataset and config always yield the same model.

use std::fmt;
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::imagefeat::DenseFeatures;
use crate::scalar::Real;
use crate::vectorspace::SparseVector;

pub const MODEL_MAGIC: &[u8; 4] = b"DKLM";
pub const MODEL_VERSION: u8 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid class set: {0}")]
    InvalidClassSet(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("class sets differ")]
    ClassSetMismatch,
    #[error("feature dimension {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("empty training batch")]
    EmptyBatch,
    #[error("class {0:?} has no training examples")]
    MissingClass(String),
    #[error("loss became non-finite during training")]
    NonFiniteLoss,
    #[error("not a model file")]
    BadMagic,
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u8),
    #[error("model stores {found}-byte scalars, expected {expected}")]
    ScalarWidth { expected: u8, found: u8 },
    #[error("model was trained against {found}, but the supplied featurizer is {expected}")]
    HashMismatch { expected: String, found: String },
    #[error("corrupt model payload: {0}")]
    Corrupt(&'static str),
}

/// Ordered, distinct class labels. Cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ClassSet(Arc<[String]>);

impl ClassSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, ModelError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(ModelError::InvalidClassSet(
                "at least two classes are required".into(),
            ));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(ModelError::InvalidClassSet("empty label".into()));
            }
            if labels[..i].contains(l) {
                return Err(ModelError::InvalidClassSet(format!(
                    "duplicate label {l:?}"
                )));
            }
        }
        Ok(ClassSet(labels.into()))
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.0.iter().position(|l| l == label)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.0[index]
    }
}

impl fmt::Debug for ClassSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

fn sum_tolerance<T: Real>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(64.0))
}

/// Probability vector over a class set.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassDistribution<T> {
    classes: ClassSet,
    probs: Vec<T>,
}

impl<T: Real> ClassDistribution<T> {
    /// Validates that `probs` has one entry per class, each in `[0, 1]`,
    /// summing to one.
    pub fn new(classes: ClassSet, probs: Vec<T>) -> Result<Self, ModelError> {
        if probs.len() != classes.len() {
            return Err(ModelError::InvalidDistribution(format!(
                "{} probabilities for {} classes",
                probs.len(),
                classes.len()
            )));
        }
        if probs.iter().any(|&p| !(p >= T::zero() && p <= T::one())) {
            return Err(ModelError::InvalidDistribution(
                "probability outside [0, 1]".into(),
            ));
        }
        let sum: T = probs.iter().copied().sum();
        if (sum - T::one()).abs() > sum_tolerance::<T>() {
            return Err(ModelError::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(ClassDistribution { classes, probs })
    }

    /// Divides non-negative masses by their total.
    pub fn from_masses(classes: ClassSet, masses: Vec<T>) -> Result<Self, ModelError> {
        let total: T = masses.iter().copied().sum();
        if !(total > T::zero()) || !total.is_finite() {
            return Err(ModelError::InvalidDistribution(
                "no probability mass".into(),
            ));
        }
        Self::new(classes, masses.into_iter().map(|m| m / total).collect())
    }

    pub fn uniform(classes: ClassSet) -> Self {
        let p = T::one() / T::from_count(classes.len());
        let probs = vec![p; classes.len()];
        ClassDistribution { classes, probs }
    }

    pub fn classes(&self) -> &ClassSet {
        &self.classes
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn prob(&self, label: &str) -> Option<T> {
        self.classes.index_of(label).map(|i| self.probs[i])
    }

    /// Index of the most probable class; the earliest class wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn predicted_label(&self) -> &str {
        self.classes.label(self.argmax())
    }
}

/// A feature vector the linear head can consume.
pub trait Features<T> {
    fn dim(&self) -> usize;
    /// Dot product with the first `dim` entries of a weight row.
    fn dot_row(&self, row: &[T]) -> T;
    /// `row[i] += alpha * x[i]` over the first `dim` entries.
    fn add_scaled(&self, alpha: T, row: &mut [T]);
}

impl<T: Real> Features<T> for [T] {
    fn dim(&self) -> usize {
        self.len()
    }

    fn dot_row(&self, row: &[T]) -> T {
        self.iter().zip(row).map(|(&x, &w)| x * w).sum()
    }

    fn add_scaled(&self, alpha: T, row: &mut [T]) {
        for (r, &x) in row.iter_mut().zip(self) {
            *r = *r + alpha * x;
        }
    }
}

impl<T: Real> Features<T> for Vec<T> {
    fn dim(&self) -> usize {
        self.len()
    }

    fn dot_row(&self, row: &[T]) -> T {
        self.as_slice().dot_row(row)
    }

    fn add_scaled(&self, alpha: T, row: &mut [T]) {
        self.as_slice().add_scaled(alpha, row)
    }
}

impl<T: Real> Features<T> for DenseFeatures<T> {
    fn dim(&self) -> usize {
        self.values().len()
    }

    fn dot_row(&self, row: &[T]) -> T {
        self.values().dot_row(row)
    }

    fn add_scaled(&self, alpha: T, row: &mut [T]) {
        self.values().add_scaled(alpha, row)
    }
}

impl<T: Real> Features<T> for SparseVector<T> {
    fn dim(&self) -> usize {
        SparseVector::dim(self)
    }

    fn dot_row(&self, row: &[T]) -> T {
        self.dot_dense(row)
    }

    fn add_scaled(&self, alpha: T, row: &mut [T]) {
        for (i, w) in self.iter() {
            row[i] = row[i] + alpha * w;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Dense,
    Sparse,
}

impl FeatureKind {
    fn code(self) -> u8 {
        match self {
            FeatureKind::Dense => 0,
            FeatureKind::Sparse => 1,
        }
    }
}

/// What a head is trained against: its classes, input dimension, and the
/// hash of the featurizer or vocabulary producing its inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadSpec {
    pub classes: ClassSet,
    pub dim: usize,
    pub kind: FeatureKind,
    pub vocab_hash: String,
}

/// Weight matrix of shape `classes x (dim + 1)`, row-major; the last column
/// of each row is the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel<T> {
    spec: HeadSpec,
    weights: Vec<T>,
}

impl<T: Real> LinearModel<T> {
    pub fn zeros(spec: HeadSpec) -> Self {
        let weights = vec![T::zero(); spec.classes.len() * (spec.dim + 1)];
        LinearModel { spec, weights }
    }

    pub fn from_weights(spec: HeadSpec, weights: Vec<T>) -> Result<Self, ModelError> {
        if weights.len() != spec.classes.len() * (spec.dim + 1) {
            return Err(ModelError::Corrupt("weight count does not match shape"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(ModelError::Corrupt("non-finite weight"));
        }
        Ok(LinearModel { spec, weights })
    }

    pub fn spec(&self) -> &HeadSpec {
        &self.spec
    }

    pub fn classes(&self) -> &ClassSet {
        &self.spec.classes
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn row(&self, class: usize) -> &[T] {
        let stride = self.spec.dim + 1;
        &self.weights[class * stride..(class + 1) * stride]
    }

    fn check_dim<X: Features<T> + ?Sized>(&self, x: &X) -> Result<(), ModelError> {
        if x.dim() != self.spec.dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.spec.dim,
                found: x.dim(),
            });
        }
        Ok(())
    }

    /// Per-class scores `w_c . x + b_c`.
    pub fn scores<X: Features<T> + ?Sized>(&self, x: &X) -> Result<Vec<T>, ModelError> {
        self.check_dim(x)?;
        let d = self.spec.dim;
        Ok((0..self.spec.classes.len())
            .map(|c| {
                let row = self.row(c);
                x.dot_row(&row[..d]) + row[d]
            })
            .collect())
    }

    pub fn predict_proba<X: Features<T> + ?Sized>(
        &self,
        x: &X,
    ) -> Result<ClassDistribution<T>, ModelError> {
        let probs = softmax(&self.scores(x)?);
        Ok(ClassDistribution {
            classes: self.spec.classes.clone(),
            probs,
        })
    }
}

/// Softmax with the maximum score subtracted first.
pub fn softmax<T: Real>(scores: &[T]) -> Vec<T> {
    let max = scores
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let exps: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mean cross-entropy plus `(l2 / 2) * ||W||^2` over non-bias weights, and
/// its gradient laid out like the weight matrix.
pub fn loss_and_gradient<T, X, S>(
    model: &LinearModel<T>,
    batch: &[(X, S)],
    l2: T,
) -> Result<(T, Vec<T>), ModelError>
where
    T: Real,
    X: Features<T>,
    S: AsRef<str>,
{
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let k = model.classes().len();
    let d = model.dim();
    let stride = d + 1;
    let inv_n = T::one() / T::from_count(batch.len());

    let mut loss = T::zero();
    let mut grad = vec![T::zero(); k * stride];
    for (x, label) in batch {
        let label = label.as_ref();
        let y = model
            .classes()
            .index_of(label)
            .ok_or_else(|| ModelError::UnknownLabel(label.to_string()))?;
        let scores = model.scores(x)?;
        let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
        let log_z = max + scores.iter().map(|&s| (s - max).exp()).sum::<T>().ln();
        loss = loss + (log_z - scores[y]);
        for c in 0..k {
            let p = (scores[c] - log_z).exp();
            let delta = if c == y { p - T::one() } else { p };
            let row = &mut grad[c * stride..(c + 1) * stride];
            x.add_scaled(delta * inv_n, &mut row[..d]);
            row[d] = row[d] + delta * inv_n;
        }
    }
    loss = loss * inv_n;

    let mut penalty = T::zero();
    for c in 0..k {
        let w = model.row(c);
        let g = &mut grad[c * stride..(c + 1) * stride];
        for j in 0..d {
            penalty = penalty + w[j] * w[j];
            g[j] = g[j] + l2 * w[j];
        }
    }
    Ok((loss + l2 * penalty / T::lit(2.0), grad))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig<T> {
    pub l2: T,
    pub learning_rate: T,
    pub max_iters: usize,
    pub grad_tol: T,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            l2: T::lit(1e-3),
            learning_rate: T::lit(0.5),
            max_iters: 2000,
            grad_tol: T::lit(1e-6),
        }
    }
}

/// Loss after every accepted step, starting with the loss at zero weights.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainTrace<T> {
    pub losses: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub final_learning_rate: T,
}

/// Trains from zero weights. See [`train_traced`].
pub fn train<T, X, S>(
    data: &[(X, S)],
    spec: HeadSpec,
    config: &TrainConfig<T>,
) -> Result<LinearModel<T>, ModelError>
where
    T: Real,
    X: Features<T>,
    S: AsRef<str>,
{
    train_traced(data, spec, config).map(|(m, _)| m)
}

/// Full-batch gradient descent from zero weights.
///
/// Stops after `max_iters` steps or once the gradient's max-norm drops below
/// `grad_tol`. A step that would raise the loss is rejected and the learning
/// rate halved (and kept halved), so recorded losses never increase.
pub fn train_traced<T, X, S>(
    data: &[(X, S)],
    spec: HeadSpec,
    config: &TrainConfig<T>,
) -> Result<(LinearModel<T>, TrainTrace<T>), ModelError>
where
    T: Real,
    X: Features<T>,
    S: AsRef<str>,
{
    if data.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut seen = vec![false; spec.classes.len()];
    for (_, label) in data {
        let label = label.as_ref();
        let c = spec
            .classes
            .index_of(label)
            .ok_or_else(|| ModelError::UnknownLabel(label.to_string()))?;
        seen[c] = true;
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(ModelError::MissingClass(spec.classes.label(c).to_string()));
    }

    let min_rate = T::lit(1e-12);
    let mut model = LinearModel::zeros(spec);
    let mut rate = config.learning_rate;
    let (mut loss, mut grad) = loss_and_gradient(&model, data, config.l2)?;
    if !loss.is_finite() {
        return Err(ModelError::NonFiniteLoss);
    }
    let mut trace = TrainTrace {
        losses: vec![loss],
        iterations: 0,
        converged: false,
        final_learning_rate: rate,
    };

    while trace.iterations < config.max_iters {
        let gmax = grad.iter().fold(T::zero(), |m, g| m.max(g.abs()));
        if gmax < config.grad_tol {
            trace.converged = true;
            break;
        }
        let accepted = loop {
            let candidate = LinearModel {
                spec: model.spec.clone(),
                weights: model
                    .weights
                    .iter()
                    .zip(&grad)
                    .map(|(&w, &g)| w - rate * g)
                    .collect(),
            };
            let (l, g) = loss_and_gradient(&candidate, data, config.l2)?;
            if l.is_finite() && l <= loss {
                break Some((candidate, l, g));
            }
            rate = rate / T::lit(2.0);
            if rate < min_rate {
                break None;
            }
        };
        let Some((candidate, l, g)) = accepted else {
            // no descent step exists at representable rates
            break;
        };
        model = candidate;
        loss = l;
        grad = g;
        trace.iterations += 1;
        trace.losses.push(loss);
    }
    if !loss.is_finite() {
        return Err(ModelError::NonFiniteLoss);
    }
    trace.final_learning_rate = rate;
    Ok((model, trace))
}

/// Serializes a model.
///
/// Layout (all integers little-endian):
///
/// ```text
/// 0   4  magic "DKLM"
/// 4   1  format version (1)
/// 5   1  feature kind (0 dense, 1 sparse)
/// 6   1  scalar width in bytes (4 = f32, 8 = f64)
/// 7   1  reserved, 0
/// 8   4  class count K
///        K x (u32 byte length, UTF-8 label)
///     8  feature dimension D (u64)
///        u32 byte length, UTF-8 vocab/featurizer hash
///        K * (D + 1) scalars, row-major, bias last in each row
///    32  SHA-256 of all preceding bytes
/// ```
pub fn save_model<T: Real>(model: &LinearModel<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + model.weights.len() * T::WIDTH as usize);
    out.extend_from_slice(MODEL_MAGIC);
    out.push(MODEL_VERSION);
    out.push(model.spec.kind.code());
    out.push(T::WIDTH);
    out.push(0);
    let put_str = |out: &mut Vec<u8>, s: &str| {
        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
        out.extend_from_slice(s.as_bytes());
    };
    out.extend_from_slice(&(model.spec.classes.len() as u32).to_le_bytes());
    for label in model.spec.classes.labels() {
        put_str(&mut out, label);
    }
    out.extend_from_slice(&(model.spec.dim as u64).to_le_bytes());
    put_str(&mut out, &model.spec.vocab_hash);
    for &w in &model.weights {
        w.put_le(&mut out);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(ModelError::Corrupt("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, ModelError> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| ModelError::Corrupt("label is not UTF-8"))
    }
}

/// Decodes a model without checking which featurizer it belongs to.
pub fn decode_model<T: Real>(bytes: &[u8]) -> Result<LinearModel<T>, ModelError> {
    if bytes.len() < 8 || &bytes[..4] != MODEL_MAGIC {
        return Err(ModelError::BadMagic);
    }
    if bytes[4] != MODEL_VERSION {
        return Err(ModelError::UnsupportedVersion(bytes[4]));
    }
    if bytes.len() < 8 + 32 {
        return Err(ModelError::Corrupt("truncated"));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(ModelError::Corrupt("checksum mismatch"));
    }

    let mut r = Reader {
        bytes: body,
        pos: 5,
    };
    let kind = match r.u8()? {
        0 => FeatureKind::Dense,
        1 => FeatureKind::Sparse,
        _ => return Err(ModelError::Corrupt("unknown feature kind")),
    };
    let width = r.u8()?;
    if width != T::WIDTH {
        return Err(ModelError::ScalarWidth {
            expected: T::WIDTH,
            found: width,
        });
    }
    r.u8()?;
    let k = r.u32()? as usize;
    let labels = (0..k).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
    let classes = ClassSet::new(labels)?;
    let dim = usize::try_from(r.u64()?).map_err(|_| ModelError::Corrupt("dimension"))?;
    let vocab_hash = r.string()?;
    let count = k
        .checked_mul(dim.checked_add(1).ok_or(ModelError::Corrupt("dimension"))?)
        .ok_or(ModelError::Corrupt("dimension"))?;
    let raw = r.take(
        count
            .checked_mul(T::WIDTH as usize)
            .ok_or(ModelError::Corrupt("dimension"))?,
    )?;
    if r.pos != body.len() {
        return Err(ModelError::Corrupt("trailing bytes"));
    }
    let weights = raw.chunks_exact(T::WIDTH as usize).map(T::get_le).collect();
    LinearModel::from_weights(
        HeadSpec {
            classes,
            dim,
            kind,
            vocab_hash,
        },
        weights,
    )
}

/// Decodes a model and checks it was trained against `expected_hash`.
pub fn load_model<T: Real>(
    bytes: &[u8],
    expected_hash: &str,
) -> Result<LinearModel<T>, ModelError> {
    let model = decode_model::<T>(bytes)?;
    if model.spec.vocab_hash != expected_hash {
        return Err(ModelError::HashMismatch {
            expected: expected_hash.to_string(),
            found: model.spec.vocab_hash.clone(),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two() -> ClassSet {
        ClassSet::new(["a", "b"]).unwrap()
    }

    fn spec(classes: ClassSet, dim: usize) -> HeadSpec {
        HeadSpec {
            classes,
            dim,
            kind: FeatureKind::Dense,
            vocab_hash: "h".into(),
        }
    }

    #[test]
    fn class_set_validation() {
        assert!(ClassSet::new(["a"]).is_err());
        assert!(ClassSet::new(["a", "a"]).is_err());
        assert!(ClassSet::new(["a", ""]).is_err());
        assert_eq!(two().index_of("b"), Some(1));
    }

    #[test]
    fn zero_weights_predict_uniform() {
        let m = LinearModel::<f64>::zeros(spec(ClassSet::new(["a", "b", "c"]).unwrap(), 3));
        let p = m.predict_proba(&vec![1.0, -2.0, 5.0]).unwrap();
        for &q in p.probs() {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[3.0f64, 3.0]), vec![0.5, 0.5]);
        // frozen: 1 / (1 + exp(-ln 9)) = 0.9
        let p = softmax(&[9f64.ln(), 0.0]);
        assert!((p[0] - 0.9).abs() < 1e-9 && (p[1] - 0.1).abs() < 1e-9);
        let p = softmax(&[1000.0f64, 0.0]);
        assert!(p[0] == 1.0 && p[1] >= 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = LinearModel::<f64>::zeros(spec(two(), 3));
        assert_eq!(
            m.predict_proba(&vec![1.0, 2.0]).unwrap_err(),
            ModelError::DimensionMismatch {
                expected: 3,
                found: 2
            }
        );
    }

    #[test]
    fn loss_at_zero_weights_is_ln2() {
        let m = LinearModel::<f64>::zeros(spec(two(), 2));
        let batch = vec![
            (vec![1.0, 2.0], "a"),
            (vec![-1.0, 0.5], "b"),
            (vec![0.0, 0.0], "b"),
        ];
        let (loss, _) = loss_and_gradient(&m, &batch, 0.3).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradient_at_zero_single_example() {
        // (p - onehot) x^T with p = (0.5, 0.5), true class 0
        let m = LinearModel::<f64>::zeros(spec(two(), 2));
        let x = vec![2.0, -4.0];
        let (_, g) = loss_and_gradient(&m, &[(x, "a")], 0.0).unwrap();
        assert_eq!(g, vec![-1.0, 2.0, -0.5, 1.0, -2.0, 0.5]);
    }

    #[test]
    fn duplicating_the_batch_changes_nothing() {
        let mut m = LinearModel::<f64>::zeros(spec(two(), 2));
        m.weights = vec![0.3, -0.2, 0.1, -0.4, 0.7, 0.0];
        let batch = vec![(vec![1.0, 2.0], "a"), (vec![-1.0, 0.5], "b")];
        let doubled: Vec<_> = batch.iter().chain(&batch).cloned().collect();
        let (l1, g1) = loss_and_gradient(&m, &batch, 0.0).unwrap();
        let (l2, g2) = loss_and_gradient(&m, &doubled, 0.0).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn loss_errors() {
        let m = LinearModel::<f64>::zeros(spec(two(), 1));
        let empty: Vec<(Vec<f64>, &str)> = vec![];
        assert_eq!(
            loss_and_gradient(&m, &empty, 0.0).unwrap_err(),
            ModelError::EmptyBatch
        );
        assert_eq!(
            loss_and_gradient(&m, &[(vec![1.0], "zzz")], 0.0).unwrap_err(),
            ModelError::UnknownLabel("zzz".into())
        );
    }

    fn separable() -> Vec<(Vec<f64>, &'static str)> {
        vec![
            (vec![2.0, 1.0], "a"),
            (vec![1.5, 2.0], "a"),
            (vec![-1.0, -1.5], "b"),
            (vec![-2.0, -0.5], "b"),
        ]
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let (m, trace) =
            train_traced(&separable(), spec(two(), 2), &TrainConfig::default()).unwrap();
        for (x, y) in separable() {
            assert_eq!(m.predict_proba(&x).unwrap().predicted_label(), y);
        }
        for w in trace.losses.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(trace.losses.last().unwrap() < &0.1);
    }

    #[test]
    fn orthogonal_single_examples() {
        let classes = ClassSet::new(["a", "b", "c"]).unwrap();
        let data = vec![
            (vec![1.0, 0.0, 0.0], "a"),
            (vec![0.0, 1.0, 0.0], "b"),
            (vec![0.0, 0.0, 1.0], "c"),
        ];
        let m = train(&data, spec(classes, 3), &TrainConfig::default()).unwrap();
        for (x, y) in &data {
            let p = m.predict_proba(x).unwrap();
            assert!(p.prob(y).unwrap() > 0.9, "{:?}", p);
        }
    }

    #[test]
    fn zero_iterations_return_zero_model() {
        let cfg = TrainConfig {
            max_iters: 0,
            ..TrainConfig::default()
        };
        let m = train(&separable(), spec(two(), 2), &cfg).unwrap();
        assert!(m.weights().iter().all(|&w| w == 0.0));
        assert_eq!(
            m.predict_proba(&vec![5.0, 5.0]).unwrap().probs(),
            &[0.5, 0.5]
        );
    }

    #[test]
    fn training_requires_every_class() {
        let data = vec![(vec![1.0], "a")];
        assert_eq!(
            train(&data, spec(two(), 1), &TrainConfig::<f64>::default()).unwrap_err(),
            ModelError::MissingClass("b".into())
        );
    }

    #[test]
    fn f32_training_works_too() {
        let data: Vec<(Vec<f32>, &str)> = separable()
            .into_iter()
            .map(|(x, y)| (x.into_iter().map(|v| v as f32).collect(), y))
            .collect();
        let m = train(&data, spec(two(), 2), &TrainConfig::default()).unwrap();
        for (x, y) in &data {
            assert_eq!(m.predict_proba(x).unwrap().predicted_label(), *y);
        }
    }

    #[test]
    fn sparse_features_train() {
        let v = |e: Vec<(usize, f64)>| SparseVector::new(4, e).unwrap();
        let data = vec![
            (v(vec![(0, 1.0)]), "a"),
            (v(vec![(0, 0.6), (1, 0.8)]), "a"),
            (v(vec![(2, 1.0)]), "b"),
            (v(vec![(3, 1.0)]), "b"),
        ];
        let mut s = spec(two(), 4);
        s.kind = FeatureKind::Sparse;
        let m = train(&data, s, &TrainConfig::default()).unwrap();
        for (x, y) in &data {
            assert_eq!(m.predict_proba(x).unwrap().predicted_label(), *y);
        }
    }

    fn trained() -> LinearModel<f64> {
        train(&separable(), spec(two(), 2), &TrainConfig::default()).unwrap()
    }

    #[test]
    fn save_load_roundtrip_is_bit_exact() {
        let m = trained();
        let back: LinearModel<f64> = load_model(&save_model(&m), "h").unwrap();
        assert_eq!(back.spec(), m.spec());
        let bits =
            |m: &LinearModel<f64>| m.weights().iter().map(|w| w.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn load_rejections() {
        let bytes = save_model(&trained());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert_eq!(
            load_model::<f64>(&bad, "h").unwrap_err(),
            ModelError::UnsupportedVersion(9)
        );
        assert_eq!(
            load_model::<f64>(&bytes, "other").unwrap_err(),
            ModelError::HashMismatch {
                expected: "other".into(),
                found: "h".into()
            }
        );
        let mut flipped = bytes.clone();
        let last = flipped.len() - 40;
        flipped[last] ^= 1;
        assert_eq!(
            load_model::<f64>(&flipped, "h").unwrap_err(),
            ModelError::Corrupt("checksum mismatch")
        );
        assert_eq!(
            load_model::<f64>(b"nope", "h").unwrap_err(),
            ModelError::BadMagic
        );
        assert_eq!(
            load_model::<f32>(&bytes, "h").unwrap_err(),
            ModelError::ScalarWidth {
                expected: 4,
                found: 8
            }
        );
        assert!(load_model::<f64>(&bytes[..bytes.len() - 1], "h").is_err());
    }

    proptest! {
        #[test]
        fn predictions_are_distributions(
            w in prop::collection::vec(-50.0f64..50.0, 12),
            x in prop::collection::vec(-10.0f64..10.0, 3),
        ) {
            let classes = ClassSet::new(["a", "b", "c"]).unwrap();
            let m = LinearModel::from_weights(spec(classes.clone(), 3), w).unwrap();
            let p = m.predict_proba(&x).unwrap();
            prop_assert!(ClassDistribution::new(classes, p.probs().to_vec()).is_ok());
        }
    }
}
