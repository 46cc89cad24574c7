//! Entropy-weighted fusion of the image and text classifiers.
//!
//! Each branch's confidence is the reciprocal of the base-2 entropy of its
//! prediction, floored at [`EPSILON`]. The fused distribution is the
//! confidence-weighted mean of the two branch distributions.

use thiserror::Error;

use crate::imagefeat::{featurizer_hash, image_features, PageImage};
use crate::linclass::{
    ClassDistribution, ClassSet, FeatureKind, HeadSpec, LinearModel, ModelError, TrainConfig,
};
use crate::scalar::Real;
use crate::textprep::{normalize, tokenize};
use crate::vectorspace::{fit_vocab, tfidf_vector, NRange, VectorError, Vocabulary};

/// Entropy floor used when turning entropy into a weight.
pub const EPSILON: f64 = 0.001;

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("branch distributions are over different class sets")]
    ClassSetMismatch,
    #[error("document {0:?} has neither pages nor text")]
    EmptyDocument(String),
    #[error("image and text models disagree on classes")]
    ModelClassMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Vector(#[from] VectorError),
}

/// Shannon entropy in bits, with `0 lg 0 = 0`.
pub fn entropy<T: Real>(p: &ClassDistribution<T>) -> T {
    entropy_of(p.probs())
}

pub fn entropy_of<T: Real>(probs: &[T]) -> T {
    let h: T = probs
        .iter()
        .filter(|&&q| q > T::zero())
        .map(|&q| -q * q.log2())
        .sum();
    // rounding can leave -0.0 or a hair below zero for one-hot inputs
    h.max(T::zero())
}

pub fn confidence<T: Real>(h: T) -> T {
    T::one() / h.max(T::lit(EPSILON))
}

/// One branch's contribution to a fusion.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchOutput<T> {
    pub probs: ClassDistribution<T>,
    pub entropy: T,
    pub weight: T,
}

impl<T: Real> BranchOutput<T> {
    pub fn new(probs: ClassDistribution<T>) -> Self {
        let entropy = entropy(&probs);
        BranchOutput {
            weight: confidence(entropy),
            entropy,
            probs,
        }
    }
}

/// Audit record of a fused prediction. A branch is `None` when the
/// document had nothing for it to look at.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionTrace<T> {
    pub image: Option<BranchOutput<T>>,
    pub text: Option<BranchOutput<T>>,
    pub fused: ClassDistribution<T>,
    pub predicted: String,
}

impl<T: Real> FusionTrace<T> {
    fn single(branch: BranchOutput<T>, is_image: bool) -> Self {
        let fused = branch.probs.clone();
        let predicted = fused.predicted_label().to_string();
        let (image, text) = if is_image {
            (Some(branch), None)
        } else {
            (None, Some(branch))
        };
        FusionTrace {
            image,
            text,
            fused,
            predicted,
        }
    }
}

/// Confidence-weighted mean of two distributions over the same classes.
pub fn fuse<T: Real>(
    p_image: &ClassDistribution<T>,
    p_text: &ClassDistribution<T>,
) -> Result<FusionTrace<T>, EnsembleError> {
    if p_image.classes() != p_text.classes() {
        return Err(EnsembleError::ClassSetMismatch);
    }
    let image = BranchOutput::new(p_image.clone());
    let text = BranchOutput::new(p_text.clone());
    let total = image.weight + text.weight;
    let masses: Vec<T> = p_image
        .probs()
        .iter()
        .zip(p_text.probs())
        .map(|(&a, &b)| (image.weight * a + text.weight * b) / total)
        .collect();
    let fused = if p_image == p_text {
        p_image.clone()
    } else {
        ClassDistribution::from_masses(p_image.classes().clone(), masses)?
    };
    let predicted = fused.predicted_label().to_string();
    Ok(FusionTrace {
        image: Some(image),
        text: Some(text),
        fused,
        predicted,
    })
}

/// A supporting document: page images plus extracted text.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub id: String,
    pub pages: Vec<PageImage>,
    pub text: String,
}

/// Tokens fed to the text classifier: normalized, split on whitespace,
/// stopwords kept.
pub fn document_tokens(text: &str) -> Vec<String> {
    tokenize(&normalize(text))
}

/// The two trained heads plus the text vocabulary.
#[derive(Clone, Debug)]
pub struct DocumentClassifier<T> {
    pub image_model: LinearModel<T>,
    pub text_model: LinearModel<T>,
    pub vocab: Vocabulary,
}

/// Training document with its label.
#[derive(Clone, Debug)]
pub struct LabeledDocument<'a> {
    pub doc: &'a Document,
    pub label: &'a str,
}

impl<T: Real> DocumentClassifier<T> {
    /// Fits the text vocabulary on the training texts (n in {2, 3}), then
    /// trains the image head on every page and the text head on every
    /// document.
    pub fn train(
        docs: &[LabeledDocument<'_>],
        classes: &ClassSet,
        config: &TrainConfig<T>,
    ) -> Result<Self, EnsembleError> {
        let tokens: Vec<Vec<String>> = docs.iter().map(|d| document_tokens(&d.doc.text)).collect();
        let vocab = fit_vocab(&tokens, &NRange::bigrams_trigrams())?;

        let pages: Vec<(Vec<T>, &str)> = docs
            .iter()
            .flat_map(|d| {
                d.doc
                    .pages
                    .iter()
                    .map(move |p| (image_features::<T>(p).into_values(), d.label))
            })
            .collect();
        let image_model = crate::linclass::train(
            &pages,
            HeadSpec {
                classes: classes.clone(),
                dim: crate::imagefeat::FEATURE_LEN,
                kind: FeatureKind::Dense,
                vocab_hash: featurizer_hash(),
            },
            config,
        )?;

        let texts: Vec<_> = tokens
            .iter()
            .zip(docs)
            .filter(|(t, _)| !t.is_empty())
            .map(|(t, d)| (tfidf_vector::<T>(t, &vocab), d.label))
            .collect();
        let text_model = crate::linclass::train(
            &texts,
            HeadSpec {
                classes: classes.clone(),
                dim: vocab.len(),
                kind: FeatureKind::Sparse,
                vocab_hash: vocab.content_hash(),
            },
            config,
        )?;
        Ok(DocumentClassifier {
            image_model,
            text_model,
            vocab,
        })
    }

    pub fn classes(&self) -> &ClassSet {
        self.image_model.classes()
    }

    pub fn classify(&self, doc: &Document) -> Result<FusionTrace<T>, EnsembleError> {
        classify_document(doc, &self.image_model, &self.text_model, &self.vocab)
    }
}

/// Mean of per-page image predictions, renormalized. `None` for no pages.
pub fn image_branch<T: Real>(
    pages: &[PageImage],
    model: &LinearModel<T>,
) -> Result<Option<ClassDistribution<T>>, EnsembleError> {
    if pages.is_empty() {
        return Ok(None);
    }
    let k = model.classes().len();
    let mut acc = vec![T::zero(); k];
    for page in pages {
        let p = model.predict_proba(image_features::<T>(page).values())?;
        for (a, &q) in acc.iter_mut().zip(p.probs()) {
            *a = *a + q;
        }
    }
    Ok(Some(ClassDistribution::from_masses(
        model.classes().clone(),
        acc,
    )?))
}

/// Text prediction on the whole document. `None` when the text has no tokens.
pub fn text_branch<T: Real>(
    text: &str,
    model: &LinearModel<T>,
    vocab: &Vocabulary,
) -> Result<Option<ClassDistribution<T>>, EnsembleError> {
    let tokens = document_tokens(text);
    if tokens.is_empty() {
        return Ok(None);
    }
    let v = tfidf_vector::<T>(&tokens, vocab);
    Ok(Some(model.predict_proba(&v)?))
}

/// Runs both branches and fuses them. A document missing pages or text is
/// classified by the remaining branch alone.
pub fn classify_document<T: Real>(
    doc: &Document,
    image_model: &LinearModel<T>,
    text_model: &LinearModel<T>,
    vocab: &Vocabulary,
) -> Result<FusionTrace<T>, EnsembleError> {
    if image_model.classes() != text_model.classes() {
        return Err(EnsembleError::ModelClassMismatch);
    }
    let image = image_branch(&doc.pages, image_model)?;
    let text = text_branch(&doc.text, text_model, vocab)?;
    match (image, text) {
        (Some(i), Some(t)) => fuse(&i, &t),
        (Some(i), None) => Ok(FusionTrace::single(BranchOutput::new(i), true)),
        (None, Some(t)) => Ok(FusionTrace::single(BranchOutput::new(t), false)),
        (None, None) => Err(EnsembleError::EmptyDocument(doc.id.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn classes(k: usize) -> ClassSet {
        ClassSet::new((0..k).map(|i| format!("c{i}"))).unwrap()
    }

    fn dist(p: &[f64]) -> ClassDistribution<f64> {
        ClassDistribution::new(classes(p.len()), p.to_vec()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&dist(&[0.5, 0.5])), 1.0);
        assert_eq!(entropy(&dist(&[1.0, 0.0])), 0.0);
        // frozen from -0.9 lg 0.9 - 0.1 lg 0.1
        assert!((entropy(&dist(&[0.9, 0.1])) - 0.468_995_593_589_281).abs() < 1e-12);
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(confidence(1.0f64), 1.0);
        assert_eq!(confidence(0.0f64), 1000.0);
        assert_eq!(confidence(0.0005f64), 1000.0);
    }

    #[test]
    fn fuse_examples() {
        let p = dist(&[0.3, 0.7]);
        assert_eq!(fuse(&p, &p).unwrap().fused, p);

        let t = fuse(&dist(&[0.9, 0.1]), &dist(&[0.5, 0.5])).unwrap();
        let img = t.image.as_ref().unwrap();
        assert!((img.weight - 2.132_216_194_926_004).abs() < 1e-9);
        assert_eq!(t.text.as_ref().unwrap().weight, 1.0);
        assert!((t.fused.probs()[0] - 0.772_294_894_379_266).abs() < 1e-9);
        assert_eq!(t.predicted, "c0");

        let t = fuse(&dist(&[1.0, 0.0]), &dist(&[0.5, 0.5])).unwrap();
        assert!((t.fused.probs()[0] - 1000.5 / 1001.0).abs() < 1e-12);
    }

    #[test]
    fn fuse_rejects_mismatched_classes() {
        let other =
            ClassDistribution::new(ClassSet::new(["x", "y"]).unwrap(), vec![0.5, 0.5]).unwrap();
        assert_eq!(
            fuse(&dist(&[0.5, 0.5]), &other).unwrap_err(),
            EnsembleError::ClassSetMismatch
        );
    }

    #[test]
    fn ties_go_to_the_first_class() {
        let t = fuse(&dist(&[0.5, 0.5]), &dist(&[0.5, 0.5])).unwrap();
        assert_eq!(t.predicted, "c0");
    }

    fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, k).prop_filter_map("mass", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-6).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..6).prop_flat_map(|k| (simplex(k), simplex(k)))
    }

    proptest! {
        #[test]
        fn fused_is_a_distribution((a, b) in pair()) {
            let t = fuse(&dist(&a), &dist(&b)).unwrap();
            let s: f64 = t.fused.probs().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(t.fused.probs().iter().all(|p| (0.0..=1.0).contains(p)));
            let k = a.len() as f64;
            for h in [t.image.unwrap().entropy, t.text.unwrap().entropy] {
                prop_assert!(h >= 0.0 && h <= k.log2() + 1e-12);
            }
        }

        #[test]
        fn agreement_is_preserved((a, b) in pair()) {
            let (pa, pb) = (dist(&a), dist(&b));
            if pa.argmax() == pb.argmax() {
                prop_assert_eq!(fuse(&pa, &pb).unwrap().fused.argmax(), pa.argmax());
            }
        }

        #[test]
        fn equal_entropies_average(a in simplex(3)) {
            let mut b = a.clone();
            b.reverse();
            let t = fuse(&dist(&a), &dist(&b)).unwrap();
            for i in 0..3 {
                prop_assert!((t.fused.probs()[i] - (a[i] + b[i]) / 2.0).abs() < 1e-12);
            }
        }
    }

    fn model(kind: FeatureKind, dim: usize, hash: &str, weights: Vec<f64>) -> LinearModel<f64> {
        LinearModel::from_weights(
            HeadSpec {
                classes: classes(2),
                dim,
                kind,
                vocab_hash: hash.into(),
            },
            weights,
        )
        .unwrap()
    }

    fn fixtures() -> (LinearModel<f64>, LinearModel<f64>, Vocabulary) {
        let mut w = vec![0.0; 2 * 1025];
        // brighter pages lean to c0
        for j in 0..1024 {
            w[j] = 0.01;
        }
        let image = model(FeatureKind::Dense, 1024, &featurizer_hash(), w);
        let vocab = fit_vocab(
            &[
                document_tokens("approval notice issued"),
                document_tokens("receipt notice issued"),
            ],
            &NRange::bigrams_trigrams(),
        )
        .unwrap();
        let mut tw = vec![0.0; 2 * (vocab.len() + 1)];
        let i = vocab.index_of("receipt notice").unwrap();
        tw[vocab.len() + 1 + i] = 3.0;
        let text = model(FeatureKind::Sparse, vocab.len(), &vocab.content_hash(), tw);
        (image, text, vocab)
    }

    #[test]
    fn single_page_document_uses_that_page() {
        let (image, text, vocab) = fixtures();
        let page = PageImage::filled(64, 64, 200);
        let doc = Document {
            id: "d".into(),
            pages: vec![page.clone()],
            text: "receipt notice issued".into(),
        };
        let t = classify_document(&doc, &image, &text, &vocab).unwrap();
        let expected = image
            .predict_proba(image_features::<f64>(&page).values())
            .unwrap();
        assert_eq!(t.image.unwrap().probs, expected);
        assert!(t.text.is_some());
    }

    #[test]
    fn page_predictions_are_averaged() {
        let (image, text, vocab) = fixtures();
        let pages = vec![PageImage::filled(40, 40, 255), PageImage::filled(40, 40, 0)];
        let p = image_branch(&pages, &image).unwrap().unwrap();
        let a = image
            .predict_proba(image_features::<f64>(&pages[0]).values())
            .unwrap();
        let b = image
            .predict_proba(image_features::<f64>(&pages[1]).values())
            .unwrap();
        assert!((p.probs()[0] - (a.probs()[0] + b.probs()[0]) / 2.0).abs() < 1e-15);
        let _ = (text, vocab);
    }

    #[test]
    fn missing_branches_fall_back() {
        let (image, text, vocab) = fixtures();
        let page = PageImage::filled(64, 64, 200);
        let doc = Document {
            id: "d".into(),
            pages: vec![page],
            text: " 123 !! ".into(),
        };
        let t = classify_document(&doc, &image, &text, &vocab).unwrap();
        assert!(t.text.is_none());
        assert_eq!(t.fused, t.image.unwrap().probs);

        let doc = Document {
            id: "d".into(),
            pages: vec![],
            text: "receipt notice issued".into(),
        };
        let t = classify_document(&doc, &image, &text, &vocab).unwrap();
        assert!(t.image.is_none());
        assert_eq!(t.predicted, "c1");

        let doc = Document {
            id: "empty".into(),
            pages: vec![],
            text: String::new(),
        };
        assert_eq!(
            classify_document(&doc, &image, &text, &vocab).unwrap_err(),
            EnsembleError::EmptyDocument("empty".into())
        );
    }
}
