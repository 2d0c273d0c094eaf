//! Classifier contract: a pluggable convolutional backbone behind
//! [`Backbone`], composed with a fresh 2-logit head. The positive class
//! (fake) is logit index 1.

pub mod checkpoint;
pub mod nn;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};

use std::path::PathBuf;

use ndarray::{Array2, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use nn::{Linear, SmallCnn, SMALL_CNN_FEATURES};

/// Expected input layout: channels, height, width.
pub const INPUT_SPEC: (usize, usize, usize) = (3, 224, 224);

/// Adapter contract every feature extractor must satisfy: normalized image
/// batches in, fixed-width feature rows out, with gradient flow back through
/// `backward` during fine-tuning.
pub trait Backbone: Send {
    fn id(&self) -> &str;
    fn feature_dim(&self) -> usize;
    fn parameter_count(&self) -> usize;
    /// Forward pass without caching; usable for inference on `&self`.
    fn infer(&self, x: &Array4<f32>) -> Array2<f32>;
    /// Forward pass that caches activations for a following `backward`.
    fn forward_train(&mut self, x: &Array4<f32>) -> Array2<f32>;
    /// Accumulates parameter gradients from the feature gradient.
    fn backward(&mut self, grad_features: &Array2<f32>);
    fn zero_grad(&mut self);
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut [f32], &mut [f32]));
    fn visit_tensors(&self, f: &mut dyn FnMut(&str, Vec<usize>, &[f32]));
    fn load_tensor(&mut self, name: &str, shape: &[usize], data: &[f32]) -> Result<(), String>;
    fn clone_box(&self) -> Box<dyn Backbone>;
}

impl Backbone for SmallCnn {
    fn id(&self) -> &str {
        "reference-small"
    }

    fn feature_dim(&self) -> usize {
        SMALL_CNN_FEATURES
    }

    fn parameter_count(&self) -> usize {
        SmallCnn::parameter_count(self)
    }

    fn infer(&self, x: &Array4<f32>) -> Array2<f32> {
        SmallCnn::infer(self, x)
    }

    fn forward_train(&mut self, x: &Array4<f32>) -> Array2<f32> {
        SmallCnn::forward_train(self, x)
    }

    fn backward(&mut self, grad_features: &Array2<f32>) {
        SmallCnn::backward(self, grad_features)
    }

    fn zero_grad(&mut self) {
        SmallCnn::zero_grad(self)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut [f32], &mut [f32])) {
        for (name, conv) in self.convs_mut() {
            f(
                &format!("{name}.w"),
                conv.w.as_slice_mut().unwrap(),
                conv.gw.as_slice_mut().unwrap(),
            );
            f(
                &format!("{name}.b"),
                conv.b.as_slice_mut().unwrap(),
                conv.gb.as_slice_mut().unwrap(),
            );
        }
    }

    fn visit_tensors(&self, f: &mut dyn FnMut(&str, Vec<usize>, &[f32])) {
        for (name, conv) in self.convs() {
            let s = conv.shape;
            f(
                &format!("{name}.w"),
                vec![s.out_ch, s.in_ch, s.kernel, s.kernel],
                conv.w.as_slice().unwrap(),
            );
            f(&format!("{name}.b"), vec![s.out_ch], conv.b.as_slice().unwrap());
        }
    }

    fn load_tensor(&mut self, name: &str, shape: &[usize], data: &[f32]) -> Result<(), String> {
        for (cname, conv) in self.convs_mut() {
            let s = conv.shape;
            if name == format!("{cname}.w") {
                if shape != [s.out_ch, s.in_ch, s.kernel, s.kernel] {
                    return Err(format!("tensor {name} has shape {shape:?}"));
                }
                conv.w.as_slice_mut().unwrap().copy_from_slice(data);
                return Ok(());
            }
            if name == format!("{cname}.b") {
                if shape != [s.out_ch] {
                    return Err(format!("tensor {name} has shape {shape:?}"));
                }
                conv.b.as_slice_mut().unwrap().copy_from_slice(data);
                return Ok(());
            }
        }
        Err(format!("unknown tensor {name}"))
    }

    fn clone_box(&self) -> Box<dyn Backbone> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("unknown backbone id: {0}")]
    UnknownBackbone(String),
    #[error("pretrained weights unavailable for backbone {0} (set DFDET_PRETRAINED_DIR)")]
    WeightsUnavailable(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("backbone mismatch: expected {expected}, checkpoint holds {found}")]
    BackboneMismatch { expected: String, found: String },
    #[error("i/o error on {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
}

/// Backbone feature extractor plus the 2-logit classification head.
pub struct ModelHandle {
    backbone: Box<dyn Backbone>,
    head: Linear,
    head_cache: Option<Array2<f32>>,
}

impl Clone for ModelHandle {
    fn clone(&self) -> Self {
        ModelHandle {
            backbone: self.backbone.clone_box(),
            head: self.head.clone(),
            head_cache: None,
        }
    }
}

impl ModelHandle {
    pub fn backbone_id(&self) -> &str {
        self.backbone.id()
    }

    pub fn input_spec(&self) -> (usize, usize, usize) {
        INPUT_SPEC
    }

    pub fn parameter_count(&self) -> usize {
        self.backbone.parameter_count() + self.head.parameter_count()
    }

    fn check_batch(&self, x: &Array4<f32>) -> Result<(), ClassifierError> {
        let (_, c, h, w) = x.dim();
        if (c, h, w) != INPUT_SPEC {
            return Err(ClassifierError::ShapeMismatch {
                expected: format!("(N, {}, {}, {})", INPUT_SPEC.0, INPUT_SPEC.1, INPUT_SPEC.2),
                got: format!("{:?}", x.dim()),
            });
        }
        Ok(())
    }

    /// Backbone features for a batch, without the head.
    pub fn features(&self, x: &Array4<f32>) -> Result<Array2<f32>, ClassifierError> {
        self.check_batch(x)?;
        Ok(self.backbone.infer(x))
    }

    /// Forward pass; returns an N x 2 logit matrix.
    pub fn forward(&self, x: &Array4<f32>) -> Result<Array2<f32>, ClassifierError> {
        self.check_batch(x)?;
        let feats = self.backbone.infer(x);
        Ok(self.head.forward(&feats))
    }

    /// Forward pass caching activations for [`ModelHandle::backward`].
    pub fn forward_train(&mut self, x: &Array4<f32>) -> Result<Array2<f32>, ClassifierError> {
        self.check_batch(x)?;
        let feats = self.backbone.forward_train(x);
        let logits = self.head.forward(&feats);
        self.head_cache = Some(feats);
        Ok(logits)
    }

    /// Backpropagates logit gradients into parameter gradients. With
    /// `head_only`, the backbone is treated as frozen features.
    pub fn backward(&mut self, grad_logits: &Array2<f32>, head_only: bool) {
        let feats = self.head_cache.take().expect("forward_train before backward");
        let grad_features = self.head.backward(&feats, grad_logits);
        if !head_only {
            self.backbone.backward(&grad_features);
        }
    }

    pub fn zero_grad(&mut self) {
        self.backbone.zero_grad();
        self.head.zero_grad();
    }

    /// Visits `(name, values, grads)` for every trainable tensor.
    pub fn visit_params(&mut self, head_only: bool, f: &mut dyn FnMut(&str, &mut [f32], &mut [f32])) {
        if !head_only {
            self.backbone.visit_params(f);
        }
        f(
            "head.w",
            self.head.w.as_slice_mut().unwrap(),
            self.head.gw.as_slice_mut().unwrap(),
        );
        f(
            "head.b",
            self.head.b.as_slice_mut().unwrap(),
            self.head.gb.as_slice_mut().unwrap(),
        );
    }

    pub fn visit_tensors(&self, f: &mut dyn FnMut(&str, Vec<usize>, &[f32])) {
        self.backbone.visit_tensors(f);
        let (o, i) = self.head.w.dim();
        f("head.w", vec![o, i], self.head.w.as_slice().unwrap());
        f("head.b", vec![o], self.head.b.as_slice().unwrap());
    }

    pub fn load_tensor(&mut self, name: &str, shape: &[usize], data: &[f32]) -> Result<(), String> {
        let (o, i) = self.head.w.dim();
        match name {
            "head.w" => {
                if shape != [o, i] {
                    return Err(format!("tensor head.w has shape {shape:?}"));
                }
                self.head.w.as_slice_mut().unwrap().copy_from_slice(data);
                Ok(())
            }
            "head.b" => {
                if shape != [o] {
                    return Err(format!("tensor head.b has shape {shape:?}"));
                }
                self.head.b.as_slice_mut().unwrap().copy_from_slice(data);
                Ok(())
            }
            _ => self.backbone.load_tensor(name, shape, data),
        }
    }

    /// Snapshot of every parameter tensor, for best-checkpoint tracking.
    pub fn snapshot(&self) -> Vec<(String, Vec<usize>, Vec<f32>)> {
        let mut out = Vec::new();
        self.visit_tensors(&mut |name, shape, data| {
            out.push((name.to_string(), shape, data.to_vec()));
        });
        out
    }

    pub fn restore(&mut self, snapshot: &[(String, Vec<usize>, Vec<f32>)]) {
        for (name, shape, data) in snapshot {
            self.load_tensor(name, shape, data).expect("snapshot matches model");
        }
    }
}

/// Builds a registered backbone with a freshly seeded 2-logit head.
///
/// `pretrained=true` resolves `<DFDET_PRETRAINED_DIR>/<backbone_id>.ckpt`
/// and loads its weights; the reference backbone ships none, so the flag
/// fails cleanly unless the user provides a weights file.
pub fn build_model(backbone_id: &str, pretrained: bool, seed: u64) -> Result<ModelHandle, ClassifierError> {
    let backbone: Box<dyn Backbone> = match backbone_id {
        "reference-small" => Box::new(SmallCnn::new(seed)),
        other => return Err(ClassifierError::UnknownBackbone(other.to_string())),
    };
    // distinct stream from the backbone init
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4845_4144);
    let head = Linear::new(2, backbone.feature_dim(), &mut rng);
    let mut model = ModelHandle {
        backbone,
        head,
        head_cache: None,
    };
    if pretrained {
        let dir = std::env::var("DFDET_PRETRAINED_DIR")
            .map_err(|_| ClassifierError::WeightsUnavailable(backbone_id.to_string()))?;
        let path = PathBuf::from(dir).join(format!("{backbone_id}.ckpt"));
        if !path.is_file() {
            return Err(ClassifierError::WeightsUnavailable(backbone_id.to_string()));
        }
        let (loaded, _) = load_checkpoint(&path, Some(backbone_id))?;
        model = loaded;
    }
    Ok(model)
}

/// Row-wise softmax of the logits; column 1 is P(fake).
pub fn predict_proba(model: &ModelHandle, batch: &Array4<f32>) -> Result<Array2<f32>, ClassifierError> {
    let logits = model.forward(batch)?;
    Ok(softmax(&logits))
}

pub fn softmax(logits: &Array2<f32>) -> Array2<f32> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().cloned().fold(f32::MIN, f32::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f32 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn probe_batch(n: usize, seed: u64) -> Array4<f32> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn((n, 3, 224, 224), |_| rng.random_range(-2.0f32..2.0))
    }

    #[test]
    fn build_accepts_reference_backbone() {
        let model = build_model("reference-small", false, 0).unwrap();
        assert_eq!(model.input_spec(), (3, 224, 224));
        assert!(model.parameter_count() < 1_000_000);
    }

    #[test]
    fn build_rejects_unknown_backbone() {
        assert!(matches!(
            build_model("nonexistent-backbone", false, 0),
            Err(ClassifierError::UnknownBackbone(_))
        ));
    }

    #[test]
    fn pretrained_without_weights_is_unavailable() {
        std::env::remove_var("DFDET_PRETRAINED_DIR");
        assert!(matches!(
            build_model("reference-small", true, 0),
            Err(ClassifierError::WeightsUnavailable(_))
        ));
    }

    #[test]
    fn forward_batch_shapes() {
        let model = build_model("reference-small", false, 0).unwrap();
        for n in [1usize, 32] {
            let logits = model.forward(&probe_batch(n, 7)).unwrap();
            assert_eq!(logits.dim(), (n, 2));
            assert!(logits.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn forward_rejects_wrong_shape() {
        let model = build_model("reference-small", false, 0).unwrap();
        let bad = Array4::<f32>::zeros((1, 3, 100, 100));
        assert!(matches!(
            model.forward(&bad),
            Err(ClassifierError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn logits_finite_on_extreme_inputs() {
        let model = build_model("reference-small", false, 0).unwrap();
        for fill in [-5.0f32, 5.0] {
            let x = Array4::from_elem((2, 3, 224, 224), fill);
            let logits = model.forward(&x).unwrap();
            assert!(logits.iter().all(|v| v.is_finite()), "fill={fill}");
        }
    }

    #[test]
    fn softmax_symmetry_and_hand_value() {
        let p = softmax(&array![[0.0f32, 0.0]]);
        assert!((p[(0, 0)] - 0.5).abs() < 1e-6);
        assert!((p[(0, 1)] - 0.5).abs() < 1e-6);
        // logits (ln 3, 0) -> (0.75, 0.25)
        let p = softmax(&array![[3.0f32.ln(), 0.0]]);
        assert!((p[(0, 0)] - 0.75).abs() < 1e-6);
        assert!((p[(0, 1)] - 0.25).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(rows in proptest::collection::vec((-20.0f32..20.0, -20.0f32..20.0), 1..16)) {
            let n = rows.len();
            let logits = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { rows[i].0 } else { rows[i].1 });
            let p = softmax(&logits);
            for i in 0..n {
                let sum = p[(i, 0)] + p[(i, 1)];
                prop_assert!((sum - 1.0).abs() < 1e-6);
                prop_assert!(p[(i, 0)] >= 0.0 && p[(i, 0)] <= 1.0);
            }
        }
    }
}
