//! Edge-probability decoder: a small transformer scoring candidate
//! edges between a source vertex and its nearby target vertices.
//!
//! Each target slot is featurized as `concat(F(src), F(tgt), (tgt -
//! src) / r_nbr)` where `F` bilinearly samples the window's feature
//! map. Slots attend to each other through [`N_BLOCKS`]-style pre-norm
//! blocks (self-attention + feed-forward), and a scalar head produces
//! the probability that source and target are directly connected.
//!
//! Invalid (padding) slots never enter the computation: the network
//! runs on the compacted valid slots only, so padding cannot influence
//! valid outputs and the slot set is permutation-equivariant by
//! construction. Forward, backward, and the Adam trainer are written
//! directly against [`Mat`] so gradients can be verified by central
//! differences (see the `gradients_match_central_differences` test).

mod backward;
mod forward;
mod io;
mod linalg;
mod loss;
mod train;

pub use forward::{forward, TopoOutput};
pub use io::{load_params, save_params};
pub use linalg::Mat;
pub use loss::{bce_loss, bce_loss_grad, loss_and_grads};
pub use train::{train_topo_net, TrainConfig, TrainItem, Trainer};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::scalar::Scalar;

/// One teacher-forcing or inference query: a source vertex and its
/// candidate target slots, all in window-pixel coordinates. `targets`,
/// `valid`, and `labels` are index-aligned; slots with `valid = false`
/// are padding and are ignored by the network and the loss. `labels`
/// holds 0/1 connectivity and is meaningful only where valid (set all
/// zeros at inference time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoSample<S> {
    pub source: Point<S>,
    pub targets: Vec<Point<S>>,
    pub valid: Vec<bool>,
    pub labels: Vec<S>,
}

impl<S: Scalar> TopoSample<S> {
    pub fn new(
        source: Point<S>,
        targets: Vec<Point<S>>,
        valid: Vec<bool>,
        labels: Vec<S>,
    ) -> Result<Self> {
        if targets.len() != valid.len() || targets.len() != labels.len() {
            return Err(Error::Shape(format!(
                "sample slot arrays disagree: {} targets, {} valid flags, {} labels",
                targets.len(),
                valid.len(),
                labels.len()
            )));
        }
        Ok(TopoSample { source, targets, valid, labels })
    }

    /// Number of valid (non-padding) slots.
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Decoder hyperparameters. `d_feat` must match the feature-map channel
/// count; offsets are normalized by `r_nbr` so inputs stay order-one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoNetConfig {
    pub d_feat: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub ffn_mult: usize,
    pub r_nbr: f64,
}

impl Default for TopoNetConfig {
    fn default() -> Self {
        TopoNetConfig { d_feat: 32, d_model: 32, n_heads: 4, n_blocks: 3, ffn_mult: 4, r_nbr: 64.0 }
    }
}

impl TopoNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_feat == 0 || self.d_model == 0 || self.n_heads == 0 || self.ffn_mult == 0 {
            return Err(Error::Contract("decoder dimensions must be positive".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Contract(format!(
                "d_model = {} not divisible by n_heads = {}",
                self.d_model, self.n_heads
            )));
        }
        if !(self.r_nbr > 0.0) {
            return Err(Error::Contract(format!("r_nbr = {} must be positive", self.r_nbr)));
        }
        Ok(())
    }

    /// Per-slot input width: two sampled feature vectors plus the
    /// normalized 2D offset.
    pub fn input_dim(&self) -> usize {
        2 * self.d_feat + 2
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn ffn_dim(&self) -> usize {
        self.ffn_mult * self.d_model
    }
}

/// Dense layer computing `y = x W + b` for row-vector activations;
/// `w` is `(in, out)`, `b` has `out` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S> {
    pub w: Mat<S>,
    pub b: Vec<S>,
}

impl<S: Scalar> Linear<S> {
    fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data =
            (0..rows * cols).map(|_| S::of(rng.random_range(-limit..limit))).collect();
        Linear { w: Mat::from_vec(rows, cols, data), b: vec![S::zero(); cols] }
    }

    fn zeros_like(&self) -> Self {
        Linear { w: Mat::zeros(self.w.rows(), self.w.cols()), b: vec![S::zero(); self.b.len()] }
    }
}

/// Layer-norm scale and shift over the model dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<S> {
    pub gamma: Vec<S>,
    pub beta: Vec<S>,
}

impl<S: Scalar> LayerNorm<S> {
    fn identity(d: usize) -> Self {
        LayerNorm { gamma: vec![S::one(); d], beta: vec![S::zero(); d] }
    }

    fn zeros_like(&self) -> Self {
        LayerNorm {
            gamma: vec![S::zero(); self.gamma.len()],
            beta: vec![S::zero(); self.beta.len()],
        }
    }
}

/// One pre-norm decoder block: `h += attn(ln1(h)); h += ffn(ln2(h))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<S> {
    pub ln1: LayerNorm<S>,
    pub wq: Linear<S>,
    pub wk: Linear<S>,
    pub wv: Linear<S>,
    pub wo: Linear<S>,
    pub ln2: LayerNorm<S>,
    pub w1: Linear<S>,
    pub w2: Linear<S>,
}

/// All decoder parameters. The same struct doubles as the gradient
/// container ([`TopoNetParams::zeros_like`]), and [`flatten`] /
/// [`assign`] give the Adam optimizer and the finite-difference checker
/// one flat view with a frozen traversal order.
///
/// [`flatten`]: TopoNetParams::flatten
/// [`assign`]: TopoNetParams::assign
#[derive(Debug, Clone, PartialEq)]
pub struct TopoNetParams<S> {
    pub cfg: TopoNetConfig,
    pub in_proj: Linear<S>,
    pub blocks: Vec<BlockParams<S>>,
    pub head: Linear<S>,
}

impl<S: Scalar> TopoNetParams<S> {
    /// Xavier-uniform weights, zero biases, identity layer norms,
    /// deterministic in `seed`.
    pub fn init(cfg: TopoNetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.d_model;
        let in_proj = Linear::xavier(cfg.input_dim(), d, &mut rng);
        let blocks = (0..cfg.n_blocks)
            .map(|_| BlockParams {
                ln1: LayerNorm::identity(d),
                wq: Linear::xavier(d, d, &mut rng),
                wk: Linear::xavier(d, d, &mut rng),
                wv: Linear::xavier(d, d, &mut rng),
                wo: Linear::xavier(d, d, &mut rng),
                ln2: LayerNorm::identity(d),
                w1: Linear::xavier(d, cfg.ffn_dim(), &mut rng),
                w2: Linear::xavier(cfg.ffn_dim(), d, &mut rng),
            })
            .collect();
        let head = Linear::xavier(d, 1, &mut rng);
        Ok(TopoNetParams { cfg, in_proj, blocks, head })
    }

    /// Unweighted parameters (zero linears, identity layer norms) with
    /// the shapes implied by `cfg` — the landing buffer for
    /// [`load_params`](super::load_params) and [`cast`](Self::cast).
    pub fn zeros(cfg: TopoNetConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let lin = |rows: usize, cols: usize| Linear::<S> {
            w: Mat::zeros(rows, cols),
            b: vec![S::zero(); cols],
        };
        Ok(TopoNetParams {
            in_proj: lin(cfg.input_dim(), d),
            blocks: (0..cfg.n_blocks)
                .map(|_| BlockParams {
                    ln1: LayerNorm::identity(d),
                    wq: lin(d, d),
                    wk: lin(d, d),
                    wv: lin(d, d),
                    wo: lin(d, d),
                    ln2: LayerNorm::identity(d),
                    w1: lin(d, cfg.ffn_dim()),
                    w2: lin(cfg.ffn_dim(), d),
                })
                .collect(),
            head: lin(d, 1),
            cfg,
        })
    }

    /// Same shapes, all zeros — the gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        TopoNetParams {
            cfg: self.cfg.clone(),
            in_proj: self.in_proj.zeros_like(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    ln1: b.ln1.zeros_like(),
                    wq: b.wq.zeros_like(),
                    wk: b.wk.zeros_like(),
                    wv: b.wv.zeros_like(),
                    wo: b.wo.zeros_like(),
                    ln2: b.ln2.zeros_like(),
                    w1: b.w1.zeros_like(),
                    w2: b.w2.zeros_like(),
                })
                .collect(),
            head: self.head.zeros_like(),
        }
    }

    /// The frozen tensor traversal order shared by [`flatten`],
    /// [`assign`], and the on-disk manifest.
    ///
    /// [`flatten`]: TopoNetParams::flatten
    /// [`assign`]: TopoNetParams::assign
    pub(crate) fn tensors(&self) -> Vec<(String, TensorRef<'_, S>)> {
        let mut out: Vec<(String, TensorRef<'_, S>)> = vec![
            ("in_proj.w".into(), TensorRef::Mat(&self.in_proj.w)),
            ("in_proj.b".into(), TensorRef::Vec(&self.in_proj.b)),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            let pairs: [(&str, TensorRef<'_, S>); 16] = [
                ("ln1.gamma", TensorRef::Vec(&b.ln1.gamma)),
                ("ln1.beta", TensorRef::Vec(&b.ln1.beta)),
                ("attn.wq.w", TensorRef::Mat(&b.wq.w)),
                ("attn.wq.b", TensorRef::Vec(&b.wq.b)),
                ("attn.wk.w", TensorRef::Mat(&b.wk.w)),
                ("attn.wk.b", TensorRef::Vec(&b.wk.b)),
                ("attn.wv.w", TensorRef::Mat(&b.wv.w)),
                ("attn.wv.b", TensorRef::Vec(&b.wv.b)),
                ("attn.wo.w", TensorRef::Mat(&b.wo.w)),
                ("attn.wo.b", TensorRef::Vec(&b.wo.b)),
                ("ln2.gamma", TensorRef::Vec(&b.ln2.gamma)),
                ("ln2.beta", TensorRef::Vec(&b.ln2.beta)),
                ("ffn.w1.w", TensorRef::Mat(&b.w1.w)),
                ("ffn.w1.b", TensorRef::Vec(&b.w1.b)),
                ("ffn.w2.w", TensorRef::Mat(&b.w2.w)),
                ("ffn.w2.b", TensorRef::Vec(&b.w2.b)),
            ];
            for (name, t) in pairs {
                out.push((format!("block{i}.{name}"), t));
            }
        }
        out.push(("head.w".into(), TensorRef::Mat(&self.head.w)));
        out.push(("head.b".into(), TensorRef::Vec(&self.head.b)));
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [S]> {
        let mut out: Vec<&mut [S]> = vec![self.in_proj.w.data_mut(), &mut self.in_proj.b];
        for b in &mut self.blocks {
            out.push(&mut b.ln1.gamma);
            out.push(&mut b.ln1.beta);
            out.push(b.wq.w.data_mut());
            out.push(&mut b.wq.b);
            out.push(b.wk.w.data_mut());
            out.push(&mut b.wk.b);
            out.push(b.wv.w.data_mut());
            out.push(&mut b.wv.b);
            out.push(b.wo.w.data_mut());
            out.push(&mut b.wo.b);
            out.push(&mut b.ln2.gamma);
            out.push(&mut b.ln2.beta);
            out.push(b.w1.w.data_mut());
            out.push(&mut b.w1.b);
            out.push(b.w2.w.data_mut());
            out.push(&mut b.w2.b);
        }
        out.push(self.head.w.data_mut());
        out.push(&mut self.head.b);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// All parameters as one vector, in [`tensors`] order.
    ///
    /// [`tensors`]: TopoNetParams::tensors
    pub fn flatten(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, t) in self.tensors() {
            out.extend_from_slice(t.as_slice());
        }
        out
    }

    /// Overwrite all parameters from a flat vector (inverse of
    /// [`flatten`](TopoNetParams::flatten)).
    pub fn assign(&mut self, flat: &[S]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "flat vector has {} values, model has {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for slice in self.slices_mut() {
            slice.copy_from_slice(&flat[offset..offset + slice.len()]);
            offset += slice.len();
        }
        Ok(())
    }

    /// Elementwise `self += rhs * scale`; shapes must match.
    pub fn add_scaled(&mut self, rhs: &Self, scale: S) -> Result<()> {
        let rhs_flat = rhs.flatten();
        if rhs_flat.len() != self.num_params() {
            return Err(Error::Shape("parameter shapes disagree".into()));
        }
        let mut offset = 0;
        for slice in self.slices_mut() {
            for v in slice.iter_mut() {
                *v += rhs_flat[offset] * scale;
                offset += 1;
            }
        }
        Ok(())
    }

    pub fn cast<T: Scalar>(&self) -> TopoNetParams<T> {
        let mut out = TopoNetParams::<T>::zeros(self.cfg.clone()).expect("config already valid");
        let flat: Vec<T> = self.flatten().iter().map(|v| T::of(v.to_f64_lossy())).collect();
        out.assign(&flat).expect("cast preserves shapes");
        out
    }
}

/// Borrowed view of one named parameter tensor.
pub(crate) enum TensorRef<'a, S> {
    Mat(&'a Mat<S>),
    Vec(&'a Vec<S>),
}

impl<'a, S: Scalar> TensorRef<'a, S> {
    pub(crate) fn as_slice(&self) -> &[S] {
        match self {
            TensorRef::Mat(m) => m.data(),
            TensorRef::Vec(v) => v,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.as_slice().len()
    }

    pub(crate) fn dims(&self) -> Vec<usize> {
        match self {
            TensorRef::Mat(m) => vec![m.rows(), m.cols()],
            TensorRef::Vec(v) => vec![v.len()],
        }
    }
}
