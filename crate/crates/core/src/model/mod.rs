//! The dual-branch directional graph attention network.
//!
//! Each branch stacks two single-head attention layers. A layer projects node
//! states with `W`, scores every edge `(i ← j)` as
//! `LeakyReLU(aᵀ [W h_i ‖ W h_j ‖ cos θ_ij ‖ sin θ_ij ‖ d_ij])`, normalizes the
//! scores over the incoming edges of each node, and sums the projected
//! neighbor states with those weights. The two branch outputs are blended by
//! `σ(alpha_raw)` and fed to a regression head and a classification head.

mod checkpoint;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::Checkpoint;

use crate::error::{Error, Result};
use crate::graph::{DualGraph, EdgeArrays};
use crate::tensor::{Gradients, Tape, Tensor, Var, LEAKY_SLOPE};
use crate::training::init::xavier_uniform;

/// Number of directional slots appended to the attention input.
pub const DIRECTIONAL_SLOTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
    Dual,
}

impl Task {
    pub fn uses_regression(self) -> bool {
        matches!(self, Task::Regression | Task::Dual)
    }

    pub fn uses_classification(self) -> bool {
        matches!(self, Task::Classification | Task::Dual)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
            Task::Dual => "dual",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            "dual" => Ok(Task::Dual),
            _ => Err(Error::Config(format!("unknown task `{}`", s))),
        }
    }
}

/// Ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Attention input without bearing and distance.
    NoDirection,
    /// Spatial branch only.
    SingleGraph,
    /// Full model trained without the smoothness penalty.
    NoSmooth,
    /// The radius graph is replaced by the feature kNN graph everywhere.
    KnnOnly,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoDirection,
        Variant::SingleGraph,
        Variant::NoSmooth,
        Variant::KnnOnly,
    ];

    pub fn directional(self) -> bool {
        self != Variant::NoDirection
    }

    pub fn has_feature_branch(self) -> bool {
        self != Variant::SingleGraph
    }

    pub fn uses_smoothness(self) -> bool {
        self != Variant::NoSmooth
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::NoDirection => "no_direction",
            Variant::SingleGraph => "single_graph",
            Variant::NoSmooth => "no_smooth",
            Variant::KnnOnly => "knn_only",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{}`", s)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub task: Task,
}

impl ModelConfig {
    pub fn new(input_dim: usize, task: Task) -> Self {
        Self {
            input_dim,
            hidden_dim: 32,
            task,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 || self.hidden_dim < 1 {
            return Err(Error::Config(format!(
                "input_dim and hidden_dim must be >= 1 (got {} and {})",
                self.input_dim, self.hidden_dim
            )));
        }
        Ok(())
    }
}

/// A named learnable array.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Edge sets feeding each branch and the smoothness penalty.
#[derive(Clone, Debug)]
pub struct GraphInputs {
    pub spatial_branch: EdgeArrays,
    pub feature_branch: EdgeArrays,
    /// Edges carrying the smoothness penalty (the radius graph unless the
    /// variant removes it).
    pub smoothness: EdgeArrays,
}

impl GraphInputs {
    pub fn new(g: &DualGraph, variant: Variant) -> Self {
        let spatial = EdgeArrays::new(g.n_nodes, &g.spatial_edges);
        let feature = EdgeArrays::new(g.n_nodes, &g.feature_edges);
        if variant == Variant::KnnOnly {
            Self {
                spatial_branch: feature.clone(),
                smoothness: feature.clone(),
                feature_branch: feature,
            }
        } else {
            Self {
                smoothness: spatial.clone(),
                spatial_branch: spatial,
                feature_branch: feature,
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.spatial_branch.n_nodes
    }
}

/// One attention layer with its parameters bound to a tape.
#[derive(Clone, Copy, Debug)]
pub struct DirectionalAttentionLayer {
    pub weight: Var,
    pub att: Var,
    pub directional: bool,
    pub leaky_slope: f64,
}

impl DirectionalAttentionLayer {
    /// Returns the projected states `W h` and the per-edge scores.
    pub fn attention_scores(
        &self,
        tape: &mut Tape,
        h: Var,
        edges: &EdgeArrays,
    ) -> Result<(Var, Var)> {
        let wh = tape.matmul(h, self.weight)?;
        let d = tape.value(wh).cols();
        let expected = 2 * d + if self.directional { DIRECTIONAL_SLOTS } else { 0 };
        let got = tape.value(self.att).len();
        if got != expected {
            return Err(Error::Config(format!(
                "attention vector has length {}, expected {}",
                got, expected
            )));
        }
        // aᵀ[Wh_i ‖ Wh_j ‖ dir] splits into per-node terms plus an edge term
        let a_dst = tape.slice(self.att, 0, d)?;
        let a_dst = tape.reshape(a_dst, vec![d, 1])?;
        let a_src = tape.slice(self.att, d, d)?;
        let a_src = tape.reshape(a_src, vec![d, 1])?;
        let s_dst = tape.matmul(wh, a_dst)?;
        let s_src = tape.matmul(wh, a_src)?;
        let e_dst = tape.gather_rows(s_dst, edges.dst.clone())?;
        let e_src = tape.gather_rows(s_src, edges.src.clone())?;
        let mut pre = tape.add(e_dst, e_src)?;
        if self.directional {
            let a_dir = tape.slice(self.att, 2 * d, DIRECTIONAL_SLOTS)?;
            let a_dir = tape.reshape(a_dir, vec![DIRECTIONAL_SLOTS, 1])?;
            let ann = tape.constant(edges.annotations.clone())?;
            let e_dir = tape.matmul(ann, a_dir)?;
            pre = tape.add(pre, e_dir)?;
        }
        let pre = tape.reshape(pre, vec![edges.len()])?;
        let scores = tape.leaky_relu(pre, self.leaky_slope)?;
        Ok((wh, scores))
    }

    /// Normalizes scores over each node's incoming edges and aggregates the
    /// projected neighbor states. Returns `(coefficients, new states)`.
    pub fn attention_aggregate(
        &self,
        tape: &mut Tape,
        scores: Var,
        wh: Var,
        edges: &EdgeArrays,
        activate: bool,
    ) -> Result<(Var, Var)> {
        let alpha = tape.segment_softmax(scores, edges.dst.clone())?;
        let msgs = tape.gather_rows(wh, edges.src.clone())?;
        let mut out = tape.segment_weighted_sum(msgs, alpha, edges.dst.clone(), edges.n_nodes)?;
        if activate {
            out = tape.leaky_relu(out, self.leaky_slope)?;
        }
        Ok((alpha, out))
    }
}

/// Tape handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Parameter leaves, in the model's parameter order.
    pub params: Vec<Var>,
    pub h_spatial: Var,
    pub h_feature: Option<Var>,
    pub h_final: Var,
    /// `[N]` regression outputs.
    pub reg: Var,
    /// `[N]` classification logits.
    pub cls: Var,
    /// Attention coefficients per layer, labelled `branch.layer`.
    pub attention: Vec<(String, Var)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SddGat {
    pub config: ModelConfig,
    pub variant: Variant,
    params: Vec<Param>,
}

fn branch_names(variant: Variant) -> &'static [&'static str] {
    if variant.has_feature_branch() {
        &["spatial", "feature"]
    } else {
        &["spatial"]
    }
}

impl SddGat {
    /// Xavier-initialized model. Biases and the fusion logit start at zero.
    pub fn new(config: ModelConfig, variant: Variant, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::rng::rng_for(seed, crate::rng::stream::INIT);
        let (f, d) = (config.input_dim, config.hidden_dim);
        let att_len = 2 * d + if variant.directional() { DIRECTIONAL_SLOTS } else { 0 };
        let mut params = Vec::new();
        for branch in branch_names(variant) {
            for (layer, fan_in) in [(0, f), (1, d)] {
                params.push(Param {
                    name: format!("{}.{}.weight", branch, layer),
                    value: xavier_uniform(&[fan_in, d], &mut rng),
                });
                params.push(Param {
                    name: format!("{}.{}.att", branch, layer),
                    value: xavier_uniform(&[att_len], &mut rng),
                });
            }
        }
        if variant.has_feature_branch() {
            params.push(Param {
                name: "fusion.alpha_raw".into(),
                value: Tensor::scalar(0.0),
            });
        }
        for head in ["reg", "cls"] {
            params.push(Param {
                name: format!("{}.weight", head),
                value: xavier_uniform(&[d, 1], &mut rng),
            });
            params.push(Param {
                name: format!("{}.bias", head),
                value: Tensor::scalar(0.0),
            });
        }
        Ok(Self {
            config,
            variant,
            params,
        })
    }

    /// Reassembles a model from named parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, variant: Variant, params: Vec<Param>) -> Result<Self> {
        let template = Self::new(config, variant, 0)?;
        if template.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                template.params.len(),
                params.len()
            )));
        }
        for (t, p) in template.params.iter().zip(&params) {
            if t.name != p.name || t.value.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` {:?} does not match expected `{}` {:?}",
                    p.name,
                    p.value.shape(),
                    t.name,
                    t.value.shape()
                )));
            }
        }
        Ok(Self {
            config,
            variant,
            params,
        })
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    /// Fusion weight `σ(alpha_raw)`; 1 when there is no feature branch.
    pub fn fusion_weight(&self) -> f64 {
        self.param("fusion.alpha_raw")
            .map_or(1.0, |t| crate::tensor::sigmoid(t.item()))
    }

    fn layer(&self, bound: &[Var], branch: &str, layer: usize) -> DirectionalAttentionLayer {
        let idx = |name: String| {
            self.params
                .iter()
                .position(|p| p.name == name)
                .expect("parameter exists for this variant")
        };
        DirectionalAttentionLayer {
            weight: bound[idx(format!("{}.{}.weight", branch, layer))],
            att: bound[idx(format!("{}.{}.att", branch, layer))],
            directional: self.variant.directional(),
            leaky_slope: LEAKY_SLOPE,
        }
    }

    fn branch(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        name: &str,
        x: Var,
        edges: &EdgeArrays,
        attention: &mut Vec<(String, Var)>,
    ) -> Result<Var> {
        let mut h = x;
        for layer in 0..2 {
            let l = self.layer(bound, name, layer);
            let (wh, scores) = l.attention_scores(tape, h, edges)?;
            // activation between the stacked layers only
            let (alpha, out) = l.attention_aggregate(tape, scores, wh, edges, layer == 0)?;
            attention.push((format!("{}.{}", name, layer), alpha));
            h = out;
        }
        Ok(h)
    }

    /// Full-graph forward pass recorded on `tape`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        features: &Tensor,
        graph: &GraphInputs,
    ) -> Result<ForwardOutput> {
        let n = graph.n_nodes();
        if features.shape() != [n, self.config.input_dim] {
            return Err(Error::dim(
                "forward",
                format!(
                    "features {:?}, expected [{}, {}]",
                    features.shape(),
                    n,
                    self.config.input_dim
                ),
            ));
        }
        let bound = self
            .params
            .iter()
            .map(|p| tape.param(p.value.clone()))
            .collect::<Result<Vec<_>>>()?;
        let x = tape.constant(features.clone())?;
        let mut attention = Vec::with_capacity(4);

        let h_spatial = self.branch(tape, &bound, "spatial", x, &graph.spatial_branch, &mut attention)?;
        let (h_feature, h_final) = if self.variant.has_feature_branch() {
            let h_f = self.branch(tape, &bound, "feature", x, &graph.feature_branch, &mut attention)?;
            let raw = bound[self.index_of("fusion.alpha_raw")];
            let a = tape.sigmoid(raw)?;
            let one = tape.constant(Tensor::scalar(1.0))?;
            let b = tape.sub(one, a)?;
            let s = tape.mul(h_spatial, a)?;
            let f = tape.mul(h_f, b)?;
            (Some(h_f), tape.add(s, f)?)
        } else {
            (None, h_spatial)
        };

        let reg = self.head(tape, &bound, "reg", h_final, n)?;
        let cls = self.head(tape, &bound, "cls", h_final, n)?;
        Ok(ForwardOutput {
            params: bound,
            h_spatial,
            h_feature,
            h_final,
            reg,
            cls,
            attention,
        })
    }

    fn index_of(&self, name: &str) -> usize {
        self.params
            .iter()
            .position(|p| p.name == name)
            .expect("parameter exists")
    }

    fn head(&self, tape: &mut Tape, bound: &[Var], name: &str, h: Var, n: usize) -> Result<Var> {
        let w = bound[self.index_of(&format!("{}.weight", name))];
        let b = bound[self.index_of(&format!("{}.bias", name))];
        let lin = tape.matmul(h, w)?;
        let out = tape.add(lin, b)?;
        tape.reshape(out, vec![n])
    }

    /// Collects the gradient of every parameter from a finished backward pass.
    /// Parameters unreachable from the loss get zero gradients.
    pub fn collect_grads(&self, out: &ForwardOutput, grads: &mut Gradients) -> Vec<Tensor> {
        self.params
            .iter()
            .zip(&out.params)
            .map(|(p, v)| {
                grads
                    .take(*v)
                    .unwrap_or_else(|| Tensor::zeros(p.value.shape()))
            })
            .collect()
    }

    /// Forward pass returning plain values `(regression, logits)`.
    pub fn predict(&self, features: &Tensor, graph: &GraphInputs) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, features, graph)?;
        Ok((
            tape.value(out.reg).data().to_vec(),
            tape.value(out.cls).data().to_vec(),
        ))
    }
}

/// Assembles a freshly initialized model for an ablation variant together
/// with the graph inputs it trains on.
pub fn make_ablation_variant(
    config: ModelConfig,
    variant: &str,
    graph: &DualGraph,
    seed: u64,
) -> Result<(SddGat, GraphInputs)> {
    let variant: Variant = variant.parse()?;
    Ok((SddGat::new(config, variant, seed)?, GraphInputs::new(graph, variant)))
}

#[cfg(test)]
mod tests;
