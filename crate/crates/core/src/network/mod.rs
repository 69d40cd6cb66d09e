//! The segmentation network: a U-Net whose 2D layers are applied to every
//! slice of a spatial context, with bidirectional convolutional LSTMs at the
//! bottleneck and before the output head.

mod checkpoint;
mod config;
mod export;
mod params;
mod plan;

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::layers::{bidirectional_clstm, time_distributed, CellVars, FusedCell};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CheckpointEntry};
pub use config::{NetworkConfig, Variant};
pub use export::{export_activations, feature_grid, normalize_maps};
pub use params::{glorot_limit, init, is_recurrent_kernel, NetworkParams};
pub use plan::{layer_plan, param_shapes, Activation, LayerKind, LayerSpec};

/// Output of one layer for every sequence element.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub name: &'static str,
    pub outputs: Vec<Var>,
}

/// A configured network with its parameters.
#[derive(Debug, Clone)]
pub struct Sensor3d<T> {
    config: NetworkConfig,
    plan: Vec<LayerSpec>,
    params: NetworkParams<T>,
}

impl<T: Scalar> Sensor3d<T> {
    /// Wraps `params`, checking that names and shapes match `config`.
    pub fn new(config: NetworkConfig, params: NetworkParams<T>) -> Result<Self> {
        let config = config.normalized();
        config.validate()?;
        let plan = layer_plan(&config);
        let expected = param_shapes(&plan);
        if expected.len() != params.len() {
            return Err(Error::ConfigMismatch {
                expected: format!("{} parameter tensors", expected.len()),
                found: format!("{}", params.len()),
            });
        }
        for ((name, shape), (have_name, have)) in expected.iter().zip(params.iter()) {
            if name != have_name || shape.as_slice() != have.shape() {
                return Err(Error::ConfigMismatch {
                    expected: format!("{name} {shape:?}"),
                    found: format!("{have_name} {:?}", have.shape()),
                });
            }
        }
        Ok(Self {
            config,
            plan,
            params,
        })
    }

    /// Builds and initialises a network.
    pub fn initialized(config: NetworkConfig, seed: u64) -> Result<Self> {
        let config = config.normalized();
        let params = init(&config, seed)?;
        Self::new(config, params)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn plan(&self) -> &[LayerSpec] {
        &self.plan
    }

    pub fn params(&self) -> &NetworkParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut NetworkParams<T> {
        &mut self.params
    }

    pub fn into_params(self) -> NetworkParams<T> {
        self.params
    }

    pub fn layer_names(&self) -> Vec<&'static str> {
        self.plan.iter().map(|l| l.name).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Sensor3d<U> {
        Sensor3d {
            config: self.config.clone(),
            plan: self.plan.clone(),
            params: self.params.cast(),
        }
    }

    /// Records all parameters on `tape` as differentiable leaves, in
    /// parameter order.
    pub fn record_params(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.tensors().map(|t| tape.leaf(t.clone())).collect()
    }

    fn check_context(&self, context: &[Tensor<T>]) -> Result<()> {
        let r = self.config.resolution;
        if context.len() != self.config.seq_len {
            return Err(Error::ConfigMismatch {
                expected: format!("{} slices per context", self.config.seq_len),
                found: format!("{}", context.len()),
            });
        }
        for s in context {
            if s.shape() != [1, r, r] {
                return Err(Error::ConfigMismatch {
                    expected: format!("slice shape [1, {r}, {r}]"),
                    found: format!("{:?}", s.shape()),
                });
            }
        }
        Ok(())
    }

    /// Runs the graph on `tape`. `inputs` are `[1,R,R]` slices and
    /// `param_vars` come from [`Self::record_params`]. Every layer output is
    /// reported to `observe`.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<T>,
        param_vars: &[Var],
        inputs: &[Var],
        observe: &mut dyn FnMut(&Tape<T>, &LayerTrace),
    ) -> Result<Var> {
        let pvar = |name: String| -> Result<Var> {
            self.params
                .position(&name)
                .map(|i| param_vars[i])
                .ok_or_else(|| invalid(format!("missing parameter `{name}`")))
        };
        let mut outputs: HashMap<&'static str, Vec<Var>> = HashMap::new();
        let mut seq = inputs.to_vec();

        for layer in &self.plan {
            seq = match &layer.kind {
                LayerKind::Conv { activation, .. } => {
                    let w = pvar(format!("{}.weight", layer.name))?;
                    let b = pvar(format!("{}.bias", layer.name))?;
                    let act = *activation;
                    time_distributed(tape, &seq, |t, x| {
                        let y = t.conv2d(x, w, Some(b))?;
                        Ok(match act {
                            Activation::Elu => t.elu(y),
                            Activation::Sigmoid => t.sigmoid(y),
                        })
                    })?
                }
                LayerKind::MaxPool => time_distributed(tape, &seq, |t, x| t.maxpool2x2(x))?,
                LayerKind::Upsample => time_distributed(tape, &seq, |t, x| t.upsample2x2(x))?,
                LayerKind::Concat { skip } => {
                    let skip_seq = outputs
                        .get(skip)
                        .ok_or_else(|| invalid(format!("skip source `{skip}` not computed")))?;
                    if skip_seq.len() != seq.len() {
                        return Err(invalid("skip and main sequences differ in length"));
                    }
                    skip_seq
                        .iter()
                        .zip(&seq)
                        .map(|(&a, &b)| tape.concat_channels(a, b))
                        .collect::<Result<_>>()?
                }
                LayerKind::Recurrent {
                    mode,
                    bidirectional,
                    ..
                } => {
                    let forward = self.cell(tape, &pvar, layer.name, "forward")?;
                    let backward = if *bidirectional {
                        Some(self.cell(tape, &pvar, layer.name, "backward")?)
                    } else {
                        None
                    };
                    bidirectional_clstm(tape, &forward, backward.as_ref(), &seq, *mode)?
                }
                LayerKind::TimeSum => {
                    let mut acc = seq[0];
                    for &v in &seq[1..] {
                        acc = tape.add(acc, v)?;
                    }
                    vec![acc]
                }
            };
            let trace = LayerTrace {
                name: layer.name,
                outputs: seq.clone(),
            };
            observe(tape, &trace);
            outputs.insert(layer.name, seq.clone());
        }
        match seq.as_slice() {
            [out] => Ok(*out),
            _ => Err(invalid("network ended with more than one output")),
        }
    }

    fn cell(
        &self,
        tape: &mut Tape<T>,
        pvar: &dyn Fn(String) -> Result<Var>,
        layer: &str,
        dir: &str,
    ) -> Result<FusedCell> {
        let gate = |kind: &str| -> Result<[Var; 4]> {
            let vars = crate::layers::GATES
                .iter()
                .map(|g| pvar(format!("{layer}.{dir}.{kind}{g}")))
                .collect::<Result<Vec<_>>>()?;
            Ok(vars.try_into().expect("four gates"))
        };
        CellVars {
            input_kernels: gate("w_x")?,
            recurrent_kernels: gate("w_h")?,
            biases: gate("b_")?,
        }
        .fuse(tape)
    }

    /// Segments the centre slice of one context of `[1,R,R]` slices and
    /// returns `[classes,R,R]` probabilities.
    pub fn predict(&self, context: &[Tensor<T>]) -> Result<Tensor<T>> {
        self.check_context(context)?;
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.tensors().map(|t| tape.constant(t.clone())).collect();
        let inputs: Vec<Var> = context.iter().map(|s| tape.constant(s.clone())).collect();
        let out = self.forward_on_tape(&mut tape, &params, &inputs, &mut |_, _| {})?;
        Ok(tape.value(out).clone())
    }

    /// Batched forward over `[B,o,1,R,R]`, returning `[B,classes,R,R]`.
    /// Contexts are evaluated independently, possibly in parallel.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let s = batch.shape();
        let r = self.config.resolution;
        if s.len() != 5 || s[1] != self.config.seq_len || s[2] != 1 || s[3] != r || s[4] != r {
            return Err(Error::ConfigMismatch {
                expected: format!("[B, {}, 1, {r}, {r}]", self.config.seq_len),
                found: format!("{s:?}"),
            });
        }
        let contexts: Vec<Vec<Tensor<T>>> = batch.unstack().iter().map(|c| c.unstack()).collect();
        let outs: Vec<Tensor<T>> = contexts
            .par_iter()
            .map(|c| self.predict(c))
            .collect::<Result<_>>()?;
        Tensor::stack(&outs)
    }

    /// Output shapes of every layer for one context, in graph order.
    pub fn trace_shapes(&self, context: &[Tensor<T>]) -> Result<Vec<(&'static str, Vec<Vec<usize>>)>> {
        self.check_context(context)?;
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.tensors().map(|t| tape.constant(t.clone())).collect();
        let inputs: Vec<Var> = context.iter().map(|s| tape.constant(s.clone())).collect();
        let mut shapes = Vec::new();
        self.forward_on_tape(&mut tape, &params, &inputs, &mut |tape, tr| {
            shapes.push((
                tr.name,
                tr.outputs.iter().map(|v| tape.value(*v).shape().to_vec()).collect(),
            ));
        })?;
        Ok(shapes)
    }

    /// Outputs of the named layer for one context, one `[C,H,W]` tensor per
    /// sequence element (a single one after the sequence collapses).
    pub fn layer_outputs(&self, context: &[Tensor<T>], layer: &str) -> Result<Vec<Tensor<T>>> {
        if !self.plan.iter().any(|l| l.name == layer) {
            return Err(invalid(format!(
                "unknown layer `{layer}`; valid layers: {}",
                self.layer_names().join(", ")
            )));
        }
        self.check_context(context)?;
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.tensors().map(|t| tape.constant(t.clone())).collect();
        let inputs: Vec<Var> = context.iter().map(|s| tape.constant(s.clone())).collect();
        let mut found = Vec::new();
        self.forward_on_tape(&mut tape, &params, &inputs, &mut |tape, tr| {
            if tr.name == layer {
                found = tr.outputs.iter().map(|v| tape.value(*v).clone()).collect();
            }
        })?;
        Ok(found)
    }
}
