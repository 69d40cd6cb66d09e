//! The layer graph. Layer names keep the numbering of the reference
//! architecture table, gaps included (there is no `conv_3`, `conv_6`, ...).

use crate::layers::ClstmMode;

use super::config::{NetworkConfig, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    /// Time-distributed same-padded convolution followed by an activation.
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        activation: Activation,
    },
    MaxPool,
    Upsample,
    /// Channel concatenation of a contraction-path output (first) with the
    /// incoming sequence.
    Concat { skip: &'static str },
    Recurrent {
        in_channels: usize,
        hidden: usize,
        mode: ClstmMode,
        bidirectional: bool,
    },
    /// Elementwise sum over the sequence axis.
    TimeSum,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: &'static str,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self.kind, LayerKind::Conv { .. } | LayerKind::Recurrent { .. })
    }

    /// Human readable type, as printed in architecture summaries.
    pub fn type_name(&self) -> &'static str {
        match &self.kind {
            LayerKind::Conv { kernel: 1, .. } => "Conv2D",
            LayerKind::Conv { .. } => "TD Conv2D",
            LayerKind::MaxPool => "TD MaxPool",
            LayerKind::Upsample => "TD Upsampling",
            LayerKind::Concat { .. } => "Concatenate",
            LayerKind::Recurrent {
                bidirectional: true,
                ..
            } => "Bidirectional C-LSTM",
            LayerKind::Recurrent { .. } => "C-LSTM",
            LayerKind::TimeSum => "Time Sum",
        }
    }
}

fn conv(name: &'static str, in_channels: usize, out_channels: usize) -> LayerSpec {
    LayerSpec {
        name,
        kind: LayerKind::Conv {
            in_channels,
            out_channels,
            kernel: 3,
            activation: Activation::Elu,
        },
    }
}

fn plain(name: &'static str, kind: LayerKind) -> LayerSpec {
    LayerSpec { name, kind }
}

/// Builds the ordered layer list for `config`.
pub fn layer_plan(config: &NetworkConfig) -> Vec<LayerSpec> {
    let f = config.features();
    let bidirectional = config.variant != Variant::Unidirectional;
    let aggregation = config.variant == Variant::Aggregation2d;

    let mut plan = vec![
        conv("conv_1", 1, f),
        conv("conv_2", f, f),
        plain("pool_1", LayerKind::MaxPool),
        conv("conv_4", f, 2 * f),
        conv("conv_5", 2 * f, 2 * f),
        plain("pool_2", LayerKind::MaxPool),
        // pool_2 emits 2f channels; the architecture table lists 4f here, which
        // cannot be wired.
        conv("conv_7", 2 * f, 4 * f),
        conv("conv_8", 4 * f, 4 * f),
        plain("pool_3", LayerKind::MaxPool),
    ];
    let bottleneck = if aggregation {
        4 * f
    } else {
        plan.push(plain(
            "bidir_1",
            LayerKind::Recurrent {
                in_channels: 4 * f,
                hidden: 8 * f,
                mode: ClstmMode::Sequence,
                bidirectional,
            },
        ));
        8 * f
    };
    plan.extend([
        plain("up_1", LayerKind::Upsample),
        plain("concat_1", LayerKind::Concat { skip: "conv_8" }),
        conv("conv_11", 4 * f + bottleneck, 4 * f),
        conv("conv_12", 4 * f, 4 * f),
        plain("up_2", LayerKind::Upsample),
        plain("concat_2", LayerKind::Concat { skip: "conv_5" }),
        conv("conv_14", 2 * f + 4 * f, 2 * f),
        conv("conv_15", 2 * f, 2 * f),
        plain("up_3", LayerKind::Upsample),
        plain("concat_3", LayerKind::Concat { skip: "conv_2" }),
        conv("conv_17", f + 2 * f, f),
    ]);
    if aggregation {
        plan.push(plain("aggregate", LayerKind::TimeSum));
    } else {
        plan.push(plain(
            "bidir_2",
            LayerKind::Recurrent {
                in_channels: f,
                hidden: f,
                mode: ClstmMode::Collapse,
                bidirectional,
            },
        ));
    }
    plan.push(LayerSpec {
        name: "conv_18",
        kind: LayerKind::Conv {
            in_channels: f,
            out_channels: config.classes,
            kernel: 1,
            activation: Activation::Sigmoid,
        },
    });
    plan
}

/// Names and shapes of every parameter tensor, in a fixed order.
pub fn param_shapes(plan: &[LayerSpec]) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for layer in plan {
        match layer.kind {
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                out.push((
                    format!("{}.weight", layer.name),
                    vec![out_channels, in_channels, kernel, kernel],
                ));
                out.push((format!("{}.bias", layer.name), vec![out_channels]));
            }
            LayerKind::Recurrent {
                in_channels,
                hidden,
                bidirectional,
                ..
            } => {
                let dirs: &[&str] = if bidirectional {
                    &["forward", "backward"]
                } else {
                    &["forward"]
                };
                for dir in dirs {
                    for (kind, shape) in [
                        ("w_x", vec![hidden, in_channels, 3, 3]),
                        ("w_h", vec![hidden, hidden, 3, 3]),
                        ("b_", vec![hidden]),
                    ] {
                        for gate in crate::layers::GATES {
                            out.push((format!("{}.{dir}.{kind}{gate}", layer.name), shape.clone()));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    out
}
