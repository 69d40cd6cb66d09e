use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::tensor::{Scalar, Tensor};

use super::config::NetworkConfig;
use super::plan::{layer_plan, param_shapes};

/// Named learnable tensors of one network configuration, in graph order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    entries: Vec<(String, Tensor<T>)>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> NetworkParams<T> {
    pub fn from_entries(entries: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (name, _)) in entries.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(invalid(format!("duplicate parameter `{name}`")));
            }
        }
        Ok(Self { entries, index })
    }

    /// All-zero parameters with the shapes `config` requires.
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let entries = param_shapes(&layer_plan(config))
            .into_iter()
            .map(|(name, shape)| (name, Tensor::zeros(&shape)))
            .collect();
        Self::from_entries(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.position(name).map(|i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.position(name).map(move |i| &mut self.entries[i].1)
    }

    pub fn by_index(&self, i: usize) -> &Tensor<T> {
        &self.entries[i].1
    }

    /// Total number of learnable scalars.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Layer names that own at least one parameter, in order.
    pub fn groups(&self) -> Vec<&str> {
        let mut groups: Vec<&str> = Vec::new();
        for (name, _) in &self.entries {
            let layer = name.split('.').next().unwrap_or(name);
            if groups.last() != Some(&layer) {
                groups.push(layer);
            }
        }
        groups
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        NetworkParams {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast()))
                .collect(),
            index: self.index.clone(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }
}

/// Whether a parameter is a recurrent (hidden-to-gate) kernel.
pub fn is_recurrent_kernel(name: &str) -> bool {
    name.rsplit('.').next().is_some_and(|leaf| leaf.starts_with("w_h"))
}

/// Fresh parameters for `config`: recurrent kernels get random orthogonal
/// rows, every other kernel is Glorot-uniform, biases start at zero. The
/// same seed always yields the same parameters.
pub fn init<T: Scalar>(config: &NetworkConfig, seed: u64) -> Result<NetworkParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for (name, shape) in param_shapes(&layer_plan(config)) {
        let tensor = if shape.len() == 1 {
            Tensor::zeros(&shape)
        } else if is_recurrent_kernel(&name) {
            orthogonal_kernel(&shape, &mut rng)
        } else {
            glorot_uniform(&shape, &mut rng)
        };
        entries.push((name, tensor));
    }
    NetworkParams::from_entries(entries)
}

/// `U(−l, l)` with `l = √(6 / (fan_in + fan_out))`, fans counted over the
/// receptive field: `fan_in = C_in·kh·kw`, `fan_out = C_out·kh·kw`.
pub fn glorot_limit(shape: &[usize]) -> f64 {
    let receptive: usize = shape[2..].iter().product();
    let fan_in = shape[1] * receptive;
    let fan_out = shape[0] * receptive;
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn glorot_uniform<T: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let limit = glorot_limit(shape);
    Tensor::from_fn(shape, |_| T::from_f64(rng.random_range(-limit..limit)))
}

/// Kernel of shape `[rows, ...]` whose reshape to `rows x cols` has
/// orthonormal rows (`rows <= cols` for every square recurrent kernel).
fn orthogonal_kernel<T: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let rows = shape[0];
    let cols: usize = shape[1..].iter().product();
    assert!(rows <= cols, "orthogonal rows need rows <= cols");
    let mut m: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    // Modified Gram-Schmidt, two passes for numerical orthogonality.
    for r in 0..rows {
        for _ in 0..2 {
            for p in 0..r {
                let (prev, cur) = m.split_at_mut(r * cols);
                let prev = &prev[p * cols..(p + 1) * cols];
                let cur = &mut cur[..cols];
                let dot: f64 = prev.iter().zip(cur.iter()).map(|(a, b)| a * b).sum();
                for (c, a) in cur.iter_mut().zip(prev) {
                    *c -= dot * a;
                }
            }
        }
        let row = &mut m[r * cols..(r + 1) * cols];
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    Tensor::new(shape, m.into_iter().map(T::from_f64).collect()).expect("shape matches")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Variant;

    fn tiny() -> NetworkConfig {
        NetworkConfig {
            resolution: 16,
            capacity_divisor: 8,
            ..Default::default()
        }
    }

    #[test]
    fn recurrent_kernels_have_orthonormal_rows() {
        let p = init::<f64>(&tiny(), 3).unwrap();
        let mut checked = 0;
        for (name, t) in p.iter().filter(|(n, _)| is_recurrent_kernel(n)) {
            let rows = t.shape()[0];
            let cols = t.len() / rows;
            for a in 0..rows {
                for b in 0..rows {
                    let dot: f64 = (0..cols)
                        .map(|k| t.data()[a * cols + k] * t.data()[b * cols + k])
                        .sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-5, "{name} ({a},{b}) = {dot}");
                }
            }
            checked += 1;
        }
        assert_eq!(checked, 16);
    }

    #[test]
    fn glorot_weights_within_bound_and_biases_zero() {
        let p = init::<f32>(&tiny(), 11).unwrap();
        for (name, t) in p.iter() {
            if t.shape().len() == 1 {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            } else if !is_recurrent_kernel(name) {
                let s = t.shape();
                let field = s[2] * s[3];
                let bound = (6.0 / ((s[1] * field + s[0] * field) as f64)).sqrt();
                assert!(t.data().iter().all(|&v| (v as f64).abs() <= bound), "{name}");
            }
        }
    }

    #[test]
    fn glorot_limit_for_three_by_three_conv() {
        let l = glorot_limit(&[64, 32, 3, 3]);
        assert!((l - (6.0f64 / (32.0 * 9.0 + 64.0 * 9.0)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = init::<f32>(&tiny(), 5).unwrap();
        let b = init::<f32>(&tiny(), 5).unwrap();
        let c = init::<f32>(&tiny(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn parameter_groups_follow_layer_names() {
        let p = NetworkParams::<f32>::zeros(&NetworkConfig::default()).unwrap();
        assert_eq!(
            p.groups(),
            vec![
                "conv_1", "conv_2", "conv_4", "conv_5", "conv_7", "conv_8", "bidir_1", "conv_11",
                "conv_12", "conv_14", "conv_15", "conv_17", "bidir_2", "conv_18"
            ]
        );
        let agg = NetworkConfig {
            variant: Variant::Aggregation2d,
            ..Default::default()
        };
        let p = NetworkParams::<f32>::zeros(&agg).unwrap();
        assert!(!p.groups().contains(&"bidir_1"));
        assert!(!p.groups().contains(&"bidir_2"));
    }
}
