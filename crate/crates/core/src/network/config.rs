use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// Architecture variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    /// Time-distributed U-Net with both bidirectional CLSTM blocks.
    #[default]
    Full,
    /// The full graph fed with single slices (sequence length forced to 1).
    SingleSlice2d,
    /// No first CLSTM; the second one is replaced by a sum over the sequence.
    Aggregation2d,
    /// Both CLSTM blocks run forward only.
    Unidirectional,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::SingleSlice2d,
        Variant::Aggregation2d,
        Variant::Unidirectional,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::SingleSlice2d => "single-slice-2d",
            Variant::Aggregation2d => "aggregation-2d",
            Variant::Unidirectional => "unidirectional",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown variant `{s}`")))
    }
}

/// Hyper-parameters that fix the network graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkConfig {
    /// Slices per spatial context; odd so a centre slice exists.
    pub seq_len: usize,
    /// In-plane resolution `R` of the square network input.
    pub resolution: usize,
    /// Feature maps of the first convolution at full capacity.
    pub base_features: usize,
    /// Uniform reduction of all feature-map counts.
    pub capacity_divisor: usize,
    pub variant: Variant,
    pub classes: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            seq_len: 3,
            resolution: 128,
            base_features: 64,
            capacity_divisor: 1,
            variant: Variant::Full,
            classes: 1,
        }
    }
}

impl NetworkConfig {
    /// Config with the variant's constraints applied (single-slice forces a
    /// sequence length of one).
    pub fn normalized(&self) -> Self {
        let mut c = self.clone();
        if c.variant == Variant::SingleSlice2d {
            c.seq_len = 1;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.seq_len % 2 == 0 {
            return Err(invalid(format!(
                "sequence length must be odd and positive, got {}",
                self.seq_len
            )));
        }
        if self.variant == Variant::SingleSlice2d && self.seq_len != 1 {
            return Err(invalid("single-slice-2d requires a sequence length of 1"));
        }
        if self.resolution == 0 || self.resolution % 8 != 0 {
            return Err(invalid(format!(
                "resolution must be a positive multiple of 8, got {}",
                self.resolution
            )));
        }
        if ![1, 2, 4, 8].contains(&self.capacity_divisor) {
            return Err(invalid(format!(
                "capacity divisor must be one of 1, 2, 4, 8, got {}",
                self.capacity_divisor
            )));
        }
        if self.base_features == 0 || self.base_features % self.capacity_divisor != 0 {
            return Err(invalid(format!(
                "base features {} not divisible by capacity divisor {}",
                self.base_features, self.capacity_divisor
            )));
        }
        if self.classes == 0 {
            return Err(invalid("class count must be positive"));
        }
        Ok(())
    }

    /// Feature maps of the first block after the capacity reduction.
    pub fn features(&self) -> usize {
        self.base_features / self.capacity_divisor
    }

    /// Single-line `key=value` rendering used by checkpoints.
    pub fn to_line(&self) -> String {
        format!(
            "seq_len={} resolution={} base_features={} capacity_divisor={} variant={} classes={}",
            self.seq_len,
            self.resolution,
            self.base_features,
            self.capacity_divisor,
            self.variant,
            self.classes
        )
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let mut cfg = NetworkConfig::default();
        let mut seen = 0;
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| invalid(format!("config token `{tok}` lacks `=`")))?;
            let num = || {
                v.parse::<usize>()
                    .map_err(|_| invalid(format!("config value `{tok}` is not an integer")))
            };
            match k {
                "seq_len" => cfg.seq_len = num()?,
                "resolution" => cfg.resolution = num()?,
                "base_features" => cfg.base_features = num()?,
                "capacity_divisor" => cfg.capacity_divisor = num()?,
                "classes" => cfg.classes = num()?,
                "variant" => cfg.variant = v.parse()?,
                _ => return Err(invalid(format!("unknown config key `{k}`"))),
            }
            seen += 1;
        }
        if seen != 6 {
            return Err(invalid(format!("config line has {seen} of 6 keys")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
