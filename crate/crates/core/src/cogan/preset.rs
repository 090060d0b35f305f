//! Architecture presets for 28x28 single-channel digit domains.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::LayerSpec::{self, *};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetName {
    DigitConv,
    DigitRotationFc,
    ConditionalDigit,
}

impl PresetName {
    pub const ALL: [PresetName; 3] = [PresetName::DigitConv, PresetName::DigitRotationFc, PresetName::ConditionalDigit];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::DigitConv => "digit-conv",
            PresetName::DigitRotationFc => "digit-rotation-fc",
            PresetName::ConditionalDigit => "conditional-digit",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}` (expected digit-conv, digit-rotation-fc or conditional-digit)")))
    }
}

/// Block-level layer specs for both networks. Each inner list is one table
/// row; sharing is declared per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchPreset {
    pub name: PresetName,
    /// Generator hidden widths are divided by this (1 = published widths).
    pub width_divisor: usize,
    pub z_dim: usize,
    /// Extra generator inputs appended to `z` (the conditional domain bit).
    pub cond_dim: usize,
    pub image_shape: [usize; 3],
    pub generator: Vec<Vec<LayerSpec>>,
    pub discriminator: Vec<Vec<LayerSpec>>,
    pub default_k: usize,
    pub default_l: usize,
}

fn lenet(head: Vec<LayerSpec>) -> Vec<Vec<LayerSpec>> {
    vec![
        vec![Conv { out: 20, k: 5, stride: 1, pad: 0 }, MaxPool { window: 2 }],
        vec![Conv { out: 50, k: 5, stride: 1, pad: 0 }, MaxPool { window: 2 }],
        vec![Dense { out: 500 }, PRelu],
        head,
    ]
}

fn fconv_generator(div: usize) -> Vec<Vec<LayerSpec>> {
    let block = |out, k, stride, pad| vec![TransposedConv { out, k, stride, pad }, BatchNorm, PRelu];
    vec![
        block(1024 / div, 4, 1, 0),
        block(512 / div, 3, 2, 1),
        block(256 / div, 3, 2, 1),
        block(128 / div, 3, 2, 1),
        vec![TransposedConv { out: 1, k: 6, stride: 1, pad: 1 }, Sigmoid],
    ]
}

impl ArchPreset {
    pub fn new(name: PresetName, width_divisor: usize) -> Result<Self> {
        if width_divisor == 0 || 128 % width_divisor != 0 {
            return Err(Error::Config(format!(
                "width divisor {width_divisor} must be a positive divisor of 128"
            )));
        }
        let div = width_divisor;
        let sigmoid_head = vec![Dense { out: 1 }, Sigmoid];
        Ok(match name {
            PresetName::DigitConv => ArchPreset {
                name,
                width_divisor,
                z_dim: 100,
                cond_dim: 0,
                image_shape: [1, 28, 28],
                generator: fconv_generator(div),
                discriminator: lenet(sigmoid_head),
                default_k: 4,
                default_l: 3,
            },
            PresetName::DigitRotationFc => {
                let hidden = || vec![Dense { out: 1024 / div }, BatchNorm, PRelu];
                ArchPreset {
                    name,
                    width_divisor,
                    z_dim: 100,
                    cond_dim: 0,
                    image_shape: [1, 28, 28],
                    generator: vec![
                        hidden(),
                        hidden(),
                        hidden(),
                        hidden(),
                        vec![Dense { out: 784 }, Sigmoid, Reshape(vec![1, 28, 28])],
                    ],
                    discriminator: lenet(sigmoid_head),
                    default_k: 4,
                    default_l: 1,
                }
            }
            PresetName::ConditionalDigit => ArchPreset {
                name,
                width_divisor,
                z_dim: 100,
                cond_dim: 1,
                image_shape: [1, 28, 28],
                generator: fconv_generator(div),
                discriminator: lenet(vec![Dense { out: 3 }, Softmax]),
                default_k: 0,
                default_l: 0,
            },
        })
    }

    pub fn generator_input(&self) -> usize {
        self.z_dim + self.cond_dim
    }

    pub fn max_k(&self) -> usize {
        self.generator.len() - 1
    }

    pub fn max_l(&self) -> usize {
        self.discriminator.len()
    }

    pub fn check_sharing(&self, k: usize, l: usize) -> Result<()> {
        if self.cond_dim != 0 {
            return Err(Error::Config(format!("preset {} is a single conditional GAN, not a coupled pair", self.name)));
        }
        if k > self.max_k() {
            return Err(Error::Config(format!(
                "k = {k} shared generator layers; {} allows 0..={}",
                self.name,
                self.max_k()
            )));
        }
        if l > self.max_l() {
            return Err(Error::Config(format!(
                "l = {l} shared discriminator layers; {} allows 0..={}",
                self.name,
                self.max_l()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in PresetName::ALL {
            assert_eq!(p.as_str().parse::<PresetName>().unwrap(), p);
        }
        assert!("digits".parse::<PresetName>().is_err());
    }

    #[test]
    fn divisor_validation() {
        assert!(ArchPreset::new(PresetName::DigitConv, 3).is_err());
        let p = ArchPreset::new(PresetName::DigitConv, 4).unwrap();
        assert_eq!(p.generator[0][0], TransposedConv { out: 256, k: 4, stride: 1, pad: 0 });
        assert_eq!(p.generator[4][0].to_string(), "FCONV-(N1,K6x6,S1)");
    }

    #[test]
    fn sharing_bounds() {
        let p = ArchPreset::new(PresetName::DigitConv, 1).unwrap();
        assert!(p.check_sharing(4, 4).is_ok());
        assert!(p.check_sharing(5, 0).is_err());
        assert!(p.check_sharing(0, 5).is_err());
    }
}
