use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Human-readable classifier description (TOML on disk).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub name: String,
    /// Input shape as `[channels, height, width]`.
    pub input: [usize; 3],
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Dense {
        units: usize,
    },
    Relu,
    Maxpool {
        size: usize,
        /// Defaults to `size`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stride: Option<usize>,
    },
    Flatten,
    Softmax,
}

fn one() -> usize {
    1
}

const BUILTINS: &[(&str, &str)] = &[
    ("mnist", include_str!("../../archs/mnist.toml")),
    ("svhn", include_str!("../../archs/svhn.toml")),
    ("cifar10", include_str!("../../archs/cifar10.toml")),
    ("synthetic", include_str!("../../archs/synthetic.toml")),
];

impl Architecture {
    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTINS.iter().map(|(n, _)| *n)
    }

    /// One of the architectures shipped in `archs/`.
    pub fn builtin(name: &str) -> Result<Self> {
        let (_, text) = BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::invalid(format!("unknown built-in architecture {name:?}")))?;
        Self::from_toml(text, name)
    }

    /// A built-in name or a path to a TOML file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if BUILTINS.iter().any(|(n, _)| *n == name_or_path) {
            return Self::builtin(name_or_path);
        }
        Self::load(Path::new(name_or_path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn from_toml(text: &str, origin: impl AsRef<Path>) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse(origin.as_ref(), e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("architecture serialises to TOML")
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }
}
