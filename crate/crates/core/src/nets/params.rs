use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::tensor::{Element, Gradients, Tensor};

/// Parameter groups. Every parameter name starts with `<group>.`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Denoiser,
    Referencenet,
    PoseGuider,
    Motion,
    Embedder,
    Codec,
}

impl Group {
    pub const ALL: [Group; 6] = [
        Group::Denoiser,
        Group::Referencenet,
        Group::PoseGuider,
        Group::Motion,
        Group::Embedder,
        Group::Codec,
    ];

    /// Groups optimized in stage 1 and frozen in stage 2.
    pub const STAGE1: [Group; 5] = [
        Group::Denoiser,
        Group::Referencenet,
        Group::PoseGuider,
        Group::Embedder,
        Group::Codec,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            Group::Denoiser => "denoiser",
            Group::Referencenet => "referencenet",
            Group::PoseGuider => "pose_guider",
            Group::Motion => "motion",
            Group::Embedder => "embedder",
            Group::Codec => "codec",
        }
    }

    pub fn of(name: &str) -> Option<Group> {
        let head = name.split('.').next()?;
        Group::ALL.into_iter().find(|g| g.prefix() == head)
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// `N(0, 1 / fan_in)`.
    Normal { fan_in: usize },
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Collects parameter declarations under a dotted prefix.
#[derive(Debug, Default)]
pub struct SpecSink {
    pub specs: Vec<ParamSpec>,
}

impl SpecSink {
    pub fn push(&mut self, name: String, shape: Vec<usize>, init: Init) {
        self.specs.push(ParamSpec { name, shape, init });
    }

    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) {
        self.push(format!("{name}.weight"), vec![cout, cin, k, k], Init::Normal { fan_in: cin * k * k });
        self.push(format!("{name}.bias"), vec![cout], Init::Zeros);
    }

    pub fn conv_zero(&mut self, name: &str, cin: usize, cout: usize, k: usize) {
        self.push(format!("{name}.weight"), vec![cout, cin, k, k], Init::Zeros);
        self.push(format!("{name}.bias"), vec![cout], Init::Zeros);
    }

    pub fn linear(&mut self, name: &str, fin: usize, fout: usize, bias: bool) {
        self.push(format!("{name}.weight"), vec![fout, fin], Init::Normal { fan_in: fin });
        if bias {
            self.push(format!("{name}.bias"), vec![fout], Init::Zeros);
        }
    }

    pub fn linear_zero(&mut self, name: &str, fin: usize, fout: usize) {
        self.push(format!("{name}.weight"), vec![fout, fin], Init::Zeros);
        self.push(format!("{name}.bias"), vec![fout], Init::Zeros);
    }

    pub fn norm(&mut self, name: &str, c: usize) {
        self.push(format!("{name}.gamma"), vec![c], Init::Ones);
        self.push(format!("{name}.beta"), vec![c], Init::Zeros);
    }
}

/// Named tensors a forward pass reads. Trainable entries are autodiff
/// leaves; the rest are constants.
#[derive(Clone, Debug)]
pub struct Params<T: Element> {
    map: HashMap<String, Tensor<T>>,
}

impl<T: Element> Params<T> {
    pub fn new(map: HashMap<String, Tensor<T>>) -> Self {
        Self { map }
    }

    /// Builds from raw values; names in `trainable` groups become leaves.
    pub fn from_values<'a, I>(values: I, trainable: &[Group]) -> Self
    where
        I: IntoIterator<Item = (&'a String, &'a [usize], Vec<T>)>,
    {
        let map = values
            .into_iter()
            .map(|(name, shape, data)| {
                let t = match Group::of(name) {
                    Some(g) if trainable.contains(&g) => Tensor::param(data, shape),
                    _ => Tensor::from_vec(data, shape),
                };
                (name.clone(), t)
            })
            .collect();
        Self { map }
    }

    pub fn get(&self, name: &str) -> &Tensor<T> {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing from parameter set"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.map.iter()
    }

    /// Gradients of every leaf, zero-filled where no path reached it.
    pub fn collect_grads(&self, grads: &Gradients<T>) -> BTreeMap<String, Vec<T>> {
        self.map
            .iter()
            .filter(|(_, t)| t.is_param())
            .map(|(n, t)| {
                let g = grads.get(t).map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); t.numel()]);
                (n.clone(), g)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_prefixes_round_trip() {
        for g in Group::ALL {
            assert_eq!(Group::of(&format!("{}.x.weight", g.prefix())), Some(g));
        }
        assert_eq!(Group::of("other.x"), None);
    }
}
