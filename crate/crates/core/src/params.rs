//! Named parameter tensors and their text serialization.
//!
//! The text format is one header line followed by two lines per tensor:
//!
//! ```text
//! emocorr-params v1
//! encoder.embed 120x32
//! 0.013 -0.2 ...
//! ```

use rand::Rng;

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

const HEADER: &str = "emocorr-params v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    /// Adds a tensor drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
        let t = Tensor::new(shape.to_vec(), data).expect("valid parameter shape");
        self.add(name, t)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Inserts every parameter into `g`, trainable or constant.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        Bound(
            self.tensors
                .iter()
                .map(|t| {
                    if trainable {
                        g.param(t.clone())
                    } else {
                        g.constant(t.clone())
                    }
                })
                .collect(),
        )
    }

    /// Gradients of every bound parameter after `g.backward`; zeros where unreached.
    pub fn gradients(&self, g: &Graph, bound: &Bound) -> Vec<Vec<f64>> {
        self.tensors
            .iter()
            .zip(&bound.0)
            .map(|(t, &v)| g.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for (name, t) in self.names.iter().zip(&self.tensors) {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let dims = if dims.is_empty() {
                "scalar".to_string()
            } else {
                dims.join("x")
            };
            out.push_str(&format!("{name} {dims}\n"));
            let vals: Vec<String> = t.data().iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err("missing parameter file header".into());
        }
        let mut store = Self::new();
        while let Some(head) = lines.next() {
            if head.is_empty() {
                continue;
            }
            let (name, dims) = head
                .rsplit_once(' ')
                .ok_or_else(|| format!("bad tensor header {head:?}"))?;
            let shape: Vec<usize> = if dims == "scalar" {
                Vec::new()
            } else {
                dims.split('x')
                    .map(|d| d.parse().map_err(|_| format!("bad shape {dims:?}")))
                    .collect::<Result<_, _>>()?
            };
            let body = lines.next().ok_or_else(|| format!("missing values for {name}"))?;
            let data: Vec<f64> = body
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| format!("bad value {v:?} in {name}")))
                .collect::<Result<_, _>>()?;
            let t = Tensor::new(shape, data).map_err(|e| format!("{name}: {e}"))?;
            if store.id(name).is_some() {
                return Err(format!("duplicate parameter {name}"));
            }
            store.add(name, t);
        }
        Ok(store)
    }

    /// Copies values from `other` by name; every name and shape must match.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<(), String> {
        if other.len() != self.len() {
            return Err(format!(
                "expected {} parameters, found {}",
                self.len(),
                other.len()
            ));
        }
        for i in 0..self.len() {
            let src = other
                .id(&self.names[i])
                .ok_or_else(|| format!("missing parameter {}", self.names[i]))?;
            let t = other.get(src);
            if t.shape() != self.tensors[i].shape() {
                return Err(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    self.names[i],
                    t.shape(),
                    self.tensors[i].shape()
                ));
            }
            self.tensors[i] = t.clone();
        }
        Ok(())
    }
}

/// Graph handles of a bound [`ParamStore`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}

impl std::ops::Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}
