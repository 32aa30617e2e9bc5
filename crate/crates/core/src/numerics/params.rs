use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Grads, NumericsError, Tape, Tensor, Var};

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<(String, Tensor)>", into = "Vec<(String, Tensor)>")]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl From<Vec<(String, Tensor)>> for ParamStore {
    fn from(entries: Vec<(String, Tensor)>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.clone(), i))
            .collect();
        Self { entries, index }
    }
}

impl From<ParamStore> for Vec<(String, Tensor)> {
    fn from(s: ParamStore) -> Self {
        s.entries
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter; replacing an existing name keeps its position.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        match self.index.get(&name) {
            Some(&i) => self.entries[i].1 = value,
            None => {
                self.index.insert(name.clone(), self.entries.len());
                self.entries.push((name, value));
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Pushes every parameter onto `tape` as a differentiable leaf.
    pub fn bind<'a>(&'a self, tape: &mut Tape) -> Bound<'a> {
        let vars = self.entries.iter().map(|(_, t)| tape.param(t.clone())).collect();
        Bound { store: self, vars }
    }

    /// Pushes every parameter as a constant (no gradient).
    pub fn bind_frozen<'a>(&'a self, tape: &mut Tape) -> Bound<'a> {
        let vars = self
            .entries
            .iter()
            .map(|(_, t)| tape.constant(t.clone()))
            .collect();
        Bound { store: self, vars }
    }

    /// Pairs this store with variables already on a tape, one per parameter
    /// in store order (e.g. the leaves handed out by [`super::grad_check`]).
    pub fn with_vars(&self, vars: Vec<Var>) -> Result<Bound<'_>, NumericsError> {
        if vars.len() != self.entries.len() {
            return Err(NumericsError::shape("with_vars", [self.entries.len(), 1], [vars.len(), 1]));
        }
        Ok(Bound { store: self, vars })
    }

    /// Zero tensors shaped like each parameter.
    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.entries
            .iter()
            .map(|(_, t)| Tensor::zeros(t.rows(), t.cols()))
            .collect()
    }
}

/// Parameters of one store bound to tape variables.
#[derive(Debug)]
pub struct Bound<'a> {
    store: &'a ParamStore,
    vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn var(&self, name: &str) -> Result<Var, NumericsError> {
        self.store
            .index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Gradients for every bound parameter, in store order.
    pub fn collect(&self, grads: &Grads) -> Vec<Tensor> {
        self.vars.iter().map(|&v| grads.wrt(v)).collect()
    }
}
