use std::collections::{BTreeMap, HashMap};

use super::{KernelError, Real, Tensor};

/// A trainable tensor together with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Parameter<T> {
    name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    frozen: bool,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
            frozen: false,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Frozen parameters are read as constants by the tape: no gradient is
    /// computed for them and the optimizer never touches them.
    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }
}

/// Ordered collection of uniquely named parameters belonging to one network.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        value: Tensor<T>,
    ) -> Result<usize, KernelError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(KernelError::DuplicateParameter(name));
        }
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Parameter::new(name, value));
        Ok(id)
    }

    pub fn get(&self, name: &str) -> Option<&Parameter<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter<T>> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    pub fn by_index(&self, id: usize) -> &Parameter<T> {
        &self.params[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        for p in &mut self.params {
            p.frozen = frozen;
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Adds `grads` into the stored gradients of matching parameters. Names
    /// that belong to another network are ignored.
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        for (name, g) in grads.iter() {
            if let Some(&i) = self.index.get(name) {
                self.params[i].grad.add_assign(g);
            }
        }
    }

    pub fn scale_grads(&mut self, factor: T) {
        for p in &mut self.params {
            p.grad.scale(factor);
        }
    }

    /// Replaces the value of an existing parameter, keeping its shape.
    pub fn assign(&mut self, name: &str, value: Tensor<T>) -> Result<(), KernelError> {
        let p = self
            .get_mut(name)
            .ok_or_else(|| KernelError::UnknownParameter(name.to_string()))?;
        if p.value.shape() != value.shape() {
            return Err(KernelError::ShapeMismatch {
                op: "assign",
                expected: p.value.shape().to_vec(),
                actual: value.shape().to_vec(),
            });
        }
        p.value = value;
        Ok(())
    }
}

/// Gradients produced by one backward pass, keyed by parameter name.
#[derive(Debug, Clone, Default)]
pub struct Gradients<T> {
    map: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn new() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }

    pub(crate) fn add(&mut self, name: &str, grad: Tensor<T>) {
        match self.map.get_mut(name) {
            Some(existing) => existing.add_assign(&grad),
            None => {
                self.map.insert(name.to_string(), grad);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.map.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn merge(&mut self, other: &Gradients<T>) {
        for (name, g) in other.iter() {
            self.add(name, g.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::zeros(&[2])).unwrap();
        assert!(matches!(
            store.insert("w", Tensor::zeros(&[3])),
            Err(KernelError::DuplicateParameter(_))
        ));
    }

    #[test]
    fn accumulate_ignores_foreign_names() {
        let mut store = ParamStore::<f64>::new();
        store.insert("a", Tensor::zeros(&[2])).unwrap();
        let mut g = Gradients::new();
        g.add("a", Tensor::from_vec(vec![1.0, 2.0]));
        g.add("other.b", Tensor::from_vec(vec![5.0]));
        store.accumulate(&g);
        store.accumulate(&g);
        assert_eq!(store.get("a").unwrap().grad.data(), &[2.0, 4.0]);
    }
}
