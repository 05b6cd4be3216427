use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::rc::Rc;

use ndarray::ArrayD;

use crate::Scalar;

/// Handle to a named parameter array in a [`ParamStore`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

pub struct Param<S: Scalar> {
    pub name: String,
    pub value: Rc<ArrayD<S>>,
    pub trainable: bool,
}

/// Flat registry of every parameter in a model. Names are unique and stable,
/// which is what checkpointing and the per-step checksum tests rely on.
pub struct ParamStore<S: Scalar> {
    params: Vec<Param<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Registers a parameter. Panics on a duplicate name: layer constructors
    /// own their prefixes and a collision is a bug, not an input error.
    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<S>, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name `{name}`"
        );
        let id = ParamId(self.params.len());
        self.index.insert(name.clone(), id.0);
        self.params.push(Param {
            name,
            value: Rc::new(value),
            trainable,
        });
        id
    }

    pub fn get(&self, id: ParamId) -> &Param<S> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Rc<ArrayD<S>> {
        &self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn set_value(&mut self, id: ParamId, value: ArrayD<S>) {
        assert_eq!(
            self.params[id.0].value.shape(),
            value.shape(),
            "shape change for `{}`",
            self.params[id.0].name
        );
        self.params[id.0].value = Rc::new(value);
    }

    /// In-place mutation; copies only if a tape still shares the array.
    pub fn update_in_place(&mut self, id: ParamId, f: impl FnOnce(&mut ArrayD<S>)) {
        f(Rc::make_mut(&mut self.params[id.0].value));
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.ids().filter(|id| self.get(*id).trainable).collect()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_elements(&self, ids: &[ParamId]) -> usize {
        ids.iter().map(|id| self.value(*id).len()).sum()
    }

    /// Bit-exact checksum over the given parameters, in id order.
    pub fn fingerprint(&self, ids: &[ParamId]) -> u64 {
        let mut hasher = DefaultHasher::new();
        let mut bytes = Vec::new();
        for id in ids {
            let p = self.get(*id);
            p.name.hash(&mut hasher);
            bytes.clear();
            for v in p.value.iter() {
                v.write_le(&mut bytes);
            }
            bytes.hash(&mut hasher);
        }
        hasher.finish()
    }
}
