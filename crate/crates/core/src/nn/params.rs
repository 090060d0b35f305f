use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Stable, globally unique name of one network parameter, e.g. `g1.b2.0.weight`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(String);

impl ParamId {
    pub fn new(name: impl Into<String>) -> Self {
        ParamId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A layer's handle on its parameter: the id it answers to and the storage
/// slot it reads. Tied parameters have distinct ids and a common slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamRef {
    pub id: ParamId,
    pub slot: usize,
}

/// Parameter storage shared by every network of a model.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    slots: Vec<Tensor>,
    ids: BTreeMap<ParamId, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, id: ParamId, value: Tensor) -> Result<ParamRef> {
        if self.ids.contains_key(&id) {
            return Err(Error::Config(format!("duplicate parameter id {id}")));
        }
        let slot = self.slots.len();
        self.slots.push(value);
        self.ids.insert(id.clone(), slot);
        Ok(ParamRef { id, slot })
    }

    /// Binds a new id to an existing slot.
    pub fn alias(&mut self, id: ParamId, slot: usize) -> Result<ParamRef> {
        if slot >= self.slots.len() {
            return Err(Error::Usage(format!("alias to missing slot {slot}")));
        }
        if self.ids.contains_key(&id) {
            return Err(Error::Config(format!("duplicate parameter id {id}")));
        }
        self.ids.insert(id.clone(), slot);
        Ok(ParamRef { id, slot })
    }

    pub fn slot(&self, slot: usize) -> &Tensor {
        &self.slots[slot]
    }

    pub fn slot_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.slots[slot]
    }

    pub fn slot_of(&self, id: &ParamId) -> Option<usize> {
        self.ids.get(id).copied()
    }

    pub fn get(&self, id: &ParamId) -> Option<&Tensor> {
        self.slot_of(id).map(|s| &self.slots[s])
    }

    /// Overwrites a parameter value (and therefore every id tied to it).
    pub fn set(&mut self, id: &ParamId, value: Tensor) -> Result<()> {
        let slot = self
            .slot_of(id)
            .ok_or_else(|| Error::Usage(format!("unknown parameter {id}")))?;
        self.slots[slot].expect_same_shape(&value, "ParamStore::set")?;
        self.slots[slot] = value;
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = (&ParamId, usize)> {
        self.ids.iter().map(|(k, &v)| (k, v))
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    /// Number of scalars in distinct storage; tied parameters count once.
    pub fn scalar_count(&self) -> usize {
        self.slots.iter().map(Tensor::len).sum()
    }

    pub fn owners(&self, slot: usize) -> Vec<&ParamId> {
        self.ids
            .iter()
            .filter(|(_, &s)| s == slot)
            .map(|(k, _)| k)
            .collect()
    }
}

/// Gradients keyed by parameter id, in deterministic (sorted) order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientMap(BTreeMap<ParamId, Tensor>);

impl GradientMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &ParamId) -> Option<&Tensor> {
        self.0.get(id)
    }

    pub fn insert(&mut self, id: ParamId, grad: Tensor) {
        self.0.insert(id, grad);
    }

    pub fn remove(&mut self, id: &ParamId) -> Option<Tensor> {
        self.0.remove(id)
    }

    /// Adds `grad` into the entry for `id`, creating it if absent.
    pub fn accumulate(&mut self, id: &ParamId, grad: Tensor) -> Result<()> {
        match self.0.get_mut(id) {
            Some(g) => g.add_assign(&grad),
            None => {
                self.0.insert(id.clone(), grad);
                Ok(())
            }
        }
    }

    pub fn merge(&mut self, other: GradientMap) -> Result<()> {
        for (id, g) in other.0 {
            self.accumulate(&id, g)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.0.values_mut().for_each(|g| g.scale(s));
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamId, &Tensor)> {
        self.0.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &ParamId> {
        self.0.keys()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Regroups per-id gradients by storage slot. Ids that share a slot must
    /// carry bitwise-identical gradients (tie averaging happens before this).
    pub fn by_slot(&self, store: &ParamStore) -> Result<BTreeMap<usize, Tensor>> {
        let mut out: BTreeMap<usize, Tensor> = BTreeMap::new();
        for (id, g) in &self.0 {
            let slot = store
                .slot_of(id)
                .ok_or_else(|| Error::Usage(format!("gradient for unknown parameter {id}")))?;
            match out.get(&slot) {
                Some(prev) if !prev.bit_eq(g) => {
                    return Err(Error::Usage(format!(
                        "parameter {id} shares slot {slot} but its gradient differs from its tie partner"
                    )))
                }
                Some(_) => {}
                None => {
                    out.insert(slot, g.clone());
                }
            }
        }
        Ok(out)
    }
}

impl IntoIterator for GradientMap {
    type Item = (ParamId, Tensor);
    type IntoIter = std::collections::btree_map::IntoIter<ParamId, Tensor>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aliases_share_storage() {
        let mut s = ParamStore::new();
        let a = s.register(ParamId::new("a"), Tensor::zeros([2])).unwrap();
        let b = s.alias(ParamId::new("b"), a.slot).unwrap();
        s.set(&b.id, Tensor::full([2], 3.0)).unwrap();
        assert_eq!(s.get(&a.id).unwrap().data(), &[3.0, 3.0]);
        assert_eq!(s.scalar_count(), 2);
        assert_eq!(s.owners(a.slot).len(), 2);
        assert!(s.register(ParamId::new("a"), Tensor::zeros([1])).is_err());
    }

    #[test]
    fn by_slot_rejects_diverging_tied_gradients() {
        let mut s = ParamStore::new();
        let a = s.register(ParamId::new("a"), Tensor::zeros([1])).unwrap();
        let b = s.alias(ParamId::new("b"), a.slot).unwrap();
        let mut g = GradientMap::new();
        g.insert(a.id.clone(), Tensor::full([1], 1.0));
        g.insert(b.id.clone(), Tensor::full([1], 1.0));
        assert_eq!(g.by_slot(&s).unwrap().len(), 1);
        g.insert(b.id, Tensor::full([1], 2.0));
        assert!(g.by_slot(&s).is_err());
    }
}
