//! Named parameter storage shared by layers, optimizers and checkpoints.

use std::cell::RefCell;

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    /// Buffers (running statistics, power-iteration vectors) are not trained.
    pub trainable: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.push(name.into(), value, true)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.push(name.into(), value, false)
    }

    fn push(&mut self, name: String, value: Tensor, trainable: bool) -> ParamId {
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.entries.push(ParamEntry { name, value, trainable });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let entry = &mut self.entries[id.0];
        if entry.value.shape() != value.shape() {
            return Err(Error::dim("parameter update", entry.value.shape(), value.shape()));
        }
        entry.value = value;
        Ok(())
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.value.numel()).sum()
    }

    /// Places every entry on the tape. Trainable entries become gradient
    /// leaves when `trainable` is set, constants otherwise.
    pub fn bind(&self, tape: &Tape, trainable: bool) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|e| {
                if trainable && e.trainable {
                    tape.leaf(e.value.clone())
                } else {
                    tape.constant(e.value.clone())
                }
            })
            .collect();
        Bound {
            vars,
            updates: RefCell::new(Vec::new()),
        }
    }

    /// Gradients for the trainable entries, zero-filled where no gradient reached.
    pub fn gradients(&self, bound: &Bound, grads: &Gradients) -> Vec<Option<Tensor>> {
        self.entries
            .iter()
            .zip(&bound.vars)
            .map(|(e, &v)| e.trainable.then(|| grads.get_or_zeros(v, e.value.shape())))
            .collect()
    }

    /// Applies buffer updates collected during a forward pass.
    pub fn apply_updates(&mut self, bound: &Bound) -> Result<()> {
        for (id, value) in bound.updates.borrow_mut().drain(..) {
            self.set(id, value)?;
        }
        Ok(())
    }

    /// Replaces every entry with `lookup(prefix + name)`. All entries must
    /// be found with matching shapes.
    pub fn load_from(&mut self, prefix: &str, lookup: impl Fn(&str) -> Option<Tensor>) -> Result<()> {
        for entry in &mut self.entries {
            let key = format!("{prefix}{}", entry.name);
            let src = lookup(&key).ok_or_else(|| Error::Format {
                offset: 0,
                reason: format!("checkpoint lacks tensor {key}"),
            })?;
            if src.shape() != entry.value.shape() {
                return Err(Error::dim("checkpoint tensor", entry.value.shape(), src.shape()));
            }
            entry.value = src;
        }
        Ok(())
    }
}

/// Tape handles for one forward pass, plus buffer updates it produced.
pub struct Bound {
    vars: Vec<Var>,
    updates: RefCell<Vec<(ParamId, Tensor)>>,
}

impl Bound {
    /// Handles supplied by the caller, one per store entry in order; lets
    /// outside code (a gradient checker, say) own the leaves.
    pub fn from_vars(store: &ParamStore, vars: Vec<Var>) -> Result<Bound> {
        if vars.len() != store.len() {
            return Err(Error::Contract(format!(
                "{} handles for a store of {} entries",
                vars.len(),
                store.len()
            )));
        }
        Ok(Bound {
            vars,
            updates: RefCell::new(Vec::new()),
        })
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn record_update(&self, id: ParamId, value: Tensor) {
        self.updates.borrow_mut().push((id, value));
    }

    pub fn pending_updates(&self) -> usize {
        self.updates.borrow().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
        s.add_buffer("running", Tensor::zeros(&[2]).unwrap());
        s
    }

    #[test]
    fn buffers_get_no_gradient() {
        let s = store();
        let tape = Tape::new();
        let b = s.bind(&tape, true);
        let w = b.var(ParamId(0));
        let r = b.var(ParamId(1));
        let loss = tape.sum(tape.add(w, r).unwrap());
        let grads = s.gradients(&b, &tape.backward(loss).unwrap());
        assert_eq!(grads[0].as_ref().unwrap().data(), &[1.0, 1.0]);
        assert!(grads[1].is_none());
        assert_eq!(s.num_trainable(), 2);
    }

    #[test]
    fn load_requires_every_entry_with_its_shape() {
        let mut s = store();
        let good = |k: &str| (k == "p/w" || k == "p/running").then(|| Tensor::full(&[2], 7.0).unwrap());
        s.load_from("p/", good).unwrap();
        assert_eq!(s.get(ParamId(1)).data(), &[7.0, 7.0]);
        assert!(matches!(s.load_from("p/", |_| None), Err(Error::Format { .. })));
        let wrong = |_: &str| Some(Tensor::zeros(&[3]).unwrap());
        assert!(matches!(s.load_from("p/", wrong), Err(Error::Dimension { .. })));
    }

    #[test]
    fn updates_apply_after_the_pass() {
        let mut s = store();
        let tape = Tape::new();
        let b = s.bind(&tape, false);
        b.record_update(ParamId(1), Tensor::ones(&[2]).unwrap());
        assert_eq!(b.pending_updates(), 1);
        assert_eq!(s.get(ParamId(1)).data(), &[0.0, 0.0]);
        s.apply_updates(&b).unwrap();
        assert_eq!(s.get(ParamId(1)).data(), &[1.0, 1.0]);
    }

    #[test]
    fn external_handles_must_cover_the_store() {
        let s = store();
        let tape = Tape::new();
        let v = tape.leaf(Tensor::zeros(&[2]).unwrap());
        assert!(Bound::from_vars(&s, vec![v]).is_err());
        assert_eq!(Bound::from_vars(&s, vec![v, v]).unwrap().var(ParamId(1)), v);
    }
}
