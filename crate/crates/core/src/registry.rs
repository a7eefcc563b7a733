//! Name-keyed registry of interchangeable strategies.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Anything that can be registered: strategies are looked up by name.
pub trait Named {
    fn name(&self) -> &str;
}

pub struct Registry<T: ?Sized + Named> {
    entries: BTreeMap<String, Arc<T>>,
}

impl<T: ?Sized + Named> Default for Registry<T> {
    fn default() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `item` under its own name, replacing any previous entry.
    pub fn register(&mut self, item: Arc<T>) -> &mut Self {
        self.entries.insert(item.name().to_string(), item);
        self
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Registered names in sorted order.
    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}
