//! Deterministic decision rules mapping a percept to a heading.

use crate::env::{Components, Percept};
use crate::Result;

pub trait Policy: Sync {
    fn act(&self, percept: &Percept) -> Result<Components>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn act(&self, percept: &Percept) -> Result<Components> {
        (**self).act(percept)
    }
}

impl<P: Policy + ?Sized + Send> Policy for Box<P> {
    fn act(&self, percept: &Percept) -> Result<Components> {
        (**self).act(percept)
    }
}
