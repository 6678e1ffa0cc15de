//! Weakly supervised semantic parsing over tables.
//!
//! A question is parsed in two stages: a decoder emits an abstract program
//! (functions with row and column slots), then each slot is instantiated
//! with a column, a set of filter conditions or `all_rows`. Slot
//! representations come from span alignments whose marginals are computed
//! exactly by a forward-backward pass over a subset-state lattice.

pub mod cli;
pub mod corpus;
pub mod entities;
pub mod error;
pub mod evalkit;
pub mod executor;
pub mod fixtures;
pub mod grammar;
pub mod lattice;
pub mod model;
pub mod rng;
pub mod search;
pub mod syngen;
pub mod table;
pub mod trainer;
