//! Serial incremental parser over a combinatory categorial grammar with
//! ACT-R memory dynamics, and the pipeline that uses it to simulate
//! comprehension-to-production structural priming with reduced relative
//! clauses.
//!
//! * [`ccg`]: categories, composition rules, type-raising
//! * [`grammar`]: lexicon and null-element inventories, grammar files
//! * [`memory`]: activation, latency, inhibition and learning
//! * [`parser`]: the retrieve / integrate / reanalyse / null-insertion loop
//! * [`corpus`]: training corpora and priming stimuli
//! * [`experiment`]: model instances, training and priming trials
//! * [`analysis`]: exclusion, bootstrap intervals and contrasts
//! * [`cli`]: the command-line front end

pub mod analysis;
pub mod ccg;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod grammar;
pub mod memory;
pub mod parser;

pub use ccg::{compose, compose_with_raising, type_raise, Category, CombinationRule};
pub use error::{Error, Result};
pub use grammar::Grammar;
pub use memory::{InstanceParams, Memory};
pub use parser::{Parser, Strategy};
