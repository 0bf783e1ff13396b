//! Benchmark harness for learned and native query optimizers on PostgreSQL.
//!
//! The guide in `book/` walks through each module with runnable examples.

pub mod adapters;
pub mod dbms;
pub mod hintlang;
pub mod measurement;
pub mod planspace;
pub mod report;
pub mod rng;
pub mod runner;
pub mod splitter;
pub mod stats;
pub mod workload;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/workloads.md")]
    mod workloads {}
    #[doc = include_str!("../../../book/src/hints.md")]
    mod hints {}
    #[doc = include_str!("../../../book/src/plan-space.md")]
    mod plan_space {}
    #[doc = include_str!("../../../book/src/measurement.md")]
    mod measurement {}
    #[doc = include_str!("../../../book/src/adapters.md")]
    mod adapters {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/reports.md")]
    mod reports {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
