//! Experiment runner behind the `sparsedef` binary: configuration layering,
//! reproducible reports, dataset fetching and one runner per subcommand.

pub mod config;
pub mod experiments;
pub mod fetch;
pub mod report;
