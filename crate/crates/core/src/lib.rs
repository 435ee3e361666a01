pub mod elf;
pub mod evolution;
pub mod fixture;
pub mod graph;
pub mod metrics;
pub mod par;
pub mod query;
pub mod resolve;
pub mod scan;
pub mod store;
