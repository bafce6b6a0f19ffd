//! Failure-mode annotation campaigns for generated clinical summaries.
//!
//! The crate covers the whole analysis pipeline behind an FMECA review:
//!
//! - [`taxonomy`]: versioned failure-mode hierarchies and merge maps
//! - [`scales`]: 1-5 severity, detectability and occurrence scales with anchors
//! - [`campaign`]: reviewers, rounds, annotation records and the Stage 1/2/3 matrices
//! - [`agreement`]: inter-rater reliability statistics and the agreement report
//! - [`risk`]: occurrence ratios, RPN and the ranked risk register
//! - [`sus`]: System Usability Scale scoring
//! - [`persistence`]: on-disk campaign bundles and tabular interchange
//!
//! All numeric exports go through [`format::fixed3`].

pub mod agreement;
pub mod campaign;
pub mod format;
pub mod scales;
pub mod taxonomy;
pub mod risk;
pub mod sus;
pub mod persistence;
