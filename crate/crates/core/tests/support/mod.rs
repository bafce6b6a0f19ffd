#![allow(dead_code)]

pub mod checks;
pub mod fixtures;
pub mod oracle;
pub mod round;
pub mod suites;
pub mod tables;
