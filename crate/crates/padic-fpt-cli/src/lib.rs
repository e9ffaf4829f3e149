//! Library surface of the command line front end: configuration handling,
//! table output and the verification suite (shared by the binary and the
//! acceptance tests).

pub mod config;
pub mod output;
pub mod suite;
