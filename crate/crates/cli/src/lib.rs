//! Command-line front end and HTTP service for `smearscope-core`.
//!
//! All processing lives in the core crate; this crate only parses arguments,
//! moves bytes and formats JSON.

pub mod cli;
pub mod service;
