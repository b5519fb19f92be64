//! Command-line front end: configuration, asset I/O, caching, backend
//! selection and the `precompute`/`render`/`edit`/`relight`/`eval` commands.

pub mod assets;
pub mod backend;
pub mod cache;
pub mod commands;
pub mod config;
pub mod failure;
