//! Command line and HTTP front ends for the `greyalloc` library. Both go
//! through [`api`], so identical inputs give identical JSON.

pub mod api;
pub mod cli;
pub mod server;
