//! Library half of the `nfs` command-line tool.

pub mod app;
pub mod output;
