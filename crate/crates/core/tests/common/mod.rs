//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

pub mod fd;
pub mod oracles;
