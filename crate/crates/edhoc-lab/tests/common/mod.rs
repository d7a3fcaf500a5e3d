#![allow(dead_code)]

pub mod gen;
pub mod laws;
pub mod oracle;
