#![allow(unused_imports)]

pub use apm_core::selfcheck::sample::*;
