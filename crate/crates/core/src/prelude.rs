//! Shared imports so the math reads the same with and without `std`.
#![allow(unused_imports)]

pub(crate) use alloc::{format, string::String, vec, vec::Vec};
#[cfg(not(feature = "std"))]
pub(crate) use num_traits::Float;
