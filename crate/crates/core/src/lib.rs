#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controllers;
pub mod fields;
pub mod geometry;
pub mod integrator;
pub mod sampling;
pub mod scenario;
