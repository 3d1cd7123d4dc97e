//! Mixed-variable blackbox optimization over meta, categorical and
//! quantitative variables, by direct search or Bayesian optimization.

pub mod bo;
pub mod cli;
pub mod constraints;
pub mod direct_search;
pub mod domain;
pub mod gp;
pub mod neighborhood;
pub mod problem;
pub mod random_search;
pub mod runtime;
