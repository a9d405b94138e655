//! Workbench for studying spurious correlations under an explicit causal
//! generative process: synthesize confounded image datasets, measure the
//! confounding between attribute pairs in nats, remove it with
//! counterfactual data augmentation, and quantify the downstream-classifier
//! gain on unconfounded test splits.

pub mod augment;
pub mod classify;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod spec;
pub mod synth;
