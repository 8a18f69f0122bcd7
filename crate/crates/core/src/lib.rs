//! Mining Signal Temporal Logic rules that characterize labeled behaviors in
//! multivariate time series, with a glycemic-control data pipeline on top.

pub mod stl;
pub mod dataset;
pub mod labeling;
pub mod learner;
pub mod synth;
pub mod analysis;
pub mod pipeline;
