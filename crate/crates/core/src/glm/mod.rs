pub mod covariance;
pub mod dataset;
pub mod domain;
pub mod loss;
pub mod precondition;
