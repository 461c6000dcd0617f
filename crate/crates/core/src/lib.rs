pub mod data;
pub mod diffnum;
pub mod dvae;
pub mod estimators;
pub mod graph;
pub mod harness;
