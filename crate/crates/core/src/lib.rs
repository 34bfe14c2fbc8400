pub mod data;
pub mod error;
pub mod graph;
pub mod linear;
pub mod table;
pub mod closed_forms;
pub mod scm;
pub mod audit;
