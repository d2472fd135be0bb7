pub mod cli;
pub mod cube;
pub mod estimate;
pub mod format;
pub mod frostman;
pub mod measure;
pub mod report;
pub mod sets;
pub mod tree;
pub mod verify;
pub mod weight;
