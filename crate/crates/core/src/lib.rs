pub mod analysis;
pub mod graph;
pub mod harness;
pub mod judge;
pub mod shapes;
pub mod stats;
pub mod vocab;
pub mod studydef;
