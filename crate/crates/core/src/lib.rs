pub mod data;
pub mod graph;
pub mod grid;
pub mod labels;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod pool;
pub mod tensor;
pub mod text;
pub mod train;
