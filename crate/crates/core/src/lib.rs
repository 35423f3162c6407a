pub mod augment;
pub mod checkpoint;
pub mod cost;
pub mod encoder;
pub mod fusion;
pub mod model;
pub mod numerics;
pub mod params;
pub mod signal;
pub mod training;
