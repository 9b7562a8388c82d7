pub mod edm;
pub mod forward;
pub mod geometry;
pub mod harness;
pub mod labeling;
pub mod mis;
pub mod reconstruction;
