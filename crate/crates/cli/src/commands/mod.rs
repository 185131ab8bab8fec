pub mod fit;
pub mod predict;
pub mod sequence;
pub mod simulate;
