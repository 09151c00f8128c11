pub mod cli;
pub mod estimate;
pub mod expr;
pub mod modelzoo;
pub mod ngm;
pub mod numfmt;
pub mod petri;
pub mod sim;
