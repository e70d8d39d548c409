pub mod cli;
pub mod config;
pub mod design;
pub mod error;
pub mod hsic;
pub mod io;
pub mod kernels;
pub mod matrix;
pub mod mmd;
pub mod normal;
pub mod seed;
pub mod selective;
pub mod simulation;
pub mod multiscale;
