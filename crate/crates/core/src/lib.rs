pub mod adversary;
pub mod crypto;
pub mod entities;
pub mod harness;
pub mod protocols;
pub mod rng;
pub mod visual;
