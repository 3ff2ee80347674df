pub mod adversary;
pub mod atss;
pub mod crypto;
pub mod error;
pub mod experiment;
pub mod fl;
pub mod net;
pub mod protocol;
pub mod seed;
