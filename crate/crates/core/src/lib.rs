pub mod decay;
pub mod dle;
pub mod dre;
pub mod error;
pub mod experiments;
pub mod expm;
pub mod grid;
pub mod krylov;
pub mod lowrank;
pub mod oracle;
pub mod sinc;
