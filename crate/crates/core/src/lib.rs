pub mod config;
pub mod ftcore;
pub mod protocol;
pub mod ring;
pub mod scenario;
pub mod sim;
