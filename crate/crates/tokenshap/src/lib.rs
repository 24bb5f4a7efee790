pub mod bridge;
pub mod config;
pub mod error;
pub mod formats;
pub mod stages;
pub mod synthetic;
