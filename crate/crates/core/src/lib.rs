pub mod data;
pub mod extract;
pub mod fd;
pub mod lexdb;
pub mod pattern;
pub mod service;
pub mod store;
pub mod text;
