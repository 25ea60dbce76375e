//! Command line front end and HTTP server for wordpull run artifacts.

pub mod commands;
pub mod server;
