//! Standard-library side of the hybrid reminders bot: file formats, the
//! journaled reminder store, the HTTP service and the command-line tools.

pub mod checkpoint;
pub mod clock;
pub mod config;
pub mod events;
pub mod io;
pub mod service;
pub mod store;
