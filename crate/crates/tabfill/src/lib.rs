//! File formats, CSV handling, and the command implementations behind
//! the `tabfill` binary. The algorithmic core lives in `tabfill-core`;
//! this crate only moves bytes in and out of it.

pub mod commands;
pub mod files;
pub mod io;
