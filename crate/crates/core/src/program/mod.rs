//! Conic-program representation, column layout and the dispatch-model
//! assembler.

mod assemble;
mod cbf;
mod ir;
mod vars;

pub use assemble::*;
pub use cbf::write_cbf;
pub use ir::*;
pub use vars::*;
