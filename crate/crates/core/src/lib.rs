//! Elastically relaxed lock-free 2D queues and stack.
//!
//! Items are spread over a fixed array of strict lanes; a window over the
//! lanes bounds how far out of order a removal can be. Width and depth of the
//! window can be changed at run time ([`Relaxed::set_width`],
//! [`Relaxed::set_depth`]) and a side record of past widths keeps the
//! rank-error bound deterministic across changes.
//!
//! - [`LawQueue`]: the Lateral is the queue of windows itself.
//! - [`LpwQueue`]: separate head and tail window words plus a queue of width
//!   changes; head and tail depth change independently.
//! - [`LpwStack`]: one window that shifts up and down by half its depth, with
//!   a stack of width bounds stabilized before every shift.
//!
//! Every structure is generic over a [`probe::Probe`]; the default
//! [`probe::NoProbe`] compiles to nothing, while [`oracle::Oracle`]
//! serializes linearization points to measure exact rank errors.

pub mod api;
pub mod baseline;
pub mod bench;
pub mod controller;
pub mod error;
pub mod law_queue;
pub mod lpw_queue;
pub mod lpw_stack;
pub mod oracle;
pub mod probe;
pub mod reclaim;
pub mod substrate;
pub mod wide;
pub mod window;

pub use api::{Handle, Order, Placement, Relaxed, Removed, Snapshot};
pub use baseline::{MsQueue, TreiberStack};
pub use bench::{run_benchmark, BenchConfig, RunRecord, Structure};
pub use controller::{ControllerConfig, ControllerState};
pub use error::BenchError;
pub use law_queue::LawQueue;
pub use lpw_queue::LpwQueue;
pub use lpw_stack::LpwStack;
pub use window::{RelaxationTarget, WindowView, DEFAULT_MAX_WIDTH};
