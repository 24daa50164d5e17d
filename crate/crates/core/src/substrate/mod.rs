//! Strict lock-free lanes shared by every 2D design: row-tagged
//! Michael-Scott queues and row-tagged Treiber stacks.
//!
//! Lanes are preallocated as a fixed array of `max_width` cache-padded
//! entries when a structure is built.

mod subqueue;
mod substack;

pub(crate) use subqueue::{Front, QueueNode};
pub use subqueue::SubQueue;
pub(crate) use substack::StackNode;
pub use substack::{LaneDescriptor, SubStack};

use crossbeam_utils::CachePadded;

pub(crate) fn lanes<L: Default>(n: usize) -> Box<[CachePadded<L>]> {
    (0..n).map(|_| CachePadded::new(L::default())).collect()
}
