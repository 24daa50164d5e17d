//! Interface shared by every structure: per-thread handles, placement
//! receipts and the [`Relaxed`] trait used by the harness and the C ABI.

use std::cell::RefCell;

use crate::controller::{ControllerConfig, ControllerState};
use crate::window::{LaneCursor, RelaxationTarget, StatsSnapshot, WindowView};

/// Per-thread operation state: the lane cursor and, optionally, a width
/// controller fed by every lane exchange this handle performs.
#[derive(Debug)]
pub struct Handle {
    pub(crate) cursor: LaneCursor,
    controller: Option<(ControllerConfig, ControllerState)>,
    pub cas_failures: u64,
    pub cas_successes: u64,
}

impl Handle {
    pub fn new(seed: u64) -> Self {
        Handle { cursor: LaneCursor::new(seed), controller: None, cas_failures: 0, cas_successes: 0 }
    }

    pub fn from_entropy() -> Self {
        Self::new(rand::random())
    }

    pub fn with_controller(seed: u64, cfg: ControllerConfig) -> Self {
        let mut h = Self::new(seed);
        h.controller = Some((cfg, ControllerState::default()));
        h
    }

    pub fn set_controller(&mut self, cfg: Option<ControllerConfig>) {
        self.controller = cfg.map(|c| (c, ControllerState::default()));
    }

    pub fn controller(&self) -> Option<&ControllerState> {
        self.controller.as_ref().map(|c| &c.1)
    }

    pub fn cursor(&self) -> &LaneCursor {
        &self.cursor
    }

    /// Records a lane exchange outcome. `tail` is only evaluated when a
    /// controller is attached and yields `(version, width)` of the insert side.
    #[inline]
    pub(crate) fn observe(
        &mut self,
        success: bool,
        targets: &RelaxationTarget,
        tail: impl FnOnce() -> (u64, usize),
    ) {
        if success {
            self.cas_successes += 1;
        } else {
            self.cas_failures += 1;
        }
        if let Some((cfg, state)) = self.controller.as_mut() {
            let (version, width) = tail();
            state.update(cfg, success, version, width, targets);
        }
    }
}

thread_local! {
    static DEFAULT_HANDLE: RefCell<Handle> = RefCell::new(Handle::from_entropy());
}

/// Runs `f` with this thread's implicit handle (no controller).
pub(crate) fn with_default_handle<R>(f: impl FnOnce(&mut Handle) -> R) -> R {
    DEFAULT_HANDLE.with(|h| f(&mut h.borrow_mut()))
}

/// Where an insert landed. `stamp` orders operations on one stack lane and is
/// zero for queues, where `(lane, row)` is already unique.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Placement {
    pub lane: usize,
    pub row: u64,
    pub stamp: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Removed<T> {
    pub value: T,
    pub lane: usize,
    pub row: u64,
    pub stamp: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    Fifo,
    Lifo,
}

/// Point-in-time view of a structure's configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Snapshot {
    /// Tail window for the queues, the window for the stack.
    pub insert_window: WindowView,
    /// Head window for the queues; for the stack the window with the pop width.
    pub remove_window: WindowView,
    /// Stack window version; zero for the queues.
    pub version: u32,
    /// Rank-error bound of the current configuration.
    pub bound_k: u64,
    pub lateral_len: usize,
    pub stats: StatsSnapshot,
}

/// Common surface of the 2D designs and the strict baselines.
pub trait Relaxed<T>: Send + Sync {
    const ORDER: Order;

    fn insert_with(&self, h: &mut Handle, value: T) -> Placement;
    fn remove_with(&self, h: &mut Handle) -> Option<Removed<T>>;
    fn targets(&self) -> &RelaxationTarget;
    fn snapshot(&self) -> Snapshot;
    /// Number of resident items. Exact only at quiescence.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn insert(&self, value: T) -> Placement {
        with_default_handle(|h| self.insert_with(h, value))
    }

    fn remove(&self) -> Option<T> {
        with_default_handle(|h| self.remove_with(h)).map(|r| r.value)
    }

    /// Stores the clamped width target and returns the stored value.
    fn set_width(&self, w: usize) -> usize {
        self.targets().set_width(w)
    }

    fn set_depth(&self, d: u32) -> u32 {
        self.targets().set_depth(d)
    }

    /// Depth used when the remove side shifts. Same as [`Relaxed::set_depth`]
    /// unless the design keeps separate head and tail depths.
    fn set_head_depth(&self, d: u32) -> u32 {
        self.set_depth(d)
    }

    /// Depth used when the insert side shifts.
    fn set_tail_depth(&self, d: u32) -> u32 {
        self.set_depth(d)
    }

    fn get_targets(&self) -> (usize, u32) {
        self.targets().get()
    }
}
