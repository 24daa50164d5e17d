//! C ABI over the elastic 2D queues and stack.
//!
//! Structures hold `uint64_t` values (store pointers as `uintptr_t` if
//! needed) behind the opaque `E2dStructure`. A structure may be shared by any
//! number of threads. `E2dHandle` carries per-thread lane state and the
//! optional width controller; it must not be used by two threads at once.
//! Pass a null handle to use an implicit per-thread one without a controller.
//!
//! Every entry point catches panics and reports them as `E2D_PANIC`.

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use elastic2d::window::{DEPTH_LIMIT, WIDTH_LIMIT};
use elastic2d::{ControllerConfig, Handle, LawQueue, LpwQueue, LpwStack, Relaxed, Snapshot};

/// Result codes. Negative values are errors.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum E2dStatus {
    Ok = 0,
    /// A remove found the structure empty.
    Empty = 1,
    NullPointer = -1,
    InvalidArgument = -2,
    /// A Rust panic was caught at the boundary; the structure may be unusable.
    Panic = -3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum E2dKind {
    LawQueue = 0,
    LpwQueue = 1,
    LpwStack = 2,
}

/// Insert and remove windows plus the rank bound of the current layout.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct E2dWindowInfo {
    pub insert_max: u64,
    pub insert_depth: u32,
    pub insert_width: u32,
    pub remove_max: u64,
    pub remove_depth: u32,
    pub remove_width: u32,
    pub bound_k: u64,
}

enum Inner {
    Law(LawQueue<u64>),
    LpwQ(LpwQueue<u64>),
    Stack(LpwStack<u64>),
}

/// Opaque structure handle.
pub struct E2dStructure {
    inner: Inner,
}

/// Opaque per-thread operation handle.
pub struct E2dHandle {
    inner: Handle,
}

macro_rules! each {
    ($s:expr, $x:ident => $e:expr) => {
        match &$s.inner {
            Inner::Law($x) => $e,
            Inner::LpwQ($x) => $e,
            Inner::Stack($x) => $e,
        }
    };
}

fn guard(f: impl FnOnce() -> E2dStatus) -> E2dStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(E2dStatus::Panic)
}

fn with_handle<R>(h: *mut E2dHandle, f: impl FnOnce(&mut Handle) -> R) -> R {
    // SAFETY: caller guarantees `h` is null or a live handle used by this
    // thread only.
    match unsafe { h.as_mut() } {
        Some(h) => f(&mut h.inner),
        None => {
            thread_local! {
                static IMPLICIT: std::cell::RefCell<Handle> = std::cell::RefCell::new(Handle::from_entropy());
            }
            IMPLICIT.with(|c| f(&mut c.borrow_mut()))
        }
    }
}

/// Creates a structure with room for `max_width` lanes and a first window of
/// `width` lanes by `depth` rows. The stack needs `depth >= 2`.
///
/// # Safety
/// `out` must be null or valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn e2d_create(
    kind: E2dKind,
    max_width: usize,
    width: usize,
    depth: u32,
    out: *mut *mut E2dStructure,
) -> E2dStatus {
    if out.is_null() {
        return E2dStatus::NullPointer;
    }
    let min_depth = if kind == E2dKind::LpwStack { 2 } else { 1 };
    if max_width == 0 || max_width > WIDTH_LIMIT || width == 0 || width > max_width {
        return E2dStatus::InvalidArgument;
    }
    if depth < min_depth || depth > DEPTH_LIMIT {
        return E2dStatus::InvalidArgument;
    }
    guard(|| {
        let inner = match kind {
            E2dKind::LawQueue => Inner::Law(LawQueue::new(max_width, width, depth)),
            E2dKind::LpwQueue => Inner::LpwQ(LpwQueue::new(max_width, width, depth)),
            E2dKind::LpwStack => Inner::Stack(LpwStack::new(max_width, width, depth)),
        };
        unsafe { *out = Box::into_raw(Box::new(E2dStructure { inner })) };
        E2dStatus::Ok
    })
}

/// Frees a structure and every value still in it. Null is ignored.
///
/// # Safety
/// `s` must be null or come from `e2d_create`, and no other thread may be
/// using it.
#[no_mangle]
pub unsafe extern "C" fn e2d_destroy(s: *mut E2dStructure) {
    if !s.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(unsafe { Box::from_raw(s) })));
    }
}

/// Creates an operation handle. With `controller` nonzero, inserts through
/// this handle feed the contention-driven width controller.
///
/// # Safety
/// `out` must be null or valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn e2d_handle_create(seed: u64, controller: bool, out: *mut *mut E2dHandle) -> E2dStatus {
    if out.is_null() {
        return E2dStatus::NullPointer;
    }
    guard(|| {
        let inner =
            if controller { Handle::with_controller(seed, ControllerConfig::default()) } else { Handle::new(seed) };
        unsafe { *out = Box::into_raw(Box::new(E2dHandle { inner })) };
        E2dStatus::Ok
    })
}

/// # Safety
/// `h` must be null or come from `e2d_handle_create` and be unused elsewhere.
#[no_mangle]
pub unsafe extern "C" fn e2d_handle_destroy(h: *mut E2dHandle) {
    if !h.is_null() {
        drop(unsafe { Box::from_raw(h) });
    }
}

/// # Safety
/// `s` must be a live structure; `h` null or a live handle owned by the
/// calling thread.
#[no_mangle]
pub unsafe extern "C" fn e2d_insert(s: *const E2dStructure, h: *mut E2dHandle, value: u64) -> E2dStatus {
    let Some(s) = (unsafe { s.as_ref() }) else { return E2dStatus::NullPointer };
    guard(|| {
        with_handle(h, |h| each!(s, x => { x.insert_with(h, value); }));
        E2dStatus::Ok
    })
}

/// Removes one value into `*out`. Returns `E2D_EMPTY` when none was found
/// and leaves `*out` untouched.
///
/// # Safety
/// As for `e2d_insert`; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn e2d_remove(s: *const E2dStructure, h: *mut E2dHandle, out: *mut u64) -> E2dStatus {
    let Some(s) = (unsafe { s.as_ref() }) else { return E2dStatus::NullPointer };
    if out.is_null() {
        return E2dStatus::NullPointer;
    }
    guard(|| match with_handle(h, |h| each!(s, x => x.remove_with(h))) {
        Some(r) => {
            unsafe { *out = r.value };
            E2dStatus::Ok
        }
        None => E2dStatus::Empty,
    })
}

/// Which depth a `e2d_set_depth` call targets. Only the LpW queue keeps the
/// two apart; the others treat every variant as `Both`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum E2dDepthSide {
    Both = 0,
    Insert = 1,
    Remove = 2,
}

/// Sets the width used from the next window shift on. The value is clamped
/// to `[1, max_width]`; the stored value goes to `*stored` when non-null.
///
/// # Safety
/// `s` must be a live structure; `stored` null or valid for writing.
#[no_mangle]
pub unsafe extern "C" fn e2d_set_width(s: *const E2dStructure, width: usize, stored: *mut usize) -> E2dStatus {
    let Some(s) = (unsafe { s.as_ref() }) else { return E2dStatus::NullPointer };
    guard(|| {
        let w = each!(s, x => x.set_width(width));
        if let Some(p) = unsafe { stored.as_mut() } {
            *p = w;
        }
        E2dStatus::Ok
    })
}

/// Sets the depth used from the next window shift on, clamped like the width.
///
/// # Safety
/// As for `e2d_set_width`.
#[no_mangle]
pub unsafe extern "C" fn e2d_set_depth(
    s: *const E2dStructure,
    side: E2dDepthSide,
    depth: u32,
    stored: *mut u32,
) -> E2dStatus {
    let Some(s) = (unsafe { s.as_ref() }) else { return E2dStatus::NullPointer };
    guard(|| {
        let d = each!(s, x => match side {
            E2dDepthSide::Both => x.set_depth(depth),
            E2dDepthSide::Insert => x.set_tail_depth(depth),
            E2dDepthSide::Remove => x.set_head_depth(depth),
        });
        if let Some(p) = unsafe { stored.as_mut() } {
            *p = d;
        }
        E2dStatus::Ok
    })
}

/// Resident value count. Exact only when no other thread is operating.
///
/// # Safety
/// `s` must be a live structure; `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn e2d_len(s: *const E2dStructure, out: *mut usize) -> E2dStatus {
    let Some(s) = (unsafe { s.as_ref() }) else { return E2dStatus::NullPointer };
    if out.is_null() {
        return E2dStatus::NullPointer;
    }
    guard(|| {
        unsafe { *out = each!(s, x => Relaxed::len(x)) };
        E2dStatus::Ok
    })
}

/// # Safety
/// `s` must be a live structure; `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn e2d_window_info(s: *const E2dStructure, out: *mut E2dWindowInfo) -> E2dStatus {
    let Some(s) = (unsafe { s.as_ref() }) else { return E2dStatus::NullPointer };
    if out.is_null() {
        return E2dStatus::NullPointer;
    }
    guard(|| {
        let snap: Snapshot = each!(s, x => Relaxed::snapshot(x));
        let (i, r) = (snap.insert_window, snap.remove_window);
        unsafe {
            *out = E2dWindowInfo {
                insert_max: i.max,
                insert_depth: i.depth,
                insert_width: i.width,
                remove_max: r.max,
                remove_depth: r.depth,
                remove_width: r.width,
                bound_k: snap.bound_k,
            }
        };
        E2dStatus::Ok
    })
}

/// Static, NUL-terminated name of a status code.
#[no_mangle]
pub extern "C" fn e2d_status_str(status: E2dStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        E2dStatus::Ok => b"ok\0",
        E2dStatus::Empty => b"empty\0",
        E2dStatus::NullPointer => b"null pointer\0",
        E2dStatus::InvalidArgument => b"invalid argument\0",
        E2dStatus::Panic => b"panic\0",
    };
    s.as_ptr().cast()
}
