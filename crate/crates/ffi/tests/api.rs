use std::ptr;

use elastic2d_ffi::*;

fn create(kind: E2dKind, max_width: usize, width: usize, depth: u32) -> *mut E2dStructure {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { e2d_create(kind, max_width, width, depth, &mut s) }, E2dStatus::Ok);
    s
}

#[test]
fn rejects_bad_arguments() {
    let mut s = ptr::null_mut();
    for (kind, mw, w, d) in [
        (E2dKind::LawQueue, 0, 1, 1),
        (E2dKind::LawQueue, 4, 0, 1),
        (E2dKind::LpwQueue, 4, 5, 1),
        (E2dKind::LpwQueue, 4, 2, 0),
        (E2dKind::LpwStack, 4, 2, 1),
        (E2dKind::LawQueue, 1 << 20, 2, 2),
    ] {
        assert_eq!(unsafe { e2d_create(kind, mw, w, d, &mut s) }, E2dStatus::InvalidArgument, "{kind:?} {mw} {w} {d}");
        assert!(s.is_null());
    }
    assert_eq!(unsafe { e2d_create(E2dKind::LawQueue, 4, 2, 2, ptr::null_mut()) }, E2dStatus::NullPointer);
}

#[test]
fn null_structure_is_reported() {
    let mut v = 0;
    unsafe {
        assert_eq!(e2d_insert(ptr::null(), ptr::null_mut(), 1), E2dStatus::NullPointer);
        assert_eq!(e2d_remove(ptr::null(), ptr::null_mut(), &mut v), E2dStatus::NullPointer);
        assert_eq!(e2d_set_width(ptr::null(), 3, ptr::null_mut()), E2dStatus::NullPointer);
        e2d_destroy(ptr::null_mut());
        e2d_handle_destroy(ptr::null_mut());
    }
}

#[test]
fn strict_configuration_keeps_order() {
    for (kind, depth, lifo) in [(E2dKind::LawQueue, 1, false), (E2dKind::LpwQueue, 1, false), (E2dKind::LpwStack, 2, true)] {
        let s = create(kind, 4, 1, depth);
        unsafe {
            for i in 0..100 {
                assert_eq!(e2d_insert(s, ptr::null_mut(), i), E2dStatus::Ok);
            }
            let mut len = 0;
            assert_eq!(e2d_len(s, &mut len), E2dStatus::Ok);
            assert_eq!(len, 100);
            let mut got = Vec::new();
            let mut v = 0;
            while e2d_remove(s, ptr::null_mut(), &mut v) == E2dStatus::Ok {
                got.push(v);
            }
            let mut want: Vec<u64> = (0..100).collect();
            if lifo {
                want.reverse();
            }
            assert_eq!(got, want, "{kind:?}");
            e2d_destroy(s);
        }
    }
}

#[test]
fn reconfiguration_is_clamped_and_applied() {
    let s = create(E2dKind::LpwQueue, 8, 2, 2);
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(e2d_handle_create(7, false, &mut h), E2dStatus::Ok);
        let mut w = 0;
        assert_eq!(e2d_set_width(s, 100, &mut w), E2dStatus::Ok);
        assert_eq!(w, 8);
        let mut d = 0;
        assert_eq!(e2d_set_depth(s, E2dDepthSide::Insert, 5, &mut d), E2dStatus::Ok);
        assert_eq!(d, 5);
        // fill past the first window so the tail shifts to the new layout
        for i in 0..200 {
            assert_eq!(e2d_insert(s, h, i), E2dStatus::Ok);
        }
        let mut info = E2dWindowInfo::default();
        assert_eq!(e2d_window_info(s, &mut info), E2dStatus::Ok);
        assert_eq!((info.insert_width, info.insert_depth), (8, 5));
        let mut n = 0;
        let mut v = 0;
        while e2d_remove(s, h, &mut v) == E2dStatus::Ok {
            n += 1;
        }
        assert_eq!(n, 200);
        e2d_handle_destroy(h);
        e2d_destroy(s);
    }
}

#[test]
fn status_names() {
    let name = |s| unsafe { std::ffi::CStr::from_ptr(e2d_status_str(s)) }.to_str().unwrap().to_owned();
    assert_eq!(name(E2dStatus::Ok), "ok");
    assert_eq!(name(E2dStatus::Empty), "empty");
    assert_eq!(name(E2dStatus::InvalidArgument), "invalid argument");
}
