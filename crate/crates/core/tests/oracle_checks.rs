mod common;

use std::sync::Arc;

use common::hammer;
use elastic2d::oracle::{BoundRule, Oracle, OracleConfig, OracleReport};
use elastic2d::probe::Check;
use elastic2d::{lpw_queue, lpw_stack, LawQueue, LpwQueue, LpwStack, Order, Relaxed};

const BUCKET: u64 = 25_000_000;

fn oracle(order: Order, rule: BoundRule) -> Arc<Oracle> {
    let mut cfg = OracleConfig::new(order, rule);
    cfg.audit_every = 97;
    Oracle::new(cfg)
}

fn clean(r: &OracleReport) {
    assert_eq!(r.failures(), 0, "{:#?}", r.details);
    assert_eq!(r.resident, 0);
}

/// Widths and depths cycled through by the reconfiguring worker.
fn cycle<S: Relaxed<u64>>(s: &S) -> impl Fn(usize) + Sync + '_ {
    move |i| {
        const W: [usize; 5] = [4, 9, 2, 12, 6];
        const D: [u32; 4] = [3, 1, 6, 2];
        s.set_width(W[i % W.len()]);
        s.set_depth(D[i % D.len()].max(1));
    }
}

#[test]
fn law_queue_static_configs() {
    for (w, d) in [(1, 1), (4, 3), (8, 5)] {
        let o = oracle(Order::Fifo, BoundRule::LawQueue);
        let q = LawQueue::with_probe(16, w, d, o.clone());
        hammer(&q, 4, 10_000, 0.5, w as u64, 0, &|_| {}).assert_multiset();
        let r = o.report(BUCKET);
        clean(&r);
        assert!(r.summary.max <= ((w - 1) * d as usize) as u64);
        assert!(r.tally(Check::Lateness).evaluated > 0 || w == 1);
    }
}

#[test]
fn law_queue_elastic() {
    let o = oracle(Order::Fifo, BoundRule::LawQueue);
    let q = LawQueue::with_probe(16, 4, 3, o.clone());
    hammer(&q, 4, 20_000, 0.55, 3, 500, &cycle(&q)).assert_multiset();
    clean(&o.report(BUCKET));
}

#[test]
fn lpw_queue_elastic_with_separate_depths() {
    let o = oracle(Order::Fifo, BoundRule::LpwQueue);
    let q = LpwQueue::with_probe(16, 4, 3, o.clone());
    let change = |i: usize| {
        q.set_width([4, 9, 2, 12][i % 4]);
        q.set_head_depth([2, 5, 1][i % 3]);
        q.set_tail_depth([4, 1, 7, 3, 2][i % 5]);
    };
    hammer(&q, 4, 20_000, 0.55, 4, 400, &change).assert_multiset();
    let r = o.report(BUCKET);
    clean(&r);
    assert!(r.tally(Check::HeadBelowLateral).evaluated > 0);
    assert!(r.tally(Check::SingleWidthHead).evaluated > 0);
}

#[test]
fn lpw_stack_static_and_elastic() {
    for (w, d) in [(4, 4), (8, 6)] {
        let o = oracle(Order::Lifo, BoundRule::StaticStack);
        let s = LpwStack::with_probe(16, w, d, o.clone());
        hammer(&s, 4, 10_000, 0.5, 7, 0, &|_| {}).assert_multiset();
        let r = o.report(BUCKET);
        clean(&r);
        assert!(r.tally(Check::StaticEnvelope).evaluated > 0);
    }
    let o = oracle(Order::Lifo, BoundRule::ElasticStack);
    let s = LpwStack::with_probe(16, 4, 4, o.clone());
    hammer(&s, 4, 20_000, 0.5, 8, 300, &cycle(&s)).assert_multiset();
    let r = o.report(BUCKET);
    clean(&r);
    for c in [Check::LateralCovers, Check::LowerEnvelope, Check::UpperEnvelope] {
        assert!(r.tally(c).evaluated > 0, "{c:?} never evaluated");
    }
}

#[test]
fn strict_configs_have_zero_rank_error() {
    let o = oracle(Order::Fifo, BoundRule::Strict);
    let q = LpwQueue::with_probe(8, 1, 1, o.clone());
    hammer(&q, 4, 5_000, 0.5, 1, 0, &|_| {}).assert_multiset();
    clean(&o.report(BUCKET));

    let o = oracle(Order::Lifo, BoundRule::Strict);
    let s = LpwStack::with_probe(8, 1, 1, o.clone());
    hammer(&s, 4, 5_000, 0.5, 1, 0, &|_| {}).assert_multiset();
    let r = o.report(BUCKET);
    clean(&r);
    assert_eq!(r.summary.max, 0);
}

#[test]
fn skipping_the_width_record_is_caught() {
    // Without the width record the head keeps its initial width 12 after the
    // tail narrows to 2, so it removes items inserted under another width.
    // (Widening instead would strand items outside the head and livelock.)
    let o = oracle(Order::Fifo, BoundRule::LpwQueue);
    let q = LpwQueue::with_probe(16, 12, 2, o.clone()).with_faults(lpw_queue::Faults { skip_sync_tail: true });
    hammer(&q, 2, 10_000, 0.5, 5, 2_000, &|_| {
        q.set_width(2);
    });
    let r = o.report(BUCKET);
    assert!(r.tally(Check::SingleWidthHead).failed > 0, "fault went unnoticed");
}

#[test]
fn skipping_stabilization_is_caught() {
    // Items pushed under a wide window end up outside every later pop width.
    let o = oracle(Order::Lifo, BoundRule::ElasticStack);
    let s = LpwStack::with_probe(16, 8, 4, o.clone())
        .with_faults(lpw_stack::Faults { skip_stabilize: true, literal_pop_width: false });
    let change = |i: usize| {
        s.set_width([12, 2, 8, 1][i % 4]);
    };
    let out = hammer(&s, 2, 40_000, 0.6, 6, 200, &change);
    let r = o.report(BUCKET);
    assert!(r.failures() > 0, "fault went unnoticed");
    assert!(out.inserted.len() > out.removed.len() + out.drained.len());
}

#[test]
fn literal_pop_width_is_caught() {
    let o = oracle(Order::Lifo, BoundRule::ElasticStack);
    let s = LpwStack::with_probe(16, 8, 4, o.clone())
        .with_faults(lpw_stack::Faults { skip_stabilize: false, literal_pop_width: true });
    let change = |i: usize| {
        s.set_width([12, 2, 8, 1][i % 4]);
    };
    hammer(&s, 2, 40_000, 0.6, 6, 200, &change);
    let r = o.report(BUCKET);
    assert!(r.failures() > 0, "fault went unnoticed");
}
