#![allow(dead_code)]

use std::sync::Barrier;

use elastic2d::{Handle, Relaxed};
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

/// What a hammer run inserted and got back.
pub struct Outcome {
    pub inserted: Vec<u64>,
    pub removed: Vec<u64>,
    pub drained: Vec<u64>,
}

impl Outcome {
    /// Every inserted value came back exactly once.
    pub fn assert_multiset(&self) {
        let mut ins = self.inserted.clone();
        let mut out: Vec<u64> = self.removed.iter().chain(&self.drained).copied().collect();
        ins.sort_unstable();
        out.sort_unstable();
        assert_eq!(ins.len(), out.len(), "item count differs");
        assert!(ins == out, "multisets differ");
    }
}

/// `threads` workers each run `ops` random inserts/removes (insert
/// probability `p_insert`). Worker 0 calls `reconfigure(i)` every `every`
/// operations. Leftovers are drained single-threaded at the end.
pub fn hammer<S: Relaxed<u64>>(
    s: &S,
    threads: usize,
    ops: usize,
    p_insert: f64,
    seed: u64,
    every: usize,
    reconfigure: &(dyn Fn(usize) + Sync),
) -> Outcome {
    let barrier = Barrier::new(threads);
    let parts: Vec<(Vec<u64>, Vec<u64>)> = std::thread::scope(|sc| {
        let hs: Vec<_> = (0..threads)
            .map(|t| {
                let barrier = &barrier;
                sc.spawn(move || {
                    let mut h = Handle::new(seed.wrapping_mul(31).wrapping_add(t as u64));
                    let mut rng = SmallRng::seed_from_u64(seed ^ (t as u64) << 32);
                    let (mut ins, mut rem) = (Vec::new(), Vec::new());
                    barrier.wait();
                    for i in 0..ops {
                        if t == 0 && every > 0 && i % every == every - 1 {
                            reconfigure(i / every);
                        }
                        if rng.gen_bool(p_insert) {
                            let v = (t as u64) << 40 | i as u64;
                            s.insert_with(&mut h, v);
                            ins.push(v);
                        } else if let Some(r) = s.remove_with(&mut h) {
                            rem.push(r.value);
                        }
                    }
                    (ins, rem)
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut h = Handle::new(seed);
    let mut drained = Vec::new();
    while let Some(r) = s.remove_with(&mut h) {
        drained.push(r.value);
    }
    let (inserted, removed) = parts.into_iter().fold((Vec::new(), Vec::new()), |mut acc, (i, r)| {
        acc.0.extend(i);
        acc.1.extend(r);
        acc
    });
    Outcome { inserted, removed, drained }
}
