//! Thread-local contention-vote width controller.
//!
//! Each thread accumulates `+succ_inc` per successful lane exchange and
//! `-fail_dec` per failed one. Crossing `±threshold` casts a vote, resets the
//! accumulator and proposes `tail width - width_diff * sign(votes)` as the new
//! shared width. Votes are cleared whenever the tail window moves.

use crate::window::RelaxationTarget;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ControllerConfig {
    pub succ_inc: i64,
    pub fail_dec: i64,
    pub threshold: i64,
    pub width_diff: i64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig { succ_inc: 1, fail_dec: 75, threshold: 5000, width_diff: 5 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ControllerState {
    pub contention: i64,
    /// Last observed tail-window version (window max for queues, window
    /// version for the stack).
    pub version: u64,
    pub votes: i64,
    pub proposals: u64,
}

impl ControllerState {
    /// Feeds one exchange outcome. Returns the width written to `targets`
    /// when a vote was cast.
    pub fn update(
        &mut self,
        cfg: &ControllerConfig,
        cas_success: bool,
        tail_version: u64,
        tail_width: usize,
        targets: &RelaxationTarget,
    ) -> Option<usize> {
        if self.version != tail_version {
            self.version = tail_version;
            self.votes = 0;
        }
        self.contention += if cas_success { cfg.succ_inc } else { -cfg.fail_dec };
        if self.contention.abs() >= cfg.threshold {
            self.votes += self.contention.signum();
            self.contention = 0;
            let proposal = tail_width as i64 - cfg.width_diff * self.votes.signum();
            self.proposals += 1;
            return Some(targets.set_width(proposal.max(1) as usize));
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn targets() -> RelaxationTarget {
        RelaxationTarget::new(64, 20, 4, 1)
    }

    #[test]
    fn successes_shrink_width() {
        let cfg = ControllerConfig::default();
        let t = targets();
        let mut s = ControllerState::default();
        for i in 0..4999 {
            assert_eq!(s.update(&cfg, true, 7, 20, &t), None, "op {i}");
        }
        assert_eq!(s.contention, 4999);
        assert_eq!(s.update(&cfg, true, 7, 20, &t), Some(15));
        assert_eq!(s.votes, 1);
        assert_eq!(s.contention, 0);
        assert_eq!(t.width(), 15);
    }

    #[test]
    fn failures_grow_width() {
        let cfg = ControllerConfig::default();
        let t = targets();
        let mut s = ControllerState::default();
        for _ in 0..66 {
            assert_eq!(s.update(&cfg, false, 7, 20, &t), None);
        }
        // 67 * 75 = 5025 crosses the threshold
        assert_eq!(s.update(&cfg, false, 7, 20, &t), Some(25));
        assert_eq!(s.votes, -1);
    }

    #[test]
    fn proposals_are_clamped() {
        let cfg = ControllerConfig { threshold: 1, ..Default::default() };
        let t = RelaxationTarget::new(8, 4, 4, 1);
        let mut s = ControllerState::default();
        assert_eq!(s.update(&cfg, true, 1, 2, &t), Some(1));
        assert_eq!(s.update(&cfg, false, 2, 7, &t), Some(8));
    }

    #[test]
    fn window_move_clears_votes() {
        let cfg = ControllerConfig { threshold: 2, ..Default::default() };
        let t = targets();
        let mut s = ControllerState::default();
        s.update(&cfg, true, 1, 20, &t);
        s.update(&cfg, true, 1, 20, &t);
        s.update(&cfg, true, 1, 20, &t);
        s.update(&cfg, true, 1, 20, &t);
        assert_eq!(s.votes, 2);
        s.update(&cfg, true, 2, 20, &t);
        assert_eq!(s.votes, 0);
    }

    /// 74 successes then one failure is a net drift of -1 per 75 operations,
    /// so the threshold falls after 5000 * 75 = 375,000 operations.
    #[test]
    fn mixed_drift_matches_closed_form() {
        let cfg = ControllerConfig::default();
        let t = targets();
        let mut s = ControllerState::default();
        let mut ops = 0u64;
        let mut first = None;
        'outer: for _ in 0..10_000 {
            for k in 0..75 {
                ops += 1;
                // the failure comes first in each block so the running sum
                // never touches +threshold
                if s.update(&cfg, k != 0, 1, 20, &t).is_some() {
                    first = Some(ops);
                    break 'outer;
                }
            }
        }
        let closed_form = {
            // after b full blocks the sum is -b; inside a block it peaks at
            // -b - 75 + 74 = -(b + 1) + 74. The first time it reaches -5000 is
            // right after the failure of block number 5000 - 75 + 1.
            let blocks_before = (cfg.threshold - cfg.fail_dec) as u64;
            blocks_before * 75 + 1
        };
        assert_eq!(first, Some(closed_form));
        assert_eq!(s.votes, -1);
        assert!((closed_form as f64 - 375_000.0).abs() / 375_000.0 < 0.02);
    }

    #[test]
    fn sign_analysis_pure_runs() {
        let cfg = ControllerConfig { threshold: 10, ..Default::default() };
        let t = targets();
        let mut up = ControllerState::default();
        let mut down = ControllerState::default();
        for i in 0..1000 {
            if let Some(w) = up.update(&cfg, false, i / 7, 20, &t) {
                assert!(w > 20);
            }
            if let Some(w) = down.update(&cfg, true, i / 7, 20, &t) {
                assert!(w < 20);
            }
        }
    }
}
