//! Strict baselines: a Michael-Scott queue and a Treiber stack, built from a
//! single lane so they share node layout and reclamation with the 2D designs.

use crate::api::{Handle, Order, Placement, Relaxed, Removed, Snapshot};
use crate::reclaim;
use crate::substrate::{Front, QueueNode, StackNode, SubQueue, SubStack};
use crate::window::{RelaxationTarget, WindowView};

pub struct MsQueue<T> {
    lane: SubQueue<T>,
    targets: RelaxationTarget,
}

impl<T> Default for MsQueue<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> MsQueue<T> {
    pub fn new() -> Self {
        MsQueue { lane: SubQueue::new(), targets: RelaxationTarget::new(1, 1, 1, 1) }
    }
}

impl<T: Send> Relaxed<T> for MsQueue<T> {
    const ORDER: Order = Order::Fifo;

    /// Rows count up from 1, so the row is the enqueue sequence number.
    fn insert_with(&self, h: &mut Handle, value: T) -> Placement {
        let guard = reclaim::pin();
        let mut node = QueueNode::new(value, 0);
        loop {
            let top = self.lane.top(&guard);
            let row = top.row + 1;
            node.row = row;
            match self.lane.try_append(&top, node, &guard) {
                Ok(()) => {
                    h.observe(true, &self.targets, || (0, 1));
                    return Placement { lane: 0, row, stamp: 0 };
                }
                Err(n) => {
                    h.observe(false, &self.targets, || (0, 1));
                    node = n;
                }
            }
        }
    }

    fn remove_with(&self, h: &mut Handle) -> Option<Removed<T>> {
        let guard = reclaim::pin();
        loop {
            let f = self.lane.front(&guard);
            if let Front::Empty { .. } = f {
                return None;
            }
            match self.lane.try_take(&f, &guard) {
                Some((value, row, _)) => {
                    h.observe(true, &self.targets, || (0, 1));
                    return Some(Removed { value, lane: 0, row, stamp: 0 });
                }
                None => h.observe(false, &self.targets, || (0, 1)),
            }
        }
    }

    fn targets(&self) -> &RelaxationTarget {
        &self.targets
    }

    fn snapshot(&self) -> Snapshot {
        let v = WindowView { max: self.lane.top_row(), depth: 1, width: 1 };
        Snapshot { insert_window: v, remove_window: v, ..Default::default() }
    }

    fn len(&self) -> usize {
        self.lane.len()
    }

    fn set_width(&self, _: usize) -> usize {
        1
    }

    fn set_depth(&self, _: u32) -> u32 {
        1
    }
}

pub struct TreiberStack<T> {
    lane: SubStack<T>,
    targets: RelaxationTarget,
}

impl<T> Default for TreiberStack<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> TreiberStack<T> {
    pub fn new() -> Self {
        TreiberStack { lane: SubStack::new(), targets: RelaxationTarget::new(1, 1, 1, 1) }
    }
}

impl<T: Send> Relaxed<T> for TreiberStack<T> {
    const ORDER: Order = Order::Lifo;

    /// The row of an item is its height in the stack.
    fn insert_with(&self, h: &mut Handle, value: T) -> Placement {
        let mut node = StackNode::new(value, 0);
        loop {
            let seen = self.lane.descriptor();
            let row = seen.rows + 1;
            node.row = row;
            match self.lane.try_push(seen, node) {
                Ok(stamp) => {
                    h.observe(true, &self.targets, || (0, 1));
                    return Placement { lane: 0, row: row as u64, stamp };
                }
                Err(n) => {
                    h.observe(false, &self.targets, || (0, 1));
                    node = n;
                }
            }
        }
    }

    fn remove_with(&self, h: &mut Handle) -> Option<Removed<T>> {
        let guard = reclaim::pin();
        loop {
            let seen = self.lane.descriptor();
            if seen.is_empty() {
                return None;
            }
            match self.lane.try_pop(seen, &guard) {
                Some((value, row, _, stamp)) => {
                    h.observe(true, &self.targets, || (0, 1));
                    return Some(Removed { value, lane: 0, row: row as u64, stamp });
                }
                None => h.observe(false, &self.targets, || (0, 1)),
            }
        }
    }

    fn targets(&self) -> &RelaxationTarget {
        &self.targets
    }

    fn snapshot(&self) -> Snapshot {
        let v = WindowView { max: self.lane.descriptor().rows as u64, depth: 1, width: 1 };
        Snapshot { insert_window: v, remove_window: v, ..Default::default() }
    }

    fn len(&self) -> usize {
        self.lane.len()
    }

    fn set_width(&self, _: usize) -> usize {
        1
    }

    fn set_depth(&self, _: u32) -> u32 {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ms_queue_is_fifo_with_sequence_rows() {
        let q = MsQueue::new();
        let mut h = Handle::new(1);
        for i in 0..10 {
            assert_eq!(q.insert_with(&mut h, i).row, i as u64 + 1);
        }
        for i in 0..10 {
            assert_eq!(q.remove_with(&mut h).unwrap().value, i);
        }
        assert!(q.remove_with(&mut h).is_none());
    }

    #[test]
    fn treiber_is_lifo() {
        let s = TreiberStack::new();
        for i in 0..10 {
            s.insert(i);
        }
        for i in (0..10).rev() {
            assert_eq!(s.remove(), Some(i));
        }
        assert_eq!(s.remove(), None);
    }
}
