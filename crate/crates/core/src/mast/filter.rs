//! Rolling-maximum measurement filter and the strided wind history fed to
//! the residual policy.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Maximum over samples with timestamp in `(t_now - window, t_now]`, where
/// `t_now` is the timestamp of the last sample. If nothing falls inside the
/// window the most recent sample is returned.
pub fn rolling_max_filter(history: &[(f64, f64)], window: f64) -> Result<f64> {
    let &(t_now, latest) = history.last().ok_or(Error::EmptyHistory)?;
    let start = t_now - window;
    let max = history
        .iter()
        .rev()
        .take_while(|(t, _)| *t > start)
        .map(|&(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(if max == f64::NEG_INFINITY { latest } else { max })
}

/// Streaming form of [`rolling_max_filter`] with a monotone deque.
#[derive(Debug, Clone)]
pub struct RollingMax {
    window: f64,
    samples: VecDeque<(f64, f64)>,
}

impl RollingMax {
    pub fn new(window: f64) -> Self {
        assert!(window > 0.0, "window must be positive");
        Self {
            window,
            samples: VecDeque::new(),
        }
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    /// Adds a sample (timestamps non-decreasing) and returns the current
    /// window maximum.
    pub fn push(&mut self, t: f64, value: f64) -> f64 {
        while self.samples.back().is_some_and(|&(_, v)| v <= value) {
            self.samples.pop_back();
        }
        self.samples.push_back((t, value));
        let start = t - self.window;
        while self.samples.front().is_some_and(|&(ts, _)| ts <= start) {
            self.samples.pop_front();
        }
        self.current().expect("just pushed")
    }

    pub fn current(&self) -> Option<f64> {
        self.samples.front().map(|&(_, v)| v)
    }
}

pub const HISTORY_LEN: usize = 5;
pub const HISTORY_STRIDE: usize = 5;
const BUFFER_LEN: usize = (HISTORY_LEN - 1) * HISTORY_STRIDE + 1;

/// Filtered wind X-components at steps `t, t - 5, ..., t - 20`, newest first.
pub type WindHistory = [f64; HISTORY_LEN];

/// Ring of the last 21 control-step measurements. The first push fills the
/// whole ring so the history is defined from the first step of an episode.
#[derive(Debug, Clone, Default)]
pub struct WindHistoryBuffer {
    values: VecDeque<f64>,
}

impl WindHistoryBuffer {
    pub fn new() -> Self {
        Self {
            values: VecDeque::with_capacity(BUFFER_LEN),
        }
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn push(&mut self, value: f64) {
        if self.values.is_empty() {
            self.values.extend(std::iter::repeat_n(value, BUFFER_LEN));
            return;
        }
        self.values.pop_front();
        self.values.push_back(value);
    }

    pub fn get(&self) -> WindHistory {
        if self.values.is_empty() {
            return [0.0; HISTORY_LEN];
        }
        std::array::from_fn(|i| self.values[BUFFER_LEN - 1 - i * HISTORY_STRIDE])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_series() {
        let h: Vec<(f64, f64)> = [1.0, 3.0, 2.0, 0.0, 1.0]
            .iter()
            .enumerate()
            .map(|(i, v)| (i as f64, *v))
            .collect();
        // window covering the last three samples: t in (1, 4]
        assert_eq!(rolling_max_filter(&h, 3.0).unwrap(), 2.0);
        let mut f = RollingMax::new(3.0);
        let out: Vec<f64> = h.iter().map(|&(t, v)| f.push(t, v)).collect();
        assert_eq!(out.last(), Some(&2.0));
    }

    #[test]
    fn constant_series() {
        let h: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.01, 2.5)).collect();
        assert_eq!(rolling_max_filter(&h, 0.1).unwrap(), 2.5);
    }

    #[test]
    fn empty_history_is_an_error() {
        assert!(matches!(rolling_max_filter(&[], 0.1), Err(Error::EmptyHistory)));
    }

    #[test]
    fn empty_window_falls_back_to_latest() {
        // A non-positive window contains nothing.
        assert_eq!(rolling_max_filter(&[(0.0, 4.0), (1.0, 2.0)], 0.0).unwrap(), 2.0);
    }

    #[test]
    fn history_examples() {
        let mut b = WindHistoryBuffer::new();
        b.push(3.0);
        assert_eq!(b.get(), [3.0; 5]);
        for _ in 0..30 {
            b.push(3.0);
        }
        assert_eq!(b.get(), [3.0; 5]);

        let mut b = WindHistoryBuffer::new();
        for i in 0..=100 {
            b.push(i as f64);
        }
        assert_eq!(b.get(), [100.0, 95.0, 90.0, 85.0, 80.0]);
    }
}
