use std::collections::VecDeque;

use super::{predict, update, Measurement, ProcessNoise, TrackerError, TrackerState};

/// Time-ordered measurement history with the filter state after each entry.
///
/// A late measurement is inserted at its stamp and the filter is re-run from
/// the entry before it. Entries older than `span` behind the newest one are
/// folded into the anchor state.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    anchor: TrackerState,
    entries: VecDeque<Measurement>,
    /// `posteriors[i]` is the state right after applying `entries[i]`.
    posteriors: VecDeque<TrackerState>,
    span: f64,
    noise: ProcessNoise,
}

impl HistoryBuffer {
    pub fn new(anchor: TrackerState, span: f64, noise: ProcessNoise) -> Self {
        Self { anchor, entries: VecDeque::new(), posteriors: VecDeque::new(), span, noise }
    }

    pub fn anchor(&self) -> &TrackerState {
        &self.anchor
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &Measurement> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    /// State after the newest entry (or the anchor when empty).
    pub fn latest(&self) -> &TrackerState {
        self.posteriors.back().unwrap_or(&self.anchor)
    }

    /// Inserts `z` in stamp order, replays the filter from the insertion point,
    /// prunes entries that fell out of the span, and returns the state at the
    /// newest entry.
    pub fn insert_and_replay(&mut self, z: Measurement) -> Result<TrackerState, TrackerError> {
        if !(z.stamp >= self.anchor.stamp) {
            return Err(TrackerError::TooStale { stamp: z.stamp, anchor: self.anchor.stamp });
        }
        let index = self.entries.partition_point(|e| e.stamp <= z.stamp);

        // replay into scratch space so a failed update leaves the buffer intact
        let mut state = if index == 0 { self.anchor } else { self.posteriors[index - 1] };
        let mut replayed = Vec::with_capacity(self.entries.len() - index + 1);
        for m in std::iter::once(&z).chain(self.entries.range(index..)) {
            state = predict(&state, m.stamp - state.stamp, &self.noise)?;
            state = update(&state, m)?;
            replayed.push(state);
        }

        self.entries.insert(index, z);
        self.posteriors.truncate(index);
        self.posteriors.extend(replayed);
        self.prune();
        Ok(*self.latest())
    }

    fn prune(&mut self) {
        let Some(newest) = self.entries.back().map(|e| e.stamp) else {
            return;
        };
        while self.entries.front().is_some_and(|e| e.stamp < newest - self.span) {
            self.entries.pop_front();
            if let Some(state) = self.posteriors.pop_front() {
                self.anchor = state;
            }
        }
    }

    /// Filter estimate at `t`: replay through entries stamped at or before `t`,
    /// then predict forward.
    pub fn estimate_at(&self, t: f64) -> Result<TrackerState, TrackerError> {
        if !(t >= self.anchor.stamp) {
            return Err(TrackerError::TooStale { stamp: t, anchor: self.anchor.stamp });
        }
        let index = self.entries.partition_point(|e| e.stamp <= t);
        let state = if index == 0 { self.anchor } else { self.posteriors[index - 1] };
        predict(&state, t - state.stamp, &self.noise)
    }

    /// Replaces the anchor and drops every entry; used on re-initialization.
    pub fn reset(&mut self, anchor: TrackerState) {
        self.anchor = anchor;
        self.entries.clear();
        self.posteriors.clear();
    }
}
