use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Event kinds in tie-break order: at equal times a lower rank runs first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ChargeTick,
    NodeReady,
    AuthWindowStart,
    ChipEdge,
    AuthWindowEnd,
    FrameTx,
    FrameRx,
    AttackTrigger,
    ReportTick,
}

impl EventKind {
    pub const ALL: [EventKind; 9] = [
        EventKind::ChargeTick,
        EventKind::NodeReady,
        EventKind::AuthWindowStart,
        EventKind::ChipEdge,
        EventKind::AuthWindowEnd,
        EventKind::FrameTx,
        EventKind::FrameRx,
        EventKind::AttackTrigger,
        EventKind::ReportTick,
    ];

    pub fn rank(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventKind::ChargeTick => "charge_tick",
            EventKind::NodeReady => "node_ready",
            EventKind::AuthWindowStart => "auth_window_start",
            EventKind::ChipEdge => "chip_edge",
            EventKind::AuthWindowEnd => "auth_window_end",
            EventKind::FrameTx => "frame_tx",
            EventKind::FrameRx => "frame_rx",
            EventKind::AttackTrigger => "attack_trigger",
            EventKind::ReportTick => "report_tick",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time_s: f64,
    pub kind: EventKind,
    /// Node or attacker id; 0 for global events.
    pub subject: u32,
    /// Index into engine-side tables (window, frame, chip). Not part of
    /// the ordering.
    pub payload: usize,
}

impl Event {
    pub fn new(time_s: f64, kind: EventKind, subject: u32) -> Self {
        Event { time_s, kind, subject, payload: 0 }
    }

    pub fn with_payload(mut self, payload: usize) -> Self {
        self.payload = payload;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueueError {
    #[error("event at {event_s} s scheduled before current time {now_s} s")]
    TimeTravel { event_s: f64, now_s: f64 },
    #[error("event time {0} is not finite")]
    NotFinite(f64),
}

#[derive(Debug)]
struct Entry {
    event: Event,
    seq: u64,
}

impl Entry {
    fn key(&self) -> (f64, u8, u32, u64) {
        (self.event.time_s, self.event.kind.rank(), self.event.subject, self.seq)
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Reversed so that BinaryHeap pops the smallest key.
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0)
            .then(b.1.cmp(&a.1))
            .then(b.2.cmp(&a.2))
            .then(b.3.cmp(&a.3))
    }
}

/// Min-queue ordered by (time, kind rank, subject, insertion order).
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Entry>,
    now_s: f64,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_s(&self) -> f64 {
        self.now_s
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, event: Event) -> Result<(), QueueError> {
        if !event.time_s.is_finite() {
            return Err(QueueError::NotFinite(event.time_s));
        }
        if event.time_s < self.now_s {
            return Err(QueueError::TimeTravel {
                event_s: event.time_s,
                now_s: self.now_s,
            });
        }
        self.heap.push(Entry { event, seq: self.next_seq });
        self.next_seq += 1;
        Ok(())
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.event.time_s)
    }

    /// Pops the earliest event and moves the clock to it.
    pub fn advance(&mut self) -> Option<Event> {
        let e = self.heap.pop()?;
        self.now_s = e.event.time_s;
        Some(e.event)
    }
}
