//! Trading-session geometry: session lengths, the flattened trapezoid slot
//! index and the cross-border coupling calendar.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const HOURS: usize = 24;
/// Number of `(h, t)` cells in one delivery day.
pub const SLOTS_PER_DAY: usize = 1920;
pub const MAX_SESSION: usize = 126;
pub const WAVE1_BUCKET: usize = 12;
pub const WAVE2_BUCKET: usize = 28;

/// Number of 15-minute buckets between `d-1 15:00` and 30 minutes before
/// the start of delivery hour `h`.
pub fn session_length(h: usize) -> Result<usize> {
    if h >= HOURS {
        return Err(Error::domain(format!(
            "delivery hour {h} out of range 0..=23"
        )));
    }
    Ok(session_len(h))
}

#[inline]
pub const fn session_len(h: usize) -> usize {
    4 * (9 + h) - 2
}

/// First slot of hour `h` in the flattened trapezoid.
#[inline]
pub const fn hour_offset(h: usize) -> usize {
    2 * h * h + 32 * h
}

#[inline]
pub const fn slot(h: usize, t: usize) -> usize {
    hour_offset(h) + t
}

/// `(h, t)` for every slot of a day, in slot order.
pub fn slot_table() -> &'static [(u8, u8); SLOTS_PER_DAY] {
    static TABLE: std::sync::OnceLock<[(u8, u8); SLOTS_PER_DAY]> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = [(0u8, 0u8); SLOTS_PER_DAY];
        for h in 0..HOURS {
            for t in 0..session_len(h) {
                out[slot(h, t)] = (h as u8, t as u8);
            }
        }
        out
    })
}

#[inline]
pub fn slot_hour_bucket(s: usize) -> (usize, usize) {
    let (h, t) = slot_table()[s];
    (h as usize, t as usize)
}

/// Hours whose session is still running at bucket `t`.
pub fn active_hours(t: usize) -> std::ops::Range<usize> {
    let first = (0..HOURS).find(|&h| session_len(h) > t).unwrap_or(HOURS);
    first..HOURS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SidcFlags {
    pub open: bool,
    pub wave1: bool,
    pub wave2: bool,
    pub close: bool,
    pub local: bool,
}

impl SidcFlags {
    pub fn as_array(&self) -> [bool; 5] {
        [self.open, self.wave1, self.wave2, self.close, self.local]
    }
}

pub const SIDC_NAMES: [&str; 5] = ["open", "wave1", "wave2", "close", "local"];

/// Coupling dummies for bucket `t` of a session of length `session`.
///
/// The coupled order books close two buckets before the end of the session,
/// so the `open` phase stops one bucket earlier than the closing bucket.
pub fn sidc_flags(_h: usize, t: usize, session: usize) -> Result<SidcFlags> {
    if t >= session {
        return Err(Error::domain(format!(
            "bucket {t} outside a session of length {session}"
        )));
    }
    let to_go = session - t;
    Ok(SidcFlags {
        open: t >= WAVE1_BUCKET && to_go >= 3,
        wave1: t == WAVE1_BUCKET,
        wave2: t == WAVE2_BUCKET,
        close: to_go == 2,
        local: to_go <= 2,
    })
}
