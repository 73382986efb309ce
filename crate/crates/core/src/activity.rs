//! The 15-category visit-purpose taxonomy.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of activity categories.
pub const NUM_ACTIVITIES: usize = 15;

const LABELS: [&str; NUM_ACTIVITIES] = [
    "Home",
    "Work",
    "School",
    "Caregiving",
    "Buy goods",
    "Buy services",
    "Buy meals",
    "General errands",
    "Recreational",
    "Exercise",
    "Visit friends",
    "Health care",
    "Religious",
    "Something else",
    "Drop off/Pick up",
];

/// An activity category code in `1..=15`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ActivityCode(u8);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("activity code {0} is outside 1..=15")]
pub struct InvalidActivityCode(pub u64);

impl ActivityCode {
    pub const HOME: ActivityCode = ActivityCode(1);
    pub const WORK: ActivityCode = ActivityCode(2);
    pub const SCHOOL: ActivityCode = ActivityCode(3);
    pub const CAREGIVING: ActivityCode = ActivityCode(4);
    pub const BUY_GOODS: ActivityCode = ActivityCode(5);
    pub const BUY_SERVICES: ActivityCode = ActivityCode(6);
    pub const BUY_MEALS: ActivityCode = ActivityCode(7);
    pub const GENERAL_ERRANDS: ActivityCode = ActivityCode(8);
    pub const RECREATIONAL: ActivityCode = ActivityCode(9);
    pub const EXERCISE: ActivityCode = ActivityCode(10);
    pub const VISIT_FRIENDS: ActivityCode = ActivityCode(11);
    pub const HEALTH_CARE: ActivityCode = ActivityCode(12);
    pub const RELIGIOUS: ActivityCode = ActivityCode(13);
    pub const SOMETHING_ELSE: ActivityCode = ActivityCode(14);
    pub const DROP_OFF_PICK_UP: ActivityCode = ActivityCode(15);

    pub fn new(code: u64) -> Result<Self, InvalidActivityCode> {
        if (1..=NUM_ACTIVITIES as u64).contains(&code) {
            Ok(ActivityCode(code as u8))
        } else {
            Err(InvalidActivityCode(code))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based position, handy for fixed-size per-code tables.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Option<Self> {
        (index < NUM_ACTIVITIES).then(|| ActivityCode(index as u8 + 1))
    }

    pub fn label(self) -> &'static str {
        LABELS[self.index()]
    }

    /// Home, Work and School are resolved by the rule-based pass.
    pub fn is_mandatory(self) -> bool {
        self.0 <= 3
    }

    pub fn all() -> impl Iterator<Item = ActivityCode> + Clone {
        (1..=NUM_ACTIVITIES as u8).map(ActivityCode)
    }
}

impl TryFrom<u32> for ActivityCode {
    type Error = InvalidActivityCode;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        ActivityCode::new(u64::from(value))
    }
}

impl From<ActivityCode> for u32 {
    fn from(code: ActivityCode) -> u32 {
        u32::from(code.0)
    }
}

impl fmt::Display for ActivityCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
