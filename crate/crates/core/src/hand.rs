//! Hands, per-hand value pairs, and the skeletal roles the extractor reads.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub const BOTH: [Hand; 2] = [Hand::Left, Hand::Right];

    pub fn short(self) -> &'static str {
        match self {
            Hand::Left => "L",
            Hand::Right => "R",
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            Hand::Left => "left",
            Hand::Right => "right",
        }
    }
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

/// One value per hand.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HandPair<T> {
    pub left: T,
    pub right: T,
}

impl<T> HandPair<T> {
    pub fn new(left: T, right: T) -> Self {
        Self { left, right }
    }

    pub fn get(&self, hand: Hand) -> &T {
        match hand {
            Hand::Left => &self.left,
            Hand::Right => &self.right,
        }
    }

    pub fn get_mut(&mut self, hand: Hand) -> &mut T {
        match hand {
            Hand::Left => &mut self.left,
            Hand::Right => &mut self.right,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Hand, &T) -> U) -> HandPair<U> {
        HandPair {
            left: f(Hand::Left, &self.left),
            right: f(Hand::Right, &self.right),
        }
    }

    pub fn try_from_fn<E>(mut f: impl FnMut(Hand) -> Result<T, E>) -> Result<Self, E> {
        Ok(HandPair {
            left: f(Hand::Left)?,
            right: f(Hand::Right)?,
        })
    }

    pub fn from_fn(mut f: impl FnMut(Hand) -> T) -> Self {
        HandPair {
            left: f(Hand::Left),
            right: f(Hand::Right),
        }
    }
}

/// Which joint of an arm/hand a [`Role`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Shoulder,
    Elbow,
    Wrist,
    WristBase,
    IndexTip,
    MiddleTip,
    RingTip,
    PinkyTip,
}

impl JointKind {
    pub const ALL: [JointKind; 8] = [
        JointKind::Shoulder,
        JointKind::Elbow,
        JointKind::Wrist,
        JointKind::WristBase,
        JointKind::IndexTip,
        JointKind::MiddleTip,
        JointKind::RingTip,
        JointKind::PinkyTip,
    ];

    pub const FINGERTIPS: [JointKind; 4] = [
        JointKind::IndexTip,
        JointKind::MiddleTip,
        JointKind::RingTip,
        JointKind::PinkyTip,
    ];

    fn as_str(self) -> &'static str {
        match self {
            JointKind::Shoulder => "shoulder",
            JointKind::Elbow => "elbow",
            JointKind::Wrist => "wrist",
            JointKind::WristBase => "wrist_base",
            JointKind::IndexTip => "index_tip",
            JointKind::MiddleTip => "middle_tip",
            JointKind::RingTip => "ring_tip",
            JointKind::PinkyTip => "pinky_tip",
        }
    }

    /// Shoulder, elbow and wrist must always be mapped; the hand joints are
    /// only needed for hand opening.
    pub fn is_required(self) -> bool {
        matches!(self, JointKind::Shoulder | JointKind::Elbow | JointKind::Wrist)
    }
}

/// A joint role such as `left_wrist` or `right_pinky_tip`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Role {
    pub hand: Hand,
    pub kind: JointKind,
}

impl Role {
    pub const fn new(hand: Hand, kind: JointKind) -> Self {
        Self { hand, kind }
    }

    pub fn all() -> impl Iterator<Item = Role> {
        Hand::BOTH
            .into_iter()
            .flat_map(|h| JointKind::ALL.into_iter().map(move |k| Role::new(h, k)))
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.hand.prefix(), self.kind.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown joint role `{0}`")]
pub struct UnknownRole(pub String);

impl FromStr for Role {
    type Err = UnknownRole;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::all()
            .find(|r| r.to_string() == s)
            .ok_or_else(|| UnknownRole(s.to_string()))
    }
}

impl Serialize for Role {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
