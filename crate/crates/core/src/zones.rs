//! Zone policy and the machinery safety state machine.
//!
//! Flagged quadrants are mapped onto restricted and caution zones. The
//! resulting occupancy drives a three-level RUN/SLOW/STOP machine that
//! escalates immediately and releases one level at a time, only after a
//! run of fully clear frames.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{Detection, QuadrantSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ZoneError {
    #[error("restricted and caution zones overlap ({0})")]
    Overlap(QuadrantSet),
    #[error("zone {0} is not monitored")]
    Unmonitored(QuadrantSet),
    #[error("release_frames must be at least 1")]
    ReleaseFrames,
    #[error("unknown safety level {0:?}")]
    Level(String),
    #[error("unknown reason {0:?}")]
    Reason(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SafetyLevel {
    #[default]
    Run,
    Slow,
    Stop,
}

impl SafetyLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            SafetyLevel::Run => "RUN",
            SafetyLevel::Slow => "SLOW",
            SafetyLevel::Stop => "STOP",
        }
    }

    fn step_down(self) -> Self {
        match self {
            SafetyLevel::Stop => SafetyLevel::Slow,
            _ => SafetyLevel::Run,
        }
    }
}

impl fmt::Display for SafetyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SafetyLevel {
    type Err = ZoneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RUN" => Ok(SafetyLevel::Run),
            "SLOW" => Ok(SafetyLevel::Slow),
            "STOP" => Ok(SafetyLevel::Stop),
            _ => Err(ZoneError::Level(s.to_string())),
        }
    }
}

/// What to do when Method A fires but no monitored quadrant is flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MotionAction {
    None,
    #[default]
    Slow,
    Stop,
}

impl FromStr for MotionAction {
    type Err = ZoneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(MotionAction::None),
            "slow" => Ok(MotionAction::Slow),
            "stop" => Ok(MotionAction::Stop),
            _ => Err(ZoneError::Level(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZonePolicy {
    monitored: QuadrantSet,
    restricted: QuadrantSet,
    caution: QuadrantSet,
    motion_action: MotionAction,
}

impl Default for ZonePolicy {
    /// Everything monitored, everything restricted.
    fn default() -> Self {
        Self {
            monitored: QuadrantSet::ALL,
            restricted: QuadrantSet::ALL,
            caution: QuadrantSet::EMPTY,
            motion_action: MotionAction::Slow,
        }
    }
}

impl ZonePolicy {
    pub fn new(
        monitored: QuadrantSet,
        restricted: QuadrantSet,
        caution: QuadrantSet,
        motion_action: MotionAction,
    ) -> Result<Self, ZoneError> {
        let overlap = restricted.intersection(caution);
        if !overlap.is_empty() {
            return Err(ZoneError::Overlap(overlap));
        }
        let zoned = restricted.union(caution);
        if !zoned.is_subset(monitored) {
            return Err(ZoneError::Unmonitored(QuadrantSet::from_bits(
                zoned.bits() & !monitored.bits(),
            )));
        }
        Ok(Self {
            monitored,
            restricted,
            caution,
            motion_action,
        })
    }

    pub fn monitored(&self) -> QuadrantSet {
        self.monitored
    }

    pub fn restricted(&self) -> QuadrantSet {
        self.restricted
    }

    pub fn caution(&self) -> QuadrantSet {
        self.caution
    }

    pub fn motion_action(&self) -> MotionAction {
        self.motion_action
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Occupancy {
    pub restricted_hit: bool,
    pub caution_hit: bool,
    /// Method A fired with no monitored quadrant flagged.
    pub motion_only: bool,
}

impl Occupancy {
    pub const CLEAR: Occupancy = Occupancy {
        restricted_hit: false,
        caution_hit: false,
        motion_only: false,
    };
}

pub fn zone_occupancy(detection: &Detection, policy: &ZonePolicy) -> Occupancy {
    occupancy_from_votes(detection.method_b.flagged(), detection.method_a.positive, policy)
}

/// [`zone_occupancy`] on the raw votes.
pub fn occupancy_from_votes(flagged: QuadrantSet, motion: bool, policy: &ZonePolicy) -> Occupancy {
    let seen = flagged.intersection(policy.monitored);
    Occupancy {
        restricted_hit: !seen.intersection(policy.restricted).is_empty(),
        caution_hit: !seen.intersection(policy.caution).is_empty(),
        motion_only: motion && seen.is_empty(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SafetyConfig {
    release_frames: u32,
}

impl SafetyConfig {
    pub const DEFAULT_RELEASE_FRAMES: u32 = 8;

    pub fn new(release_frames: u32) -> Result<Self, ZoneError> {
        if release_frames == 0 {
            return Err(ZoneError::ReleaseFrames);
        }
        Ok(Self { release_frames })
    }

    pub fn release_frames(&self) -> u32 {
        self.release_frames
    }
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self {
            release_frames: Self::DEFAULT_RELEASE_FRAMES,
        }
    }
}

/// Why the level changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reason {
    Restricted,
    Caution,
    Motion,
    Clear,
    Failsafe,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Restricted => "restricted",
            Reason::Caution => "caution",
            Reason::Motion => "motion",
            Reason::Clear => "clear",
            Reason::Failsafe => "failsafe",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Reason {
    type Err = ZoneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Reason::Restricted,
            Reason::Caution,
            Reason::Motion,
            Reason::Clear,
            Reason::Failsafe,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
        .ok_or_else(|| ZoneError::Reason(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub from: SafetyLevel,
    pub to: SafetyLevel,
    pub reason: Reason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SafetyState {
    pub level: SafetyLevel,
    /// Consecutive fully clear frames, including the latest one.
    pub clear_streak: u32,
}

/// Level demanded by one frame's occupancy, with the reason for it.
fn demand(occ: Occupancy, policy: &ZonePolicy) -> (SafetyLevel, Reason) {
    let motion = if occ.motion_only {
        policy.motion_action
    } else {
        MotionAction::None
    };
    if occ.restricted_hit {
        (SafetyLevel::Stop, Reason::Restricted)
    } else if motion == MotionAction::Stop {
        (SafetyLevel::Stop, Reason::Motion)
    } else if occ.caution_hit {
        (SafetyLevel::Slow, Reason::Caution)
    } else if motion == MotionAction::Slow {
        (SafetyLevel::Slow, Reason::Motion)
    } else {
        (SafetyLevel::Run, Reason::Clear)
    }
}

/// Advances the safety machine by one frame.
///
/// Any frame demanding a level above RUN resets the clear streak; if the
/// demand exceeds the current level the machine jumps there at once. A
/// fully clear frame extends the streak, and once the streak reaches
/// `release_frames` every further clear frame steps the level down by one.
pub fn safety_step(
    state: SafetyState,
    occ: Occupancy,
    config: &SafetyConfig,
    policy: &ZonePolicy,
) -> (SafetyState, Option<Transition>) {
    let (target, reason) = demand(occ, policy);

    if target == SafetyLevel::Run {
        let clear_streak = state.clear_streak.saturating_add(1);
        if state.level > SafetyLevel::Run && clear_streak >= config.release_frames {
            let to = state.level.step_down();
            let next = SafetyState {
                level: to,
                clear_streak,
            };
            let t = Transition {
                from: state.level,
                to,
                reason: Reason::Clear,
            };
            return (next, Some(t));
        }
        return (
            SafetyState {
                level: state.level,
                clear_streak,
            },
            None,
        );
    }

    let next = SafetyState {
        level: state.level.max(target),
        clear_streak: 0,
    };
    let transition = (next.level != state.level).then_some(Transition {
        from: state.level,
        to: next.level,
        reason,
    });
    (next, transition)
}
