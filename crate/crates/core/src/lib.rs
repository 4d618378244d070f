//! Allocation-only core of the UWB tagless-gate simulator.
//!
//! Everything in this crate is pure computation over values: channel impulse
//! response synthesis and first-path diagnostics, DS-TWR and DL-TDoA ranging,
//! effective-CIR extraction, a small fixed-pipeline neural network engine,
//! LOS/NLOS classification with low-pass smoothing, IMU pose prediction,
//! NLOS-aware anchor selection with TDoA solving and outlier rejection, and
//! the gate state machine. File formats, configuration and the CLI live in
//! the `utg` companion crate.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod channel;
pub mod classifier;
pub mod ecir;
pub mod experiment;
pub mod gate;
pub mod geometry;
pub mod localization;
pub mod neural;
pub mod pose;
pub mod ranging;
pub mod rng;
pub mod scenario;

pub use geometry::{Point2, Rect};

/// Speed of light in centimetres per nanosecond.
pub const C_CM_PER_NS: f64 = 29.979_245_8;

/// Speed of light in metres per nanosecond.
pub const C_M_PER_NS: f64 = 0.299_792_458;

/// Anchor identifier.
pub type AnchorId = u32;

/// Gate identifier.
pub type GateId = u32;

/// Propagation condition of one anchor-device path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "UPPERCASE"))]
pub enum Condition {
    Los,
    Nlos,
}

impl Condition {
    /// Binary label used for training: LOS = 0, NLOS = 1.
    pub fn label(self) -> f32 {
        match self {
            Condition::Los => 0.0,
            Condition::Nlos => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Los => "LOS",
            Condition::Nlos => "NLOS",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Condition::Los => Condition::Nlos,
            Condition::Nlos => Condition::Los,
        }
    }
}

impl core::fmt::Display for Condition {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Condition {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "LOS" | "los" | "0" => Ok(Condition::Los),
            "NLOS" | "nlos" | "1" => Ok(Condition::Nlos),
            _ => Err(()),
        }
    }
}

/// Where the device sits on the user's body.
///
/// `Los`/`Nlos` are the in-hand poses (antenna clear or covered by the hand),
/// `Front`/`Back` the pocket poses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "UPPERCASE"))]
pub enum Pose {
    Los,
    Nlos,
    Front,
    Back,
}

impl Pose {
    pub const ALL: [Pose; 4] = [Pose::Los, Pose::Nlos, Pose::Front, Pose::Back];

    /// Channel condition the pose produces towards the gate.
    pub fn condition(self) -> Condition {
        match self {
            Pose::Los | Pose::Front => Condition::Los,
            Pose::Nlos | Pose::Back => Condition::Nlos,
        }
    }

    pub fn is_pocket(self) -> bool {
        matches!(self, Pose::Front | Pose::Back)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pose::Los => "LOS",
            Pose::Nlos => "NLOS",
            Pose::Front => "FRONT",
            Pose::Back => "BACK",
        }
    }
}

impl core::fmt::Display for Pose {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Pose {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LOS" => Ok(Pose::Los),
            "NLOS" => Ok(Pose::Nlos),
            "FRONT" => Ok(Pose::Front),
            "BACK" => Ok(Pose::Back),
            _ => Err(()),
        }
    }
}
