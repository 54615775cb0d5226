//! Byte values shared by the session controller and the wire format.
//!
//! Event, command and warning codes are defined once here; both the
//! controller and the encoder use these tables.

use serde::{Deserialize, Serialize};

macro_rules! code_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident = $value:expr),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[repr(u8)]
        pub enum $name {
            $($variant = $value),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn code(self) -> u8 {
                self as u8
            }

            pub fn from_code(code: u8) -> Option<Self> {
                match code {
                    $($value => Some($name::$variant),)+
                    _ => None,
                }
            }

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => stringify!($variant),)+
                }
            }

            pub fn from_name(name: &str) -> Option<Self> {
                match name {
                    $(stringify!($variant) => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

code_enum! {
    /// Session event codes carried by `SessionEvent` frames.
    EventCode {
        SessionStart = 0,
        SetStart = 1,
        Rep = 2,
        SetEnd = 3,
        RestStart = 4,
        Warning = 5,
        Paused = 6,
        Resumed = 7,
        Aborted = 8,
        Completed = 9,
        // arg = new level | reason << 8
        LevelChange = 10,
    }
}

code_enum! {
    /// Codes carried by `Command` frames, host to device.
    ///
    /// Codes from 0x20 up steer the simulated device; a physical device
    /// answers them with [`AckStatus::Unsupported`].
    CommandCode {
        Start = 0,
        Pause = 1,
        Resume = 2,
        Stop = 3,
        SetIntensity = 4,
        RequestStatus = 5,
        SteerSpo2Target = 0x20,
        SteerHrBpm = 0x21,
        SteerRespFreq = 0x22,
        SteerRespModDepth = 0x23,
        SteerPm25 = 0x24,
        SteerPm10 = 0x25,
        SteerRepAmplitude = 0x26,
        SteerRepPeriod = 0x27,
        SteerAccelNoise = 0x28,
        SteerPpgNoise = 0x29,
        SteerPerfusion = 0x2A,
    }
}

code_enum! {
    /// Argument of `EventCode::Warning` and of `Notify` commands.
    WarningCode {
        AirPoor = 0,
        AirModerate = 1,
        Desaturation = 2,
        RrHigh = 3,
        SensorQuality = 4,
    }
}

code_enum! {
    /// Status byte of an `Ack` frame.
    AckStatus {
        Ok = 0,
        Rejected = 1,
        OutOfRange = 2,
        Unsupported = 3,
    }
}

/// Bits of the `quality_flags` byte in `DerivedMetrics`. A set bit in the low
/// three positions marks the corresponding value as valid.
pub mod quality {
    pub const SPO2_VALID: u8 = 1 << 0;
    pub const RR_VALID: u8 = 1 << 1;
    pub const HR_VALID: u8 = 1 << 2;
    pub const LOW_PERFUSION: u8 = 1 << 3;
    pub const NO_DOMINANT_PEAK: u8 = 1 << 4;
    pub const NO_BEATS: u8 = 1 << 5;
    pub const OUT_OF_RANGE: u8 = 1 << 6;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_table_values() {
        let expected = [
            (EventCode::SessionStart, 0),
            (EventCode::SetStart, 1),
            (EventCode::Rep, 2),
            (EventCode::SetEnd, 3),
            (EventCode::RestStart, 4),
            (EventCode::Warning, 5),
            (EventCode::Paused, 6),
            (EventCode::Resumed, 7),
            (EventCode::Aborted, 8),
            (EventCode::Completed, 9),
        ];
        for (code, value) in expected {
            assert_eq!(code.code(), value);
            assert_eq!(EventCode::from_code(value), Some(code));
        }
    }

    #[test]
    fn command_and_warning_tables() {
        assert_eq!(CommandCode::Start.code(), 0);
        assert_eq!(CommandCode::Pause.code(), 1);
        assert_eq!(CommandCode::Resume.code(), 2);
        assert_eq!(CommandCode::Stop.code(), 3);
        assert_eq!(CommandCode::SetIntensity.code(), 4);
        assert_eq!(CommandCode::RequestStatus.code(), 5);
        assert_eq!(WarningCode::AirPoor.code(), 0);
        assert_eq!(WarningCode::AirModerate.code(), 1);
        assert_eq!(WarningCode::Desaturation.code(), 2);
        assert_eq!(WarningCode::RrHigh.code(), 3);
        assert_eq!(WarningCode::SensorQuality.code(), 4);
    }

    #[test]
    fn names_round_trip() {
        for c in CommandCode::ALL {
            assert_eq!(CommandCode::from_name(c.name()), Some(*c));
        }
        assert_eq!(EventCode::from_code(200), None);
    }
}
