use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Session binding token. The device sends all 16 bytes before the first
/// frame, and its `SessionStart` event carries the low 16 bits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct BindingToken(pub [u8; 16]);

pub const TOKEN_LEN: usize = 16;

impl BindingToken {
    pub fn low16(&self) -> u16 {
        u16::from_le_bytes([self.0[0], self.0[1]])
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for BindingToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BindingToken({})", self.to_hex())
    }
}

impl fmt::Display for BindingToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for BindingToken {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; TOKEN_LEN];
        hex::decode_to_slice(s, &mut out).map_err(|e| format!("bad token {s:?}: {e}"))?;
        Ok(Self(out))
    }
}

impl From<BindingToken> for String {
    fn from(t: BindingToken) -> String {
        t.to_hex()
    }
}

impl TryFrom<String> for BindingToken {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}
