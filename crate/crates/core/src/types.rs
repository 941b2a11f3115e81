//! Fixed-width chain identifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ParseError;

fn decode_fixed<const N: usize>(s: &str, what: &'static str) -> Result<[u8; N], ParseError> {
    let body = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    if body.len() != 2 * N {
        return Err(ParseError::Length {
            what,
            expected: 2 * N,
            found: body.len(),
        });
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(body, &mut out).map_err(|_| ParseError::Hex {
        what,
        value: s.to_string(),
    })?;
    Ok(out)
}

macro_rules! fixed_bytes {
    ($(#[$meta:meta])* $name:ident, $len:expr, $what:expr, $prefix:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            /// Lowercase hex rendering.
            pub fn to_hex(&self) -> String {
                let mut s = String::with_capacity(2 * $len + 2);
                if $prefix {
                    s.push_str("0x");
                }
                s.push_str(&hex::encode(self.0));
                s
            }
        }

        impl FromStr for $name {
            type Err = ParseError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                decode_fixed::<$len>(s.trim(), $what).map($name)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

fixed_bytes!(
    /// 20-byte account address.
    Address, 20, "address", true
);
fixed_bytes!(
    /// 32-byte transaction hash.
    TxHash, 32, "transaction hash", true
);
fixed_bytes!(
    /// First four bytes of call input. Rendered without a `0x` prefix.
    MethodId, 4, "method id", false
);
fixed_bytes!(
    /// SHA-256 digest identifying a building block. Rendered without a `0x` prefix.
    BlockHash, 32, "block hash", false
);

impl Address {
    /// Deterministic test/fixture helper: the address whose last 8 bytes are `n`.
    pub fn from_low_u64(n: u64) -> Self {
        let mut b = [0u8; 20];
        b[12..].copy_from_slice(&n.to_be_bytes());
        Address(b)
    }
}

impl MethodId {
    pub const fn new(b: [u8; 4]) -> Self {
        MethodId(b)
    }
}
