//! Loop schedule descriptors shared by the parser, the runtime ICVs and the
//! worksharing iterators.

use std::fmt;
use std::num::NonZeroU64;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScheduleKind {
    Static,
    Dynamic,
    Guided,
    Auto,
    Runtime,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 5] = [
        ScheduleKind::Static,
        ScheduleKind::Dynamic,
        ScheduleKind::Guided,
        ScheduleKind::Auto,
        ScheduleKind::Runtime,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Static => "static",
            ScheduleKind::Dynamic => "dynamic",
            ScheduleKind::Guided => "guided",
            ScheduleKind::Auto => "auto",
            ScheduleKind::Runtime => "runtime",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == word)
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A schedule kind plus an optional chunk size (always at least one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub chunk: Option<NonZeroU64>,
}

impl ScheduleSpec {
    pub const STATIC: ScheduleSpec = ScheduleSpec {
        kind: ScheduleKind::Static,
        chunk: None,
    };

    pub fn new(kind: ScheduleKind) -> Self {
        ScheduleSpec { kind, chunk: None }
    }

    /// Panics if `chunk` is zero; use [`ScheduleSpec::try_with_chunk`] for untrusted input.
    pub fn with_chunk(kind: ScheduleKind, chunk: u64) -> Self {
        Self::try_with_chunk(kind, chunk).expect("schedule chunk must be positive")
    }

    pub fn try_with_chunk(kind: ScheduleKind, chunk: u64) -> Result<Self, ScheduleParseError> {
        let chunk = NonZeroU64::new(chunk).ok_or(ScheduleParseError::ZeroChunk)?;
        Ok(ScheduleSpec {
            kind,
            chunk: Some(chunk),
        })
    }

    pub fn chunk_size(&self) -> Option<u64> {
        self.chunk.map(NonZeroU64::get)
    }
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::STATIC
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.chunk {
            Some(c) => write!(f, "{},{}", self.kind, c),
            None => write!(f, "{}", self.kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleParseError {
    #[error("unknown schedule kind `{0}`")]
    UnknownKind(String),
    #[error("invalid chunk size `{0}`")]
    BadChunk(String),
    #[error("chunk size must be positive")]
    ZeroChunk,
}

/// Parses the `kind[,chunk]` form used by `OMP_SCHEDULE` and the bench CLI.
impl FromStr for ScheduleSpec {
    type Err = ScheduleParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, chunk) = match s.split_once(',') {
            Some((k, c)) => (k.trim(), Some(c.trim())),
            None => (s.trim(), None),
        };
        let kind = ScheduleKind::from_keyword(kind).ok_or_else(|| ScheduleParseError::UnknownKind(kind.to_string()))?;
        match chunk {
            None => Ok(ScheduleSpec::new(kind)),
            Some(c) => {
                let n: u64 = c.parse().map_err(|_| ScheduleParseError::BadChunk(c.to_string()))?;
                ScheduleSpec::try_with_chunk(kind, n)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_env_forms() {
        assert_eq!("static".parse::<ScheduleSpec>().unwrap(), ScheduleSpec::STATIC);
        assert_eq!(
            "dynamic, 4".parse::<ScheduleSpec>().unwrap(),
            ScheduleSpec::with_chunk(ScheduleKind::Dynamic, 4)
        );
        assert_eq!("guided,0".parse::<ScheduleSpec>(), Err(ScheduleParseError::ZeroChunk));
        assert!("fastest".parse::<ScheduleSpec>().is_err());
        assert!("static,x".parse::<ScheduleSpec>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in ["static", "dynamic,3", "guided,1", "runtime"] {
            let spec: ScheduleSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
    }
}
