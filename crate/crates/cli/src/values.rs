//! Flag and config value types with round-tripping `FromStr`/`Display`.

use std::fmt;
use std::str::FromStr;

use cotrade::covariance::SnapPolicy;
use cotrade::{DirectionFilter, NANOS_PER_SEC};

/// `first,second` direction filters, e.g. `all,all` or `buy,sell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Directions(pub DirectionFilter, pub DirectionFilter);

impl Default for Directions {
    fn default() -> Self {
        Directions(DirectionFilter::All, DirectionFilter::All)
    }
}

impl FromStr for Directions {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| format!("expected FIRST,SECOND, got {s:?}"))?;
        let parse = |t: &str| t.trim().parse::<DirectionFilter>().map_err(|e| e.to_string());
        Ok(Directions(parse(a)?, parse(b)?))
    }
}

impl fmt::Display for Directions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.0, self.1)
    }
}

/// Wall-clock time of day, `HH:MM` or `HH:MM:SS`, stored as nanoseconds
/// since midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Clock(pub i64);

impl FromStr for Clock {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(format!("expected HH:MM[:SS], got {s:?}"));
        }
        let num = |t: &str, max: i64| -> Result<i64, String> {
            match t.parse::<i64>() {
                Ok(v) if (0..max).contains(&v) && t.len() == 2 => Ok(v),
                _ => Err(format!("expected HH:MM[:SS], got {s:?}")),
            }
        };
        let h = num(parts[0], 24)?;
        let m = num(parts[1], 60)?;
        let sec = parts.get(2).map_or(Ok(0), |t| num(t, 60))?;
        Ok(Clock((h * 3600 + m * 60 + sec) * NANOS_PER_SEC))
    }
}

impl fmt::Display for Clock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let secs = self.0 / NANOS_PER_SEC;
        write!(f, "{:02}:{:02}:{:02}", secs / 3600, secs / 60 % 60, secs % 60)
    }
}

/// Grid snapping policy for quotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Snap(pub SnapPolicy);

impl FromStr for Snap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "backfill" => Ok(Snap(SnapPolicy::Backfill)),
            "strict" => Ok(Snap(SnapPolicy::Strict)),
            _ => Err(format!("expected backfill or strict, got {s:?}")),
        }
    }
}

impl fmt::Display for Snap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.0 {
            SnapPolicy::Backfill => "backfill",
            SnapPolicy::Strict => "strict",
        })
    }
}

/// Comma-separated cluster sizes; `even` means equal split.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sizes(pub Option<Vec<usize>>);

impl FromStr for Sizes {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == "even" {
            return Ok(Sizes(None));
        }
        s.split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| format!("bad cluster size {t:?}")))
            .collect::<Result<Vec<_>, _>>()
            .map(|v| Sizes(Some(v)))
    }
}

impl fmt::Display for Sizes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            None => f.write_str("even"),
            Some(v) => {
                let parts: Vec<String> = v.iter().map(usize::to_string).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}
