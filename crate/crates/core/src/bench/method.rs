use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The nine reconstruction methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodId {
    Bspline,
    Nurbs,
    D2s,
    Delaunay,
    Mls,
    Loess,
    Poisson,
    Bpa,
    Som,
}

impl MethodId {
    pub const ALL: [MethodId; 9] = [
        MethodId::Bspline,
        MethodId::Nurbs,
        MethodId::D2s,
        MethodId::Delaunay,
        MethodId::Mls,
        MethodId::Loess,
        MethodId::Poisson,
        MethodId::Bpa,
        MethodId::Som,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodId::Bspline => "bspline",
            MethodId::Nurbs => "nurbs",
            MethodId::D2s => "d2s",
            MethodId::Delaunay => "delaunay",
            MethodId::Mls => "mls",
            MethodId::Loess => "loess",
            MethodId::Poisson => "poisson",
            MethodId::Bpa => "bpa",
            MethodId::Som => "som",
        }
    }

    /// Whether the method consumes oriented points.
    pub fn needs_normals(self) -> bool {
        matches!(self, MethodId::Poisson | MethodId::Bpa)
    }

    /// Parses a comma-separated list, or `all`. Duplicates are dropped and the
    /// given order is kept.
    pub fn parse_list(s: &str) -> Result<Vec<MethodId>> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Self::ALL.to_vec());
        }
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m: MethodId = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::Parameter("empty method list".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| Error::Parameter(format!("unknown method {s:?}")))
    }
}
