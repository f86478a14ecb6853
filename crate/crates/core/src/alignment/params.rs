use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AlignError;

/// Aligner settings. Block limits bound each side of a bead; the merge
/// penalty is charged per segment beyond a 1-1 pair; the gap score is what
/// an omission or insertion earns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignParams {
    #[serde(rename = "S")]
    pub max_src: usize,
    #[serde(rename = "T")]
    pub max_tgt: usize,
    #[serde(rename = "lambda")]
    pub merge_penalty: f64,
    #[serde(rename = "sigma")]
    pub gap_score: f64,
    /// Half-width of the anchor band; `None` runs the full DP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<usize>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub margin: bool,
}

impl Default for AlignParams {
    fn default() -> Self {
        AlignParams { max_src: 3, max_tgt: 3, merge_penalty: 0.15, gap_score: 0.10, band: None, margin: false }
    }
}

impl AlignParams {
    pub fn validate(&self) -> Result<(), AlignError> {
        let bad = |m: String| Err(AlignError::InvalidParams(m));
        if self.max_src < 1 || self.max_tgt < 1 {
            return bad(format!("block limits must be >= 1 (S={}, T={})", self.max_src, self.max_tgt));
        }
        if !(self.merge_penalty >= 0.0) {
            return bad(format!("lambda must be >= 0, got {}", self.merge_penalty));
        }
        if !(self.gap_score > -1.0 && self.gap_score < 1.0) {
            return bad(format!("sigma must lie in (-1, 1), got {}", self.gap_score));
        }
        if let Some(w) = self.band {
            if w < self.max_src + self.max_tgt {
                return bad(format!("band half-width {w} is below S+T={}", self.max_src + self.max_tgt));
            }
        }
        Ok(())
    }
}

impl fmt::Display for AlignParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S={},T={},lambda={},sigma={}", self.max_src, self.max_tgt, self.merge_penalty, self.gap_score)?;
        if let Some(w) = self.band {
            write!(f, ",band={w}")?;
        }
        if self.margin {
            write!(f, ",margin=true")?;
        }
        Ok(())
    }
}

/// Parses `S=3,T=3,lambda=0.15,sigma=0.10[,band=8][,margin=true]`; keys not
/// given keep their defaults.
impl FromStr for AlignParams {
    type Err = AlignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = AlignParams::default();
        for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| AlignError::InvalidParams(format!("expected key=value, got `{item}`")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| AlignError::InvalidParams(format!("bad number `{v}` for {key}")));
            let int = |v: &str| v.parse::<usize>().map_err(|_| AlignError::InvalidParams(format!("bad integer `{v}` for {key}")));
            match key {
                "S" | "s" => p.max_src = int(value)?,
                "T" | "t" => p.max_tgt = int(value)?,
                "lambda" | "λ" => p.merge_penalty = num(value)?,
                "sigma" | "σ" => p.gap_score = num(value)?,
                "band" => p.band = if value == "off" { None } else { Some(int(value)?) },
                "margin" => {
                    p.margin = value
                        .parse()
                        .map_err(|_| AlignError::InvalidParams(format!("bad boolean `{value}` for margin")))?
                }
                other => return Err(AlignError::InvalidParams(format!("unknown parameter `{other}`"))),
            }
        }
        p.validate()?;
        Ok(p)
    }
}
