//! Slices of the (sample, layer, channel, epoch) hypercube.
//!
//! The textual form is `x=<all|label:I|ids:I,...>;l=<int|*>;c=<int|*>;t=<int|*>`,
//! where `*` (or `-`) selects a whole dimension. Omitted keys default to the
//! whole dimension.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum SampleSelector {
    #[default]
    All,
    Label(usize),
    Ids(Vec<usize>),
}

/// Either a whole dimension or one index along it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Pick<T> {
    #[default]
    All,
    One(T),
}

impl<T: Copy + PartialEq> Pick<T> {
    pub fn matches(&self, value: T) -> bool {
        match self {
            Pick::All => true,
            Pick::One(v) => *v == value,
        }
    }

    pub fn one(&self) -> Option<T> {
        match self {
            Pick::All => None,
            Pick::One(v) => Some(*v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SliceSpec {
    pub x: SampleSelector,
    pub l: Pick<usize>,
    pub c: Pick<usize>,
    pub t: Pick<u32>,
}

impl SliceSpec {
    pub fn new(x: SampleSelector, l: Pick<usize>, c: Pick<usize>, t: Pick<u32>) -> Self {
        SliceSpec { x, l, c, t }
    }
}

fn parse_pick<T: FromStr>(key: &str, value: &str) -> Result<Pick<T>> {
    match value.trim() {
        "*" | "-" | "all" => Ok(Pick::All),
        v => v
            .parse()
            .map(Pick::One)
            .map_err(|_| Error::InvalidSlice(format!("{key}={v:?} is not an index or '*'"))),
    }
}

impl FromStr for SampleSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if matches!(s, "all" | "*" | "-") {
            return Ok(SampleSelector::All);
        }
        if let Some(label) = s.strip_prefix("label:") {
            return label
                .trim()
                .parse()
                .map(SampleSelector::Label)
                .map_err(|_| Error::InvalidSlice(format!("bad label {label:?}")));
        }
        if let Some(ids) = s.strip_prefix("ids:") {
            let ids = ids
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::InvalidSlice(format!("bad sample id {t:?}")))
                })
                .collect::<Result<Vec<usize>>>()?;
            return Ok(SampleSelector::Ids(ids));
        }
        Err(Error::InvalidSlice(format!(
            "x must be all, label:I or ids:I,..., got {s:?}"
        )))
    }
}

impl fmt::Display for SampleSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSelector::All => write!(f, "all"),
            SampleSelector::Label(i) => write!(f, "label:{i}"),
            SampleSelector::Ids(ids) => {
                write!(f, "ids:")?;
                for (n, id) in ids.iter().enumerate() {
                    if n > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{id}")?;
                }
                Ok(())
            }
        }
    }
}

impl<T: fmt::Display> fmt::Display for Pick<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pick::All => write!(f, "*"),
            Pick::One(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for SliceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = SliceSpec::default();
        let mut seen = [false; 4];
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidSlice(format!("expected key=value, got {part:?}")))?;
            let slot = match key.trim() {
                "x" => {
                    spec.x = value.parse()?;
                    0
                }
                "l" => {
                    spec.l = parse_pick("l", value)?;
                    1
                }
                "c" => {
                    spec.c = parse_pick("c", value)?;
                    2
                }
                "t" => {
                    spec.t = parse_pick("t", value)?;
                    3
                }
                other => return Err(Error::InvalidSlice(format!("unknown key {other:?}"))),
            };
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::InvalidSlice(format!("key {key:?} given twice")));
            }
        }
        Ok(spec)
    }
}

/// Canonical textual form; parsing it yields the same spec.
impl fmt::Display for SliceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x={};l={};c={};t={}", self.x, self.l, self.c, self.t)
    }
}
