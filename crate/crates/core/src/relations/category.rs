use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};

/// The seven relations between two clips. Declaration order is the canonical
/// class order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationCategory {
    /// Same shot.
    #[serde(rename = "C_S")]
    ShotCooccurrence,
    /// Same video, different shot.
    #[serde(rename = "C_V")]
    VideoCooccurrence,
    /// Different videos.
    #[serde(rename = "C_D")]
    DatasetCooccurrence,
    /// Rotated copy of the same segment.
    #[serde(rename = "C_R")]
    RotationCooccurrence,
    /// Temporally inverted segment.
    #[serde(rename = "P_I")]
    Inverted,
    /// Frame-shuffled segment.
    #[serde(rename = "P_D")]
    Disordered,
    /// Dilated (sped-up) segment.
    #[serde(rename = "P_S")]
    SpedUp,
}

use RelationCategory::*;

impl RelationCategory {
    pub const ALL: [RelationCategory; 7] = [
        ShotCooccurrence,
        VideoCooccurrence,
        DatasetCooccurrence,
        RotationCooccurrence,
        Inverted,
        Disordered,
        SpedUp,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ShotCooccurrence => "C_S",
            VideoCooccurrence => "C_V",
            DatasetCooccurrence => "C_D",
            RotationCooccurrence => "C_R",
            Inverted => "P_I",
            Disordered => "P_D",
            SpedUp => "P_S",
        }
    }

    /// Relations realized by choosing a partner segment.
    pub fn is_partner_relation(self) -> bool {
        matches!(self, ShotCooccurrence | VideoCooccurrence | DatasetCooccurrence)
    }
}

impl fmt::Display for RelationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for RelationCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace(['_', '-'], "");
        RelationCategory::ALL
            .into_iter()
            .find(|c| c.code().replace('_', "") == norm)
            .ok_or_else(|| input_err!("unknown relation {s:?}; expected one of C_S,C_V,C_D,C_R,P_I,P_D,P_S"))
    }
}

/// Active relation subset. Class index `i` is the `i`-th active relation in
/// canonical order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<RelationCategory>", into = "Vec<RelationCategory>")]
pub struct RelationSet {
    active: Vec<RelationCategory>,
}

impl RelationSet {
    pub fn new(categories: impl IntoIterator<Item = RelationCategory>) -> Result<Self> {
        let mut active: Vec<RelationCategory> = categories.into_iter().collect();
        active.sort();
        active.dedup();
        if active.len() < 2 {
            return Err(Error::Config(
                "at least two relations must be active for classification".into(),
            ));
        }
        Ok(Self { active })
    }

    pub fn all() -> Self {
        Self {
            active: RelationCategory::ALL.to_vec(),
        }
    }

    /// Parses a comma-separated list such as `C_S,C_V,P_I`.
    pub fn parse(list: &str) -> Result<Self> {
        let cats = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        Self::new(cats)
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn categories(&self) -> &[RelationCategory] {
        &self.active
    }

    pub fn contains(&self, c: RelationCategory) -> bool {
        self.active.contains(&c)
    }

    pub fn class_index(&self, c: RelationCategory) -> Option<usize> {
        self.active.iter().position(|a| *a == c)
    }

    pub fn category(&self, class: usize) -> Option<RelationCategory> {
        self.active.get(class).copied()
    }
}

impl TryFrom<Vec<RelationCategory>> for RelationSet {
    type Error = Error;

    fn try_from(v: Vec<RelationCategory>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RelationSet> for Vec<RelationCategory> {
    fn from(s: RelationSet) -> Self {
        s.active
    }
}

impl fmt::Display for RelationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let codes: Vec<&str> = self.active.iter().map(|c| c.code()).collect();
        f.write_str(&codes.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_and_parse() {
        let s = RelationSet::parse("P_S, c_s,C-R,C_S").unwrap();
        assert_eq!(s.categories(), [ShotCooccurrence, RotationCooccurrence, SpedUp]);
        assert_eq!(s.class_index(SpedUp), Some(2));
        assert_eq!(s.to_string(), "C_S,C_R,P_S");
        assert_eq!(RelationSet::all().len(), 7);
        assert!(RelationSet::parse("C_S").is_err());
        assert!(RelationSet::parse("C_S,X_Y").is_err());
    }

    #[test]
    fn serde_uses_codes() {
        let json = serde_json::to_string(&RelationSet::all()).unwrap();
        assert_eq!(json, r#"["C_S","C_V","C_D","C_R","P_I","P_D","P_S"]"#);
        let back: RelationSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, RelationSet::all());
    }
}
