//! Seeded train/test splits.
//!
//! Three sampling regimes are supported, in increasing difficulty for an
//! optimizer that learns from the training set:
//!
//! * **leave-one-out**: one variant of every family is held out, so every test
//!   query has siblings in the training set.
//! * **random**: queries are assigned without regard to family.
//! * **base-query**: whole families are held out, so test queries come from
//!   templates never seen during training.
//!
//! Splits are produced with the pinned [`SplitMix64`](crate::rng::SplitMix64)
//! generator over the workload's canonical order, and persist to a JSON split
//! file with sorted id lists.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;
use crate::workload::{QueryId, Workload};

/// Default held-out fraction (an 80-20 split).
pub const DEFAULT_RATIO: f64 = 0.2;

/// Seeds used for the three shipped splits of each sampling method.
pub const SHIPPED_SEEDS: [u64; 3] = [0x5EED_0001, 0x5EED_0002, 0x5EED_0003];

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("family `{family}` has {variants} variant(s); leave-one-out needs at least 2")]
    FamilyTooSmall { family: String, variants: usize },
    #[error("split would leave the {0} set empty")]
    DegenerateSplit(&'static str),
    #[error("ratio must lie strictly between 0 and 1, got {0}")]
    BadRatio(f64),
    #[error("split file: {0}")]
    Format(#[from] serde_json::Error),
    #[error("split file io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMethod {
    LeaveOneOut,
    Random { ratio: f64 },
    BaseQuery { ratio: f64 },
}

impl SplitMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SplitMethod::LeaveOneOut => "leave_one_out",
            SplitMethod::Random { .. } => "random",
            SplitMethod::BaseQuery { .. } => "base_query",
        }
    }

    pub fn ratio(&self) -> Option<f64> {
        match *self {
            SplitMethod::LeaveOneOut => None,
            SplitMethod::Random { ratio } | SplitMethod::BaseQuery { ratio } => Some(ratio),
        }
    }

    fn check(&self) -> Result<(), SplitError> {
        match self.ratio() {
            Some(r) if !(r > 0.0 && r < 1.0) => Err(SplitError::BadRatio(r)),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for SplitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.ratio() {
            Some(r) => write!(f, "{}({r})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

/// Round-half-up of `ratio * n`.
pub fn held_out_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 0.5).floor() as usize
}

/// A persisted assignment of a workload's queries into train and test sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub workload_name: String,
    pub method: SplitMethod,
    pub seed: u64,
    pub train: BTreeSet<QueryId>,
    pub test: BTreeSet<QueryId>,
}

impl SplitSpec {
    pub fn contains_test(&self, id: &QueryId) -> bool {
        self.test.contains(id)
    }

    /// Short label such as `leave_one_out#1592590337`.
    pub fn label(&self) -> String {
        format!("{}#{}", self.method.name(), self.seed)
    }

    pub fn to_json(&self) -> Result<String, SplitError> {
        let file = SplitFile {
            workload: self.workload_name.clone(),
            method: self.method.name().to_string(),
            ratio: self.method.ratio(),
            seed: self.seed,
            train: self.train.iter().cloned().collect(),
            test: self.test.iter().cloned().collect(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, SplitError> {
        let file: SplitFile = serde_json::from_str(text)?;
        let method = match (file.method.as_str(), file.ratio) {
            ("leave_one_out", _) => SplitMethod::LeaveOneOut,
            ("random", Some(ratio)) => SplitMethod::Random { ratio },
            ("base_query", Some(ratio)) => SplitMethod::BaseQuery { ratio },
            (m, _) => {
                return Err(SplitError::Format(serde::de::Error::custom(format!(
                    "unknown method `{m}` or missing ratio"
                ))))
            }
        };
        method.check()?;
        Ok(Self {
            workload_name: file.workload,
            method,
            seed: file.seed,
            train: file.train.into_iter().collect(),
            test: file.test.into_iter().collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SplitError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SplitError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    workload: String,
    method: String,
    ratio: Option<f64>,
    seed: u64,
    train: Vec<QueryId>,
    test: Vec<QueryId>,
}

/// Samples a split. Identical `(workload, method, seed)` always produce the
/// identical split.
pub fn sample_split(workload: &Workload, method: SplitMethod, seed: u64) -> Result<SplitSpec, SplitError> {
    method.check()?;
    let mut rng = SplitMix64::new(seed);
    let families = workload.families();
    let mut test: BTreeSet<QueryId> = BTreeSet::new();

    match method {
        SplitMethod::LeaveOneOut => {
            for (family, members) in &families {
                if members.len() < 2 {
                    return Err(SplitError::FamilyTooSmall {
                        family: family.0.to_string(),
                        variants: members.len(),
                    });
                }
            }
            for members in families.values() {
                let pick = rng.below_usize(members.len());
                test.insert(members[pick].id.clone());
            }
        }
        SplitMethod::Random { ratio } => {
            let mut ids: Vec<&QueryId> = workload.ids().collect();
            let count = held_out_count(ratio, ids.len());
            rng.shuffle(&mut ids);
            test.extend(ids.into_iter().take(count).cloned());
        }
        SplitMethod::BaseQuery { ratio } => {
            if families.len() < 2 {
                return Err(SplitError::FamilyTooSmall {
                    family: families.keys().next().map(|k| k.0.to_string()).unwrap_or_default(),
                    variants: families.values().next().map_or(0, Vec::len),
                });
            }
            let mut keys: Vec<_> = families.keys().copied().collect();
            let count = held_out_count(ratio, keys.len());
            rng.shuffle(&mut keys);
            for key in keys.into_iter().take(count) {
                test.extend(families[&key].iter().map(|q| q.id.clone()));
            }
        }
    }

    let train: BTreeSet<QueryId> = workload.ids().filter(|id| !test.contains(id)).cloned().collect();
    if test.is_empty() {
        return Err(SplitError::DegenerateSplit("test"));
    }
    if train.is_empty() {
        return Err(SplitError::DegenerateSplit("train"));
    }
    Ok(SplitSpec {
        workload_name: workload.name().to_string(),
        method,
        seed,
        train,
        test,
    })
}

/// One structural problem found by [`validate_split`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitViolation {
    InBothSets(QueryId),
    Uncovered(QueryId),
    UnknownQuery(QueryId),
    EmptySet(&'static str),
    /// leave-one-out: a family with other than one test variant
    NotOnePerFamily { family: String, held_out: usize },
    /// base-query: a family with variants on both sides
    FamilyStraddles { family: String },
}

impl fmt::Display for SplitViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InBothSets(id) => write!(f, "query {id} is in both train and test"),
            Self::Uncovered(id) => write!(f, "query {id} is in neither train nor test"),
            Self::UnknownQuery(id) => write!(f, "query {id} is not part of the workload"),
            Self::EmptySet(which) => write!(f, "{which} set is empty"),
            Self::NotOnePerFamily { family, held_out } => {
                write!(f, "family {family} has {held_out} test variants, expected 1")
            }
            Self::FamilyStraddles { family } => write!(f, "family {family} straddles train and test"),
        }
    }
}

/// Checks a split against a workload. An empty result means the split is
/// valid.
pub fn validate_split(workload: &Workload, split: &SplitSpec) -> Vec<SplitViolation> {
    let mut report = Vec::new();
    let known: HashSet<&QueryId> = workload.ids().collect();

    for id in split.train.intersection(&split.test) {
        report.push(SplitViolation::InBothSets(id.clone()));
    }
    for id in workload.ids() {
        if !split.train.contains(id) && !split.test.contains(id) {
            report.push(SplitViolation::Uncovered(id.clone()));
        }
    }
    for id in split.train.union(&split.test) {
        if !known.contains(id) {
            report.push(SplitViolation::UnknownQuery(id.clone()));
        }
    }
    if split.train.is_empty() {
        report.push(SplitViolation::EmptySet("train"));
    }
    if split.test.is_empty() {
        report.push(SplitViolation::EmptySet("test"));
    }

    for (family, members) in workload.families() {
        let held_out = members.iter().filter(|q| split.test.contains(&q.id)).count();
        let trained = members.iter().filter(|q| split.train.contains(&q.id)).count();
        match split.method {
            SplitMethod::LeaveOneOut if held_out != 1 => report.push(SplitViolation::NotOnePerFamily {
                family: family.0.to_string(),
                held_out,
            }),
            SplitMethod::BaseQuery { .. } if held_out > 0 && trained > 0 => {
                report.push(SplitViolation::FamilyStraddles {
                    family: family.0.to_string(),
                })
            }
            _ => {}
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::Query;

    fn workload(spec: &[(&str, usize)]) -> Workload {
        let mut queries = Vec::new();
        for (family, n) in spec {
            for v in 0..*n {
                let variant = ((b'a' + v as u8) as char).to_string();
                let id = QueryId::new(*family, variant).unwrap();
                queries.push(Query::new(id, "SELECT 1", "mem").unwrap());
            }
        }
        Workload::new("w", queries).unwrap()
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(held_out_count(0.2, 113), 23);
        assert_eq!(held_out_count(0.2, 33), 7);
        assert_eq!(held_out_count(0.5, 5), 3);
        assert_eq!(held_out_count(0.2, 2), 0);
    }

    #[test]
    fn leave_one_out_needs_two_variants() {
        let w = workload(&[("1", 2), ("2", 1)]);
        let err = sample_split(&w, SplitMethod::LeaveOneOut, 1).unwrap_err();
        assert!(matches!(err, SplitError::FamilyTooSmall { ref family, variants: 1 } if family == "2"));
    }

    #[test]
    fn base_query_needs_two_families() {
        let w = workload(&[("1", 4)]);
        let err = sample_split(&w, SplitMethod::BaseQuery { ratio: 0.5 }, 1).unwrap_err();
        assert!(matches!(err, SplitError::FamilyTooSmall { .. }));
    }

    #[test]
    fn degenerate_random_split() {
        let w = workload(&[("1", 2)]);
        let err = sample_split(&w, SplitMethod::Random { ratio: 0.2 }, 1).unwrap_err();
        assert!(matches!(err, SplitError::DegenerateSplit("test")));
    }

    #[test]
    fn bad_ratio() {
        let w = workload(&[("1", 2), ("2", 2)]);
        assert!(matches!(
            sample_split(&w, SplitMethod::Random { ratio: 1.0 }, 1),
            Err(SplitError::BadRatio(_))
        ));
    }

    #[test]
    fn validation_reports_constructed_violations() {
        let w = workload(&[("1", 3), ("5", 3)]);
        let valid = sample_split(&w, SplitMethod::LeaveOneOut, 9).unwrap();
        assert!(validate_split(&w, &valid).is_empty());

        let mut both = valid.clone();
        let one_a: QueryId = "1a".parse().unwrap();
        both.train.insert(one_a.clone());
        both.test.insert(one_a.clone());
        assert!(validate_split(&w, &both).contains(&SplitViolation::InBothSets(one_a)));

        let straddle = SplitSpec {
            workload_name: "w".into(),
            method: SplitMethod::BaseQuery { ratio: 0.5 },
            seed: 0,
            train: ["1a", "1b", "1c", "5a"].iter().map(|s| s.parse().unwrap()).collect(),
            test: ["5b", "5c"].iter().map(|s| s.parse().unwrap()).collect(),
        };
        assert_eq!(
            validate_split(&w, &straddle),
            vec![SplitViolation::FamilyStraddles { family: "5".into() }]
        );
    }

    #[test]
    fn split_file_round_trip_is_sorted() {
        let w = workload(&[("10", 2), ("2", 3), ("1", 2)]);
        let split = sample_split(&w, SplitMethod::Random { ratio: 0.3 }, 42).unwrap();
        let text = split.to_json().unwrap();
        let raw: serde_json::Value = serde_json::from_str(&text).unwrap();
        for side in ["train", "test"] {
            let ids: Vec<QueryId> = serde_json::from_value(raw[side].clone()).unwrap();
            assert!(ids.windows(2).all(|p| p[0] < p[1]), "{side} not sorted");
        }
        assert_eq!(SplitSpec::from_json(&text).unwrap(), split);
        assert_eq!(split.to_json().unwrap(), text);
    }
}
