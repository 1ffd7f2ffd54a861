use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::trace::{DeadlineWindow, TaskClass};

/// Indicator families. `Per1Dup` only exists in replication mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Eng1,
    Eng2,
    Eng3,
    Eng4,
    Eng5,
    Eng6,
    Eng7,
    Eng8,
    Eng9,
    Eng10,
    Per1,
    Per2,
    Per3,
    Per4,
    Per1Dup,
    Par1,
    Par2,
    LectureClicks,
    Forum,
}

impl Family {
    /// Families computed per task class and deadline window, in column order.
    pub const TASK_FAMILIES: [Family; 12] = [
        Family::Eng1,
        Family::Eng2,
        Family::Eng3,
        Family::Eng4,
        Family::Eng5,
        Family::Eng6,
        Family::Eng7,
        Family::Eng8,
        Family::Eng9,
        Family::Eng10,
        Family::Par1,
        Family::Par2,
    ];
    pub const PERFORMANCE: [Family; 4] = [Family::Per1, Family::Per2, Family::Per3, Family::Per4];
    pub const COURSE_LEVEL: [Family; 2] = [Family::LectureClicks, Family::Forum];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Eng1 => "eng1",
            Family::Eng2 => "eng2",
            Family::Eng3 => "eng3",
            Family::Eng4 => "eng4",
            Family::Eng5 => "eng5",
            Family::Eng6 => "eng6",
            Family::Eng7 => "eng7",
            Family::Eng8 => "eng8",
            Family::Eng9 => "eng9",
            Family::Eng10 => "eng10",
            Family::Per1 => "per1",
            Family::Per2 => "per2",
            Family::Per3 => "per3",
            Family::Per4 => "per4",
            Family::Per1Dup => "per1dup",
            Family::Par1 => "par1",
            Family::Par2 => "par2",
            Family::LectureClicks => "lecture_clicks",
            Family::Forum => "forum",
        }
    }

    pub fn is_performance(self) -> bool {
        matches!(
            self,
            Family::Per1 | Family::Per2 | Family::Per3 | Family::Per4 | Family::Per1Dup
        )
    }

    pub fn is_course_level(self) -> bool {
        matches!(self, Family::LectureClicks | Family::Forum)
    }

    /// The exclusions applied before the generic correlation rule in replication mode.
    pub fn replication_exclusions() -> Vec<Family> {
        vec![
            Family::Par1,
            Family::Eng4,
            Family::Eng8,
            Family::Per1,
            Family::Per1Dup,
            Family::Per3,
        ]
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        const ALL: [Family; 19] = [
            Family::Eng1,
            Family::Eng2,
            Family::Eng3,
            Family::Eng4,
            Family::Eng5,
            Family::Eng6,
            Family::Eng7,
            Family::Eng8,
            Family::Eng9,
            Family::Eng10,
            Family::Per1,
            Family::Per2,
            Family::Per3,
            Family::Per4,
            Family::Per1Dup,
            Family::Par1,
            Family::Par2,
            Family::LectureClicks,
            Family::Forum,
        ];
        ALL.into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown feature family `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassCell {
    I,
    NI,
    P,
    Course,
}

impl From<TaskClass> for ClassCell {
    fn from(c: TaskClass) -> Self {
        match c {
            TaskClass::DigitalIncentivized => ClassCell::I,
            TaskClass::DigitalNonincentivized => ClassCell::NI,
            TaskClass::Paper => ClassCell::P,
        }
    }
}

impl ClassCell {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassCell::I => "I",
            ClassCell::NI => "NI",
            ClassCell::P => "P",
            ClassCell::Course => "course",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WindowCell {
    Redu1,
    Redu2,
    Na,
}

impl From<DeadlineWindow> for WindowCell {
    fn from(w: DeadlineWindow) -> Self {
        match w {
            DeadlineWindow::BeforeDeadline => WindowCell::Redu1,
            DeadlineWindow::WeekAfterDeadline => WindowCell::Redu2,
        }
    }
}

impl WindowCell {
    pub fn as_str(self) -> &'static str {
        match self {
            WindowCell::Redu1 => "redu1",
            WindowCell::Redu2 => "redu2",
            WindowCell::Na => "na",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Statistic {
    RawWeek,
    CumMean,
    CumSd,
}

impl Statistic {
    pub fn as_str(self) -> &'static str {
        match self {
            Statistic::RawWeek => "raw_week",
            Statistic::CumMean => "cum_mean",
            Statistic::CumSd => "cum_sd",
        }
    }
}

/// A feature column, rendered `family.class.window.statistic`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureId {
    pub family: Family,
    pub class: ClassCell,
    pub window: WindowCell,
    pub statistic: Statistic,
}

impl FeatureId {
    pub fn weekly(family: Family, class: ClassCell, window: WindowCell) -> Self {
        FeatureId { family, class, window, statistic: Statistic::RawWeek }
    }

    pub fn course_level(family: Family) -> Self {
        FeatureId::weekly(family, ClassCell::Course, WindowCell::Na)
    }

    pub fn with_statistic(self, statistic: Statistic) -> Self {
        FeatureId { statistic, ..self }
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{}.{}.{}",
            self.family.as_str(),
            self.class.as_str(),
            self.window.as_str(),
            self.statistic.as_str()
        )
    }
}

impl FromStr for FeatureId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split('.').collect();
        let [family, class, window, statistic] = parts[..] else {
            return Err(format!("malformed feature id `{s}`"));
        };
        let class = match class {
            "I" => ClassCell::I,
            "NI" => ClassCell::NI,
            "P" => ClassCell::P,
            "course" => ClassCell::Course,
            _ => return Err(format!("unknown task class in `{s}`")),
        };
        let window = match window {
            "redu1" => WindowCell::Redu1,
            "redu2" => WindowCell::Redu2,
            "na" => WindowCell::Na,
            _ => return Err(format!("unknown window in `{s}`")),
        };
        let statistic = match statistic {
            "raw_week" => Statistic::RawWeek,
            "cum_mean" => Statistic::CumMean,
            "cum_sd" => Statistic::CumSd,
            _ => return Err(format!("unknown statistic in `{s}`")),
        };
        Ok(FeatureId { family: family.parse()?, class, window, statistic })
    }
}

/// Early-reset block prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Block {
    Frozen,
    Reset,
}

/// Column of an aggregated matrix: a feature, optionally inside an early-reset block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnKey {
    pub block: Option<Block>,
    pub feature: FeatureId,
}

impl ColumnKey {
    pub fn plain(feature: FeatureId) -> Self {
        ColumnKey { block: None, feature }
    }
}

impl fmt::Display for ColumnKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.block {
            Some(Block::Frozen) => write!(f, "frozen.{}", self.feature),
            Some(Block::Reset) => write!(f, "reset.{}", self.feature),
            None => write!(f, "{}", self.feature),
        }
    }
}

impl FromStr for ColumnKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(rest) = s.strip_prefix("frozen.") {
            Ok(ColumnKey { block: Some(Block::Frozen), feature: rest.parse()? })
        } else if let Some(rest) = s.strip_prefix("reset.") {
            Ok(ColumnKey { block: Some(Block::Reset), feature: rest.parse()? })
        } else {
            Ok(ColumnKey::plain(s.parse()?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_abbreviation_scheme() {
        let id = FeatureId::weekly(Family::Eng1, ClassCell::I, WindowCell::Redu1);
        assert_eq!(id.to_string(), "eng1.I.redu1.raw_week");
        let key = ColumnKey {
            block: Some(Block::Frozen),
            feature: id.with_statistic(Statistic::CumSd),
        };
        assert_eq!(key.to_string(), "frozen.eng1.I.redu1.cum_sd");
        assert_eq!(key.to_string().parse::<ColumnKey>().unwrap(), key);
        let clicks = FeatureId::course_level(Family::LectureClicks);
        assert_eq!(clicks.to_string().parse::<FeatureId>().unwrap(), clicks);
    }
}
