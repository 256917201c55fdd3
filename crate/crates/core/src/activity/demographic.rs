use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ActivityError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgeBand {
    Young,
    MidAged,
    Elderly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sex {
    Male,
    Female,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Employment {
    Worker,
    NonWorker,
}

impl AgeBand {
    pub const ALL: [AgeBand; 3] = [AgeBand::Young, AgeBand::MidAged, AgeBand::Elderly];
    fn key(self) -> &'static str {
        match self {
            AgeBand::Young => "young",
            AgeBand::MidAged => "mid_aged",
            AgeBand::Elderly => "elderly",
        }
    }
}

impl Sex {
    pub const ALL: [Sex; 2] = [Sex::Male, Sex::Female];
    fn key(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
        }
    }
}

impl Employment {
    pub const ALL: [Employment; 2] = [Employment::Worker, Employment::NonWorker];
    fn key(self) -> &'static str {
        match self {
            Employment::Worker => "worker",
            Employment::NonWorker => "non_worker",
        }
    }
}

/// Age band x sex x employment; 12 groups in total.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct DemographicGroup {
    pub age_band: AgeBand,
    pub sex: Sex,
    pub employment: Employment,
}

pub const GROUP_DIMS: [usize; 3] = [3, 2, 2];

impl DemographicGroup {
    pub fn new(age_band: AgeBand, sex: Sex, employment: Employment) -> Self {
        Self {
            age_band,
            sex,
            employment,
        }
    }

    /// All 12 groups in lexicographic (age, sex, employment) order.
    pub fn all() -> Vec<Self> {
        enumerate_groups(&GROUP_DIMS)
            .expect("fixed non-empty dims")
            .into_iter()
            .map(|ix| Self::new(AgeBand::ALL[ix[0]], Sex::ALL[ix[1]], Employment::ALL[ix[2]]))
            .collect()
    }

    /// Position in [`DemographicGroup::all`].
    pub fn index(self) -> usize {
        (self.age_band as usize * 2 + self.sex as usize) * 2 + self.employment as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::all()[i]
    }

    pub fn key(&self) -> String {
        let mut s = String::from(self.age_band.key());
        s.push('_');
        s.push_str(self.sex.key());
        s.push('_');
        s.push_str(self.employment.key());
        s
    }
}

impl fmt::Display for DemographicGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for DemographicGroup {
    type Err = ActivityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::all()
            .into_iter()
            .find(|g| g.key() == s)
            .ok_or_else(|| ActivityError::UnknownGroup(s.into()))
    }
}

impl From<DemographicGroup> for String {
    fn from(g: DemographicGroup) -> Self {
        g.key()
    }
}

impl TryFrom<String> for DemographicGroup {
    type Error = ActivityError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Cartesian product of category indices, last dimension fastest.
pub fn enumerate_groups(dims: &[usize]) -> Result<Vec<Vec<usize>>, ActivityError> {
    if dims.is_empty() {
        return Err(ActivityError::NoDimensions);
    }
    if let Some(i) = dims.iter().position(|&c| c == 0) {
        return Err(ActivityError::EmptyDimension(i));
    }
    let mut out = vec![Vec::new()];
    for &count in dims {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..count).map(move |c| {
                    let mut next = prefix.clone();
                    next.push(c);
                    next
                })
            })
            .collect();
    }
    Ok(out)
}
