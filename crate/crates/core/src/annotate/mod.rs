//! Activity semantics for stay points: POI classification (rule table or a
//! remote classifier speaking a small JSON protocol), start-time priors and
//! the distance-weighted posterior over activity types.

mod heuristic;
mod index;
mod infer;
mod prior;
mod remote;

pub use heuristic::classify_poi_heuristic;
pub use index::PoiIndex;
pub use infer::{infer_activity, posterior_from_weights, Inference};
pub use prior::{build_temporal_prior, TemporalPrior};
pub use remote::{
    build_request, profile_from_response, CodeEntry, PoiDescription, RemoteCandidate,
    RemoteRequest, RemoteResponse, TASK_DESCRIPTION,
};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ActivityCode;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnnotateError {
    #[error("POI {0:?} has no tags")]
    NoTags(String),
    #[error("POI {0:?} has invalid coordinates")]
    InvalidCoordinate(String),
    #[error("profile for {poi_id:?} is invalid: {reason}")]
    InvalidProfile {
        poi_id: String,
        reason: &'static str,
    },
    #[error("malformed classifier response: {0}")]
    Malformed(String),
    #[error("temporal prior is invalid: {0}")]
    InvalidPrior(&'static str),
    #[error("cannot build a temporal prior from zero chains")]
    EmptyInput,
    #[error("matching radius must be positive, got {0}")]
    InvalidRadius(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub poi_id: String,
    pub lat: f64,
    pub lon: f64,
    pub tags: BTreeMap<String, String>,
}

impl Poi {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(AnnotateError::InvalidCoordinate(self.poi_id.clone()));
        }
        if self.tags.is_empty() {
            return Err(AnnotateError::NoTags(self.poi_id.clone()));
        }
        Ok(())
    }

    pub fn tag(&self, key: &str) -> Option<&str> {
        self.tags.get(key).map(String::as_str)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub code: ActivityCode,
    pub probability: f64,
}

/// Up to three activity codes with probabilities, sorted descending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct PoiActivityProfile {
    pub poi_id: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Deserialize)]
struct RawProfile {
    poi_id: String,
    candidates: Vec<Candidate>,
}

impl TryFrom<RawProfile> for PoiActivityProfile {
    type Error = AnnotateError;

    fn try_from(raw: RawProfile) -> Result<Self, Self::Error> {
        let p = PoiActivityProfile {
            poi_id: raw.poi_id,
            candidates: raw.candidates,
        };
        p.validate()?;
        Ok(p)
    }
}

impl PoiActivityProfile {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        let bad = |reason| {
            Err(AnnotateError::InvalidProfile {
                poi_id: self.poi_id.clone(),
                reason,
            })
        };
        if self.candidates.is_empty() || self.candidates.len() > 3 {
            return bad("needs 1 to 3 candidates");
        }
        let mut sum = 0.0;
        for (i, c) in self.candidates.iter().enumerate() {
            if !(c.probability > 0.0 && c.probability <= 1.0) {
                return bad("probability outside (0, 1]");
            }
            if i > 0 && self.candidates[i - 1].probability < c.probability {
                return bad("candidates not sorted by probability");
            }
            if self.candidates[..i].iter().any(|o| o.code == c.code) {
                return bad("duplicate activity code");
            }
            sum += c.probability;
        }
        if sum > 1.0 + 1e-9 {
            return bad("probabilities sum above 1");
        }
        Ok(())
    }

    /// P(T | poi) as a dense 15-vector; codes outside the profile get 0.
    pub fn dense(&self) -> [f64; crate::NUM_ACTIVITY_TYPES] {
        let mut out = [0.0; crate::NUM_ACTIVITY_TYPES];
        for c in &self.candidates {
            out[c.code.index()] = c.probability;
        }
        out
    }
}
