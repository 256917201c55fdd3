//! Wire types for the remote POI classifier. Transport lives in the std
//! crate; this side builds requests and validates responses.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{AnnotateError, Candidate, Poi, PoiActivityProfile};
use crate::ActivityCode;

pub const TASK_DESCRIPTION: &str = "Classify the place described below into the activity types a visitor \
would most likely perform there. Answer with at most three activity codes from the table, each with a \
probability, most likely first. Probabilities must not sum above 1.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeEntry {
    pub code: u8,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoiDescription {
    pub name: Option<String>,
    pub tags: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub task_description: String,
    pub activity_codes: Vec<CodeEntry>,
    pub poi: PoiDescription,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteCandidate {
    pub code: i64,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteResponse {
    pub candidates: Vec<RemoteCandidate>,
}

pub fn build_request(poi: &Poi) -> RemoteRequest {
    RemoteRequest {
        task_description: TASK_DESCRIPTION.to_string(),
        activity_codes: ActivityCode::all()
            .map(|c| CodeEntry {
                code: c.code(),
                name: c.name().to_string(),
            })
            .collect(),
        poi: PoiDescription {
            name: poi.tag("name").map(str::to_string),
            tags: poi.tags.clone(),
        },
    }
}

/// Parse and validate a classifier reply. Candidates are sorted by
/// probability (ties by code) and cut to three without renormalizing.
pub fn profile_from_response(
    poi_id: &str,
    body: &str,
) -> Result<PoiActivityProfile, AnnotateError> {
    let resp: RemoteResponse =
        serde_json::from_str(body).map_err(|e| AnnotateError::Malformed(format!("{e}")))?;
    let mut cands = Vec::with_capacity(resp.candidates.len());
    for rc in resp.candidates {
        let code = u16::try_from(rc.code)
            .ok()
            .and_then(|c| ActivityCode::new(c).ok())
            .ok_or_else(|| {
                AnnotateError::Malformed(format!("activity code {} out of range", rc.code))
            })?;
        if !(rc.probability > 0.0 && rc.probability <= 1.0) {
            return Err(AnnotateError::Malformed(format!(
                "probability {} outside (0, 1]",
                rc.probability
            )));
        }
        cands.push(Candidate {
            code,
            probability: rc.probability,
        });
    }
    if cands.is_empty() {
        return Err(AnnotateError::Malformed("no candidates".into()));
    }
    cands.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then(a.code.cmp(&b.code))
    });
    cands.truncate(3);
    let profile = PoiActivityProfile {
        poi_id: poi_id.to_string(),
        candidates: cands,
    };
    profile
        .validate()
        .map_err(|e| AnnotateError::Malformed(format!("{e}")))?;
    Ok(profile)
}
