use alloc::vec::Vec;

use super::{Candidate, Poi, PoiActivityProfile};
use crate::ActivityCode;

const SERVICE_SHOPS: &[&str] = &[
    "hairdresser",
    "beauty",
    "laundry",
    "dry_cleaning",
    "car_repair",
    "massage",
    "tailor",
    "optician",
    "tattoo",
    "copyshop",
];

const PROBS: [&[f64]; 3] = [&[1.0], &[0.7, 0.3], &[0.6, 0.3, 0.1]];

/// Fixed-priority OSM tag table. Every rule that fires contributes its code
/// once, in rule order; the first three distinct codes are kept.
pub fn classify_poi_heuristic(poi: &Poi) -> PoiActivityProfile {
    let amenity = poi.tag("amenity");
    let mut codes: Vec<ActivityCode> = Vec::with_capacity(4);
    let mut fire = |code: ActivityCode| {
        if !codes.contains(&code) {
            codes.push(code);
        }
    };

    if let Some(shop) = poi.tag("shop") {
        if SERVICE_SHOPS.contains(&shop) {
            fire(ActivityCode::SHOP_SERVICES);
        } else {
            fire(ActivityCode::SHOP_GOODS);
        }
    }
    if matches!(amenity, Some("restaurant" | "cafe" | "fast_food")) {
        fire(ActivityCode::MEALS_OUT);
    }
    if matches!(amenity, Some("school" | "university")) {
        fire(ActivityCode::SCHOOL);
    }
    if matches!(amenity, Some("hospital" | "clinic" | "pharmacy")) {
        fire(ActivityCode::HEALTHCARE);
    }
    if amenity == Some("place_of_worship") {
        fire(ActivityCode::WORSHIP);
    }
    if poi.tag("leisure").is_some() || poi.tag("tourism").is_some() {
        fire(ActivityCode::LEISURE);
    }
    let industrial = poi.tag("industrial").is_some()
        || poi.tag("landuse") == Some("industrial")
        || poi.tag("building") == Some("industrial");
    if poi.tag("office").is_some() || industrial {
        fire(ActivityCode::WORK);
    }
    if poi.tag("building") == Some("residential") {
        fire(ActivityCode::HOME);
    }
    if codes.is_empty() {
        codes.push(ActivityCode::OTHER);
    }
    codes.truncate(3);

    let probs = PROBS[codes.len() - 1];
    PoiActivityProfile {
        poi_id: poi.poi_id.clone(),
        candidates: codes
            .into_iter()
            .zip(probs)
            .map(|(code, &probability)| Candidate { code, probability })
            .collect(),
    }
}
