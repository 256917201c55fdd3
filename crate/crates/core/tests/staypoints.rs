mod support;

use mobfuse_core::staypoint::{detect_stays, haversine_m, ExtractConfig, ExtractError, GpsPoint};
use support::stay_oracle::{random_trace, reference_stays};

const LA: (f64, f64) = (34.05, -118.25);

fn pt(t: i64, lat: f64, lon: f64) -> GpsPoint {
    GpsPoint {
        agent_id: "a".into(),
        timestamp: t,
        lat,
        lon,
    }
}

/// Offset `meters` north of `origin`.
fn north(origin: (f64, f64), meters: f64) -> (f64, f64) {
    (origin.0 + meters / 111_195.0, origin.1)
}

#[test]
fn five_points_one_stay() {
    let pts: Vec<_> = (0..5).map(|i| pt(1_000 + i * 150, LA.0, LA.1)).collect();
    let stays = detect_stays(&pts, &ExtractConfig::default()).unwrap();
    assert_eq!(stays.len(), 1);
    assert_eq!(stays[0].point_count, 5);
    assert_eq!((stays[0].arrive, stays[0].depart), (1_000, 1_600));
    let r = reference_stays(&pts, &ExtractConfig::default());
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].point_count, 5);
}

#[test]
fn far_quick_pair_yields_nothing() {
    let b = north(LA, 400.0);
    let pts = [pt(0, LA.0, LA.1), pt(100, b.0, b.1)];
    assert!(detect_stays(&pts, &ExtractConfig::default())
        .unwrap()
        .is_empty());
}

#[test]
fn passing_segment_between_stays() {
    let mut pts = Vec::new();
    let mut t = 0;
    for _ in 0..6 {
        pts.push(pt(t, LA.0, LA.1));
        t += 120;
    }
    // Drive north at 50 km/h, one fix every 30 s (~417 m apart), for 3 km.
    let step = 50.0 / 3.6 * 30.0;
    let mut pos = LA;
    for _ in 0..7 {
        t += 30;
        pos = north(pos, step);
        pts.push(pt(t, pos.0, pos.1));
    }
    // Come back and settle 100 m from A.
    let b = north(LA, 100.0);
    t += 400;
    for _ in 0..6 {
        pts.push(pt(t, b.0, b.1));
        t += 120;
    }
    let cfg = ExtractConfig::default();
    let stays = detect_stays(&pts, &cfg).unwrap();
    assert_eq!(stays.len(), 2, "{stays:?}");
    assert!(haversine_m(stays[0].centroid(), LA) < 1.0);
    assert!(haversine_m(stays[1].centroid(), b) < 1.0);
    for s in &stays {
        assert!(s.point_count == 6);
    }
}

#[test]
fn fast_jump_is_classified_passing() {
    // A real dwell 10 km away reached 2 minutes after leaving the first
    // stay implies 300 km/h, so it is dropped while the next dwell is kept.
    let far = north(LA, 10_000.0);
    let mut pts = Vec::new();
    for i in 0..4 {
        pts.push(pt(i * 120, LA.0, LA.1));
    }
    for i in 0..4 {
        pts.push(pt(480 + i * 120, far.0, far.1));
    }
    for i in 0..4 {
        pts.push(pt(10_000 + i * 120, far.0, far.1 + 0.01));
    }
    let stays = detect_stays(&pts, &ExtractConfig::default()).unwrap();
    assert_eq!(stays.len(), 2);
    assert_eq!(stays[0].arrive, 0);
    assert_eq!(stays[1].arrive, 10_000);
}

#[test]
fn bounds_filter() {
    let pts: Vec<_> = (0..5).map(|i| pt(i * 120, 40.7, -74.0)).collect();
    assert!(detect_stays(&pts, &ExtractConfig::default())
        .unwrap()
        .is_empty());
}

#[test]
fn rejects_bad_input() {
    let pts = [pt(10, LA.0, LA.1), pt(10, LA.0, LA.1)];
    assert!(matches!(
        detect_stays(&pts, &ExtractConfig::default()),
        Err(ExtractError::Unsorted { index: 1, .. })
    ));
    let mut other = pt(20, LA.0, LA.1);
    other.agent_id = "b".into();
    assert!(matches!(
        detect_stays(&[pt(10, LA.0, LA.1), other], &ExtractConfig::default()),
        Err(ExtractError::MixedAgents { .. })
    ));
    assert!(matches!(
        detect_stays(&[pt(10, 91.0, 0.0)], &ExtractConfig::default()),
        Err(ExtractError::InvalidCoordinate { .. })
    ));
}

#[test]
fn matches_reference_and_holds_invariants() {
    let cfg = ExtractConfig {
        retain_members: true,
        ..ExtractConfig::default()
    };
    for seed in 0..150 {
        let pts = random_trace(seed, 400);
        let got = detect_stays(&pts, &cfg).unwrap();
        let want = reference_stays(&pts, &cfg);
        assert_eq!(got.len(), want.len(), "seed {seed}");
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(
                (g.arrive, g.depart, g.point_count),
                (w.arrive, w.depart, w.point_count)
            );
            assert_eq!((g.centroid_lat, g.centroid_lon), (w.lat, w.lon));
            assert!(g.duration_s() as f64 >= cfg.temporal_threshold);
            for &m in g.members.as_ref().unwrap() {
                assert!(haversine_m(g.centroid(), m) <= cfg.spatial_threshold);
            }
        }
        for pair in got.windows(2) {
            assert!(pair[0].depart < pair[1].arrive);
        }
    }
}
