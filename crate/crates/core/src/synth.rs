//! Synthetic populations with known ground truth: per-group activity
//! processes, GPS traces along the sampled days, POIs planted at every
//! visited place (with recorded classifier answers) and time-use targets.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activity::{AgeBand, Employment, Sex};
use crate::annotate::{Candidate, Poi, PoiActivityProfile};
use crate::location::{AngleCell, MandatoryCell, SamplingProfiles, TypeCell, Zone};
use crate::math;
use crate::rng::{derive, derive_tag, rng_from, Rng};
use crate::staypoint::{haversine_m, GpsPoint};
use crate::{Activity, ActivityChain, ActivityCode, DemographicGroup, NUM_ACTIVITY_TYPES};

const C: usize = NUM_ACTIVITY_TYPES;
const DAY_MIN: f64 = 1440.0;
/// 2024-01-01, a Monday, as days since the Unix epoch.
pub const FIRST_DAY: i64 = 19_723;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid population spec: {0}")]
    Spec(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mandatory {
    pub code: ActivityCode,
    pub start_mean: f64,
    pub start_sd: f64,
    pub duration_mean: f64,
    pub duration_sd: f64,
    pub weekday_probability: f64,
    pub weekend_probability: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dwell {
    pub mean: f64,
    pub sd: f64,
}

/// Day generator for one demographic group. Times are minutes after local
/// midnight and are snapped to the 15-minute grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupProcess {
    pub mandatory: Option<Mandatory>,
    /// First departure from home on days without a mandatory activity.
    pub departure_mean: f64,
    pub departure_sd: f64,
    /// Row `i` holds next-activity probabilities after code `i + 1`.
    pub transitions: Vec<Vec<f64>>,
    /// Dwell time per code (Home's entry is a mid-day return home).
    pub dwell: Vec<Dwell>,
    /// No activity starts at or after this minute except the final Home.
    pub day_end: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center_lat: f64,
    pub center_lon: f64,
    pub half_extent_km: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPopulationSpec {
    pub agents: usize,
    pub days: usize,
    /// Relative weight of each group; agents are allotted proportionally.
    pub group_mix: BTreeMap<DemographicGroup, f64>,
    pub processes: BTreeMap<DemographicGroup, GroupProcess>,
    /// GPS jitter standard deviation in meters.
    pub noise_m: f64,
    pub ping_interval_s: i64,
    pub emit_gps: bool,
    pub region: Region,
    pub pois_per_type: usize,
    pub utc_offset_hours: i32,
}

fn q15(x: f64) -> f64 {
    math::round(x / 15.0) * 15.0
}

fn normal(rng: &mut Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).map_or(mean, |n| n.sample(rng))
}

/// A discretionary row biased by the given per-code extra weights, then
/// normalized.
fn row(weights: &[(ActivityCode, f64)]) -> Vec<f64> {
    let mut r = vec![0.0; C];
    for &(c, w) in weights {
        r[c.index()] += w;
    }
    let s: f64 = r.iter().sum();
    r.iter_mut().for_each(|v| *v /= s);
    r
}

impl GroupProcess {
    pub fn home_only() -> Self {
        let mut transitions = vec![vec![0.0; C]; C];
        for r in transitions.iter_mut() {
            r[0] = 1.0;
        }
        Self {
            mandatory: None,
            departure_mean: 600.0,
            departure_sd: 60.0,
            transitions,
            dwell: vec![
                Dwell {
                    mean: 60.0,
                    sd: 15.0
                };
                C
            ],
            day_end: 1320.0,
        }
    }

    /// Plausible defaults for a group: workers commute around 09:00, young
    /// non-workers attend school, everybody else runs errands and leisure
    /// tours with age- and sex-dependent mixes.
    pub fn default_for(group: DemographicGroup) -> Self {
        use ActivityCode as A;
        let elderly = group.age_band == AgeBand::Elderly;
        let female = group.sex == Sex::Female;
        let young = group.age_band == AgeBand::Young;
        let mut disc = vec![
            (A::HOME, 0.40),
            (A::SHOP_GOODS, 0.12),
            (A::SHOP_SERVICES, 0.04),
            (A::MEALS_OUT, 0.12),
            (A::ERRANDS, 0.05),
            (A::LEISURE, 0.07),
            (A::EXERCISE, 0.05),
            (A::SOCIAL, 0.05),
            (A::HEALTHCARE, 0.02),
            (A::WORSHIP, 0.01),
            (A::OTHER, 0.02),
            (A::PICKUP_DROP, 0.02),
            (A::CAREGIVING, 0.02),
        ];
        if elderly {
            disc.extend([(A::HEALTHCARE, 0.06), (A::WORSHIP, 0.04), (A::SOCIAL, 0.03)]);
        }
        if female {
            disc.extend([
                (A::CAREGIVING, 0.03),
                (A::PICKUP_DROP, 0.03),
                (A::SHOP_SERVICES, 0.03),
            ]);
        } else {
            disc.extend([(A::EXERCISE, 0.03), (A::MEALS_OUT, 0.02)]);
        }
        if young {
            disc.extend([(A::LEISURE, 0.05), (A::SOCIAL, 0.04)]);
        }
        let base = row(&disc);
        let mut transitions = vec![base.clone(); C];
        transitions[A::WORK.index()] = row(&[
            (A::HOME, 0.6),
            (A::MEALS_OUT, 0.1),
            (A::SHOP_GOODS, 0.12),
            (A::EXERCISE, 0.08),
            (A::SOCIAL, 0.05),
            (A::PICKUP_DROP, 0.05),
        ]);
        transitions[A::SCHOOL.index()] = row(&[
            (A::HOME, 0.7),
            (A::LEISURE, 0.15),
            (A::SOCIAL, 0.1),
            (A::MEALS_OUT, 0.05),
        ]);

        let means = [
            120.0, 480.0, 390.0, 90.0, 30.0, 45.0, 60.0, 20.0, 120.0, 60.0, 120.0, 60.0, 90.0,
            45.0, 15.0,
        ];
        let dwell = means
            .iter()
            .map(|&m| Dwell {
                mean: m,
                sd: (0.35 * m).max(10.0),
            })
            .collect();

        let mandatory = match (group.employment, group.age_band) {
            (Employment::Worker, _) => Some(Mandatory {
                code: A::WORK,
                start_mean: if elderly { 570.0 } else { 525.0 },
                start_sd: 30.0,
                duration_mean: if elderly { 420.0 } else { 510.0 },
                duration_sd: 40.0,
                weekday_probability: 0.92,
                weekend_probability: 0.15,
            }),
            (Employment::NonWorker, AgeBand::Young) => Some(Mandatory {
                code: A::SCHOOL,
                start_mean: 480.0,
                start_sd: 20.0,
                duration_mean: 390.0,
                duration_sd: 30.0,
                weekday_probability: 0.88,
                weekend_probability: 0.0,
            }),
            _ => None,
        };
        Self {
            mandatory,
            departure_mean: if elderly { 570.0 } else { 630.0 },
            departure_sd: 90.0,
            transitions,
            dwell,
            day_end: 1290.0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.transitions.len() != C || self.dwell.len() != C {
            return Err(SynthError::Spec(
                "transition matrix and dwell table need 15 rows".into(),
            ));
        }
        for (i, r) in self.transitions.iter().enumerate() {
            if r.len() != C
                || r.iter().any(|v| !(*v >= 0.0))
                || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9
            {
                return Err(SynthError::Spec(format!(
                    "transition row {} is not a distribution",
                    i + 1
                )));
            }
        }
        if self.dwell.iter().any(|d| !(d.mean > 0.0 && d.sd > 0.0)) {
            return Err(SynthError::Spec("dwell parameters must be positive".into()));
        }
        if let Some(m) = &self.mandatory {
            let probs = [m.weekday_probability, m.weekend_probability];
            if probs.iter().any(|p| !(0.0..=1.0).contains(p))
                || !(m.duration_mean > 0.0 && m.start_sd >= 0.0)
            {
                return Err(SynthError::Spec(
                    "invalid mandatory activity parameters".into(),
                ));
            }
        }
        Ok(())
    }

    fn next(&self, from: ActivityCode, rng: &mut Rng) -> ActivityCode {
        // Self-transitions would merge into one activity, so they are
        // excluded except Home -> Home, which ends the day.
        let r = &self.transitions[from.index()];
        let skip = if from == ActivityCode::HOME {
            usize::MAX
        } else {
            from.index()
        };
        let total: f64 = r
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != skip)
            .map(|(_, v)| v)
            .sum();
        if total <= 0.0 {
            return ActivityCode::HOME;
        }
        let mut u = rng.random::<f64>() * total;
        for (i, &v) in r.iter().enumerate() {
            if i == skip {
                continue;
            }
            if u < v {
                return ActivityCode::from_index(i);
            }
            u -= v;
        }
        ActivityCode::HOME
    }

    /// One day of activities covering [0, 1440).
    pub fn sample_day(&self, day_of_week: u8, rng: &mut Rng) -> Vec<Activity> {
        let weekday = day_of_week < 5;
        let mut acts: Vec<(ActivityCode, f64, f64)> = Vec::new();
        let mut t;
        let mut cur;
        let mut pending = None;
        let mand = self.mandatory.as_ref().filter(|m| {
            let p = if weekday {
                m.weekday_probability
            } else {
                m.weekend_probability
            };
            rng.random::<f64>() < p
        });
        if let Some(m) = mand {
            let start = q15(normal(rng, m.start_mean, m.start_sd)).clamp(15.0, DAY_MIN - 120.0);
            let dur = q15(normal(rng, m.duration_mean, m.duration_sd)).max(60.0);
            let end = (start + dur).min(DAY_MIN - 15.0);
            acts.push((ActivityCode::HOME, 0.0, start));
            acts.push((m.code, start, end));
            t = end;
            cur = m.code;
        } else {
            let first = self.next(ActivityCode::HOME, rng);
            if first == ActivityCode::HOME {
                return vec![Activity::new(ActivityCode::HOME, 0, 1440)];
            }
            let dep = q15(normal(rng, self.departure_mean, self.departure_sd))
                .clamp(15.0, self.day_end - 15.0);
            acts.push((ActivityCode::HOME, 0.0, dep));
            t = dep;
            cur = ActivityCode::HOME;
            pending = Some(first);
        }
        loop {
            let next = pending.take().unwrap_or_else(|| self.next(cur, rng));
            if t >= self.day_end || (next == ActivityCode::HOME && cur == ActivityCode::HOME) {
                break;
            }
            let d = self.dwell[next.index()];
            let dur = q15(normal(rng, d.mean, d.sd)).max(15.0);
            if t + dur > DAY_MIN - 15.0 {
                break;
            }
            acts.push((next, t, t + dur));
            t += dur;
            cur = next;
        }
        match acts.last_mut() {
            Some(last) if last.0 == ActivityCode::HOME => last.2 = DAY_MIN,
            _ => acts.push((ActivityCode::HOME, t, DAY_MIN)),
        }
        acts.into_iter()
            .map(|(c, s, e)| Activity::new(c, s as u16, e as u16))
            .collect()
    }
}

impl SyntheticPopulationSpec {
    /// Even mix over the 12 groups with [`GroupProcess::default_for`].
    pub fn default_la(agents: usize, days: usize) -> Self {
        let groups = DemographicGroup::all();
        Self {
            agents,
            days,
            group_mix: groups.iter().map(|g| (*g, 1.0)).collect(),
            processes: groups
                .iter()
                .map(|g| (*g, GroupProcess::default_for(*g)))
                .collect(),
            noise_m: 15.0,
            ping_interval_s: 300,
            emit_gps: true,
            region: Region {
                center_lat: 34.05,
                center_lon: -118.25,
                half_extent_km: 10.0,
            },
            pois_per_type: 12,
            utc_offset_hours: -8,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.days == 0 {
            return Err(SynthError::Spec("days must be positive".into()));
        }
        let total: f64 = self.group_mix.values().sum();
        if self.group_mix.values().any(|w| !(*w >= 0.0)) || !(total > 0.0) {
            return Err(SynthError::Spec(
                "group mix weights must be non-negative with positive sum".into(),
            ));
        }
        for (g, w) in &self.group_mix {
            if *w > 0.0 {
                self.processes
                    .get(g)
                    .ok_or_else(|| SynthError::Spec(format!("no process for group {}", g.key())))?
                    .validate()?;
            }
        }
        if self.emit_gps
            && !(self.noise_m >= 0.0
                && self.ping_interval_s > 0
                && self.region.half_extent_km > 0.0)
        {
            return Err(SynthError::Spec("GPS parameters must be positive".into()));
        }
        Ok(())
    }

    /// Largest-remainder allocation of agents to groups, in group order.
    fn allot(&self) -> Vec<DemographicGroup> {
        let total: f64 = self.group_mix.values().sum();
        let mut counts: Vec<(DemographicGroup, usize, f64)> = self
            .group_mix
            .iter()
            .map(|(g, w)| {
                let exact = self.agents as f64 * w / total;
                (*g, math::floor(exact) as usize, exact - math::floor(exact))
            })
            .collect();
        let mut left = self.agents - counts.iter().map(|c| c.1).sum::<usize>();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| counts[b].2.total_cmp(&counts[a].2).then(a.cmp(&b)));
        for i in order {
            if left == 0 {
                break;
            }
            counts[i].1 += 1;
            left -= 1;
        }
        counts
            .into_iter()
            .flat_map(|(g, n, _)| core::iter::repeat_n(g, n))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentInfo {
    pub agent_id: String,
    pub group: DemographicGroup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentDayChain {
    /// Local day index (days since the Unix epoch).
    pub day: i64,
    pub group: DemographicGroup,
    pub chain: ActivityChain,
}

/// Where and when one planted activity took place.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub agent_id: String,
    pub day: i64,
    pub code: ActivityCode,
    pub poi_id: String,
    pub lat: f64,
    pub lon: f64,
    /// UTC seconds.
    pub start: i64,
    pub end: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub agents: Vec<AgentInfo>,
    pub days: Vec<AgentDayChain>,
    pub visits: Vec<Visit>,
    pub gps: Vec<GpsPoint>,
    pub pois: Vec<Poi>,
    /// Recorded classifier answers, one per POI.
    pub profiles: Vec<PoiActivityProfile>,
    /// Time share per code for each group, from the generated days.
    pub targets: BTreeMap<DemographicGroup, [f64; C]>,
}

impl Population {
    pub fn chains(&self) -> Vec<ActivityChain> {
        self.days.iter().map(|d| d.chain.clone()).collect()
    }

    /// Mean minutes per day in each code for each group, keyed by group
    /// key and code number.
    pub fn tus_minutes(&self) -> BTreeMap<String, BTreeMap<String, f64>> {
        let mut sums: BTreeMap<DemographicGroup, ([f64; C], usize)> = BTreeMap::new();
        for d in &self.days {
            let e = sums.entry(d.group).or_insert(([0.0; C], 0));
            for (acc, m) in e.0.iter_mut().zip(d.chain.minutes_by_type()) {
                *acc += f64::from(m);
            }
            e.1 += 1;
        }
        sums.into_iter()
            .map(|(g, (m, n))| {
                let per: BTreeMap<String, f64> = ActivityCode::all()
                    .map(|c| (c.code().to_string(), m[c.index()] / n as f64))
                    .collect();
                (g.key(), per)
            })
            .collect()
    }
}

fn poi_tags(code: ActivityCode, i: usize) -> BTreeMap<String, String> {
    let (k, v, name) = match code.code() {
        1 => ("building", "residential", "Residence"),
        2 => ("office", "company", "Office"),
        3 => ("amenity", "school", "School"),
        4 => ("amenity", "childcare", "Care Center"),
        5 => ("shop", "supermarket", "Market"),
        6 => ("shop", "hairdresser", "Salon"),
        7 => ("amenity", "restaurant", "Diner"),
        8 => ("amenity", "post_office", "Post Office"),
        9 => ("leisure", "park", "Park"),
        10 => ("leisure", "fitness_centre", "Gym"),
        11 => ("amenity", "community_centre", "Community Hall"),
        12 => ("amenity", "clinic", "Clinic"),
        13 => ("amenity", "place_of_worship", "Chapel"),
        14 => ("amenity", "bank", "Bank"),
        _ => ("amenity", "kindergarten", "Kindergarten"),
    };
    BTreeMap::from([
        (k.to_string(), v.to_string()),
        ("name".to_string(), format!("{name} {i}")),
    ])
}

fn fixture_profile(poi_id: &str, code: ActivityCode) -> PoiActivityProfile {
    let candidates = if code == ActivityCode::OTHER {
        vec![(code, 0.9), (ActivityCode::ERRANDS, 0.05)]
    } else {
        vec![(code, 0.85), (ActivityCode::OTHER, 0.1)]
    };
    PoiActivityProfile {
        poi_id: poi_id.into(),
        candidates: candidates
            .into_iter()
            .map(|(code, probability)| Candidate { code, probability })
            .collect(),
    }
}

struct Place {
    poi: usize,
    lat: f64,
    lon: f64,
}

struct Geography {
    pois: Vec<Poi>,
    profiles: Vec<PoiActivityProfile>,
    /// POI indices per code (index 0 unused: homes are per agent).
    pools: Vec<Vec<usize>>,
}

impl Geography {
    fn place(&self, i: usize) -> Place {
        Place {
            poi: i,
            lat: self.pois[i].lat,
            lon: self.pois[i].lon,
        }
    }
}

fn build_geography(spec: &SyntheticPopulationSpec, rng: &mut Rng) -> Geography {
    let per = spec.pois_per_type.max(1);
    let workplaces = (spec.agents / 8).max(per);
    let schools = (spec.agents / 40).max(per / 2).max(1);
    let mut need: Vec<(ActivityCode, usize)> = vec![(ActivityCode::HOME, spec.agents)];
    for code in ActivityCode::all().skip(1) {
        let n = match code.code() {
            2 => workplaces,
            3 => schools,
            _ => per,
        };
        need.push((code, n));
    }
    let total: usize = need.iter().map(|n| n.1).sum();

    // Distinct cells of a square lattice keep every place well apart.
    let side = math::ceil(math::sqrt(2.0 * total as f64)) as usize;
    let extent_m = 2.0 * spec.region.half_extent_km * 1000.0;
    let spacing = extent_m / side as f64;
    let mut cells: Vec<usize> = (0..side * side).collect();
    rand::seq::SliceRandom::shuffle(&mut cells[..], rng);
    let lat0 = spec.region.center_lat - spec.region.half_extent_km * 1000.0 / 111_195.0;
    let m_per_deg_lon = 111_195.0 * math::cos(spec.region.center_lat.to_radians());
    let lon0 = spec.region.center_lon - spec.region.half_extent_km * 1000.0 / m_per_deg_lon;

    let mut pois = Vec::with_capacity(total);
    let mut profiles = Vec::with_capacity(total);
    let mut pools = vec![Vec::new(); C];
    let mut next_cell = cells.into_iter();
    for (code, n) in need {
        for i in 0..n {
            let cell = next_cell.next().unwrap_or(0);
            let (row, col) = (cell / side, cell % side);
            let lat = lat0 + (row as f64 + 0.5) * spacing / 111_195.0;
            let lon = lon0 + (col as f64 + 0.5) * spacing / m_per_deg_lon;
            let poi_id = format!("poi_{}_{:04}", code.code(), i);
            profiles.push(fixture_profile(&poi_id, code));
            pools[code.index()].push(pois.len());
            pois.push(Poi {
                poi_id,
                lat,
                lon,
                tags: poi_tags(code, i),
            });
        }
    }
    Geography {
        pois,
        profiles,
        pools,
    }
}

/// Emits the GPS trace of one agent for one activity: a travel leg at the
/// start if the place changed, then jittered pings while present.
struct Tracer<'a> {
    spec: &'a SyntheticPopulationSpec,
    agent_id: String,
    last: Option<(f64, f64)>,
    t: i64,
}

const TRAVEL_KMH: f64 = 25.0;

impl Tracer<'_> {
    fn jitter(&self, rng: &mut Rng, lat: f64, lon: f64, sd: f64) -> (f64, f64) {
        let dn = normal(rng, 0.0, sd.max(1e-9));
        let de = normal(rng, 0.0, sd.max(1e-9));
        (
            lat + dn / 111_195.0,
            lon + de / (111_195.0 * math::cos(lat.to_radians())),
        )
    }

    fn emit(&mut self, out: &mut Vec<GpsPoint>, ts: i64, p: (f64, f64)) {
        if ts <= self.t {
            return;
        }
        self.t = ts;
        out.push(GpsPoint {
            agent_id: self.agent_id.clone(),
            timestamp: ts,
            lat: p.0,
            lon: p.1,
        });
    }

    fn activity(
        &mut self,
        out: &mut Vec<GpsPoint>,
        rng: &mut Rng,
        start: i64,
        end: i64,
        at: (f64, f64),
    ) {
        let mut arrive = start;
        if let Some(from) = self.last.filter(|f| *f != at) {
            let dist = haversine_m(from, at);
            let travel = ((dist / (TRAVEL_KMH / 3.6)) as i64).min((end - start) / 2);
            let steps = (travel / 60).max(1);
            for s in 1..steps {
                let f = s as f64 / steps as f64;
                let p = (from.0 + (at.0 - from.0) * f, from.1 + (at.1 - from.1) * f);
                let p = self.jitter(rng, p.0, p.1, self.spec.noise_m);
                self.emit(out, start + s * 60, p);
            }
            arrive = start + travel;
        }
        let interval = self.spec.ping_interval_s;
        let mut ts = arrive;
        while ts < end {
            let p = self.jitter(rng, at.0, at.1, self.spec.noise_m);
            self.emit(out, ts, p);
            let wobble = rng.random_range(-(interval / 5)..=interval / 5);
            ts += (interval + wobble).max(1);
        }
        self.last = Some(at);
    }
}

/// Sample a population. Deterministic in `seed`.
pub fn gen_population(spec: &SyntheticPopulationSpec, seed: u64) -> Result<Population, SynthError> {
    spec.validate()?;
    let mut geo_rng = rng_from(derive_tag(seed, "geography"));
    let geo = build_geography(spec, &mut geo_rng);
    let offset_s = i64::from(spec.utc_offset_hours) * 3600;

    let groups = spec.allot();
    let mut pop = Population {
        agents: Vec::with_capacity(spec.agents),
        days: Vec::with_capacity(spec.agents * spec.days),
        visits: Vec::new(),
        gps: Vec::new(),
        pois: if spec.emit_gps {
            geo.pois.clone()
        } else {
            Vec::new()
        },
        profiles: if spec.emit_gps {
            geo.profiles.clone()
        } else {
            Vec::new()
        },
        targets: BTreeMap::new(),
    };

    for (a, &group) in groups.iter().enumerate() {
        let agent_id = format!("agent_{a:04}");
        let process = &spec.processes[&group];
        let mut rng = rng_from(derive(seed, a as u64));
        let home = geo.place(geo.pools[0][a]);
        let anchor = |code: ActivityCode, rng: &mut Rng| -> usize {
            let pool = &geo.pools[code.index()];
            pool[rng.random_range(0..pool.len())]
        };
        let work = geo.place(anchor(ActivityCode::WORK, &mut rng));
        let school = geo.place(anchor(ActivityCode::SCHOOL, &mut rng));
        let mut tracer = Tracer {
            spec,
            agent_id: agent_id.clone(),
            last: None,
            t: i64::MIN,
        };
        pop.agents.push(AgentInfo {
            agent_id: agent_id.clone(),
            group,
        });

        for d in 0..spec.days {
            let day = FIRST_DAY + d as i64;
            let dow = ((day + 3).rem_euclid(7)) as u8;
            let acts = process.sample_day(dow, &mut rng);
            let chain = ActivityChain::new(agent_id.clone(), dow, acts)
                .map_err(|e| SynthError::Spec(format!("generated an invalid chain: {e}")))?;
            if spec.emit_gps {
                let midnight = day * 86_400 - offset_s;
                let mut prev = (home.lat, home.lon);
                for act in &chain.activities {
                    let place = match act.kind {
                        ActivityCode::HOME => geo.place(home.poi),
                        ActivityCode::WORK => geo.place(work.poi),
                        ActivityCode::SCHOOL => geo.place(school.poi),
                        code => {
                            // Pick among the three nearest places of that kind.
                            let mut pool: Vec<(f64, usize)> = geo.pools[code.index()]
                                .iter()
                                .map(|&i| {
                                    (haversine_m(prev, (geo.pois[i].lat, geo.pois[i].lon)), i)
                                })
                                .collect();
                            pool.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                            let k = pool.len().min(3);
                            geo.place(pool[rng.random_range(0..k)].1)
                        }
                    };
                    let start = midnight + i64::from(act.start) * 60;
                    let end = midnight + i64::from(act.end) * 60;
                    tracer.activity(&mut pop.gps, &mut rng, start, end, (place.lat, place.lon));
                    pop.visits.push(Visit {
                        agent_id: agent_id.clone(),
                        day,
                        code: act.kind,
                        poi_id: geo.pois[place.poi].poi_id.clone(),
                        lat: place.lat,
                        lon: place.lon,
                        start,
                        end,
                    });
                    prev = (place.lat, place.lon);
                }
            }
            pop.days.push(AgentDayChain { day, group, chain });
        }
    }

    let mut minutes: BTreeMap<DemographicGroup, [f64; C]> = BTreeMap::new();
    for d in &pop.days {
        let acc = minutes.entry(d.group).or_insert([0.0; C]);
        for (a, m) in acc.iter_mut().zip(d.chain.minutes_by_type()) {
            *a += f64::from(m);
        }
    }
    for (g, m) in minutes {
        let total: f64 = m.iter().sum();
        let mut share = [0.0; C];
        for c in 0..C {
            share[c] = m[c] / total;
        }
        pop.targets.insert(g, share);
    }
    Ok(pop)
}

/// `count` zones jittered around a square lattice over `region`, split
/// into `regions` vertical bands named `R0`, `R1`, .... Every zone accepts
/// Home and most non-mandatory types; work and school are concentrated
/// in a subset of zones.
pub fn gen_zones(count: usize, regions: usize, region: &Region, seed: u64) -> Vec<Zone> {
    let mut rng = rng_from(derive_tag(seed, "zones"));
    let side = math::ceil(math::sqrt(count as f64)) as usize;
    let extent_m = 2.0 * region.half_extent_km * 1000.0;
    let step = extent_m / side.max(1) as f64;
    let m_per_deg_lon = 111_195.0 * math::cos(region.center_lat.to_radians());
    let regions = regions.max(1);
    (0..count)
        .map(|i| {
            let (row, col) = (i / side, i % side);
            let x = (col as f64 + 0.5 + rng.random_range(-0.3..0.3)) * step - extent_m / 2.0;
            let y = (row as f64 + 0.5 + rng.random_range(-0.3..0.3)) * step - extent_m / 2.0;
            let band =
                (((x + extent_m / 2.0) / extent_m * regions as f64) as usize).min(regions - 1);
            let mut land_use = BTreeMap::new();
            for code in ActivityCode::all() {
                let w: f64 = match code.code() {
                    1 => 1.0,
                    2 => {
                        if rng.random::<f64>() < 0.6 {
                            rng.random_range(0.2..1.0)
                        } else {
                            0.0
                        }
                    }
                    3 => {
                        if rng.random::<f64>() < 0.3 {
                            rng.random_range(0.2..1.0)
                        } else {
                            0.0
                        }
                    }
                    _ => {
                        if rng.random::<f64>() < 0.85 {
                            rng.random_range(0.1..1.0)
                        } else {
                            0.0
                        }
                    }
                };
                if w > 0.0 {
                    land_use.insert(code, w);
                }
            }
            Zone {
                zone_id: format!("z{i:03}"),
                lat: region.center_lat + y / 111_195.0,
                lon: region.center_lon + x / m_per_deg_lon,
                sub_region: format!("R{band}"),
                land_use,
            }
        })
        .collect()
}

/// Plausible urban defaults: commutes of about 8 km (work) and 3 km
/// (school), short discretionary hops biased toward the next anchor.
pub fn default_profiles() -> SamplingProfiles {
    let nonmandatory = ActivityCode::all()
        .filter(|c| *c != ActivityCode::HOME && !c.is_mandatory())
        .map(|code| TypeCell {
            code,
            mu_km: match code.code() {
                5 | 7 | 8 | 15 => 2.0,
                9 | 11 | 13 => 4.0,
                _ => 3.0,
            },
            sigma: 0.6,
        })
        .collect();
    let angular = ActivityCode::all()
        .filter(|c| *c != ActivityCode::HOME && !c.is_mandatory())
        .map(|code| AngleCell {
            code,
            mu_deg: 30.0,
            kappa: 2.0,
        })
        .collect();
    SamplingProfiles {
        mandatory: vec![
            MandatoryCell {
                code: ActivityCode::WORK,
                sub_region: "*".into(),
                mu_km: 8.0,
                sigma: 0.5,
            },
            MandatoryCell {
                code: ActivityCode::SCHOOL,
                sub_region: "*".into(),
                mu_km: 3.0,
                sigma: 0.5,
            },
        ],
        nonmandatory,
        angular,
        alpha_w: 1.0,
        beta_w: 0.02,
        t_max: 90.0,
    }
}
