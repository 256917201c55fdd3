//! POI classification backends: the rule table, recorded responses, or a
//! live HTTP endpoint. Anything that fails to produce a valid profile falls
//! back to the rule table.

use std::path::PathBuf;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mobfuse_core::annotate::{
    build_request, classify_poi_heuristic, profile_from_response, Poi, PoiActivityProfile,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
#[derive(Default)]
pub enum ClassifierConfig {
    #[default]
    Heuristic,
    /// One recorded response per POI at `<dir>/<poi_id>.json`.
    Fixture { dir: PathBuf },
    Remote {
        endpoint: String,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
        #[serde(default = "default_retries")]
        retries: usize,
        #[serde(default = "default_backoff")]
        backoff_ms: u64,
        /// Most requests in flight at once.
        #[serde(default = "default_concurrency")]
        concurrency: usize,
        /// Environment variable holding a bearer token, if any.
        #[serde(default)]
        api_key_env: Option<String>,
    },
}

fn default_timeout() -> f64 {
    30.0
}
fn default_retries() -> usize {
    3
}
fn default_backoff() -> u64 {
    500
}
fn default_concurrency() -> usize {
    4
}

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("request failed after {attempts} attempts: {msg}")]
    Retriable { attempts: usize, msg: String },
    #[error("no recorded response for {0}")]
    MissingFixture(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("classifier not configured for remote use")]
    NotRemote,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileSource {
    Heuristic,
    Fixture,
    Remote,
    Fallback,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classified {
    pub profile: PoiActivityProfile,
    pub source: ProfileSource,
}

pub struct Classifier {
    cfg: ClassifierConfig,
    agent: Option<ureq::Agent>,
}

impl Classifier {
    pub fn new(cfg: ClassifierConfig) -> Self {
        let agent = match &cfg {
            ClassifierConfig::Remote { timeout_s, .. } => Some(
                ureq::Agent::config_builder()
                    .timeout_global(Some(Duration::from_secs_f64(timeout_s.max(0.001))))
                    .build()
                    .into(),
            ),
            _ => None,
        };
        Self { cfg, agent }
    }

    /// Ask the configured remote or fixture backend, without fallback.
    pub fn classify_poi_remote(&self, poi: &Poi) -> Result<PoiActivityProfile, ClassifyError> {
        match &self.cfg {
            ClassifierConfig::Heuristic => Err(ClassifyError::NotRemote),
            ClassifierConfig::Fixture { dir } => {
                let path = dir.join(format!("{}.json", poi.poi_id));
                let body = std::fs::read_to_string(&path)
                    .map_err(|_| ClassifyError::MissingFixture(poi.poi_id.clone()))?;
                profile_from_response(&poi.poi_id, &body)
                    .map_err(|e| ClassifyError::Malformed(e.to_string()))
            }
            ClassifierConfig::Remote {
                endpoint,
                retries,
                backoff_ms,
                api_key_env,
                ..
            } => {
                let agent = self.agent.as_ref().expect("built for remote mode");
                let body = serde_json::to_string(&build_request(poi)).expect("request serializes");
                let token = api_key_env.as_ref().and_then(|v| std::env::var(v).ok());
                let attempts = retries + 1;
                let mut last = String::new();
                for attempt in 0..attempts {
                    if attempt > 0 {
                        std::thread::sleep(Duration::from_millis(
                            backoff_ms << (attempt - 1).min(6),
                        ));
                    }
                    let mut req = agent
                        .post(endpoint)
                        .header("content-type", "application/json");
                    if let Some(t) = &token {
                        req = req.header("authorization", &format!("Bearer {t}"));
                    }
                    match req.send(&body) {
                        Ok(resp) => {
                            let text = resp
                                .into_body()
                                .read_to_string()
                                .map_err(|e| ClassifyError::Malformed(e.to_string()))?;
                            return profile_from_response(&poi.poi_id, &text)
                                .map_err(|e| ClassifyError::Malformed(e.to_string()));
                        }
                        Err(ureq::Error::StatusCode(code)) if code != 429 && code < 500 => {
                            return Err(ClassifyError::Malformed(format!("HTTP {code}")));
                        }
                        Err(e) => {
                            log::debug!(
                                "classifier attempt {} for {} failed: {e}",
                                attempt + 1,
                                poi.poi_id
                            );
                            last = e.to_string();
                        }
                    }
                }
                Err(ClassifyError::Retriable {
                    attempts,
                    msg: last,
                })
            }
        }
    }

    pub fn classify(&self, poi: &Poi) -> Classified {
        if matches!(self.cfg, ClassifierConfig::Heuristic) {
            return Classified {
                profile: classify_poi_heuristic(poi),
                source: ProfileSource::Heuristic,
            };
        }
        match self.classify_poi_remote(poi) {
            Ok(profile) => Classified {
                profile,
                source: if matches!(self.cfg, ClassifierConfig::Fixture { .. }) {
                    ProfileSource::Fixture
                } else {
                    ProfileSource::Remote
                },
            },
            Err(e) => {
                log::warn!("POI {}: {e}; using the rule table", poi.poi_id);
                Classified {
                    profile: classify_poi_heuristic(poi),
                    source: ProfileSource::Fallback,
                }
            }
        }
    }

    /// Classify every POI, in input order. Remote mode keeps at most
    /// `concurrency` requests in flight.
    pub fn classify_all(&self, pois: &[Poi]) -> Vec<Classified> {
        match &self.cfg {
            ClassifierConfig::Remote { concurrency, .. } => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads((*concurrency).max(1))
                    .build()
                    .expect("thread pool");
                pool.install(|| pois.par_iter().map(|p| self.classify(p)).collect())
            }
            _ => pois.par_iter().map(|p| self.classify(p)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mobfuse_core::ActivityCode;
    use std::collections::BTreeMap;

    fn poi(id: &str, tags: &[(&str, &str)]) -> Poi {
        Poi {
            poi_id: id.into(),
            lat: 34.0,
            lon: -118.0,
            tags: tags
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect::<BTreeMap<_, _>>(),
        }
    }

    #[test]
    fn fixture_passthrough_truncation_and_fallback() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("poi_7.json"),
            r#"{"candidates":[{"code":2,"probability":0.8},{"code":9,"probability":0.15},{"code":14,"probability":0.05}]}"#,
        )
        .unwrap();
        std::fs::write(
            dir.path().join("four.json"),
            r#"{"candidates":[{"code":5,"probability":0.1},{"code":2,"probability":0.4},{"code":7,"probability":0.3},{"code":9,"probability":0.2}]}"#,
        )
        .unwrap();
        std::fs::write(dir.path().join("bad.json"), "not json").unwrap();
        let c = Classifier::new(ClassifierConfig::Fixture {
            dir: dir.path().into(),
        });

        let got = c.classify(&poi("poi_7", &[("name", "x")]));
        assert_eq!(got.source, ProfileSource::Fixture);
        let codes: Vec<(u8, f64)> = got
            .profile
            .candidates
            .iter()
            .map(|c| (c.code.code(), c.probability))
            .collect();
        assert_eq!(codes, vec![(2, 0.8), (9, 0.15), (14, 0.05)]);

        let four = c.classify(&poi("four", &[("name", "x")]));
        let codes: Vec<(u8, f64)> = four
            .profile
            .candidates
            .iter()
            .map(|c| (c.code.code(), c.probability))
            .collect();
        assert_eq!(codes, vec![(2, 0.4), (7, 0.3), (9, 0.2)]);

        for id in ["bad", "missing"] {
            let fb = c.classify(&poi(id, &[("amenity", "restaurant")]));
            assert_eq!(fb.source, ProfileSource::Fallback);
            assert_eq!(fb.profile.candidates[0].code, ActivityCode::MEALS_OUT);
        }
    }

    #[test]
    fn unreachable_endpoint_falls_back() {
        // Port 9 on localhost is the discard service and is normally closed.
        let c = Classifier::new(ClassifierConfig::Remote {
            endpoint: "http://127.0.0.1:9/classify".into(),
            timeout_s: 0.5,
            retries: 2,
            backoff_ms: 1,
            concurrency: 2,
            api_key_env: None,
        });
        let p = poi("p", &[("amenity", "school")]);
        assert!(matches!(
            c.classify_poi_remote(&p),
            Err(ClassifyError::Retriable { attempts: 3, .. })
        ));
        let all = c.classify_all(&[p.clone(), p]);
        assert!(all.iter().all(|r| r.source == ProfileSource::Fallback
            && r.profile.candidates[0].code == ActivityCode::SCHOOL));
    }

    #[test]
    fn remote_roundtrip_against_local_server() {
        use std::io::{Read, Write};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            // Read until the JSON body has arrived.
            while !String::from_utf8_lossy(&buf).contains("\"tags\"") {
                let n = s.read(&mut chunk).unwrap();
                if n == 0 {
                    break;
                }
                buf.extend_from_slice(&chunk[..n]);
            }
            let body = r#"{"candidates":[{"code":12,"probability":0.9}]}"#;
            write!(s, "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}", body.len()).unwrap();
            String::from_utf8_lossy(&buf).into_owned()
        });
        let c = Classifier::new(ClassifierConfig::Remote {
            endpoint: format!("http://{addr}/classify"),
            timeout_s: 5.0,
            retries: 0,
            backoff_ms: 1,
            concurrency: 1,
            api_key_env: None,
        });
        let got = c.classify(&poi("h", &[("name", "Clinic")]));
        let request = server.join().unwrap();
        assert_eq!(got.source, ProfileSource::Remote);
        assert_eq!(got.profile.candidates[0].code, ActivityCode::HEALTHCARE);
        assert!(request.contains("task_description") && request.contains("activity_codes"));
    }
}
