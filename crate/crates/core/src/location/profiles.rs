use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LocationError;
use crate::math;
use crate::rng::Rng;
use crate::ActivityCode;

/// Distance whose logarithm is normal; `mu_km` is the median.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogNormal {
    pub mu_km: f64,
    pub sigma: f64,
}

impl LogNormal {
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mu_km * math::exp(self.sigma * z)
    }

    fn valid(&self) -> bool {
        self.mu_km > 0.0 && self.mu_km.is_finite() && self.sigma >= 0.0 && self.sigma.is_finite()
    }
}

/// Heading deviation: normal on the circle with concentration `kappa`
/// (standard deviation `1 / sqrt(kappa)` radians), folded onto [0, 180].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WrappedNormal {
    pub mu_deg: f64,
    pub kappa: f64,
}

impl WrappedNormal {
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let x = self.mu_deg + (z / math::sqrt(self.kappa)).to_degrees();
        let w = math::rem_euclid(x + 180.0, 360.0) - 180.0;
        w.abs()
    }

    fn valid(&self) -> bool {
        self.mu_deg.is_finite() && self.kappa > 0.0 && self.kappa.is_finite()
    }
}

/// Commute distance for one mandatory type from homes in one sub-region;
/// sub-region `"*"` matches any.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MandatoryCell {
    pub code: ActivityCode,
    pub sub_region: String,
    pub mu_km: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeCell {
    pub code: ActivityCode,
    pub mu_km: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleCell {
    pub code: ActivityCode,
    pub mu_deg: f64,
    pub kappa: f64,
}

pub const ANY_REGION: &str = "*";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingProfiles {
    pub mandatory: Vec<MandatoryCell>,
    pub nonmandatory: Vec<TypeCell>,
    pub angular: Vec<AngleCell>,
    /// Weight of the distance term (per km).
    pub alpha_w: f64,
    /// Weight of the heading term (per degree).
    pub beta_w: f64,
    /// Upper bound on the detour time around a non-mandatory stop, minutes.
    pub t_max: f64,
}

impl SamplingProfiles {
    pub fn validate(&self) -> Result<(), LocationError> {
        let bad = |m: String| Err(LocationError::InvalidProfile(m));
        for c in &self.mandatory {
            if !c.code.is_mandatory() {
                return bad(format!(
                    "mandatory cell for non-mandatory activity {}",
                    c.code
                ));
            }
            if !(LogNormal {
                mu_km: c.mu_km,
                sigma: c.sigma,
            })
            .valid()
            {
                return bad(format!(
                    "distance cell {}/{} needs mu_km > 0 and sigma >= 0",
                    c.code, c.sub_region
                ));
            }
        }
        for c in &self.nonmandatory {
            if !(LogNormal {
                mu_km: c.mu_km,
                sigma: c.sigma,
            })
            .valid()
            {
                return bad(format!(
                    "distance cell {} needs mu_km > 0 and sigma >= 0",
                    c.code
                ));
            }
        }
        for c in &self.angular {
            if !(WrappedNormal {
                mu_deg: c.mu_deg,
                kappa: c.kappa,
            })
            .valid()
            {
                return bad(format!("angular cell {} needs kappa > 0", c.code));
            }
        }
        let w = [self.alpha_w, self.beta_w];
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite())
            || (self.alpha_w == 0.0 && self.beta_w == 0.0)
        {
            return bad("alpha_w and beta_w must be non-negative and not both zero".into());
        }
        if !(self.t_max > 0.0) {
            return bad("t_max must be positive".into());
        }
        Ok(())
    }

    /// Index of the mandatory cell for `code` from homes in `sub_region`,
    /// falling back to the `"*"` cell.
    pub fn mandatory_cell(
        &self,
        code: ActivityCode,
        sub_region: &str,
    ) -> Result<usize, LocationError> {
        let find = |r: &str| {
            self.mandatory
                .iter()
                .position(|c| c.code == code && c.sub_region == r)
        };
        find(sub_region)
            .or_else(|| find(ANY_REGION))
            .ok_or_else(|| LocationError::MissingProfile {
                code,
                sub_region: sub_region.into(),
            })
    }

    pub fn nonmandatory_cell(&self, code: ActivityCode) -> Result<usize, LocationError> {
        self.nonmandatory
            .iter()
            .position(|c| c.code == code)
            .ok_or_else(|| LocationError::MissingProfile {
                code,
                sub_region: ANY_REGION.into(),
            })
    }

    pub fn mandatory_distance(&self, cell: usize) -> LogNormal {
        let c = &self.mandatory[cell];
        LogNormal {
            mu_km: c.mu_km,
            sigma: c.sigma,
        }
    }

    pub fn nonmandatory_distance(&self, cell: usize) -> LogNormal {
        let c = &self.nonmandatory[cell];
        LogNormal {
            mu_km: c.mu_km,
            sigma: c.sigma,
        }
    }

    pub fn angle(&self, code: ActivityCode) -> Result<WrappedNormal, LocationError> {
        self.angular
            .iter()
            .find(|c| c.code == code)
            .map(|c| WrappedNormal {
                mu_deg: c.mu_deg,
                kappa: c.kappa,
            })
            .ok_or_else(|| LocationError::MissingProfile {
                code,
                sub_region: ANY_REGION.into(),
            })
    }
}
