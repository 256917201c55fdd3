use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{cosine_sim, jsd, marginals_from_chains, EvalError, MarginalKind};
use crate::ActivityChain;

pub struct NamedChains<'a> {
    pub name: &'a str,
    pub chains: &'a [ActivityChain],
}

pub struct NamedMatrix<'a> {
    pub name: &'a str,
    pub matrix: &'a [Vec<f64>],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsdRow {
    pub a: String,
    pub b: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineRow {
    pub a: String,
    pub b: String,
    pub value: f64,
}

/// Pairwise comparison document. Maps are ordered so that serialization is
/// byte-stable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub datasets: Vec<String>,
    /// marginal name → one row per dataset pair.
    pub jsd: BTreeMap<String, Vec<JsdRow>>,
    pub cosine: Vec<CosineRow>,
    /// dataset → marginal name → normalized bins.
    pub histograms: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

pub fn build_report(
    chain_sets: &[NamedChains<'_>],
    matrices: &[NamedMatrix<'_>],
) -> Result<Report, EvalError> {
    let mut marginals = Vec::with_capacity(chain_sets.len());
    let mut histograms = BTreeMap::new();
    for set in chain_sets {
        let ms = marginals_from_chains(set.chains)?;
        histograms.insert(
            set.name.into(),
            ms.iter()
                .map(|m| (String::from(m.kind.name()), m.bins.clone()))
                .collect(),
        );
        marginals.push(ms);
    }
    let mut table: BTreeMap<String, Vec<JsdRow>> = BTreeMap::new();
    for (k, kind) in MarginalKind::ALL.iter().enumerate() {
        let rows = table.entry(kind.name().into()).or_default();
        for i in 0..chain_sets.len() {
            for j in i + 1..chain_sets.len() {
                rows.push(JsdRow {
                    a: chain_sets[i].name.into(),
                    b: chain_sets[j].name.into(),
                    value: jsd(&marginals[i][k], &marginals[j][k])?,
                });
            }
        }
    }
    let mut cosine = Vec::new();
    for i in 0..matrices.len() {
        for j in i + 1..matrices.len() {
            cosine.push(CosineRow {
                a: matrices[i].name.into(),
                b: matrices[j].name.into(),
                value: cosine_sim(matrices[i].matrix, matrices[j].matrix)?,
            });
        }
    }
    let mut datasets: Vec<String> = chain_sets.iter().map(|s| s.name.into()).collect();
    datasets.extend(matrices.iter().map(|m| String::from(m.name)));
    Ok(Report {
        datasets,
        jsd: table,
        cosine,
        histograms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Activity, ActivityCode};
    use alloc::vec;

    fn all(code: ActivityCode) -> Vec<ActivityChain> {
        vec![ActivityChain::new("x", 0, vec![Activity::new(code, 0, 1440)]).unwrap()]
    }

    #[test]
    fn self_and_disjoint() {
        let h = all(ActivityCode::HOME);
        let w = all(ActivityCode::WORK);
        let r = build_report(
            &[
                NamedChains {
                    name: "h",
                    chains: &h,
                },
                NamedChains {
                    name: "h2",
                    chains: &h,
                },
                NamedChains {
                    name: "w",
                    chains: &w,
                },
            ],
            &[],
        )
        .unwrap();
        for rows in r.jsd.values() {
            assert_eq!(rows.len(), 3);
            assert_eq!(rows[0].value, 0.0);
        }
        assert!((r.jsd["type"][1].value - core::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(r.histograms.len(), 3);
    }
}
