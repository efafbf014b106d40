//! Delete-one-cluster jackknife for the log desired sex ratio at birth.
//!
//! For one state in one survey, with clusters `u = 1..U`:
//!
//! ```text
//! d_obs   = sum(B w) / sum(G w)
//! d_(-u)  = same ratio with cluster u removed
//! p_u     = U log(d_obs) - (U - 1) log(d_(-u))        (pseudo-values)
//! var     = sum (p_u - mean(p))^2 / (U (U - 1))
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{read_table, FieldReader};

/// Women aged at or above this are excluded before estimation.
pub const MAX_AGE_EXCLUSIVE: f64 = 35.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WomanRecord {
    pub survey_id: String,
    pub state: String,
    pub cluster: i64,
    pub weight: f64,
    pub ideal_boys: Option<f64>,
    pub ideal_girls: Option<f64>,
    pub ideal_total: Option<f64>,
    pub age_years: f64,
    /// Decimal interview date, when the file carries one.
    pub interview_year: Option<f64>,
    /// Source line, used in error messages.
    pub line: u64,
}

impl WomanRecord {
    fn id(&self) -> String {
        format!(
            "{}/{}/cluster {} (line {})",
            self.survey_id, self.state, self.cluster, self.line
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsrbObservation {
    pub state: String,
    pub ref_year: i32,
    pub log_dsrb: f64,
    pub sampling_var: f64,
    pub survey_id: String,
}

/// Desired boys and girls; a woman without a sex preference wants `T/2` of each.
pub fn desired_counts(w: &WomanRecord) -> Result<(f64, f64)> {
    match (w.ideal_boys, w.ideal_girls) {
        (Some(b), Some(g)) => Ok((b, g)),
        (None, None) => match w.ideal_total {
            Some(t) => Ok((t / 2.0, t / 2.0)),
            None => Err(Error::MissingPreference { record: w.id() }),
        },
        _ => Err(Error::MissingPreference { record: w.id() }),
    }
}

/// Point estimate and jackknife variance of log DSRB for one state-survey.
pub fn jackknife_dsrb(women: &[WomanRecord]) -> Result<(f64, f64)> {
    let (survey_id, state) = women
        .first()
        .map(|w| (w.survey_id.clone(), w.state.clone()))
        .unwrap_or_default();
    let unusable = |reason: String| Error::UnusableCell {
        survey_id: survey_id.clone(),
        state: state.clone(),
        reason,
    };

    // Weighted boy and girl totals per cluster.
    let mut by_cluster: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for w in women {
        let (b, g) = desired_counts(w)?;
        let e = by_cluster.entry(w.cluster).or_default();
        e.0 += b * w.weight;
        e.1 += g * w.weight;
    }
    let u = by_cluster.len();
    if u < 2 {
        return Err(unusable(format!("{u} cluster(s); at least 2 required")));
    }
    let (boys, girls) = by_cluster
        .values()
        .fold((0.0, 0.0), |acc, &(b, g)| (acc.0 + b, acc.1 + g));
    if !(girls > 0.0 && boys > 0.0) {
        return Err(unusable("zero weighted boys or girls".into()));
    }
    let log_obs = (boys / girls).ln();

    let uf = u as f64;
    let mut pseudo = Vec::with_capacity(u);
    for (cluster, &(b, g)) in &by_cluster {
        let (nb, ng) = (boys - b, girls - g);
        if !(ng > 0.0 && nb > 0.0) {
            return Err(unusable(format!(
                "leave-out estimate without cluster {cluster} has zero boys or girls"
            )));
        }
        pseudo.push(uf * log_obs - (uf - 1.0) * (nb / ng).ln());
    }
    let mean = pseudo.iter().sum::<f64>() / uf;
    let var = pseudo.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (uf * (uf - 1.0));
    Ok((log_obs, var))
}

/// Fieldwork periods of the four India DHS rounds, used when records carry
/// no interview dates.
pub fn default_fieldwork() -> BTreeMap<String, (f64, f64)> {
    [
        ("DHS1992", (1992.0, 1993.0)),
        ("DHS1998", (1998.0, 1999.0)),
        ("DHS2005", (2005.0, 2006.0)),
        ("DHS2015", (2015.0, 2016.0)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Reference year of a survey: floor of the midpoint of its fieldwork.
pub fn reference_year(
    survey_id: &str,
    women: &[WomanRecord],
    fieldwork: &BTreeMap<String, (f64, f64)>,
) -> Result<i32> {
    let dates: Vec<f64> = women.iter().filter_map(|w| w.interview_year).collect();
    let (lo, hi) = if !dates.is_empty() {
        let lo = dates.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = dates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    } else {
        *fieldwork.get(survey_id).ok_or_else(|| {
            Error::Config(format!(
                "survey `{survey_id}` has no interview dates and no fieldwork period"
            ))
        })?
    };
    Ok(((lo + hi) / 2.0).floor() as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnusableCell {
    pub survey_id: String,
    pub state: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JackknifeOutput {
    pub observations: Vec<DsrbObservation>,
    pub unusable: Vec<UnusableCell>,
}

/// Applies the age filter, groups by (survey, state) and estimates each cell.
pub fn estimate_all(
    records: &[WomanRecord],
    fieldwork: &BTreeMap<String, (f64, f64)>,
) -> Result<JackknifeOutput> {
    let mut survey_groups: BTreeMap<&str, Vec<&WomanRecord>> = BTreeMap::new();
    let mut cells: BTreeMap<(&str, &str), Vec<WomanRecord>> = BTreeMap::new();
    for w in records.iter().filter(|w| w.age_years < MAX_AGE_EXCLUSIVE) {
        survey_groups.entry(&w.survey_id).or_default().push(w);
        cells
            .entry((w.survey_id.as_str(), w.state.as_str()))
            .or_default()
            .push(w.clone());
    }
    let mut ref_years = HashMap::new();
    for (survey, women) in &survey_groups {
        let owned: Vec<WomanRecord> = women.iter().map(|w| (*w).clone()).collect();
        ref_years.insert(*survey, reference_year(survey, &owned, fieldwork)?);
    }
    let mut out = JackknifeOutput::default();
    for ((survey, state), women) in cells {
        match jackknife_dsrb(&women) {
            Ok((log_dsrb, sampling_var)) => out.observations.push(DsrbObservation {
                state: state.to_string(),
                ref_year: ref_years[survey],
                log_dsrb,
                sampling_var,
                survey_id: survey.to_string(),
            }),
            Err(Error::UnusableCell {
                survey_id,
                state,
                reason,
            }) => out.unusable.push(UnusableCell {
                survey_id,
                state,
                reason,
            }),
            Err(e) => return Err(e),
        }
    }
    out.observations
        .sort_by(|a, b| a.state.cmp(&b.state).then(a.ref_year.cmp(&b.ref_year)));
    Ok(out)
}

pub fn load_women(path: &Path) -> Result<Vec<WomanRecord>> {
    let (cols, rows) = read_table(
        path,
        &[
            "survey_id",
            "state",
            "cluster",
            "weight",
            "ideal_boys",
            "ideal_girls",
            "ideal_total",
            "age_years",
        ],
        &["interview_year"],
    )?;
    let file = path.display().to_string();
    let mut out = Vec::with_capacity(rows.len());
    for row in &rows {
        let r = FieldReader { file: &file, row };
        let cluster_raw = r.str(cols[2], "cluster")?;
        let cluster = cluster_raw
            .parse::<i64>()
            .map_err(|_| r.malformed("cluster", "not an integer"))?;
        let weight = r.f64(cols[3], "weight")?;
        if weight < 0.0 {
            return Err(r.malformed("weight", "negative weight"));
        }
        let rec = WomanRecord {
            survey_id: r.str(cols[0], "survey_id")?,
            state: r.str(cols[1], "state")?,
            cluster,
            weight,
            ideal_boys: r.opt_f64(cols[4], "ideal_boys")?,
            ideal_girls: r.opt_f64(cols[5], "ideal_girls")?,
            ideal_total: r.opt_f64(cols[6], "ideal_total")?,
            age_years: r.f64(cols[7], "age_years")?,
            interview_year: r.opt_f64(cols[8], "interview_year")?,
            line: row.line,
        };
        for (v, name) in [
            (rec.ideal_boys, "ideal_boys"),
            (rec.ideal_girls, "ideal_girls"),
            (rec.ideal_total, "ideal_total"),
        ] {
            if v.is_some_and(|v| v < 0.0) {
                return Err(r.malformed(name, "negative count"));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_women(records: &[WomanRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "survey_id",
        "state",
        "cluster",
        "weight",
        "ideal_boys",
        "ideal_girls",
        "ideal_total",
        "age_years",
        "interview_year",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.survey_id.clone(),
            r.state.clone(),
            r.cluster.to_string(),
            r.weight.to_string(),
            opt(r.ideal_boys),
            opt(r.ideal_girls),
            opt(r.ideal_total),
            r.age_years.to_string(),
            opt(r.interview_year),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_dsrb_obs(obs: &[DsrbObservation], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["state", "ref_year", "log_dsrb", "sampling_var", "survey_id"])?;
    for o in obs {
        w.write_record([
            o.state.clone(),
            o.ref_year.to_string(),
            o.log_dsrb.to_string(),
            o.sampling_var.to_string(),
            o.survey_id.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn woman(cluster: i64, b: f64, g: f64, w: f64) -> WomanRecord {
        WomanRecord {
            survey_id: "S".into(),
            state: "PJ".into(),
            cluster,
            weight: w,
            ideal_boys: Some(b),
            ideal_girls: Some(g),
            ideal_total: Some(b + g),
            age_years: 25.0,
            interview_year: None,
            line: 0,
        }
    }

    /// Materializes every leave-one-cluster-out ratio from scratch.
    fn brute_force(women: &[WomanRecord]) -> (f64, f64) {
        let ratio = |keep: &dyn Fn(&WomanRecord) -> bool| {
            let (mut b, mut g) = (0.0, 0.0);
            for w in women.iter().filter(|w| keep(w)) {
                let (bm, gm) = desired_counts(w).unwrap();
                b += bm * w.weight;
                g += gm * w.weight;
            }
            b / g
        };
        let mut clusters: Vec<i64> = women.iter().map(|w| w.cluster).collect();
        clusters.sort();
        clusters.dedup();
        let u = clusters.len() as f64;
        let d_obs = ratio(&|_| true);
        let pseudo: Vec<f64> = clusters
            .iter()
            .map(|&c| u * d_obs.ln() - (u - 1.0) * ratio(&|w| w.cluster != c).ln())
            .collect();
        let m = pseudo.iter().sum::<f64>() / u;
        let v = pseudo.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (u * (u - 1.0));
        (d_obs.ln(), v)
    }

    #[test]
    fn stated_counts_pass_through() {
        assert_eq!(desired_counts(&woman(1, 2.0, 1.0, 1.0)).unwrap(), (2.0, 1.0));
    }

    #[test]
    fn no_preference_splits_total() {
        let mut w = woman(1, 0.0, 0.0, 1.0);
        w.ideal_boys = None;
        w.ideal_girls = None;
        w.ideal_total = Some(4.0);
        assert_eq!(desired_counts(&w).unwrap(), (2.0, 2.0));
        w.ideal_total = Some(3.0);
        assert_eq!(desired_counts(&w).unwrap(), (1.5, 1.5));
        w.ideal_total = None;
        assert!(matches!(desired_counts(&w), Err(Error::MissingPreference { .. })));
    }

    #[test]
    fn homogeneous_clusters_have_zero_variance() {
        let women = [woman(1, 1.0, 1.0, 1.0), woman(2, 1.0, 1.0, 1.0)];
        let (d, v) = jackknife_dsrb(&women).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn two_cluster_fixture() {
        let women = [woman(1, 2.0, 1.0, 1.0), woman(2, 1.0, 1.0, 1.0)];
        let (d, v) = jackknife_dsrb(&women).unwrap();
        assert!((d - 1.5f64.ln()).abs() < 1e-15);
        // 0.120113 from pseudo-values 0.810930 and 0.117783
        assert!((v - 0.120113).abs() < 1e-6, "{v}");
        let (bd, bv) = brute_force(&women);
        assert!((d - bd).abs() < 1e-14 && (v - bv).abs() < 1e-14);

        let doubled: Vec<_> = women.iter().map(|w| WomanRecord { weight: 2.0, ..w.clone() }).collect();
        let (d2, v2) = jackknife_dsrb(&doubled).unwrap();
        assert!((d2 - d).abs() < 1e-15 && (v2 - v).abs() < 1e-15);
    }

    #[test]
    fn single_cluster_is_unusable() {
        let women = [woman(1, 2.0, 1.0, 1.0), woman(1, 1.0, 1.0, 1.0)];
        assert!(matches!(jackknife_dsrb(&women), Err(Error::UnusableCell { .. })));
    }

    #[test]
    fn zero_girl_partial_is_unusable() {
        let women = [woman(1, 2.0, 1.0, 1.0), woman(2, 1.0, 0.0, 1.0)];
        assert!(matches!(jackknife_dsrb(&women), Err(Error::UnusableCell { .. })));
    }

    #[test]
    fn reference_year_uses_midpoint_floor() {
        let fw = default_fieldwork();
        assert_eq!(reference_year("DHS1992", &[], &fw).unwrap(), 1992);
        let mut a = woman(1, 1.0, 1.0, 1.0);
        a.interview_year = Some(2015.1);
        let mut b = a.clone();
        b.interview_year = Some(2016.4);
        assert_eq!(reference_year("X", &[a, b], &fw).unwrap(), 2015);
        assert!(reference_year("X", &[], &fw).is_err());
    }

    #[test]
    fn age_filter_applied() {
        let mut old = woman(1, 5.0, 0.1, 1.0);
        old.age_years = 35.0;
        old.survey_id = "DHS1992".into();
        let mut recs = vec![old];
        for c in 1..=3 {
            let mut w = woman(c, 1.0, 1.0, 1.0);
            w.survey_id = "DHS1992".into();
            recs.push(w);
        }
        let out = estimate_all(&recs, &default_fieldwork()).unwrap();
        assert_eq!(out.observations.len(), 1);
        assert_eq!(out.observations[0].log_dsrb, 0.0);
        assert_eq!(out.observations[0].ref_year, 1992);
    }

    fn fixture() -> impl Strategy<Value = Vec<WomanRecord>> {
        prop::collection::vec(
            (0i64..50, 0.0f64..4.0, 0.5f64..4.0, 0.1f64..3.0),
            2..200,
        )
        .prop_map(|rows| {
            let mut v: Vec<WomanRecord> = rows
                .into_iter()
                .map(|(c, b, g, w)| woman(c, b.round(), g.round().max(1.0), w))
                .collect();
            // Guarantee two clusters with boys.
            v.push(woman(1000, 1.0, 1.0, 1.0));
            v.push(woman(1001, 2.0, 1.0, 1.0));
            v
        })
    }

    proptest! {
        #[test]
        fn agrees_with_brute_force(women in fixture()) {
            let (d, v) = jackknife_dsrb(&women).unwrap();
            let (bd, bv) = brute_force(&women);
            prop_assert!((d - bd).abs() < 1e-12);
            prop_assert!((v - bv).abs() < 1e-10 * (1.0 + bv));
        }

        #[test]
        fn weight_scale_invariant(women in fixture(), k in 0.01f64..100.0) {
            let (d, v) = jackknife_dsrb(&women).unwrap();
            let scaled: Vec<_> = women.iter().map(|w| WomanRecord { weight: w.weight * k, ..w.clone() }).collect();
            let (d2, v2) = jackknife_dsrb(&scaled).unwrap();
            prop_assert!((d - d2).abs() < 1e-12);
            prop_assert!((v - v2).abs() < 1e-10 * (1.0 + v));
        }

        #[test]
        fn cluster_relabel_invariant(women in fixture(), shift in 1i64..1000) {
            let (d, v) = jackknife_dsrb(&women).unwrap();
            let relabeled: Vec<_> = women.iter().map(|w| WomanRecord { cluster: 5000 - w.cluster * 3 + shift, ..w.clone() }).collect();
            let (d2, v2) = jackknife_dsrb(&relabeled).unwrap();
            prop_assert!((d - d2).abs() < 1e-12);
            prop_assert!((v - v2).abs() < 1e-10 * (1.0 + v));
        }
    }
}
