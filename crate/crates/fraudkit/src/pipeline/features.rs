//! Quarterly bucketing and claim-level feature assembly.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::pipeline::schema::{ClaimRecord, ClaimsTable};
use crate::pipeline::stats::{first_order_stats, STAT_NAMES};
use crate::pipeline::StudyWindow;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

/// Per-provider time series of quarterly first-order feature vectors plus a
/// provider-level yearly summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderSequence {
    pub provider_id: String,
    pub label: bool,
    /// T x F, T = 4 * years, F = 8 * number of aggregated numeric fields.
    pub quarters: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
    /// Per-year aggregates: 8 stats per numeric field plus the distinct
    /// beneficiary count, concatenated over years.
    pub summary: Vec<f64>,
}

/// Names of the numeric claim fields aggregated by the pipeline, in column
/// order: the two core amounts followed by any extra numeric columns found
/// in the input (sorted by name).
pub fn numeric_field_names(claims: &[ClaimRecord]) -> Vec<String> {
    let mut names = vec!["reimbursed".to_string(), "deductible".to_string()];
    let mut extras: BTreeSet<String> = BTreeSet::new();
    for c in claims {
        extras.extend(c.extra.keys().cloned());
    }
    names.extend(extras);
    names
}

fn field_value(c: &ClaimRecord, name: &str) -> f64 {
    match name {
        "reimbursed" => c.reimbursed_amount,
        "deductible" => c.deductible_paid,
        other => c.extra.get(other).copied().unwrap_or(0.0),
    }
}

/// Groups one provider's claims by calendar quarter and computes the 8
/// first-order statistics per numeric field per quarter. Empty quarters are
/// zero-filled with mask=false. The yearly summary additionally carries the
/// distinct-beneficiary count per year.
pub fn bucketize(
    provider_id: &str,
    label: bool,
    claims: &[&ClaimRecord],
    fields: &[String],
    window: &StudyWindow,
) -> Result<ProviderSequence> {
    let t = window.quarters();
    let mut by_quarter: Vec<Vec<&ClaimRecord>> = vec![Vec::new(); t];
    let mut by_year: Vec<Vec<&ClaimRecord>> = vec![Vec::new(); window.years];
    for c in claims {
        let q = window.quarter_index(c.claim_date)?;
        by_quarter[q].push(c);
        by_year[q / 4].push(c);
    }
    let mut quarters = Vec::with_capacity(t);
    let mut mask = Vec::with_capacity(t);
    for bucket in &by_quarter {
        let mut feats = Vec::with_capacity(8 * fields.len());
        for f in fields {
            let vals: Vec<f64> = bucket.iter().map(|c| field_value(c, f)).collect();
            feats.extend_from_slice(&first_order_stats(&vals));
        }
        quarters.push(feats);
        mask.push(!bucket.is_empty());
    }
    let mut summary = Vec::with_capacity(window.years * (8 * fields.len() + 1));
    for bucket in &by_year {
        for f in fields {
            let vals: Vec<f64> = bucket.iter().map(|c| field_value(c, f)).collect();
            summary.extend_from_slice(&first_order_stats(&vals));
        }
        let benes: BTreeSet<&str> = bucket.iter().map(|c| c.beneficiary_id.as_str()).collect();
        summary.push(benes.len() as f64);
    }
    Ok(ProviderSequence {
        provider_id: provider_id.to_string(),
        label,
        quarters,
        mask,
        summary,
    })
}

/// Bucketizes every provider in the table, keyed and ordered by provider id.
pub fn bucketize_all(
    table: &ClaimsTable,
    window: &StudyWindow,
) -> Result<BTreeMap<String, ProviderSequence>> {
    let fields = numeric_field_names(&table.claims);
    let mut by_provider: BTreeMap<&str, Vec<&ClaimRecord>> = BTreeMap::new();
    for c in &table.claims {
        by_provider.entry(&c.provider_id).or_default().push(c);
    }
    let mut out = BTreeMap::new();
    for (npi, claims) in by_provider {
        let label = claims[0].label.unwrap_or(false);
        out.insert(
            npi.to_string(),
            bucketize(npi, label, &claims, &fields, window)?,
        );
    }
    Ok(out)
}

/// One-hot vocabulary for categorical provider fields, persisted alongside
/// standardization statistics for reproducible inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub gender: Vec<String>,
    pub credentials: Vec<String>,
    pub state: Vec<String>,
}

impl Vocab {
    pub fn collect(table: &ClaimsTable) -> Vocab {
        let mut gender = BTreeSet::new();
        let mut credentials = BTreeSet::new();
        let mut state = BTreeSet::new();
        for p in table.providers.values() {
            gender.insert(p.gender.clone());
            credentials.insert(p.credentials.clone());
            state.insert(p.state.clone());
        }
        Vocab {
            gender: gender.into_iter().collect(),
            credentials: credentials.into_iter().collect(),
            state: state.into_iter().collect(),
        }
    }
}

fn one_hot(value: &str, vocab: &[String], out: &mut Vec<f64>) {
    for v in vocab {
        out.push(if v == value { 1.0 } else { 0.0 });
    }
}

/// Claim-level feature rows with parallel labels and provider ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub rows: Matrix,
    pub labels: Vec<f64>,
    pub provider_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: self.columns.clone(),
            rows: self.rows.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            provider_ids: idx.iter().map(|&i| self.provider_ids[i].clone()).collect(),
        }
    }
}

/// Assembles the claim-level feature matrix: numeric claim fields, a source
/// flag, one-hot provider categoricals and (optionally) the provider's
/// flattened yearly aggregates.
pub fn build_feature_matrix(
    table: &ClaimsTable,
    sequences: &BTreeMap<String, ProviderSequence>,
    vocab: &Vocab,
    window: &StudyWindow,
    include_provider_features: bool,
) -> Result<FeatureMatrix> {
    let fields = numeric_field_names(&table.claims);
    let mut columns: Vec<String> = fields.clone();
    columns.push("is_inpatient".into());
    for g in &vocab.gender {
        columns.push(format!("gender_{g}"));
    }
    for c in &vocab.credentials {
        columns.push(format!("credentials_{c}"));
    }
    for s in &vocab.state {
        columns.push(format!("state_{s}"));
    }
    if include_provider_features {
        for y in 0..window.years {
            for f in &fields {
                for s in STAT_NAMES {
                    columns.push(format!("prov_y{y}_{f}_{s}"));
                }
            }
            columns.push(format!("prov_y{y}_bene_count"));
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(table.claims.len());
    let mut labels = Vec::with_capacity(table.claims.len());
    let mut provider_ids = Vec::with_capacity(table.claims.len());
    for c in &table.claims {
        let mut row = Vec::with_capacity(columns.len());
        for f in &fields {
            row.push(field_value(c, f));
        }
        row.push(match c.source {
            crate::pipeline::Source::Inpatient => 1.0,
            crate::pipeline::Source::Outpatient => 0.0,
        });
        let detail = table.providers.get(&c.provider_id).ok_or_else(|| {
            Error::Consistency(format!("provider {} missing detail", c.provider_id))
        })?;
        one_hot(&detail.gender, &vocab.gender, &mut row);
        one_hot(&detail.credentials, &vocab.credentials, &mut row);
        one_hot(&detail.state, &vocab.state, &mut row);
        if include_provider_features {
            let seq = sequences.get(&c.provider_id).ok_or_else(|| {
                Error::Consistency(format!("provider {} missing sequence", c.provider_id))
            })?;
            row.extend_from_slice(&seq.summary);
        }
        if row.len() != columns.len() {
            return Err(Error::Dimension("feature row width mismatch".into()));
        }
        rows.push(row);
        labels.push(f64::from(c.label.ok_or_else(|| {
            Error::Consistency("claim has no propagated label".into())
        })?));
        provider_ids.push(c.provider_id.clone());
    }
    Ok(FeatureMatrix {
        columns,
        rows: Matrix::from_rows(&rows)?,
        labels,
        provider_ids,
    })
}

/// Writes the featurized claim-level dataset: `provider_id,label,<columns…>`.
pub fn write_features_csv(fm: &FeatureMatrix, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "provider_id,label")?;
    for c in &fm.columns {
        write!(out, ",{c}")?;
    }
    writeln!(out)?;
    for i in 0..fm.rows.rows() {
        write!(out, "{},{}", fm.provider_ids[i], fm.labels[i] as i64)?;
        for v in fm.rows.row(i) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_features_csv(path: &Path) -> Result<FeatureMatrix> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "provider_id" || &headers[1] != "label" {
        return Err(Error::Schema {
            table: path.display().to_string(),
            column: "provider_id,label".into(),
        });
    }
    let columns: Vec<String> = headers.iter().skip(2).map(String::from).collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut provider_ids = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        provider_ids.push(rec[0].to_string());
        labels.push(rec[1].parse::<f64>().map_err(|_| Error::Schema {
            table: path.display().to_string(),
            column: "label".into(),
        })?);
        let row: Vec<f64> = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().unwrap_or(f64::NAN))
            .collect();
        rows.push(row);
    }
    Ok(FeatureMatrix {
        columns,
        rows: Matrix::from_rows(&rows)?,
        labels,
        provider_ids,
    })
}

/// Writes one row per provider-quarter:
/// `provider_id,label,quarter,mask,<f0..>`.
pub fn write_sequences_csv(
    sequences: &BTreeMap<String, ProviderSequence>,
    path: &Path,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let width = sequences
        .values()
        .next()
        .map(|s| s.quarters[0].len())
        .unwrap_or(0);
    write!(out, "provider_id,label,quarter,mask")?;
    for i in 0..width {
        write!(out, ",f{i}")?;
    }
    writeln!(out)?;
    for seq in sequences.values() {
        for (q, feats) in seq.quarters.iter().enumerate() {
            write!(
                out,
                "{},{},{},{}",
                seq.provider_id,
                seq.label as i64,
                q,
                seq.mask[q] as i64
            )?;
            for v in feats {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn read_sequences_csv(path: &Path) -> Result<BTreeMap<String, ProviderSequence>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 5 || &headers[0] != "provider_id" {
        return Err(Error::Schema {
            table: path.display().to_string(),
            column: "provider_id".into(),
        });
    }
    let mut out: BTreeMap<String, ProviderSequence> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec[0].to_string();
        let label = &rec[1] == "1";
        let mask = &rec[3] == "1";
        let feats: Vec<f64> = rec
            .iter()
            .skip(4)
            .map(|v| v.parse::<f64>().unwrap_or(f64::NAN))
            .collect();
        let entry = out.entry(id.clone()).or_insert_with(|| ProviderSequence {
            provider_id: id,
            label,
            quarters: Vec::new(),
            mask: Vec::new(),
            summary: Vec::new(),
        });
        entry.quarters.push(feats);
        entry.mask.push(mask);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::schema::Source;
    use chrono::NaiveDate;

    fn claim(id: &str, date: (i32, u32, u32), amount: f64) -> ClaimRecord {
        ClaimRecord {
            provider_id: "p1".into(),
            beneficiary_id: format!("b{id}"),
            claim_id: id.into(),
            claim_date: NaiveDate::from_ymd_opt(date.0, date.1, date.2).unwrap(),
            reimbursed_amount: amount,
            deductible_paid: amount / 10.0,
            source: Source::Outpatient,
            extra: BTreeMap::new(),
            label: Some(false),
        }
    }

    #[test]
    fn q1_only_mask() {
        let w = StudyWindow { start_year: 2017, years: 1 };
        let claims = vec![claim("c1", (2017, 2, 1), 100.0), claim("c2", (2017, 3, 1), 50.0)];
        let refs: Vec<&ClaimRecord> = claims.iter().collect();
        let fields = vec!["reimbursed".to_string(), "deductible".to_string()];
        let seq = bucketize("p1", false, &refs, &fields, &w).unwrap();
        assert_eq!(seq.mask, vec![true, false, false, false]);
        assert_eq!(seq.quarters.len(), 4);
        assert_eq!(seq.quarters[0].len(), 16);
    }

    #[test]
    fn three_year_window_has_twelve_quarters() {
        let w = StudyWindow { start_year: 2017, years: 3 };
        let claims = vec![claim("c1", (2018, 5, 1), 10.0)];
        let refs: Vec<&ClaimRecord> = claims.iter().collect();
        let seq = bucketize("p1", false, &refs, &["reimbursed".to_string()], &w).unwrap();
        assert_eq!(seq.quarters.len(), 12);
        assert!(seq.mask[5]);
    }

    #[test]
    fn q2_mean_matches_hand_computation() {
        let w = StudyWindow { start_year: 2017, years: 1 };
        let claims = vec![
            claim("c1", (2017, 4, 2), 120.0),
            claim("c2", (2017, 5, 9), 80.0),
            claim("c3", (2017, 6, 30), 250.0),
            claim("c4", (2017, 1, 1), 999.0), // different quarter
        ];
        let refs: Vec<&ClaimRecord> = claims.iter().collect();
        let seq = bucketize("p1", false, &refs, &["reimbursed".to_string()], &w).unwrap();
        // Q2 mean of reimbursed = (120+80+250)/3
        assert!((seq.quarters[1][0] - 150.0).abs() < 1e-10);
        // sum
        assert!((seq.quarters[1][3] - 450.0).abs() < 1e-10);
    }

    #[test]
    fn date_outside_window_is_range_error() {
        let w = StudyWindow { start_year: 2017, years: 1 };
        let claims = vec![claim("c1", (2016, 12, 31), 1.0)];
        let refs: Vec<&ClaimRecord> = claims.iter().collect();
        assert!(bucketize("p1", false, &refs, &["reimbursed".to_string()], &w).is_err());
    }

    #[test]
    fn distinct_beneficiary_count_in_summary() {
        let w = StudyWindow { start_year: 2017, years: 1 };
        let mut claims = vec![
            claim("c1", (2017, 2, 1), 10.0),
            claim("c2", (2017, 7, 1), 20.0),
        ];
        claims[1].beneficiary_id = claims[0].beneficiary_id.clone();
        let refs: Vec<&ClaimRecord> = claims.iter().collect();
        let seq = bucketize("p1", false, &refs, &["reimbursed".to_string()], &w).unwrap();
        // summary layout: 8 stats + bene count per year
        assert_eq!(seq.summary.len(), 9);
        assert_eq!(seq.summary[8], 1.0);
    }
}
