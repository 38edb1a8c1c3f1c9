//! CMS-shaped CSV ingestion, table merging and label propagation.

use crate::error::{Error, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Inpatient,
    Outpatient,
}

/// One merged claim row.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimRecord {
    pub provider_id: String,
    pub beneficiary_id: String,
    pub claim_id: String,
    pub claim_date: NaiveDate,
    pub reimbursed_amount: f64,
    pub deductible_paid: f64,
    pub source: Source,
    pub extra: BTreeMap<String, f64>,
    pub label: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderDetail {
    pub npi: String,
    pub gender: String,
    pub credentials: String,
    pub state: String,
}

impl ProviderDetail {
    /// Sentinel detail used when a claim's NPI has no provider row.
    pub fn unknown(npi: &str) -> Self {
        ProviderDetail {
            npi: npi.to_string(),
            gender: "UNK".into(),
            credentials: "UNK".into(),
            state: "UNK".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeieEntry {
    pub provider_id: String,
    pub exclusion_type: String,
    pub exclusion_date: NaiveDate,
}

/// Merged corpus: claims plus the provider-detail lookup.
#[derive(Debug, Clone)]
pub struct ClaimsTable {
    pub claims: Vec<ClaimRecord>,
    pub providers: BTreeMap<String, ProviderDetail>,
    /// Claims whose NPI had no provider-detail row (detail was imputed).
    pub unmatched_providers: usize,
}

/// Column-name mapping; defaults follow the CMS release schema. Configurable
/// to tolerate schema drift across release years.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub claim_id: String,
    pub beneficiary_id: String,
    pub provider_id: String,
    pub claim_date: String,
    pub reimbursed: String,
    pub deductible: String,
    pub gender: String,
    pub credentials: String,
    pub state: String,
    pub leie_npi: String,
    pub leie_excl_type: String,
    pub leie_excl_date: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            claim_id: "ClaimID".into(),
            beneficiary_id: "BeneID".into(),
            provider_id: "NPI".into(),
            claim_date: "ClaimDate".into(),
            reimbursed: "InscClaimAmtReimbursed".into(),
            deductible: "DeductibleAmtPaid".into(),
            gender: "Gender".into(),
            credentials: "Credentials".into(),
            state: "State".into(),
            leie_npi: "NPI".into(),
            leie_excl_type: "EXCLTYPE".into(),
            leie_excl_date: "EXCLDATE".into(),
        }
    }
}

fn col_index(headers: &csv::StringRecord, name: &str, table: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema {
            table: table.to_string(),
            column: name.to_string(),
        })
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y%m%d"))
        .ok()
}

/// Reads one claims CSV (inpatient or outpatient shape). Columns beyond the
/// mapped ones that parse as numbers become `extra` features.
pub fn read_claims_csv(path: &Path, map: &ColumnMap, source: Source) -> Result<Vec<ClaimRecord>> {
    let table = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let ci = col_index(&headers, &map.claim_id, &table)?;
    let bi = col_index(&headers, &map.beneficiary_id, &table)?;
    let pi = col_index(&headers, &map.provider_id, &table)?;
    let di = col_index(&headers, &map.claim_date, &table)?;
    let ri = col_index(&headers, &map.reimbursed, &table)?;
    let dd = col_index(&headers, &map.deductible, &table)?;
    let known = [ci, bi, pi, di, ri, dd];
    let mut claims = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let date = parse_date(&rec[di]).ok_or_else(|| Error::Schema {
            table: table.clone(),
            column: map.claim_date.clone(),
        })?;
        let mut extra = BTreeMap::new();
        for (idx, field) in rec.iter().enumerate() {
            if !known.contains(&idx) {
                if let Ok(v) = field.parse::<f64>() {
                    extra.insert(headers[idx].to_string(), v);
                }
            }
        }
        claims.push(ClaimRecord {
            provider_id: rec[pi].to_string(),
            beneficiary_id: rec[bi].to_string(),
            claim_id: rec[ci].to_string(),
            claim_date: date,
            reimbursed_amount: rec[ri].parse().unwrap_or(f64::NAN),
            deductible_paid: rec[dd].parse().unwrap_or(f64::NAN),
            source,
            extra,
            label: None,
        });
    }
    Ok(claims)
}

pub fn read_providers_csv(path: &Path, map: &ColumnMap) -> Result<Vec<ProviderDetail>> {
    let table = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let ni = col_index(&headers, &map.provider_id, &table)?;
    let gi = col_index(&headers, &map.gender, &table)?;
    let ci = col_index(&headers, &map.credentials, &table)?;
    let si = col_index(&headers, &map.state, &table)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(ProviderDetail {
            npi: rec[ni].to_string(),
            gender: rec[gi].to_string(),
            credentials: rec[ci].to_string(),
            state: rec[si].to_string(),
        });
    }
    Ok(out)
}

pub fn read_leie_csv(path: &Path, map: &ColumnMap) -> Result<Vec<LeieEntry>> {
    let table = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let ni = col_index(&headers, &map.leie_npi, &table)?;
    let ti = col_index(&headers, &map.leie_excl_type, &table)?;
    let di = col_index(&headers, &map.leie_excl_date, &table)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec[ni].is_empty() {
            return Err(Error::Schema {
                table: table.clone(),
                column: map.leie_npi.clone(),
            });
        }
        let date = parse_date(&rec[di]).ok_or_else(|| Error::Schema {
            table: table.clone(),
            column: map.leie_excl_date.clone(),
        })?;
        out.push(LeieEntry {
            provider_id: rec[ni].to_string(),
            exclusion_type: rec[ti].to_string(),
            exclusion_date: date,
        });
    }
    Ok(out)
}

/// Union of inpatient and outpatient claims joined with provider detail on
/// NPI. Unmatched providers are imputed with a sentinel category; missing
/// numeric values are imputed with the column median.
pub fn merge_claims(
    inpatient: Vec<ClaimRecord>,
    outpatient: Vec<ClaimRecord>,
    providers: Vec<ProviderDetail>,
) -> Result<ClaimsTable> {
    let mut claims = inpatient;
    claims.extend(outpatient);
    let mut detail: BTreeMap<String, ProviderDetail> =
        providers.into_iter().map(|p| (p.npi.clone(), p)).collect();
    let mut unmatched = 0usize;
    let claim_npis: BTreeSet<String> = claims.iter().map(|c| c.provider_id.clone()).collect();
    for npi in &claim_npis {
        if !detail.contains_key(npi) {
            detail.insert(npi.clone(), ProviderDetail::unknown(npi));
            unmatched += 1;
        }
    }
    impute_numeric_medians(&mut claims);
    // claim ids must be unique after the union
    let mut ids = BTreeSet::new();
    for c in &claims {
        if !ids.insert(c.claim_id.clone()) {
            return Err(Error::Consistency(format!(
                "duplicate claim id {}",
                c.claim_id
            )));
        }
    }
    Ok(ClaimsTable {
        claims,
        providers: detail,
        unmatched_providers: unmatched,
    })
}

fn median(sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn impute_numeric_medians(claims: &mut [ClaimRecord]) {
    for field in 0..2 {
        let mut vals: Vec<f64> = claims
            .iter()
            .map(|c| if field == 0 { c.reimbursed_amount } else { c.deductible_paid })
            .filter(|v| v.is_finite())
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = median(&vals);
        for c in claims.iter_mut() {
            let v = if field == 0 {
                &mut c.reimbursed_amount
            } else {
                &mut c.deductible_paid
            };
            if !v.is_finite() {
                *v = med;
            }
        }
    }
}

/// Provider fraud labels: an NPI is fraudulent iff it appears in the LEIE.
/// With `exclusion_cutoff` set, only entries dated on or before the cutoff
/// count (the default join ignores the date entirely).
pub fn label_providers(
    table: &ClaimsTable,
    leie: &[LeieEntry],
    exclusion_cutoff: Option<NaiveDate>,
) -> BTreeMap<String, bool> {
    let excluded: BTreeSet<&str> = leie
        .iter()
        .filter(|e| exclusion_cutoff.map_or(true, |d| e.exclusion_date <= d))
        .map(|e| e.provider_id.as_str())
        .collect();
    table
        .providers
        .keys()
        .map(|npi| (npi.clone(), excluded.contains(npi.as_str())))
        .collect()
}

/// Claim label = provider label ("if a provider is fraudster, all its claims
/// are also fraudulent").
pub fn propagate_labels(
    labels: &BTreeMap<String, bool>,
    table: &mut ClaimsTable,
) -> Result<()> {
    for c in &mut table.claims {
        let l = labels.get(&c.provider_id).ok_or_else(|| {
            Error::Consistency(format!("provider {} has no label", c.provider_id))
        })?;
        c.label = Some(*l);
    }
    Ok(())
}
