//! Claims feature pipeline: CSV ingestion, table merging, provider label
//! propagation, quarterly bucketing with first-order statistics, provider
//! level splitting, standardization and random undersampling.

mod features;
mod schema;
mod split;
mod stats;

pub use features::{
    build_feature_matrix, bucketize, bucketize_all, numeric_field_names, read_features_csv,
    read_sequences_csv, write_features_csv, write_sequences_csv, FeatureMatrix, ProviderSequence,
    Vocab,
};
pub use schema::{
    label_providers, merge_claims, propagate_labels, read_claims_csv, read_leie_csv,
    read_providers_csv, ClaimRecord, ClaimsTable, ColumnMap, LeieEntry, ProviderDetail, Source,
};
pub use split::{random_undersample, split_by_provider, Standardizer};
pub use stats::{first_order_stats, STAT_NAMES};

use crate::error::{Error, Result};
use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

/// Study window: whole calendar years starting at `start_year`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start_year: i32,
    pub years: usize,
}

impl StudyWindow {
    pub fn quarters(&self) -> usize {
        4 * self.years
    }

    /// Calendar-quarter index of a date within the window
    /// (months 1-3, 4-6, 7-9, 10-12).
    pub fn quarter_index(&self, date: NaiveDate) -> Result<usize> {
        let year_off = date.year() - self.start_year;
        if year_off < 0 || year_off as usize >= self.years {
            return Err(Error::Range(format!(
                "claim date {date} outside study window {}..{}",
                self.start_year,
                self.start_year + self.years as i32 - 1
            )));
        }
        Ok(year_off as usize * 4 + (date.month0() as usize) / 3)
    }

    pub fn year_index(&self, date: NaiveDate) -> Result<usize> {
        Ok(self.quarter_index(date)? / 4)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_indexing() {
        let w = StudyWindow { start_year: 2017, years: 3 };
        assert_eq!(w.quarters(), 12);
        let d = NaiveDate::from_ymd_opt(2017, 1, 15).unwrap();
        assert_eq!(w.quarter_index(d).unwrap(), 0);
        let d = NaiveDate::from_ymd_opt(2018, 7, 1).unwrap();
        assert_eq!(w.quarter_index(d).unwrap(), 6);
        let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        assert!(w.quarter_index(d).is_err());
    }
}
