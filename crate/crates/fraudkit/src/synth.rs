//! Deterministic generator of CMS-shaped inpatient/outpatient/provider/LEIE
//! tables with injected fraudulent-provider behavior.
//!
//! Claim counts per provider-quarter are negative-binomial-shaped (gamma
//! mixed Poisson) and amounts log-normal. The fraud signature is a joint
//! inflation of amounts and volume plus quarter-to-quarter burstiness; a
//! configurable fraction of fraud providers receive only the temporal
//! burstiness signature so that per-claim features carry no signal for them.

use crate::error::{Error, Result};
use crate::pipeline::StudyWindow;
use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_providers: usize,
    pub fraud_rate: f64,
    pub years: usize,
    pub start_year: i32,
    /// Mean claims per provider per quarter (before fraud inflation).
    pub claims_per_quarter_mean: f64,
    /// Gamma shape of the per-provider rate multiplier; lower = heavier tail.
    pub claims_dispersion: f64,
    pub amount_log_mean: f64,
    /// Claim-to-claim log-amount spread within a provider.
    pub amount_log_sigma: f64,
    /// Provider-to-provider spread of the characteristic billing level
    /// (log-scale). This is what makes a provider's quarters look alike.
    pub amount_level_sigma: f64,
    /// Multiplier on fraud providers' claim amounts.
    pub amount_inflation: f64,
    /// Multiplier on fraud providers' claim volume.
    pub volume_inflation: f64,
    /// Hot-quarter rate multiplier for fraud providers; 1.0 disables bursts.
    pub burstiness: f64,
    /// Fraction of fraud providers that carry only the temporal signature.
    pub temporal_only_fraction: f64,
    pub inpatient_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_providers: 5000,
            fraud_rate: 0.005,
            years: 3,
            start_year: 2017,
            claims_per_quarter_mean: 1.2,
            claims_dispersion: 2.0,
            amount_log_mean: 5.7, // median ~ 300
            amount_log_sigma: 0.12,
            amount_level_sigma: 0.55,
            amount_inflation: 4.0,
            volume_inflation: 2.0,
            burstiness: 3.0,
            temporal_only_fraction: 0.10,
            inpatient_fraction: 0.3,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn window(&self) -> StudyWindow {
        StudyWindow {
            start_year: self.start_year,
            years: self.years,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0 < self.fraud_rate && self.fraud_rate < 1.0) {
            return Err(Error::Parameter("fraud_rate must be in (0,1)".into()));
        }
        if self.n_providers < 1 || self.years < 1 {
            return Err(Error::Parameter("counts must be >= 1".into()));
        }
        if self.claims_per_quarter_mean <= 0.0 || self.claims_dispersion <= 0.0 {
            return Err(Error::Parameter("claim count parameters must be positive".into()));
        }
        // 1.0 = no injected effect (the null-signal control); below that the
        // "inflation" would deflate and break the labeling premise
        if self.amount_inflation < 1.0 || self.volume_inflation < 1.0 || self.burstiness < 1.0 {
            return Err(Error::Parameter("fraud multipliers must be >= 1".into()));
        }
        if self.amount_level_sigma < 0.0 {
            return Err(Error::Parameter("amount_level_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthClaim {
    pub claim_id: String,
    pub beneficiary_id: String,
    pub npi: String,
    pub date: NaiveDate,
    pub reimbursed: f64,
    pub deductible: f64,
    pub inpatient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthProvider {
    pub npi: String,
    pub first_name: String,
    pub last_name: String,
    pub gender: String,
    pub credentials: String,
    pub state: String,
    pub fraud: bool,
    pub temporal_only: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthLeie {
    pub npi: String,
    pub city: String,
    pub state: String,
    pub exclusion_type: String,
    pub exclusion_date: NaiveDate,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub claims: Vec<SynthClaim>,
    pub providers: Vec<SynthProvider>,
    pub leie: Vec<SynthLeie>,
}

const STATES: [&str; 10] = ["NY", "CA", "TX", "FL", "OH", "PA", "IL", "MO", "WA", "GA"];
const CREDENTIALS: [&str; 6] = ["MD", "DO", "NP", "PA", "DDS", "DPM"];
const EXCL_TYPES: [&str; 4] = ["1128a1", "1128b4", "1128b5", "1128b7"];
const FIRST_NAMES: [&str; 8] = ["ALEX", "SAM", "JORDAN", "TAYLOR", "CASEY", "ROBIN", "DANA", "LEE"];
const LAST_NAMES: [&str; 8] = ["SMITH", "JONES", "LEE", "BROWN", "DAVIS", "MILLER", "WILSON", "MOORE"];

fn quarter_bounds(start_year: i32, q: usize) -> (NaiveDate, NaiveDate) {
    let year = start_year + (q / 4) as i32;
    let month = 3 * (q % 4) as u32 + 1;
    let start = NaiveDate::from_ymd_opt(year, month, 1).expect("valid date");
    let end = if month == 10 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1).expect("valid date")
    } else {
        NaiveDate::from_ymd_opt(year, month + 3, 1).expect("valid date")
    };
    (start, end)
}

/// Generates the corpus. Same seed, same config: identical output.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng: ChaCha20Rng = crate::seed::rng_for(cfg.seed, "synth");
    let n = cfg.n_providers;
    let mut n_fraud = (n as f64 * cfg.fraud_rate).round() as usize;
    if n_fraud == 0 {
        eprintln!("warning: fraud_rate rounds to 0 fraud providers; forcing 1");
        n_fraud = 1;
    }
    // random fraud subset
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
    let fraud_set: std::collections::BTreeSet<usize> =
        order[..n_fraud].iter().copied().collect();
    let n_temporal = (n_fraud as f64 * cfg.temporal_only_fraction).round() as usize;
    let temporal_set: std::collections::BTreeSet<usize> =
        order[..n_temporal.min(n_fraud)].iter().copied().collect();

    let rate_mix = Gamma::new(cfg.claims_dispersion, 1.0 / cfg.claims_dispersion)
        .map_err(|e| Error::Parameter(format!("gamma: {e}")))?;
    let quarters = 4 * cfg.years;

    let mut providers = Vec::with_capacity(n);
    let mut claims = Vec::new();
    let mut leie = Vec::new();
    let mut claim_seq = 0usize;

    for p in 0..n {
        let npi = format!("1{p:09}");
        let fraud = fraud_set.contains(&p);
        let temporal_only = temporal_set.contains(&p);
        providers.push(SynthProvider {
            npi: npi.clone(),
            first_name: FIRST_NAMES[rng.gen_range(0..FIRST_NAMES.len())].into(),
            last_name: LAST_NAMES[rng.gen_range(0..LAST_NAMES.len())].into(),
            gender: if rng.gen_bool(0.5) { "F".into() } else { "M".into() },
            credentials: CREDENTIALS[rng.gen_range(0..CREDENTIALS.len())].into(),
            state: STATES[rng.gen_range(0..STATES.len())].into(),
            fraud,
            temporal_only,
        });

        let bene_pool: Vec<String> = (0..rng.gen_range(5..30))
            .map(|i| format!("B{p:06}{i:03}"))
            .collect();

        let mut base_rate = cfg.claims_per_quarter_mean * rate_mix.sample(&mut rng);
        let mut mu = cfg.amount_log_mean;
        if cfg.amount_level_sigma > 0.0 {
            mu += Normal::new(0.0, cfg.amount_level_sigma)
                .map_err(|e| Error::Parameter(format!("normal: {e}")))?
                .sample(&mut rng);
        }
        if fraud && !temporal_only {
            base_rate *= cfg.volume_inflation;
            mu += cfg.amount_inflation.ln();
        }
        let amount_dist = LogNormal::new(mu, cfg.amount_log_sigma)
            .map_err(|e| Error::Parameter(format!("lognormal: {e}")))?;
        let deductible_dist = LogNormal::new(mu - 2.3, cfg.amount_log_sigma)
            .map_err(|e| Error::Parameter(format!("lognormal: {e}")))?;

        let hot_frac = 0.25;
        let cold_factor = ((1.0 - hot_frac * cfg.burstiness) / (1.0 - hot_frac)).max(0.0);
        for q in 0..quarters {
            let mut rate = base_rate;
            if fraud && cfg.burstiness > 1.0 {
                rate *= if rng.gen_bool(hot_frac) {
                    cfg.burstiness
                } else {
                    cold_factor
                };
            }
            let count = if rate > 0.0 {
                Poisson::new(rate)
                    .map_err(|e| Error::Parameter(format!("poisson: {e}")))?
                    .sample(&mut rng) as usize
            } else {
                0
            };
            let (qstart, qend) = quarter_bounds(cfg.start_year, q);
            let days = (qend - qstart).num_days();
            for _ in 0..count {
                let date = qstart + chrono::Duration::days(rng.gen_range(0..days));
                let reimbursed = (amount_dist.sample(&mut rng) * 100.0).round() / 100.0;
                let deductible = (deductible_dist.sample(&mut rng) * 100.0).round() / 100.0;
                claims.push(SynthClaim {
                    claim_id: format!("C{claim_seq:09}"),
                    beneficiary_id: bene_pool[rng.gen_range(0..bene_pool.len())].clone(),
                    npi: npi.clone(),
                    date,
                    reimbursed,
                    deductible,
                    inpatient: rng.gen_bool(cfg.inpatient_fraction),
                });
                claim_seq += 1;
            }
        }

        if fraud {
            let (wstart, _) = quarter_bounds(cfg.start_year, 0);
            let (_, wend) = quarter_bounds(cfg.start_year, quarters - 1);
            let span = (wend - wstart).num_days();
            leie.push(SynthLeie {
                npi,
                city: "SPRINGFIELD".into(),
                state: STATES[rng.gen_range(0..STATES.len())].into(),
                exclusion_type: EXCL_TYPES[rng.gen_range(0..EXCL_TYPES.len())].into(),
                exclusion_date: wstart + chrono::Duration::days(rng.gen_range(0..span)),
            });
        }
    }

    Ok(SynthCorpus {
        claims,
        providers,
        leie,
    })
}

impl SynthCorpus {
    /// Writes the four CSVs consumed by the pipeline:
    /// inpatient.csv, outpatient.csv, providers.csv, leie.csv.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let header = "ClaimID,BeneID,NPI,ClaimDate,InscClaimAmtReimbursed,DeductibleAmtPaid";
        let mut inp = std::io::BufWriter::new(std::fs::File::create(dir.join("inpatient.csv"))?);
        let mut outp = std::io::BufWriter::new(std::fs::File::create(dir.join("outpatient.csv"))?);
        writeln!(inp, "{header}")?;
        writeln!(outp, "{header}")?;
        for c in &self.claims {
            let w: &mut dyn Write = if c.inpatient { &mut inp } else { &mut outp };
            writeln!(
                w,
                "{},{},{},{},{:.2},{:.2}",
                c.claim_id,
                c.beneficiary_id,
                c.npi,
                c.date.format("%Y-%m-%d"),
                c.reimbursed,
                c.deductible
            )?;
        }
        let mut prov = std::io::BufWriter::new(std::fs::File::create(dir.join("providers.csv"))?);
        writeln!(prov, "NPI,FirstName,LastName,Gender,Credentials,State")?;
        for p in &self.providers {
            writeln!(
                prov,
                "{},{},{},{},{},{}",
                p.npi, p.first_name, p.last_name, p.gender, p.credentials, p.state
            )?;
        }
        let mut lw = std::io::BufWriter::new(std::fs::File::create(dir.join("leie.csv"))?);
        writeln!(lw, "NPI,CITY,STATE,EXCLTYPE,EXCLDATE")?;
        for e in &self.leie {
            writeln!(
                lw,
                "{},{},{},{},{}",
                e.npi,
                e.city,
                e.state,
                e.exclusion_type,
                e.exclusion_date.format("%Y%m%d")
            )?;
        }
        Ok(())
    }
}
