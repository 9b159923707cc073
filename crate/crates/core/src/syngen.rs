//! Synthetic receipts with planted basket archetypes, shopping missions and
//! RFM personas.
//!
//! Each customer draws a mission (a distribution over basket archetypes) and
//! a persona (basket count range and the part of the window they shop in).
//! Each basket draws an archetype from the mission, a category mix from a
//! Dirichlet centred on the archetype mixture, and a log-normal total value.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::{Days, NaiveDate, NaiveTime};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::Assignment;
use crate::txmodel::{self, AnalysisWindow, Basket, Category, Money, PurchasedLine};

const CATEGORY_LABELS: [&str; 12] = [
    "Hair products",
    "Body products",
    "Face products",
    "Dental products",
    "Detergents",
    "Laundry detergents",
    "Beauty products",
    "Products for children",
    "Products for men",
    "Perfumes",
    "Feminine hygiene",
    "Seasonal products",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeSpec {
    pub name: String,
    /// Expected share of value per category; unit-sum.
    pub mixture: Vec<f64>,
    /// Mean of the log of the basket value (currency units).
    pub value_log_mean: f64,
    pub value_log_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSpec {
    pub name: String,
    /// Probability of each archetype per basket; unit-sum.
    pub archetype_weights: Vec<f64>,
    /// Fraction of customers with this mission.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub name: String,
    pub baskets_min: u32,
    pub baskets_max: u32,
    /// Shopping days are drawn from this fraction range of the window.
    pub active_from: f64,
    pub active_to: f64,
    /// If set, one visit is forced into the last `n` days of the window.
    #[serde(default)]
    pub recent_visit_within_days: Option<u32>,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_categories: usize,
    pub n_customers: usize,
    pub window_start: NaiveDate,
    pub window_days: u32,
    pub archetypes: Vec<ArchetypeSpec>,
    pub missions: Vec<MissionSpec>,
    pub personas: Vec<PersonaSpec>,
    /// Inverse Dirichlet concentration around each archetype mixture; 0 means
    /// every basket reproduces its archetype mixture.
    pub noise: f64,
    pub promo_rate: f64,
    pub seed: u64,
}

fn one_hot_mix(n: usize, dominant: usize, weight: f64) -> Vec<f64> {
    let rest = (1.0 - weight) / (n - 1) as f64;
    (0..n).map(|j| if j == dominant { weight } else { rest }).collect()
}

impl Default for GeneratorConfig {
    /// 8 categories, 2 general archetypes at distinct value levels, 4 focused
    /// archetypes, and general / focused / mixed missions over 1,000 customers.
    fn default() -> Self {
        let n = 8;
        let uniform = vec![1.0 / n as f64; n];
        let mut archetypes = vec![
            ArchetypeSpec {
                name: "general_small".into(),
                mixture: uniform.clone(),
                value_log_mean: 12f64.ln(),
                value_log_sd: 0.3,
            },
            ArchetypeSpec {
                name: "general_big".into(),
                mixture: uniform,
                value_log_mean: 70f64.ln(),
                value_log_sd: 0.2,
            },
        ];
        for j in 0..4 {
            archetypes.push(ArchetypeSpec {
                name: format!("focused_{}", j + 1),
                mixture: one_hot_mix(n, j, 0.86),
                value_log_mean: 9f64.ln(),
                value_log_sd: 0.35,
            });
        }
        let missions = vec![
            MissionSpec {
                name: "general".into(),
                archetype_weights: vec![0.5, 0.4, 0.025, 0.025, 0.025, 0.025],
                share: 1.0 / 3.0,
            },
            MissionSpec {
                name: "focused".into(),
                archetype_weights: vec![0.05, 0.02, 0.85, 0.026, 0.027, 0.027],
                share: 1.0 / 3.0,
            },
            MissionSpec {
                name: "mixed".into(),
                archetype_weights: vec![0.25, 0.1, 0.0, 0.2, 0.2, 0.25],
                share: 1.0 / 3.0,
            },
        ];
        Self {
            n_categories: n,
            n_customers: 1000,
            window_start: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            window_days: 90,
            archetypes,
            missions,
            personas: default_personas(),
            noise: 0.02,
            promo_rate: 0.1,
            seed: 42,
        }
    }
}

fn default_personas() -> Vec<PersonaSpec> {
    vec![
        PersonaSpec {
            name: "loyal".into(),
            baskets_min: 14,
            baskets_max: 22,
            active_from: 0.0,
            active_to: 1.0,
            recent_visit_within_days: Some(7),
            share: 1.0 / 3.0,
        },
        PersonaSpec {
            name: "occasional".into(),
            baskets_min: 6,
            baskets_max: 10,
            active_from: 0.0,
            active_to: 1.0,
            recent_visit_within_days: None,
            share: 1.0 / 3.0,
        },
        PersonaSpec {
            name: "lapsed".into(),
            baskets_min: 4,
            baskets_max: 7,
            active_from: 0.0,
            active_to: 0.3,
            recent_visit_within_days: None,
            share: 1.0 / 3.0,
        },
    ]
}

impl GeneratorConfig {
    /// Four specialist missions (one per focused archetype) plus one
    /// generalist mission, with equal shares.
    pub fn specialists() -> Self {
        let base = Self::default();
        let k = base.archetypes.len();
        let mut missions = vec![MissionSpec {
            name: "generalist".into(),
            archetype_weights: {
                let mut w = vec![0.0; k];
                w[0] = 0.55;
                w[1] = 0.45;
                w
            },
            share: 0.2,
        }];
        for a in 2..k {
            missions.push(MissionSpec {
                name: format!("specialist_{}", a - 1),
                archetype_weights: one_hot_mix(k, a, 0.9),
                share: 0.2,
            });
        }
        Self { missions, ..base }
    }

    pub fn window(&self) -> Result<AnalysisWindow> {
        let end = self.window_start + Days::new(u64::from(self.window_days));
        AnalysisWindow::new(self.window_start, end)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let unit_sum =
            |v: &[f64]| v.iter().all(|x| *x >= 0.0 && x.is_finite()) && (v.iter().sum::<f64>() - 1.0).abs() < 1e-6;
        if self.n_categories < 2 {
            return bad("n_categories must be at least 2".into());
        }
        if self.n_customers == 0 || self.window_days == 0 {
            return bad("n_customers and window_days must be positive".into());
        }
        if self.archetypes.is_empty() || self.missions.is_empty() || self.personas.is_empty() {
            return bad("archetypes, missions and personas must be non-empty".into());
        }
        for a in &self.archetypes {
            if a.mixture.len() != self.n_categories || !unit_sum(&a.mixture) {
                return bad(format!(
                    "archetype `{}` mixture must have {} unit-sum entries",
                    a.name, self.n_categories
                ));
            }
            if !a.value_log_mean.is_finite() || a.value_log_sd.is_nan() || a.value_log_sd < 0.0 {
                return bad(format!("archetype `{}` has an invalid value distribution", a.name));
            }
        }
        for m in &self.missions {
            if m.archetype_weights.len() != self.archetypes.len() || !unit_sum(&m.archetype_weights) {
                return bad(format!(
                    "mission `{}` needs {} unit-sum archetype weights",
                    m.name,
                    self.archetypes.len()
                ));
            }
        }
        for p in &self.personas {
            if p.baskets_min == 0 || p.baskets_max < p.baskets_min {
                return bad(format!("persona `{}` has an invalid basket range", p.name));
            }
            if !(0.0..=1.0).contains(&p.active_from) || !(p.active_from..=1.0).contains(&p.active_to) {
                return bad(format!("persona `{}` has an invalid active range", p.name));
            }
        }
        let shares: Vec<f64> = self.missions.iter().map(|m| m.share).collect();
        if !unit_sum(&shares) {
            return bad("mission shares must sum to 1".into());
        }
        let shares: Vec<f64> = self.personas.iter().map(|p| p.share).collect();
        if !unit_sum(&shares) {
            return bad("persona shares must sum to 1".into());
        }
        if self.noise.is_nan() || self.noise < 0.0 || !(0.0..=1.0).contains(&self.promo_rate) {
            return bad("noise must be >= 0 and promo_rate within [0, 1]".into());
        }
        Ok(())
    }

    pub fn categories(&self) -> Vec<Category> {
        (0..self.n_categories)
            .map(|j| Category {
                id: format!("K{:02}", j + 1),
                label: CATEGORY_LABELS
                    .get(j)
                    .map_or_else(|| format!("Category {}", j + 1), |s| s.to_string()),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasketTruth {
    pub basket_id: String,
    pub customer_id: String,
    pub archetype: usize,
    pub archetype_name: String,
    pub value: Money,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerTruth {
    pub customer_id: String,
    pub mission: usize,
    pub mission_name: String,
    pub persona: usize,
    pub persona_name: String,
    pub n_baskets: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub baskets: Vec<BasketTruth>,
    pub customers: Vec<CustomerTruth>,
}

impl GroundTruth {
    pub fn archetype_assignment(&self) -> Assignment {
        Assignment::new(
            self.baskets.iter().map(|b| b.basket_id.clone()).collect(),
            self.baskets.iter().map(|b| b.archetype).collect(),
        )
        .expect("unique basket ids")
    }

    pub fn mission_assignment(&self) -> Assignment {
        Assignment::new(
            self.customers.iter().map(|c| c.customer_id.clone()).collect(),
            self.customers.iter().map(|c| c.mission).collect(),
        )
        .expect("unique customer ids")
    }

    pub fn persona_assignment(&self) -> Assignment {
        Assignment::new(
            self.customers.iter().map(|c| c.customer_id.clone()).collect(),
            self.customers.iter().map(|c| c.persona).collect(),
        )
        .expect("unique customer ids")
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub categories: Vec<Category>,
    pub baskets: Vec<Basket>,
    pub truth: GroundTruth,
    pub window: AnalysisWindow,
}

pub const RECEIPTS_FILE: &str = "receipts.csv";
pub const CATEGORIES_FILE: &str = "categories.csv";
pub const TRUTH_BASKETS_FILE: &str = "ground_truth_baskets.csv";
pub const TRUTH_CUSTOMERS_FILE: &str = "ground_truth_customers.csv";

impl SyntheticData {
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        txmodel::write_receipts(BufWriter::new(File::create(dir.join(RECEIPTS_FILE))?), &self.baskets)?;
        txmodel::write_categories(
            BufWriter::new(File::create(dir.join(CATEGORIES_FILE))?),
            &self.categories,
        )?;

        let mut wtr = csv::Writer::from_path(dir.join(TRUTH_BASKETS_FILE))?;
        wtr.write_record([
            "basket_id",
            "customer_id",
            "archetype",
            "archetype_name",
            "value",
            "date",
        ])?;
        for b in &self.truth.baskets {
            wtr.write_record([
                b.basket_id.clone(),
                b.customer_id.clone(),
                b.archetype.to_string(),
                b.archetype_name.clone(),
                b.value.to_string(),
                b.date.to_string(),
            ])?;
        }
        wtr.flush()?;

        let mut wtr = csv::Writer::from_path(dir.join(TRUTH_CUSTOMERS_FILE))?;
        wtr.write_record([
            "customer_id",
            "mission",
            "mission_name",
            "persona",
            "persona_name",
            "n_baskets",
        ])?;
        for c in &self.truth.customers {
            wtr.write_record([
                c.customer_id.clone(),
                c.mission.to_string(),
                c.mission_name.clone(),
                c.persona.to_string(),
                c.persona_name.clone(),
                c.n_baskets.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Reads one label column of a ground-truth CSV as an assignment.
pub fn read_truth_labels(path: &Path, column: &str) -> Result<Assignment> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let col = header
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::SchemaMismatch(format!("{} has no `{column}` column", path.display())))?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        ids.push(record[0].to_string());
        labels.push(record[col].parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: record.position().map_or(0, |p| p.line()),
            message: format!("bad label `{}`", &record[col]),
        })?);
    }
    Assignment::new(ids, labels)
}

fn sample_mixture(mixture: &[f64], noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if noise == 0.0 {
        return mixture.to_vec();
    }
    let draws: Vec<f64> = mixture
        .iter()
        .map(|&m| {
            if m > 0.0 {
                Gamma::new(m / noise, 1.0).expect("positive shape").sample(rng)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.into_iter().map(|d| d / total).collect()
    } else {
        mixture.to_vec()
    }
}

/// Largest-remainder split of `total` cents by `ratios`.
fn allocate_cents(total: i64, ratios: &[f64]) -> Vec<i64> {
    let raw: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut cents: Vec<i64> = raw.iter().map(|r| r.floor() as i64).collect();
    let mut remaining = total - cents.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .total_cmp(&(raw[a] - raw[a].floor()))
            .then(a.cmp(&b))
    });
    for &j in order.iter().cycle() {
        if remaining <= 0 {
            break;
        }
        cents[j] += 1;
        remaining -= 1;
    }
    cents
}

fn lines_for_category(category: &Category, cents: i64, promo_rate: f64, rng: &mut ChaCha8Rng) -> Vec<PurchasedLine> {
    let pieces = if cents >= 400 && rng.random_bool(0.5) {
        let first = rng.random_range(cents / 4..=cents * 3 / 4);
        vec![first, cents - first]
    } else {
        vec![cents]
    };
    pieces
        .into_iter()
        .filter(|&p| p > 0)
        .map(|p| {
            let q = rng.random_range(1..=3u32);
            let quantity = if p % i64::from(q) == 0 { q } else { 1 };
            PurchasedLine {
                product_id: format!("P{}-{:02}", category.id, rng.random_range(0..20)),
                category_id: category.id.clone(),
                unit_price: Money(p / i64::from(quantity)),
                quantity,
                promo_flag: rng.random_bool(promo_rate),
            }
        })
        .collect()
}

fn visit_days(persona: &PersonaSpec, n: usize, window_days: u32, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let lo = (persona.active_from * f64::from(window_days)).floor() as u32;
    let hi = ((persona.active_to * f64::from(window_days)).floor() as u32).max(lo);
    let mut days: Vec<u32> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    if let (Some(recent), Some(first)) = (persona.recent_visit_within_days, days.first_mut()) {
        let from = window_days.saturating_sub(recent.saturating_sub(1));
        *first = rng.random_range(from..=window_days);
    }
    days.sort_unstable();
    days
}

/// Generates a dataset; identical configs give identical output.
pub fn generate(config: &GeneratorConfig) -> Result<SyntheticData> {
    config.validate()?;
    let window = config.window()?;
    let categories = config.categories();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mission_pick =
        WeightedIndex::new(config.missions.iter().map(|m| m.share)).map_err(|e| Error::Config(e.to_string()))?;
    let persona_pick =
        WeightedIndex::new(config.personas.iter().map(|p| p.share)).map_err(|e| Error::Config(e.to_string()))?;
    let archetype_picks = config
        .missions
        .iter()
        .map(|m| WeightedIndex::new(&m.archetype_weights).map_err(|e| Error::Config(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let values = config
        .archetypes
        .iter()
        .map(|a| LogNormal::new(a.value_log_mean, a.value_log_sd).map_err(|e| Error::Config(e.to_string())))
        .collect::<Result<Vec<_>>>()?;

    let mut baskets = Vec::new();
    let mut truth = GroundTruth::default();
    let id_width = config.n_customers.to_string().len().max(4);
    for c in 0..config.n_customers {
        let customer_id = format!("C{:0id_width$}", c + 1);
        let mission = mission_pick.sample(&mut rng);
        let persona_idx = persona_pick.sample(&mut rng);
        let persona = &config.personas[persona_idx];
        let n = rng.random_range(persona.baskets_min..=persona.baskets_max) as usize;
        for day in visit_days(persona, n, config.window_days, &mut rng) {
            let archetype = archetype_picks[mission].sample(&mut rng);
            let spec = &config.archetypes[archetype];
            let mix = sample_mixture(&spec.mixture, config.noise, &mut rng);
            let total = ((values[archetype].sample(&mut rng) * 100.0).round() as i64).max(50);
            let mut lines = Vec::new();
            for (j, cents) in allocate_cents(total, &mix).into_iter().enumerate() {
                if cents > 0 {
                    lines.extend(lines_for_category(&categories[j], cents, config.promo_rate, &mut rng));
                }
            }
            let time = NaiveTime::from_hms_opt(
                rng.random_range(8..21),
                rng.random_range(0..60),
                rng.random_range(0..60),
            )
            .expect("valid time");
            let date = config.window_start + Days::new(u64::from(day));
            let basket = Basket {
                basket_id: format!("B{:07}", baskets.len() + 1),
                customer_id: customer_id.clone(),
                timestamp: date.and_time(time),
                lines,
            };
            truth.baskets.push(BasketTruth {
                basket_id: basket.basket_id.clone(),
                customer_id: customer_id.clone(),
                archetype,
                archetype_name: spec.name.clone(),
                value: basket.value(),
                date,
            });
            baskets.push(basket);
        }
        truth.customers.push(CustomerTruth {
            customer_id,
            mission,
            mission_name: config.missions[mission].name.clone(),
            persona: persona_idx,
            persona_name: persona.name.clone(),
            n_baskets: n,
        });
    }
    for b in &mut baskets {
        b.lines.sort();
    }
    Ok(SyntheticData {
        categories,
        baskets,
        truth,
        window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            n_customers: 60,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn default_config_is_valid() {
        GeneratorConfig::default().validate().unwrap();
        GeneratorConfig::specialists().validate().unwrap();
    }

    #[test]
    fn invalid_mixture_rejected() {
        let mut cfg = small();
        cfg.archetypes[0].mixture[0] += 0.1;
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        let mut cfg = small();
        cfg.personas[0].baskets_min = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn allocation_preserves_total() {
        let c = allocate_cents(1001, &[0.5, 0.25, 0.25]);
        assert_eq!(c.iter().sum::<i64>(), 1001);
        assert_eq!(allocate_cents(7, &[1.0, 0.0]), vec![7, 0]);
    }

    #[test]
    fn truth_counts_match_output() {
        let data = generate(&small()).unwrap();
        assert_eq!(data.truth.baskets.len(), data.baskets.len());
        assert_eq!(data.truth.customers.len(), 60);
        let per_customer: usize = data.truth.customers.iter().map(|c| c.n_baskets).sum();
        assert_eq!(per_customer, data.baskets.len());
        assert!(data.baskets.iter().all(|b| data.window.contains(b.date())));
        assert!(data.baskets.iter().all(|b| b.value().0 > 0));
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.baskets, b.baskets);
        let c = generate(&GeneratorConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a.baskets, c.baskets);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = small();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(GeneratorConfig::from_toml(&text).unwrap(), cfg);
    }
}
