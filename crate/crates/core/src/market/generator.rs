use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{FeatureEncoder, MarketDataset, MarketError, SeriesRecord, MAX_EPISODES};

const LATENT_DIM: usize = 3;
const LOG_VIEW_OFFSET: f64 = 10.0;
const POPULARITY_OFFSET: f64 = 50.0;
const POPULARITY_SCALE: f64 = 10.0;

const LATENT_DOMAIN: u64 = 1;
const CATALOG_DOMAIN: u64 = 2;
const NOISE_DOMAIN: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_series: usize,
    pub horizon_days: u32,
    pub genre_count: usize,
    pub director_count: usize,
    pub actor_count: usize,
    /// Log-views lost per unit of competitor attractiveness above `hit_threshold`.
    pub competition_strength: f64,
    pub competition_window_days: u32,
    /// Only competitors whose latent attractiveness exceeds this draw demand.
    pub hit_threshold: f64,
    /// Std of the Gaussian added to log view counts.
    pub noise_std: f64,
    /// Std of the Gaussian added to the popularity index.
    pub aux_noise_std: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_series: 2500,
            horizon_days: 1460,
            genre_count: 100,
            director_count: 60,
            actor_count: 50,
            competition_strength: 1.0,
            competition_window_days: 30,
            hit_threshold: 2.0,
            noise_std: 0.5,
            aux_noise_std: 1.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), MarketError> {
        let positive = [
            ("num_series", self.num_series),
            ("horizon_days", self.horizon_days as usize),
            ("genre_count", self.genre_count),
            ("director_count", self.director_count),
            ("actor_count", self.actor_count),
            ("competition_window_days", self.competition_window_days as usize),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(MarketError::Config(format!("{name} must be positive")));
        }
        if self.competition_window_days > self.horizon_days {
            return Err(MarketError::Config(format!(
                "competition_window_days ({}) exceeds horizon_days ({})",
                self.competition_window_days, self.horizon_days
            )));
        }
        for (name, v) in [
            ("competition_strength", self.competition_strength),
            ("noise_std", self.noise_std),
            ("aux_noise_std", self.aux_noise_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MarketError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.hit_threshold.is_finite() {
            return Err(MarketError::Config("hit_threshold must be finite".to_string()));
        }
        Ok(())
    }

    pub fn encoder(&self) -> FeatureEncoder {
        FeatureEncoder::new(self.genre_count, self.director_count, self.actor_count)
    }
}

/// Pre-release metadata of one series and its latent attractiveness.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub id: u64,
    pub release_day: u32,
    pub genre_id: usize,
    pub director_id: usize,
    pub lead_actor_id: usize,
    pub episode_count: u32,
    pub budget_score: f64,
    pub buzz_score: f64,
    /// Pre-competition log-demand.
    pub base: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub config: GeneratorConfig,
    pub entries: Vec<CatalogEntry>,
}

struct LatentTables {
    genre: Vec<(f64, [f64; LATENT_DIM])>,
    director: Vec<(f64, [f64; LATENT_DIM])>,
    actor: Vec<(f64, [f64; LATENT_DIM])>,
}

impl LatentTables {
    fn draw(cfg: &GeneratorConfig) -> Self {
        let mut rng = stream_rng(cfg.seed, LATENT_DOMAIN, 0);
        let effect = Normal::new(0.0, 0.5).expect("valid std");
        let embed = Normal::new(0.0, (LATENT_DIM as f64).recip().sqrt()).expect("valid std");
        let mut table = |n: usize| -> Vec<(f64, [f64; LATENT_DIM])> {
            (0..n)
                .map(|_| {
                    let a = effect.sample(&mut rng);
                    let u = std::array::from_fn(|_| embed.sample(&mut rng));
                    (a, u)
                })
                .collect()
        };
        Self {
            genre: table(cfg.genre_count),
            director: table(cfg.director_count),
            actor: table(cfg.actor_count),
        }
    }

    /// Sparse main effects, low-rank pairwise interactions, a saturating term.
    fn base(&self, genre: usize, director: usize, actor: usize, episodes: u32, budget: f64, buzz: f64) -> f64 {
        let (ag, ug) = &self.genre[genre];
        let (ad, ud) = &self.director[director];
        let (aa, ua) = &self.actor[actor];
        let dot = |p: &[f64; LATENT_DIM], q: &[f64; LATENT_DIM]| p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
        let z = ag
            + ad
            + aa
            + 0.8 * (budget - 0.5)
            + 0.6 * (buzz - 0.5)
            + 0.3 * (f64::from(episodes) / 20.0).ln()
            + 0.3 * dot(ug, ud)
            + 0.3 * dot(ud, ua);
        z + 0.4 * (1.5 * z).tanh()
    }
}

fn stream_rng(seed: u64, domain: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 56) | id);
    rng
}

/// Draws the catalog; ids are `0..num_series` and each id owns its RNG stream.
pub fn draw_catalog(cfg: &GeneratorConfig) -> Result<Catalog, MarketError> {
    cfg.validate()?;
    let latent = LatentTables::draw(cfg);
    let entries = (0..cfg.num_series as u64)
        .map(|id| {
            let mut rng = stream_rng(cfg.seed, CATALOG_DOMAIN, id);
            let release_day = rng.gen_range(0..cfg.horizon_days);
            let genre_id = rng.gen_range(0..cfg.genre_count);
            let director_id = rng.gen_range(0..cfg.director_count);
            let lead_actor_id = rng.gen_range(0..cfg.actor_count);
            let episode_count = rng.gen_range(6..=MAX_EPISODES);
            let budget_score: f64 = rng.gen();
            let jitter: f64 = StandardNormal.sample(&mut rng);
            let buzz_score = 1.0 / (1.0 + (-(1.5 * latent.actor[lead_actor_id].0 + 0.7 * jitter)).exp());
            let base = latent.base(genre_id, director_id, lead_actor_id, episode_count, budget_score, buzz_score);
            CatalogEntry {
                id,
                release_day,
                genre_id,
                director_id,
                lead_actor_id,
                episode_count,
                budget_score,
                buzz_score,
                base,
            }
        })
        .collect();
    Ok(Catalog {
        config: cfg.clone(),
        entries,
    })
}

impl Catalog {
    /// Demand lost to competitors within the window, weighted from 1 at the
    /// same day down to 0.5 at the window edge.
    fn competition(&self, sorted: &[&CatalogEntry], i: usize) -> f64 {
        let cfg = &self.config;
        if cfg.competition_strength == 0.0 {
            return 0.0;
        }
        let window = cfg.competition_window_days;
        let day = sorted[i].release_day;
        let lo = sorted.partition_point(|e| e.release_day + window < day);
        let hi = sorted.partition_point(|e| e.release_day <= day + window);
        let total: f64 = sorted[lo..hi]
            .iter()
            .filter(|e| e.id != sorted[i].id)
            .map(|e| {
                let gap = f64::from(e.release_day.abs_diff(day));
                let weight = 1.0 - 0.5 * gap / f64::from(window);
                weight * (e.base - cfg.hit_threshold).max(0.0)
            })
            .sum();
        cfg.competition_strength * total
    }

    /// Observed records: `ln views = 10 + base − competition + noise` and
    /// `popularity = 50 + 10·base + noise`.
    pub fn realize(&self) -> Result<MarketDataset, MarketError> {
        let cfg = &self.config;
        cfg.validate()?;
        let mut sorted: Vec<&CatalogEntry> = self.entries.iter().collect();
        sorted.sort_by_key(|e| (e.release_day, e.id));
        let main_noise = Normal::new(0.0, cfg.noise_std).map_err(|e| MarketError::Config(e.to_string()))?;
        let aux_noise = Normal::new(0.0, cfg.aux_noise_std).map_err(|e| MarketError::Config(e.to_string()))?;
        let records = (0..sorted.len())
            .map(|i| {
                let e = sorted[i];
                let mut rng = stream_rng(cfg.seed, NOISE_DOMAIN, e.id);
                let log_views = LOG_VIEW_OFFSET + e.base - self.competition(&sorted, i) + main_noise.sample(&mut rng);
                let popularity_index = POPULARITY_OFFSET + POPULARITY_SCALE * e.base + aux_noise.sample(&mut rng);
                SeriesRecord {
                    id: e.id,
                    release_day: e.release_day,
                    genre_id: e.genre_id,
                    director_id: e.director_id,
                    lead_actor_id: e.lead_actor_id,
                    episode_count: e.episode_count,
                    budget_score: e.budget_score,
                    buzz_score: e.buzz_score,
                    view_count: log_views.exp(),
                    popularity_index,
                }
            })
            .collect();
        MarketDataset::new(cfg.clone(), cfg.encoder(), records)
    }
}

pub fn generate_market(cfg: &GeneratorConfig) -> Result<MarketDataset, MarketError> {
    draw_catalog(cfg)?.realize()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(strength: f64) -> GeneratorConfig {
        GeneratorConfig {
            num_series: 300,
            horizon_days: 200,
            competition_strength: strength,
            ..GeneratorConfig::default()
        }
    }

    fn log_views(d: &MarketDataset, id: u64) -> f64 {
        d.records().iter().find(|r| r.id == id).unwrap().view_count.ln()
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let a = generate_market(&small(1.0)).unwrap();
        let b = generate_market(&small(1.0)).unwrap();
        assert_eq!(a, b);
        let c = generate_market(&GeneratorConfig { seed: 1, ..small(1.0) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn records_are_sorted_with_unique_ids() {
        let d = generate_market(&small(1.0)).unwrap();
        assert_eq!(d.len(), 300);
        for w in d.records().windows(2) {
            assert!((w[0].release_day, w[0].id) < (w[1].release_day, w[1].id));
        }
        for r in d.records() {
            assert!(r.view_count > 0.0 && r.view_count.is_finite());
            assert!(r.genre_id < 100 && r.director_id < 60 && r.lead_actor_id < 50);
            assert!((0.0..=1.0).contains(&r.buzz_score) && (0.0..=1.0).contains(&r.budget_score));
        }
    }

    #[test]
    fn zero_cardinality_is_rejected() {
        let err = generate_market(&GeneratorConfig {
            director_count: 0,
            ..small(1.0)
        })
        .unwrap_err();
        assert!(err.to_string().contains("director_count"));
        assert!(generate_market(&GeneratorConfig {
            competition_window_days: 500,
            ..small(1.0)
        })
        .is_err());
    }

    #[test]
    fn without_competition_removing_a_series_changes_nothing_else() {
        let mut catalog = draw_catalog(&small(0.0)).unwrap();
        let full = catalog.realize().unwrap();
        let removed = catalog.entries.remove(17).id;
        let reduced = catalog.realize().unwrap();
        for r in reduced.records() {
            assert_eq!(Some(r), full.records().iter().find(|f| f.id == r.id));
        }
        assert!(reduced.records().iter().all(|r| r.id != removed));
    }

    #[test]
    fn an_added_hit_lowers_views_inside_the_window_only() {
        let mut catalog = draw_catalog(&small(1.0)).unwrap();
        let before = catalog.realize().unwrap();
        let target = catalog.entries[5].clone();
        catalog.entries.push(CatalogEntry {
            id: 10_000,
            release_day: target.release_day,
            base: 4.0,
            ..target.clone()
        });
        let after = catalog.realize().unwrap();
        assert!(log_views(&after, target.id) < log_views(&before, target.id));
        for r in before.records() {
            if r.release_day.abs_diff(target.release_day) > 30 {
                assert_eq!(log_views(&after, r.id), r.view_count.ln());
            }
        }
    }

    #[test]
    fn popularity_correlates_with_views() {
        for seed in 0..3 {
            let d = generate_market(&GeneratorConfig { seed, ..small(1.0) }).unwrap();
            let xs: Vec<f64> = d.records().iter().map(|r| r.popularity_index).collect();
            let ys: Vec<f64> = d.records().iter().map(|r| r.view_count.ln()).collect();
            assert!(pearson(&xs, &ys) > 0.5, "seed {seed}");
        }
    }

    #[test]
    fn competition_explains_variance_only_when_switched_on() {
        let on = generate_market(&small(1.0)).unwrap();
        let off = generate_market(&small(0.0)).unwrap();
        let lost: Vec<f64> = on
            .records()
            .iter()
            .zip(off.records())
            .map(|(a, b)| b.view_count.ln() - a.view_count.ln())
            .collect();
        assert!(lost.iter().all(|&v| v >= -1e-12));
        assert!(lost.iter().any(|&v| v > 0.1));
    }

    fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }
}
