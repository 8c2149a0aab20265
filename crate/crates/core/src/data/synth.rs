//! Synthetic filtration datasets with fixed per-scenario marginals.
//!
//! Feature columns are drawn from the level design with
//! evenly spaced jitter inside a documented per-level interval, then shuffled
//! independently per column. Filtration time has no design levels and follows a
//! piecewise-linear quantile function through its target five-number summary.
//!
//! The target is generated in two steps. A latent moisture score sums per-level
//! effects of the design columns, adds one thickness by air-blow interaction and
//! Gaussian noise. A fixed monotone map then carries latent scores onto the
//! target moisture marginal: the extreme cells of the level design go to the
//! target minimum and maximum, every other cell to the moisture quantile at
//! its population mid-CDF position, with linear interpolation in between.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample, ScaleTag, N_FEATURES};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    /// Polypropylene filter cloth.
    S1,
    /// Polyester filter cloth.
    S2,
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(ScenarioId::S1),
            "s2" => Ok(ScenarioId::S2),
            _ => Err(Error::UnknownScenario(s.to_string())),
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioId::S1 => "s1",
            ScenarioId::S2 => "s2",
        })
    }
}

/// One design level and the closed interval its jittered values span.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelJitter {
    pub level: f64,
    /// Relative share of samples at this level.
    pub weight: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ColumnGenerator {
    Constant(f64),
    Levels(Vec<LevelJitter>),
    /// Knots of a piecewise-linear quantile function at p = 0, 0.25, 0.5, 0.75, 1.
    Quantiles([f64; 5]),
}

/// Additive effect of one design column, looked up by the nearest level centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEffect {
    pub column: usize,
    pub centers: Vec<f64>,
    pub effects: Vec<f64>,
}

impl LevelEffect {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = x[self.column];
        let mut best = 0;
        for (k, c) in self.centers.iter().enumerate() {
            if (v - c).abs() < (v - self.centers[best]).abs() {
                best = k;
            }
        }
        self.effects[best]
    }
}

/// `weight` is added when `x[high_column] > high_above` and `x[low_column] < low_below`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub weight: f64,
    pub high_column: usize,
    pub high_above: f64,
    pub low_column: usize,
    pub low_below: f64,
}

/// Latent moisture score: a sum of level effects, one interaction step and
/// `noise_sigma * N(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseSpec {
    pub id: String,
    pub effects: Vec<LevelEffect>,
    pub interaction: Interaction,
    pub noise_sigma: f64,
}

impl ResponseSpec {
    pub fn latent(&self, x: &[f64]) -> f64 {
        let i = &self.interaction;
        let gate = x[i.high_column] > i.high_above && x[i.low_column] < i.low_below;
        self.effects.iter().map(|e| e.eval(x)).sum::<f64>() + if gate { i.weight } else { 0.0 }
    }
}

fn effect(column: usize, centers: &[f64], effects: &[f64]) -> LevelEffect {
    LevelEffect {
        column,
        centers: centers.to_vec(),
        effects: effects.to_vec(),
    }
}

fn response(
    id: &str,
    thickness: [f64; 4],
    air_blow: [f64; 3],
    solids: f64,
    gate: f64,
    noise_sigma: f64,
) -> ResponseSpec {
    ResponseSpec {
        id: id.into(),
        effects: vec![
            effect(0, &[0.2, 0.38], &[solids, 0.0]),
            effect(4, &[2.0, 10.0, 15.0], &air_blow),
            effect(5, &[14.0, 20.0, 26.0, 34.0], &thickness),
        ],
        interaction: Interaction {
            weight: gate,
            high_column: 5,
            high_above: 24.0,
            low_column: 4,
            low_below: 6.0,
        },
        noise_sigma,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthScenario {
    pub id: ScenarioId,
    pub columns: Vec<ColumnGenerator>,
    /// Moisture (percent) quantile knots the latent scores are mapped onto.
    pub target_quantiles: [f64; 5],
    pub response: ResponseSpec,
}

fn lv(level: f64, weight: f64, lo: f64, hi: f64) -> LevelJitter {
    LevelJitter {
        level,
        weight,
        lo,
        hi,
    }
}

fn fixed_levels(levels: &[f64]) -> ColumnGenerator {
    ColumnGenerator::Levels(levels.iter().map(|&l| lv(l, 1.0, l, l)).collect())
}

impl SynthScenario {
    pub fn new(id: ScenarioId) -> Self {
        match id {
            ScenarioId::S1 => SynthScenario {
                id,
                columns: vec![
                    fixed_levels(&[0.2, 0.38]),
                    ColumnGenerator::Levels(vec![
                        lv(35.0, 1.0, 32.0, 38.0),
                        lv(65.0, 1.0, 62.0, 68.0),
                    ]),
                    ColumnGenerator::Levels(vec![
                        lv(2.0, 1.0, 2.09, 2.15),
                        lv(3.5, 1.0, 3.40, 3.64),
                        lv(5.0, 1.0, 4.80, 5.67),
                    ]),
                    ColumnGenerator::Constant(150.0),
                    fixed_levels(&[2.0, 10.0, 15.0]),
                    ColumnGenerator::Levels(vec![
                        lv(14.0, 40.0, 14.0, 16.0),
                        lv(20.0, 32.0, 19.0, 22.0),
                        lv(26.0, 32.0, 25.0, 28.0),
                        lv(34.0, 40.0, 32.0, 34.0),
                    ]),
                    ColumnGenerator::Quantiles([7.34, 9.25, 12.0, 14.0, 16.0]),
                ],
                target_quantiles: [26.09, 31.94, 33.11, 34.47, 39.76],
                response: response(
                    "s1-levels-v3",
                    [0.61, 0.58, 1.96, 2.04],
                    [1.44, 1.10, 0.42],
                    0.20,
                    0.49,
                    0.01,
                ),
            },
            ScenarioId::S2 => SynthScenario {
                id,
                columns: vec![
                    fixed_levels(&[0.2, 0.38]),
                    ColumnGenerator::Levels(vec![
                        lv(35.0, 1.0, 32.0, 36.0),
                        lv(65.0, 1.0, 62.0, 67.0),
                    ]),
                    ColumnGenerator::Levels(vec![
                        lv(2.0, 1.0, 2.0, 2.2),
                        lv(3.5, 1.0, 3.3, 3.6),
                        lv(5.0, 1.0, 4.7, 5.1),
                    ]),
                    ColumnGenerator::Constant(150.0),
                    fixed_levels(&[2.0, 10.0, 15.0]),
                    ColumnGenerator::Levels(vec![
                        lv(14.0, 40.0, 14.0, 16.0),
                        lv(20.0, 32.0, 19.0, 21.0),
                        lv(26.0, 32.0, 25.0, 28.0),
                        lv(34.0, 40.0, 32.0, 34.0),
                    ]),
                    ColumnGenerator::Quantiles([6.5, 10.0, 10.0, 10.38, 11.5]),
                ],
                target_quantiles: [24.45, 31.73, 33.47, 35.24, 40.94],
                response: response(
                    "s2-levels-v3",
                    [0.61, 0.58, 1.96, 2.04],
                    [1.44, 1.10, 0.42],
                    0.20,
                    0.49,
                    0.01,
                ),
            },
        }
    }
}

impl SynthScenario {
    /// Noise-free latent scores over the level design with their population
    /// probabilities, ascending.
    pub fn latent_distribution(&self) -> Result<Vec<(f64, f64)>> {
        let mut cells: Vec<(Vec<f64>, f64)> = vec![(vec![0.0; N_FEATURES], 1.0)];
        for e in &self.response.effects {
            let weights: Vec<f64> = match self.columns.get(e.column) {
                Some(ColumnGenerator::Levels(levels)) => e
                    .centers
                    .iter()
                    .map(|c| {
                        levels
                            .iter()
                            .find(|l| l.level == *c)
                            .map(|l| l.weight)
                            .ok_or_else(|| {
                                Error::invalid(format!("column {} has no level {c}", e.column))
                            })
                    })
                    .collect::<Result<_>>()?,
                _ => {
                    return Err(Error::invalid(format!(
                        "response column {} is not a level column",
                        e.column
                    )))
                }
            };
            let total: f64 = weights.iter().sum();
            cells = cells
                .into_iter()
                .flat_map(|(x, p)| {
                    e.centers.iter().zip(&weights).map(move |(&c, &w)| {
                        let mut x = x.clone();
                        x[e.column] = c;
                        (x, p * w / total)
                    })
                })
                .collect();
        }
        let mut dist: Vec<(f64, f64)> = cells
            .iter()
            .map(|(x, p)| (self.response.latent(x), *p))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (v, p) in dist {
            match merged.last_mut() {
                Some(last) if (v - last.0).abs() <= 1e-12 => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        Ok(merged)
    }

    /// Knots of the monotone latent-to-moisture map. The lowest and highest
    /// design cells land on the target extremes; every other cell lands on
    /// the moisture quantile at its mid-CDF position.
    pub fn moisture_map(&self) -> Result<Vec<(f64, f64)>> {
        let dist = self.latent_distribution()?;
        let q = &self.target_quantiles;
        if dist.len() == 1 {
            return Ok(vec![(dist[0].0, q[2])]);
        }
        let last = dist.len() - 1;
        let mut below = 0.0;
        Ok(dist
            .iter()
            .enumerate()
            .map(|(k, &(v, p))| {
                let y = match k {
                    0 => q[0],
                    k if k == last => q[4],
                    _ => piecewise_quantile(q, below + p / 2.0),
                };
                below += p;
                (v, y)
            })
            .collect())
    }
}

/// Piecewise-linear interpolation through ascending knots, flat outside.
fn interpolate(knots: &[(f64, f64)], v: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if v <= first.0 {
        return first.1;
    }
    if v >= last.0 {
        return last.1;
    }
    let k = knots.partition_point(|kn| kn.0 <= v);
    let (a, b) = (knots[k - 1], knots[k]);
    a.1 + (v - a.0) / (b.0 - a.0) * (b.1 - a.1)
}

/// Evaluates a piecewise-linear quantile function with knots at quartile positions.
fn piecewise_quantile(knots: &[f64; 5], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * 4.0;
    let seg = (pos.floor() as usize).min(3);
    let frac = pos - seg as f64;
    knots[seg] + frac * (knots[seg + 1] - knots[seg])
}

/// Rank positions in [0, 1]; a single value sits at the median.
fn grid_position(k: usize, n: usize) -> f64 {
    if n <= 1 {
        0.5
    } else {
        k as f64 / (n - 1) as f64
    }
}

/// Splits `n` into integer counts proportional to `weights` (largest remainder).
fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn generate_column(g: &ColumnGenerator, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut col = match g {
        ColumnGenerator::Constant(v) => vec![*v; n],
        ColumnGenerator::Levels(levels) => {
            let weights: Vec<f64> = levels.iter().map(|l| l.weight).collect();
            let counts = apportion(n, &weights);
            let mut col = Vec::with_capacity(n);
            for (l, &m) in levels.iter().zip(&counts) {
                col.extend((0..m).map(|k| l.lo + (l.hi - l.lo) * grid_position(k, m)));
            }
            col
        }
        ColumnGenerator::Quantiles(knots) => (0..n)
            .map(|k| piecewise_quantile(knots, grid_position(k, n)))
            .collect(),
    };
    col.shuffle(rng);
    col
}

/// Generates `n` samples for a scenario; identical inputs give identical output.
pub fn synthesize(s: &SynthScenario, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if s.columns.len() != N_FEATURES {
        return Err(Error::invalid(format!(
            "scenario defines {} columns, expected {N_FEATURES}",
            s.columns.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<Vec<f64>> = s
        .columns
        .iter()
        .map(|g| generate_column(g, n, &mut rng))
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect();

    let map = s.moisture_map()?;
    let target: Vec<f64> = rows
        .iter()
        .map(|x| {
            let z: f64 = StandardNormal.sample(&mut rng);
            interpolate(&map, s.response.latent(x) + s.response.noise_sigma * z)
        })
        .collect();

    let samples = rows
        .into_iter()
        .zip(target)
        .map(|(features, target)| Sample { features, target })
        .collect();
    Dataset::new(samples, ScaleTag::Percent)
}
