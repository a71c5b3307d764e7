//! Plan scores: Polsby-Popper compactness, its harmonic mean over districts,
//! population imbalance, the weighted dispersion objective, and the two
//! percentage metrics used to report plans.
//!
//! Every function takes district totals, so the same code scores a committed
//! [`Partition`] and a speculative [`PlanView`](crate::partition::PlanView).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partition::{DistrictStats, Partition};

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum ScoreError {
    #[error("non-positive perimeter {0}")]
    NonPositivePerimeter(f64),
    #[error("district {0} is empty")]
    EmptyDistrict(usize),
    #[error("district {0} has zero capacity")]
    ZeroCapacity(usize),
    #[error("lambda {0} outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("plan has no districts")]
    NoDistricts,
}

/// Weight between imbalance and non-compactness in the dispersion score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    lambda: f64,
}

impl ScoreWeights {
    pub fn new(lambda: f64) -> Result<Self, ScoreError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(ScoreError::LambdaOutOfRange(lambda));
        }
        Ok(ScoreWeights { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights { lambda: 0.5 }
    }
}

/// Which formula [`compactness_metric`] reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompactnessFormula {
    /// `100/K * sum PP(V_i)`: higher is more compact.
    #[default]
    MeanPp,
    /// `100/K * sum |1 - PP(V_i)|`: the deficit form, zero for circles.
    AsPrinted,
}

/// `4 pi A / P^2`.
pub fn polsby_popper(area: f64, perimeter: f64) -> Result<f64, ScoreError> {
    if perimeter.is_nan() || perimeter <= 0.0 {
        return Err(ScoreError::NonPositivePerimeter(perimeter));
    }
    Ok(4.0 * PI * area / (perimeter * perimeter))
}

fn district_pp(i: usize, d: &DistrictStats) -> Result<f64, ScoreError> {
    if d.size == 0 {
        return Err(ScoreError::EmptyDistrict(i));
    }
    polsby_popper(d.area, d.perimeter)
}

fn district_imbalance(i: usize, d: &DistrictStats) -> Result<f64, ScoreError> {
    if d.capacity == 0 {
        return Err(ScoreError::ZeroCapacity(i));
    }
    Ok((1.0 - d.population as f64 / d.capacity as f64).abs())
}

/// Polsby-Popper score of every district.
pub fn district_pp_scores<'a>(districts: impl IntoIterator<Item = &'a DistrictStats>) -> Result<Vec<f64>, ScoreError> {
    districts
        .into_iter()
        .enumerate()
        .map(|(i, d)| district_pp(i, d))
        .collect()
}

/// Harmonic mean of the district Polsby-Popper scores.
pub fn harmonic_pp<'a>(districts: impl IntoIterator<Item = &'a DistrictStats>) -> Result<f64, ScoreError> {
    let mut k = 0usize;
    let mut inverse_sum = 0.0;
    for (i, d) in districts.into_iter().enumerate() {
        inverse_sum += 1.0 / district_pp(i, d)?;
        k += 1;
    }
    if k == 0 {
        return Err(ScoreError::NoDistricts);
    }
    Ok(k as f64 / inverse_sum)
}

/// `sum_i |1 - Pop(V_i) / Cap(V_i)|`.
pub fn imbalance<'a>(districts: impl IntoIterator<Item = &'a DistrictStats>) -> Result<f64, ScoreError> {
    districts
        .into_iter()
        .enumerate()
        .map(|(i, d)| district_imbalance(i, d))
        .sum()
}

/// `sum_i |1 - PP(V_i)|`.
pub fn compactness_deficit<'a>(districts: impl IntoIterator<Item = &'a DistrictStats>) -> Result<f64, ScoreError> {
    districts
        .into_iter()
        .enumerate()
        .map(|(i, d)| district_pp(i, d).map(|pp| (1.0 - pp).abs()))
        .sum()
}

/// `lambda * Imb + (1 - lambda) * sum_i |1 - PP(V_i)|`.
pub fn dispersion<'a, I>(districts: I, weights: ScoreWeights) -> Result<f64, ScoreError>
where
    I: IntoIterator<Item = &'a DistrictStats>,
    I::IntoIter: Clone,
{
    let iter = districts.into_iter();
    let imb = imbalance(iter.clone())?;
    let deficit = compactness_deficit(iter)?;
    Ok(weights.lambda * imb + (1.0 - weights.lambda) * deficit)
}

/// `100 * |1 - Imb|`.
pub fn balance_metric<'a>(districts: impl IntoIterator<Item = &'a DistrictStats>) -> Result<f64, ScoreError> {
    Ok(100.0 * (1.0 - imbalance(districts)?).abs())
}

pub fn compactness_metric<'a>(
    districts: impl IntoIterator<Item = &'a DistrictStats>,
    formula: CompactnessFormula,
) -> Result<f64, ScoreError> {
    let pp = district_pp_scores(districts)?;
    if pp.is_empty() {
        return Err(ScoreError::NoDistricts);
    }
    let total: f64 = match formula {
        CompactnessFormula::MeanPp => pp.iter().sum(),
        CompactnessFormula::AsPrinted => pp.iter().map(|p| (1.0 - p).abs()).sum(),
    };
    Ok(100.0 * total / pp.len() as f64)
}

/// All scores of one plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanScores {
    pub imbalance: f64,
    pub harmonic_pp: f64,
    pub dispersion: f64,
    pub balance: f64,
    pub compactness: f64,
}

impl PlanScores {
    pub fn of<'a, I>(districts: I, weights: ScoreWeights, formula: CompactnessFormula) -> Result<Self, ScoreError>
    where
        I: IntoIterator<Item = &'a DistrictStats>,
        I::IntoIter: Clone,
    {
        let iter = districts.into_iter();
        let imbalance = imbalance(iter.clone())?;
        let deficit = compactness_deficit(iter.clone())?;
        Ok(PlanScores {
            imbalance,
            harmonic_pp: harmonic_pp(iter.clone())?,
            dispersion: weights.lambda * imbalance + (1.0 - weights.lambda) * deficit,
            balance: 100.0 * (1.0 - imbalance).abs(),
            compactness: compactness_metric(iter, formula)?,
        })
    }

    pub fn of_partition(
        partition: &Partition,
        weights: ScoreWeights,
        formula: CompactnessFormula,
    ) -> Result<Self, ScoreError> {
        PlanScores::of(partition.districts(), weights, formula)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_grid_instance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stats(population: u64, capacity: u64, area: f64, perimeter: f64) -> DistrictStats {
        DistrictStats {
            population,
            capacity,
            size: 1,
            centers: 1,
            area,
            perimeter,
        }
    }

    /// A district with the requested Polsby-Popper score (unit area).
    fn with_pp(pp: f64) -> DistrictStats {
        stats(10, 10, 1.0, (4.0 * PI / pp).sqrt())
    }

    #[test]
    fn polsby_popper_reference_shapes() {
        assert!((polsby_popper(1.0, 4.0).unwrap() - PI / 4.0).abs() < 1e-12);
        let r = 2.5;
        assert!((polsby_popper(PI * r * r, 2.0 * PI * r).unwrap() - 1.0).abs() < 1e-12);
        assert!((polsby_popper(4.0, 10.0).unwrap() - 16.0 * PI / 100.0).abs() < 1e-12);
        assert!(matches!(
            polsby_popper(1.0, 0.0),
            Err(ScoreError::NonPositivePerimeter(_))
        ));
        assert!(polsby_popper(1.0, -1.0).is_err());
    }

    #[test]
    fn harmonic_mean_examples() {
        let equal = [with_pp(0.5), with_pp(0.5), with_pp(0.5)];
        assert!((harmonic_pp(&equal).unwrap() - 0.5).abs() < 1e-12);
        let mixed = [with_pp(1.0), with_pp(0.5)];
        assert!((harmonic_pp(&mixed).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let mut empty = with_pp(0.5);
        empty.size = 0;
        assert_eq!(harmonic_pp(&[with_pp(0.5), empty]), Err(ScoreError::EmptyDistrict(1)));
    }

    #[test]
    fn imbalance_examples() {
        assert_eq!(imbalance(&[stats(5, 5, 1.0, 4.0), stats(7, 7, 1.0, 4.0)]).unwrap(), 0.0);
        let imb = imbalance(&[stats(8, 10, 1.0, 4.0), stats(13, 10, 1.0, 4.0)]).unwrap();
        assert!((imb - 0.5).abs() < 1e-12);
        assert_eq!(imbalance(&[stats(8, 0, 1.0, 4.0)]), Err(ScoreError::ZeroCapacity(0)));
    }

    #[test]
    fn dispersion_boundary_weights() {
        let ds = [stats(8, 10, 1.0, 4.0), stats(13, 10, 2.0, 6.0)];
        let imb = imbalance(&ds).unwrap();
        assert_eq!(dispersion(&ds, ScoreWeights::new(1.0).unwrap()).unwrap(), imb);
        let circles = [with_pp(1.0), with_pp(1.0)];
        assert!(dispersion(&circles, ScoreWeights::new(0.0).unwrap()).unwrap().abs() < 1e-12);
        assert!(ScoreWeights::new(1.5).is_err());
        assert!(ScoreWeights::new(-0.1).is_err());
    }

    #[test]
    fn dispersion_on_fixed_four_by_four_plan() {
        let g = make_grid_instance(4, 4, 2, 2).unwrap();
        // Left half / right half.
        let assignment: Vec<u32> = (0..16).map(|u| (u % 4 >= 2) as u32).collect();
        let centers: Vec<u32> = g.centers().iter().map(|&c| assignment[c]).collect();
        let p = Partition::from_assignment(&g, assignment.clone()).unwrap();
        if centers[0] == centers[1] {
            // Both centers in one half: the other half has no capacity.
            assert!(dispersion(p.districts(), ScoreWeights::default()).is_err());
            return;
        }
        // Hand check: each half is a 2x4 block, area 8, perimeter 12.
        let pp = 4.0 * PI * 8.0 / 144.0;
        let mut imb = 0.0;
        for d in 0..2u32 {
            let pop: u64 = (0..16).filter(|&u| assignment[u] == d).map(|u| g.population(u)).sum();
            let cap: u64 = (0..16).filter(|&u| assignment[u] == d).map(|u| g.capacity(u)).sum();
            imb += (1.0 - pop as f64 / cap as f64).abs();
        }
        let expected = 0.5 * imb + 0.5 * 2.0 * (1.0 - pp);
        let got = dispersion(p.districts(), ScoreWeights::new(0.5).unwrap()).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn balance_metric_examples() {
        assert_eq!(balance_metric(&[stats(5, 5, 1.0, 4.0)]).unwrap(), 100.0);
        // Imbalance 0.165 reported as 83.5.
        let ds = [stats(835, 1000, 1.0, 4.0)];
        assert!((balance_metric(&ds).unwrap() - 83.5).abs() < 1e-9);
    }

    #[test]
    fn compactness_metric_readings() {
        let circles = [with_pp(1.0), with_pp(1.0)];
        assert!(
            compactness_metric(&circles, CompactnessFormula::AsPrinted)
                .unwrap()
                .abs()
                < 1e-12
        );
        assert!((compactness_metric(&circles, CompactnessFormula::MeanPp).unwrap() - 100.0).abs() < 1e-9);
        let thirty = [with_pp(0.3), with_pp(0.3), with_pp(0.3)];
        assert!((compactness_metric(&thirty, CompactnessFormula::AsPrinted).unwrap() - 70.0).abs() < 1e-9);
        assert!((compactness_metric(&thirty, CompactnessFormula::MeanPp).unwrap() - 30.0).abs() < 1e-9);
        let square = [stats(1, 1, 1.0, 4.0)];
        let expected = 100.0 * PI / 4.0;
        assert!((compactness_metric(&square, CompactnessFormula::MeanPp).unwrap() - expected).abs() < 1e-9);
    }

    /// Direct textbook evaluation over node sets, sharing nothing with the
    /// aggregate path.
    fn oracle_scores(g: &crate::graph::ContiguityGraph, assignment: &[u32], k: usize, lambda: f64) -> (f64, f64, f64) {
        let mut pp = Vec::new();
        let mut imb = 0.0;
        for d in 0..k as u32 {
            let members: Vec<usize> = (0..assignment.len()).filter(|&u| assignment[u] == d).collect();
            let area: f64 = members.iter().map(|&u| g.area(u)).sum();
            let mut perimeter: f64 = members.iter().map(|&u| g.exterior_perimeter(u)).sum();
            for e in g.edges() {
                if assignment[e.endpoints.0] == d && assignment[e.endpoints.1] == d {
                    perimeter -= 2.0 * e.shared_perimeter;
                }
            }
            pp.push(4.0 * PI * area / (perimeter * perimeter));
            let pop: f64 = members.iter().map(|&u| g.population(u) as f64).sum();
            let cap: f64 = members.iter().map(|&u| g.capacity(u) as f64).sum();
            imb += (1.0 - pop / cap).abs();
        }
        let harmonic = k as f64 / pp.iter().map(|p| 1.0 / p).sum::<f64>();
        let j = lambda * imb + (1.0 - lambda) * pp.iter().map(|p| (1.0 - p).abs()).sum::<f64>();
        (harmonic, imb, j)
    }

    #[test]
    fn scores_match_direct_formula_on_random_plans() {
        let g = make_grid_instance(6, 6, 3, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            // Every district keeps its own center so capacities are positive.
            let mut assignment: Vec<u32> = (0..36).map(|_| rng.gen_range(0..3)).collect();
            for (i, &c) in g.centers().iter().enumerate() {
                assignment[c] = i as u32;
            }
            let p = Partition::from_assignment(&g, assignment.clone()).unwrap();
            let (h, imb, j) = oracle_scores(&g, &assignment, 3, 0.3);
            assert!((harmonic_pp(p.districts()).unwrap() - h).abs() < 1e-9);
            assert!((imbalance(p.districts()).unwrap() - imb).abs() < 1e-9);
            let weights = ScoreWeights::new(0.3).unwrap();
            assert!((dispersion(p.districts(), weights).unwrap() - j).abs() < 1e-9);
            assert!((balance_metric(p.districts()).unwrap() - 100.0 * (1.0 - imb).abs()).abs() < 1e-9);
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn polsby_popper_is_scale_invariant(area in 0.01f64..100.0, ratio in 3.6f64..50.0, s in 0.01f64..100.0) {
                let perimeter = ratio * area.sqrt();
                let a = polsby_popper(area, perimeter).unwrap();
                let b = polsby_popper(area * s * s, perimeter * s).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
            }

            #[test]
            fn harmonic_mean_bounded_by_arithmetic_mean(pps in proptest::collection::vec(0.05f64..1.0, 1..12)) {
                let ds: Vec<DistrictStats> = pps.iter().map(|&p| with_pp(p)).collect();
                let h = harmonic_pp(&ds).unwrap();
                let actual = district_pp_scores(&ds).unwrap();
                let mean = actual.iter().sum::<f64>() / actual.len() as f64;
                prop_assert!(h <= mean + 1e-12);
                let all_equal = actual.iter().all(|p| (p - actual[0]).abs() < 1e-12);
                if !all_equal {
                    prop_assert!(h < mean);
                }
            }

            #[test]
            fn dispersion_monotone_in_imbalance(pop_a in 0u64..200, pop_b in 0u64..200, lambda in 0.01f64..1.0) {
                let weights = ScoreWeights::new(lambda).unwrap();
                let a = [stats(pop_a, 100, 1.0, 4.0)];
                let b = [stats(pop_b, 100, 1.0, 4.0)];
                let (ia, ib) = (imbalance(&a).unwrap(), imbalance(&b).unwrap());
                let (ja, jb) = (dispersion(&a, weights).unwrap(), dispersion(&b, weights).unwrap());
                if ia < ib {
                    prop_assert!(ja < jb);
                } else if ia > ib {
                    prop_assert!(ja > jb);
                }
            }
        }
    }
}
