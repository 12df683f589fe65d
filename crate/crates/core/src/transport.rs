//! Stochastic transportation benchmark.
//!
//! Random draws come from ChaCha20 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)`, in this fixed order: factory coordinates, center
//! coordinates, mean demands, raw capacities, then the demand samples row by
//! row. Capacities are rescaled afterwards so their total is 1.5 times the
//! largest total sampled demand.

use crate::error::Result;
use crate::model::{DrccpInstance, NormChoice, Polyhedron, SafetyRow, SampleSet};
use crate::numfmt::to_json_string;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Ratio of total capacity to the largest total sampled demand.
pub const CAPACITY_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportInstance {
    #[serde(rename = "F")]
    pub factories: usize,
    #[serde(rename = "D")]
    pub centers: usize,
    pub factory_xy: Vec<[f64; 2]>,
    pub center_xy: Vec<[f64; 2]>,
    /// `cost[f][d]`, Euclidean distance.
    pub cost: Vec<Vec<f64>>,
    pub capacity: Vec<f64>,
    pub mean_demand: Vec<f64>,
    /// `samples[i][d]`.
    pub samples: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Draws an instance; identical arguments give identical instances.
pub fn generate(factories: usize, centers: usize, n: usize, seed: u64) -> TransportInstance {
    assert!(factories >= 1 && centers >= 1 && n >= 1, "F, D and N must be positive");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha20Rng| [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
    let factory_xy: Vec<[f64; 2]> = (0..factories).map(|_| point(&mut rng)).collect();
    let center_xy: Vec<[f64; 2]> = (0..centers).map(|_| point(&mut rng)).collect();
    let mean_demand: Vec<f64> = (0..centers).map(|_| rng.gen_range(0.0..10.0)).collect();
    let raw_cap: Vec<f64> = (0..factories).map(|_| rng.gen_range(0.0..1.0)).collect();
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            mean_demand
                .iter()
                .map(|&mu| if mu > 0.0 { rng.gen_range(0.8 * mu..=1.2 * mu) } else { 0.0 })
                .collect()
        })
        .collect();
    let peak = samples.iter().map(|s| s.iter().sum::<f64>()).fold(0.0, f64::max);
    let raw_total: f64 = raw_cap.iter().sum();
    let capacity = raw_cap.iter().map(|c| c / raw_total * CAPACITY_FACTOR * peak).collect();
    let cost = factory_xy
        .iter()
        .map(|f| center_xy.iter().map(|c| ((f[0] - c[0]).powi(2) + (f[1] - c[1]).powi(2)).sqrt()).collect())
        .collect();
    TransportInstance { factories, centers, factory_xy, center_xy, cost, capacity, mean_demand, samples, seed }
}

impl TransportInstance {
    /// Column of shipment `f -> d`.
    pub fn col(&self, f: usize, d: usize) -> usize {
        f * self.centers + d
    }

    pub fn to_json(&self) -> String {
        to_json_string(self).expect("transport instance serializes")
    }

    /// Big-M valid for every demand row: `max(sum m - min xi, max xi)`.
    pub fn big_m(&self) -> f64 {
        let total: f64 = self.capacity.iter().sum();
        let lo = self.samples.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let hi = self.samples.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        (total - lo).max(hi)
    }

    /// Demand rows `sum_f x_fd >= xi_d` as safety rows over capacity-bounded shipments.
    pub fn to_drccp(&self, epsilon: f64, theta: f64, norm: NormChoice) -> Result<DrccpInstance> {
        let (nf, nd) = (self.factories, self.centers);
        let l = nf * nd;
        let rows = (0..nd)
            .map(|d| {
                let mut a = vec![0.0; l];
                for f in 0..nf {
                    a[self.col(f, d)] = -1.0;
                }
                let mut b = vec![0.0; nd];
                b[d] = -1.0;
                SafetyRow { a, b, d: 0.0 }
            })
            .collect();
        let g_mat = (0..nf)
            .map(|f| {
                let mut g = vec![0.0; l];
                for d in 0..nd {
                    g[self.col(f, d)] = 1.0;
                }
                g
            })
            .collect();
        let mut ub = vec![0.0; l];
        for f in 0..nf {
            for d in 0..nd {
                ub[self.col(f, d)] = self.capacity[f];
            }
        }
        let domain = Polyhedron { g_mat, g_rhs: self.capacity.clone(), lb: vec![0.0; l], ub };
        let cost = (0..l).map(|j| self.cost[j / nd][j % nd]).collect();
        DrccpInstance::new(SampleSet::new(self.samples.clone())?, rows, domain, cost, epsilon, theta, norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_scaled() {
        let a = generate(2, 3, 10, 42);
        let b = generate(2, 3, 10, 42);
        assert_eq!(a.to_json(), b.to_json());
        assert_ne!(a.to_json(), generate(2, 3, 10, 43).to_json());
        let peak = a.samples.iter().map(|s| s.iter().sum::<f64>()).fold(0.0, f64::max);
        let total: f64 = a.capacity.iter().sum();
        assert!((total - 1.5 * peak).abs() <= 1e-9 * total);
    }

    #[test]
    fn demand_rows_have_unit_norm() {
        let tp = generate(3, 4, 5, 1);
        for norm in [NormChoice::One, NormChoice::Two, NormChoice::Inf] {
            let inst = tp.to_drccp(0.1, 0.01, norm).unwrap();
            assert_eq!(inst.num_rows(), 4);
            assert!(inst.row_norms().iter().all(|&v| v == 1.0));
        }
    }
}
