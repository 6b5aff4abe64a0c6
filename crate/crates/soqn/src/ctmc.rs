//! Brute-force oracle: the closed network as an explicit Markov chain.
//!
//! Enumerates every occupancy vector, solves the global balance equations
//! with dense linear algebra, and reads the performance measures straight
//! off the stationary distribution. No product-form shortcut is taken, so
//! this route validates the fast solvers from first principles. The price is
//! a state space that explodes combinatorially, hence the hard refusal limit.

use crate::error::{Error, Result};
use crate::model::ServiceDiscipline;
use crate::solver::{ClosedNetworkInstance, ThroughputProfile};
use std::collections::HashMap;

/// Largest state count the oracle will attempt.
pub const STATE_LIMIT: u128 = 200_000;

/// Number of occupancy vectors for `population` robots over `nodes` nodes,
/// saturating at u128::MAX on overflow.
pub fn state_count(population: usize, nodes: usize) -> u128 {
    if nodes == 0 {
        return if population == 0 { 1 } else { 0 };
    }
    // C(population + nodes - 1, nodes - 1), multiplied incrementally so each
    // intermediate value is itself a binomial coefficient and stays exact.
    let mut result: u128 = 1;
    let k = (nodes - 1).min(population) as u128;
    let a = (population + nodes - 1) as u128;
    for i in 1..=k {
        result = match result.checked_mul(a - k + i) {
            Some(v) => v / i,
            None => return u128::MAX,
        };
    }
    result
}

/// Solves the chain exactly for every population from 1 to the instance's,
/// producing the same profile shape as the fast solvers.
pub fn ctmc_oracle(instance: &ClosedNetworkInstance) -> Result<ThroughputProfile> {
    let j_count = instance.node_count();
    let states = state_count(instance.population(), j_count);
    if states > STATE_LIMIT {
        return Err(Error::StateSpaceTooLarge {
            states,
            limit: STATE_LIMIT,
        });
    }

    let eta = instance.visit_ratios();
    let eta_total: f64 = eta.iter().sum();
    let n_max = instance.population();
    let mut throughput = vec![0.0; n_max + 1];
    let mut queue = vec![vec![0.0; j_count]; n_max + 1];
    let mut sojourn = vec![vec![0.0; j_count]; n_max + 1];

    for n in 1..=n_max {
        let occupancies = enumerate_occupancies(j_count, n);
        let index: HashMap<&[u32], usize> = occupancies
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_slice(), i))
            .collect();
        let m = occupancies.len();

        // Columns of `a` are source states: a[(to, from)] carries the
        // transition rate, diagonals the negated exit rates, and the last
        // row is replaced by the normalization sum(pi) = 1.
        let mut a = nalgebra::DMatrix::<f64>::zeros(m, m);
        let mut scratch = Vec::with_capacity(j_count);
        for (si, state) in occupancies.iter().enumerate() {
            for i in 0..j_count {
                if state[i] == 0 {
                    continue;
                }
                let node = &instance.nodes()[i];
                let service = match node.discipline {
                    ServiceDiscipline::InfiniteServer => node.rate * state[i] as f64,
                    ServiceDiscipline::FcfsSingleServer => node.rate,
                };
                for k in 0..j_count {
                    if k == i {
                        continue;
                    }
                    // Any routing with stationary flows proportional to the
                    // visit ratios yields the same stationary distribution,
                    // so route by the ratios directly.
                    let rate = service * eta[k] / eta_total;
                    if rate == 0.0 {
                        continue;
                    }
                    scratch.clear();
                    scratch.extend_from_slice(state);
                    scratch[i] -= 1;
                    scratch[k] += 1;
                    let ti = index[scratch.as_slice()];
                    a[(ti, si)] += rate;
                    a[(si, si)] -= rate;
                }
            }
        }
        for si in 0..m {
            a[(m - 1, si)] = 1.0;
        }
        let mut b = nalgebra::DVector::zeros(m);
        b[m - 1] = 1.0;
        let pi = a.lu().solve(&b).ok_or(Error::NotIrreducible)?;

        let mut x = 0.0;
        for (si, state) in occupancies.iter().enumerate() {
            if state[0] > 0 {
                let node = &instance.nodes()[0];
                let service = match node.discipline {
                    ServiceDiscipline::InfiniteServer => node.rate * state[0] as f64,
                    ServiceDiscipline::FcfsSingleServer => node.rate,
                };
                x += pi[si] * service;
            }
            for j in 0..j_count {
                queue[n][j] += pi[si] * state[j] as f64;
            }
        }
        x /= eta[0];
        throughput[n] = x;
        for j in 0..j_count {
            sojourn[n][j] = queue[n][j] / (x * eta[j]);
        }
    }
    Ok(ThroughputProfile::from_parts(throughput, queue, sojourn))
}

fn enumerate_occupancies(nodes: usize, population: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; nodes];
    fill(&mut out, &mut current, 0, population as u32);
    out
}

fn fill(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, node: usize, remaining: u32) {
    if node + 1 == current.len() {
        current[node] = remaining;
        out.push(current.clone());
        return;
    }
    for k in 0..=remaining {
        current[node] = k;
        fill(out, current, node + 1, remaining - k);
    }
}
