//! Brute-force probability oracle shared by the integration tests.
//!
//! Deliberately independent of `JointTable`: cells are indexed with the
//! first variable as the least significant bit, and every quantity is a
//! plain sum over cells.

#![allow(dead_code)]

use causal_bias::table::JointTable;

pub struct Brute {
    pub names: Vec<String>,
    pub p: Vec<f64>,
}

impl Brute {
    /// Builds the joint from a chain-rule factorization: `factor(values)`
    /// returns the probability of one full assignment.
    pub fn from_factors(names: &[&str], factor: impl Fn(&[u8]) -> f64) -> Self {
        let k = names.len();
        let p = (0..1usize << k)
            .map(|cell| {
                let v: Vec<u8> = (0..k).map(|i| ((cell >> i) & 1) as u8).collect();
                factor(&v)
            })
            .collect();
        Brute {
            names: names.iter().map(|s| s.to_string()).collect(),
            p,
        }
    }

    /// Copies a table cell by cell through `JointTable::prob`.
    pub fn from_table(t: &JointTable) -> Self {
        let names: Vec<&str> = t.variables().iter().map(String::as_str).collect();
        Brute::from_factors(&names, |v| {
            let a: Vec<(&str, u8)> = names.iter().copied().zip(v.iter().copied()).collect();
            t.prob(&a).unwrap()
        })
    }

    fn idx(&self, name: &str) -> usize {
        self.names.iter().position(|n| n == name).unwrap()
    }

    pub fn prob(&self, event: &[(&str, u8)]) -> f64 {
        let ev: Vec<(usize, u8)> = event.iter().map(|(n, v)| (self.idx(n), *v)).collect();
        self.p
            .iter()
            .enumerate()
            .filter(|(cell, _)| ev.iter().all(|(i, v)| ((cell >> i) & 1) as u8 == *v))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn cond(&self, event: &[(&str, u8)], given: &[(&str, u8)]) -> f64 {
        let mut both = event.to_vec();
        both.extend_from_slice(given);
        self.prob(&both) / self.prob(given)
    }

    /// Sum over strata s of adj of (P(y1|a1,s) - P(y1|a0,s)) P(s).
    pub fn sd(&self, y: &str, a: &str, adj: &[&str]) -> f64 {
        let mut total = 0.0;
        for s in 0..1usize << adj.len() {
            let stratum: Vec<(&str, u8)> =
                adj.iter().enumerate().map(|(i, n)| (*n, ((s >> i) & 1) as u8)).collect();
            let ps = self.prob(&stratum);
            if ps == 0.0 {
                continue;
            }
            let mut g1 = stratum.clone();
            g1.push((a, 1));
            let mut g0 = stratum.clone();
            g0.push((a, 0));
            total += (self.cond(&[(y, 1)], &g1) - self.cond(&[(y, 1)], &g0)) * ps;
        }
        total
    }

    /// P(y1 | a=i, b=j).
    pub fn cell(&self, y: &str, a: &str, i: u8, b: &str, j: u8) -> f64 {
        self.cond(&[(y, 1)], &[(a, i), (b, j)])
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
