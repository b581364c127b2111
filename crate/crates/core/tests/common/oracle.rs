//! Reference recurrences the sketch-based optimizers are checked against.

use fetchsim_core::data::ClientShard;
use fetchsim_core::models::ModelSpec;
use fetchsim_core::sim::weighted_loss_and_grad;
use std::collections::BTreeSet;

/// Uncompressed momentum + error-feedback reference. Selection is exact
/// top-k by magnitude with ties to the lower index, implemented here so it
/// shares nothing with the sketch path.
pub struct EfOracle {
    pub u: Vec<f64>,
    pub e: Vec<f64>,
    pub w: Vec<f64>,
    eta: f64,
    rho: f64,
    k: usize,
    masking: bool,
}

impl EfOracle {
    pub fn new(w0: Vec<f64>, eta: f64, rho: f64, k: usize, masking: bool) -> Self {
        let d = w0.len();
        Self { u: vec![0.0; d], e: vec![0.0; d], w: w0, eta, rho, k, masking }
    }

    fn exact_top_k(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.e.len()).filter(|&i| self.e[i] != 0.0).collect();
        idx.sort_by(|&a, &b| {
            self.e[b]
                .abs()
                .partial_cmp(&self.e[a].abs())
                .unwrap()
                .then(a.cmp(&b))
        });
        idx.truncate(self.k);
        idx
    }

    /// One round; returns the selected support.
    pub fn step(&mut self, g: &[f64]) -> BTreeSet<usize> {
        for (u, &gi) in self.u.iter_mut().zip(g) {
            *u = self.rho * *u + gi;
        }
        for (e, &ui) in self.e.iter_mut().zip(&self.u) {
            *e += self.eta * ui;
        }
        let selected = self.exact_top_k();
        for &i in &selected {
            self.w[i] -= self.e[i];
            self.e[i] = 0.0;
            if self.masking {
                self.u[i] = 0.0;
            }
        }
        selected.into_iter().collect()
    }
}

/// Full-batch gradient descent on the weighted risk.
pub fn centralized_gd(
    model: &ModelSpec,
    shards: &[ClientShard],
    mut w: Vec<f64>,
    lr: f64,
    steps: usize,
) -> Vec<f64> {
    for _ in 0..steps {
        let (_, g) = weighted_loss_and_grad(model, &w, shards).unwrap();
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= lr * gi;
        }
    }
    w
}
