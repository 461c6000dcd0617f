//! Independent reference implementations shared by the integration tests.
//! Nothing here calls the library routine it is used to check.

#![allow(dead_code)]

use std::collections::BTreeSet;

use civrep::data::{Dataset, DatasetMeta};
use civrep::diffnum::{DiagGaussian, Matrix};
use civrep::dvae::{draw_noise, init_model, objective_with_grads, objective_with_noise, Batch, ModelConfig, OutcomeKind};
use civrep::graph::Dag;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Random DAG on `n` nodes named `N0..`; edges only go from lower to higher
/// index, each present with probability `p`.
pub struct RandomDag {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub dag: Dag,
}

pub fn random_dag<R: Rng>(rng: &mut R, n: usize, p: f64) -> RandomDag {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let names: Vec<String> = (0..n).map(|i| format!("N{i}")).collect();
    let named: Vec<(&str, &str)> = edges.iter().map(|&(a, b)| (names[a].as_str(), names[b].as_str())).collect();
    // Passing every node through the latent list registers isolated ones;
    // latency has no effect on d-separation.
    let all: Vec<&str> = names.iter().map(String::as_str).collect();
    let dag = Dag::from_edges(&named, &all).expect("forward edges are acyclic");
    RandomDag { n, edges, dag }
}

impl RandomDag {
    /// Library index of node `Ni`.
    pub fn idx(&self, i: usize) -> usize {
        self.dag.node(&format!("N{i}")).unwrap()
    }

    fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a, b))
    }

    fn descendants(&self, v: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            for &(a, b) in &self.edges {
                if a == u && out.insert(b) {
                    stack.push(b);
                }
            }
        }
        out
    }

    /// A path is open when every interior collider is in `z` or has a
    /// descendant in `z`, and every interior non-collider is outside `z`.
    pub fn path_open(&self, path: &[usize], z: &BTreeSet<usize>) -> bool {
        path.windows(3).all(|w| {
            let (u, v, x) = (w[0], w[1], w[2]);
            if self.has_edge(u, v) && self.has_edge(x, v) {
                z.contains(&v) || self.descendants(v).iter().any(|d| z.contains(d))
            } else {
                !z.contains(&v)
            }
        })
    }

    /// Enumerates every simple path of the skeleton between `a` and `b`;
    /// d-separated iff none is open.
    pub fn brute_force_separated(&self, a: usize, b: usize, z: &BTreeSet<usize>) -> bool {
        let adj: Vec<Vec<usize>> = (0..self.n)
            .map(|v| (0..self.n).filter(|&u| self.has_edge(u, v) || self.has_edge(v, u)).collect())
            .collect();
        let mut path = vec![a];
        let mut on_path = vec![false; self.n];
        on_path[a] = true;
        !self.open_path_from(&adj, b, z, &mut path, &mut on_path)
    }

    fn open_path_from(
        &self,
        adj: &[Vec<usize>],
        b: usize,
        z: &BTreeSet<usize>,
        path: &mut Vec<usize>,
        on_path: &mut [bool],
    ) -> bool {
        let last = *path.last().unwrap();
        if last == b {
            return self.path_open(path, z);
        }
        for &u in &adj[last] {
            if on_path[u] {
                continue;
            }
            path.push(u);
            on_path[u] = true;
            // prune as soon as the prefix is blocked at its second-to-last node
            let ok = self.path_open(path, z) || u == b;
            let found = ok && self.open_path_from(adj, b, z, path, on_path);
            on_path[u] = false;
            path.pop();
            if found {
                return true;
            }
        }
        false
    }

    /// Walk validity for witness trails, which may revisit nodes: every
    /// step follows an edge and every interior position is open.
    pub fn walk_open(&self, walk: &[usize], z: &BTreeSet<usize>) -> bool {
        walk.windows(2).all(|w| self.has_edge(w[0], w[1]) || self.has_edge(w[1], w[0])) && self.path_open(walk, z)
    }
}

/// All subsets of `pool` with at most `k` members.
pub fn subsets_up_to(pool: &[usize], k: usize) -> Vec<BTreeSet<usize>> {
    let mut out = vec![BTreeSet::new()];
    for &v in pool {
        let extended: Vec<BTreeSet<usize>> = out
            .iter()
            .filter(|s| s.len() < k)
            .map(|s| {
                let mut t = s.clone();
                t.insert(v);
                t
            })
            .collect();
        out.extend(extended);
    }
    out
}

/// Outcome of checking one (model, batch) draw against central differences.
pub struct GradCheck {
    pub max_rel_err: f64,
    pub coordinates: usize,
    /// Coordinates re-evaluated with the smaller step after the first step
    /// straddled an activation kink.
    pub fallbacks: usize,
}

pub const FD_STEP: f64 = 1e-4;
pub const FD_FALLBACK_STEP: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps exactly-zero gradients
/// from dividing by zero.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Tiny model: latent dims 1/2/2, one hidden layer, batch of 4, random
/// loss weights, outcome kind and Monte-Carlo sample count.
pub fn gradient_check(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let binary = rng.random::<bool>();
    let cfg = ModelConfig {
        d_s: 1,
        d_c: 2,
        d_f: 2,
        hidden: vec![rng.random_range(2..=4)],
        alpha: rng.random_range(0.0..2.0),
        beta: rng.random_range(0.0..2.0),
        mc_samples: rng.random_range(1..=2),
        outcome: if binary { OutcomeKind::Binary } else { OutcomeKind::Continuous },
        seed: rng.random(),
        ..Default::default()
    };
    let rows = 4;
    let x_dim = rng.random_range(2..=3);
    let mut params = init_model(&cfg, x_dim).unwrap();
    let x = Matrix::from_shape_simple_fn((rows, x_dim), || rng.sample(StandardNormal));
    let w = Array1::from_shape_fn(rows, |i| (i % 2) as f64);
    let y = Array1::from_shape_fn(rows, |_| {
        if binary {
            rng.random_range(0..2) as f64
        } else {
            rng.sample::<f64, _>(StandardNormal)
        }
    });
    let batch = Batch::new(x, &w, &y).unwrap();
    let noise = draw_noise(&mut rng, rows, &cfg);

    let (_, grads) = objective_with_grads(&params, &batch, &noise, cfg.alpha, cfg.beta).unwrap();
    let shapes: Vec<(usize, usize)> = params.params().iter().map(|m| m.dim()).collect();
    let mut out = GradCheck {
        max_rel_err: 0.0,
        coordinates: 0,
        fallbacks: 0,
    };
    for (k, &(r, c)) in shapes.iter().enumerate() {
        for i in 0..r {
            for j in 0..c {
                let mut central = |h: f64| {
                    let orig = params.params()[k][[i, j]];
                    params.params_mut()[k][[i, j]] = orig + h;
                    let up = objective_with_noise(&params, &batch, &noise, cfg.alpha, cfg.beta).unwrap().loss;
                    params.params_mut()[k][[i, j]] = orig - h;
                    let down = objective_with_noise(&params, &batch, &noise, cfg.alpha, cfg.beta).unwrap().loss;
                    params.params_mut()[k][[i, j]] = orig;
                    (up - down) / (2.0 * h)
                };
                let analytic = grads[k][[i, j]];
                let mut e = rel_err(analytic, central(FD_STEP));
                if e >= GRAD_TOL {
                    out.fallbacks += 1;
                    e = rel_err(analytic, central(FD_FALLBACK_STEP));
                }
                out.max_rel_err = out.max_rel_err.max(e);
                out.coordinates += 1;
            }
        }
    }
    out
}

/// Monte-Carlo estimate of `E_q[ln q - ln p]` and its standard error.
pub fn kl_monte_carlo<R: Rng>(q: &DiagGaussian, p: &DiagGaussian, draws: usize, rng: &mut R) -> (f64, f64) {
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut z = vec![0.0; q.dim()];
    for _ in 0..draws {
        for (k, zk) in z.iter_mut().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            *zk = q.mu()[k] + q.sigma()[k] * e;
        }
        let v = q.log_density(&z) - p.log_density(&z);
        sum += v;
        sum_sq += v * v;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ordinary least squares with classical standard errors, via the normal
/// equations and a Gauss-Jordan inverse. `design` rows must include any
/// intercept column.
pub fn ols_with_se(design: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = design[0].len();
    let n = design.len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (row, &yi) in design.iter().zip(y) {
        for a in 0..k {
            xty[a] += row[a] * yi;
            for b in 0..k {
                xtx[a][b] += row[a] * row[b];
            }
        }
    }
    let inv = invert(xtx);
    let beta: Vec<f64> = (0..k).map(|a| (0..k).map(|b| inv[a][b] * xty[b]).sum()).collect();
    let rss: f64 = design
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let fit: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            (yi - fit).powi(2)
        })
        .sum();
    let sigma2 = rss / (n - k) as f64;
    let se = (0..k).map(|a| (sigma2 * inv[a][a]).sqrt()).collect();
    (beta, se)
}

fn invert(mut m: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let k = m.len();
    let mut inv: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| (i == j) as u8 as f64).collect()).collect();
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let d = m[col][col];
        assert!(d.abs() > 1e-12, "singular normal equations");
        for j in 0..k {
            m[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..k {
            if r != col {
                let f = m[r][col];
                for j in 0..k {
                    m[r][j] -= f * m[col][j];
                    inv[r][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

/// Table with a binary instrument `S`, a binary stratum `Z`, cell-balanced
/// noise and an effect of exactly 2. All values are dyadic so every mean
/// is exact in binary floating point.
pub fn wald_table(effect: f64, treated: [[usize; 2]; 2]) -> Dataset {
    let per_cell = 8;
    let (mut s, mut z, mut w, mut y) = (vec![], vec![], vec![], vec![]);
    for (zv, row) in treated.iter().enumerate() {
        for (sv, &count) in row.iter().enumerate() {
            for i in 0..per_cell {
                let wi = (i < count) as u8 as f64;
                let noise = if i % 2 == 0 { 0.5 } else { -0.5 };
                s.push(sv as f64);
                z.push(zv as f64);
                w.push(wi);
                y.push(1.0 + effect * wi + 3.0 * zv as f64 + noise);
            }
        }
    }
    let n = s.len();
    let mut x = Array2::zeros((n, 2));
    x.column_mut(0).assign(&Array1::from(s));
    x.column_mut(1).assign(&Array1::from(z));
    Dataset {
        feature_names: vec!["S".into(), "Z".into()],
        x,
        w: Array1::from(w),
        y: Array1::from(y),
        y0: None,
        y1: None,
        hidden: None,
        row_ids: (0..n).collect(),
        meta: DatasetMeta::default(),
    }
}
