//! Log-space dynamic programming over a linear chain.
//!
//! All scores are natural-log potentials. Illegal transitions and
//! disallowed labels carry `-inf` and drop out of every sum and max.

/// Per-sentence scores: `emissions[t * L + y]`, `transitions[from * L + to]`,
/// `start[y]`, with illegal entries already set to `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub n_labels: usize,
    pub emissions: Vec<f64>,
    pub transitions: Vec<f64>,
    pub start: Vec<f64>,
}

impl Potentials {
    pub fn len(&self) -> usize {
        self.emissions.len() / self.n_labels
    }

    pub fn is_empty(&self) -> bool {
        self.emissions.is_empty()
    }

    #[inline]
    pub fn emission(&self, t: usize, y: usize) -> f64 {
        self.emissions[t * self.n_labels + y]
    }

    #[inline]
    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transitions[from * self.n_labels + to]
    }
}

/// Which labels may appear at each position. Used for constrained sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    n_labels: usize,
    allowed: Vec<bool>,
}

impl LabelMask {
    pub fn all(len: usize, n_labels: usize) -> Self {
        LabelMask {
            n_labels,
            allowed: vec![true; len * n_labels],
        }
    }

    pub fn restrict(&mut self, t: usize, keep: impl Fn(usize) -> bool) {
        for y in 0..self.n_labels {
            if !keep(y) {
                self.allowed[t * self.n_labels + y] = false;
            }
        }
    }

    #[inline]
    pub fn allows(&self, t: usize, y: usize) -> bool {
        self.allowed[t * self.n_labels + y]
    }
}

pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Forward messages `alpha[t * L + y]` and the log partition.
pub fn forward(pot: &Potentials, mask: Option<&LabelMask>) -> (Vec<f64>, f64) {
    let l = pot.n_labels;
    let n = pot.len();
    let ok = |t: usize, y: usize| mask.is_none_or(|m| m.allows(t, y));
    let mut alpha = vec![f64::NEG_INFINITY; n * l];
    for y in 0..l {
        if ok(0, y) {
            alpha[y] = pot.start[y] + pot.emission(0, y);
        }
    }
    for t in 1..n {
        let (prev, cur) = alpha.split_at_mut(t * l);
        let prev = &prev[(t - 1) * l..];
        for y in 0..l {
            if !ok(t, y) {
                continue;
            }
            let s = log_sum_exp((0..l).map(|p| prev[p] + pot.transition(p, y)));
            cur[y] = s + pot.emission(t, y);
        }
    }
    let log_z = log_sum_exp(alpha[(n - 1) * l..].iter().copied());
    (alpha, log_z)
}

/// Backward messages `beta[t * L + y]` (excluding position t's own emission)
/// and the log partition computed from them.
pub fn backward(pot: &Potentials, mask: Option<&LabelMask>) -> (Vec<f64>, f64) {
    let l = pot.n_labels;
    let n = pot.len();
    let ok = |t: usize, y: usize| mask.is_none_or(|m| m.allows(t, y));
    let mut beta = vec![f64::NEG_INFINITY; n * l];
    for y in 0..l {
        if ok(n - 1, y) {
            beta[(n - 1) * l + y] = 0.0;
        }
    }
    for t in (0..n.saturating_sub(1)).rev() {
        for y in 0..l {
            if !ok(t, y) {
                continue;
            }
            let next = &beta[(t + 1) * l..(t + 2) * l];
            beta[t * l + y] = log_sum_exp(
                (0..l).map(|q| pot.transition(y, q) + pot.emission(t + 1, q) + next[q]),
            );
        }
    }
    let log_z = log_sum_exp(
        (0..l)
            .filter(|&y| ok(0, y))
            .map(|y| pot.start[y] + pot.emission(0, y) + beta[y]),
    );
    (beta, log_z)
}

/// Best label sequence. Ties go to the lower label index.
pub fn viterbi(pot: &Potentials) -> Vec<usize> {
    let l = pot.n_labels;
    let n = pot.len();
    let mut delta = vec![f64::NEG_INFINITY; n * l];
    let mut back = vec![0usize; n * l];
    for y in 0..l {
        delta[y] = pot.start[y] + pot.emission(0, y);
    }
    for t in 1..n {
        for y in 0..l {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for p in 0..l {
                let s = delta[(t - 1) * l + p] + pot.transition(p, y);
                if s > best {
                    best = s;
                    arg = p;
                }
            }
            delta[t * l + y] = best + pot.emission(t, y);
            back[t * l + y] = arg;
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for y in 0..l {
        if delta[(n - 1) * l + y] > best {
            best = delta[(n - 1) * l + y];
            last = y;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t * l + path[t]];
    }
    path
}

/// Forward and backward messages for one sentence.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub potentials: Potentials,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub log_partition: f64,
    /// Log partition as recomputed from the backward pass.
    pub log_partition_backward: f64,
}

impl Lattice {
    pub fn new(potentials: Potentials) -> Self {
        let (alpha, log_z) = forward(&potentials, None);
        let (beta, log_z_b) = backward(&potentials, None);
        Lattice {
            potentials,
            alpha,
            beta,
            log_partition: log_z,
            log_partition_backward: log_z_b,
        }
    }

    pub fn len(&self) -> usize {
        self.potentials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.potentials.is_empty()
    }

    /// P(y_t = y).
    pub fn node_marginal(&self, t: usize, y: usize) -> f64 {
        let l = self.potentials.n_labels;
        (self.alpha[t * l + y] + self.beta[t * l + y] - self.log_partition).exp()
    }

    /// P(y_{t-1} = from, y_t = to) for t ≥ 1.
    pub fn edge_marginal(&self, t: usize, from: usize, to: usize) -> f64 {
        let l = self.potentials.n_labels;
        (self.alpha[(t - 1) * l + from]
            + self.potentials.transition(from, to)
            + self.potentials.emission(t, to)
            + self.beta[t * l + to]
            - self.log_partition)
            .exp()
    }
}
