use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Selection, SelectionProblem, UNLIMITED};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Exact,
    Greedy,
}

impl Solver {
    pub fn solve(self, problem: &SelectionProblem) -> Selection {
        match self {
            Solver::Exact => solve_exact(problem),
            Solver::Greedy => solve_greedy(problem),
        }
    }
}

impl std::str::FromStr for Solver {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Solver::Exact),
            "greedy" => Ok(Solver::Greedy),
            other => Err(format!("unknown solver `{other}` (expected exact or greedy)")),
        }
    }
}

/// Positive-score hypotheses in branching order: score descending, then
/// class, then index.
fn branching_order(problem: &SelectionProblem) -> Vec<usize> {
    let mut order: Vec<usize> = (0..problem.len()).filter(|&i| problem.hypotheses[i].score > 0.0).collect();
    order.sort_by(|&a, &b| {
        let (ha, hb) = (&problem.hypotheses[a], &problem.hypotheses[b]);
        hb.score
            .total_cmp(&ha.score)
            .then(ha.class_id.cmp(&hb.class_id))
            .then(ha.index.cmp(&hb.index))
            .then(a.cmp(&b))
    });
    order
}

pub fn solve_greedy(problem: &SelectionProblem) -> Selection {
    let n = problem.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in &problem.conflicts {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut chosen = vec![false; n];
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for i in branching_order(problem) {
        let class = problem.hypotheses[i].class_id;
        let cap = problem.capacities.get(&class).copied().unwrap_or(0);
        let used = counts.entry(class).or_default();
        if *used >= cap || adj[i].iter().any(|&j| chosen[j]) {
            continue;
        }
        *used += 1;
        chosen[i] = true;
    }
    Selection {
        objective: problem.objective(&chosen),
        chosen,
        nodes: 1,
    }
}

/// Exhaustive enumeration of all `2^n` indicator vectors. Intended as a
/// reference for small problems only.
pub fn solve_brute_force(problem: &SelectionProblem) -> Selection {
    let n = problem.len();
    assert!(n <= 24, "brute force limited to 24 hypotheses");
    let mut conflict_mask = vec![0u32; n];
    for &(a, b) in &problem.conflicts {
        conflict_mask[a] |= 1 << b;
        conflict_mask[b] |= 1 << a;
    }
    let classes: Vec<u32> = problem.capacities.keys().copied().collect();
    let class_of: Vec<usize> = problem
        .hypotheses
        .iter()
        .map(|h| classes.binary_search(&h.class_id).unwrap())
        .collect();
    let caps: Vec<usize> = classes.iter().map(|c| problem.capacities[c]).collect();
    let mut best_mask = 0u32;
    let mut best = 0.0;
    let mut counts = vec![0usize; classes.len()];
    for mask in 0u32..(1u32 << n) {
        counts.iter_mut().for_each(|c| *c = 0);
        let mut ok = true;
        let mut value = 0.0;
        for i in 0..n {
            if mask >> i & 1 == 0 {
                continue;
            }
            counts[class_of[i]] += 1;
            if mask & conflict_mask[i] != 0 || counts[class_of[i]] > caps[class_of[i]] {
                ok = false;
                break;
            }
            value += problem.hypotheses[i].score;
        }
        if ok && value > best {
            best = value;
            best_mask = mask;
        }
    }
    let chosen: Vec<bool> = (0..n).map(|i| best_mask >> i & 1 == 1).collect();
    Selection {
        objective: problem.objective(&chosen),
        chosen,
        nodes: 1u64 << n,
    }
}

type Bits = Vec<u64>;

fn bit_set(b: &mut Bits, i: usize) {
    b[i / 64] |= 1 << (i % 64);
}

fn bit_clear(b: &mut Bits, i: usize) {
    b[i / 64] &= !(1 << (i % 64));
}

fn first_bit(b: &Bits) -> Option<usize> {
    b.iter()
        .enumerate()
        .find(|(_, &w)| w != 0)
        .map(|(k, w)| k * 64 + w.trailing_zeros() as usize)
}

fn for_each_bit(b: &Bits, mut f: impl FnMut(usize) -> bool) {
    for (k, &w) in b.iter().enumerate() {
        let mut w = w;
        while w != 0 {
            let i = k * 64 + w.trailing_zeros() as usize;
            if !f(i) {
                return;
            }
            w &= w - 1;
        }
    }
}

struct Search {
    scores: Vec<f64>,
    class: Vec<usize>,
    clique: Vec<usize>,
    adj: Vec<Bits>,
    class_mask: Vec<Bits>,
    caps: Vec<usize>,
    taken: Vec<usize>,
    best_value: f64,
    best: Vec<usize>,
    nodes: u64,
    // Scratch for the bound.
    class_used: Vec<usize>,
    clique_stamp: Vec<u64>,
    clique_best: Vec<f64>,
}

impl Search {
    /// Upper bound on the value attainable from `avail`: the smaller of the
    /// capacity bound (top remaining scores per class, conflicts ignored)
    /// and the clique-cover bound (at most one vertex per clique, at most
    /// the total remaining capacity).
    fn bound(&mut self, avail: &Bits) -> f64 {
        self.class_used.iter_mut().for_each(|c| *c = 0);
        let stamp = self.nodes;
        self.clique_best.clear();
        let mut class_sum = 0.0;
        let (scores, class, clique, caps) = (&self.scores, &self.class, &self.clique, &self.caps);
        let (class_used, clique_stamp, clique_best) = (&mut self.class_used, &mut self.clique_stamp, &mut self.clique_best);
        for_each_bit(avail, |r| {
            let c = class[r];
            if class_used[c] < caps[c] {
                class_used[c] += 1;
                class_sum += scores[r];
            }
            let k = clique[r];
            if clique_stamp[k] != stamp {
                clique_stamp[k] = stamp;
                clique_best.push(scores[r]);
            }
            true
        });
        let total_cap = self.caps.iter().fold(0usize, |acc, &c| acc.saturating_add(c));
        let clique_sum: f64 = self.clique_best.iter().take(total_cap).sum();
        class_sum.min(clique_sum)
    }

    fn dfs(&mut self, avail: Bits, value: f64) {
        self.nodes += 1;
        let Some(v) = first_bit(&avail) else {
            if value > self.best_value {
                self.best_value = value;
                self.best = self.taken.clone();
            }
            return;
        };
        if value + self.bound(&avail) <= self.best_value {
            return;
        }
        let c = self.class[v];
        // Include v.
        let mut inc = avail.clone();
        for (w, a) in inc.iter_mut().zip(&self.adj[v]) {
            *w &= !a;
        }
        bit_clear(&mut inc, v);
        self.caps[c] -= 1;
        if self.caps[c] == 0 {
            for (w, m) in inc.iter_mut().zip(&self.class_mask[c]) {
                *w &= !m;
            }
        }
        self.taken.push(v);
        self.dfs(inc, value + self.scores[v]);
        self.taken.pop();
        self.caps[c] += 1;
        // Exclude v.
        let mut exc = avail;
        bit_clear(&mut exc, v);
        self.dfs(exc, value);
    }
}

/// Provably optimal selection by depth-first branch and bound, branching on
/// the highest-score undecided hypothesis (include first).
pub fn solve_exact(problem: &SelectionProblem) -> Selection {
    let n = problem.len();
    let order = branching_order(problem);
    let m = order.len();
    let words = m.div_ceil(64).max(1);
    let mut local = vec![usize::MAX; n];
    for (r, &i) in order.iter().enumerate() {
        local[i] = r;
    }
    let mut adj = vec![vec![0u64; words]; m];
    for &(a, b) in &problem.conflicts {
        let (ra, rb) = (local[a], local[b]);
        if ra != usize::MAX && rb != usize::MAX {
            bit_set(&mut adj[ra], rb);
            bit_set(&mut adj[rb], ra);
        }
    }
    let classes: Vec<u32> = problem.capacities.keys().copied().collect();
    let class: Vec<usize> = order
        .iter()
        .map(|&i| classes.binary_search(&problem.hypotheses[i].class_id).unwrap())
        .collect();
    let caps: Vec<usize> = classes.iter().map(|c| problem.capacities[c]).collect();
    let mut class_mask = vec![vec![0u64; words]; classes.len()];
    for (r, &c) in class.iter().enumerate() {
        bit_set(&mut class_mask[c], r);
    }
    // Greedy clique partition in branching order.
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    let mut clique = vec![0usize; m];
    for r in 0..m {
        let slot = cliques
            .iter()
            .position(|members| members.iter().all(|&q| adj[r][q / 64] >> (q % 64) & 1 == 1));
        let k = match slot {
            Some(k) => k,
            None => {
                cliques.push(Vec::new());
                cliques.len() - 1
            }
        };
        cliques[k].push(r);
        clique[r] = k;
    }
    let mut avail = vec![0u64; words];
    for r in 0..m {
        if caps[class[r]] > 0 {
            bit_set(&mut avail, r);
        }
    }
    let mut search = Search {
        scores: order.iter().map(|&i| problem.hypotheses[i].score).collect(),
        class,
        clique,
        adj,
        class_mask,
        caps: caps.iter().map(|&c| if c == UNLIMITED { m } else { c }).collect(),
        taken: Vec::new(),
        best_value: 0.0,
        best: Vec::new(),
        nodes: 0,
        class_used: vec![0; classes.len()],
        clique_stamp: vec![u64::MAX; cliques.len()],
        clique_best: Vec::with_capacity(cliques.len()),
    };
    search.dfs(avail, 0.0);
    let mut chosen = vec![false; n];
    for &r in &search.best {
        chosen[order[r]] = true;
    }
    Selection {
        objective: problem.objective(&chosen),
        chosen,
        nodes: search.nodes,
    }
}
