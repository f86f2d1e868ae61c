//! Primal network simplex for the balanced transportation problem
//!
//! ```text
//! min Σ cᵢⱼ πᵢⱼ  s.t.  Σⱼ πᵢⱼ = aᵢ,  Σᵢ πᵢⱼ = bⱼ,  π ≥ 0.
//! ```
//!
//! Arcs are implicit (every supply i to every demand j) and costs are
//! pulled from a closure, so memory is O(m + n) on top of the caller's
//! cost representation. The spanning-tree bookkeeping (thread, reverse
//! thread, subtree sizes, last successors) follows the LEMON layout. The
//! start is a north-west-corner staircase hung from an auxiliary root by
//! a single zero-cost arc, so no big-M costs ever enter the potentials.
//! Entering arcs come from block search; within a block the first arc
//! attaining the most negative reduced cost wins, and the leaving arc
//! rule keeps the tree strongly feasible.

use crate::error::{LabError, Result};

const NONE: usize = usize::MAX;
const UP: f64 = 1.0;
const DOWN: f64 = -1.0;
/// relative tolerance on reduced costs
const PRICE_EPS: f64 = 1e-13;
const MAX_PIVOTS: usize = 500_000_000;

#[derive(Debug, Clone)]
pub struct TransportSolution {
    /// basic arcs (i, j, flow); degenerate arcs carry zero flow
    pub arcs: Vec<(usize, usize, f64)>,
    /// row potentials, cᵢⱼ − φᵢ − ψⱼ ≥ 0 at optimality up to rounding
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub value: f64,
    pub pivots: usize,
}

struct Simplex<'a, F: Fn(usize, usize) -> f64> {
    m: usize,
    n: usize,
    cost: &'a F,
    parent: Vec<usize>,
    /// real arc id i·n + j, or NONE for the root arc
    pred: Vec<usize>,
    pred_dir: Vec<f64>,
    pred_flow: Vec<f64>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,
    block_size: usize,
    next_arc: usize,
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

/// Solves the transportation problem. `a` and `b` must be nonnegative
/// with equal totals (up to rounding).
pub fn solve_transport<F>(a: &[f64], b: &[f64], cost: &F) -> Result<TransportSolution>
where
    F: Fn(usize, usize) -> f64,
{
    let (m, n) = (a.len(), b.len());
    if m == 0 || n == 0 {
        return Err(LabError::InvalidArgument("empty transport problem".into()));
    }
    if a.iter().chain(b).any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(LabError::InvalidArgument(
            "negative or non-finite mass".into(),
        ));
    }
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    if (sa - sb).abs() > 1e-9 * sa.max(sb).max(1e-300) {
        return Err(LabError::InvalidArgument(format!(
            "unbalanced masses {sa} vs {sb}"
        )));
    }

    let mut s = Simplex::new(a, b, cost);
    let mut pivots = 0usize;
    while s.find_entering_arc() {
        s.find_join_node();
        if !s.find_leaving_arc() {
            return Err(LabError::InvalidArgument(
                "unbounded transport problem".into(),
            ));
        }
        s.change_flow();
        s.update_tree_structure();
        s.update_potential();
        pivots += 1;
        if pivots > MAX_PIVOTS {
            return Err(LabError::BudgetExceeded {
                size: pivots,
                budget: MAX_PIVOTS,
            });
        }
    }
    Ok(s.solution(pivots))
}

impl<'a, F: Fn(usize, usize) -> f64> Simplex<'a, F> {
    fn new(a: &[f64], b: &[f64], cost: &'a F) -> Self {
        let (m, n) = (a.len(), b.len());
        let nodes = m + n;
        let root = nodes;

        // north-west corner staircase; on ties advance the column so that
        // degenerate arcs point away from the root
        let mut tree: Vec<(usize, usize, f64)> = Vec::with_capacity(nodes - 1);
        let (mut i, mut j) = (0usize, 0usize);
        let (mut ra, mut rb) = (a[0], b[0]);
        loop {
            let f = ra.min(rb);
            ra -= f;
            rb -= f;
            tree.push((i, j, f));
            if i + 1 == m && j + 1 == n {
                break;
            }
            if (rb <= ra && j + 1 < n) || i + 1 == m {
                j += 1;
                rb = b[j];
            } else {
                i += 1;
                ra = a[i];
            }
        }

        // adjacency of the staircase plus the root arc root → supply 0
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes + 1];
        for (k, &(i, j, _)) in tree.iter().enumerate() {
            adj[i].push((m + j, k));
            adj[m + j].push((i, k));
        }

        let mut s = Simplex {
            m,
            n,
            cost,
            parent: vec![NONE; nodes + 1],
            pred: vec![NONE; nodes + 1],
            pred_dir: vec![DOWN; nodes + 1],
            pred_flow: vec![0.0; nodes + 1],
            thread: vec![0; nodes + 1],
            rev_thread: vec![0; nodes + 1],
            succ_num: vec![1; nodes + 1],
            last_succ: vec![0; nodes + 1],
            pi: vec![0.0; nodes + 1],
            dirty_revs: Vec::new(),
            block_size: ((m as f64 * n as f64).sqrt().ceil() as usize).max(10),
            next_arc: 0,
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
        };

        // preorder walk from the root
        let mut order = Vec::with_capacity(nodes + 1);
        let mut stack = vec![root];
        let mut seen = vec![false; nodes + 1];
        seen[root] = true;
        while let Some(u) = stack.pop() {
            order.push(u);
            let children: Vec<(usize, Option<usize>)> = if u == root {
                vec![(0, None)]
            } else {
                adj[u].iter().map(|&(v, k)| (v, Some(k))).collect()
            };
            // push in reverse so that the first child is visited first
            for &(v, k) in children.iter().rev() {
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                s.parent[v] = u;
                match k {
                    None => {
                        s.pred[v] = NONE;
                        s.pred_dir[v] = DOWN;
                        s.pred_flow[v] = 0.0;
                        s.pi[v] = 0.0;
                    }
                    Some(k) => {
                        let (ti, tj, f) = tree[k];
                        s.pred[v] = ti * n + tj;
                        s.pred_flow[v] = f;
                        let c = cost(ti, tj);
                        if v == ti {
                            s.pred_dir[v] = UP;
                            s.pi[v] = s.pi[u] - c;
                        } else {
                            s.pred_dir[v] = DOWN;
                            s.pi[v] = s.pi[u] + c;
                        }
                    }
                }
                stack.push(v);
            }
        }
        debug_assert_eq!(order.len(), nodes + 1);
        let mut pos = vec![0usize; nodes + 1];
        for (k, &u) in order.iter().enumerate() {
            pos[u] = k;
            s.thread[u] = order[(k + 1) % order.len()];
            s.rev_thread[order[(k + 1) % order.len()]] = u;
        }
        for &u in order.iter().rev() {
            if u != root {
                let p = s.parent[u];
                s.succ_num[p] += s.succ_num[u];
            }
        }
        for &u in &order {
            s.last_succ[u] = order[pos[u] + s.succ_num[u] - 1];
        }
        s
    }

    #[inline]
    fn src(&self, e: usize) -> usize {
        e / self.n
    }

    #[inline]
    fn tgt(&self, e: usize) -> usize {
        self.m + e % self.n
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        (self.cost)(e / self.n, e % self.n)
    }

    fn find_entering_arc(&mut self) -> bool {
        let total = self.m * self.n;
        let mut min = 0.0;
        let mut best = NONE;
        let mut cnt = self.block_size;
        let mut e = self.next_arc;
        let (mut i, mut j) = (e / self.n, e % self.n);
        for _ in 0..total {
            let c = (self.cost)(i, j);
            let (ps, pt) = (self.pi[i], self.pi[self.m + j]);
            let rc = c + ps - pt;
            if rc < min && rc < -PRICE_EPS * (1.0 + c.abs() + ps.abs() + pt.abs()) {
                min = rc;
                best = e;
            }
            e += 1;
            j += 1;
            if j == self.n {
                j = 0;
                i += 1;
                if i == self.m {
                    i = 0;
                    e = 0;
                }
            }
            cnt -= 1;
            if cnt == 0 {
                if best != NONE {
                    break;
                }
                cnt = self.block_size;
            }
        }
        if best == NONE {
            return false;
        }
        self.in_arc = best;
        self.next_arc = e;
        true
    }

    fn find_join_node(&mut self) {
        let mut u = self.src(self.in_arc);
        let mut v = self.tgt(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    fn find_leaving_arc(&mut self) -> bool {
        let first = self.src(self.in_arc);
        let second = self.tgt(self.in_arc);
        let mut delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            let d = if self.pred_dir[u] == UP {
                self.pred_flow[u].max(0.0)
            } else {
                f64::INFINITY
            };
            if d < delta {
                delta = d;
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            let d = if self.pred_dir[u] == DOWN {
                self.pred_flow[u].max(0.0)
            } else {
                f64::INFINITY
            };
            if d <= delta {
                delta = d;
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        self.delta = delta;
        result != 0 && delta.is_finite()
    }

    fn change_flow(&mut self) {
        let delta = self.delta;
        if delta > 0.0 {
            let mut u = self.src(self.in_arc);
            while u != self.join {
                self.pred_flow[u] -= self.pred_dir[u] * delta;
                u = self.parent[u];
            }
            let mut u = self.tgt(self.in_arc);
            while u != self.join {
                self.pred_flow[u] += self.pred_dir[u] * delta;
                u = self.parent[u];
            }
        }
    }

    fn update_tree_structure(&mut self) {
        let (u_in, v_in, u_out, join) = (self.u_in, self.v_in, self.u_out, self.join);
        let in_dir = if u_in == self.src(self.in_arc) {
            UP
        } else {
            DOWN
        };
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = in_dir;
            self.pred_flow[u_in] = self.delta;

            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            // re-hang the stem u_in … u_out under v_in, fixing the thread
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            // shift pred arcs along the reversed stem
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                self.pred_flow[u] = self.pred_flow[p];
                tmp_sc += self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = in_dir;
            self.pred_flow[u_in] = self.delta;
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in {
            join
        } else {
            NONE
        };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && u != NONE && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && u != NONE && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let sigma =
            self.pi[self.v_in] - self.pi[u_in] - self.pred_dir[u_in] * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    fn solution(&self, pivots: usize) -> TransportSolution {
        let mut arcs = Vec::with_capacity(self.m + self.n);
        let mut value = 0.0;
        for u in 0..self.m + self.n {
            let e = self.pred[u];
            if e == NONE {
                continue;
            }
            let f = self.pred_flow[u].max(0.0);
            let (i, j) = (e / self.n, e % self.n);
            value += f * (self.cost)(i, j);
            arcs.push((i, j, f));
        }
        arcs.sort_by_key(|a| (a.0, a.1));
        let phi = self.pi[..self.m].iter().map(|p| -p).collect();
        let psi = self.pi[self.m..self.m + self.n].to_vec();
        TransportSolution {
            arcs,
            phi,
            psi,
            value,
            pivots,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check(a: &[f64], b: &[f64], c: &[f64]) -> TransportSolution {
        let n = b.len();
        let cost = |i: usize, j: usize| c[i * n + j];
        let sol = solve_transport(a, b, &cost).unwrap();
        let mut rows = vec![0.0; a.len()];
        let mut cols = vec![0.0; n];
        for &(i, j, f) in &sol.arcs {
            rows[i] += f;
            cols[j] += f;
        }
        for (x, y) in rows.iter().zip(a).chain(cols.iter().zip(b)) {
            assert!((x - y).abs() < 1e-12, "marginal {x} vs {y}");
        }
        for i in 0..a.len() {
            for j in 0..n {
                assert!(c[i * n + j] - sol.phi[i] - sol.psi[j] > -1e-9);
            }
        }
        let dual: f64 = a.iter().zip(&sol.phi).map(|(x, p)| x * p).sum::<f64>()
            + b.iter().zip(&sol.psi).map(|(x, p)| x * p).sum::<f64>();
        assert!(
            (dual - sol.value).abs() < 1e-10,
            "dual {dual} primal {}",
            sol.value
        );
        sol
    }

    #[test]
    fn two_by_two_identity() {
        let sol = check(&[0.5, 0.5], &[0.5, 0.5], &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(sol.value, 0.0);
        let anti = check(&[0.5, 0.5], &[0.5, 0.5], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(anti.value, 0.0);
    }

    #[test]
    fn random_dense_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..40 {
            let m = rng.gen_range(1..30);
            let n = rng.gen_range(1..30);
            let mut a: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            if trial % 3 == 0 {
                a.iter_mut().for_each(|x| *x = 1.0);
                b.iter_mut().for_each(|x| *x = 1.0);
            }
            let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
            a.iter_mut().for_each(|x| *x /= sa);
            b.iter_mut().for_each(|x| *x /= sb);
            let c: Vec<f64> = (0..m * n).map(|_| rng.gen_range(0.0..5.0)).collect();
            check(&a, &b, &c);
        }
    }

    #[test]
    fn uniform_permutation_degeneracy() {
        // 1D sorted points with uniform weights: the identity matching is optimal
        let n = 64;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut ys = xs.clone();
        ys.reverse();
        let c: Vec<f64> = (0..n * n)
            .map(|e| (xs[e / n] - ys[e % n]).powi(2))
            .collect();
        let w = vec![1.0 / n as f64; n];
        let sol = check(&w, &w, &c);
        assert!(sol.value.abs() < 1e-12);
    }
}
