//! Primal network simplex for the balanced transportation problem.
//!
//! Layout and pivoting follow the classic spanning-tree formulation with
//! thread/successor bookkeeping and block-search pricing: sources are nodes
//! `0..n`, sinks `n..n+m`, and an artificial root is connected to every node
//! by a big-M arc so the initial tree is feasible. Costs are dense and
//! row-major; arcs are uncapacitated.

const NONE: usize = usize::MAX;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

pub(crate) struct LpSolution {
    /// Row-major flows on the `n * m` real arcs.
    pub flow: Vec<f64>,
    /// Dual potentials with `cost[i][j] - u[i] - v[j] >= 0`.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub pivots: usize,
    pub converged: bool,
}

pub(crate) fn solve(supply: &[f64], demand: &[f64], cost: &[f64]) -> LpSolution {
    let mut ns = NetworkSimplex::new(supply, demand, cost);
    let converged = ns.run();
    ns.into_solution(converged)
}

struct NetworkSimplex {
    n: usize,
    m: usize,
    node_num: usize,
    arc_num: usize,
    root: usize,

    source: Vec<u32>,
    target: Vec<u32>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<i8>,

    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,

    next_arc: usize,
    block_size: usize,
    eps: f64,
    pivots: usize,
}

impl NetworkSimplex {
    fn new(supply: &[f64], demand: &[f64], cost: &[f64]) -> Self {
        let n = supply.len();
        let m = demand.len();
        let node_num = n + m;
        let arc_num = n * m;
        let all_arc_num = arc_num + node_num;
        debug_assert_eq!(cost.len(), arc_num);

        let mut source = Vec::with_capacity(all_arc_num);
        let mut target = Vec::with_capacity(all_arc_num);
        for i in 0..n {
            for j in 0..m {
                source.push(i as u32);
                target.push((n + j) as u32);
            }
        }
        source.resize(all_arc_num, 0);
        target.resize(all_arc_num, 0);

        let max_cost = cost.iter().copied().fold(0.0, f64::max);
        let art_cost = (max_cost + 1.0) * node_num as f64;
        let mut all_cost = Vec::with_capacity(all_arc_num);
        all_cost.extend_from_slice(cost);
        all_cost.resize(all_arc_num, 0.0);

        let mut flow = vec![0.0; all_arc_num];
        let mut state = vec![STATE_LOWER; all_arc_num];

        let root = node_num;
        let mut parent = vec![NONE; node_num + 1];
        let mut pred = vec![NONE; node_num + 1];
        let mut thread = vec![0; node_num + 1];
        let mut rev_thread = vec![0; node_num + 1];
        let mut succ_num = vec![0; node_num + 1];
        let mut last_succ = vec![0; node_num + 1];
        let mut pred_dir = vec![0i8; node_num + 1];
        let mut pi = vec![0.0; node_num + 1];

        thread[root] = 0;
        rev_thread[0] = root;
        succ_num[root] = node_num + 1;
        last_succ[root] = root - 1;

        for u in 0..node_num {
            let e = arc_num + u;
            parent[u] = root;
            pred[u] = e;
            thread[u] = u + 1;
            rev_thread[u + 1] = u;
            succ_num[u] = 1;
            last_succ[u] = u;
            state[e] = STATE_TREE;
            if u < n {
                pred_dir[u] = DIR_UP;
                pi[u] = 0.0;
                source[e] = u as u32;
                target[e] = root as u32;
                flow[e] = supply[u];
                all_cost[e] = 0.0;
            } else {
                pred_dir[u] = DIR_DOWN;
                pi[u] = art_cost;
                source[e] = root as u32;
                target[e] = u as u32;
                flow[e] = demand[u - n];
                all_cost[e] = art_cost;
            }
        }

        let block_size = ((arc_num as f64).sqrt() as usize).max(10);
        Self {
            n,
            m,
            node_num,
            arc_num,
            root,
            source,
            target,
            cost: all_cost,
            flow,
            state,
            parent,
            pred,
            thread,
            rev_thread,
            succ_num,
            last_succ,
            pred_dir,
            pi,
            dirty_revs: Vec::new(),
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
            next_arc: 0,
            block_size,
            eps: 1e-12 * max_cost.max(1.0),
            pivots: 0,
        }
    }

    fn run(&mut self) -> bool {
        let limit = 50 * (self.arc_num + self.node_num) + 10_000;
        while self.find_entering_arc() {
            self.find_join_node();
            if !self.find_leaving_arc() {
                // unbounded cycle; impossible with non-negative costs
                return false;
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
            self.pivots += 1;
            if self.pivots > limit {
                return false;
            }
        }
        true
    }

    #[inline]
    fn reduced(&self, e: usize) -> f64 {
        self.state[e] as f64
            * (self.cost[e] + self.pi[self.source[e] as usize] - self.pi[self.target[e] as usize])
    }

    fn find_entering_arc(&mut self) -> bool {
        let mut min = -self.eps;
        let mut found = false;
        let mut cnt = self.block_size;
        let total = self.arc_num;
        let mut e = self.next_arc;
        for _ in 0..total {
            let c = self.reduced(e);
            if c < min {
                min = c;
                self.in_arc = e;
                found = true;
            }
            e += 1;
            if e == total {
                e = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if found {
                    self.next_arc = e;
                    return true;
                }
                cnt = self.block_size;
            }
        }
        if found {
            self.next_arc = e;
        }
        found
    }

    fn find_join_node(&mut self) {
        let mut u = self.source[self.in_arc] as usize;
        let mut v = self.target[self.in_arc] as usize;
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
        let (first, second) = if self.state[self.in_arc] == STATE_LOWER {
            (self.source[self.in_arc] as usize, self.target[self.in_arc] as usize)
        } else {
            (self.target[self.in_arc] as usize, self.source[self.in_arc] as usize)
        };
        self.delta = f64::INFINITY;
        let mut result = 0;

        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[self.pred[u]];
                if d < self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[self.pred[u]];
                if d <= self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 2;
                }
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
        result != 0
    }

    fn change_flow(&mut self) {
        if self.delta > 0.0 {
            let val = self.state[self.in_arc] as f64 * self.delta;
            self.flow[self.in_arc] += val;
            let mut u = self.source[self.in_arc] as usize;
            while u != self.join {
                self.flow[self.pred[u]] -= self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
            let mut u = self.target[self.in_arc] as usize;
            while u != self.join {
                self.flow[self.pred[u]] += self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        self.flow[out] = 0.0;
        self.state[out] = STATE_LOWER;
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source[self.in_arc] as usize {
                DIR_UP
            } else {
                DIR_DOWN
            };

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

            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source[self.in_arc] as usize {
                DIR_UP
            } else {
                DIR_DOWN
            };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
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
        let sigma = self.pi[self.v_in]
            - self.pi[self.u_in]
            - self.pred_dir[self.u_in] as f64 * self.cost[self.in_arc];
        let end = self.thread[self.last_succ[self.u_in]];
        let mut u = self.u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    fn into_solution(mut self, converged: bool) -> LpSolution {
        self.flow.truncate(self.arc_num);
        for f in &mut self.flow {
            if *f < 0.0 {
                *f = 0.0;
            }
        }
        let u = (0..self.n).map(|i| -self.pi[i]).collect();
        let v = (0..self.m).map(|j| self.pi[self.n + j]).collect();
        let _ = self.root;
        LpSolution {
            flow: self.flow,
            u,
            v,
            pivots: self.pivots,
            converged,
        }
    }
}
