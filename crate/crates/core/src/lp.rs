//! Witness linear program for pruning value vectors.
//!
//! Finds the belief `b` maximizing `min_w <b, v - w>` over a set of vectors
//! `w`. Solved with a dense dictionary simplex; the LPs are tiny (one column
//! per state, one row per vector).

const PIVOT_EPS: f64 = 1e-12;
/// Consecutive pivots without real objective progress before switching to Bland's rule.
const STALL_LIMIT: usize = 20;

/// Outcome of a witness search against a margin.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    /// A belief where the vector beats every other by more than the margin.
    Found(Vec<f64>),
    /// No such belief exists.
    Absent,
    /// The solver hit its iteration limit.
    Unknown,
}

/// Largest margin by which `v` beats every vector in `others` at some belief,
/// with that belief. An empty `others` gives `+inf` and the uniform belief.
pub fn witness(v: &[f64], others: &[&[f64]]) -> (f64, Vec<f64>) {
    let n = v.len();
    match solve(v, others, 0.0) {
        Some((d, b)) => (d, b),
        None => (f64::INFINITY, vec![1.0 / n as f64; n]),
    }
}

/// Whether `v` beats every vector in `others` by more than `margin` somewhere.
///
/// Constraint `k` is relaxed by a distinct amount below `margin / 2` to break
/// the heavy degeneracy of cross-sum sets. `Absent` therefore still means the
/// true margin is at most `margin`, and `Found` means it exceeds `margin / 2`.
pub fn find_witness(v: &[f64], others: &[&[f64]], margin: f64) -> Witness {
    match solve(v, others, 0.5 * margin) {
        Some((d, b)) if d > margin => Witness::Found(b),
        Some(_) => Witness::Absent,
        None => Witness::Unknown,
    }
}

fn solve(v: &[f64], others: &[&[f64]], perturb: f64) -> Option<(f64, Vec<f64>)> {
    let n = v.len();
    if others.is_empty() {
        return Some((f64::INFINITY, vec![1.0 / n as f64; n]));
    }
    if n == 1 {
        let d = others.iter().map(|w| v[0] - w[0]).fold(f64::INFINITY, f64::min);
        return Some((d, vec![1.0]));
    }
    // Variables y_0..y_{n-2} (b_{n-1} = 1 - sum y) and d = delta + shift >= 0.
    let last = n - 1;
    let shift = others.iter().map(|w| w[last] - v[last]).fold(0.0f64, f64::max);
    let m = others.len() + 1;
    let mut t = Tableau::new(m, n);
    for k in 0..last {
        t.set(0, k, 1.0);
    }
    t.set_rhs(0, 1.0);
    for (r, w) in others.iter().enumerate() {
        let row = r + 1;
        let tail = w[last] - v[last];
        for k in 0..last {
            t.set(row, k, (w[k] - v[k]) - tail);
        }
        t.set(row, last, 1.0);
        t.set_rhs(row, shift - tail + perturb * jitter(r));
    }
    // maximize d: objective row stores -c.
    t.set_obj(last, -1.0);
    t.solve()?;
    let x = t.primal();
    let mut b: Vec<f64> = x[..last].iter().map(|y| y.max(0.0)).collect();
    let rest = 1.0 - b.iter().sum::<f64>();
    b.push(rest.max(0.0));
    let s: f64 = b.iter().sum();
    for p in b.iter_mut() {
        *p /= s;
    }
    Some((t.objective() - shift, b))
}

/// Deterministic values spread over (0, 1).
fn jitter(k: usize) -> f64 {
    const PHI: f64 = 0.618_033_988_749_894_9;
    let x = ((k + 1) as f64 * PHI).fract();
    0.05 + 0.9 * x
}

/// Dictionary `basic_i = rhs_i - sum_j a_ij nonbasic_j`, objective
/// `z = z0 - sum_j d_j nonbasic_j`, all variables nonnegative.
struct Tableau {
    m: usize,
    n: usize,
    /// (m + 1) rows of n + 1 entries; the last row is the objective, the
    /// last column the right-hand side.
    a: Vec<f64>,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
}

impl Tableau {
    fn new(m: usize, n: usize) -> Self {
        Tableau {
            m,
            n,
            a: vec![0.0; (m + 1) * (n + 1)],
            basic: (n..n + m).collect(),
            nonbasic: (0..n).collect(),
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.n + 1) + j]
    }

    fn set(&mut self, i: usize, j: usize, x: f64) {
        self.a[i * (self.n + 1) + j] = x;
    }

    fn set_rhs(&mut self, i: usize, x: f64) {
        let n = self.n;
        self.set(i, n, x);
    }

    fn set_obj(&mut self, j: usize, x: f64) {
        let m = self.m;
        self.set(m, j, x);
    }

    fn objective(&self) -> f64 {
        self.at(self.m, self.n)
    }

    fn primal(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n + self.m];
        for (i, &b) in self.basic.iter().enumerate() {
            x[b] = self.at(i, self.n);
        }
        x
    }

    /// Runs to optimality; `None` if unbounded or out of iterations.
    fn solve(&mut self) -> Option<()> {
        let max_iter = 50 * (self.m + self.n) + 1000;
        let mut stalled = 0usize;
        for _ in 0..max_iter {
            let entering = self.choose_entering(stalled > STALL_LIMIT)?;
            let Some(entering) = entering else {
                return Some(());
            };
            let leaving = self.choose_leaving(entering)?;
            let before = self.objective();
            self.pivot(leaving, entering);
            let gain = self.objective() - before;
            stalled = if gain <= PIVOT_EPS * (1.0 + before.abs()) {
                stalled + 1
            } else {
                0
            };
        }
        None
    }

    /// `Some(None)` at optimality.
    fn choose_entering(&self, bland: bool) -> Option<Option<usize>> {
        let mut best: Option<usize> = None;
        for j in 0..self.n {
            let d = self.at(self.m, j);
            if d >= -PIVOT_EPS {
                continue;
            }
            best = match best {
                None => Some(j),
                Some(b) if bland => {
                    if self.nonbasic[j] < self.nonbasic[b] {
                        Some(j)
                    } else {
                        Some(b)
                    }
                }
                Some(b) => {
                    if d < self.at(self.m, b) {
                        Some(j)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        Some(best)
    }

    fn choose_leaving(&self, s: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let p = self.at(i, s);
            if p <= PIVOT_EPS {
                continue;
            }
            let ratio = self.at(i, self.n) / p;
            best = match best {
                None => Some((i, ratio)),
                Some((b, r)) => {
                    if ratio < r - 1e-14 || (ratio <= r + 1e-14 && self.basic[i] < self.basic[b]) {
                        Some((i, ratio))
                    } else {
                        Some((b, r))
                    }
                }
            };
        }
        best.map(|x| x.0)
    }

    fn pivot(&mut self, r: usize, s: usize) {
        let w = self.n + 1;
        let p = self.at(r, s);
        let pivot_row: Vec<f64> = self.a[r * w..(r + 1) * w].to_vec();
        for i in 0..=self.m {
            if i == r {
                continue;
            }
            let f = self.at(i, s);
            if f == 0.0 {
                continue;
            }
            let row = &mut self.a[i * w..(i + 1) * w];
            for j in 0..w {
                if j != s {
                    row[j] -= f * pivot_row[j] / p;
                }
            }
            row[s] = -f / p;
        }
        let row = &mut self.a[r * w..(r + 1) * w];
        for (j, x) in row.iter_mut().enumerate() {
            if j != s {
                *x /= p;
            }
        }
        row[s] = 1.0 / p;
        std::mem::swap(&mut self.basic[r], &mut self.nonbasic[s]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominated_vector_has_no_witness() {
        let (d, _) = witness(&[0.0, 0.0], &[&[1.0, 1.0]]);
        assert!((d + 1.0).abs() < 1e-12);
    }

    #[test]
    fn middle_vector_wins_in_the_middle() {
        let (d, b) = witness(&[0.6, 0.6], &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!((d - 0.1).abs() < 1e-12);
        assert!((b[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn useless_middle_vector() {
        let (d, _) = witness(&[0.4, 0.4], &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(d < 0.0);
    }

    #[test]
    fn three_states_against_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ws: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let refs: Vec<&[f64]> = ws.iter().map(Vec::as_slice).collect();
            let (d, b) = witness(&v, &refs);
            // the returned belief attains d
            let at_b = refs
                .iter()
                .map(|w| (0..3).map(|k| b[k] * (v[k] - w[k])).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert!((at_b - d).abs() < 1e-9, "{at_b} vs {d}");
            // grid search never beats it
            let steps = 60;
            for i in 0..=steps {
                for j in 0..=(steps - i) {
                    let g = [
                        i as f64 / steps as f64,
                        j as f64 / steps as f64,
                        (steps - i - j) as f64 / steps as f64,
                    ];
                    let val = refs
                        .iter()
                        .map(|w| (0..3).map(|k| g[k] * (v[k] - w[k])).sum::<f64>())
                        .fold(f64::INFINITY, f64::min);
                    assert!(val <= d + 1e-9);
                }
            }
        }
    }

    #[test]
    fn margin_search_agrees_with_exact_margin() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let v: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ws: Vec<Vec<f64>> = (0..30)
                .map(|_| (0..12).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let refs: Vec<&[f64]> = ws.iter().map(Vec::as_slice).collect();
            let (d, _) = witness(&v, &refs);
            match find_witness(&v, &refs, 1e-9) {
                Witness::Found(_) => assert!(d > 0.5e-9),
                Witness::Absent => assert!(d <= 1e-9),
                Witness::Unknown => panic!("solver gave up"),
            }
        }
    }
}
