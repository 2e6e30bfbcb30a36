//! Execution strategy for data-parallel inner loops.
//!
//! Level expansions, grid sweeps and fixpoint rounds map a worklist through
//! a pure function. With the `parallel` feature the work is spread over the
//! rayon pool; results are collected in input order either way, so both
//! strategies produce identical output.

/// How to run a batch of independent evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Rayon-backed; falls back to sequential when the `parallel` feature
    /// is disabled.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Order-preserving map over a worklist.
pub fn map_collect<T, R, F>(exec: Exec, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Exec::Parallel {
        use rayon::prelude::*;
        return items.into_par_iter().map(f).collect();
    }
    let _ = exec;
    items.into_iter().map(f).collect()
}

/// Order-preserving map over an index range.
pub fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Exec::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree_and_preserve_order() {
        let items: Vec<usize> = (0..1000).collect();
        let seq = map_collect(Exec::Sequential, items.clone(), |x| x * 3);
        let par = map_collect(Exec::Parallel, items, |x| x * 3);
        assert_eq!(seq, par);
        assert_eq!(seq[10], 30);
        assert_eq!(
            map_range(Exec::Parallel, 5, |i| i + 1),
            vec![1, 2, 3, 4, 5]
        );
    }
}
