//! Execution strategy for the data-parallel inner loops.
//!
//! Monte Carlo trials, permutation shuffles and batched K* evaluations all go
//! through [`Execution::map_indexed`]. Results always come back in index order,
//! so reductions over them are bit-identical whichever path ran.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

impl Execution {
    /// Evaluates `f(0..len)` and returns the outputs in index order.
    pub fn map_indexed<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..len).map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..len).into_par_iter().map(f).collect(),
        }
    }

    /// Maps over a slice, preserving order.
    pub fn map_slice<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = Execution::Sequential.map_indexed(1000, |i| i * i);
        let dflt = Execution::default().map_indexed(1000, |i| i * i);
        assert_eq!(seq, dflt);
        assert_eq!(seq[999], 999 * 999);
    }
}
