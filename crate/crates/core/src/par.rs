//! Execution policy for the data-parallel loops (sweeps, Jacobian columns,
//! per-snapshot functionals).
//!
//! With the `parallel` feature the work is spread over the rayon pool; without
//! it every policy degrades to a plain sequential loop. Results are always
//! returned in input order, so output files do not depend on the policy.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this length pointwise loops are not worth splitting.
pub const PARALLEL_MIN_LEN: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this policy actually fans out in the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Apply `f(index, element)` to every element of `data`. Short slices
    /// stay on the calling thread even under the parallel policy.
    pub fn for_each_mut<T, F>(self, data: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel && data.len() >= PARALLEL_MIN_LEN {
            data.par_iter_mut()
                .enumerate()
                .with_min_len(PARALLEL_MIN_LEN / 4)
                .for_each(|(i, x)| f(i, x));
            return;
        }
        data.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }

    pub fn map_range<R, F>(self, len: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return (0..len).into_par_iter().map(f).collect();
        }
        (0..len).map(f).collect()
    }
}

/// Configure the global worker pool. Only the first call has an effect.
pub fn set_workers(workers: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_policies_preserve_order() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = Execution::Sequential.map(&items, |x| x * x);
        let par = Execution::Parallel.map(&items, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(Execution::Parallel.map_range(5, |i| i + 1), vec![1, 2, 3, 4, 5]);
        let mut a = vec![0usize; PARALLEL_MIN_LEN + 3];
        let mut b = a.clone();
        Execution::Sequential.for_each_mut(&mut a, |i, x| *x = 3 * i);
        Execution::Parallel.for_each_mut(&mut b, |i, x| *x = 3 * i);
        assert_eq!(a, b);
    }
}
