//! Execution mode for the data-parallel loops.
//!
//! Every parallel loop in the crate maps independent work items to results
//! that are collected in index order, and every reduction is performed
//! afterwards in a fixed order. Output is therefore bit-identical between
//! [`Exec::Sequential`] and [`Exec::Parallel`]; the sequential mode exists as a
//! reference and for environments where spawning threads is unwanted.
//!
//! Without the `parallel` feature, [`Exec::Parallel`] silently runs
//! sequentially.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Map `f` over `0..len`, returning results in index order.
    pub fn map<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
        (0..len).map(f).collect()
    }

    /// Fallible variant of [`Exec::map`]. The reported error is the one with
    /// the lowest index, independent of scheduling.
    pub fn try_map<T, E, F>(self, len: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(len, f).into_iter().collect()
    }

    /// Apply `f` to each chunk of `data` of length `chunk`, passing the chunk
    /// index.
    pub fn for_each_chunk_mut<T, F>(self, data: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order_in_both_modes() {
        let seq = Exec::Sequential.map(1000, |i| i * i);
        let par = Exec::Parallel.map(1000, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[31], 961);
    }

    #[test]
    fn try_map_reports_lowest_failing_index() {
        let r: Result<Vec<usize>, usize> =
            Exec::Parallel.try_map(100, |i| if i % 7 == 3 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(3));
    }

    #[test]
    fn chunks_are_visited_with_their_index() {
        let mut v = vec![0usize; 10];
        Exec::Parallel.for_each_chunk_mut(&mut v, 3, |k, c| c.iter_mut().for_each(|x| *x = k));
        assert_eq!(v, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3]);
    }
}
