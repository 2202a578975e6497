//! Data-parallel helpers. With the `parallel` feature off every call runs
//! sequentially; results are identical either way because work is split into
//! fixed index ranges and reduced in index order.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    /// Parallel when the feature is compiled in.
    #[default]
    Auto,
    Sequential,
}

pub fn map<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Auto {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}
