//! Row-parallel execution helpers.
//!
//! Every parallel loop in the crate is partitioned by output row (or output
//! element), so results are bitwise identical whatever the thread count.
//! Without the `parallel` feature everything runs sequentially.

use std::sync::atomic::{AtomicU8, Ordering};

/// How data-parallel loops are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

const SEQ: u8 = 0;
const PAR: u8 = 1;

static DEFAULT_EXEC: AtomicU8 = AtomicU8::new(if cfg!(feature = "parallel") { PAR } else { SEQ });

/// Execution mode used by the library's kernels.
pub fn default_exec() -> Exec {
    match DEFAULT_EXEC.load(Ordering::Relaxed) {
        PAR => Exec::Parallel,
        _ => Exec::Sequential,
    }
}

/// Override the execution mode globally. `Parallel` degrades to
/// `Sequential` when the crate is built without the `parallel` feature.
pub fn set_default_exec(exec: Exec) {
    let v = match exec {
        Exec::Parallel if cfg!(feature = "parallel") => PAR,
        _ => SEQ,
    };
    DEFAULT_EXEC.store(v, Ordering::Relaxed);
}

/// Apply `f(row_index, row)` to each `row_len`-sized chunk of `data`.
pub fn for_each_row<F>(exec: Exec, data: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            data.par_chunks_mut(row_len)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
        }
        _ => data
            .chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| f(i, row)),
    }
}

/// `(0..n).map(f).collect()`, parallel when enabled.
pub fn map_range<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Map over a slice, parallel when enabled. Output order matches input order.
pub fn map_slice<S, T, F>(exec: Exec, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}
