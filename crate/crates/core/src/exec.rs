//! Execution mode for the data-parallel inner loops.
//!
//! Every loop that fans out (element-wise accumulation, client generation,
//! sweep grid points, oracle cases) goes through [`Exec`]. Results are
//! independent of the mode: per-element arithmetic order never changes and
//! mapped outputs are collected in input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Element count below which parallel element-wise work is not worth the
/// fork/join overhead.
#[cfg(feature = "parallel")]
const PAR_MIN_ELEMENTS: usize = 1 << 15;

/// Defaults to `Parallel` when the `parallel` feature is on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

impl Exec {
    /// `dst[i] += weight * src[i]`. With `weight == 1.0` this is a plain add,
    /// so results match a straight running sum bit for bit.
    pub fn add_scaled(self, dst: &mut [f32], src: &[f32], weight: f32) {
        debug_assert_eq!(dst.len(), src.len());
        let kernel = |d: &mut [f32], s: &[f32]| {
            if weight == 1.0 {
                d.iter_mut().zip(s).for_each(|(d, s)| *d += *s);
            } else {
                d.iter_mut().zip(s).for_each(|(d, s)| *d += weight * *s);
            }
        };
        match self {
            Exec::Sequential => kernel(dst, src),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                if dst.len() < PAR_MIN_ELEMENTS {
                    kernel(dst, src);
                } else {
                    dst.par_chunks_mut(PAR_MIN_ELEMENTS)
                        .zip(src.par_chunks(PAR_MIN_ELEMENTS))
                        .for_each(|(d, s)| kernel(d, s));
                }
            }
        }
    }

    /// `dst[i] /= divisor`.
    pub fn scale_div(self, dst: &mut [f32], divisor: f32) {
        match self {
            Exec::Sequential => dst.iter_mut().for_each(|v| *v /= divisor),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                if dst.len() < PAR_MIN_ELEMENTS {
                    dst.iter_mut().for_each(|v| *v /= divisor);
                } else {
                    dst.par_iter_mut().for_each(|v| *v /= divisor);
                }
            }
        }
    }

    /// Maps `items` through `f`, preserving input order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
        }
    }
}
