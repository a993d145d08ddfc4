#![allow(dead_code)]

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use csrk_core::SdeProblem;

#[derive(Default, Debug)]
pub struct Counters {
    pub drift: AtomicU64,
    pub diffusion: AtomicU64,
}

impl Counters {
    pub fn get(&self) -> (u64, u64) {
        (self.drift.load(Ordering::Relaxed), self.diffusion.load(Ordering::Relaxed))
    }
}

/// The same problem with every drift call and diffusion column call counted.
pub fn counted(inner: &SdeProblem) -> (SdeProblem, Arc<Counters>) {
    let counters = Arc::new(Counters::default());
    let (c1, c2) = (counters.clone(), counters.clone());
    let (p1, p2) = (inner.clone(), inner.clone());
    let p = SdeProblem::new(
        format!("counted {}", inner.label),
        inner.dim_state,
        inner.dim_noise,
        inner.x0.clone(),
        inner.t0,
        inner.t_end,
        move |t, x, out| {
            c1.drift.fetch_add(1, Ordering::Relaxed);
            p1.drift(t, x, out)
        },
        move |t, x, k, out| {
            c2.diffusion.fetch_add(1, Ordering::Relaxed);
            p2.diffusion_column(t, x, k, out)
        },
    )
    .unwrap();
    (p, counters)
}

pub fn slope(hs: &[f64], errs: &[f64]) -> f64 {
    let pairs: Vec<(f64, f64)> = hs.iter().copied().zip(errs.iter().copied()).collect();
    csrk_core::empirical_order(&pairs).unwrap().slope
}
