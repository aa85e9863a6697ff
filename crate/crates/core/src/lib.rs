extern crate blas_src;

pub mod cases;
pub mod config;
pub mod derivkit;
pub mod eval;
pub mod network;
pub mod sampler;
pub mod training;
pub mod physics;

/// Keep glibc from servicing the large per-step temporaries with mmap:
/// the map/unmap churn dominates wall time on batched training workloads.
pub fn tune_allocator() {
    #[cfg(target_os = "linux")]
    unsafe {
        libc::mallopt(libc::M_MMAP_MAX, 0);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 1 << 30);
    }
}
