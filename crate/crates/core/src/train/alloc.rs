//! Allocator tuning for the training loop.
//!
//! A recorded step allocates a few hundred multi-megabyte grids and frees
//! them all at the end. With glibc's default thresholds each of those
//! allocations is a fresh `mmap`, so every step pays page faults on first
//! touch. Raising the mmap and trim thresholds keeps freed memory in the
//! heap for the next step.

#[cfg(all(target_os = "linux", target_env = "gnu"))]
pub fn keep_freed_memory() {
    use std::sync::Once;
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        const THRESHOLD: libc::c_int = 1 << 30;
        // SAFETY: mallopt only adjusts allocator tunables; it is called once,
        // before the heavy allocation phase, and takes plain integers.
        unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, THRESHOLD);
            libc::mallopt(libc::M_TRIM_THRESHOLD, THRESHOLD);
        }
    });
}

#[cfg(not(all(target_os = "linux", target_env = "gnu")))]
pub fn keep_freed_memory() {}
