//! Memory instrumentation.
//!
//! [`CountingAllocator`] wraps the system allocator and keeps a cumulative
//! count of bytes requested, which is the "cumulative allocations" figure
//! reported by the benchmarks. A binary opts in with
//!
//! ```ignore
//! #[global_allocator]
//! static GLOBAL: bigsel::alloc::CountingAllocator = bigsel::alloc::CountingAllocator;
//! ```
//!
//! Without it [`allocated_bytes`] stays at zero. Resident-set figures come
//! from `/proc/self/status` and are only available on Linux.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

static CUMULATIVE: AtomicU64 = AtomicU64::new(0);
static INSTALLED: AtomicBool = AtomicBool::new(false);

pub struct CountingAllocator;

unsafe impl GlobalAlloc for CountingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        CUMULATIVE.fetch_add(layout.size() as u64, Ordering::Relaxed);
        INSTALLED.store(true, Ordering::Relaxed);
        System.alloc(layout)
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        CUMULATIVE.fetch_add(layout.size() as u64, Ordering::Relaxed);
        INSTALLED.store(true, Ordering::Relaxed);
        System.alloc_zeroed(layout)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout)
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        // Growth counts as a fresh allocation of the new size.
        if new_size > layout.size() {
            CUMULATIVE.fetch_add(new_size as u64, Ordering::Relaxed);
        }
        System.realloc(ptr, layout, new_size)
    }
}

/// Cumulative bytes allocated so far by the whole process.
pub fn allocated_bytes() -> u64 {
    CUMULATIVE.load(Ordering::Relaxed)
}

/// Whether the counting allocator is the process's global allocator.
pub fn counting_enabled() -> bool {
    INSTALLED.load(Ordering::Relaxed)
}

fn status_kib(field: &str) -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with(field))?;
    line[field.len()..].trim().trim_end_matches("kB").trim().parse().ok()
}

/// Peak resident set size in bytes (`VmHWM`).
pub fn peak_rss_bytes() -> Option<u64> {
    status_kib("VmHWM:").map(|k| k * 1024)
}

/// Current resident set size in bytes (`VmRSS`).
pub fn current_rss_bytes() -> Option<u64> {
    status_kib("VmRSS:").map(|k| k * 1024)
}

/// Resets the kernel's peak-RSS mark so the next measurement covers only
/// what follows. Returns `false` where unsupported.
pub fn reset_peak_rss() -> bool {
    std::fs::write("/proc/self/clear_refs", "5").is_ok()
}

/// Allocation and resident-memory deltas over a region of code.
#[derive(Debug, Clone, Copy)]
pub struct MemoryProbe {
    start_alloc: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryUsage {
    pub cum_alloc_bytes: u64,
    pub peak_rss_bytes: Option<u64>,
}

impl MemoryProbe {
    pub fn start() -> Self {
        reset_peak_rss();
        Self {
            start_alloc: allocated_bytes(),
        }
    }

    pub fn finish(&self) -> MemoryUsage {
        MemoryUsage {
            cum_alloc_bytes: allocated_bytes() - self.start_alloc,
            peak_rss_bytes: peak_rss_bytes(),
        }
    }
}
