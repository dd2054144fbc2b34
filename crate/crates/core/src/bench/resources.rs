//! Process CPU time and peak memory of one measured phase.
//!
//! Peak memory comes from the kernel's resident-set high-water mark, which
//! Linux lets a process reset through `/proc/self/clear_refs`. Where that is
//! unavailable the [`CountingAllocator`], when installed as the global
//! allocator, supplies an approximate figure (heap bytes only).

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

/// CPU time (user + system) consumed by this process so far.
pub fn process_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_PROCESS_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

fn status_bytes(field: &str) -> Option<u64> {
    let text = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = text.lines().find(|l| l.starts_with(field))?;
    let kb: u64 = line[field.len()..].trim_start_matches(':').split_whitespace().next()?.parse().ok()?;
    Some(kb * 1024)
}

/// Current resident set size.
pub fn resident_bytes() -> Option<u64> {
    status_bytes("VmRSS")
}

/// Resident-set high-water mark.
pub fn peak_resident_bytes() -> Option<u64> {
    status_bytes("VmHWM")
}

/// Resets the high-water mark to the current resident size.
pub fn reset_peak_resident() -> bool {
    std::fs::write("/proc/self/clear_refs", "5").is_ok()
}

/// Hands freed heap pages back to the kernel so that later allocations show
/// up in the resident set instead of reusing already-resident pages.
pub fn release_free_memory() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: malloc_trim only walks the allocator's own free lists.
    unsafe {
        libc::malloc_trim(0);
    }
}

static ALLOC_INSTALLED: AtomicBool = AtomicBool::new(false);
static ALLOC_CURRENT: AtomicUsize = AtomicUsize::new(0);
static ALLOC_PEAK: AtomicUsize = AtomicUsize::new(0);

/// System allocator wrapper that tracks live and peak heap bytes.
///
/// ```ignore
/// #[global_allocator]
/// static GLOBAL: leafsurf::bench::CountingAllocator = leafsurf::bench::CountingAllocator;
/// ```
pub struct CountingAllocator;

impl CountingAllocator {
    pub fn installed() -> bool {
        ALLOC_INSTALLED.load(Ordering::Relaxed)
    }

    pub fn current() -> usize {
        ALLOC_CURRENT.load(Ordering::Relaxed)
    }

    pub fn peak() -> usize {
        ALLOC_PEAK.load(Ordering::Relaxed)
    }

    pub fn reset_peak() {
        ALLOC_PEAK.store(ALLOC_CURRENT.load(Ordering::Relaxed), Ordering::Relaxed);
    }

    fn grew(size: usize) {
        let now = ALLOC_CURRENT.fetch_add(size, Ordering::Relaxed) + size;
        ALLOC_PEAK.fetch_max(now, Ordering::Relaxed);
    }
}

// SAFETY: every call is forwarded unchanged to the system allocator.
unsafe impl GlobalAlloc for CountingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            ALLOC_INSTALLED.store(true, Ordering::Relaxed);
            Self::grew(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            ALLOC_INSTALLED.store(true, Ordering::Relaxed);
            Self::grew(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        ALLOC_CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            if new_size >= layout.size() {
                Self::grew(new_size - layout.size());
            } else {
                ALLOC_CURRENT.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
        }
        p
    }
}

/// Where a peak-memory figure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RamSource {
    /// Resident-set high-water mark of the measuring process.
    ResidentPeak,
    /// Heap counter of [`CountingAllocator`]; approximate.
    Allocator,
    /// No accounting available.
    Unavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseUsage {
    pub cpu_s: f64,
    pub peak_ram_bytes: u64,
    pub ram_source: RamSource,
}

/// Brackets one phase: call [`PhaseMeter::start`] right before it and
/// [`PhaseMeter::finish`] right after.
#[derive(Debug)]
pub struct PhaseMeter {
    cpu0: f64,
    rss0: Option<u64>,
    alloc0: usize,
    prefer_allocator: bool,
}

impl PhaseMeter {
    /// `prefer_allocator` selects the heap counter even when the resident
    /// peak is available.
    pub fn start(prefer_allocator: bool) -> Self {
        release_free_memory();
        let rss0 = if reset_peak_resident() { resident_bytes() } else { None };
        CountingAllocator::reset_peak();
        Self {
            alloc0: CountingAllocator::current(),
            rss0,
            prefer_allocator,
            cpu0: process_cpu_seconds(),
        }
    }

    pub fn finish(self) -> PhaseUsage {
        let cpu_s = (process_cpu_seconds() - self.cpu0).max(0.0);
        let allocator = CountingAllocator::installed()
            .then(|| CountingAllocator::peak().saturating_sub(self.alloc0) as u64);
        let resident = self.rss0.zip(peak_resident_bytes()).map(|(r0, hwm)| hwm.saturating_sub(r0));
        let (peak_ram_bytes, ram_source) = match (self.prefer_allocator, resident, allocator) {
            (false, Some(r), _) => (r, RamSource::ResidentPeak),
            (_, _, Some(a)) => (a, RamSource::Allocator),
            (true, Some(r), None) => (r, RamSource::ResidentPeak),
            (_, None, None) => (0, RamSource::Unavailable),
        };
        PhaseUsage { cpu_s, peak_ram_bytes, ram_source }
    }
}
