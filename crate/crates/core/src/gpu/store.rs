use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_STORE: AtomicU64 = AtomicU64::new(1);

/// Opaque reference to the frames of one completed render.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameHandle {
    store: u64,
    epoch: u64,
}

/// A single pre-allocated frame buffer handed out through handles.
///
/// Each render takes a new handle and invalidates the previous one; the
/// buffer itself is only reallocated when it no longer fits.
#[derive(Debug)]
pub struct FrameStore<B> {
    id: u64,
    buffer: Option<B>,
    epoch: u64,
    live: bool,
    allocations: u64,
}

impl<B> Default for FrameStore<B> {
    fn default() -> Self {
        FrameStore {
            id: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            buffer: None,
            epoch: 0,
            live: false,
            allocations: 0,
        }
    }
}

impl<B> FrameStore<B> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Buffer for the next frame. `alloc` runs only when there is no buffer
    /// yet or `fits` rejects the current one.
    pub fn acquire_with(&mut self, fits: impl Fn(&B) -> bool, alloc: impl FnOnce() -> B) -> (&mut B, FrameHandle) {
        if !self.buffer.as_ref().is_some_and(fits) {
            self.buffer = Some(alloc());
            self.allocations += 1;
        }
        self.epoch += 1;
        self.live = true;
        let handle = FrameHandle {
            store: self.id,
            epoch: self.epoch,
        };
        (self.buffer.as_mut().expect("allocated above"), handle)
    }

    fn check(&self, handle: FrameHandle) -> Result<()> {
        if handle.store != self.id || handle.epoch != self.epoch || !self.live {
            return Err(Error::ReleasedHandle);
        }
        Ok(())
    }

    pub fn get(&self, handle: FrameHandle) -> Result<&B> {
        self.check(handle)?;
        Ok(self.buffer.as_ref().expect("live handle has a buffer"))
    }

    /// Ends the handle's lifetime. The buffer is kept for reuse.
    pub fn release(&mut self, handle: FrameHandle) -> Result<()> {
        self.check(handle)?;
        self.live = false;
        Ok(())
    }

    pub fn allocations(&self) -> u64 {
        self.allocations
    }
}
