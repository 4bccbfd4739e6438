//! DLPack-compatible tensor descriptors for frame batches.
//!
//! Layout follows `dlpack.h` (`DLManagedTensor`, legacy unversioned form).
//! Frames are exported as `uint8` tensors of shape `S x H x W x 4`, compact
//! row-major, so `strides` is null.

use std::ffi::c_void;

use crate::tiling::FrameBatch;

pub const DL_CPU: i32 = 1;
pub const DL_CUDA: i32 = 2;
pub const DL_VULKAN: i32 = 7;
pub const DL_METAL: i32 = 8;

pub const DL_UINT: u8 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DLDevice {
    pub device_type: i32,
    pub device_id: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DLDataType {
    pub code: u8,
    pub bits: u8,
    pub lanes: u16,
}

#[repr(C)]
#[derive(Debug)]
pub struct DLTensor {
    pub data: *mut c_void,
    pub device: DLDevice,
    pub ndim: i32,
    pub dtype: DLDataType,
    pub shape: *mut i64,
    pub strides: *mut i64,
    pub byte_offset: u64,
}

#[repr(C)]
#[derive(Debug)]
pub struct DLManagedTensor {
    pub dl_tensor: DLTensor,
    pub manager_ctx: *mut c_void,
    pub deleter: Option<unsafe extern "C" fn(*mut DLManagedTensor)>,
}

struct Context {
    bytes: Vec<u8>,
    shape: [i64; 4],
}

unsafe extern "C" fn delete_frames(ptr: *mut DLManagedTensor) {
    if ptr.is_null() {
        return;
    }
    // SAFETY: both boxes were leaked by `DlpackFrames::new` and are freed once.
    unsafe {
        let managed = Box::from_raw(ptr);
        drop(Box::from_raw(managed.manager_ctx as *mut Context));
    }
}

/// Owns an exported frame tensor until it is handed to a consumer.
#[derive(Debug)]
pub struct DlpackFrames {
    ptr: *mut DLManagedTensor,
}

// The tensor owns its memory exclusively; nothing is shared across threads.
unsafe impl Send for DlpackFrames {}

impl DlpackFrames {
    /// Wraps host frames without copying them.
    pub fn new(frames: FrameBatch) -> Self {
        let shape = frames.shape().map(|d| d as i64);
        let mut ctx = Box::new(Context {
            bytes: frames.into_bytes(),
            shape,
        });
        let tensor = DLTensor {
            data: ctx.bytes.as_mut_ptr() as *mut c_void,
            device: DLDevice {
                device_type: DL_CPU,
                device_id: 0,
            },
            ndim: 4,
            dtype: DLDataType {
                code: DL_UINT,
                bits: 8,
                lanes: 1,
            },
            shape: ctx.shape.as_mut_ptr(),
            strides: std::ptr::null_mut(),
            byte_offset: 0,
        };
        let managed = Box::new(DLManagedTensor {
            dl_tensor: tensor,
            manager_ctx: Box::into_raw(ctx) as *mut c_void,
            deleter: Some(delete_frames),
        });
        DlpackFrames {
            ptr: Box::into_raw(managed),
        }
    }

    pub fn tensor(&self) -> &DLTensor {
        // SAFETY: `ptr` is valid until `into_raw` or drop.
        unsafe { &(*self.ptr).dl_tensor }
    }

    pub fn shape(&self) -> &[i64] {
        let t = self.tensor();
        // SAFETY: shape points at the context's four dims.
        unsafe { std::slice::from_raw_parts(t.shape, t.ndim as usize) }
    }

    pub fn data(&self) -> &[u8] {
        let t = self.tensor();
        let len = self.shape().iter().product::<i64>() as usize;
        // SAFETY: data points at `len` initialized bytes owned by the context.
        unsafe { std::slice::from_raw_parts(t.data as *const u8, len) }
    }

    /// Hands ownership to a consumer, which must call the tensor's deleter.
    pub fn into_raw(self) -> *mut DLManagedTensor {
        let ptr = self.ptr;
        std::mem::forget(self);
        ptr
    }
}

impl Drop for DlpackFrames {
    fn drop(&mut self) {
        // SAFETY: still owned here, so the deleter has not run.
        unsafe { delete_frames(self.ptr) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames() -> FrameBatch {
        let mut f = FrameBatch::zeroed(2, 3, 2);
        for (i, b) in f.as_bytes_mut().iter_mut().enumerate() {
            *b = i as u8;
        }
        f
    }

    #[test]
    fn descriptor_fields() {
        let f = frames();
        let expected = f.as_bytes().to_vec();
        let t = DlpackFrames::new(f);
        assert_eq!(t.shape(), &[2, 2, 3, 4]);
        assert_eq!(t.tensor().dtype, DLDataType { code: DL_UINT, bits: 8, lanes: 1 });
        assert_eq!(t.tensor().device.device_type, DL_CPU);
        assert!(t.tensor().strides.is_null());
        assert_eq!(t.data(), &expected[..]);
    }

    #[test]
    fn wraps_without_copy() {
        let f = frames();
        let before = f.as_bytes().as_ptr();
        let t = DlpackFrames::new(f);
        assert_eq!(t.tensor().data as *const u8, before);
    }

    #[test]
    fn consumer_deleter_frees() {
        let raw = DlpackFrames::new(frames()).into_raw();
        unsafe {
            assert_eq!((*raw).dl_tensor.ndim, 4);
            ((*raw).deleter.unwrap())(raw);
        }
    }

    #[test]
    fn struct_layout_matches_header() {
        use std::mem::{offset_of, size_of};
        assert_eq!(size_of::<DLDevice>(), 8);
        assert_eq!(size_of::<DLDataType>(), 4);
        assert_eq!(offset_of!(DLTensor, device), 8);
        assert_eq!(offset_of!(DLTensor, ndim), 16);
        assert_eq!(offset_of!(DLTensor, dtype), 20);
        assert_eq!(offset_of!(DLTensor, shape), 24);
        assert_eq!(size_of::<DLTensor>(), 48);
        assert_eq!(size_of::<DLManagedTensor>(), 64);
    }
}
