//! On-disk formats: AMBT v1 tensors and flat `key = value` text files.

mod ambt;
mod kv;

pub use ambt::{load_tensor, load_tensor_dyn, save_tensor, DynTensor, AMBT_MAGIC, AMBT_VERSION};
pub use kv::{fnv1a64, KvMap};
