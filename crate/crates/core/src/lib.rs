//! Single-life reinforcement learning laboratory.
//!
//! Agents are pretrained with SAC in a source environment and then get one
//! reset-free trial in a shifted target environment. The crate contains the
//! dense-network core, the two native environments, replay storage, the SAC
//! engine, discriminator-based reward shaping (GAIL-s, GAIL-sa, QWALE, RND),
//! the single-life runner and the reporting helpers used by the CLI.

pub mod envs;
pub mod error;
pub mod nn;
pub mod replay;
pub mod report;
pub mod runner;
pub mod sac;
pub mod shaping;

pub use error::{Error, Result};

// glibc's memalign never reuses the aligned packing buffers gemm frees on
// every call, so the process heap grows without bound under the system
// allocator during long training runs.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
