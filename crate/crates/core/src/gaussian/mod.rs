//! Differentiable Gaussian splatting: primitives, CPU rasterization with an
//! analytic adjoint, masked photometric losses, sparse Adam and the
//! incrementally grown scene.

pub mod loss;
pub mod optim;
pub mod primitive;
pub mod project;
pub mod render;
pub mod scene;

pub use loss::{masked_loss, psnr, LossConfig};
pub use optim::{LearningRates, OptimizerConfig};
pub use primitive::{GaussianPrimitive, Origin};
pub use render::{render_with, RasterSettings, RenderOutput};
pub use scene::{init_from_pointmap, FrameEntry, GaussianScene, SpawnConfig, ViewUpdate};
