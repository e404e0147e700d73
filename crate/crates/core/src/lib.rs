//! CPU inference engine for a pyramidal monocular depth network, together
//! with its unsupervised stereo loss and the usual depth evaluation metrics.

pub mod error;
pub mod loss;
pub mod metrics;
pub mod net;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
pub use loss::{LossBreakdown, LossWeights, StereoPair};
pub use metrics::{CameraModel, DepthMetrics};
pub use net::{DisparityPyramid, ExitLevel, Network, NetworkConfig};
pub use tensor::{Activation, ConvWeights, Shape, Tensor};
pub use weights::{random_init, WeightContainer};
