//! The CTC line recognizer and its surrounding pieces: network, loss,
//! decoding, error metrics and checkpoints.

pub mod checkpoint;
pub mod ctc;
pub mod metrics;
pub mod net;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use ctc::{ctc_loss, ctc_loss_grad, greedy_decode, required_frames};
pub use metrics::{cer, levenshtein, CorpusCer};
pub use net::{
    ConditioningMode, NetConfig, Recognizer, Tape, BRANCH_FACTORS, NORM_SITES, WIDTH_SUBSAMPLING,
};

use ndarray::Array2;

/// One training batch. Images stay unpadded; every sample runs the network at
/// its true width, so no frame masking is needed in the loss.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub images: Vec<Array2<f32>>,
    pub wsi: Vec<usize>,
    pub transcripts: Vec<String>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.images.iter().map(|im| im.ncols()).collect()
    }
}

/// Grayscale u8 image (ink dark on light) to network input: ink-high floats
/// in [0, 1], indexed [row, col].
pub fn image_to_input(img: &image::GrayImage) -> Array2<f32> {
    let (w, h) = img.dimensions();
    Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
        (255u8 - img.get_pixel(x as u32, y as u32).0[0]) as f32 / 255.0
    })
}
