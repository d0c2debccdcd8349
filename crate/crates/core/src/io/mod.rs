//! On-disk formats: tensor records, weight archives, and PPM frames. All
//! multi-byte values are little-endian.

mod ppm;
mod tensor_file;

pub use ppm::{
    crop_resize, decode_ppm, encode_ppm, load_video_ppm, read_ppm, save_video_ppm, write_ppm,
    RgbImage,
};
pub use tensor_file::{
    decode_tensor, decode_weights_map, encode_tensor, encode_weights, read_tensor, read_weights,
    write_tensor, write_weights, DTYPE_F32, FORMAT_VERSION, TENSOR_MAGIC, WEIGHTS_MAGIC,
};
