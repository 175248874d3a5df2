//! BT.601 full-range RGB ↔ YUV.

/// Mid-level subtracted from stored attributes so each channel is roughly
/// zero-mean.
pub const MID_LEVEL: f64 = 128.0;

/// Converts 8-bit RGB to full-range YUV, each channel clamped to `[0, 255]`.
pub fn rgb_to_yuv(rgb: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(f64::from);
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let u = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
    let v = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
    [y, u, v].map(|c| c.clamp(0.0, 255.0))
}

/// Exact inverse of the (unclamped) forward matrix, before rounding.
pub fn yuv_to_rgb_f64(yuv: [f64; 3]) -> [f64; 3] {
    let [y, u, v] = yuv;
    let (u, v) = (u - 128.0, v - 128.0);
    [y + 1.402 * v, y - 0.344136 * u - 0.714136 * v, y + 1.772 * u]
}

/// YUV back to 8-bit RGB, rounded to nearest and saturated.
pub fn yuv_to_rgb(yuv: [f64; 3]) -> [u8; 3] {
    yuv_to_rgb_f64(yuv).map(|c| c.round().clamp(0.0, 255.0) as u8)
}

/// `rgb_to_yuv` with the mid-level removed, the codec's attribute domain.
pub fn rgb_to_centered_yuv(rgb: [u8; 3]) -> [f64; 3] {
    rgb_to_yuv(rgb).map(|c| c - MID_LEVEL)
}

pub fn centered_yuv_to_rgb(yuv: [f64; 3]) -> [u8; 3] {
    yuv_to_rgb(yuv.map(|c| c + MID_LEVEL))
}
