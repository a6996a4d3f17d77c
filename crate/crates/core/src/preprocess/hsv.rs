/// Hexcone RGB to HSV: h in [0, 360), s and v in [0, 1]. Hue is 0 when s = 0.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let (r, g, b) = (
        f64::from(r) / 255.0,
        f64::from(g) / 255.0,
        f64::from(b) / 255.0,
    );
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max == 0.0 { 0.0 } else { delta / max };
    if delta == 0.0 {
        return (0.0, s, v);
    }
    let sector = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let h = 60.0 * sector;
    (if h >= 360.0 { h - 360.0 } else { h }, s, v)
}

/// HSV quantized to 8 bits per channel for histogramming.
pub fn hsv_bytes(r: u8, g: u8, b: u8) -> [u8; 3] {
    let (h, s, v) = rgb_to_hsv(r, g, b);
    [
        ((h / 360.0 * 256.0).floor() as usize).min(255) as u8,
        (s * 255.0).round() as u8,
        (v * 255.0).round() as u8,
    ]
}
