//! Rotation about the image center.

use crate::tensor::{Geometry, Image, Tensor3};

/// Fill value for pixels rotated in from outside the canvas (black).
pub const FILL: f64 = -1.0;

fn quarter_turns(degrees: f64) -> Option<u32> {
    let q = degrees / 90.0;
    (q.fract().abs() < 1e-12).then(|| q.round().rem_euclid(4.0) as u32)
}

/// One exact 90° counter-clockwise turn; the canvas is transposed.
fn rot90(x: &Tensor3) -> Tensor3 {
    let g = x.geometry();
    let out_g = Geometry::new(g.channels, g.width, g.height);
    Tensor3::from_fn(out_g, |c, r, col| x.get(c, col, g.width - 1 - r))
}

/// Rotates counter-clockwise by `degrees`. Multiples of 90° are exact index
/// permutations; other angles use bilinear interpolation on the same canvas.
pub fn rotate(x: &Image, degrees: f64) -> Image {
    if let Some(q) = quarter_turns(degrees) {
        let mut t = x.0.clone();
        for _ in 0..q {
            t = rot90(&t);
        }
        return Image(t);
    }
    let g = x.geometry();
    let (cy, cx) = ((g.height as f64 - 1.0) / 2.0, (g.width as f64 - 1.0) / 2.0);
    let (s, c) = degrees.to_radians().sin_cos();
    let sample = |ch: usize, r: i64, col: i64| -> f64 {
        if r < 0 || col < 0 || r >= g.height as i64 || col >= g.width as i64 {
            FILL
        } else {
            x.get(ch, r as usize, col as usize)
        }
    };
    Image::from_fn(g, |ch, r, col| {
        let dx = col as f64 - cx;
        let dy = r as f64 - cy;
        let sx = c * dx - s * dy + cx;
        let sy = s * dx + c * dy + cy;
        let (x0, y0) = (sx.floor(), sy.floor());
        let (fx, fy) = (sx - x0, sy - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let top = (1.0 - fx) * sample(ch, y0, x0) + fx * sample(ch, y0, x0 + 1);
        let bottom = (1.0 - fx) * sample(ch, y0 + 1, x0) + fx * sample(ch, y0 + 1, x0 + 1);
        (1.0 - fy) * top + fy * bottom
    })
}
