use super::encode::Coord;
use super::tensor::Matrix;

const BASE: f64 = 10000.0;

/// Sinusoidal embedding of one coordinate value:
/// `out[2i] = sin(v / 10000^(2i/d))`, `out[2i+1] = cos(v / 10000^(2i/d))`.
pub fn spatial_embedding(value: f64, d: usize) -> Vec<f64> {
    assert!(d.is_multiple_of(2), "spatial embedding dimension must be even");
    let mut out = vec![0.0; d];
    for i in 0..d / 2 {
        let freq = BASE.powf((2 * i) as f64 / d as f64);
        let a = value / freq;
        out[2 * i] = a.sin();
        out[2 * i + 1] = a.cos();
    }
    out
}

/// Sum of x and y sinusoids per token; DSEP entries contribute zero here
/// (the learned filler vector is added separately).
pub fn coordinate_lanes(x: &[Coord], y: &[Coord], d: usize) -> Matrix {
    let mut out = Matrix::zeros(x.len(), d);
    for (r, lane) in x.iter().zip(y).enumerate() {
        for c in [lane.0, lane.1] {
            if let Coord::Value(v) = c {
                for (o, e) in out.row_mut(r).iter_mut().zip(spatial_embedding(*v, d)) {
                    *o += e;
                }
            }
        }
    }
    out
}
