//! The compact color network: appearance feature and view direction in,
//! RGB out. Three dense layers, ReLU between them, sigmoid at the end.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::gemm;
use crate::masking::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `inputs x outputs`.
    pub w: Grid,
    /// `1 x outputs`.
    pub b: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations of a batched forward pass, reused by [`Mlp::backward_batch`].
#[derive(Debug, Clone, Default)]
pub struct MlpBatch {
    /// Number of rows.
    pub rows: usize,
    /// `acts[0]` is the `rows x input` input matrix, filled by the caller.
    /// Then the post-ReLU hidden layers and the pre-sigmoid outputs.
    pub acts: Vec<Vec<f64>>,
    /// `rows x 3` sigmoid outputs.
    pub rgb: Vec<f64>,
    grad: Vec<f64>,
    grad_prev: Vec<f64>,
}

impl MlpBatch {
    /// Sizes the input matrix for `rows` rows and returns it.
    pub fn input(&mut self, rows: usize, width: usize) -> &mut Vec<f64> {
        self.rows = rows;
        if self.acts.is_empty() {
            self.acts.push(Vec::new());
        }
        self.acts[0].resize(rows * width, 0.0);
        &mut self.acts[0]
    }

    pub fn color(&self, i: usize) -> [f64; 3] {
        [self.rgb[3 * i], self.rgb[3 * i + 1], self.rgb[3 * i + 2]]
    }
}

impl Mlp {
    /// He-uniform weights, zero biases.
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let dims = [input, hidden, hidden, 3];
        let layers = dims
            .windows(2)
            .map(|d| {
                let a = (6.0 / d[0] as f64).sqrt();
                Layer { w: Grid::from_fn(d[0], d[1], |_, _| rng.gen_range(-a..a)), b: Grid::zeros(1, d[1]) }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.rows()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.grids_mut().into_iter().for_each(|g| g.fill(0.0));
        z
    }

    pub fn grids(&self) -> Vec<&Grid> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn grids_mut(&mut self) -> Vec<&mut Grid> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut width = self.input_dim();
        for (i, l) in self.layers.iter().enumerate() {
            if l.w.rows() != width || l.b.shape() != (1, l.w.cols()) {
                return Err(Error::Shape(format!("mlp layer {i} does not chain")));
            }
            width = l.w.cols();
        }
        if width != 3 {
            return Err(Error::Shape(format!("mlp outputs {width} channels, expected 3")));
        }
        Ok(())
    }

    /// Forward pass over `batch.acts[0]`; fills the later activations and
    /// `batch.rgb`.
    pub fn forward_batch(&self, batch: &mut MlpBatch) {
        let n = batch.rows;
        let nl = self.layers.len();
        batch.acts.resize(nl + 1, Vec::new());
        for (i, l) in self.layers.iter().enumerate() {
            let (head, tail) = batch.acts.split_at_mut(i + 1);
            let (x, y) = (&head[i], &mut tail[0]);
            let (din, dout) = l.w.shape();
            y.clear();
            for _ in 0..n {
                y.extend_from_slice(l.b.as_slice());
            }
            gemm(n, din, dout, x, false, l.w.as_slice(), false, 1.0, y);
            if i + 1 < nl {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        batch.rgb.clear();
        batch.rgb.extend(batch.acts[nl].iter().map(|z| sigmoid(*z)));
    }

    /// Backward of [`Mlp::forward_batch`] for output gradients `grad_rgb`
    /// (`rows x 3`). Accumulates parameter gradients into `grads` and writes
    /// the `rows x input` input gradient into `grad_x`.
    pub fn backward_batch(&self, batch: &mut MlpBatch, grad_rgb: &[f64], grads: &mut Mlp, grad_x: &mut Vec<f64>) {
        let n = batch.rows;
        let nl = self.layers.len();
        let mut g = std::mem::take(&mut batch.grad);
        let mut gp = std::mem::take(&mut batch.grad_prev);
        g.clear();
        g.extend(batch.rgb.iter().zip(grad_rgb).map(|(s, gr)| gr * s * (1.0 - s)));
        for i in (0..nl).rev() {
            let l = &self.layers[i];
            let (din, dout) = l.w.shape();
            let x = &batch.acts[i];
            let gl = &mut grads.layers[i];
            for row in g.chunks_exact(dout) {
                for (gb, gi) in gl.b.as_mut_slice().iter_mut().zip(row) {
                    *gb += gi;
                }
            }
            gemm(din, n, dout, x, true, &g, false, 1.0, gl.w.as_mut_slice());
            gp.clear();
            gp.resize(n * din, 0.0);
            gemm(n, dout, din, &g, false, l.w.as_slice(), true, 0.0, &mut gp);
            if i > 0 {
                // ReLU mask from the stored post-activation input.
                for (v, xi) in gp.iter_mut().zip(x) {
                    if *xi <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(&mut g, &mut gp);
        }
        grad_x.clear();
        grad_x.extend_from_slice(&g);
        batch.grad = g;
        batch.grad_prev = gp;
    }
}

fn fill_input(features: &[Vec<f64>], dirs: &[[f64; 3]], width: usize, batch: &mut MlpBatch) {
    let x = batch.input(features.len(), width);
    for ((row, f), d) in x.chunks_exact_mut(width).zip(features).zip(dirs) {
        row[..f.len()].copy_from_slice(f);
        row[f.len()..].copy_from_slice(d);
    }
}

/// Batched forward pass.
pub fn mlp_forward(features: &[Vec<f64>], dirs: &[[f64; 3]], params: &Mlp) -> Result<Vec<[f64; 3]>> {
    check(features, dirs, params)?;
    let mut batch = MlpBatch::default();
    fill_input(features, dirs, params.input_dim(), &mut batch);
    params.forward_batch(&mut batch);
    Ok((0..features.len()).map(|i| batch.color(i)).collect())
}

/// Batched backward pass: parameter gradients and per-row feature gradients of
/// `sum_i <grad_rgb[i], rgb_i>`.
pub fn mlp_backward(
    features: &[Vec<f64>],
    dirs: &[[f64; 3]],
    params: &Mlp,
    grad_rgb: &[[f64; 3]],
) -> Result<(Mlp, Vec<Vec<f64>>)> {
    check(features, dirs, params)?;
    if grad_rgb.len() != features.len() {
        return Err(Error::Shape("one color gradient per row".into()));
    }
    let width = params.input_dim();
    let mut batch = MlpBatch::default();
    fill_input(features, dirs, width, &mut batch);
    params.forward_batch(&mut batch);
    let mut grads = params.zeros_like();
    let gr: Vec<f64> = grad_rgb.iter().flatten().copied().collect();
    let mut gx = Vec::new();
    params.backward_batch(&mut batch, &gr, &mut grads, &mut gx);
    let gf = gx.chunks_exact(width).map(|r| r[..width - 3].to_vec()).collect();
    Ok((grads, gf))
}

fn check(features: &[Vec<f64>], dirs: &[[f64; 3]], params: &Mlp) -> Result<()> {
    params.validate()?;
    if features.len() != dirs.len() {
        return Err(Error::Shape(format!("{} feature rows vs {} directions", features.len(), dirs.len())));
    }
    let want = params.input_dim() - 3;
    if let Some(f) = features.iter().find(|f| f.len() != want) {
        return Err(Error::Shape(format!("feature length {} vs network input {want}", f.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_sigmoid_of_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = Mlp::new(5, 8, &mut rng);
        m.grids_mut().into_iter().for_each(|g| g.fill(0.0));
        m.layers[2].b = Grid::from_vec(1, 3, vec![0.0, 1.0, -2.0]).unwrap();
        let out = mlp_forward(&[vec![0.3, -1.0]], &[[0.0, 0.0, 1.0]], &m).unwrap();
        assert_eq!(out[0], [0.5, sigmoid(1.0), sigmoid(-2.0)]);
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Mlp::new(5, 8, &mut rng);
        assert!(mlp_forward(&[vec![0.0; 3]], &[[0.0; 3]], &m).is_err());
        assert!(mlp_forward(&[vec![0.0; 2]], &[], &m).is_err());
    }

    #[test]
    fn finite_difference_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut m = Mlp::new(7, 6, &mut rng);
        for g in m.grids_mut() {
            for v in g.as_mut_slice() {
                *v += rng.gen_range(-0.2..0.2);
            }
        }
        let feats: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let dirs: Vec<[f64; 3]> = (0..5).map(|_| [rng.gen_range(-1.0..1.0), 0.3, -0.4]).collect();
        let gy: Vec<[f64; 3]> = (0..5).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.7]).collect();
        let obj = |m: &Mlp, f: &[Vec<f64>]| -> f64 {
            mlp_forward(f, &dirs, m).unwrap().iter().zip(&gy).map(|(o, g)| (0..3).map(|c| o[c] * g[c]).sum::<f64>()).sum()
        };
        let (grads, gf) = mlp_backward(&feats, &dirs, &m, &gy).unwrap();
        let h = 1e-6;
        let ng = m.grids().len();
        for _ in 0..10 {
            let gi = rng.gen_range(0..ng);
            let ei = rng.gen_range(0..m.grids()[gi].len());
            let orig = m.grids()[gi].as_slice()[ei];
            let mut p = m.clone();
            p.grids_mut()[gi].as_mut_slice()[ei] = orig + h;
            let mut q = m.clone();
            q.grids_mut()[gi].as_mut_slice()[ei] = orig - h;
            let fd = (obj(&p, &feats) - obj(&q, &feats)) / (2.0 * h);
            let an = grads.grids()[gi].as_slice()[ei];
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-3), "{fd} vs {an}");
        }
        for (i, j) in [(0, 0), (3, 2), (4, 1)] {
            let mut f2 = feats.clone();
            f2[i][j] += h;
            let mut f3 = feats.clone();
            f3[i][j] -= h;
            let fd = (obj(&m, &f2) - obj(&m, &f3)) / (2.0 * h);
            assert!((fd - gf[i][j]).abs() <= 1e-4 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn outputs_stay_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Mlp::new(4, 16, &mut rng);
        let f: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen_range(-30.0..30.0)]).collect();
        let out = mlp_forward(&f, &vec![[0.0, 1.0, 0.0]; 200], &m).unwrap();
        assert!(out.iter().flatten().all(|v| *v >= 0.0 && *v <= 1.0));
    }
}
