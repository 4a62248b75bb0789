//! Orthonormal 2-D type-II DCT over square blocks and the texture-energy
//! weighting applied to its coefficients.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Analysis block edge length in samples.
pub const BLOCK_SIZE: usize = 32;
pub const BLOCK_AREA: usize = BLOCK_SIZE * BLOCK_SIZE;

/// Separable DCT with a precomputed basis.
#[derive(Debug, Clone)]
pub struct Dct2d {
    n: usize,
    /// `basis[k * n + x] = alpha(k) * cos(pi * (2x + 1) * k / 2n)`
    basis: Vec<f64>,
}

impl Dct2d {
    pub fn new(n: usize) -> Self {
        assert!(n > 0);
        let mut basis = vec![0.0; n * n];
        for k in 0..n {
            let alpha = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            for x in 0..n {
                basis[k * n + x] = alpha * (PI * (2 * x + 1) as f64 * k as f64 / (2 * n) as f64).cos();
            }
        }
        Self { n, basis }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Transforms `block` (row-major, `n*n`) into `out`. `scratch` must hold `n*n` values.
    pub fn forward(&self, block: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let n = self.n;
        assert_eq!(block.len(), n * n);
        assert_eq!(out.len(), n * n);
        assert_eq!(scratch.len(), n * n);

        // rows: scratch[y][u] = sum_x basis[u][x] * block[y][x]
        for y in 0..n {
            let row = &block[y * n..(y + 1) * n];
            for u in 0..n {
                let b = &self.basis[u * n..(u + 1) * n];
                scratch[y * n + u] = row.iter().zip(b).map(|(s, c)| s * c).sum();
            }
        }
        // columns: out[v][u] = sum_y basis[v][y] * scratch[y][u]
        for v in 0..n {
            let b = &self.basis[v * n..(v + 1) * n];
            for u in 0..n {
                let mut acc = 0.0;
                for (y, c) in b.iter().enumerate() {
                    acc += c * scratch[y * n + u];
                }
                out[v * n + u] = acc;
            }
        }
    }
}

/// Coefficient weights `exp(|(i*j/n^2)^2 - 1|)`, with the DC weight forced to zero.
pub fn energy_weights(n: usize) -> Vec<f64> {
    let n2 = (n * n) as f64;
    let mut w = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let r = (i * j) as f64 / n2;
            w.push(((r * r) - 1.0).abs().exp());
        }
    }
    w[0] = 0.0;
    w
}

/// Reusable per-thread state for block analysis.
#[derive(Debug, Clone)]
pub struct BlockTransform {
    dct: &'static Dct2d,
    weights: &'static [f64],
    centered: Vec<f64>,
    coeffs: Vec<f64>,
    scratch: Vec<f64>,
}

fn shared() -> &'static (Dct2d, Vec<f64>) {
    static SHARED: OnceLock<(Dct2d, Vec<f64>)> = OnceLock::new();
    SHARED.get_or_init(|| (Dct2d::new(BLOCK_SIZE), energy_weights(BLOCK_SIZE)))
}

impl Default for BlockTransform {
    fn default() -> Self {
        let (dct, weights) = shared();
        Self {
            dct,
            weights,
            centered: Vec::with_capacity(BLOCK_AREA),
            coeffs: vec![0.0; BLOCK_AREA],
            scratch: vec![0.0; BLOCK_AREA],
        }
    }
}

impl BlockTransform {
    /// Returns `(texture_energy, dc)` for a 32x32 block.
    ///
    /// The block mean is removed before the transform, so AC coefficients of a
    /// flat block are exactly zero, and the DC term is restored afterwards.
    pub fn analyze(&mut self, block: &[f64]) -> (f64, f64) {
        let mean = block.iter().sum::<f64>() / block.len() as f64;
        self.centered.clear();
        self.centered.extend(block.iter().map(|v| v - mean));
        self.dct.forward(&self.centered, &mut self.coeffs, &mut self.scratch);
        self.coeffs[0] = mean * self.dct.size() as f64;
        let energy = self.coeffs.iter().zip(self.weights).map(|(c, w)| w * c.abs()).sum();
        (energy, self.coeffs[0])
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }
}

/// Weighted sum of absolute AC coefficients of a 32x32 block.
pub fn block_texture_energy(block: &[f64]) -> f64 {
    assert_eq!(block.len(), BLOCK_AREA, "texture energy is defined on 32x32 blocks");
    BlockTransform::default().analyze(block).0
}
