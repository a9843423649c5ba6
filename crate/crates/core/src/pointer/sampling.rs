//! Grid-based inverse-CDF sampling of pointer readouts.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::GaussianMixture;

/// Cells per unit of pointer width.
pub const CELLS_PER_WIDTH: f64 = 64.0;
/// Window beyond the extreme term centers, in widths.
pub const WINDOW_WIDTHS: f64 = 10.0;
/// Upper bound on cells along one axis; wider windows get coarser cells.
pub const MAX_CELLS: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Samples {
    pub dim: usize,
    /// Row-major, `dim` values per draw.
    pub data: Vec<f64>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.chunks(self.dim).map(move |r| r[c])
    }

    pub fn mean(&self, c: usize) -> f64 {
        self.column(c).sum::<f64>() / self.len() as f64
    }
}

#[derive(Clone, Debug)]
struct Axis {
    lo: f64,
    step: f64,
    cells: usize,
}

impl Axis {
    fn for_coord(mix: &GaussianMixture, c: usize) -> Self {
        let (a, b) = mix.center_range(c);
        let s = mix.width(c);
        let lo = a - WINDOW_WIDTHS * s;
        let hi = b + WINDOW_WIDTHS * s;
        let mut step = s / CELLS_PER_WIDTH;
        let mut cells = ((hi - lo) / step).ceil() as usize;
        if cells > MAX_CELLS {
            cells = MAX_CELLS;
            step = (hi - lo) / cells as f64;
        }
        Axis { lo, step, cells: cells.max(1) }
    }

    fn mid(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.step
    }

    fn draw(&self, cdf: &[f64], rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen::<f64>() * cdf[cdf.len() - 1];
        let i = cdf.partition_point(|&v| v <= u).min(self.cells - 1);
        self.lo + (i as f64 + rng.gen::<f64>()) * self.step
    }
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// Reusable sampler: the first axis is drawn from its marginal, the second
/// (if any) from the conditional at the chosen first-axis cell.
#[derive(Debug)]
pub struct GridSampler {
    mix: GaussianMixture,
    axes: Vec<Axis>,
    first: Vec<f64>,
    conditional: RefCell<HashMap<usize, Vec<f64>>>,
}

impl GridSampler {
    pub fn new(mix: &GaussianMixture) -> Self {
        let axes: Vec<Axis> = (0..mix.dim()).map(|c| Axis::for_coord(mix, c)).collect();
        let a = &axes[0];
        let first = if mix.dim() == 1 {
            cumulative((0..a.cells).map(|i| mix.evaluate(&[a.mid(i)]).norm_sqr()))
        } else {
            cumulative((0..a.cells).map(|i| mix.marginal_density_at(0, a.mid(i))))
        };
        GridSampler { mix: mix.clone(), axes, first, conditional: RefCell::new(HashMap::new()) }
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Samples {
        let dim = self.mix.dim();
        let mut data = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let a = &self.axes[0];
            let x = a.draw(&self.first, rng);
            data.push(x);
            if dim == 2 {
                let cell = (((x - a.lo) / a.step) as usize).min(a.cells - 1);
                let b = &self.axes[1];
                let mut cache = self.conditional.borrow_mut();
                let cdf = cache.entry(cell).or_insert_with(|| {
                    let xm = a.mid(cell);
                    cumulative((0..b.cells).map(|j| self.mix.evaluate(&[xm, b.mid(j)]).norm_sqr()))
                });
                data.push(b.draw(cdf, rng));
            }
        }
        Samples { dim, data }
    }
}

/// `n` independent readouts from `|ψ|²`, reproducible for a given seed.
pub fn sample_readout(mix: &GaussianMixture, n: usize, seed: u64) -> Samples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GridSampler::new(mix).sample(n, &mut rng)
}
