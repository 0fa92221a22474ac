use super::LabError;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// A finite point set in a box.
///
/// Regular grids with `resolution` points per axis include both endpoints,
/// so resolution `2r - 1` refines resolution `r`. Random grids with the same
/// seed produce prefixes of each other as `count` grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grid {
    Regular { ranges: Vec<(f64, f64)>, resolution: usize },
    Random { ranges: Vec<(f64, f64)>, count: usize, seed: u64 },
    Points(Vec<Vec<f64>>),
}

impl Grid {
    pub fn regular(ranges: Vec<(f64, f64)>, resolution: usize) -> Self {
        Grid::Regular { ranges, resolution }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Grid::Regular { ranges, .. } | Grid::Random { ranges, .. } => Some(ranges.len()),
            Grid::Points(p) => p.first().map(Vec::len),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::Regular { ranges, resolution } => resolution.pow(ranges.len() as u32),
            Grid::Random { count, .. } => *count,
            Grid::Points(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Axis ranges, or the bounding box of explicit points.
    pub fn ranges(&self) -> Vec<(f64, f64)> {
        match self {
            Grid::Regular { ranges, .. } | Grid::Random { ranges, .. } => ranges.clone(),
            Grid::Points(p) => {
                let n = p.first().map_or(0, Vec::len);
                (0..n)
                    .map(|j| {
                        p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[j]), hi.max(x[j])))
                    })
                    .collect()
            }
        }
    }

    /// Points in a fixed order: regular grids vary the last axis fastest.
    pub fn points<F: Float>(&self) -> Vec<Vec<F>> {
        let cast = |v: f64| F::from(v).expect("grid coordinate representable");
        match self {
            Grid::Regular { ranges, resolution } => {
                let axes: Vec<Vec<f64>> = ranges.iter().map(|&(lo, hi)| axis(lo, hi, *resolution)).collect();
                let mut out = vec![Vec::new()];
                for a in &axes {
                    out = out
                        .into_iter()
                        .flat_map(|prefix| {
                            a.iter().map(move |&v| {
                                let mut p = prefix.clone();
                                p.push(v);
                                p
                            })
                        })
                        .collect();
                }
                out.into_iter().map(|p| p.into_iter().map(cast).collect()).collect()
            }
            Grid::Random { ranges, count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..*count)
                    .map(|_| {
                        ranges
                            .iter()
                            .map(|&(lo, hi)| cast(if lo < hi { rng.random_range(lo..hi) } else { lo }))
                            .collect()
                    })
                    .collect()
            }
            Grid::Points(p) => p.iter().map(|x| x.iter().copied().map(cast).collect()).collect(),
        }
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub type Evaluator<F> = Arc<dyn Fn(&[F], &[F]) -> F + Send + Sync>;

/// A real-valued family `f(x, θ)` together with the finite grids it is
/// probed on.
#[derive(Clone)]
pub struct ParametricFamily<F: Float> {
    pub name: String,
    pub input_dim: usize,
    pub param_dim: usize,
    pub evaluator: Evaluator<F>,
    pub input_grid: Grid,
    pub param_grid: Grid,
}

impl<F: Float> fmt::Debug for ParametricFamily<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricFamily")
            .field("name", &self.name)
            .field("input_dim", &self.input_dim)
            .field("param_dim", &self.param_dim)
            .field("input_grid", &self.input_grid)
            .field("param_grid", &self.param_grid)
            .finish()
    }
}

impl<F: Float + Send + Sync> ParametricFamily<F> {
    pub fn new(
        name: impl Into<String>,
        input_dim: usize,
        param_dim: usize,
        evaluator: impl Fn(&[F], &[F]) -> F + Send + Sync + 'static,
        input_grid: Grid,
        param_grid: Grid,
    ) -> Self {
        ParametricFamily {
            name: name.into(),
            input_dim,
            param_dim,
            evaluator: Arc::new(evaluator),
            input_grid,
            param_grid,
        }
    }

    pub fn with_grids(&self, input_grid: Grid, param_grid: Grid) -> Self {
        ParametricFamily { input_grid, param_grid, ..self.clone() }
    }

    pub fn eval(&self, x: &[F], theta: &[F]) -> F {
        (self.evaluator)(x, theta)
    }

    fn check_grids(&self) -> Result<(), LabError> {
        for (grid, dim, what) in [(&self.input_grid, self.input_dim, "input"), (&self.param_grid, self.param_dim, "parameter")] {
            if let Some(d) = grid.dim() {
                if d != dim {
                    return Err(LabError::GridShape(format!("{what} grid has dimension {d}, family expects {dim}")));
                }
            }
        }
        Ok(())
    }

    /// All values `f(x_j, θ_i)`, evaluated in parallel.
    pub fn values(&self) -> Result<ValueMatrix<F>, LabError> {
        self.check_grids()?;
        let xs: Vec<Vec<F>> = self.input_grid.points();
        let thetas: Vec<Vec<F>> = self.param_grid.points();
        let rows: Vec<Vec<F>> = thetas
            .par_iter()
            .map(|t| xs.iter().map(|x| self.eval(x, t)).collect())
            .collect();
        if let Some((i, j)) = rows
            .iter()
            .enumerate()
            .find_map(|(i, r)| r.iter().position(|v| !v.is_finite()).map(|j| (i, j)))
        {
            return Err(LabError::NonFinite { input: j, param: i });
        }
        let cols = (0..xs.len()).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Ok(ValueMatrix { xs, thetas, cols })
    }
}

/// Evaluated family: `cols[j][i] = f(x_j, θ_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueMatrix<F> {
    pub xs: Vec<Vec<F>>,
    pub thetas: Vec<Vec<F>>,
    pub cols: Vec<Vec<F>>,
}
