use super::family::{Grid, ParametricFamily};
use super::{LabError, ProbeKind, ProbeResult, Witness};
use num_traits::Float;
use rayon::prelude::*;

/// Maximal runs of consecutive `true` entries, as inclusive index ranges.
pub fn runs(mask: impl IntoIterator<Item = bool>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    let mut last = 0;
    for (i, m) in mask.into_iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
        last = i;
    }
    if let Some(s) = start {
        out.push((s, last));
    }
    out
}

fn sublevel_runs<F: Float + Send + Sync>(fam: &ParametricFamily<F>, theta: &[F], xs: &[Vec<F>]) -> Vec<(usize, usize)> {
    runs(xs.iter().map(|x| fam.eval(x, theta) <= F::zero()))
}

/// Components of `{x : f(x, θ) <= 0}` seen on `resolution` evenly spaced
/// points of the family's input range.
pub fn sign_components_1d<F: Float + Send + Sync>(
    fam: &ParametricFamily<F>,
    theta: &[F],
    resolution: usize,
) -> Result<ProbeResult, LabError> {
    if fam.input_dim != 1 {
        return Err(LabError::NotOneDimensional(fam.input_dim));
    }
    let range = fam.input_grid.ranges()[0];
    let xs: Vec<Vec<F>> = Grid::regular(vec![range], resolution).points();
    let found = sublevel_runs(fam, theta, &xs);
    let f = |v: F| v.to_f64().expect("finite");
    let witness = Witness::Components {
        theta: theta.iter().copied().map(f).collect(),
        xs: xs.iter().map(|x| f(x[0])).collect(),
        runs: found.clone(),
    };
    Ok(ProbeResult::new(ProbeKind::Components, found.len() as u64, witness, &fam.name, xs.len() as u64))
}

/// Largest sublevel run count over the parameter grid, measured on the
/// family's own 1-D input grid sorted by coordinate.
pub fn max_components_on_grid<F: Float + Send + Sync>(fam: &ParametricFamily<F>) -> Result<ProbeResult, LabError> {
    if fam.input_dim != 1 {
        return Err(LabError::NotOneDimensional(fam.input_dim));
    }
    let mut xs: Vec<Vec<F>> = fam.input_grid.points();
    xs.sort_by(|a, b| a[0].partial_cmp(&b[0]).expect("finite grid"));
    let thetas: Vec<Vec<F>> = fam.param_grid.points();
    let counts: Vec<Vec<(usize, usize)>> = thetas.par_iter().map(|t| sublevel_runs(fam, t, &xs)).collect();
    let f = |v: F| v.to_f64().expect("finite");
    let best = counts.iter().enumerate().max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)));
    let (value, witness) = match best {
        Some((i, r)) => (
            r.len() as u64,
            Witness::Components {
                theta: thetas[i].iter().copied().map(f).collect(),
                xs: xs.iter().map(|x| f(x[0])).collect(),
                runs: r.clone(),
            },
        ),
        None => (0, Witness::Components { theta: Vec::new(), xs: Vec::new(), runs: Vec::new() }),
    };
    Ok(ProbeResult::new(ProbeKind::Components, value, witness, &fam.name, (thetas.len() * xs.len()) as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ParametricFamily<f64> {
        ParametricFamily::new("f", 1, 0, move |x, _| f(x[0]), Grid::regular(vec![(-3.0, 3.0)], 7), Grid::Points(vec![vec![]]))
    }

    #[test]
    fn runs_of_masks() {
        assert_eq!(runs([true, true, false, true]), vec![(0, 1), (3, 3)]);
        assert!(runs([false, false]).is_empty());
    }

    #[test]
    fn examples() {
        assert_eq!(sign_components_1d(&fam(|x| x * x - 1.0), &[], 601).unwrap().value, 1);
        assert_eq!(sign_components_1d(&fam(|_| 1.0), &[], 601).unwrap().value, 0);
        assert_eq!(sign_components_1d(&fam(|x| (x * x - 1.0) * (x * x - 4.0)), &[], 601).unwrap().value, 2);
        assert_eq!(max_components_on_grid(&fam(|x| x.cos())).unwrap().value, 2);
    }
}
