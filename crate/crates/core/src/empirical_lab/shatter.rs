//! Exhaustive shattering probes on finite grids.
//!
//! Sets grow level by level; a `d`-set is only tried when all its
//! `(d-1)`-subsets were shattered, since shattering is hereditary. For a
//! fixed set the thresholds are found by backtracking over the distinct
//! evaluated values of one column at a time, keeping only thresholds that
//! split every current pattern class, and the final two columns are solved
//! jointly by a sweep.

use super::family::{ParametricFamily, ValueMatrix};
use super::{LabError, ProbeKind, ProbeResult, ShatterWitness, Witness};
use num_traits::Float;
use rayon::prelude::*;
use std::cmp::Ordering;
use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

pub const MAX_SHATTER_D: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShatterConfig {
    pub max_d: usize,
    /// Cap on work units, counted per level and checked up front against
    /// `sum_d C(n, d) 2^d`.
    pub budget: u64,
}

impl Default for ShatterConfig {
    fn default() -> Self {
        ShatterConfig { max_d: 6, budget: 2_000_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode<F> {
    Vc,
    Pseudo,
    Fat(F),
}

fn cmp<F: Float>(a: &F, b: &F) -> Ordering {
    a.partial_cmp(b).expect("values are finite")
}

fn binomial(n: u64, k: u64) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * u128::from(n - i) / u128::from(i + 1))
}

fn precheck(n: usize, cfg: &ShatterConfig) -> Result<(), LabError> {
    if cfg.max_d > MAX_SHATTER_D {
        return Err(LabError::MaxDTooLarge(cfg.max_d));
    }
    let d_max = cfg.max_d.min(n) as u64;
    let total: u128 = (1..=d_max).map(|d| binomial(n as u64, d) << d).sum();
    if total > u128::from(cfg.budget) {
        return Err(LabError::GridTooLarge { work: total.min(u128::from(u64::MAX)) as u64, budget: cfg.budget });
    }
    Ok(())
}

/// Work counter shared by every search of a probe. Each subset search is
/// deterministic, so whether the total exceeds the cap does not depend on
/// scheduling.
struct Work<'a> {
    used: &'a AtomicU64,
    cap: u64,
}

impl Work<'_> {
    fn charge(&mut self, units: usize) -> Result<(), ()> {
        let before = self.used.fetch_add(units as u64, AtomicOrdering::Relaxed);
        if before.saturating_add(units as u64) > self.cap {
            Err(())
        } else {
            Ok(())
        }
    }
}

struct Search<'a, F> {
    cols: Vec<&'a [F]>,
    mode: Mode<F>,
}

type Outcome<F> = Result<Option<Vec<F>>, ()>;

impl<F: Float> Search<'_, F> {
    fn run(&self, work: &mut Work) -> Outcome<F> {
        let d = self.cols.len();
        match self.mode {
            Mode::Vc => {
                work.charge(self.cols[0].len() * d)?;
                let mut seen = vec![false; 1 << d];
                for t in 0..self.cols[0].len() {
                    seen[self.pattern_at(t, &vec![F::zero(); d])] = true;
                }
                Ok(seen.iter().all(|&s| s).then(|| vec![F::zero(); d]))
            }
            Mode::Pseudo | Mode::Fat(_) => {
                let live: Vec<usize> = (0..self.cols[0].len()).collect();
                let mut pat = vec![0u32; live.len()];
                let mut thresholds = vec![None; d];
                if self.rec(&live, &mut pat, &mut thresholds, 0, work)? {
                    Ok(Some(thresholds.into_iter().map(|t| t.expect("all assigned")).collect()))
                } else {
                    Ok(None)
                }
            }
        }
    }

    fn pattern_at(&self, t: usize, thresholds: &[F]) -> usize {
        self.cols
            .iter()
            .zip(thresholds)
            .enumerate()
            .fold(0, |acc, (i, (c, &r))| acc | (usize::from(c[t] > r) << i))
    }

    /// Extremes of column `j` over each pattern class of the live rows.
    fn class_extremes(&self, j: usize, live: &[usize], pat: &[u32], classes: usize) -> Vec<(F, F)> {
        let mut ext = vec![(F::infinity(), F::neg_infinity()); classes];
        for (&t, &c) in live.iter().zip(pat) {
            let v = self.cols[j][t];
            let e = &mut ext[c as usize];
            e.0 = e.0.min(v);
            e.1 = e.1.max(v);
        }
        ext
    }

    /// Thresholds for column `j` that split every class, leaving at least
    /// `need` rows of each class on each side.
    fn candidates(&self, j: usize, live: &[usize], pat: &[u32], classes: usize, need: usize) -> Vec<F> {
        let (lo, hi) = if need <= 1 {
            let ext = self.class_extremes(j, live, pat, classes);
            (ext.iter().map(|e| e.0).fold(F::neg_infinity(), F::max), ext.iter().map(|e| e.1).fold(F::infinity(), F::min))
        } else {
            let mut members: Vec<Vec<F>> = vec![Vec::new(); classes];
            for (&t, &c) in live.iter().zip(pat) {
                members[c as usize].push(self.cols[j][t]);
            }
            let mut lo = F::neg_infinity();
            let mut hi = F::infinity();
            for m in &mut members {
                if m.len() < 2 * need {
                    return Vec::new();
                }
                m.sort_by(cmp);
                lo = lo.max(m[need - 1]);
                hi = hi.min(m[m.len() - need]);
            }
            (lo, hi)
        };
        let mut out: Vec<F> = match self.mode {
            Mode::Fat(g) => live
                .iter()
                .flat_map(|&t| [self.cols[j][t] + g, self.cols[j][t] - g])
                .filter(|&r| r >= lo + g && r <= hi - g)
                .collect(),
            _ => live.iter().map(|&t| self.cols[j][t]).filter(|&v| v >= lo && v < hi).collect(),
        };
        out.sort_by(cmp);
        out.dedup();
        out
    }

    fn rec(&self, live: &[usize], pat: &mut [u32], thr: &mut [Option<F>], k: usize, work: &mut Work) -> Result<bool, ()> {
        let open: Vec<usize> = (0..thr.len()).filter(|&j| thr[j].is_none()).collect();
        if open.is_empty() {
            return Ok(true);
        }
        if open.len() == 2 && matches!(self.mode, Mode::Pseudo) {
            return self.sweep(open[0], open[1], pat, 1 << k, thr, work);
        }
        let classes = 1usize << k;
        let need = 1usize << (open.len() - 1);
        let mut best: Option<(usize, Vec<F>)> = None;
        for &j in &open {
            work.charge(live.len())?;
            let c = self.candidates(j, live, pat, classes, need);
            if c.is_empty() {
                return Ok(false);
            }
            if best.as_ref().is_none_or(|(_, b)| c.len() < b.len()) {
                best = Some((j, c));
            }
        }
        let (j, cands) = best.expect("open is nonempty");
        if open.len() == 1 {
            thr[j] = Some(cands[0]);
            return Ok(true);
        }
        for r in cands {
            work.charge(live.len())?;
            thr[j] = Some(r);
            let (next_live, mut next_pat): (Vec<usize>, Vec<u32>) = match self.mode {
                Mode::Fat(g) => live
                    .iter()
                    .zip(pat.iter())
                    .filter_map(|(&t, &p)| {
                        let v = self.cols[j][t];
                        if v >= r + g {
                            Some((t, p | (1 << k)))
                        } else if v <= r - g {
                            Some((t, p))
                        } else {
                            None
                        }
                    })
                    .unzip(),
                _ => live
                    .iter()
                    .zip(pat.iter())
                    .map(|(&t, &p)| (t, p | (u32::from(self.cols[j][t] > r) << k)))
                    .unzip(),
            };
            if self.rec(&next_live, &mut next_pat, thr, k + 1, work)? {
                return Ok(true);
            }
        }
        thr[j] = None;
        Ok(false)
    }

    /// Solves the last two columns `a`, `b` at once: sweep the threshold on
    /// `a` upward and intersect, over all classes and both sides, the
    /// intervals of thresholds on `b` that split that part.
    fn sweep(&self, a: usize, b: usize, pat: &[u32], classes: usize, thr: &mut [Option<F>], work: &mut Work) -> Result<bool, ()> {
        let (ca, cb) = (self.cols[a], self.cols[b]);
        let n = ca.len();
        work.charge(n * (classes + 16))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| cmp(&ca[x], &ca[y]).then(x.cmp(&y)));
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
        for &t in &order {
            members[pat[t] as usize].push(t);
        }
        // suffix[c][i] = extremes of column b over members[c][i..]
        let suffix: Vec<Vec<(F, F)>> = members
            .iter()
            .map(|m| {
                let mut s = vec![(F::infinity(), F::neg_infinity()); m.len() + 1];
                for i in (0..m.len()).rev() {
                    let v = cb[m[i]];
                    s[i] = (s[i + 1].0.min(v), s[i + 1].1.max(v));
                }
                s
            })
            .collect();
        let mut taken = vec![0usize; classes];
        let mut left = vec![(F::infinity(), F::neg_infinity()); classes];
        let mut i = 0;
        while i < n {
            let u = ca[order[i]];
            while i < n && ca[order[i]] == u {
                let t = order[i];
                let c = pat[t] as usize;
                taken[c] += 1;
                left[c] = (left[c].0.min(cb[t]), left[c].1.max(cb[t]));
                i += 1;
            }
            if i == n {
                break;
            }
            let mut lo = F::neg_infinity();
            let mut hi = F::infinity();
            for c in 0..classes {
                let right = suffix[c][taken[c]];
                lo = lo.max(left[c].0).max(right.0);
                hi = hi.min(left[c].1).min(right.1);
            }
            if lo < hi {
                thr[a] = Some(u);
                thr[b] = Some(lo);
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Replaces each threshold by the midpoint to the next larger value of its
/// column, which induces the same split.
fn readable_thresholds<F: Float>(cols: &[&[F]], thr: &[F]) -> Vec<F> {
    cols.iter()
        .zip(thr)
        .map(|(c, &r)| {
            let next = c.iter().copied().filter(|&v| v > r).fold(F::infinity(), F::min);
            let two = F::one() + F::one();
            let mid = r + (next - r) / two;
            if r < mid && mid < next {
                mid
            } else {
                r
            }
        })
        .collect()
}

fn classify<F: Float>(v: F, r: F, mode: Mode<F>) -> Option<bool> {
    match mode {
        Mode::Fat(g) if v >= r + g => Some(true),
        Mode::Fat(g) if v <= r - g => Some(false),
        Mode::Fat(_) => None,
        _ => Some(v > r),
    }
}

/// First row realizing each sign pattern, indexed by pattern bitmask.
fn pattern_rows<F: Float>(cols: &[&[F]], thr: &[F], mode: Mode<F>) -> Vec<Option<usize>> {
    let d = cols.len();
    let mut rows = vec![None; 1 << d];
    'rows: for t in 0..cols.first().map_or(0, |c| c.len()) {
        let mut p = 0;
        for (i, (c, &r)) in cols.iter().zip(thr).enumerate() {
            match classify(c[t], r, mode) {
                Some(up) => p |= usize::from(up) << i,
                None => continue 'rows,
            }
        }
        if rows[p].is_none() {
            rows[p] = Some(t);
        }
    }
    rows
}

fn next_level(prev: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let known: HashSet<&[usize]> = prev.iter().map(Vec::as_slice).collect();
    let mut out = Vec::new();
    for (i, a) in prev.iter().enumerate() {
        let d = a.len();
        for b in &prev[i + 1..] {
            if a[..d - 1] != b[..d - 1] {
                break;
            }
            let mut cand = a.clone();
            cand.push(b[d - 1]);
            let closed = (0..d - 1).all(|skip| {
                let sub: Vec<usize> = cand.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, &v)| v).collect();
                known.contains(sub.as_slice())
            });
            if closed {
                out.push(cand);
            }
        }
    }
    out
}

fn probe<F: Float + Send + Sync>(fam: &ParametricFamily<F>, cfg: &ShatterConfig, mode: Mode<F>, kind: ProbeKind) -> Result<ProbeResult, LabError> {
    let vm = fam.values()?;
    let n = vm.xs.len();
    precheck(n, cfg)?;
    let mut level: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
    let mut best: Option<(Vec<usize>, Vec<F>)> = None;
    let used = AtomicU64::new(0);
    for _ in 1..=cfg.max_d.min(n) {
        if level.is_empty() || vm.thetas.is_empty() {
            break;
        }
        let results: Vec<Outcome<F>> = level
            .par_iter()
            .map(|set| {
                let search = Search { cols: set.iter().map(|&j| vm.cols[j].as_slice()).collect(), mode };
                search.run(&mut Work { used: &used, cap: cfg.budget })
            })
            .collect();
        if results.iter().any(Result::is_err) {
            return Err(LabError::BudgetExceeded(cfg.budget));
        }
        let shattered: Vec<(Vec<usize>, Vec<F>)> = level
            .into_iter()
            .zip(results)
            .filter_map(|(set, r)| r.expect("checked above").map(|t| (set, t)))
            .collect();
        let Some(first) = shattered.first() else { break };
        best = Some(first.clone());
        let sets: Vec<Vec<usize>> = shattered.into_iter().map(|(s, _)| s).collect();
        level = next_level(&sets);
    }
    let total_work = used.load(AtomicOrdering::Relaxed);
    Ok(match best {
        None => ProbeResult::new(kind, 0, Witness::Shatter(ShatterWitness::default()), &fam.name, total_work),
        Some((set, thr)) => {
            let cols: Vec<&[F]> = set.iter().map(|&j| vm.cols[j].as_slice()).collect();
            let thr = match mode {
                Mode::Pseudo => readable_thresholds(&cols, &thr),
                _ => thr,
            };
            let witness = build_witness(&vm, &set, &thr, mode);
            ProbeResult::new(kind, set.len() as u64, Witness::Shatter(witness), &fam.name, total_work)
        }
    })
}

fn build_witness<F: Float>(vm: &ValueMatrix<F>, set: &[usize], thr: &[F], mode: Mode<F>) -> ShatterWitness {
    let cols: Vec<&[F]> = set.iter().map(|&j| vm.cols[j].as_slice()).collect();
    let rows: Vec<usize> = pattern_rows(&cols, thr, mode)
        .into_iter()
        .map(|r| r.expect("witness realizes every pattern"))
        .collect();
    let f = |v: &F| v.to_f64().expect("finite");
    ShatterWitness {
        point_indices: set.to_vec(),
        points: set.iter().map(|&j| vm.xs[j].iter().map(f).collect()).collect(),
        thresholds: thr.iter().map(f).collect(),
        param_indices: rows.clone(),
        params: rows.iter().map(|&t| vm.thetas[t].iter().map(f).collect()).collect(),
        gamma: match mode {
            Mode::Fat(g) => Some(f(&g)),
            _ => None,
        },
    }
}

/// Largest set pseudo-shattered on the grids, with strict `f > r`.
pub fn pdim_lower_bound<F: Float + Send + Sync>(fam: &ParametricFamily<F>, cfg: &ShatterConfig) -> Result<ProbeResult, LabError> {
    probe(fam, cfg, Mode::Pseudo, ProbeKind::PdimLb)
}

/// Largest set shattered by the classifiers `x -> [f(x, θ) > 0]`.
pub fn vc_lower_bound<F: Float + Send + Sync>(fam: &ParametricFamily<F>, cfg: &ShatterConfig) -> Result<ProbeResult, LabError> {
    probe(fam, cfg, Mode::Vc, ProbeKind::VcLb)
}

/// Largest set fat-shattered at margin `gamma > 0`.
pub fn fat_lower_bound<F: Float + Send + Sync>(fam: &ParametricFamily<F>, gamma: F, cfg: &ShatterConfig) -> Result<ProbeResult, LabError> {
    if !(gamma > F::zero()) {
        return Err(LabError::BadMargin);
    }
    probe(fam, cfg, Mode::Fat(gamma), ProbeKind::FatLb)
}

/// Re-evaluates a shattering witness and checks that every listed row
/// realizes its pattern.
pub fn verify_witness<F: Float + Send + Sync>(fam: &ParametricFamily<F>, result: &ProbeResult) -> bool {
    let Witness::Shatter(w) = &result.witness else { return false };
    if result.value == 0 {
        return w.points.is_empty();
    }
    if w.points.len() as u64 != result.value || w.params.len() != 1 << w.points.len() {
        return false;
    }
    let cast = |v: f64| F::from(v).expect("representable");
    let mode = match (result.kind, w.gamma) {
        (ProbeKind::FatLb, Some(g)) => Mode::Fat(cast(g)),
        (ProbeKind::VcLb, None) => Mode::Vc,
        (ProbeKind::PdimLb, None) => Mode::Pseudo,
        _ => return false,
    };
    w.params.iter().enumerate().all(|(pattern, theta)| {
        let theta: Vec<F> = theta.iter().copied().map(cast).collect();
        w.points.iter().zip(&w.thresholds).enumerate().all(|(i, (x, &r))| {
            let x: Vec<F> = x.iter().copied().map(cast).collect();
            let r = if matches!(mode, Mode::Vc) { F::zero() } else { cast(r) };
            classify(fam.eval(&x, &theta), r, mode) == Some(pattern >> i & 1 == 1)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical_lab::family::Grid;

    fn affine(res: usize, pres: usize) -> ParametricFamily<f64> {
        ParametricFamily::new(
            "affine",
            1,
            2,
            |x, t| t[0] * x[0] + t[1],
            Grid::regular(vec![(-1.0, 1.0)], res),
            Grid::regular(vec![(-2.0, 2.0); 2], pres),
        )
    }

    #[test]
    fn affine_family() {
        let fam = affine(7, 9);
        let cfg = ShatterConfig::default();
        let p = pdim_lower_bound(&fam, &cfg).unwrap();
        assert_eq!(p.value, 2);
        assert!(verify_witness(&fam, &p));
        let v = vc_lower_bound(&fam, &cfg).unwrap();
        assert_eq!(v.value, 2);
        assert!(verify_witness(&fam, &v));
    }

    #[test]
    fn constant_family() {
        let fam = ParametricFamily::<f64>::new("c", 1, 1, |_, _| 0.5, Grid::regular(vec![(0.0, 1.0)], 5), Grid::regular(vec![(0.0, 1.0)], 3));
        let cfg = ShatterConfig::default();
        assert_eq!(pdim_lower_bound(&fam, &cfg).unwrap().value, 0);
        assert_eq!(vc_lower_bound(&fam, &cfg).unwrap().value, 0);
    }

    #[test]
    fn fixed_classifier() {
        let grid = Grid::regular(vec![(-1.0, 1.0)], 5);
        let one = Grid::Points(vec![vec![0.0]]);
        let fam = ParametricFamily::<f64>::new("sign", 1, 1, |x, _| x[0], grid.clone(), one.clone());
        assert_eq!(vc_lower_bound(&fam, &ShatterConfig::default()).unwrap().value, 0);
        let two = Grid::Points(vec![vec![0.0], vec![1.0]]);
        let fam = ParametricFamily::<f64>::new("flip", 1, 1, |x, t| if t[0] > 0.5 { x[0] } else { 1.0 }, grid, two);
        assert_eq!(vc_lower_bound(&fam, &ShatterConfig::default()).unwrap().value, 1);
    }

    #[test]
    fn fat_is_at_most_pdim() {
        let fam = affine(5, 7);
        let cfg = ShatterConfig::default();
        let fat = fat_lower_bound(&fam, 0.1, &cfg).unwrap();
        assert!(verify_witness(&fam, &fat));
        assert!(fat.value <= pdim_lower_bound(&fam, &cfg).unwrap().value);
        assert_eq!(fat_lower_bound(&fam, 100.0, &cfg).unwrap().value, 0);
        assert!(matches!(fat_lower_bound(&fam, 0.0, &cfg), Err(LabError::BadMargin)));
    }

    #[test]
    fn budget_is_enforced() {
        let cfg = ShatterConfig { max_d: 6, budget: 100 };
        assert!(matches!(pdim_lower_bound(&affine(15, 3), &cfg), Err(LabError::GridTooLarge { .. })));
        let cfg = ShatterConfig { max_d: 13, budget: u64::MAX };
        assert!(matches!(pdim_lower_bound(&affine(3, 3), &cfg), Err(LabError::MaxDTooLarge(13))));
    }

    #[test]
    fn quadratic_family_pseudo_shatters_three() {
        let fam = ParametricFamily::<f64>::new(
            "quad",
            1,
            3,
            |x, t| t[0] * x[0] * x[0] + t[1] * x[0] + t[2],
            Grid::regular(vec![(-1.0, 1.0)], 5),
            Grid::regular(vec![(-2.0, 2.0); 3], 9),
        );
        let r = pdim_lower_bound(&fam, &ShatterConfig::default()).unwrap();
        assert_eq!(r.value, 3);
        assert!(verify_witness(&fam, &r));
    }

    #[test]
    fn apriori_join() {
        let prev = vec![vec![0, 1], vec![0, 2], vec![1, 2], vec![1, 3]];
        assert_eq!(next_level(&prev), vec![vec![0, 1, 2]]);
    }
}
