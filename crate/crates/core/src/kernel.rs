//! The player kernel.
//!
//! A match is embedded as a signed incidence vector over players: +1 for
//! team1's starters, -1 for team2's, 0 for everyone else, plus one extra home
//! coordinate in {+1, -1, 0}. The kernel between two matches is
//!
//! ```text
//! k(a, b) = sigma2 * <z_a, z_b> + sigma2_home * h_a * h_b
//! ```
//!
//! With 22 nonzeros per vector the inner product reduces to counting shared
//! players on equal and on opposite sides, which is what this module does
//! instead of forming P-dimensional vectors.

use std::cmp::Ordering;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::{Dataset, MatchRecord, Registry, LINEUP_SIZE};
use crate::error::{Error, Result};

/// Sparse signed player-incidence vector of one match plus its home coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchVector {
    plus: Vec<usize>,
    minus: Vec<usize>,
    home: f64,
}

impl MatchVector {
    pub fn new(mut plus: Vec<usize>, mut minus: Vec<usize>, home: f64) -> Result<Self> {
        plus.sort_unstable();
        minus.sort_unstable();
        if plus.len() != LINEUP_SIZE || minus.len() != LINEUP_SIZE {
            return Err(Error::InvalidParameter(format!(
                "match vector needs {LINEUP_SIZE}+{LINEUP_SIZE} indices, got {}+{}",
                plus.len(),
                minus.len()
            )));
        }
        let distinct = plus.windows(2).all(|w| w[0] < w[1])
            && minus.windows(2).all(|w| w[0] < w[1])
            && sorted_intersection(&plus, &minus) == 0;
        if !distinct {
            return Err(Error::InvalidParameter("match vector indices overlap".into()));
        }
        if ![1.0, -1.0, 0.0].contains(&home) {
            return Err(Error::InvalidParameter(format!("home coordinate {home} not in {{1, -1, 0}}")));
        }
        Ok(MatchVector { plus, minus, home })
    }

    pub fn plus_indices(&self) -> &[usize] {
        &self.plus
    }

    pub fn minus_indices(&self) -> &[usize] {
        &self.minus
    }

    pub fn home(&self) -> f64 {
        self.home
    }

    /// The vector of the same match with sides exchanged (z -> -z, h -> -h).
    pub fn negated(&self) -> MatchVector {
        MatchVector {
            plus: self.minus.clone(),
            minus: self.plus.clone(),
            home: -self.home,
        }
    }

    /// Largest player index referenced, if any.
    pub fn max_index(&self) -> usize {
        self.plus.last().copied().unwrap_or(0).max(self.minus.last().copied().unwrap_or(0))
    }

    /// Dense `[z; h]` of length `num_players + 1`.
    pub fn to_dense(&self, num_players: usize) -> Vec<f64> {
        let mut x = vec![0.0; num_players + 1];
        for &i in &self.plus {
            x[i] = 1.0;
        }
        for &i in &self.minus {
            x[i] = -1.0;
        }
        x[num_players] = self.home;
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub sigma2: f64,
    pub sigma2_home: f64,
    pub jitter: f64,
}

impl KernelParams {
    /// Parameters with the default jitter of `1e-6 * sigma2`.
    pub fn new(sigma2: f64, sigma2_home: f64) -> Self {
        KernelParams {
            sigma2,
            sigma2_home,
            jitter: 1e-6 * sigma2,
        }
    }

    pub fn with_jitter(self, jitter: f64) -> Self {
        KernelParams { jitter, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma2.is_finite()
            && self.sigma2 > 0.0
            && self.sigma2_home.is_finite()
            && self.sigma2_home >= 0.0
            && self.jitter.is_finite()
            && self.jitter >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("kernel parameters out of range: {self:?}")))
        }
    }

    /// Prior variance of a single match's latent score.
    pub fn prior_variance(&self, v: &MatchVector) -> f64 {
        kernel_eval(v, v, self)
    }
}

pub fn build_match_vector(rec: &MatchRecord, registry: &Registry) -> Result<MatchVector> {
    let lookup = |ids: &[crate::data::PlayerId]| -> Result<Vec<usize>> {
        ids.iter()
            .map(|p| registry.get(p).ok_or_else(|| Error::UnknownPlayer(p.to_string())))
            .collect()
    };
    MatchVector::new(lookup(&rec.lineup1)?, lookup(&rec.lineup2)?, rec.home.sign())
}

pub fn build_match_vectors(ds: &Dataset) -> Result<Vec<MatchVector>> {
    ds.records()
        .iter()
        .map(|r| build_match_vector(r, ds.registry()))
        .collect()
}

fn sorted_intersection(a: &[usize], b: &[usize]) -> i64 {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// `z_a . z_b` as an exact integer.
pub fn signed_overlap(a: &MatchVector, b: &MatchVector) -> i64 {
    sorted_intersection(&a.plus, &b.plus) + sorted_intersection(&a.minus, &b.minus)
        - sorted_intersection(&a.plus, &b.minus)
        - sorted_intersection(&a.minus, &b.plus)
}

pub fn kernel_eval(a: &MatchVector, b: &MatchVector, p: &KernelParams) -> f64 {
    p.sigma2 * signed_overlap(a, b) as f64 + p.sigma2_home * a.home * b.home
}

/// Symmetric Gram matrix of `vectors`, with `p.jitter` on the diagonal when
/// `add_jitter` is set.
pub fn gram_matrix(vectors: &[MatchVector], p: &KernelParams, add_jitter: bool) -> DMatrix<f64> {
    gram_matrix_threaded(vectors, p, add_jitter, 1)
}

/// [`gram_matrix`] with rows computed on up to `threads` workers. Every entry
/// is computed independently, so the result does not depend on `threads`.
pub fn gram_matrix_threaded(
    vectors: &[MatchVector],
    p: &KernelParams,
    add_jitter: bool,
    threads: usize,
) -> DMatrix<f64> {
    let n = vectors.len();
    let row = |i: usize| -> Vec<f64> { vectors[i..].iter().map(|b| kernel_eval(&vectors[i], b, p)).collect() };
    let upper: Vec<Vec<f64>> = run_rows(n, threads, row);
    let mut k = DMatrix::zeros(n, n);
    for (i, r) in upper.into_iter().enumerate() {
        for (off, v) in r.into_iter().enumerate() {
            k[(i, i + off)] = v;
            k[(i + off, i)] = v;
        }
    }
    if add_jitter {
        for i in 0..n {
            k[(i, i)] += p.jitter;
        }
    }
    k
}

/// Rectangular kernel matrix between `rows` and `cols`; never jittered.
pub fn cross_kernel_matrix(rows: &[MatchVector], cols: &[MatchVector], p: &KernelParams) -> DMatrix<f64> {
    cross_kernel_matrix_threaded(rows, cols, p, 1)
}

pub fn cross_kernel_matrix_threaded(
    rows: &[MatchVector],
    cols: &[MatchVector],
    p: &KernelParams,
    threads: usize,
) -> DMatrix<f64> {
    let data = run_rows(rows.len(), threads, |i| cols.iter().map(|b| kernel_eval(&rows[i], b, p)).collect());
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| data[i][j])
}

/// Column of kernel values `k(train_i, x)`.
pub fn kernel_column(train: &[MatchVector], x: &MatchVector, p: &KernelParams) -> Vec<f64> {
    train.iter().map(|t| kernel_eval(t, x, p)).collect()
}

fn run_rows<F>(n: usize, threads: usize, row: F) -> Vec<Vec<f64>>
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    if threads <= 1 || n < 64 {
        return (0..n).map(row).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&row).collect()),
        Err(e) => {
            tracing::warn!("could not start {threads} worker threads ({e}); computing sequentially");
            (0..n).map(row).collect()
        }
    }
}

/// Writes the magnitude of the (unjittered) kernel matrix of `ds` as a CSV
/// grid, with matches ordered by competition then date. The header row holds
/// match ids. `blocks` receives `competition,start_row,end_row` with 0-based
/// data-row indices and an exclusive end.
pub fn export_heatmap<G: Write, B: Write>(ds: &Dataset, p: &KernelParams, grid: G, blocks: B) -> Result<()> {
    let mut order: Vec<&MatchRecord> = ds.records().iter().collect();
    order.sort_by(|a, b| {
        (a.competition.as_str(), a.date, a.match_id.as_str()).cmp(&(b.competition.as_str(), b.date, b.match_id.as_str()))
    });
    let vectors = order
        .iter()
        .map(|r| build_match_vector(r, ds.registry()))
        .collect::<Result<Vec<_>>>()?;
    let k = gram_matrix(&vectors, p, false);

    let mut g = csv::Writer::from_writer(grid);
    g.write_record(order.iter().map(|r| r.match_id.as_str()))?;
    for i in 0..k.nrows() {
        g.write_record((0..k.ncols()).map(|j| format_sig6(k[(i, j)].abs())))?;
    }
    g.flush()?;

    let mut b = csv::Writer::from_writer(blocks);
    b.write_record(["competition", "start_row", "end_row"])?;
    let mut start = 0;
    for i in 1..=order.len() {
        if i == order.len() || order[i].competition != order[start].competition {
            b.write_record([order[start].competition.as_str(), &start.to_string(), &i.to_string()])?;
            start = i;
        }
    }
    b.flush()?;
    Ok(())
}

/// Six significant digits, shortest form (like C's `%.6g`).
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}e{exp}")
    }
}
