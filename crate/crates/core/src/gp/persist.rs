//! Model files: a JSON document tagged with a magic string and a format
//! version. Floats are written in shortest round-trip form, so a reloaded
//! model predicts bit-identically.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Outcome, PlayerId, Registry};
use crate::error::{Error, Result};
use crate::kernel::{KernelParams, MatchVector};
use crate::rao_kupper::DrawParam;

use super::{Hyperparams, LaplacePosterior};

pub const MODEL_MAGIC: &str = "playerkern-laplace-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    magic: String,
    version: u32,
    players: Vec<String>,
    sigma2: f64,
    sigma2_home: f64,
    jitter: f64,
    log_alpha: f64,
    iterations: usize,
    train: Vec<StoredVector>,
    outcomes: String,
    mode: Vec<f64>,
    grad: Vec<f64>,
    sqrt_w: Vec<f64>,
    /// Lower triangle of the Cholesky factor, row by row.
    chol_b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StoredVector {
    plus: Vec<usize>,
    minus: Vec<usize>,
    home: f64,
}

pub fn save_model<W: Write>(post: &LaplacePosterior, registry: &Registry, sink: W) -> Result<()> {
    let n = post.mode.len();
    let mut chol = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in 0..=i {
            chol.push(post.chol_b[(i, j)]);
        }
    }
    let file = ModelFile {
        magic: MODEL_MAGIC.to_owned(),
        version: MODEL_VERSION,
        players: registry.ids().iter().map(|p| p.as_str().to_owned()).collect(),
        sigma2: post.hyper.kernel.sigma2,
        sigma2_home: post.hyper.kernel.sigma2_home,
        jitter: post.hyper.kernel.jitter,
        log_alpha: post.hyper.draw.log_alpha(),
        iterations: post.iterations,
        train: post
            .train_vectors
            .iter()
            .map(|v| StoredVector {
                plus: v.plus_indices().to_vec(),
                minus: v.minus_indices().to_vec(),
                home: v.home(),
            })
            .collect(),
        outcomes: post.train_outcomes.iter().map(|o| o.token()).collect(),
        mode: post.mode.iter().copied().collect(),
        grad: post.grad.iter().copied().collect(),
        sqrt_w: post.sqrt_w.iter().copied().collect(),
        chol_b: chol,
    };
    serde_json::to_writer(sink, &file).map_err(|e| Error::ModelFormat(e.to_string()))
}

pub fn load_model<R: Read>(source: R) -> Result<(LaplacePosterior, Registry)> {
    let bad = |m: String| Error::ModelFormat(m);
    let file: ModelFile = serde_json::from_reader(source).map_err(|e| bad(e.to_string()))?;
    if file.magic != MODEL_MAGIC {
        return Err(bad(format!("not a model file (magic `{}`)", file.magic)));
    }
    if file.version != MODEL_VERSION {
        return Err(bad(format!(
            "unsupported version {} (this build reads {MODEL_VERSION})",
            file.version
        )));
    }

    let n = file.mode.len();
    let lengths_ok = file.train.len() == n
        && file.outcomes.chars().count() == n
        && file.grad.len() == n
        && file.sqrt_w.len() == n
        && file.chol_b.len() == n * (n + 1) / 2;
    if !lengths_ok {
        return Err(bad("inconsistent array lengths".into()));
    }

    let mut registry = Registry::new();
    for p in file.players {
        registry.insert(PlayerId::new(p)?);
    }
    let train_vectors = file
        .train
        .into_iter()
        .map(|v| MatchVector::new(v.plus, v.minus, v.home))
        .collect::<Result<Vec<_>>>()?;
    let train_outcomes = file
        .outcomes
        .chars()
        .map(|c| Outcome::from_token(c.encode_utf8(&mut [0; 4])).ok_or_else(|| bad(format!("bad outcome `{c}`"))))
        .collect::<Result<Vec<_>>>()?;

    let mut chol_b = DMatrix::zeros(n, n);
    let mut it = file.chol_b.into_iter();
    for i in 0..n {
        for j in 0..=i {
            chol_b[(i, j)] = it.next().expect("length checked");
        }
    }
    if (0..n).any(|i| chol_b[(i, i)].is_nan() || chol_b[(i, i)] <= 0.0) {
        return Err(bad("Cholesky factor has a non-positive diagonal".into()));
    }

    let kernel = KernelParams {
        sigma2: file.sigma2,
        sigma2_home: file.sigma2_home,
        jitter: file.jitter,
    };
    kernel.validate()?;
    let hyper = Hyperparams {
        kernel,
        draw: DrawParam::from_log(file.log_alpha)?,
    };

    Ok((
        LaplacePosterior {
            mode: DVector::from_vec(file.mode),
            sqrt_w: DVector::from_vec(file.sqrt_w),
            chol_b,
            train_vectors,
            train_outcomes,
            hyper,
            grad: DVector::from_vec(file.grad),
            iterations: file.iterations,
        },
        registry,
    ))
}
