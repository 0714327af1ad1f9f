//! Where patch tokens sit relative to a vocabulary of embedding vectors.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::model::ForecastModel;
use crate::numeric::no_grad;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Token,
    Vocab,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaPoint {
    pub kind: PointKind,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenSpaceStats {
    /// Distance between the token mean and the vocabulary mean.
    pub centroid_distance: f64,
    /// Mean distance from each token to its nearest vocabulary row.
    pub mean_nn_distance: f64,
    /// Mean distance from each vocabulary row to its nearest other row.
    pub vocab_nn_distance: f64,
    pub n_tokens: usize,
    pub n_vocab: usize,
    #[serde(skip)]
    pub pca2d: Vec<PcaPoint>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_row(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let mut m = vec![0.0; d];
    for r in rows {
        m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
    }
    m.iter_mut().for_each(|a| *a /= rows.len() as f64);
    m
}

/// Backbone input tokens (encoder, positions, adapter) for each normalized look-back.
pub fn collect_tokens(model: &ForecastModel, windows: &[WindowSample]) -> Result<Vec<Vec<f64>>> {
    let _g = no_grad();
    let d = model.config().d_model;
    let mut out = Vec::new();
    for w in windows {
        let t = model.encode_patches(&w.x_norm())?;
        out.extend(t.data().chunks_exact(d).map(|r| r.to_vec()));
    }
    Ok(out)
}

/// Projection of the pooled rows onto their top two principal axes. Each
/// axis is signed so its largest-magnitude component is positive.
pub fn pca2d(rows: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let n = rows.len();
    let d = rows.first().map(|r| r.len()).unwrap_or(0);
    if n == 0 || d < 2 {
        return Err(Error::Usage("PCA needs at least one row of dimension 2 or more".into()));
    }
    let mean = mean_row(rows);
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axes: Vec<Vec<f64>> = order[..2]
        .iter()
        .map(|&k| {
            let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let lead = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if lead < 0.0 {
                v.iter().map(|x| -x).collect()
            } else {
                v
            }
        })
        .collect();
    Ok((0..n)
        .map(|i| {
            let r = centered.row(i);
            let p = |a: &Vec<f64>| r.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
            [p(&axes[0]), p(&axes[1])]
        })
        .collect())
}

pub fn token_space_stats(tokens: &[Vec<f64>], vocab: &[Vec<f64>]) -> Result<TokenSpaceStats> {
    if tokens.is_empty() || vocab.is_empty() {
        return Err(Error::Usage("token-space statistics need tokens and vocabulary rows".into()));
    }
    let d = vocab[0].len();
    if let Some(r) = tokens.iter().chain(vocab).find(|r| r.len() != d) {
        return Err(Error::shape("token_space_stats", &[d], &[r.len()]));
    }
    let centroid_distance = dist(&mean_row(tokens), &mean_row(vocab));
    let nn = |x: &[f64], skip: Option<usize>| {
        vocab
            .iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != skip)
            .map(|(_, v)| dist(x, v))
            .fold(f64::INFINITY, f64::min)
    };
    let mean_nn_distance = tokens.iter().map(|t| nn(t, None)).sum::<f64>() / tokens.len() as f64;
    let vocab_nn_distance = if vocab.len() > 1 {
        vocab.iter().enumerate().map(|(i, v)| nn(v, Some(i))).sum::<f64>() / vocab.len() as f64
    } else {
        0.0
    };
    let pooled: Vec<Vec<f64>> = tokens.iter().chain(vocab).cloned().collect();
    let coords = pca2d(&pooled)?;
    let pca = coords
        .iter()
        .enumerate()
        .map(|(i, c)| PcaPoint {
            kind: if i < tokens.len() { PointKind::Token } else { PointKind::Vocab },
            x: c[0],
            y: c[1],
        })
        .collect();
    Ok(TokenSpaceStats {
        centroid_distance,
        mean_nn_distance,
        vocab_nn_distance,
        n_tokens: tokens.len(),
        n_vocab: vocab.len(),
        pca2d: pca,
    })
}

/// CSV with columns `kind,x,y`.
pub fn write_pca_csv(points: &[PcaPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    let wrap = |e: csv::Error| Error::Ingest(format!("{}: {e}", path.display()));
    w.write_record(["kind", "x", "y"]).map_err(wrap)?;
    for p in points {
        let kind = match p.kind {
            PointKind::Token => "token",
            PointKind::Vocab => "vocab",
        };
        w.write_record([kind.to_string(), format!("{:?}", p.x), format!("{:?}", p.y)])
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
