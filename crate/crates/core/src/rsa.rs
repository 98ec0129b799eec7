//! Representational similarity analysis over emotion profiles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::emotions::EmotionProfiles;
use crate::error::{Error, Result};
use crate::par;
use crate::registry::SocialGroup;

/// Groups with fewer members give a low-confidence category score.
pub const MIN_CONFIDENT_GROUPS: usize = 3;

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Symmetric group-by-group similarity matrix with a unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rsm {
    pub groups: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl Rsm {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Rows and columns of the named groups, in the given order.
    pub fn submatrix(&self, names: &[String]) -> Result<Rsm> {
        let idx = names
            .iter()
            .map(|n| {
                self.groups
                    .iter()
                    .position(|g| g == n)
                    .ok_or_else(|| Error::Contract(format!("group {n:?} not in matrix")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Rsm {
            groups: names.to_vec(),
            values: idx.iter().map(|&i| idx.iter().map(|&j| self.values[i][j]).collect()).collect(),
        })
    }

    /// The RSM of the profiled groups among `order`, in that order. Groups
    /// whose covered attributes carry no affect at all are left out with a
    /// warning, since cosine is undefined for them.
    pub fn from_profiles(profiles: &EmotionProfiles, order: &[SocialGroup]) -> Result<Rsm> {
        let mut names = Vec::new();
        let mut vectors = Vec::new();
        for g in order {
            if let Some(v) = profiles.get(&g.name) {
                if norm(&v.scores) == 0.0 {
                    log::warn!("{}: all-zero emotion vector left out of the RSM", g.name);
                    continue;
                }
                names.push(g.name.clone());
                vectors.push(v.scores.to_vec());
            }
        }
        build_rsm(names, &vectors)
    }
}

pub fn build_rsm(groups: Vec<String>, vectors: &[Vec<f64>]) -> Result<Rsm> {
    if groups.len() != vectors.len() {
        return Err(Error::Contract(format!("{} names for {} vectors", groups.len(), vectors.len())));
    }
    if groups.len() < 2 {
        return Err(Error::Contract(format!("an RSM needs at least 2 groups, got {}", groups.len())));
    }
    if let Some(i) = vectors.iter().position(|v| norm(v) == 0.0) {
        return Err(Error::Contract(format!("zero emotion vector for group {:?}", groups[i])));
    }
    let n = vectors.len();
    let rows = par::map_range(n, |i| {
        (0..n)
            .map(|j| match i.cmp(&j) {
                std::cmp::Ordering::Equal => 1.0,
                std::cmp::Ordering::Less => cosine(&vectors[i], &vectors[j]),
                std::cmp::Ordering::Greater => 0.0,
            })
            .collect::<Vec<f64>>()
    });
    let mut values = rows;
    for i in 0..n {
        for j in 0..i {
            values[i][j] = values[j][i];
        }
    }
    Ok(Rsm { groups, values })
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation, `None` when either side is constant or the
/// inputs are shorter than two.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsaResult {
    pub groups: Vec<String>,
    /// Per-group ρ between the two matrices' rows; `None` for degenerate rows.
    pub rho: Vec<Option<f64>>,
    /// Mean over non-degenerate rows.
    pub mean: f64,
    pub degenerate: Vec<String>,
}

fn row(m: &Rsm, i: usize, include_diagonal: bool) -> Vec<f64> {
    m.values[i]
        .iter()
        .enumerate()
        .filter(|&(j, _)| include_diagonal || j != i)
        .map(|(_, &v)| v)
        .collect()
}

/// Row-wise Spearman correlation between two RSMs over the same groups.
/// Rows that are identical in both matrices correlate perfectly even when
/// constant, so comparing a matrix with itself always gives 1. Fails with
/// [`Error::Undefined`] when every row is degenerate.
pub fn rsa_correlation(a: &Rsm, b: &Rsm, include_diagonal: bool) -> Result<RsaResult> {
    if a.groups != b.groups {
        return Err(Error::Contract("matrices cover different groups".into()));
    }
    let mut rho = Vec::with_capacity(a.len());
    let mut degenerate = Vec::new();
    for i in 0..a.len() {
        let (ra, rb) = (row(a, i, include_diagonal), row(b, i, include_diagonal));
        let r = if ra.is_empty() {
            None
        } else if ra == rb {
            Some(1.0)
        } else {
            spearman(&ra, &rb)
        };
        if r.is_none() {
            degenerate.push(a.groups[i].clone());
        }
        rho.push(r);
    }
    let valid: Vec<f64> = rho.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::Undefined("every group's similarity row is degenerate".into()));
    }
    let mean = valid.iter().sum::<f64>() / valid.len() as f64;
    Ok(RsaResult {
        groups: a.groups.clone(),
        rho,
        mean,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryShift {
    /// Mean ρ minus 1; `None` for fewer than 2 groups or all rows degenerate.
    pub delta_rho: Option<f64>,
    pub mean_rho: Option<f64>,
    pub groups: usize,
    pub low_confidence: bool,
    pub degenerate: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRho {
    pub categories: BTreeMap<String, CategoryShift>,
    pub overall: CategoryShift,
}

fn shift(a: &Rsm, b: &Rsm, include_diagonal: bool) -> Result<CategoryShift> {
    let (mean, degenerate) = if a.len() < 2 {
        (None, a.groups.clone())
    } else {
        match rsa_correlation(a, b, include_diagonal) {
            Ok(r) => (Some(r.mean), r.degenerate),
            Err(Error::Undefined(_)) => (None, a.groups.clone()),
            Err(e) => return Err(e),
        }
    };
    Ok(CategoryShift {
        delta_rho: mean.map(|m| m - 1.0),
        mean_rho: mean,
        groups: a.len(),
        low_confidence: a.len() < MIN_CONFIDENT_GROUPS,
        degenerate,
    })
}

/// Δρ per category, each computed on the category's own submatrix, plus
/// the whole matrix. Groups missing from either matrix are left out.
pub fn delta_rho(base: &Rsm, tuned: &Rsm, groups: &[SocialGroup], include_diagonal: bool) -> Result<DeltaRho> {
    let mut by_cat: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for g in groups {
        if base.groups.contains(&g.name) && tuned.groups.contains(&g.name) {
            by_cat.entry(g.category.as_str().to_string()).or_default().push(g.name.clone());
        }
    }
    let all: Vec<String> = by_cat.values().flatten().cloned().collect();
    let mut categories = BTreeMap::new();
    for (cat, names) in &by_cat {
        categories.insert(
            cat.clone(),
            shift(&base.submatrix(names)?, &tuned.submatrix(names)?, include_diagonal)?,
        );
    }
    let overall = shift(&base.submatrix(&all)?, &tuned.submatrix(&all)?, include_diagonal)?;
    Ok(DeltaRho { categories, overall })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGrid {
    pub models: Vec<String>,
    /// Mean ρ between each pair of models over their shared groups.
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn model_grid(models: &[(String, Rsm)], include_diagonal: bool) -> Result<ModelGrid> {
    let n = models.len();
    let mut values = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            let shared: Vec<String> = models[i]
                .1
                .groups
                .iter()
                .filter(|g| models[j].1.groups.contains(g))
                .cloned()
                .collect();
            let a = models[i].1.submatrix(&shared)?;
            let b = models[j].1.submatrix(&shared)?;
            let m = match rsa_correlation(&a, &b, include_diagonal) {
                Ok(r) => Some(r.mean),
                Err(Error::Undefined(_)) => None,
                Err(e) => return Err(e),
            };
            values[i][j] = m;
            values[j][i] = m;
        }
    }
    Ok(ModelGrid {
        models: models.iter().map(|(m, _)| m.clone()).collect(),
        values,
    })
}
