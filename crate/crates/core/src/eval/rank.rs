use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankError {
    #[error("no critical-value entry for {0} models (supported: 2..=20)")]
    UnsupportedK(usize),
    #[error("at least 2 datasets are required, got {0}")]
    TooFewDatasets(usize),
    #[error("missing value for model `{model}` on dataset `{dataset}`")]
    IncompleteMatrix { model: String, dataset: String },
    #[error("{0}")]
    Shape(String),
}

/// Two-tailed α = 0.05 critical values q = Q(0.95, k, ∞)/√2 for the Nemenyi
/// test, indexed by model count k = 2..=20. Entries for k ≤ 10 are the values
/// tabulated in Demšar, "Statistical Comparisons of Classifiers over Multiple
/// Data Sets", JMLR 7 (2006), Table 5(a); the rest are the studentized range
/// quantile evaluated numerically and rounded to three decimals.
const Q_05: [f64; 19] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164, 3.219, 3.268, 3.313, 3.354, 3.391, 3.426, 3.458,
    3.489, 3.517, 3.544,
];

pub fn q_alpha_05(k: usize) -> Result<f64, RankError> {
    if !(2..=20).contains(&k) {
        return Err(RankError::UnsupportedK(k));
    }
    Ok(Q_05[k - 2])
}

/// `CD = q·sqrt(k(k+1) / (6·N_d))`.
pub fn nemenyi_cd(k: usize, n_datasets: usize) -> Result<f64, RankError> {
    let q = q_alpha_05(k)?;
    if n_datasets < 2 {
        return Err(RankError::TooFewDatasets(n_datasets));
    }
    Ok(q * ((k * (k + 1)) as f64 / (6.0 * n_datasets as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    /// `ranks[m][d]`: rank of model `m` on dataset `d` (1 = lowest error).
    pub ranks: Vec<Vec<f64>>,
    pub mean_ranks: Vec<f64>,
    pub cd: f64,
    /// Pairs `(i, j)`, `i < j`, whose mean ranks differ by more than `cd`.
    pub significant: Vec<(usize, usize)>,
}

/// Average ranks of a models × datasets error matrix (`None` = missing).
pub fn rank_models(models: &[String], datasets: &[String], values: &[Vec<Option<f64>>]) -> Result<Ranking, RankError> {
    let k = models.len();
    if values.len() != k || values.iter().any(|row| row.len() != datasets.len()) {
        return Err(RankError::Shape(format!("matrix must be {k} × {}", datasets.len())));
    }
    for (m, row) in values.iter().enumerate() {
        for (d, v) in row.iter().enumerate() {
            if v.is_none_or(|x| !x.is_finite()) {
                return Err(RankError::IncompleteMatrix { model: models[m].clone(), dataset: datasets[d].clone() });
            }
        }
    }
    let cd = nemenyi_cd(k, datasets.len())?;
    let mut ranks = vec![vec![0.0; datasets.len()]; k];
    for d in 0..datasets.len() {
        let col: Vec<f64> = values.iter().map(|row| row[d].unwrap()).collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        let mut i = 0;
        while i < k {
            let mut j = i;
            while j + 1 < k && col[order[j + 1]] == col[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &m in &order[i..=j] {
                ranks[m][d] = avg;
            }
            i = j + 1;
        }
    }
    let mean_ranks: Vec<f64> = ranks.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let mut significant = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            if (mean_ranks[i] - mean_ranks[j]).abs() > cd {
                significant.push((i, j));
            }
        }
    }
    Ok(Ranking { models: models.to_vec(), datasets: datasets.to_vec(), ranks, mean_ranks, cd, significant })
}
