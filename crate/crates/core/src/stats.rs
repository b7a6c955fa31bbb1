//! Small statistics toolbox shared by the sweep, oracle and fit code.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

/// Sample mean and (n - 1) standard deviation. `None` on empty input.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

/// Wilson score interval for a binomial proportion at two-sided level
/// `1 - alpha`.
pub fn wilson_interval(hits: u64, trials: u64, alpha: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if hits == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if hits == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

/// 95% Wilson interval.
pub fn binomial_ci95(hits: u64, trials: u64) -> (f64, f64) {
    wilson_interval(hits, trials, 0.05)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
    pub min_expected: f64,
}

/// Pearson chi-square test of independence on an `r x c` contingency table
/// (row-major). Rows or columns with zero total are dropped.
pub fn chi_square_independence(table: &[u64], rows: usize, cols: usize) -> Option<ChiSquareTest> {
    assert_eq!(table.len(), rows * cols);
    let row_tot: Vec<f64> = (0..rows)
        .map(|r| table[r * cols..(r + 1) * cols].iter().sum::<u64>() as f64)
        .collect();
    let col_tot: Vec<f64> = (0..cols)
        .map(|c| (0..rows).map(|r| table[r * cols + c]).sum::<u64>() as f64)
        .collect();
    let total: f64 = row_tot.iter().sum();
    let live_rows: Vec<usize> = (0..rows).filter(|&r| row_tot[r] > 0.0).collect();
    let live_cols: Vec<usize> = (0..cols).filter(|&c| col_tot[c] > 0.0).collect();
    if live_rows.len() < 2 || live_cols.len() < 2 {
        return None;
    }
    let mut stat = 0.0;
    let mut min_expected = f64::INFINITY;
    for &r in &live_rows {
        for &c in &live_cols {
            let e = row_tot[r] * col_tot[c] / total;
            min_expected = min_expected.min(e);
            let o = table[r * cols + c] as f64;
            stat += (o - e).powi(2) / e;
        }
    }
    let dof = ((live_rows.len() - 1) * (live_cols.len() - 1)) as f64;
    let p_value = chi_square_sf(stat, dof);
    Some(ChiSquareTest {
        statistic: stat,
        dof,
        p_value,
        min_expected,
    })
}

/// Goodness of fit of `counts` against expected probabilities.
pub fn chi_square_goodness_of_fit(counts: &[u64], probs: &[f64]) -> ChiSquareTest {
    assert_eq!(counts.len(), probs.len());
    let total: f64 = counts.iter().sum::<u64>() as f64;
    let mut stat = 0.0;
    let mut min_expected = f64::INFINITY;
    for (&o, &p) in counts.iter().zip(probs) {
        let e = p * total;
        min_expected = min_expected.min(e);
        stat += (o as f64 - e).powi(2) / e;
    }
    let dof = (counts.len() - 1) as f64;
    ChiSquareTest {
        statistic: stat,
        dof,
        p_value: chi_square_sf(stat, dof),
        min_expected,
    }
}

fn chi_square_sf(stat: f64, dof: f64) -> f64 {
    let d = ChiSquared::new(dof).expect("positive dof");
    d.sf(stat)
}

/// Welch two-sample t-test; returns the two-sided p-value.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, sa) = mean_std(a)?;
    let (mb, sb) = mean_std(b)?;
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let va = sa * sa / a.len() as f64;
    let vb = sb * sb / b.len() as f64;
    if va + vb == 0.0 {
        return Some(if ma == mb { 1.0 } else { 0.0 });
    }
    let t = (ma - mb) / (va + vb).sqrt();
    let dof =
        (va + vb).powi(2) / (va * va / (a.len() as f64 - 1.0) + vb * vb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).ok()?;
    Some(2.0 * dist.sf(t.abs()))
}

/// Average ranks (ties share the mean rank), 1-based.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    pearson(&ranks(x), &ranks(y))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
