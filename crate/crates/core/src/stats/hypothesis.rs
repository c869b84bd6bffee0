use serde::{Deserialize, Serialize};

use super::special::{chi_square_sf, f_sf, normal_two_sided, student_t_two_sided};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    pub p: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub df: usize,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSum {
    pub u: f64,
    pub z: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedT {
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub f: f64,
    pub df1: usize,
    pub df2: usize,
    pub p: f64,
}

fn check_finite(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{what} contains non-finite values")));
    }
    Ok(())
}

/// 1-based ranks with ties averaged, plus the tie-group sizes.
pub fn average_ranks(xs: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

fn tie_sum(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!("spearman: lengths differ ({} vs {})", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Domain(format!("spearman needs n >= 3, got {n}")));
    }
    check_finite(x, "spearman x")?;
    check_finite(y, "spearman y")?;
    let (rx, _) = average_ranks(x);
    let (ry, _) = average_ranks(y);
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("spearman correlation undefined: a rank vector has zero variance".into()));
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p = if (1.0 - rho.abs()) <= 1e-15 {
        0.0
    } else {
        let t = rho * ((n - 2) as f64 / (1.0 - rho * rho)).sqrt();
        student_t_two_sided(t, (n - 2) as f64)?
    };
    Ok(Correlation { rho, p, n })
}

pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KruskalWallis> {
    if groups.len() < 2 {
        return Err(Error::Domain(format!("kruskal_wallis needs >= 2 groups, got {}", groups.len())));
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(Error::Domain("kruskal_wallis: every group must be non-empty".into()));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    check_finite(&pooled, "kruskal_wallis input")?;
    let n = pooled.len();
    if n < 3 {
        return Err(Error::Domain(format!("kruskal_wallis needs n >= 3, got {n}")));
    }
    let (ranks, ties) = average_ranks(&pooled);
    let nf = n as f64;
    let correction = 1.0 - tie_sum(&ties) / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return Err(Error::Degenerate("kruskal_wallis: all values are identical".into()));
    }
    let mut offset = 0;
    let mut s = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        s += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = ((12.0 / (nf * (nf + 1.0)) * s - 3.0 * (nf + 1.0)) / correction).max(0.0);
    let df = groups.len() - 1;
    Ok(KruskalWallis { h, df, p: chi_square_sf(h, df as f64)? })
}

/// Mann–Whitney U of `a` with a normal approximation; `continuity` is
/// subtracted from |U − E[U]|.
pub(crate) fn mann_whitney(a: &[f64], b: &[f64], continuity: f64) -> Result<RankSum> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("rank_sum_test: both samples must be non-empty".into()));
    }
    check_finite(a, "rank_sum_test a")?;
    check_finite(b, "rank_sum_test b")?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = average_ranks(&pooled);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let ra: f64 = ranks[..a.len()].iter().sum();
    let u = ra - na * (na + 1.0) / 2.0;
    let mu = na * nb / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - tie_sum(&ties) / (n * (n - 1.0)).max(1.0));
    if !(var > 0.0) {
        return Err(Error::Degenerate("rank_sum_test: all pooled values are identical".into()));
    }
    let dev = u - mu;
    let z = dev.signum() * (dev.abs() - continuity).max(0.0) / var.sqrt();
    Ok(RankSum { u, z, p: normal_two_sided(z) })
}

/// Two-sided Wilcoxon rank-sum test with continuity correction.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<RankSum> {
    mann_whitney(a, b, 0.5)
}

pub fn paired_t(a: &[f64], b: &[f64]) -> Result<PairedT> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!("paired_t: lengths differ ({} vs {})", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Domain(format!("paired_t needs n >= 2, got {n}")));
    }
    check_finite(a, "paired_t a")?;
    check_finite(b, "paired_t b")?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = mean(&d);
    let var = d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var <= f64::EPSILON * m.abs().max(1.0).powi(2) {
        return Err(Error::Degenerate("paired_t: differences have zero variance".into()));
    }
    let t = m / (var.sqrt() / (n as f64).sqrt());
    let df = n - 1;
    Ok(PairedT { t, df, p: student_t_two_sided(t, df as f64)? })
}

/// One-way repeated-measures ANOVA; rows are subjects, columns are conditions.
pub fn rm_anova(scores: &[Vec<f64>]) -> Result<Anova> {
    let n = scores.len();
    if n < 2 {
        return Err(Error::Domain(format!("rm_anova needs >= 2 subjects, got {n}")));
    }
    let k = scores[0].len();
    if k < 2 || scores.iter().any(|r| r.len() != k) {
        return Err(Error::Domain("rm_anova needs a rectangular matrix with >= 2 columns".into()));
    }
    for r in scores {
        check_finite(r, "rm_anova input")?;
    }
    let (nf, kf) = (n as f64, k as f64);
    let grand = scores.iter().flatten().sum::<f64>() / (nf * kf);
    let ss_total: f64 = scores.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let ss_treat: f64 = (0..k)
        .map(|j| {
            let m = scores.iter().map(|r| r[j]).sum::<f64>() / nf;
            nf * (m - grand).powi(2)
        })
        .sum();
    let ss_subject: f64 = scores.iter().map(|r| kf * (mean(r) - grand).powi(2)).sum();
    let ss_error = ss_total - ss_treat - ss_subject;
    let df1 = k - 1;
    let df2 = (n - 1) * (k - 1);
    let tiny = 1e-12 * ss_total.max(f64::MIN_POSITIVE);
    if ss_treat <= tiny {
        // Identical condition means: no treatment effect whatever the error term.
        return Ok(Anova { f: 0.0, df1, df2, p: 1.0 });
    }
    if ss_error <= tiny {
        return Err(Error::Degenerate("rm_anova: error sum of squares is zero".into()));
    }
    let f = (ss_treat / df1 as f64) / (ss_error / df2 as f64);
    Ok(Anova { f, df1, df2, p: f_sf(f, df1 as f64, df2 as f64)? })
}
