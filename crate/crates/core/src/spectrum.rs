//! Eigenvalue-spectrum diagnostics.
//!
//! The tail of a spectrum is modeled as a rank-size power law
//! `λ_k ≈ C k^-β` for `k ≥ k_min`, fitted by least squares on log-log axes.
//! `k_min` is the start that minimizes a Kolmogorov-Smirnov distance between
//! the observed tail and the fitted curve, with at least [`MIN_TAIL`] points.
//! Goodness of fit is judged with a parametric bootstrap that resamples the
//! log-residuals around the fitted curve and repeats the whole selection.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::pca::{PcaModel, EIGENVALUE_FLOOR};

pub const MIN_TAIL: usize = 10;
/// p-value at or above which a spectrum is considered power-law-like.
pub const PASS_P_VALUE: f64 = 0.10;

/// Slack when comparing log-values inside the KS distance, so that a curve
/// reproducing the data up to rounding has distance exactly 0.
const LOG_TOLERANCE: f64 = 1e-9;

/// Result of fitting a power law to the tail of a spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFit {
    pub beta: f64,
    /// Intercept `a = log C` of `log λ = a - β log k`.
    pub intercept: f64,
    /// 1-based rank where the fitted tail starts.
    pub k_min: usize,
    /// Number of ranks in the fitted tail.
    pub tail_len: usize,
    pub r_squared: f64,
    pub ks_stat: f64,
    /// Filled in by [`ks_bootstrap_p`].
    pub p_value: Option<f64>,
    /// 95% OLS confidence interval for β.
    pub ci_beta: (f64, f64),
}

/// Ordinary least squares of `log λ_k` on `log k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLogLine {
    pub intercept: f64,
    pub beta: f64,
    pub r_squared: f64,
    pub se_beta: f64,
    /// `log λ_k - (a - β log k)` for each point.
    pub residuals: Vec<f64>,
}

impl LogLogLine {
    fn fitted_log(&self, rank: usize) -> f64 {
        self.intercept - self.beta * (rank as f64).ln()
    }
}

fn ols(ranks: &[usize], logs: &[f64]) -> LogLogLine {
    let n = logs.len() as f64;
    let xs: Vec<f64> = ranks.iter().map(|&k| (k as f64).ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = logs.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(logs) {
        let (dx, dy) = (x - x_mean, y - y_mean);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let residuals: Vec<f64> = xs
        .iter()
        .zip(logs)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    let se_beta = if n > 2.0 {
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    LogLogLine {
        intercept,
        beta: -slope,
        r_squared,
        se_beta,
        residuals,
    }
}

/// OLS fit over ranks `k_min..=len` of `eigenvalues` (1-based ranks).
pub fn loglog_ols(eigenvalues: &[f64], k_min: usize) -> Result<LogLogLine> {
    if k_min == 0 || k_min > eigenvalues.len() || eigenvalues.len() - k_min + 1 < 2 {
        return Err(Error::InvalidArgument(format!(
            "k_min {k_min} leaves fewer than 2 points of {}",
            eigenvalues.len()
        )));
    }
    let tail = &eigenvalues[k_min - 1..];
    if tail.iter().any(|&v| !v.is_finite() || v <= 0.0) {
        return Err(Error::InvalidArgument("non-positive eigenvalue in the tail".into()));
    }
    let ranks: Vec<usize> = (k_min..=eigenvalues.len()).collect();
    let logs: Vec<f64> = tail.iter().map(|v| v.ln()).collect();
    Ok(ols(&ranks, &logs))
}

/// Largest gap between the empirical CDFs of observed and fitted
/// log-values, evaluated at every observed value.
pub fn ks_distance(observed: &[f64], fitted: &[f64]) -> f64 {
    let n = observed.len() as f64;
    let mut obs = observed.to_vec();
    let mut fit = fitted.to_vec();
    obs.sort_by(f64::total_cmp);
    fit.sort_by(f64::total_cmp);
    obs.iter()
        .map(|&t| {
            let f_obs = obs.partition_point(|&v| v <= t + LOG_TOLERANCE) as f64 / n;
            let f_fit = fit.partition_point(|&v| v <= t + LOG_TOLERANCE) as f64 / n;
            (f_obs - f_fit).abs()
        })
        .fold(0.0, f64::max)
}

struct TailFit {
    start: usize,
    line: LogLogLine,
    ks: f64,
}

/// Scans every admissible tail start; ties keep the longest tail.
fn select_tail(ranks: &[usize], logs: &[f64]) -> TailFit {
    let mut best: Option<TailFit> = None;
    for start in 0..=logs.len() - MIN_TAIL {
        let line = ols(&ranks[start..], &logs[start..]);
        let fitted: Vec<f64> = ranks[start..].iter().map(|&k| line.fitted_log(k)).collect();
        let ks = ks_distance(&logs[start..], &fitted);
        if best.as_ref().is_none_or(|b| ks < b.ks) {
            best = Some(TailFit { start, line, ks });
        }
    }
    best.expect("at least one admissible tail")
}

/// Drops trailing values at or below the eigenvalue floor and checks the rest.
fn usable_prefix(eigenvalues: &[f64]) -> Result<&[f64]> {
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite eigenvalue".into()));
    }
    let end = eigenvalues
        .iter()
        .rposition(|&v| v > EIGENVALUE_FLOOR)
        .map_or(0, |i| i + 1);
    let usable = &eigenvalues[..end];
    if usable.len() < MIN_TAIL {
        return Err(Error::Degenerate(format!(
            "power-law fit needs at least {MIN_TAIL} positive eigenvalues, got {}",
            usable.len()
        )));
    }
    if let Some(i) = usable.iter().position(|&v| v <= EIGENVALUE_FLOOR) {
        return Err(Error::InvalidArgument(format!(
            "non-positive eigenvalue {} at rank {}",
            usable[i],
            i + 1
        )));
    }
    Ok(usable)
}

fn beta_interval(line: &LogLogLine, n: usize) -> (f64, f64) {
    let t = StudentsT::new(0.0, 1.0, (n - 2) as f64)
        .expect("at least 8 degrees of freedom")
        .inverse_cdf(0.975);
    let half = t * line.se_beta;
    (line.beta - half, line.beta + half)
}

/// Fits a rank-size power law to the tail of a non-increasing spectrum.
pub fn fit_power_law(eigenvalues: &[f64]) -> Result<SpectrumFit> {
    let usable = usable_prefix(eigenvalues)?;
    let ranks: Vec<usize> = (1..=usable.len()).collect();
    let logs: Vec<f64> = usable.iter().map(|v| v.ln()).collect();
    let TailFit { start, line, ks } = select_tail(&ranks, &logs);
    let tail_len = usable.len() - start;
    Ok(SpectrumFit {
        beta: line.beta,
        intercept: line.intercept,
        k_min: start + 1,
        tail_len,
        r_squared: line.r_squared,
        ks_stat: ks,
        p_value: None,
        ci_beta: beta_interval(&line, tail_len),
    })
}

/// Parametric bootstrap p-value for `fit`.
///
/// Each replicate multiplies the fitted tail by `exp(ε)`, with `ε` drawn
/// with replacement from the observed log-residuals, and reruns the tail
/// selection. `p` is the fraction of replicates whose KS distance is at
/// least the observed one. Replicate `b` draws from its own ChaCha stream,
/// so the result does not depend on scheduling.
pub fn ks_bootstrap_p(
    fit: &SpectrumFit,
    eigenvalues: &[f64],
    n_boot: usize,
    seed: u64,
) -> Result<f64> {
    if n_boot == 0 {
        return Err(Error::InvalidArgument("n_boot must be at least 1".into()));
    }
    let usable = usable_prefix(eigenvalues)?;
    if fit.k_min == 0 || fit.k_min - 1 + MIN_TAIL > usable.len() {
        return Err(Error::InvalidArgument(format!(
            "fit with k_min {} does not match a spectrum of {} usable values",
            fit.k_min,
            usable.len()
        )));
    }
    let ranks: Vec<usize> = (fit.k_min..=usable.len()).collect();
    let logs: Vec<f64> = usable[fit.k_min - 1..].iter().map(|v| v.ln()).collect();
    let line = ols(&ranks, &logs);
    let fitted: Vec<f64> = ranks.iter().map(|&k| line.fitted_log(k)).collect();
    let residuals = &line.residuals;
    let observed = fit.ks_stat;

    let exceed: usize = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let replicate: Vec<f64> = fitted
                .iter()
                .map(|y| y + residuals[rng.random_range(0..residuals.len())])
                .collect();
            let refit = select_tail(&ranks, &replicate);
            usize::from(refit.ks >= observed - 1e-12)
        })
        .sum();
    Ok(exceed as f64 / n_boot as f64)
}

/// Eigenvalues with their share of the total variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub explained_ratio: Vec<f64>,
}

pub fn spectrum_from_eigenvalues(eigenvalues: &[f64]) -> Spectrum {
    let total: f64 = eigenvalues.iter().sum();
    let explained_ratio = eigenvalues
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    Spectrum {
        eigenvalues: eigenvalues.to_vec(),
        explained_ratio,
    }
}

/// Spectrum of a model fitted at full rank.
pub fn spectrum_of(model: &PcaModel) -> Spectrum {
    spectrum_from_eigenvalues(model.eigenvalues())
}

/// `k<TAB>eigenvalue<TAB>explained_ratio` rows followed by a `#`-prefixed summary.
pub fn spectrum_report(spectrum: &Spectrum, fit: Option<&SpectrumFit>) -> String {
    let mut out = String::from("k\teigenvalue\texplained_ratio\n");
    for (i, (v, r)) in spectrum
        .eigenvalues
        .iter()
        .zip(&spectrum.explained_ratio)
        .enumerate()
    {
        let _ = writeln!(out, "{}\t{v}\t{r}", i + 1);
    }
    if let Some(fit) = fit {
        let _ = writeln!(out, "# beta\t{}", fit.beta);
        let _ = writeln!(out, "# beta_ci95\t{}\t{}", fit.ci_beta.0, fit.ci_beta.1);
        let _ = writeln!(out, "# intercept\t{}", fit.intercept);
        let _ = writeln!(out, "# r_squared\t{}", fit.r_squared);
        let _ = writeln!(out, "# k_min\t{}", fit.k_min);
        let _ = writeln!(out, "# tail_len\t{}", fit.tail_len);
        let _ = writeln!(out, "# ks_stat\t{}", fit.ks_stat);
        match fit.p_value {
            Some(p) => {
                let _ = writeln!(out, "# p_value\t{p}");
            }
            None => out.push_str("# p_value\tNA\n"),
        }
    }
    out
}
