//! Synthetic end-to-end run: synth → cooccur → cluster → rcov → estimate
//! per day, then ARI against the planted partition, network regressions
//! and a backtest, all through the on-disk formats.

use std::path::{Path, PathBuf};

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use cotrade::io;
use cotrade::network_regression::RegressionSummary;
use cotrade::synth::SynthConfig;

use crate::commands::{self, BacktestParams, CooccurParams, RcovParams, RegressParams};
use crate::manifest::Run;

pub struct PipelineParams {
    pub synth: SynthConfig,
    pub cooccur: CooccurParams,
    pub rcov: RcovParams,
    pub clusters: usize,
    pub factors: usize,
    pub regress: RegressParams,
    pub backtest: BacktestParams,
}

#[derive(Debug, Serialize)]
pub struct AriReport {
    pub mean: f64,
    pub min: f64,
    pub stdev: f64,
    /// Share of days with ARI ≥ 0.9.
    pub share_at_least_0_9: f64,
}

#[derive(Debug, Serialize)]
pub struct BacktestSummary {
    pub trading_days: usize,
    pub skipped_days: usize,
    pub ann_vol: f64,
    pub sharpe: f64,
    pub cumulative_return: f64,
}

#[derive(Debug, Serialize)]
pub struct PipelineSummary {
    pub days: usize,
    pub symbols: usize,
    pub clusters: usize,
    pub factors: usize,
    pub seed: u64,
    /// Mean daily ARI of the spectral clusters against the planted partition.
    pub ari_vs_planted: f64,
    pub ari: AriReport,
    pub regression: RegressionSummary,
    pub backtest: BacktestSummary,
}

struct DayFiles {
    matrix: PathBuf,
    partition: PathBuf,
    realized: PathBuf,
    estimate: PathBuf,
}

pub fn run_pipeline(params: &PipelineParams, out_dir: &Path, run: &mut Run) -> Result<PipelineSummary> {
    let synth = commands::synth(&params.synth, out_dir, run)?;
    let days: Vec<(Run, DayFiles)> = synth
        .dates
        .par_iter()
        .enumerate()
        .map(|(d, date)| -> Result<(Run, DayFiles)> {
            let mut day_run = Run::default();
            let name = format!("{}.csv", date.format(io::DATE_FORMAT));
            let files = DayFiles {
                matrix: out_dir.join("matrices").join(&name),
                partition: out_dir.join("partitions").join(&name),
                realized: out_dir.join("rcov").join(&name),
                estimate: out_dir.join("estimates").join(&name),
            };
            commands::cooccur(
                &synth.tapes[d],
                *date,
                Some(&synth.tickers),
                &params.cooccur,
                &files.matrix,
                &mut day_run,
            )?;
            commands::cluster(
                &files.matrix,
                params.clusters,
                params.synth.seed,
                &files.partition,
                &mut day_run,
            )?;
            commands::rcov(
                &synth.quotes[d],
                *date,
                Some(&synth.tickers),
                &params.rcov,
                &files.realized,
                &mut day_run,
            )?;
            commands::estimate(
                &files.realized,
                &files.partition,
                params.factors,
                &files.estimate,
                &mut day_run,
            )?;
            Ok((day_run, files))
        })
        .collect::<Result<_>>()?;
    let mut files = Vec::with_capacity(days.len());
    for (day_run, f) in days {
        run.absorb(day_run);
        files.push(f);
    }
    let collect = |f: fn(&DayFiles) -> &PathBuf| files.iter().map(f).cloned().collect::<Vec<_>>();
    let partitions = collect(|f| &f.partition);

    let (series, ari) = commands::ari(&synth.planted, &partitions, &out_dir.join("ari.csv"), run)?;
    let (_, regression) = commands::regress(
        &collect(|f| &f.realized),
        &collect(|f| &f.matrix),
        Some(&synth.sectors),
        &params.regress,
        &out_dir.join("regressions.csv"),
        run,
    )?;
    let report = commands::backtest(
        &collect(|f| &f.estimate),
        &synth.returns,
        &params.backtest,
        &out_dir.join("backtest"),
        run,
    )?;

    let values = &series.values;
    let n = values.len() as f64;
    Ok(PipelineSummary {
        days: synth.dates.len(),
        symbols: synth.tickers.len(),
        clusters: params.clusters,
        factors: params.factors,
        seed: params.synth.seed,
        ari_vs_planted: ari.mean,
        ari: AriReport {
            mean: ari.mean,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            stdev: ari.stdev,
            share_at_least_0_9: values.iter().filter(|&&v| v >= 0.9).count() as f64 / n,
        },
        regression,
        backtest: BacktestSummary {
            trading_days: report.dates.len(),
            skipped_days: report.skipped_days,
            ann_vol: report.ann_vol,
            sharpe: report.sharpe,
            cumulative_return: report.cum_path.last().copied().unwrap_or(0.0),
        },
    })
}
