//! Aggregation of result records into summary tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::SweepAxis;
use super::run::ResultRecord;
use crate::analysis::{kernel_quality, mean_std, KernelRanks};
use crate::error::Result;

/// One row per (model, liquid size, sweep value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub n_liquid: usize,
    pub axis: Option<SweepAxis>,
    pub value: Option<f64>,
    pub runs: usize,
    pub failures: usize,
    pub top_accuracy: Option<f64>,
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
    /// `top% (mean ± std%)`.
    pub accuracy: Option<String>,
    pub mean_sigma_bf: Option<f64>,
    pub mean_bf_proxy: Option<f64>,
    /// Mean kernel quality, scored over every record of the input that
    /// carries kernel ranks.
    pub kernel_quality: Option<f64>,
}

/// `96.15% (95.96 ± 0.13%)` from fractions.
pub fn format_accuracy(top: f64, mean: f64, std: f64) -> String {
    format!("{:.2}% ({:.2} ± {:.2}%)", top * 100.0, mean * 100.0, std * 100.0)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| mean_std(v).0)
}

/// Groups records in order of first appearance.
pub fn aggregate(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let pool: Vec<(usize, KernelRanks)> =
        records.iter().enumerate().filter_map(|(i, r)| r.kernel.clone().map(|k| (i, k))).collect();
    let scores = kernel_quality(&pool.iter().map(|(_, k)| k.clone()).collect::<Vec<_>>());
    let mut kq = vec![None; records.len()];
    for ((i, _), s) in pool.iter().zip(scores) {
        kq[*i] = Some(s);
    }

    let key = |r: &ResultRecord| (r.model.clone(), r.n_liquid, r.axis, r.value.map(f64::to_bits));
    let mut groups: Vec<(_, Vec<usize>)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let k = key(r);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(i),
            None => groups.push((k, vec![i])),
        }
    }

    groups
        .into_iter()
        .map(|(_, idx)| {
            let first = &records[idx[0]];
            let pick = |f: &dyn Fn(&ResultRecord) -> Option<f64>| -> Vec<f64> {
                idx.iter().filter_map(|&i| f(&records[i])).collect()
            };
            let acc = pick(&|r| r.test_accuracy);
            let (m, s) = mean_std(&acc);
            let top = acc.iter().copied().reduce(f64::max);
            let kqs: Vec<f64> = idx.iter().filter_map(|&i| kq[i]).collect();
            SummaryRow {
                model: first.model.clone(),
                n_liquid: first.n_liquid,
                axis: first.axis,
                value: first.value,
                runs: idx.len(),
                failures: idx.iter().filter(|&&i| !records[i].is_ok()).count(),
                top_accuracy: top,
                mean_accuracy: top.map(|_| m),
                std_accuracy: top.map(|_| s),
                accuracy: top.map(|t| format_accuracy(t, m, s)),
                mean_sigma_bf: mean(&pick(&|r| r.dynamics.as_ref().and_then(|d| d.sigma_bf))),
                mean_bf_proxy: mean(&pick(&|r| r.dynamics.as_ref().and_then(|d| d.bf_proxy))),
                kernel_quality: mean(&kqs),
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_json<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, rows)?;
    Ok(())
}

/// `summary.csv` and `summary.json` in `dir`.
pub fn write_reports(records: &[ResultRecord], dir: &Path) -> Result<Vec<SummaryRow>> {
    let rows = aggregate(records);
    write_summary_csv(&rows, BufWriter::new(File::create(dir.join("summary.csv"))?))?;
    write_summary_json(&rows, BufWriter::new(File::create(dir.join("summary.json"))?))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::kernel::RankStats;
    use crate::harness::config::DatasetId;
    use crate::pipeline::ModelVariant;

    fn record(model: ModelVariant, value: Option<f64>, acc: Option<f64>) -> ResultRecord {
        ResultRecord {
            experiment: "t".into(),
            fingerprint: String::new(),
            point: 0,
            model: model.name().into(),
            variant: model,
            dataset: DatasetId::Mnist,
            n_liquid: 10,
            axis: value.map(|_| SweepAxis::LiquidWeight),
            value,
            network: 1,
            seed: 1,
            n_edges: None,
            test_accuracy: acc,
            val_accuracy: None,
            best_epoch: None,
            init_trace: None,
            dynamics: None,
            kernel: None,
            wall_clock_s: 0.0,
            failure: None,
        }
    }

    #[test]
    fn single_record_has_zero_spread() {
        let rows = aggregate(&[record(ModelVariant::LsmStdp, None, Some(0.9))]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mean_accuracy, Some(0.9));
        assert_eq!(rows[0].std_accuracy, Some(0.0));
    }

    #[test]
    fn identical_records_have_zero_spread() {
        let recs: Vec<_> = (0..10).map(|_| record(ModelVariant::LsmStdp, None, Some(0.9615))).collect();
        let rows = aggregate(&recs);
        assert_eq!(rows[0].runs, 10);
        assert_eq!(rows[0].std_accuracy, Some(0.0));
        assert_eq!(rows[0].top_accuracy, Some(0.9615));
    }

    #[test]
    fn format_matches_reporting_style() {
        assert_eq!(format_accuracy(0.9615, 0.9596, 0.0013), "96.15% (95.96 ± 0.13%)");
    }

    #[test]
    fn groups_by_sweep_value_and_counts_failures() {
        let lsm = ModelVariant::Lsm { w: 1.0 };
        let mut failed = record(lsm, Some(0.8), None);
        failed.failure = Some(crate::harness::run::StageFailure {
            stage: crate::harness::run::Stage::Readout,
            message: "x".into(),
        });
        let recs = vec![record(lsm, Some(0.8), Some(0.5)), record(lsm, Some(1.0), Some(0.7)), failed];
        let rows = aggregate(&recs);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].runs, 2);
        assert_eq!(rows[0].failures, 1);
        assert_eq!(rows[0].mean_accuracy, Some(0.5));
        assert_eq!(rows[1].value, Some(1.0));
    }

    #[test]
    fn kernel_quality_is_scored_over_the_pool() {
        let ranks = |s: f64, g: f64| KernelRanks {
            separation: RankStats { mean: s, std: 0.0 },
            generalization: RankStats { mean: g, std: 0.0 },
            k: 10,
            shuffles: 1,
        };
        let mut a = record(ModelVariant::LsmStdp, None, Some(0.9));
        a.kernel = Some(ranks(100.0, 50.0));
        let mut b = record(ModelVariant::Nalsm { astro: Default::default() }, None, Some(0.95));
        b.kernel = Some(ranks(200.0, 60.0));
        let mut c = record(ModelVariant::Lsm { w: 1.0 }, None, Some(0.8));
        c.kernel = Some(ranks(150.0, 100.0));
        let rows = aggregate(&[a, b, c]);
        // separation 0, 1, 0.5; generalization 0, 0.2, 1; difference 0, 0.8, -0.5
        assert!((rows[0].kernel_quality.unwrap() - 0.5 / 1.3).abs() < 1e-12);
        assert_eq!(rows[1].kernel_quality, Some(1.0));
        assert_eq!(rows[2].kernel_quality, Some(0.0));
        let mut csv = Vec::new();
        write_summary_csv(&rows, &mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("model,n_liquid,axis,value,runs"));
    }
}
