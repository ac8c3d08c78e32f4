use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use proctor_core::metrics::aggregate_repeats;

use crate::report::{collect_reports, RunReport};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Individual report.json files to merge
    pub reports: Vec<PathBuf>,
    /// Scan a directory tree of reports and emit a ratio-sweep CSV
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// CSV output path (sweep mode defaults to `<sweep>/sweep.csv`)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also export the per-model ranking tables as CSV
    #[arg(long)]
    pub ranking_csv: Option<PathBuf>,
}

/// One merged row per (method, ratio). Reports without a ranking accuracy
/// (no reference was supplied) have nothing to aggregate and are skipped.
fn merge(reports: &[RunReport]) -> Vec<(String, f64, f64, f64, f64)> {
    let mut groups: Vec<(String, f64, Vec<&RunReport>)> = Vec::new();
    for report in reports
        .iter()
        .filter(|r| r.ranking_accuracy_pct.is_some() || r.repeats.is_some())
    {
        match groups
            .iter_mut()
            .find(|(m, r, _)| *m == report.method && *r == report.ratio)
        {
            Some((_, _, members)) => members.push(report),
            None => groups.push((report.method.clone(), report.ratio, vec![report])),
        }
    }
    groups
        .into_iter()
        .map(|(method, ratio, members)| {
            if members.len() == 1 {
                // single report: its own repeat statistics carry through
                let r = members[0];
                let (mean, std, ci) = match (&r.repeats, r.ranking_accuracy_pct) {
                    (Some(s), _) => (s.mean, s.std, s.ci95_halfwidth),
                    (None, Some(acc)) => (acc, 0.0, 0.0),
                    (None, None) => (f64::NAN, 0.0, 0.0),
                };
                (method, ratio, mean, std, ci)
            } else {
                let means: Vec<f64> = members
                    .iter()
                    .filter_map(|r| {
                        r.ranking_accuracy_pct
                            .or(r.repeats.as_ref().map(|s| s.mean))
                    })
                    .collect();
                let stats = aggregate_repeats(&means).expect("non-empty group");
                (method, ratio, stats.mean, stats.std, stats.ci95_halfwidth)
            }
        })
        .collect()
}

fn to_csv(rows: &[(String, f64, f64, f64, f64)]) -> String {
    let mut out = String::from("method,ratio,mean,std,ci95\n");
    for (method, ratio, mean, std, ci) in rows {
        out.push_str(&format!("{method},{ratio},{mean:.4},{std:.4},{ci:.4}\n"));
    }
    out
}

pub fn run(args: ReportArgs) -> anyhow::Result<()> {
    let reports: Vec<RunReport> = if let Some(dir) = &args.sweep {
        collect_reports(dir)?
    } else {
        if args.reports.is_empty() {
            return Err(proctor_core::Error::InvalidConfig(
                "pass report.json paths or --sweep <dir>".into(),
            )
            .into());
        }
        args.reports
            .iter()
            .map(|p| RunReport::read(p))
            .collect::<anyhow::Result<_>>()?
    };
    if reports.is_empty() {
        return Err(proctor_core::Error::InvalidConfig("no reports found".into()).into());
    }

    let mut rows = merge(&reports);
    rows.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
    });
    let csv = to_csv(&rows);

    if let Some(dir) = &args.sweep {
        let path = args.out.clone().unwrap_or_else(|| dir.join("sweep.csv"));
        std::fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {} ({} rows)", path.display(), rows.len());
    } else {
        println!("method          ratio    mean     std      ci95");
        for (method, ratio, mean, std, ci) in &rows {
            println!("{method:<15} {ratio:<8} {mean:<8.2} {std:<8.2} {ci:<8.2}");
        }
        if let Some(path) = &args.out {
            std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
        }
    }

    if let Some(path) = &args.ranking_csv {
        let mut table = String::from("method,ratio,run_id,model_id,score,rank\n");
        for r in &reports {
            for (model, per) in &r.per_model {
                table.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.method, r.ratio, r.run_id, model, per.score, per.rank
                ));
            }
        }
        std::fs::write(path, table).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
