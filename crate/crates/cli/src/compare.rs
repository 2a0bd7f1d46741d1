//! Feedback iterations versus random restarts on the same data and seeds.

use std::fmt::Write as _;
use std::fs;
use std::sync::Arc;

use anyhow::{bail, Result};
use tinder_core::{adjusted_rand, baseline_restarts, harden, nmi, purity, HardClustering, SessionState};

use crate::commands::{fit_config, load_data};
use crate::CompareArgs;

struct Row {
    purity: Option<f64>,
    ars_consecutive: Option<f64>,
    nmi_consecutive: Option<f64>,
    ars_max_pairwise: Option<f64>,
}

/// Per-iteration metrics; the pairwise maximum runs over iterations `0..=i`.
fn rows(clusterings: &[HardClustering], truth: Option<&HardClustering>) -> Result<Vec<Row>> {
    let mut out = Vec::with_capacity(clusterings.len());
    let mut max_pairwise: Option<f64> = None;
    for (i, c) in clusterings.iter().enumerate() {
        for earlier in &clusterings[..i] {
            let ars = adjusted_rand(earlier, c)?;
            max_pairwise = Some(max_pairwise.map_or(ars, |m| m.max(ars)));
        }
        let previous = i.checked_sub(1).map(|p| &clusterings[p]);
        out.push(Row {
            purity: truth.map(|t| purity(c, t)).transpose()?,
            ars_consecutive: previous.map(|p| adjusted_rand(p, c)).transpose()?,
            nmi_consecutive: previous.map(|p| nmi(p, c)).transpose()?,
            ars_max_pairwise: max_pairwise,
        });
    }
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn mean_pairwise_ars(clusterings: &[HardClustering]) -> Result<f64> {
    let mut all = Vec::new();
    for i in 0..clusterings.len() {
        for j in i + 1..clusterings.len() {
            all.push(adjusted_rand(&clusterings[i], &clusterings[j])?);
        }
    }
    Ok(mean(all.into_iter()))
}

pub fn run(args: CompareArgs) -> Result<()> {
    if args.iterations < 2 {
        bail!("compare needs at least 2 iterations");
    }
    let (data, dataset) = load_data(&args.data)?;
    let data = Arc::new(data);
    let config = fit_config(&args.data);

    let mut session = SessionState::start("compare", data.clone(), dataset, config.clone())?;
    for _ in 1..args.iterations {
        session.reject()?;
    }
    let tinder: Vec<HardClustering> = session.history().entries().iter().map(|e| e.hard()).collect();
    let baseline: Vec<HardClustering> = baseline_restarts(data.as_ref(), &config, args.iterations)?
        .iter()
        .map(|r| harden(&r.assignment))
        .collect();

    let truth = data.labels().map(|l| HardClustering::new(l.to_vec()));
    let mut csv = String::new();
    writeln!(csv, "# beta={}", config.beta)?;
    writeln!(csv, "# k={} seed={} iterations={} n={}", config.k, config.seed, args.iterations, data.n())?;
    csv.push_str("iteration,method,purity,ars_consecutive,nmi_consecutive,ars_max_pairwise\n");
    for (method, clusterings) in [("tinder", &tinder), ("baseline", &baseline)] {
        for (i, row) in rows(clusterings, truth.as_ref())?.into_iter().enumerate() {
            writeln!(
                csv,
                "{i},{method},{},{},{},{}",
                cell(row.purity),
                cell(row.ars_consecutive),
                cell(row.nmi_consecutive),
                cell(row.ars_max_pairwise)
            )?;
        }
    }
    fs::write(&args.out, &csv)?;

    let tinder_max = rows(&tinder, None)?.last().and_then(|r| r.ars_max_pairwise).unwrap_or(1.0);
    println!("tinder max pairwise ARS   {tinder_max:.4}");
    println!("baseline mean pairwise ARS {:.4}", mean_pairwise_ars(&baseline)?);
    if let Some(truth) = &truth {
        let purities = |cs: &[HardClustering]| -> Result<f64> {
            let ps = cs.iter().map(|c| purity(c, truth)).collect::<tinder_core::Result<Vec<f64>>>()?;
            Ok(mean(ps.into_iter()))
        };
        println!("tinder mean purity   {:.4}", purities(&tinder)?);
        println!("baseline mean purity {:.4}", purities(&baseline)?);
    }
    println!("report -> {}", args.out.display());
    Ok(())
}
