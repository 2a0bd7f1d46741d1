use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use tinder_core::io::{
    content_hash, export_clustering, generate_blobs, load_dataset, parse_csv, read_session_file, write_data_csv,
    CsvOptions, ExportFormat, SyntheticSpec,
};
use tinder_core::session::{LabelColumn, SessionFile};
use tinder_core::{adjusted_rand, Data, DatasetRef, FitConfig, Session, SessionState};
use tinder_service::{Service, ServiceConfig};

use crate::{DataArgs, ExportArgs, FitArgs, Format, GenerateArgs, RejectArgs, Scenario, ServeArgs, SessionArg};

pub fn load_data(args: &DataArgs) -> Result<(Data, DatasetRef)> {
    let bytes = fs::read(&args.data).with_context(|| format!("reading {}", args.data.display()))?;
    let mut options = CsvOptions::detect(&bytes);
    if let Some(column) = &args.label_column {
        options.label_column = Some(match column.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(column.clone()),
        });
    }
    let data = parse_csv(&bytes, &options).with_context(|| format!("loading {}", args.data.display()))?;
    let path = fs::canonicalize(&args.data)?;
    let dataset = DatasetRef {
        path: Some(path.to_string_lossy().into_owned()),
        sha256: content_hash(&bytes),
        has_header: options.has_header,
        label_column: options.label_column,
    };
    Ok((data, dataset))
}

pub fn fit_config(args: &DataArgs) -> FitConfig {
    FitConfig::new(args.k)
        .with_beta(args.beta)
        .with_seed(args.seed)
        .with_restarts(args.restarts)
        .with_covariance_mode(args.covariance.into())
}

/// Session files written by the CLI leave wall times at zero unless asked,
/// so identical runs produce identical files.
fn write_session(state: &Session, path: &Path, store_soft: bool, timings: bool) -> Result<()> {
    let mut file: SessionFile<f64> = state.to_file(store_soft);
    if !timings {
        for entry in &mut file.entries {
            entry.wall_time_ms = 0.0;
        }
    }
    let mut json = serde_json::to_string_pretty(&file)?;
    json.push('\n');
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, json).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_session(path: &Path) -> Result<(Session, bool)> {
    let file: SessionFile<f64> =
        read_session_file(path).with_context(|| format!("reading session {}", path.display()))?;
    let store_soft = file.store_soft;
    let data = load_dataset(&file.dataset).context("loading the session's dataset")?;
    Ok((SessionState::from_file(file, Arc::new(data))?, store_soft))
}

fn clustering_path(dir: &Path, iteration: usize) -> PathBuf {
    dir.join(format!("clustering-{iteration}.csv"))
}

fn session_dir(path: &Path) -> PathBuf {
    path.parent().filter(|p| !p.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

pub fn fit(args: FitArgs) -> Result<()> {
    let (data, dataset) = load_data(&args.data)?;
    let config = fit_config(&args.data);
    let id = format!("{}-k{}-s{}", &dataset.sha256[..12], config.k, config.seed);
    let state = SessionState::start(id, Arc::new(data), dataset, config)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let session_path = args.out.join("session.json");
    write_session(&state, &session_path, args.store_soft, args.timings)?;
    let entry = state.current();
    let export = clustering_path(&args.out, 0);
    export_clustering(entry, state.data(), &export, ExportFormat::Csv, args.soft)?;
    println!(
        "iteration 0: log-likelihood {:.6} objective {:.6} ({:.0} ms)",
        entry.log_likelihood, entry.objective, entry.wall_time_ms
    );
    println!("session {} -> {}", state.session_id(), session_path.display());
    println!("clustering -> {}", export.display());
    Ok(())
}

pub fn reject(args: RejectArgs) -> Result<()> {
    if args.times == 0 {
        return Ok(());
    }
    let (mut state, stored_soft) = read_session(&args.session)?;
    let store_soft = stored_soft || args.store_soft;
    let dir = session_dir(&args.session);
    for _ in 0..args.times {
        state.reject()?;
        write_session(&state, &args.session, store_soft, args.timings)?;
        let entry = state.current();
        let t = entry.iteration;
        export_clustering(entry, state.data(), clustering_path(&dir, t), ExportFormat::Csv, args.soft)?;
        let previous = state.history().get(t - 1).expect("t >= 1").hard();
        let ars = adjusted_rand(&previous, &entry.hard())?;
        println!(
            "iteration {t}: log-likelihood {:.6} penalty {:.6} beta {} ars-to-previous {:.4}{}",
            entry.log_likelihood,
            entry.penalty_value,
            entry.beta,
            ars,
            if state.latest_is_novel()? { "" } else { " (not novel)" }
        );
    }
    Ok(())
}

pub fn accept(args: SessionArg) -> Result<()> {
    let (mut state, store_soft) = read_session(&args.session)?;
    state.accept()?;
    let timings = state.history().entries().iter().any(|e| e.wall_time_ms != 0.0);
    write_session(&state, &args.session, store_soft, timings)?;
    println!("accepted iteration {}", state.current().iteration);
    Ok(())
}

pub fn report(args: SessionArg) -> Result<()> {
    let (state, _) = read_session(&args.session)?;
    let report = state.diversity_report()?;
    let iterations: Vec<serde_json::Value> = state
        .history()
        .entries()
        .iter()
        .map(|e| {
            serde_json::json!({
                "iteration": e.iteration,
                "log_likelihood": e.log_likelihood,
                "objective": e.objective,
                "penalty_value": e.penalty_value,
                "beta": e.beta,
                "converged": e.converged,
            })
        })
        .collect();
    let out = serde_json::json!({
        "session_id": state.session_id(),
        "status": state.status(),
        "iterations": iterations,
        "report": report,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

pub fn export(args: ExportArgs) -> Result<()> {
    let (state, _) = read_session(&args.session)?;
    let t = args.iteration.unwrap_or(state.current().iteration);
    let Some(entry) = state.history().get(t) else {
        bail!("session has no iteration {t} (latest is {})", state.current().iteration);
    };
    let format = match args.format {
        Format::Csv => ExportFormat::Csv,
        Format::Json => ExportFormat::Json,
    };
    export_clustering(entry, state.data(), &args.out, format, args.soft)?;
    Ok(())
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    let spec = match args.scenario {
        Scenario::FourBlobs => SyntheticSpec::four_blobs(args.seed),
        Scenario::TenBlobs => SyntheticSpec::ten_blobs(args.seed),
    };
    let data: Data = generate_blobs(&spec)?;
    write_data_csv(&data, &args.out)?;
    println!("{} points in {} dimensions -> {}", data.n(), data.d(), args.out.display());
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let mut config = ServiceConfig::new(&args.data_dir);
        config.cors_origin = args.cors_origin;
        let addr = format!("{}:{}", args.host, args.port);
        let service = Service::bind(config, &addr).await.with_context(|| format!("cannot serve on {addr}"))?;
        println!("listening on http://{}", service.local_addr()?);
        let persisted = service.run(shutdown_signal()).await?;
        println!("persisted {persisted} session(s)");
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
}
