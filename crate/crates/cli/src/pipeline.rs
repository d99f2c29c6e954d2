//! Stage implementations behind the subcommands.

use std::collections::BTreeMap;

use streetscore::aggregate::{aggregate_points, aggregate_segments, SummaryRow};
use streetscore::geojson;
use streetscore::imagery::{self, FetchConfig};
use streetscore::mapping::{MapStyle, ScaleMode, Statistic};
use streetscore::osm::{build_network, parse_overpass, OsmError};
use streetscore::overpass::OverpassClient;
use streetscore::proj::select_metric_crs;
use streetscore::sample::{sample_network, CountsReport};
use streetscore::scoring::{self, make_backend, BackendKind, RunTaskOptions};
use streetscore::validate as validation;

use crate::config::{RunConfig, BACKEND_TOKEN_ENV};
use crate::rundir::{RunDir, RunState};
use crate::CliError;

fn upstream(e: OsmError) -> CliError {
    match e {
        OsmError::Http { .. } | OsmError::Parse { .. } | OsmError::MissingNode { .. } => {
            CliError::Upstream(e.to_string())
        }
        other => CliError::Other(other.to_string()),
    }
}

pub fn cmd_sample(
    config: &RunConfig,
    run: &RunDir,
    state: &mut RunState,
    force: bool,
) -> Result<(), CliError> {
    if state.is_done("sample") && !force {
        log::info!("sample stage already complete (use --force to redo)");
        return Ok(());
    }

    let crs = select_metric_crs(&config.bbox);
    log::info!(
        "working CRS: UTM zone {} {:?}",
        crs.utm_zone,
        crs.hemisphere
    );

    let client = OverpassClient::new(config.endpoints.overpass_url.clone());
    let fetched = client
        .fetch_cached(&config.bbox, &run.overpass_cache_dir())
        .map_err(upstream)?;
    log::info!(
        "overpass response: {} bytes{}",
        fetched.bytes.len(),
        if fetched.from_cache { " (cache)" } else { "" }
    );

    let parsed = parse_overpass(&fetched.bytes).map_err(upstream)?;
    let net = build_network(&parsed, &config.filter.to_filter(), &crs, fetched.provenance)
        .map_err(|e| CliError::Other(e.to_string()))?;
    let (points, counts) = sample_network(&net, &config.sampling, &crs, &config.bbox)
        .map_err(|e| CliError::Other(e.to_string()))?;

    geojson::write_json(&run.streets_layer(), &geojson::streets_layer(&net.segments))?;
    geojson::write_json(&run.points_layer(), &geojson::points_layer(&points))?;
    write_counts(run, &counts)?;
    geojson::write_json(
        &run.provenance_report(),
        &serde_json::to_value(&net.provenance).map_err(|e| CliError::Other(e.to_string()))?,
    )?;

    log::info!(
        "{} segments, {:.2} km, {} points, bbox {:.2} km²",
        counts.segments,
        counts.total_length_km,
        counts.points,
        counts.bbox_km2
    );
    state.mark_done("sample");
    state.save(run)?;
    Ok(())
}

pub fn cmd_fetch(
    config: &RunConfig,
    run: &RunDir,
    state: &mut RunState,
    force: bool,
) -> Result<(), CliError> {
    state.require("sample", "fetch")?;
    if state.is_done("fetch") && !force {
        log::info!("fetch stage already complete (use --force to redo)");
        return Ok(());
    }

    let api_key = config
        .street_view_api_key()
        .ok_or_else(|| CliError::Config(format!(
            "street-view API key missing; set {} or endpoints.street_view_api_key",
            crate::config::STREETVIEW_KEY_ENV
        )))?;

    let points = geojson::read_points_layer(&run.points_layer())?;
    let outcome = imagery::fetch_batch(
        &points,
        &config.camera,
        &FetchConfig {
            base_url: config.endpoints.street_view_url.clone(),
            api_key,
            dominance_threshold: config.placeholder.dominance_threshold,
        },
        &config.limits.fetch_limits(),
        &run.images_dir(),
        &run.image_manifest(),
    )
    .map_err(|e| match e {
        imagery::ImageryError::MissingApiKey => CliError::Config(e.to_string()),
        imagery::ImageryError::QuotaExhausted => CliError::Upstream(e.to_string()),
        other => CliError::Other(other.to_string()),
    })?;

    // complete the coverage table
    let mut counts = read_counts(run)?;
    counts.points_4_images = Some(outcome.points_all_headings);
    counts.points_no_coverage = Some(outcome.points_no_coverage);
    write_counts(run, &counts)?;

    let available = outcome
        .records
        .iter()
        .filter(|r| r.status == imagery::ImageStatus::Available)
        .count();
    log::info!(
        "{} records ({} available, {} reused); {} points fully covered, {} without coverage",
        outcome.records.len(),
        available,
        outcome.skipped,
        outcome.points_all_headings,
        outcome.points_no_coverage
    );
    state.mark_done("fetch");
    state.save(run)?;
    Ok(())
}

fn chosen_tasks(config: &RunConfig, only: &Option<String>) -> Result<Vec<String>, CliError> {
    match only {
        Some(task) => {
            if config.tasks.contains(task) {
                Ok(vec![task.clone()])
            } else {
                Err(CliError::Config(format!(
                    "task {task} is not enabled in the config (tasks = {:?})",
                    config.tasks
                )))
            }
        }
        None => Ok(config.tasks.clone()),
    }
}

pub fn cmd_score(
    config: &RunConfig,
    run: &RunDir,
    state: &mut RunState,
    force: bool,
    only_task: &Option<String>,
    limit: Option<usize>,
) -> Result<(), CliError> {
    state.require("fetch", "score")?;

    let registry = config.task_registry()?;
    let manifest = imagery::read_manifest(&run.image_manifest())
        .map_err(|e| CliError::Other(e.to_string()))?;
    let token = std::env::var(BACKEND_TOKEN_ENV).ok().filter(|t| !t.is_empty());
    let backend = make_backend(&config.backend, token)
        .map_err(|e| CliError::Config(e.to_string()))?;
    if config.backend.kind == BackendKind::Http {
        log::info!("scoring backend: {}", config.backend.base_url);
    }

    let mut total_backend_errors = 0usize;
    for task_id in chosen_tasks(config, only_task)? {
        let stage = format!("score:{task_id}");
        if state.is_done(&stage) && !force {
            log::info!("{stage} already complete (use --force to redo)");
            continue;
        }
        let task = registry
            .get(&task_id)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let report = scoring::run_task(
            &manifest,
            task,
            backend.as_ref(),
            &run.images_dir(),
            &run.score_log(&task_id),
            &RunTaskOptions {
                concurrency: config.limits.score_concurrency,
                max_records: limit,
            },
        )
        .map_err(|e| CliError::Other(e.to_string()))?;
        log::info!(
            "task {task_id}: {} scored, {} unavailable, {} parse errors, {} backend errors, {} resumed",
            report.scored,
            report.unavailable,
            report.parse_errors,
            report.backend_errors,
            report.skipped_existing
        );
        total_backend_errors += report.backend_errors;
        let complete = report.skipped_existing + report.appended == report.manifest_rows;
        if report.backend_errors == 0 && complete {
            state.mark_done(&stage);
            state.save(run)?;
        }
    }

    if total_backend_errors > 0 {
        return Err(CliError::Upstream(format!(
            "{total_backend_errors} backend errors recorded in the results log"
        )));
    }
    Ok(())
}

pub fn cmd_aggregate(
    config: &RunConfig,
    run: &RunDir,
    state: &mut RunState,
    force: bool,
    only_task: &Option<String>,
) -> Result<(), CliError> {
    if state.is_done("aggregate") && !force {
        log::info!("aggregate stage already complete (use --force to redo)");
        return Ok(());
    }
    let tasks = chosen_tasks(config, only_task)?;
    for task_id in &tasks {
        state.require(&format!("score:{task_id}"), "aggregate")?;
    }

    let points = geojson::read_points_layer(&run.points_layer())?;
    let segments = geojson::read_streets_layer(&run.streets_layer())?;

    let mut point_rows_by_task: BTreeMap<String, Vec<SummaryRow>> = BTreeMap::new();
    let mut segment_rows_by_task: BTreeMap<String, Vec<SummaryRow>> = BTreeMap::new();
    for task_id in &tasks {
        let records = scoring::read_log(&run.score_log(task_id))
            .map_err(|e| CliError::Other(e.to_string()))?;
        let point_rows = aggregate_points(&records, task_id, &points)
            .map_err(|e| CliError::Other(e.to_string()))?;
        let segment_rows = aggregate_segments(&point_rows, &points, task_id);
        point_rows_by_task.insert(task_id.clone(), point_rows);
        segment_rows_by_task.insert(task_id.clone(), segment_rows);
    }

    geojson::write_json(
        &run.scored_points_layer(),
        &geojson::scored_points_layer(&points, &point_rows_by_task)?,
    )?;
    geojson::write_json(
        &run.scored_streets_layer(),
        &geojson::scored_streets_layer(&segments, &segment_rows_by_task)?,
    )?;

    log::info!(
        "aggregated {} task(s) over {} points / {} segments",
        tasks.len(),
        points.len(),
        segments.len()
    );
    state.mark_done("aggregate");
    state.save(run)?;
    Ok(())
}

/// Statistic and domain conventions per shipped task: the binary
/// categorization renders its mean on a fixed [0,1] domain, counting renders
/// summed scores on the data range, measuring renders means on [0,3].
fn default_statistic(task_id: &str) -> Statistic {
    match task_id {
        "T2" => Statistic::Sum,
        _ => Statistic::Mean,
    }
}

fn scale_for(task_id: &str, statistic: Statistic) -> ScaleMode {
    match (task_id, statistic) {
        ("T1", Statistic::Mean) => ScaleMode::Fixed { lo: 0.0, hi: 1.0 },
        ("T3", Statistic::Mean) => ScaleMode::Fixed { lo: 0.0, hi: 3.0 },
        _ => ScaleMode::DataMinMax,
    }
}

pub fn cmd_render(
    config: &RunConfig,
    run: &RunDir,
    state: &mut RunState,
    force: bool,
    only_task: &Option<String>,
    stat_flag: &Option<String>,
) -> Result<(), CliError> {
    state.require("aggregate", "render")?;

    let points_doc = geojson::read_json(&run.scored_points_layer())?;
    let streets_doc = geojson::read_json(&run.scored_streets_layer())?;
    let aggregated = geojson::tasks_in_layer(&points_doc);

    let points = geojson::read_points_layer(&run.scored_points_layer())?;
    let segments = geojson::read_streets_layer(&run.scored_streets_layer())?;
    let crs = select_metric_crs(&config.bbox);

    for task_id in chosen_tasks(config, only_task)? {
        if !aggregated.contains(&task_id) {
            return Err(CliError::Config(format!(
                "task {task_id} is not in the aggregated layers; run `streetscore aggregate` first"
            )));
        }
        let statistic = match stat_flag.as_deref() {
            Some("mean") => Statistic::Mean,
            Some("sum") => Statistic::Sum,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "unknown statistic {other:?} (expected mean or sum)"
                )))
            }
            None => default_statistic(&task_id),
        };
        let stage = format!("render:{task_id}:{}", statistic.as_str());
        if state.is_done(&stage) && !force {
            log::info!("{stage} already complete (use --force to redo)");
            continue;
        }

        let mut style = MapStyle::new(statistic, scale_for(&task_id, statistic));
        config.style.apply(&mut style)?;
        style.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let point_rows = geojson::summaries_from_layer(&points_doc, "point_id", &task_id)?;
        let segment_rows = geojson::summaries_from_layer(&streets_doc, "segment_id", &task_id)?;

        let docs = streetscore::mapping::render_maps(
            &segments,
            &points,
            &point_rows,
            &segment_rows,
            &style,
            &task_id,
            &crs,
        )
        .map_err(|e| CliError::Other(e.to_string()))?;

        std::fs::create_dir_all(run.maps_dir())?;
        let points_path = run.map_path(&config.case_name, &task_id, "points");
        let streets_path = run.map_path(&config.case_name, &task_id, "streets");
        std::fs::write(&points_path, &docs.points_svg)?;
        std::fs::write(&streets_path, &docs.streets_svg)?;
        log::info!(
            "wrote {} and {}",
            points_path.display(),
            streets_path.display()
        );
        state.mark_done(&stage);
        state.save(run)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_validate(
    config: &RunConfig,
    run: &RunDir,
    state: &RunState,
    task_id: &str,
    annotations: &Option<std::path::PathBuf>,
    draw_sample: &Option<std::path::PathBuf>,
    per_class: usize,
    seed: u64,
) -> Result<(), CliError> {
    state.require(&format!("score:{task_id}"), "validate")?;
    let registry = config.task_registry()?;
    let task = registry
        .get(task_id)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let as_validation = |e: validation::ValidateError| CliError::Validation(e.to_string());

    if let Some(out) = draw_sample {
        let records = scoring::read_log(&run.score_log(task_id))
            .map_err(|e| CliError::Other(e.to_string()))?;
        let sample = validation::stratified_sample(&records, task, per_class, seed)
            .map_err(as_validation)?;
        for s in &sample.shortfalls {
            log::warn!(
                "class {} has only {} of the requested {} records",
                s.class_label,
                s.taken,
                s.requested
            );
        }
        validation::write_sample_template(out, &sample.rows).map_err(as_validation)?;
        log::info!("wrote {} sampled predictions to {}", sample.rows.len(), out.display());
        return Ok(());
    }

    let Some(annotations) = annotations else {
        return Err(CliError::Config(
            "validate needs --annotations <file> or --draw-sample <out>".into(),
        ));
    };
    let rows = validation::read_annotations(annotations).map_err(as_validation)?;
    for row in &rows {
        if row.task_id != task_id {
            return Err(CliError::Validation(format!(
                "annotation for task {} in a {} validation run",
                row.task_id, task_id
            )));
        }
    }
    let report = validation::compute_report(&rows, task).map_err(as_validation)?;
    let text = validation::render_text(&report);
    let csv = validation::to_csv(&report);
    std::fs::create_dir_all(run.reports_dir())?;
    std::fs::write(run.validation_report(task_id, "txt"), &text)?;
    std::fs::write(run.validation_report(task_id, "csv"), &csv)?;
    print!("{text}");
    Ok(())
}

pub fn cmd_export_tasks(
    config: &RunConfig,
    run: &RunDir,
    out: &Option<std::path::PathBuf>,
) -> Result<(), CliError> {
    let registry = config.task_registry()?;
    let dir = out.clone().unwrap_or_else(|| run.tasks_dir());
    let written = registry
        .export_all(&dir)
        .map_err(|e| CliError::Other(e.to_string()))?;
    for path in &written {
        log::info!("wrote {}", path.display());
    }
    println!("exported {} task definitions to {}", written.len(), dir.display());
    Ok(())
}

fn write_counts(run: &RunDir, counts: &CountsReport) -> Result<(), CliError> {
    // serialize the struct directly so the report keeps its field order
    let mut text =
        serde_json::to_string_pretty(counts).map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    std::fs::create_dir_all(run.reports_dir())?;
    std::fs::write(run.counts_report(), text)?;
    Ok(())
}

fn read_counts(run: &RunDir) -> Result<CountsReport, CliError> {
    let bytes = std::fs::read(run.counts_report())?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Other(format!("corrupt counts report: {e}")))
}
