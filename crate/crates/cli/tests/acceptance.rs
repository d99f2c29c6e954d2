//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the checked tolerance. Everything runs offline against
//! bundled fixtures, an in-process imagery server and the deterministic
//! mock backend.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use image::{Rgb, RgbImage};
use mock_http::{MockServer, Request, Response};

use streetscore::geom::{BoundingBox, LonLat};
use streetscore::imagery::{detect_placeholder, modal_dominance, PlaceholderVerdict};
use streetscore::proj::{select_metric_crs, Hemisphere, MetricCrs};
use streetscore::scoring::{
    parse_answer, task_t1, task_t2, task_t3, AnswerDomain, MockBackend, ParseFailure,
};

fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

// ---------------------------------------------------------------- sampling

#[test]
fn sampling_oracle() {
    let start = Instant::now();
    let cfg = |spacing, offset| streetscore::sample::SamplingConfig {
        spacing_m: spacing,
        offset_m: offset,
    };

    // the documented case: 100 m segment, offset 15, spacing 40
    assert_eq!(
        streetscore::sample::sample_chainages(100.0, &cfg(40.0, 15.0)),
        vec![15.0, 55.0]
    );

    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for i in 0..10_000 {
        let length = next() * 600.0;
        let offset = next() * 40.0;
        let spacing = 0.5 + next() * 100.0;
        let c = cfg(spacing, offset);

        // independent oracle: direct enumeration
        let mut oracle = Vec::new();
        if length >= 2.0 * offset {
            let mut k = 0u64;
            loop {
                let chain = offset + k as f64 * spacing;
                if chain > length - offset {
                    break;
                }
                oracle.push(chain);
                k += 1;
            }
        }

        let got = streetscore::sample::sample_chainages(length, &c);
        assert_eq!(got, oracle, "triple {i}: L={length} off={offset} sp={spacing}");
        assert_eq!(
            got.len(),
            streetscore::sample::expected_point_count(length, &c),
            "closed form disagrees: L={length} off={offset} sp={spacing}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5 s");
    println!("ACCEPTANCE sampling_oracle: PASS (10000 triples exact, {elapsed:?})");
}

// -------------------------------------------------------------- projection

#[test]
fn projection_roundtrip_and_central_meridian() {
    let start = Instant::now();

    let crs = MetricCrs::new(31, Hemisphere::North);
    let p = crs.to_metric(&LonLat::new(3.0, 0.0)).unwrap();
    assert!((p.x - 500_000.0).abs() < 1e-3, "easting {}", p.x);

    for zone in [1u8, 32, 60] {
        let crs = MetricCrs::new(zone, Hemisphere::North);
        let lon0 = crs.central_meridian_deg();
        let mut state = 0x853c49e6748fea9bu64 ^ u64::from(zone);
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let p = LonLat::new(lon0 + (next() - 0.5) * 8.0, (next() - 0.5) * 160.0);
            let xy = crs.to_metric(&p).unwrap();
            let back = crs.from_metric(&xy).unwrap();
            assert!(
                (back.lon - p.lon).abs() < 1e-7 && (back.lat - p.lat).abs() < 1e-7,
                "zone {zone}: {p:?} -> {back:?}"
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    println!("ACCEPTANCE projection: PASS (<1e-7°, central meridian ±1e-3 m, {elapsed:?})");
}

// --------------------------------------------------------- network building

#[test]
fn network_building_cross_fixture() {
    let doc = serde_json::json!({
        "elements": [
            {"type": "way", "id": 10, "nodes": [1, 2, 3],
             "tags": {"highway": "residential"},
             "geometry": [
                {"lat": 43.740, "lon": 7.299},
                {"lat": 43.740, "lon": 7.300},
                {"lat": 43.740, "lon": 7.301}
             ]},
            {"type": "way", "id": 20, "nodes": [4, 2, 5],
             "tags": {"highway": "residential"},
             "geometry": [
                {"lat": 43.739, "lon": 7.300},
                {"lat": 43.740, "lon": 7.300},
                {"lat": 43.741, "lon": 7.300}
             ]}
        ]
    })
    .to_string();
    let parsed = streetscore::osm::parse_overpass(doc.as_bytes()).unwrap();
    let crs = select_metric_crs(&BoundingBox::new(7.29, 43.73, 7.31, 43.75).unwrap());
    let net = streetscore::osm::build_network(
        &parsed,
        &streetscore::osm::HighwayFilter::default(),
        &crs,
        streetscore::osm::Provenance {
            endpoint: "fixture".into(),
            query: "fixture".into(),
            retrieved_at: String::new(),
        },
    )
    .unwrap();
    assert_eq!(net.segments.len(), 4, "cross must split into 4 segments");

    let way_total: f64 = parsed
        .ways
        .iter()
        .map(|w| {
            let poly: Vec<LonLat> = w.node_refs.iter().map(|n| parsed.nodes[n]).collect();
            streetscore::geom::polyline_length_m(&poly, &crs).unwrap()
        })
        .sum();
    let seg_total = net.total_length_m();
    let rel = (way_total - seg_total).abs() / way_total;
    assert!(rel < 1e-6, "length conservation violated: rel err {rel}");
    println!("ACCEPTANCE network_building: PASS (4 segments, length rel err {rel:.2e})");
}

// ------------------------------------------------------ placeholder detector

fn png_bytes(img: &RgbImage) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

#[test]
fn placeholder_detector_verdicts() {
    let uniform = png_bytes(&RgbImage::from_pixel(64, 64, Rgb([128, 128, 128])));
    let checkerboard = png_bytes(&RgbImage::from_fn(64, 64, |x, y| {
        if (x + y) % 2 == 0 {
            Rgb([255, 255, 255])
        } else {
            Rgb([0, 0, 0])
        }
    }));

    assert_eq!(
        detect_placeholder(&uniform, 0.9).unwrap(),
        PlaceholderVerdict::Placeholder
    );
    assert_eq!(
        detect_placeholder(&checkerboard, 0.9).unwrap(),
        PlaceholderVerdict::Genuine
    );
    assert_eq!(modal_dominance(&uniform).unwrap(), 1.0);

    // monotone in the threshold: raising it never creates a placeholder
    for bytes in [&uniform, &checkerboard] {
        let verdicts: Vec<PlaceholderVerdict> = [0.5, 0.9, 0.99]
            .iter()
            .map(|t| detect_placeholder(bytes, *t).unwrap())
            .collect();
        for pair in verdicts.windows(2) {
            assert!(
                !(pair[0] == PlaceholderVerdict::Genuine
                    && pair[1] == PlaceholderVerdict::Placeholder),
                "threshold raise flipped genuine -> placeholder: {verdicts:?}"
            );
        }
    }
    println!("ACCEPTANCE placeholder_detector: PASS (exact verdicts, monotone thresholds)");
}

// ------------------------------------------------------------ prompt fidelity

#[test]
fn prompt_fidelity_against_fixtures() {
    for (task, file) in [
        (task_t1(), "prompts/T1.txt"),
        (task_t2(), "prompts/T2.txt"),
        (task_t3(), "prompts/T3.txt"),
    ] {
        let expected_raw = std::fs::read_to_string(fixture_path(file)).unwrap();
        let expected = expected_raw.strip_suffix('\n').unwrap_or(&expected_raw);
        let assembled = task.assemble_prompt().unwrap();
        assert_eq!(
            assembled.as_bytes(),
            expected.as_bytes(),
            "prompt for {} diverges from its fixture",
            task.task_id
        );
    }
    // the anchors named in the release checklist
    assert!(task_t1().assemble_prompt().unwrap().contains("Answer format: 0 or 1"));
    assert!(task_t3()
        .assemble_prompt()
        .unwrap()
        .contains("rounded to the nearest 0.5"));
    println!("ACCEPTANCE prompt_fidelity: PASS (byte-identical T1/T2/T3)");
}

// -------------------------------------------------------------------- parser

#[test]
fn parser_suite_matches_hand_labels() {
    let bin = AnswerDomain::Enumerated { values: vec![0.0, 1.0] };
    let cnt = AnswerDomain::Enumerated { values: vec![0.0, 1.0, 2.0] };
    let half = AnswerDomain::HalfSteps;
    let cases: Vec<(&str, &AnswerDomain, Result<f64, ParseFailure>)> = vec![
        ("0", &bin, Ok(0.0)),
        ("1", &bin, Ok(1.0)),
        ("2", &cnt, Ok(2.0)),
        ("0.5", &half, Ok(0.5)),
        ("1.5", &half, Ok(1.5)),
        ("+1", &bin, Ok(1.0)),
        ("1.0", &bin, Ok(1.0)),
        (" 1 ", &bin, Ok(1.0)),
        ("1\n", &bin, Ok(1.0)),
        ("Score: 2.", &cnt, Ok(2.0)),
        ("1.5 meters", &half, Ok(1.5)),
        ("The answer is 1", &bin, Ok(1.0)),
        ("Answer: 0 (rural)", &bin, Ok(0.0)),
        ("score=2, confident", &cnt, Ok(2.0)),
        ("approximately 2.5 m wide", &half, Ok(2.5)),
        ("I cannot determine the width", &half, Err(ParseFailure::NoNumber)),
        ("unclear", &bin, Err(ParseFailure::NoNumber)),
        ("", &bin, Err(ParseFailure::NoNumber)),
        ("N/A", &half, Err(ParseFailure::NoNumber)),
        ("3", &cnt, Err(ParseFailure::OutOfDomain)),
        ("2", &bin, Err(ParseFailure::OutOfDomain)),
        ("0.75", &bin, Err(ParseFailure::OutOfDomain)),
        ("1.25", &half, Err(ParseFailure::OutOfDomain)),
        ("-1", &bin, Err(ParseFailure::OutOfDomain)),
        ("-0.5", &half, Err(ParseFailure::OutOfDomain)),
        ("0.75 or maybe 1", &bin, Err(ParseFailure::OutOfDomain)),
        ("between 1 and 2", &bin, Ok(1.0)),
    ];
    assert!(cases.len() >= 20, "suite must cover at least 20 raw outputs");
    for (raw, domain, expected) in &cases {
        let got = parse_answer(raw, domain);
        assert_eq!(&got, expected, "raw {raw:?}");
        if let Ok(v) = got {
            assert!(domain.contains(v), "{raw:?} produced out-of-domain {v}");
        }
    }
    println!("ACCEPTANCE parser: PASS ({} hand-labeled cases exact)", cases.len());
}

// -------------------------------------------------------- resume idempotence

#[test]
fn scoring_resume_idempotence() {
    use streetscore::imagery::{ImageRecord, ImageStatus};
    use streetscore::scoring::{run_task, RunTaskOptions};

    let dir = tempfile::tempdir().unwrap();
    let mut manifest = Vec::new();
    for i in 0..100 {
        let rec = ImageRecord {
            point_id: format!("p#{i}"),
            heading_deg: 90.0,
            file_path: format!("p#{i}/90.jpg"),
            status: ImageStatus::Available,
            sha256: String::new(),
        };
        let path = dir.path().join(&rec.file_path);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, format!("img{i}")).unwrap();
        manifest.push(rec);
    }
    let task = task_t2();
    let backend = MockBackend::new("acceptance".into());

    let full = dir.path().join("full.csv");
    run_task(&manifest, &task, &backend, dir.path(), &full, &RunTaskOptions::default()).unwrap();

    let resumed = dir.path().join("resumed.csv");
    let first = run_task(
        &manifest,
        &task,
        &backend,
        dir.path(),
        &resumed,
        &RunTaskOptions {
            max_records: Some(50),
            ..RunTaskOptions::default()
        },
    )
    .unwrap();
    assert_eq!(first.appended, 50, "interruption at 50%");
    run_task(&manifest, &task, &backend, dir.path(), &resumed, &RunTaskOptions::default()).unwrap();

    let full_bytes = std::fs::read(&full).unwrap();
    let resumed_bytes = std::fs::read(&resumed).unwrap();
    assert_eq!(full_bytes, resumed_bytes, "resumed log differs from uninterrupted log");

    let third = run_task(
        &manifest,
        &task,
        &backend,
        dir.path(),
        &resumed,
        &RunTaskOptions::default(),
    )
    .unwrap();
    assert_eq!(third.appended, 0, "double run must be a no-op");
    assert_eq!(std::fs::read(&resumed).unwrap(), full_bytes);
    println!("ACCEPTANCE resume_idempotence: PASS (byte-identical log, no-op rerun)");
}

// ------------------------------------------------------------- aggregation

#[test]
fn aggregation_conservation() {
    use streetscore::aggregate::{aggregate_points, aggregate_segments};
    use streetscore::geom::SamplePoint;
    use streetscore::scoring::{ScoreRecord, ScoreStatus};

    // the documented example: binary scores {1,1,0,1}
    let one_point = vec![SamplePoint {
        point_id: "p#0".into(),
        segment_id: "s".into(),
        chainage_m: 0.0,
        position: LonLat::new(7.3, 43.74),
    }];
    let records: Vec<ScoreRecord> = [1.0, 1.0, 0.0, 1.0]
        .iter()
        .map(|v| ScoreRecord {
            point_id: "p#0".into(),
            heading_deg: 0.0,
            task_id: "T1".into(),
            status: ScoreStatus::Scored,
            score: Some(*v),
            raw_response: String::new(),
        })
        .collect();
    let rows = aggregate_points(&records, "T1", &one_point).unwrap();
    assert_eq!(rows[0].mean, Some(0.75));
    assert_eq!(rows[0].sum, Some(3.0));

    // randomized logs over a half-step domain: sums must be conserved
    // exactly (dyadic values make double-precision sums exact)
    let mut points = Vec::new();
    for s in 0..20 {
        for p in 0..7 {
            points.push(SamplePoint {
                point_id: format!("p{s}_{p}"),
                segment_id: format!("s_{s}"),
                chainage_m: 0.0,
                position: LonLat::new(7.3, 43.74),
            });
        }
    }
    let mut state = 0xdeadbeefcafef00du64;
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        state >> 33
    };
    let mut records = Vec::new();
    let mut direct_total = 0.0f64;
    for p in &points {
        for heading in [0.0, 90.0, 180.0, 270.0] {
            let roll = next() % 5;
            let record = if roll < 3 {
                let v = (next() % 7) as f64 * 0.5;
                direct_total += v;
                ScoreRecord {
                    point_id: p.point_id.clone(),
                    heading_deg: heading,
                    task_id: "T3".into(),
                    status: ScoreStatus::Scored,
                    score: Some(v),
                    raw_response: String::new(),
                }
            } else {
                ScoreRecord {
                    point_id: p.point_id.clone(),
                    heading_deg: heading,
                    task_id: "T3".into(),
                    status: if roll == 3 {
                        ScoreStatus::Unavailable
                    } else {
                        ScoreStatus::ParseError
                    },
                    score: None,
                    raw_response: String::new(),
                }
            };
            records.push(record);
        }
    }
    let point_rows = aggregate_points(&records, "T3", &points).unwrap();
    let segment_rows = aggregate_segments(&point_rows, &points, "T3");
    let point_total: f64 = point_rows.iter().filter_map(|r| r.sum).sum();
    let segment_total: f64 = segment_rows.iter().filter_map(|r| r.sum).sum();
    assert_eq!(point_total, direct_total, "point sums lost values");
    assert_eq!(segment_total, direct_total, "segment sums lost values");
    println!("ACCEPTANCE aggregation_conservation: PASS (Σ exact over {} records)", records.len());
}

// --------------------------------------------------------------- validation

#[test]
fn validation_reproduces_published_cells() {
    use streetscore::validate::{compute_report, render_text, AnnotationRow};

    let annotation = |task: &str, predicted: f64, human: Option<f64>| AnnotationRow {
        point_id: "p".into(),
        heading_deg: 0.0,
        task_id: task.into(),
        predicted,
        human,
    };

    // binary task: 23/24 on class 0, 21/25 on class 1, one NA
    let mut rows = Vec::new();
    for i in 0..24 {
        rows.push(annotation("T1", 0.0, Some(if i < 23 { 0.0 } else { 1.0 })));
    }
    for i in 0..25 {
        rows.push(annotation("T1", 1.0, Some(if i < 21 { 1.0 } else { 0.0 })));
    }
    rows.push(annotation("T1", 0.0, None));
    let report = compute_report(&rows, &task_t1()).unwrap();
    assert_eq!(report.sample_size, 50);
    let text = render_text(&report);
    assert!(text.contains("95.83% (23/24)"), "{text}");
    assert!(text.contains("84.00% (21/25)"), "{text}");

    // counting task: 20/20, 9/20, 4/20 -> overall 33/60
    let mut rows = Vec::new();
    for (class, correct) in [(0.0, 20), (1.0, 9), (2.0, 4)] {
        for i in 0..20 {
            let human = if i < correct { class } else { 99.0 };
            rows.push(annotation("T2", class, Some(human)));
        }
    }
    let report = compute_report(&rows, &task_t2()).unwrap();
    let text = render_text(&report);
    assert!(text.contains("55.00% (33/60)"), "{text}");
    println!("ACCEPTANCE validation_harness: PASS (exact published cells)");
}

// ---------------------------------------------------------------- end to end

fn serve_imagery(req: &Request) -> Response {
    // deterministic image per (location, heading): a simple hash picks the
    // colors; every 7th capture is a flat placeholder
    let location = req.query_param("location").unwrap_or("0,0").to_string();
    let heading = req.query_param("heading").unwrap_or("0").to_string();
    let size = req.query_param("size").unwrap_or("64x64");
    let (w, h) = size
        .split_once('x')
        .map(|(a, b)| (a.parse().unwrap_or(64), b.parse().unwrap_or(64)))
        .unwrap_or((64, 64));

    let mut hash = 1469598103934665603u64;
    for b in format!("{location}|{heading}").bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(1099511628211);
    }
    let img = if hash % 7 == 0 {
        RgbImage::from_pixel(w, h, Rgb([228, 227, 223]))
    } else {
        let a = Rgb([(hash >> 8) as u8, (hash >> 16) as u8, (hash >> 24) as u8]);
        let b = Rgb([(hash >> 32) as u8, (hash >> 40) as u8, (hash >> 48) as u8]);
        RgbImage::from_fn(w, h, |x, y| if (x + y) % 2 == 0 { a } else { b })
    };
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    Response::ok("image/jpeg", out.into_inner())
}

fn e2e_config(street_view_url: &str) -> String {
    format!(
        r#"case_name = "demo"

[bbox]
min_lon = 7.298
min_lat = 43.739
max_lon = 7.303
max_lat = 43.7415

[camera]
headings_deg = [0.0, 90.0, 180.0, 270.0]
pitch_deg = 0.0
fov_deg = 90.0
image_width = 64
image_height = 64

[backend]
kind = "mock"
base_url = ""
model_name = "deterministic"
temperature = 0.1
max_new_tokens = 8
stop_sequences = ["\n"]

[endpoints]
overpass_url = "http://overpass.invalid/api/interpreter"
street_view_url = "{street_view_url}"

[limits]
requests_per_second = 100000.0
max_retries = 0
fetch_concurrency = 4
score_concurrency = 4
"#
    )
}

fn seed_overpass_cache(run_dir: &Path, bbox: &BoundingBox) {
    let query = streetscore::overpass::build_query(bbox);
    let cache_dir = run_dir.join("cache").join("overpass");
    std::fs::create_dir_all(&cache_dir).unwrap();
    let path = streetscore::overpass::cache_path(&cache_dir, &query);
    std::fs::copy(fixture_path("overpass_10pt.json"), path).unwrap();
}

fn run_cli(run_dir: &Path, args: &[&str]) {
    let output = Command::new(env!("CARGO_BIN_EXE_streetscore"))
        .arg("--run-dir")
        .arg(run_dir)
        .args(args)
        .env("STREETVIEW_API_KEY", "acceptance-test-key")
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "streetscore {args:?} failed: {}\n{}",
        output.status,
        String::from_utf8_lossy(&output.stderr)
    );
}

fn full_pipeline(run_dir: &Path, street_view_url: &str) {
    std::fs::create_dir_all(run_dir).unwrap();
    std::fs::write(run_dir.join("config.toml"), e2e_config(street_view_url)).unwrap();
    let bbox = BoundingBox::new(7.298, 43.739, 7.303, 43.7415).unwrap();
    seed_overpass_cache(run_dir, &bbox);
    for stage in [
        vec!["sample"],
        vec!["fetch"],
        vec!["score"],
        vec!["aggregate"],
        vec!["render"],
    ] {
        run_cli(run_dir, &stage);
    }
}

/// Output files that must match byte-for-byte across executions.
fn deterministic_outputs(run_dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = vec![
        "layers/streets.geojson".to_string(),
        "layers/points.geojson".to_string(),
        "layers/points_scored.geojson".to_string(),
        "layers/streets_scored.geojson".to_string(),
        "images/manifest.csv".to_string(),
        "reports/counts.json".to_string(),
        "reports/provenance.json".to_string(),
        "logs/scores_T1.csv".to_string(),
        "logs/scores_T2.csv".to_string(),
        "logs/scores_T3.csv".to_string(),
    ];
    for task in ["T1", "T2", "T3"] {
        for level in ["points", "streets"] {
            files.push(format!("maps/demo_{task}_{level}.svg"));
        }
    }
    files
        .into_iter()
        .map(|f| {
            let bytes = std::fs::read(run_dir.join(&f))
                .unwrap_or_else(|e| panic!("missing output {f}: {e}"));
            (f, bytes)
        })
        .collect()
}

#[test]
fn end_to_end_determinism() {
    let start = Instant::now();
    let server = MockServer::start(serve_imagery).unwrap();
    let url = format!("{}/streetview", server.base_url());

    let dir = tempfile::tempdir().unwrap();
    let run_a = dir.path().join("a");
    let run_b = dir.path().join("b");
    full_pipeline(&run_a, &url);
    full_pipeline(&run_b, &url);

    let a = deterministic_outputs(&run_a);
    let b = deterministic_outputs(&run_b);
    assert_eq!(a.len(), b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(b.iter()) {
        assert_eq!(name_a, name_b);
        assert_eq!(
            bytes_a, bytes_b,
            "{name_a} differs between two identical executions"
        );
    }

    // fixture invariants: the bundled network is 5 segments / 10 points
    let counts: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run_a.join("reports/counts.json")).unwrap()).unwrap();
    assert_eq!(counts["segments"], 5);
    assert_eq!(counts["points"], 10);

    // rerunning a completed stage without --force is a no-op
    run_cli(&run_a, &["sample"]);
    assert_eq!(
        std::fs::read(run_a.join("layers/streets.geojson")).unwrap(),
        a[0].1
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    println!(
        "ACCEPTANCE end_to_end_determinism: PASS ({} files byte-identical, {elapsed:?})",
        a.len()
    );
}

// ------------------------------------------------------------ counts schema

#[test]
fn coverage_report_schema() {
    let server = MockServer::start(serve_imagery).unwrap();
    let url = format!("{}/streetview", server.base_url());
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    std::fs::create_dir_all(&run).unwrap();
    std::fs::write(run.join("config.toml"), e2e_config(&url)).unwrap();
    seed_overpass_cache(&run, &BoundingBox::new(7.298, 43.739, 7.303, 43.7415).unwrap());
    run_cli(&run, &["sample"]);
    run_cli(&run, &["fetch"]);

    let text = std::fs::read_to_string(run.join("reports/counts.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut keys: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    let mut expected = vec![
        "segments",
        "total_length_km",
        "points",
        "bbox_km2",
        "points_4_images",
        "points_no_coverage",
    ];
    expected.sort_unstable();
    assert_eq!(keys, expected, "coverage table must have exactly these fields");

    // declaration order in the document matches the published table
    let order: Vec<usize> = [
        "\"segments\"",
        "\"total_length_km\"",
        "\"points\"",
        "\"bbox_km2\"",
        "\"points_4_images\"",
        "\"points_no_coverage\"",
    ]
    .iter()
    .map(|k| text.find(k).expect(k))
    .collect();
    assert!(order.windows(2).all(|w| w[0] < w[1]), "{text}");

    // after fetch both imagery counters are concrete numbers
    assert!(value["points_4_images"].is_u64(), "{value}");
    assert!(value["points_no_coverage"].is_u64(), "{value}");
    println!("ACCEPTANCE table1_schema: PASS (exact field set and order)");
}
