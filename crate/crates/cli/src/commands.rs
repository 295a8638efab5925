use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use banff_core::ingest::{
    parse_detections, parse_ground_truth, parse_structure_document, read_scene, write_detections,
    write_ground_truth, write_scene, write_structures, DetectionFilter,
};
use banff_core::render::render_svg;
use banff_core::synth::{generate_scene, sensitivity_run, Execution, PerturbationSpec, SceneSpec};
use banff_core::{
    accumulate, score_section, summarize, GradePair, Indicator, Scene, ScoreReport, SectionScene,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{csv_header, file_stem, parse_file, read_bytes, stamp_json, stamp_json_bytes, svg_comments, OutputSet};

/// Where a command reads its scenes from.
#[derive(Debug, Clone, Default)]
pub struct SceneSources {
    pub scenes: Vec<PathBuf>,
    pub structures: Vec<PathBuf>,
    pub detections: Vec<PathBuf>,
}

fn check_inputs_exist<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> CliResult<()> {
    for p in paths {
        if !p.is_file() {
            return Err(CliError::input(format!("file not found: {}", p.display())));
        }
    }
    Ok(())
}

/// Section id from a file name: everything before the first dot.
fn stem_of(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("section");
    name.split('.').next().filter(|s| !s.is_empty()).unwrap_or(name).to_string()
}

fn load_pair(structures: &Path, detections: &Path, cfg: &RunConfig) -> CliResult<Scene> {
    let doc = parse_file(structures, |b| parse_structure_document::<f64>(b, &cfg.aliases))?;
    let filter = DetectionFilter::all_of(cfg.counted_classes());
    let dets = parse_file(detections, |b| parse_detections::<f64>(b, &filter, &cfg.aliases))?;
    let section_id = doc.section_id.unwrap_or_else(|| stem_of(structures));
    SectionScene::new(section_id, doc.instances, dets).map_err(|e| CliError::from(e).in_file(structures))
}

/// Reads every scene named on the command line, in argument order.
pub fn load_scenes(src: &SceneSources, cfg: &RunConfig) -> CliResult<Vec<Scene>> {
    if src.structures.len() != src.detections.len() {
        return Err(CliError::input(format!(
            "{} --structures but {} --detections; they pair up in order",
            src.structures.len(),
            src.detections.len()
        )));
    }
    if src.scenes.is_empty() && src.structures.is_empty() {
        return Err(CliError::input("no input: give --scene or --structures with --detections"));
    }
    check_inputs_exist(src.scenes.iter().chain(&src.structures).chain(&src.detections))?;
    let mut scenes = src
        .scenes
        .iter()
        .map(|p| parse_file(p, read_scene::<f64>))
        .collect::<CliResult<Vec<_>>>()?;
    for (s, d) in src.structures.iter().zip(&src.detections) {
        scenes.push(load_pair(s, d, cfg)?);
    }
    Ok(scenes)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(cfg.out_dir.as_deref().unwrap_or("."))
}

fn report_bytes(report: &ScoreReport, config: &BTreeMap<String, String>) -> Vec<u8> {
    let mut report = report.clone();
    report.config = config.clone();
    stamp_json(serde_json::to_value(&report).expect("report serializes"), config)
}

pub fn score(src: &SceneSources, cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let scenes = load_scenes(src, cfg)?;
    let reports = scenes
        .par_iter()
        .map(|s| score_section(s, &cfg.scoring).map_err(|e| CliError::input(format!("section `{}`: {e}", s.section_id))))
        .collect::<CliResult<Vec<_>>>()?;
    let snapshot = cfg.snapshot();
    let mut out = OutputSet::default();
    for r in &reports {
        out.add(format!("{}.score.json", file_stem(&r.section_id)), report_bytes(r, &snapshot))?;
    }
    out.commit(&out_dir(cfg))
}

/// Manifest rows as `(report, ground truth)` paths, resolved against the
/// manifest's directory. A first row reading `report,...` is a header.
fn read_manifest(path: &Path) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    let bytes = read_bytes(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes.as_slice());
    let mut rows = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if n == 0 && rec.get(0).is_some_and(|f| f.eq_ignore_ascii_case("report")) {
            continue;
        }
        if rec.len() != 2 {
            return Err(CliError::input(format!(
                "{} row {}: expected 2 columns (report, ground truth), found {}",
                path.display(),
                n + 1,
                rec.len()
            )));
        }
        rows.push((base.join(&rec[0]), base.join(&rec[1])));
    }
    if rows.is_empty() {
        return Err(CliError::input(format!("{}: manifest lists no pairs", path.display())));
    }
    Ok(rows)
}

pub fn evaluate(manifest: &Path, cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let rows = read_manifest(manifest)?;
    check_inputs_exist(rows.iter().flat_map(|(a, b)| [a, b]))?;
    let mut pairs: [Vec<GradePair>; 3] = Default::default();
    for (report_path, gt_path) in &rows {
        let report = parse_file(report_path, ScoreReport::from_json_bytes)?;
        let gt = parse_file(gt_path, parse_ground_truth)?;
        if !gt.section_id.is_empty() && gt.section_id != report.section_id {
            return Err(CliError::input(format!(
                "{}: section `{}` does not match report section `{}`",
                gt_path.display(),
                gt.section_id,
                report.section_id
            )));
        }
        let expert = [gt.g, gt.ptc, gt.v];
        for (k, predicted) in report.grades().into_iter().enumerate() {
            pairs[k].push(GradePair::new(predicted, expert[k]));
        }
    }

    let snapshot = cfg.snapshot();
    let mut out = OutputSet::default();
    let mut indicators = serde_json::Map::new();
    for (k, ind) in Indicator::ALL.into_iter().enumerate() {
        let cm = accumulate(pairs[k].iter().copied(), ind);
        let summary = summarize(&cm).ok();
        let csv = format!(
            "{}# {}\n{}",
            csv_header(&snapshot),
            banff_core::evaluation::ORIENTATION,
            cm.to_csv()
        );
        out.add(format!("confusion_{}.csv", ind.name()), csv.into_bytes())?;
        indicators.insert(
            ind.name().to_string(),
            json!({
                "n_sections": cm.n_sections(),
                "excluded": cm.excluded,
                "matrix": cm.cells,
                "summary": summary,
            }),
        );
    }
    let doc = json!({
        "pairs": rows.len(),
        "orientation": banff_core::evaluation::ORIENTATION,
        "indicators": indicators,
    });
    out.add("summary.json".into(), stamp_json(doc, &snapshot))?;
    out.commit(&out_dir(cfg))
}

/// A spec file holds one scene spec or an array of them.
fn read_specs(path: &Path) -> CliResult<Vec<SceneSpec>> {
    let bytes = read_bytes(path)?;
    let value: Value = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::input(format!("{}: malformed JSON: {e}", path.display())))?;
    let parse = |v: Value| {
        serde_json::from_value::<SceneSpec>(v).map_err(|e| CliError::input(format!("{}: invalid spec: {e}", path.display())))
    };
    match value {
        Value::Array(items) => items.into_iter().map(parse).collect(),
        other => Ok(vec![parse(other)?]),
    }
}

pub fn synth(spec_paths: &[PathBuf], cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    if spec_paths.is_empty() {
        return Err(CliError::input("no input: give at least one --spec"));
    }
    check_inputs_exist(spec_paths)?;
    let mut specs = Vec::new();
    for p in spec_paths {
        specs.extend(read_specs(p)?.into_iter().map(|s| (p, s)));
    }
    if let Some(seed) = cfg.seed {
        for (k, (_, spec)) in specs.iter_mut().enumerate() {
            spec.seed = seed.wrapping_add(k as u64);
        }
    }
    let generated = specs
        .par_iter()
        .map(|(path, spec)| generate_scene::<f64>(spec).map_err(|e| CliError::from(e).in_file(path)))
        .collect::<CliResult<Vec<_>>>()?;

    let snapshot = cfg.snapshot();
    let mut out = OutputSet::default();
    for (scene, gt) in &generated {
        let stem = file_stem(&scene.section_id);
        out.add(format!("{stem}.scene.json"), stamp_json_bytes(&write_scene(scene), &snapshot))?;
        out.add(format!("{stem}.structures.geojson"), stamp_json_bytes(&write_structures(scene), &snapshot))?;
        out.add(
            format!("{stem}.detections.json"),
            stamp_json_bytes(&write_detections(&scene.detections), &snapshot),
        )?;
        out.add(format!("{stem}.gt.geojson"), stamp_json_bytes(&write_ground_truth(gt), &snapshot))?;
    }
    out.commit(&out_dir(cfg))
}

fn parse_sweep(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s.parse::<f64>() {
            Ok(p) if (0.0..=1.0).contains(&p) => Ok(p),
            _ => Err(CliError::input(format!("--fn-prob-sweep: `{s}` is not a probability"))),
        })
        .collect()
}

pub fn sensitivity(
    src: &SceneSources,
    perturbation: Option<&Path>,
    sweep: Option<&str>,
    cfg: &RunConfig,
) -> CliResult<Vec<PathBuf>> {
    let sweep = sweep.map(parse_sweep).transpose()?;
    let mut pspec = match perturbation {
        Some(path) => {
            let bytes = read_bytes(path)?;
            serde_json::from_slice::<PerturbationSpec>(&bytes)
                .map_err(|e| CliError::input(format!("{}: invalid perturbation spec: {e}", path.display())))?
        }
        None => PerturbationSpec::default(),
    };
    if let Some(seed) = cfg.seed {
        pspec.seed = seed;
    }
    pspec.validate()?;
    let scenes = load_scenes(src, cfg)?;

    let snapshot = cfg.snapshot();
    let mut out = OutputSet::default();
    for scene in &scenes {
        let stem = file_stem(&scene.section_id);
        let tag = |e: banff_core::Error| CliError::input(format!("section `{}`: {e}", scene.section_id));
        let report = sensitivity_run(scene, &pspec, cfg.trials, &cfg.scoring, Execution::Parallel).map_err(tag)?;
        let mut doc = serde_json::to_value(&report).expect("report serializes");
        doc["perturbation"] = serde_json::to_value(&pspec).expect("spec serializes");
        out.add(format!("{stem}.sensitivity.json"), stamp_json(doc, &snapshot))?;
        out.add(
            format!("{stem}.sensitivity.csv"),
            format!("{}{}", csv_header(&snapshot), report.to_csv()).into_bytes(),
        )?;

        if let Some(probs) = &sweep {
            let mut csv = csv_header(&snapshot);
            csv.push_str("fn_prob,g_flip_rate,ptc_flip_rate,v_flip_rate,g_mean_abs_shift,ptc_mean_abs_shift,v_mean_abs_shift\n");
            for &p in probs {
                let spec = PerturbationSpec {
                    detection_fn_prob: p,
                    ..pspec.clone()
                };
                let r = sensitivity_run(scene, &spec, cfg.trials, &cfg.scoring, Execution::Parallel).map_err(tag)?;
                let flips = Indicator::ALL.map(|i| r.indicator(i).flip_rate.to_string()).join(",");
                let shifts = Indicator::ALL.map(|i| r.indicator(i).mean_abs_shift.to_string()).join(",");
                csv.push_str(&format!("{p},{flips},{shifts}\n"));
            }
            out.add(format!("{stem}.sweep.csv"), csv.into_bytes())?;
        }
    }
    out.commit(&out_dir(cfg))
}

pub fn render(src: &SceneSources, report_paths: &[PathBuf], cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    check_inputs_exist(report_paths)?;
    let scenes = load_scenes(src, cfg)?;
    let mut reports: BTreeMap<String, ScoreReport> = BTreeMap::new();
    for p in report_paths {
        let r = parse_file(p, ScoreReport::from_json_bytes)?;
        if !scenes.iter().any(|s| s.section_id == r.section_id) {
            return Err(CliError::input(format!(
                "{}: no scene for report section `{}`",
                p.display(),
                r.section_id
            )));
        }
        reports.insert(r.section_id.clone(), r);
    }
    let comments = svg_comments(&cfg.snapshot());
    let mut out = OutputSet::default();
    for scene in &scenes {
        let svg = render_svg(scene, reports.get(&scene.section_id), &comments);
        out.add(format!("{}.svg", file_stem(&scene.section_id)), svg.into_bytes())?;
    }
    out.commit(&out_dir(cfg))
}
