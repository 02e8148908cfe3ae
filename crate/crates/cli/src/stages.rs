//! The pipeline stages. Each reads artifacts from and writes artifacts to the
//! workspace directory, then records a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use shape_concepts::concepts::{extract_concepts_with, rank_score, ConceptModel, SweepParams};
use shape_concepts::dictionary::train_dictionary;
use shape_concepts::eval::{cross_validate, region_grid, tsne, LinearClassifier, LinearLearner};
use shape_concepts::geometry::io::{read_ascii, write_ascii};
use shape_concepts::geometry::{
    describe_object, estimate_normals, generate_synthetic_scan, label_agreement, median_spacing,
    region_grow_segment_with, DescribedObject, DescriptorParams, GeometryError, PlacedPrimitive, Primitive,
    SegmentedObject, ShapeSpec, Viewpoint,
};
use shape_concepts::model::{self, ModelKind};
use shape_concepts::motif::{decompose_object, stimuli_vector_decomposed, train_ensemble_decomposed, DecomposedObject};
use shape_concepts::topo::{annexation_curve, build_space, epsilon_max, filtrate, geodesic_heats};
use shape_concepts::{Dictionary, Ensemble, Filtration};

use crate::artifacts::*;
use crate::config::{derive_seed, TStar};
use crate::{svg, CliError, PipelineConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Segment,
    DictTrain,
    EnsembleTrain,
    Stimuli,
    Filtrate,
    Concepts,
    Sweep,
    Classify,
    Embed,
    Export,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Synth,
        Stage::Segment,
        Stage::DictTrain,
        Stage::EnsembleTrain,
        Stage::Stimuli,
        Stage::Filtrate,
        Stage::Concepts,
        Stage::Sweep,
        Stage::Classify,
        Stage::Embed,
        Stage::Export,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Segment => "segment",
            Stage::DictTrain => "dict-train",
            Stage::EnsembleTrain => "ensemble-train",
            Stage::Stimuli => "stimuli",
            Stage::Filtrate => "filtrate",
            Stage::Concepts => "concepts",
            Stage::Sweep => "sweep",
            Stage::Classify => "classify",
            Stage::Embed => "embed",
            Stage::Export => "export",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageOptions {
    /// Also render SVG figures in `export`.
    pub svg: bool,
}

#[derive(Clone, Debug)]
pub struct Workspace {
    pub out: PathBuf,
    pub config: PipelineConfig,
}

impl Workspace {
    pub fn new(out: impl Into<PathBuf>, config: PipelineConfig) -> Self {
        Self { out: out.into(), config }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }
}

/// Tracks the files a stage reads and writes, for its manifest.
struct Recorder<'a> {
    ws: &'a Workspace,
    stage: Stage,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl<'a> Recorder<'a> {
    fn new(ws: &'a Workspace, stage: Stage) -> Self {
        Self {
            ws,
            stage,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn read(&mut self, rel: &str) -> Result<String, CliError> {
        let path = self.ws.path(rel);
        if !path.exists() {
            return Err(CliError::MissingArtifact {
                stage: self.stage.name().into(),
                path: path.display().to_string(),
            });
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        self.inputs.insert(rel.to_string(), sha256_hex(text.as_bytes()));
        Ok(text)
    }

    fn read_model<T: for<'de> Deserialize<'de> + ModelKind>(&mut self, rel: &str) -> Result<T, CliError> {
        let text = self.read(rel)?;
        Ok(model::from_str(&text, &self.ws.path(rel).display().to_string())?)
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&mut self, rel: &str) -> Result<T, CliError> {
        let text = self.read(rel)?;
        serde_json::from_str(&text).map_err(|e| CliError::artifact(&self.ws.path(rel), e))
    }

    fn write(&mut self, rel: &str, content: &str) -> Result<(), CliError> {
        let path = self.ws.path(rel);
        write_file(&path, content)?;
        self.outputs.insert(rel.to_string(), sha256_hex(content.as_bytes()));
        Ok(())
    }

    fn finish(self, parameters: serde_json::Value, results: serde_json::Value) -> Result<Manifest, CliError> {
        let cfg = &self.ws.config;
        let manifest = Manifest {
            stage: self.stage.name().into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            stage_seed: cfg.stage_seed(self.stage.name()),
            parameters,
            inputs: self.inputs,
            outputs: self.outputs,
            results,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        write_file(&manifest_path(&self.ws.out, self.stage.name()), &text)?;
        Ok(manifest)
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, content).map_err(|e| CliError::io(path, e))
}

pub fn run_stage(ws: &Workspace, stage: Stage, opts: StageOptions) -> Result<Manifest, CliError> {
    ws.config.validate()?;
    let mut rec = Recorder::new(ws, stage);
    let (params, results) = match stage {
        Stage::Synth => synth(&mut rec)?,
        Stage::Segment => segment(&mut rec)?,
        Stage::DictTrain => dict_train(&mut rec)?,
        Stage::EnsembleTrain => ensemble_train(&mut rec)?,
        Stage::Stimuli => stimuli(&mut rec)?,
        Stage::Filtrate => filtrate_stage(&mut rec)?,
        Stage::Concepts => concepts(&mut rec)?,
        Stage::Sweep => sweep(&mut rec)?,
        Stage::Classify => classify(&mut rec)?,
        Stage::Embed => embed(&mut rec)?,
        Stage::Export => export(&mut rec, opts)?,
    };
    rec.finish(params, results)
}

/// Runs `synth` through `export`, including `sweep` when asked.
pub fn run_pipeline(ws: &Workspace, opts: StageOptions, with_sweep: bool) -> Result<Vec<Manifest>, CliError> {
    Stage::ALL
        .iter()
        .filter(|s| with_sweep || **s != Stage::Sweep)
        .map(|&s| run_stage(ws, s, opts))
        .collect()
}

type StageOutput = (serde_json::Value, serde_json::Value);

fn scale_shape(shape: &ShapeSpec, s: f64) -> ShapeSpec {
    let prim = |p: &Primitive| match p {
        Primitive::Box { size } => Primitive::Box { size: size.map(|v| v * s) },
        Primitive::Sphere { radius } => Primitive::Sphere { radius: radius * s },
        Primitive::Cylinder { radius, height } => Primitive::Cylinder {
            radius: radius * s,
            height: height * s,
        },
    };
    match shape {
        ShapeSpec::Box { size } => ShapeSpec::Box { size: size.map(|v| v * s) },
        ShapeSpec::Sphere { radius } => ShapeSpec::Sphere { radius: radius * s },
        ShapeSpec::Cylinder { radius, height } => ShapeSpec::Cylinder {
            radius: radius * s,
            height: height * s,
        },
        ShapeSpec::Composite { parts } => ShapeSpec::Composite {
            parts: parts
                .iter()
                .map(|p| PlacedPrimitive {
                    primitive: prim(&p.primitive),
                    offset: p.offset.map(|v| v * s),
                })
                .collect(),
        },
    }
}

fn synth(rec: &mut Recorder) -> Result<StageOutput, CliError> {
    let cfg = &rec.ws.config.synth;
    let mut rng = ChaCha8Rng::seed_from_u64(rec.ws.config.stage_seed(Stage::Synth.name()));
    let mut rows = Vec::new();
    let mut shapes = Vec::new();
    for class in &cfg.classes {
        for _ in 0..cfg.scans_per_class {
            let azimuth_deg = rng.random_range(0.0..360.0);
            let [e0, e1] = cfg.elevation_deg;
            let elevation_deg = if e1 > e0 { rng.random_range(e0..e1) } else { e0 };
            let j = cfg.size_jitter;
            let scale = if j > 0.0 { rng.random_range(1.0 - j..1.0 + j) } else { 1.0 };
            rows.push(DatasetRow {
                id: rows.len(),
                label: class.label.clone(),
                azimuth_deg,
                elevation_deg,
                scale,
                seed: rng.random(),
            });
            shapes.push(scale_shape(&class.geometry, scale));
        }
    }
    let scans = rows
        .par_iter()
        .zip(&shapes)
        .map(|(r, shape)| {
            let vp = Viewpoint {
                azimuth_deg: r.azimuth_deg,
                elevation_deg: r.elevation_deg,
                distance: cfg.distance,
                resolution: cfg.resolution,
            };
            let obj = generate_synthetic_scan(shape, &vp, cfg.noise_sigma, r.seed)?;
            Ok((obj.cloud.len(), write_ascii(&obj.cloud, Some(&r.label))))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    for (r, (_, text)) in rows.iter().zip(&scans) {
        rec.write(&scan_file(r.id), text)?;
    }
    rec.write(DATASET, &write_csv(&rows))?;
    let points: Vec<usize> = scans.iter().map(|s| s.0).collect();
    Ok((
        json!(cfg),
        json!({
            "objects": rows.len(),
            "mean_points": points.iter().sum::<usize>() as f64 / points.len().max(1) as f64,
        }),
    ))
}

fn read_dataset(rec: &mut Recorder) -> Result<Vec<DatasetRow>, CliError> {
    let text = rec.read(DATASET)?;
    let rows: Vec<DatasetRow> = read_csv(&text, &rec.ws.path(DATASET))?;
    if rows.is_empty() {
        return Err(CliError::artifact(&rec.ws.path(DATASET), "no objects listed"));
    }
    Ok(rows)
}

fn segment(rec: &mut Recorder) -> Result<StageOutput, CliError> {
    let rows = read_dataset(rec)?;
    let texts = rows.iter().map(|r| rec.read(&scan_file(r.id))).collect::<Result<Vec<_>, _>>()?;
    let cfg = &rec.ws.config.segment;
    let results = rows
        .par_iter()
        .zip(&texts)
        .map(|(r, text)| {
            let mut cloud = read_ascii(text.as_bytes())?.cloud;
            let truth = cloud.segment_ids.take();
            let cloud = estimate_normals(&cloud, cfg.normal_k)?;
            let spacing = median_spacing(&cloud).ok_or(GeometryError::InsufficientPoints {
                needed: 2,
                got: cloud.len(),
            })?;
            let obj = region_grow_segment_with(&cloud, &cfg.params(spacing))?;
            let ids = obj.cloud.segment_ids.as_ref().expect("segmenter assigns ids");
            let agreement = truth.map(|t| label_agreement(ids, &t));
            Ok((write_ascii(&obj.cloud, Some(&r.label)), obj.segments.len(), agreement))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    for (r, (text, _, _)) in rows.iter().zip(&results) {
        rec.write(&segmented_file(r.id), text)?;
    }
    let n = results.len() as f64;
    let agreements: Vec<f64> = results.iter().filter_map(|r| r.2).collect();
    Ok((
        json!(cfg),
        json!({
            "objects": results.len(),
            "mean_segments": results.iter().map(|r| r.1).sum::<usize>() as f64 / n,
            "mean_label_agreement": (!agreements.is_empty()).then(|| agreements.iter().sum::<f64>() / agreements.len() as f64),
        }),
    ))
}

/// Reloads segmented objects with normals, contact adjacency and segment
/// descriptors.
fn load_described(rec: &mut Recorder, rows: &[DatasetRow]) -> Result<Vec<DescribedObject>, CliError> {
    let texts = rows.iter().map(|r| rec.read(&segmented_file(r.id))).collect::<Result<Vec<_>, _>>()?;
    let cfg = &rec.ws.config;
    let params = DescriptorParams {
        normal_k: cfg.segment.normal_k,
        radius_factor: cfg.descriptor.radius_factor,
        radius: cfg.descriptor.radius,
    };
    rows.par_iter()
        .zip(&texts)
        .map(|(r, text)| {
            let ascii = read_ascii(text.as_bytes())?;
            let cloud = estimate_normals(&ascii.cloud, cfg.segment.normal_k)?;
            let spacing = median_spacing(&cloud).ok_or(GeometryError::InsufficientPoints {
                needed: 2,
                got: cloud.len(),
            })?;
            let mut obj = SegmentedObject::from_labeled_cloud(cloud, Some(r.label.clone()));
            obj.adjacency = obj.contact_adjacency(cfg.segment.distance_factor * spacing);
            Ok(describe_object(&obj, &params)?)
        })
        .collect()
}

fn decomposed(rec: &mut Recorder, rows: &[DatasetRow], dict: &Dictionary) -> Result<Vec<DecomposedObject>, CliError> {
    let described = load_described(rec, rows)?;
    described
        .into_par_iter()
        .map(|d| Ok(decompose_object(&d.into_graph(dict)?)?))
        .collect()
}

fn dict_train(rec: &mut Recorder) -> Result<StageOutput, CliError> {
    let rows = read_dataset(rec)?;
    let described = load_described(rec, &rows)?;
    let descriptors: Vec<_> = described.iter().flat_map(|d| d.descriptors.iter().cloned()).collect();
    let cfg = &rec.ws.config.dictionary;
    let dict = train_dictionary(
        &descriptors,
        cfg.depth,
        rec.ws.config.stage_seed(Stage::DictTrain.name()),
        cfg.max_iter,
    )?;
    let words: Vec<usize> = (1..=cfg.depth)
        .map(|f| dict.level(f).map(|l| l.len()))
        .collect::<Result<_, _>>()?;
    rec.write(DICTIONARY, &model::to_string(&dict))?;
    Ok((
        json!({ "dictionary": cfg, "descriptor": rec.ws.config.descriptor }),
        json!({ "descriptors": descriptors.len(), "words_per_level": words }),
    ))
}

fn ensemble_train(rec: &mut Recorder) -> Result<StageOutput, CliError> {
    let rows = read_dataset(rec)?;
    let dict: Dictionary = rec.read_model(DICTIONARY)?;
    let objects = decomposed(rec, &rows, &dict)?;
    let sigma = rec.ws.config.ensemble.sigma;
    let ensemble = train_ensemble_decomposed(&objects, dict.depth(), sigma)?;
    let vertices: Vec<usize> = ensemble.hierarchies.iter().map(|h| h.vertices.len()).collect();
    rec.write(ENSEMBLE, &model::to_string(&ensemble))?;
    Ok((
        json!(rec.ws.config.ensemble),
        json!({ "dimension": ensemble.dimension(), "vertices_per_hierarchy": vertices }),
    ))
}

fn stimuli(rec: &mut Recorder) -> Result<StageOutput, CliError> {
    let rows = read_dataset(rec)?;
    let dict: Dictionary = rec.read_model(DICTIONARY)?;
    let ensemble: Ensemble = rec.read_model(ENSEMBLE)?;
    let objects = decomposed(rec, &rows, &dict)?;
    let vectors = objects
        .par_iter()
        .map(|o| Ok(stimuli_vector_decomposed(o, &ensemble)?.concat()))
        .collect::<Result<Vec<_>, CliError>>()?;
    let table = LabeledMatrix {
        ids: rows.iter().map(|r| r.id).collect(),
        labels: rows.iter().map(|r| r.label.clone()).collect(),
        rows: vectors,
    };
    rec.write(STIMULI, &table.to_csv("s"))?;
    Ok((
        json!({}),
        json!({ "objects": table.rows.len(), "dimension": ensemble.dimension() }),
    ))
}

fn read_matrix(rec: &mut Recorder, rel: &str) -> Result<LabeledMatrix, CliError> {
    let text = rec.read(rel)?;
    LabeledMatrix::from_csv(&text, &rec.ws.path(rel))
}

fn filtrate_stage(rec: &mut Recorder) -> Result<StageOutput, CliError> {
    let table = read_matrix(rec, STIMULI)?;
    let space = geodesic_heats(&build_space(&table.rows)?)?;
    let max_steps = rec.ws.config.filtration.max_steps;
    let f = filtrate(&space, max_steps)?;
    rec.write(FILTRATION, &(serde_json::to_string_pretty(&f).expect("filtration serializes") + "\n"))?;
    Ok((
        json!(rec.ws.config.filtration),
        json!({
            "vertices": f.len,
            "steps": f.epsilons.len(),
            "epsilon_max": epsilon_max(&f)?,
            "merge_events": f.events.len(),
        }),
    ))
}

#[derive(Serialize, Deserialize)]
struct ConceptRow {
    concept_id: usize,
    size: usize,
    purity: f64,
    rank_score: f64,
    formation_time: f64,
    /// Object ids separated by `;`.
    members: String,
}

fn concepts(rec: &mut Recorder) -> Result<StageOutput, CliError> {
    let f: Filtration = rec.read_json(FILTRATION)?;
    let table = read_matrix(rec, STIMULI)?;
    if table.rows.len() != f.len {
        return Err(CliError::artifact(
            &rec.ws.path(FILTRATION),
            format!("{} vertices but {} stimuli rows", f.len, table.rows.len()),
        ));
    }
    let cfg = &rec.ws.config.concepts;
    let (t_star, policy) = match cfg.t_star {
        TStar::Policy(_) => (epsilon_max(&f)?, "auto"),
        TStar::Fixed(t) => (t, "fixed"),
    };
    let set = extract_concepts_with(&f, t_star, cfg.min_size, cfg.rule)?;
    let labels: Vec<Option<String>> = table.labels.iter().cloned().map(Some).collect();
    let model = ConceptModel::fit(set, table.rows.clone(), labels, cfg.shrinkage)?;
    let mut concept_rows = Vec::new();
    for c in model.concepts() {
        let purity = model.purity(c)?;
        concept_rows.push(ConceptRow {
            concept_id: c.id,
            size: c.len(),
            purity,
            rank_score: rank_score(c.len(), purity),
            formation_time: c.formation_time,
            members: c
                .members
                .iter()
                .map(|&m| table.ids[m].to_string())
                .collect::<Vec<_>>()
                .join(";"),
        });
    }
    let responses = table
        .rows
        .par_iter()
        .map(|g| model.responses(g))
        .collect::<Result<Vec<_>, _>>()?;
    let response_table = LabeledMatrix {
        ids: table.ids.clone(),
        labels: table.labels.clone(),
        rows: responses,
    };
    rec.write(CONCEPTS_MODEL, &model::to_string(&model))?;
    rec.write(CONCEPTS, &write_csv(&concept_rows))?;
    rec.write(RESPONSES, &response_table.to_csv("c"))?;
    let pure = concept_rows.iter().filter(|r| r.purity == 1.0).count();
    Ok((
        json!(cfg),
        json!({
            "t_star": t_star,
            "t_star_policy": policy,
            "concepts": concept_rows.len(),
            "mean_purity": model.mean_purity()?,
            "pure_fraction": (!concept_rows.is_empty()).then(|| pure as f64 / concept_rows.len() as f64),
        }),
    ))
}

#[derive(Serialize)]
struct SweepRow {
    cut_time: f64,
    min_size: usize,
    concepts: usize,
    purity: f64,
    error: f64,
}

fn sweep(rec: &mut Recorder) -> Result<StageOutput, CliError> {
    let f: Filtration = rec.read_json(FILTRATION)?;
    let table = read_matrix(rec, STIMULI)?;
    let cfg = &rec.ws.config;
    let params = SweepParams {
        cut_times: cfg.sweep.cut_times.clone(),
        min_sizes: cfg.sweep.min_sizes.clone(),
        rule: cfg.concepts.rule,
        shrinkage: cfg.concepts.shrinkage,
        classifier: cfg.classifier.params(),
        protocol: cfg.classifier.protocol(cfg.stage_seed(Stage::Sweep.name())),
    };
    let result = shape_concepts::concepts::supervised_sweep(&f, &table.rows, &table.labels, &params)?;
    let mut rows = Vec::new();
    for (i, &t) in result.cut_times.iter().enumerate() {
        for (j, &m) in result.min_sizes.iter().enumerate() {
            rows.push(SweepRow {
                cut_time: t,
                min_size: m,
                concepts: result.concept_counts[i][j],
                purity: result.purity[i][j],
                error: result.error[i][j],
            });
        }
    }
    rec.write(SWEEP, &write_csv(&rows))?;
    let best = rows
        .iter()
        .filter(|r| r.error.is_finite())
        .min_by(|a, b| a.error.total_cmp(&b.error));
    Ok((
        json!({ "sweep": cfg.sweep, "classifier": cfg.classifier, "rule": cfg.concepts.rule }),
        json!({
            "cells": rows.len(),
            "best_error": best.map(|r| json!({ "cut_time": r.cut_time, "min_size": r.min_size, "error": r.error })),
        }),
    ))
}

fn responses_for_learning(rec: &mut Recorder) -> Result<LabeledMatrix, CliError> {
    let table = read_matrix(rec, RESPONSES)?;
    if table.rows.first().is_none_or(|r| r.is_empty()) {
        return Err(CliError::artifact(
            &rec.ws.path(RESPONSES),
            "no concept responses; lower concepts.min_size or change the cut",
        ));
    }
    Ok(table)
}

#[derive(Serialize)]
struct ErrorRow<'a> {
    label: &'a str,
    error_percent: f64,
}

fn classify(rec: &mut Recorder) -> Result<StageOutput, CliError> {
    let table = responses_for_learning(rec)?;
    let cfg = &rec.ws.config;
    let seed = cfg.stage_seed(Stage::Classify.name());
    let learner = LinearLearner(cfg.classifier.params());
    let cv = cross_validate(&learner, &table.rows, &table.labels, &cfg.classifier.protocol(seed))?;
    let full = LinearClassifier::train(&table.rows, &table.labels, &cfg.classifier.params(), derive_seed(seed, "full"))?;
    let mut rows: Vec<ErrorRow> = cv
        .per_class
        .iter()
        .map(|(l, e)| ErrorRow {
            label: l,
            error_percent: *e,
        })
        .collect();
    rows.push(ErrorRow {
        label: "mean",
        error_percent: cv.mean,
    });
    rec.write(CLASSIFICATION, &write_csv(&rows))?;
    rec.write(CLASSIFIER, &model::to_string(&full))?;
    Ok((json!(cfg.classifier), json!({ "per_class_error": cv.per_class, "mean_error": cv.mean })))
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRow {
    id: usize,
    x: f64,
    y: f64,
    label: String,
}

fn embed(rec: &mut Recorder) -> Result<StageOutput, CliError> {
    let table = responses_for_learning(rec)?;
    let cfg = &rec.ws.config;
    let e = tsne(&table.rows, &cfg.tsne.params(cfg.stage_seed(Stage::Embed.name())))?;
    let rows: Vec<EmbeddingRow> = e
        .coords
        .iter()
        .zip(table.ids.iter().zip(&table.labels))
        .map(|(c, (id, label))| EmbeddingRow {
            id: *id,
            x: c[0],
            y: c[1],
            label: label.clone(),
        })
        .collect();
    rec.write(EMBEDDING, &write_csv(&rows))?;
    Ok((json!(cfg.tsne), json!({ "kl_initial": e.kl_initial, "kl_final": e.kl_final })))
}

#[derive(Serialize)]
struct BarRow {
    vertex_id: usize,
    birth: f64,
    /// `inf` for the survivor.
    death: String,
}

#[derive(Serialize)]
struct FEdgeRow {
    u: usize,
    v: usize,
    time: f64,
}

#[derive(Serialize)]
struct CurveRow {
    time: f64,
    count: usize,
}

fn export(rec: &mut Recorder, opts: StageOptions) -> Result<StageOutput, CliError> {
    let f: Filtration = rec.read_json(FILTRATION)?;
    let bars: Vec<BarRow> = f
        .barcode
        .iter()
        .map(|b| BarRow {
            vertex_id: b.vertex,
            birth: b.birth,
            death: b.death.map_or_else(|| "inf".to_string(), fmt_f64),
        })
        .collect();
    let edges: Vec<FEdgeRow> = f
        .f_edges
        .iter()
        .map(|e| FEdgeRow {
            u: e.u,
            v: e.v,
            time: e.time,
        })
        .collect();
    let curve = annexation_curve(&f);
    let curve_rows: Vec<CurveRow> = curve.iter().map(|&(time, count)| CurveRow { time, count }).collect();
    rec.write(BARCODE, &write_csv(&bars))?;
    rec.write(F_EDGES, &write_csv(&edges))?;
    rec.write(ANNEXATION, &write_csv(&curve_rows))?;
    if opts.svg {
        rec.write("barcode.svg", &svg::barcode(&f.barcode))?;
        rec.write("annexation.svg", &svg::curve(&curve))?;
    }

    let cfg = &rec.ws.config.grid;
    let mut grid_cells = None;
    if rec.ws.path(EMBEDDING).exists() {
        let text = rec.read(EMBEDDING)?;
        let points: Vec<EmbeddingRow> = read_csv(&text, &rec.ws.path(EMBEDDING))?;
        let coords: Vec<[f64; 2]> = points.iter().map(|p| [p.x, p.y]).collect();
        let labels: Vec<String> = points.iter().map(|p| p.label.clone()).collect();
        let grid = region_grid(&coords, &labels, cfg.k_fraction, cfg.resolution)?;
        rec.write(GRID, &write_csv(&grid.cells))?;
        if opts.svg {
            rec.write("embedding.svg", &svg::embedding(&coords, &labels, &grid))?;
        }
        grid_cells = Some(grid.cells.len());
    }
    Ok((
        json!({ "grid": cfg, "svg": opts.svg }),
        json!({ "bars": bars.len(), "f_edges": edges.len(), "grid_cells": grid_cells }),
    ))
}
