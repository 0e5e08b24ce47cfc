use std::io::Write;
use std::path::{Path, PathBuf};

use wordspot_core::adapt::{adapt, load_unlabeled, Diagnostics};
use wordspot_core::confidence::{
    conf_entropy, conf_mc_dropout, conf_oracle, conf_sigmoid, ConfidenceMeasure, ConfidenceScore,
};
use wordspot_core::corpus::Manifest;
use wordspot_core::estimator::{load_model, save_model, train, EstimatorModel, Model};
use wordspot_core::image::{normalize, read_image};
use wordspot_core::phoc::{phoc_of_string, PhocVector};
use wordspot_core::rng::substream_indexed;
use wordspot_core::spotting::{
    evaluate_map, gallery_from_manifest, rank_gallery, recognize, EvalOptions, Lexicon, Protocol,
};
use wordspot_core::synth::generate_corpus;

use crate::config::RunConfig;
use crate::{CliError, SpotMode};

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn load_words(config: &RunConfig) -> Result<Vec<String>, CliError> {
    if let Some(path) = &config.synth.words_file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read words file {}: {e}", path.display())))?;
        let words: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        if words.is_empty() {
            return Err(CliError::Usage(format!("words file {} is empty", path.display())));
        }
        Ok(words)
    } else if config.synth.words.is_empty() {
        Err(CliError::Usage(
            "config needs synth.words or synth.words_file".into(),
        ))
    } else {
        Ok(config.synth.words.clone())
    }
}

pub fn cmd_synth(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let words = load_words(config)?;
    config
        .synth
        .style
        .validate()
        .map_err(|e| CliError::Usage(format!("invalid synth style: {e}")))?;
    let manifest = generate_corpus(
        &words,
        config.synth.per_word,
        &config.synth.style,
        config.synth.scale_jitter,
        out,
        config.seed,
    )
    .map_err(runtime)?;
    println!("wrote {} images and manifest.tsv to {}", manifest.len(), out.display());
    Ok(())
}

fn labeled_dataset(
    config: &RunConfig,
    manifest: &Manifest,
    model: &EstimatorModel,
) -> Result<Vec<(wordspot_core::WordImage, PhocVector)>, CliError> {
    let phoc = model.phoc_config();
    let desc = model.descriptor();
    let mut out = Vec::with_capacity(manifest.len());
    for entry in &manifest.entries {
        let word = entry.transcription.as_deref().ok_or_else(|| {
            CliError::Usage(format!("manifest entry {} has no transcription", entry.image_path))
        })?;
        let target = phoc_of_string(word, phoc)
            .map_err(|e| CliError::Usage(format!("cannot embed {word:?}: {e}")))?;
        let img = read_image(manifest.resolve(entry)).map_err(runtime)?;
        out.push((
            normalize(&img, desc.input_h, desc.input_w, config.train.invert),
            target,
        ));
    }
    Ok(out)
}

pub fn cmd_train(config: &RunConfig, out: &Path, resume_from: Option<&Path>) -> Result<(), CliError> {
    let manifest_path = config.require("train_manifest", &config.paths.train_manifest)?;
    let schedule = config.train_schedule()?;
    let mut model = match resume_from {
        Some(path) => load_model(path).map_err(|e| CliError::Usage(format!("cannot resume: {e}")))?,
        None => Model::init(config.arch()?, config.phoc_config()?, config.seed)
            .map_err(|e| CliError::Usage(format!("cannot initialize model: {e}")))?,
    };
    let manifest = Manifest::load(&manifest_path).map_err(runtime)?;
    let dataset = labeled_dataset(config, &manifest, &model)?;
    let trace = train(&mut model, &dataset, &schedule).map_err(runtime)?;

    std::fs::create_dir_all(out).map_err(runtime)?;
    save_model(&model, out.join("model.wsaf")).map_err(runtime)?;
    let mut tsv = String::from("iteration\tloss\n");
    for (i, loss) in trace.iter().enumerate() {
        tsv.push_str(&format!("{i}\t{loss:.6}\n"));
    }
    std::fs::write(out.join("loss_trace.tsv"), tsv).map_err(runtime)?;
    println!(
        "trained {} iterations, final loss {:.6}, model at {}",
        trace.len(),
        trace.last().copied().unwrap_or(f64::NAN),
        out.join("model.wsaf").display()
    );
    Ok(())
}

pub fn cmd_adapt(
    config: &RunConfig,
    out: &Path,
    measure_override: Option<ConfidenceMeasure>,
) -> Result<(), CliError> {
    let model_path = config.require("model", &config.paths.model)?;
    let target_path = config.require("target_manifest", &config.paths.target_manifest)?;
    let lexicon_path = config.require("lexicon", &config.paths.lexicon)?;
    let measure = measure_override.unwrap_or(config.adapt.measure);
    let schedule = config.adapt_schedule(measure)?;

    let mut model = load_model(&model_path).map_err(runtime)?;
    let manifest = Manifest::load(&target_path).map_err(runtime)?;
    let lexicon = Lexicon::load(&lexicon_path, model.phoc_config()).map_err(runtime)?;

    let truth: Option<Vec<PhocVector>> = if measure == ConfidenceMeasure::Oracle {
        let phoc = model.phoc_config().clone();
        let vectors: Result<Vec<PhocVector>, CliError> = manifest
            .entries
            .iter()
            .map(|entry| {
                let word = entry.transcription.as_deref().ok_or_else(|| {
                    CliError::Usage(format!(
                        "oracle confidence needs transcriptions; {} has none",
                        entry.image_path
                    ))
                })?;
                phoc_of_string(word, &phoc)
                    .map_err(|e| CliError::Usage(format!("cannot embed {word:?}: {e}")))
            })
            .collect();
        Some(vectors?)
    } else {
        None
    };

    let unlabeled = load_unlabeled(&manifest, &model, config.train.invert).map_err(runtime)?;
    let labels: Option<Vec<String>> = manifest
        .entries
        .iter()
        .map(|e| {
            e.transcription
                .as_ref()
                .map(|t| model.phoc_config().alphabet.canonicalize(t))
        })
        .collect();
    let diagnostics = Diagnostics {
        unlabeled_labels: labels.as_deref(),
        eval_set: None,
    };
    let reports = adapt(
        &mut model,
        &unlabeled,
        &lexicon,
        &schedule,
        truth.as_deref(),
        &diagnostics,
        Some(out),
    )
    .map_err(runtime)?;
    save_model(&model, out.join("model.wsaf")).map_err(runtime)?;
    println!(
        "adapted for {} cycles with {} confidence, model at {}",
        reports.len(),
        measure.name(),
        out.join("model.wsaf").display()
    );
    Ok(())
}

fn gallery(config: &RunConfig) -> Result<(EstimatorModel, Manifest, Vec<wordspot_core::spotting::GalleryItem>), CliError> {
    let model_path = config.require("model", &config.paths.model)?;
    let eval_path = config.require("eval_manifest", &config.paths.eval_manifest)?;
    let model = load_model(&model_path).map_err(runtime)?;
    let manifest = Manifest::load(&eval_path).map_err(runtime)?;
    let items = gallery_from_manifest(&model, &manifest, config.train.invert)
        .map_err(|e| CliError::Usage(format!("cannot build gallery: {e}")))?;
    Ok((model, manifest, items))
}

pub fn cmd_spot(
    config: &RunConfig,
    mode: SpotMode,
    query: &str,
    top_k: Option<usize>,
) -> Result<(), CliError> {
    let (model, _manifest, items) = gallery(config)?;
    let vectors: Vec<Vec<f64>> = items.iter().map(|g| g.a_hat.clone()).collect();
    let ranked = match mode {
        SpotMode::Qbs => {
            let phoc = phoc_of_string(query, model.phoc_config())
                .map_err(|e| CliError::Usage(format!("cannot embed query {query:?}: {e}")))?;
            rank_gallery(query, &phoc.as_f64(), &vectors).map_err(runtime)?
        }
        SpotMode::Qbe => {
            let img = read_image(PathBuf::from(query))
                .map_err(|e| CliError::Usage(format!("cannot read query image {query}: {e}")))?;
            let desc = model.descriptor();
            let img = normalize(&img, desc.input_h, desc.input_w, config.train.invert);
            let a_hat = model.infer(&img).map_err(runtime)?;
            let q: Vec<f64> = a_hat.values().iter().map(|&v| v as f64).collect();
            rank_gallery(query, &q, &vectors).map_err(runtime)?
        }
    };
    let k = top_k.unwrap_or(ranked.items.len()).min(ranked.items.len());
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    writeln!(w, "rank\tid\ttranscription\tdissimilarity").map_err(runtime)?;
    for (rank, &(id, d)) in ranked.items[..k].iter().enumerate() {
        writeln!(
            w,
            "{}\t{}\t{}\t{:.4}",
            rank + 1,
            items[id].id,
            items[id].transcription,
            d
        )
        .map_err(runtime)?;
    }
    Ok(())
}

pub fn cmd_recognize(config: &RunConfig, image: &Path) -> Result<(), CliError> {
    let model_path = config.require("model", &config.paths.model)?;
    let lexicon_path = config.require("lexicon", &config.paths.lexicon)?;
    let model = load_model(&model_path).map_err(runtime)?;
    let lexicon = Lexicon::load(&lexicon_path, model.phoc_config()).map_err(runtime)?;
    let img = read_image(image)
        .map_err(|e| CliError::Usage(format!("cannot read image {}: {e}", image.display())))?;
    let desc = model.descriptor();
    let img = normalize(&img, desc.input_h, desc.input_w, config.train.invert);
    let a_hat = model.infer(&img).map_err(runtime)?;
    let estimate: Vec<f64> = a_hat.values().iter().map(|&v| v as f64).collect();
    let result = recognize(&estimate, &lexicon).map_err(runtime)?;
    println!("{}\t{:.4}", result.label, result.dissimilarity);
    Ok(())
}

pub fn cmd_eval(
    config: &RunConfig,
    out: &Path,
    protocol: Protocol,
    stopwords: &[String],
) -> Result<(), CliError> {
    let (model, _manifest, items) = gallery(config)?;
    let alphabet = &model.phoc_config().alphabet;
    let options = EvalOptions {
        exclude_self: true,
        stopwords: stopwords.iter().map(|w| alphabet.canonicalize(w)).collect(),
    };
    let report = evaluate_map(protocol, &items, model.phoc_config(), &options).map_err(runtime)?;
    let name = match protocol {
        Protocol::Qbe => "qbe",
        Protocol::Qbs => "qbs",
    };
    std::fs::create_dir_all(out).map_err(runtime)?;
    let path = out.join(format!("report_{name}.tsv"));
    std::fs::write(&path, report.to_tsv()).map_err(runtime)?;
    println!("mAP\t{:.4}", report.map);
    println!("report at {}", path.display());
    Ok(())
}

pub fn cmd_confidence_report(
    config: &RunConfig,
    out: &Path,
    measures: &[ConfidenceMeasure],
) -> Result<(), CliError> {
    let model_path = config.require("model", &config.paths.model)?;
    let target_path = config.require("target_manifest", &config.paths.target_manifest)?;
    let model = load_model(&model_path).map_err(runtime)?;
    let manifest = Manifest::load(&target_path).map_err(runtime)?;
    let lexicon = match &config.paths.lexicon {
        Some(path) => Some(Lexicon::load(path, model.phoc_config()).map_err(runtime)?),
        None => None,
    };
    let desc = model.descriptor();
    let labeled = manifest.entries.iter().all(|e| e.transcription.is_some());

    let mut rows = String::new();
    rows.push_str("id\tmeasure\tscore");
    if lexicon.is_some() {
        rows.push_str("\tpseudo_label");
    }
    if labeled && lexicon.is_some() {
        rows.push_str("\tcorrect");
    }
    rows.push('\n');

    for (i, entry) in manifest.entries.iter().enumerate() {
        let img = read_image(manifest.resolve(entry)).map_err(runtime)?;
        let img = normalize(&img, desc.input_h, desc.input_w, config.train.invert);
        let a_hat = model.infer(&img).map_err(runtime)?;
        let estimate: Vec<f64> = a_hat.values().iter().map(|&v| v as f64).collect();
        let pseudo = match &lexicon {
            Some(lex) => Some(recognize(&estimate, lex).map_err(runtime)?),
            None => None,
        };
        for &measure in measures {
            let score: ConfidenceScore = match measure {
                ConfidenceMeasure::Sigmoid => conf_sigmoid(&a_hat),
                ConfidenceMeasure::Entropy => conf_entropy(&a_hat),
                ConfidenceMeasure::McDropout => {
                    let mut rng = substream_indexed(config.seed, "mc", i as u64);
                    conf_mc_dropout(&model, &img, config.adapt.mc_passes, &mut rng)
                        .map_err(runtime)?
                }
                ConfidenceMeasure::Oracle => {
                    let word = entry.transcription.as_deref().ok_or_else(|| {
                        CliError::Usage(format!(
                            "oracle confidence needs transcriptions; {} has none",
                            entry.image_path
                        ))
                    })?;
                    let truth = phoc_of_string(word, model.phoc_config())
                        .map_err(|e| CliError::Usage(format!("cannot embed {word:?}: {e}")))?;
                    conf_oracle(&a_hat, &truth).map_err(runtime)?
                }
                ConfidenceMeasure::Random => {
                    use rand::Rng;
                    let mut rng = substream_indexed(config.seed, "random", i as u64);
                    ConfidenceScore {
                        value: rng.gen::<f64>(),
                        measure: ConfidenceMeasure::Random,
                    }
                }
            };
            rows.push_str(&format!("{}\t{}\t{:.6}", entry.image_path, measure.name(), score.value));
            if let Some(p) = &pseudo {
                rows.push_str(&format!("\t{}", p.label));
                if labeled {
                    let canon = model
                        .phoc_config()
                        .alphabet
                        .canonicalize(entry.transcription.as_deref().unwrap_or(""));
                    rows.push_str(if p.label == canon { "\t1" } else { "\t0" });
                }
            }
            rows.push('\n');
        }
    }
    std::fs::create_dir_all(out).map_err(runtime)?;
    let path = out.join("confidence_report.tsv");
    std::fs::write(&path, rows).map_err(runtime)?;
    println!("report at {}", path.display());
    Ok(())
}

/// Dumps the fully defaulted config as a starting point.
pub fn cmd_init_config(out: &Path) -> Result<(), CliError> {
    let config = RunConfig::default();
    let text = serde_json::to_string_pretty(&config).expect("config serializes");
    std::fs::create_dir_all(out).map_err(runtime)?;
    let path = out.join("config.json");
    std::fs::write(&path, text).map_err(runtime)?;
    println!("wrote {}", path.display());
    Ok(())
}
