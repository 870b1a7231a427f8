//! `empref eval`

use std::io::BufWriter;
use std::path::Path;

use empref::corpus::Corpus;
use empref::lexicons::{IntensityLexicon, IntensityMerge, NidfTable, VadLexicon};
use empref::metrics::external::{load_epitome_jsonl, load_similarity_jsonl};
use empref::metrics::feature::{tokenize_strings, TOKENIZER_VERSION};
use empref::report::{
    evaluate, load_generations_jsonl, load_generations_text, render_markdown, write_per_example,
    EvalInputs, EvalOptions, Generation, MetricReportFile, RunConfig, TOOL_VERSION,
};

use crate::config::{resolve_intensity, resolve_vad, FileConfig};
use crate::io_util::{create, open, write_string};
use crate::{CliError, CliResult, EvalArgs};

pub fn run(args: EvalArgs) -> CliResult {
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok();
    }
    let config = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };

    let corpus_path = args
        .corpus
        .clone()
        .or_else(|| config.get_path("corpus"));
    let corpus = match &corpus_path {
        Some(path) => Some(Corpus::read_jsonl(open(path)?)?),
        None => None,
    };

    // generations: ground truth, JSON-lines, or plain text
    let plain_text = args
        .generations
        .as_ref()
        .is_some_and(|p| p.extension().is_some_and(|e| e == "txt"));
    let generations: Vec<Generation> = if args.ground_truth {
        let corpus = corpus.as_ref().ok_or_else(|| {
            CliError::Usage("--ground-truth requires --corpus".to_string())
        })?;
        empref::report::ground_truth_generations(corpus, args.split)?
    } else {
        let path = args.generations.as_ref().ok_or_else(|| {
            CliError::Usage("one of --generations or --ground-truth is required".to_string())
        })?;
        if plain_text {
            load_generations_text(open(path)?)?
        } else {
            load_generations_jsonl(open(path)?)?
        }
    };

    let metrics = args.metrics;
    if metrics.iva && plain_text {
        return Err(CliError::Usage(
            "iva needs dialogue contexts; plain-text generations carry no ids".to_string(),
        ));
    }
    if (metrics.nidf || metrics.iva) && corpus.is_none() && args.nidf_cache.is_none() {
        return Err(CliError::Usage(
            "nidf/iva metrics need --corpus (or --nidf-cache for nidf)".to_string(),
        ));
    }

    // NIDF table: cache file if present, else built from the reference split
    let nidf: Option<NidfTable> = if metrics.nidf {
        let cache_path = args
            .nidf_cache
            .clone()
            .or_else(|| config.get_path("nidf_cache"));
        match &cache_path {
            Some(path) if path.exists() => Some(NidfTable::read_tsv(open(path)?)?),
            _ => {
                let corpus = corpus.as_ref().ok_or_else(|| {
                    CliError::Usage(
                        "nidf metric needs --corpus to build the table (no cache found)"
                            .to_string(),
                    )
                })?;
                let table = build_nidf_from_corpus(corpus, args.nidf_reference)?;
                if let Some(path) = &cache_path {
                    table.write_tsv(BufWriter::new(create(path)?))?;
                    println!("wrote NIDF cache ({} words) -> {}", table.len(), path.display());
                }
                Some(table)
            }
        }
    } else {
        None
    };

    let vad: Option<VadLexicon> = if metrics.iva {
        let path = resolve_vad(args.vad.clone(), &config).ok_or_else(|| {
            CliError::Usage(format!(
                "iva metric needs --vad (or {} with {})",
                crate::config::LEXICON_DIR_ENV,
                crate::config::VAD_FILE_NAME
            ))
        })?;
        Some(VadLexicon::from_tsv(open(&path)?)?)
    } else {
        None
    };
    let intensity: Option<IntensityLexicon> = if metrics.iva {
        let path = resolve_intensity(args.intensity.clone(), &config).ok_or_else(|| {
            CliError::Usage(format!(
                "iva metric needs --intensity (or {} with {})",
                crate::config::LEXICON_DIR_ENV,
                crate::config::INTENSITY_FILE_NAME
            ))
        })?;
        Some(IntensityLexicon::from_tsv(open(&path)?, IntensityMerge::Max)?)
    } else {
        None
    };

    let epitome_gen = match &args.epitome_gen {
        Some(path) => Some(load_epitome_jsonl(open(path)?)?),
        None => None,
    };
    let epitome_gt = match &args.epitome_gt {
        Some(path) => Some(load_epitome_jsonl(open(path)?)?),
        None => None,
    };
    let similarity = match &args.similarity {
        Some(path) => Some(load_similarity_jsonl(open(path)?)?),
        None => None,
    };

    let inputs = EvalInputs {
        generations: &generations,
        corpus: if plain_text {
            None
        } else {
            corpus.as_ref().map(|c| (c, args.split))
        },
        vad: vad.as_ref(),
        intensity: intensity.as_ref(),
        nidf: nidf.as_ref(),
        epitome_gen: epitome_gen.as_deref(),
        epitome_gt: epitome_gt.as_deref(),
        similarity: similarity.as_deref(),
    };
    let output = evaluate(
        &inputs,
        &EvalOptions {
            metrics,
            prompt_mode: args.prompt_mode,
        },
    )?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", args.out.display())))?;
    let per_example_path = args.out.join("per_example.jsonl");
    write_per_example(
        &output.per_example,
        BufWriter::new(create(&per_example_path)?),
    )?;

    let report = MetricReportFile {
        version: TOOL_VERSION.to_string(),
        config: run_config(&args, &corpus_path, &generations),
        per_example_path: "per_example.jsonl".to_string(),
        aggregates: output.aggregates,
        stats: Vec::new(),
        warnings: output.warnings,
    };
    let report_path = args.out.join("report.json");
    write_string(&report_path, &report.to_json_pretty()?)?;
    println!(
        "evaluated {} examples -> {}",
        report.aggregates.n_examples,
        report_path.display()
    );
    if args.paper_table {
        let tables_path = args.out.join("tables.md");
        write_string(&tables_path, &render_markdown(&report))?;
        println!("wrote tables -> {}", tables_path.display());
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn build_nidf_from_corpus(
    corpus: &Corpus,
    reference: empref::corpus::Split,
) -> Result<NidfTable, CliError> {
    if !corpus.has_split(reference) {
        return Err(CliError::Data(format!(
            "NIDF reference split {reference} not present in corpus"
        )));
    }
    let documents: Vec<String> = corpus
        .split_dialogues(reference)
        .flat_map(|d| d.turns.iter().map(|t| t.text.clone()))
        .collect();
    Ok(NidfTable::build(
        &documents,
        tokenize_strings,
        TOKENIZER_VERSION,
    )?)
}

fn run_config(args: &EvalArgs, corpus_path: &Option<std::path::PathBuf>, generations: &[Generation]) -> RunConfig {
    let path_str = |p: &Path| p.display().to_string();
    RunConfig {
        model_label: args.model_label.clone(),
        corpus_path: corpus_path.as_deref().map(path_str),
        raw_paths: Default::default(),
        generations_path: if args.ground_truth {
            Some(format!("<ground-truth:{} examples>", generations.len()))
        } else {
            args.generations.as_deref().map(path_str)
        },
        split: Some(args.split),
        metrics: args.metrics.names(),
        vad_path: args.vad.as_deref().map(path_str),
        intensity_path: args.intensity.as_deref().map(path_str),
        nidf_cache_path: args.nidf_cache.as_deref().map(path_str),
        nidf_reference: args.metrics.nidf.then_some(args.nidf_reference),
        tokenizer: TOKENIZER_VERSION.to_string(),
        prompt_mode: args.prompt_mode,
        seed: None,
        epochs: None,
        out_dir: Some(args.out.display().to_string()),
    }
}
