//! `empref corpus import`

use std::io::BufReader;

use empref::corpus::{Corpus, ImportOptions, Split};

use crate::io_util::{create, open};
use crate::{CliError, CliResult, CorpusImportArgs};

pub fn import(args: CorpusImportArgs) -> CliResult {
    let mut options = ImportOptions::default();
    if let Some(path) = &args.keywords {
        let reader = open(path)?;
        options.malformed_keywords = ImportOptions::keywords_from_reader(reader)?;
    }

    let wanted: Vec<Split> = args
        .splits
        .clone()
        .unwrap_or_else(|| Split::ALL.to_vec());
    let mut streams = Vec::new();
    let mut names = Vec::new();
    for split in wanted {
        let path = args.raw_dir.join(format!("{split}.csv"));
        if path.exists() {
            names.push((split, path));
        } else if args.splits.is_some() {
            // explicitly requested split must exist
            return Err(CliError::Data(format!(
                "split file not found: {}",
                path.display()
            )));
        }
    }
    if names.is_empty() {
        return Err(CliError::Data(format!(
            "no split CSV files found under {}",
            args.raw_dir.display()
        )));
    }
    let display_names: Vec<String> = names.iter().map(|(_, p)| p.display().to_string()).collect();
    for ((split, path), name) in names.iter().zip(&display_names) {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
        streams.push((*split, name.as_str(), BufReader::new(file)));
    }
    let corpus = Corpus::import_raw(streams, &options)?;

    let sink = create(&args.out)?;
    corpus.write_jsonl(std::io::BufWriter::new(sink))?;

    let report = corpus.filter_report();
    println!("imported {} dialogues -> {}", corpus.len(), args.out.display());
    for split in Split::ALL {
        if corpus.has_split(split) {
            println!("  {split}: {} dialogues", corpus.split_len(split));
        }
    }
    println!(
        "  rows read {}, dropped: schema {}, keyword {}, unknown emotion {}, duplicate {}",
        report.rows_read,
        report.rows_dropped_schema,
        report.rows_dropped_keyword,
        report.rows_dropped_unknown_emotion,
        report.rows_dropped_duplicate
    );
    println!(
        "  dialogues dropped: index gap {}, fully filtered {} (filtered fraction {:.4}%)",
        report.dialogues_dropped_gap,
        report.dialogues_dropped_empty,
        report.filtered_fraction() * 100.0
    );
    Ok(())
}
