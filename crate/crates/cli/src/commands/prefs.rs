//! `empref prefs build`

use std::io::BufWriter;

use empref::corpus::Corpus;
use empref::preference::{build_multi_epoch, serialize_preferences, EpochPlan, OppositeTable};

use crate::io_util::{create, open};
use crate::{CliResult, PrefsBuildArgs};

pub fn build(args: PrefsBuildArgs) -> CliResult {
    let corpus = Corpus::read_jsonl(open(&args.corpus)?)?;
    let owned_table;
    let table = match &args.table {
        Some(path) => {
            owned_table = OppositeTable::from_csv(open(path)?)?;
            &owned_table
        }
        None => OppositeTable::default_table(),
    };
    let plan = EpochPlan {
        base_seed: args.seed,
        epochs: args.epochs,
        split: args.split,
    };
    let builds = build_multi_epoch(&corpus, &plan, table, args.system.as_deref())?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| crate::CliError::Data(format!("cannot create {}: {e}", args.out.display())))?;
    for (epoch, build) in builds.iter().enumerate() {
        let path = args
            .out
            .join(format!("prefs_{}_epoch{}.jsonl", args.split, epoch));
        serialize_preferences(&build.examples, BufWriter::new(create(&path)?))?;
        println!(
            "epoch {epoch}: {} examples -> {} (re-draws {}, collisions kept {})",
            build.examples.len(),
            path.display(),
            build.report.redraws,
            build.report.collisions_kept
        );
    }
    if let Some(first) = builds.first() {
        println!("examples per emotion (epoch 0):");
        for (emotion, count) in &first.report.per_emotion {
            println!("  {emotion}: {count}");
        }
    }
    Ok(())
}
