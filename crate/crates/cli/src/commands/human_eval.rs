//! `empref human-eval`

use empref::stats::{
    apply_bonferroni, human_eval_aggregate, load_annotations_csv, paired_t_cohen_d, CohensD,
    Dimension, TestResult,
};
use serde_json::json;

use crate::io_util::{open, write_string};
use crate::{CliError, CliResult, HumanEvalArgs};

pub fn run(args: HumanEvalArgs) -> CliResult {
    let records = load_annotations_csv(open(&args.records)?)?;
    let summary = human_eval_aggregate(&records)?;

    let mut comparisons: Vec<TestResult> = Vec::new();
    if let Some(models) = &args.compare {
        let [model_a, model_b] = models.as_slice() else {
            return Err(CliError::Usage(
                "--compare takes exactly two model ids: MODEL_A,MODEL_B".to_string(),
            ));
        };
        let dimensions: Vec<Dimension> = match args.dimension {
            Some(d) => vec![d],
            None => Dimension::ALL.to_vec(),
        };
        for dimension in dimensions {
            let (a, b) = summary.paired_vectors(model_a, model_b, dimension)?;
            let mut result = apply_bonferroni(
                paired_t_cohen_d(&a, &b, args.alternative, CohensD::Pooled)?,
                args.bonferroni,
            );
            result.method = format!("{} [{model_a} vs {model_b}, {dimension}]", result.method);
            comparisons.push(result);
        }
    }

    let out = json!({
        "summary": summary,
        "comparisons": comparisons,
    });
    let json = serde_json::to_string_pretty(&out)
        .map_err(|e| CliError::Data(format!("cannot serialize summary: {e}")))?;
    println!("{json}");
    if let Some(path) = &args.out {
        write_string(path, &json)?;
    }
    Ok(())
}
