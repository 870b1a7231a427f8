//! `empref stats`

use empref::stats::{
    apply_bonferroni, discordant_counts, mcnemar, paired_t_cohen_d, permutation_test,
    permutation_test_exact, welch_t, TestResult,
};

use crate::io_util::{read_bool_vector, read_vector, write_string};
use crate::{CliError, CliResult, StatsArgs, TestKind};

pub fn run(args: StatsArgs) -> CliResult {
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok();
    }
    let result: TestResult = match args.test {
        TestKind::Permutation => {
            let a = read_vector(&args.a)?;
            let b = read_vector(&args.b)?;
            if args.exact {
                permutation_test_exact(&a, &b, args.alternative)?
            } else {
                permutation_test(&a, &b, args.resamples, args.seed, args.alternative)?
            }
        }
        TestKind::Welch => {
            let a = read_vector(&args.a)?;
            let b = read_vector(&args.b)?;
            welch_t(&a, &b)?
        }
        TestKind::Paired => {
            let a = read_vector(&args.a)?;
            let b = read_vector(&args.b)?;
            paired_t_cohen_d(&a, &b, args.alternative, args.d_kind)?
        }
        TestKind::Mcnemar => {
            let a = read_bool_vector(&args.a)?;
            let b = read_bool_vector(&args.b)?;
            let (n01, n10) = discordant_counts(&a, &b)?;
            mcnemar(n01, n10, args.exact_threshold)
        }
    };
    let result = apply_bonferroni(result, args.bonferroni);
    let json = serde_json::to_string_pretty(&result)
        .map_err(|e| CliError::Data(format!("cannot serialize result: {e}")))?;
    println!("{json}");
    if let Some(path) = &args.out {
        write_string(path, &json)?;
    }
    Ok(())
}
