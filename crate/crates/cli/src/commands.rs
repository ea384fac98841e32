//! Subcommand bodies. Flag values override config-file values, which
//! override the built-in defaults.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use opal_core::{
    bli_accuracy, bli_mrr, compose_pair_matrices, distance_delta, iqr_outliers, l1_refine, l2_refine,
    load_embeddings, load_gold_dictionary, save_embeddings, BilingualDictionary, EmbeddingMatrix,
    Error, IntegratorMode, LossKind, RefineRequest, RetrievalMethod, SolverConfig,
};

use crate::mapfile;
use crate::{AnalyzeArgs, EvalArgs, Failure, LossArg, MetricArg, RefineArgs, RetrievalArg, SynthArgs};

type CmdResult = Result<(), Failure>;

/// Optional overrides loadable from `--config <json>`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    loss: Option<LossArg>,
    retrieval: Option<RetrievalArg>,
    csls_k: Option<usize>,
    alpha: Option<f64>,
    epsilon: Option<f64>,
    dt: Option<f64>,
    budget: Option<f64>,
    abs_tol: Option<f64>,
    rel_tol: Option<f64>,
    stride: Option<usize>,
    adaptive: Option<bool>,
    compare_running_min: Option<bool>,
    vocab_limit: Option<usize>,
    dict_limit: Option<usize>,
    metric: Option<MetricArg>,
    k: Option<usize>,
    max_rank: Option<usize>,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, Failure> {
    let Some(path) = path else { return Ok(ConfigFile::default()) };
    require_file(path)?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure { code: 2, message: format!("{}: {e}", path.display()) })?;
    serde_json::from_str(&text)
        .map_err(|e| Failure { code: 2, message: format!("{}: bad config: {e}", path.display()) })
}

/// Input paths are validated before any file is parsed; a missing file is
/// an argument error, not a data error.
fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure { code: 2, message: format!("no such file: {}", path.display()) })
    }
}

fn to_retrieval(arg: RetrievalArg) -> RetrievalMethod {
    match arg {
        RetrievalArg::Csls => RetrievalMethod::Csls,
        RetrievalArg::Nn => RetrievalMethod::Nn,
    }
}

pub fn refine(args: RefineArgs) -> CmdResult {
    require_file(&args.src)?;
    require_file(&args.tgt)?;
    let cfg = load_config(args.config.as_deref())?;

    let solver = SolverConfig {
        alpha: args.alpha.or(cfg.alpha).unwrap_or(1e8),
        epsilon: args.epsilon.or(cfg.epsilon).unwrap_or(1e-5),
        dt: args.dt.or(cfg.dt).unwrap_or(1e-6),
        t_budget: args.budget.or(cfg.budget).unwrap_or(5e-3),
        abs_tol: args.abs_tol.or(cfg.abs_tol).unwrap_or(1e-7),
        rel_tol: args.rel_tol.or(cfg.rel_tol).unwrap_or(1e-5),
        max_order: 15,
        loss_check_stride: args.stride.or(cfg.stride).unwrap_or(1),
        compare_to_running_min: args.compare_running_min
            || cfg.compare_running_min.unwrap_or(false),
        mode: if args.adaptive || cfg.adaptive.unwrap_or(false) {
            IntegratorMode::AdaptiveRk4
        } else {
            IntegratorMode::FixedRk4
        },
    };
    solver.validate().map_err(Failure::from)?;

    let vocab_limit = args.vocab_limit.or(cfg.vocab_limit);
    let source = load_embeddings(&args.src, vocab_limit).map_err(Failure::from)?;
    let target = load_embeddings(&args.tgt, vocab_limit).map_err(Failure::from)?;
    if source.dim() != target.dim() {
        return Err(Failure {
            code: 3,
            message: format!(
                "dimension mismatch between embedding files: {} is {}-dimensional, {} is {}-dimensional",
                args.src.display(),
                source.dim(),
                args.tgt.display(),
                target.dim()
            ),
        });
    }

    let loss = match args.loss.or(cfg.loss).unwrap_or(LossArg::L1) {
        LossArg::L1 => LossKind::L1,
        LossArg::L2 => LossKind::L2,
    };
    let mut request = RefineRequest {
        source,
        target,
        retrieval: to_retrieval(args.retrieval.or(cfg.retrieval).unwrap_or(RetrievalArg::Csls)),
        csls_k: args.csls_k.or(cfg.csls_k).unwrap_or(10),
        solver,
        loss,
        dict_vocab_limit: args.dict_limit.or(cfg.dict_limit),
    };
    if args.swap {
        request = request.swapped();
    }
    let words_src: Vec<String> = request.source.words().to_vec();
    let words_tgt: Vec<String> = request.target.words().to_vec();

    let mut outcome = match loss {
        LossKind::L1 => l1_refine(&request).map_err(Failure::from)?,
        LossKind::L2 => l2_refine(&request).map_err(Failure::from)?,
    };
    if !args.timings {
        outcome.report.wall_time_s = 0.0;
    }

    save_embeddings(&outcome.refined, &args.out).map_err(Failure::from)?;
    write_json(&args.report, &outcome.report)?;
    if let Some(path) = &args.out_map {
        mapfile::save_map(outcome.map.matrix(), path).map_err(Failure::from)?;
    }
    if let Some(path) = &args.out_dict {
        write_dictionary(path, &outcome.dictionary, &words_src, &words_tgt)?;
    }
    Ok(())
}

pub fn eval(args: EvalArgs) -> CmdResult {
    require_file(&args.src)?;
    require_file(&args.tgt)?;
    require_file(&args.gold)?;
    let cfg = load_config(args.config.as_deref())?;

    let vocab_limit = args.vocab_limit.or(cfg.vocab_limit);
    let source = load_embeddings(&args.src, vocab_limit).map_err(Failure::from)?;
    let target = load_embeddings(&args.tgt, vocab_limit).map_err(Failure::from)?;
    let gold = load_gold_dictionary(&args.gold).map_err(Failure::from)?;

    let retrieval = to_retrieval(args.retrieval.or(cfg.retrieval).unwrap_or(RetrievalArg::Csls));
    let k = args.k.or(cfg.k).unwrap_or(10);
    let max_rank = args.max_rank.or(cfg.max_rank).unwrap_or(10);

    let result = match args.metric.or(cfg.metric).unwrap_or(MetricArg::Acc) {
        MetricArg::Acc => bli_accuracy(&source, &target, &gold, retrieval, k),
        MetricArg::Mrr => bli_mrr(&source, &target, &gold, retrieval, k, max_rank),
    }
    .map_err(Failure::from)?;

    println!("{}", serde_json::to_string(&result).expect("result serializes"));
    Ok(())
}

pub fn analyze(args: AnalyzeArgs) -> CmdResult {
    require_file(&args.src)?;
    require_file(&args.tgt)?;
    require_file(&args.map_before)?;
    require_file(&args.map_after)?;
    require_file(&args.dict)?;

    let source = load_embeddings(&args.src, args.vocab_limit).map_err(Failure::from)?;
    let target = load_embeddings(&args.tgt, args.vocab_limit).map_err(Failure::from)?;
    let before = mapfile::load_map(&args.map_before).map_err(Failure::from)?;
    let after = mapfile::load_map(&args.map_after).map_err(Failure::from)?;

    let dictionary = read_pair_dictionary(&args.dict, &source, &target)?;
    let pairs = compose_pair_matrices(&dictionary, &source, &target).map_err(Failure::from)?;
    if before.nrows() != pairs.dim() || after.nrows() != pairs.dim() {
        return Err(Failure {
            code: 3,
            message: format!(
                "map dimension {}x{} does not match embedding dimension {}",
                before.nrows(),
                after.nrows(),
                pairs.dim()
            ),
        });
    }

    let table = distance_delta(&pairs, before.view(), after.view());
    let out = File::create(&args.out_csv)
        .map_err(|e| Failure { code: 3, message: format!("{}: {e}", args.out_csv.display()) })?;
    table
        .write_csv(BufWriter::new(out))
        .map_err(|e| Failure { code: 3, message: format!("{}: {e}", args.out_csv.display()) })?;

    if args.iqr {
        // original distances in pair order, so printed ids match pair_id
        let mut original = vec![0.0; table.rows().len()];
        for row in table.rows() {
            original[row.pair_id] = row.original;
        }
        let flagged = iqr_outliers(&original).map_err(Failure::from)?;
        for id in flagged {
            println!("{id}");
        }
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> CmdResult {
    let n = args.n.unwrap_or(200);
    let d = args.d.unwrap_or(10);
    let sigma = args.sigma.unwrap_or(0.01);
    let outlier_frac = args.outlier_frac.unwrap_or(0.1);
    let outlier_scale = args.outlier_scale.unwrap_or(1.0);
    let seed = args.seed.unwrap_or(0);

    let problem =
        opal_core::gen_synthetic(n, d, sigma, outlier_frac, outlier_scale, seed).map_err(Failure::from)?;
    let (a, b) = problem.embedding_pair();

    let prefix = args.out_prefix.as_os_str().to_string_lossy();
    let a_path = PathBuf::from(format!("{prefix}.a.vec"));
    let b_path = PathBuf::from(format!("{prefix}.b.vec"));
    let sidecar_path = PathBuf::from(format!("{prefix}.json"));

    save_embeddings(&a, &a_path).map_err(Failure::from)?;
    save_embeddings(&b, &b_path).map_err(Failure::from)?;
    write_json(&sidecar_path, &problem.sidecar())?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let file = File::create(path)
        .map_err(|e| Failure { code: 3, message: format!("{}: {e}", path.display()) })?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Failure { code: 3, message: format!("{}: {e}", path.display()) })?;
    writeln!(w).map_err(|e| Failure { code: 3, message: format!("{}: {e}", path.display()) })?;
    Ok(())
}

fn write_dictionary(
    path: &Path,
    dictionary: &BilingualDictionary,
    words_src: &[String],
    words_tgt: &[String],
) -> Result<(), Failure> {
    let file = File::create(path)
        .map_err(|e| Failure { code: 3, message: format!("{}: {e}", path.display()) })?;
    let mut w = BufWriter::new(file);
    for &(i, j) in dictionary.pairs() {
        writeln!(w, "{} {}", words_src[i], words_tgt[j])
            .map_err(|e| Failure { code: 3, message: format!("{}: {e}", path.display()) })?;
    }
    Ok(())
}

/// Reads `<src> <tgt>` lines into an index dictionary, in file order.
/// Every word must be present in its embedding space.
fn read_pair_dictionary(
    path: &Path,
    source: &EmbeddingMatrix,
    target: &EmbeddingMatrix,
) -> Result<BilingualDictionary, Failure> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Failure { code: 3, message: format!("{display}: {e}") })?;
    let mut pairs = Vec::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Failure { code: 3, message: format!("{display}: {e}") })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Failure::from(Error::Format {
                path: display,
                line: line_no + 1,
                msg: format!("expected 2 fields, found {}", fields.len()),
            }));
        }
        let src_idx = source.position(fields[0]).ok_or_else(|| Failure {
            code: 3,
            message: format!("{display}:{}: source word {:?} not in vocabulary", line_no + 1, fields[0]),
        })?;
        let tgt_idx = target.position(fields[1]).ok_or_else(|| Failure {
            code: 3,
            message: format!("{display}:{}: target word {:?} not in vocabulary", line_no + 1, fields[1]),
        })?;
        pairs.push((src_idx, tgt_idx));
    }
    if pairs.is_empty() {
        return Err(Failure::from(Error::EmptyInput(format!("{display}: dictionary has no entries"))));
    }
    Ok(BilingualDictionary::from_pairs(pairs))
}
