use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use tricluster::exp_model::{
    exp_predict, train_exponential, ExpModelParams, RateMode, TrainConfig, TrainingSet,
};
use tricluster::experiments::{
    evaluate_timeline, evaluate_timeline_masked, gen_synthetic, inverse_vol_weights_at, regime_changes,
    SynthConfig,
};
use tricluster::format::fmt_num;
use tricluster::hardness::{build_reduction, decide_kclique_via_map, map_structure_report, SimpleGraph};
use tricluster::hmm::{hmm_train_with, viterbi_decode};
use tricluster::mcmc::{run_chain_with_target, run_chains_from, ChainConfig, TraceRow};
use tricluster::similarity::{similarity_at, SimilarityMatrix};
use tricluster::spectral::{dynamic_spectral, shi_malik, DescentConfig};
use tricluster::triangular::{exact_map, log_posterior_unnorm};
use tricluster::{ClusterTimeline, Error, Partition, SeriesPanel, SimilarityConfig};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::io;

pub fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Generate(a) => generate(&a),
        Command::Train(a) => train(&a),
        Command::Cluster(a) => cluster(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Weights(a) => weights(&a),
        Command::CliqueDemo(a) => clique_demo(&a),
    }
}

fn generate(a: &GenerateArgs) -> CliResult<()> {
    let cfg = SynthConfig {
        n: a.n,
        steps: a.steps as usize,
        noise_sd: a.noise,
        regime_change_prob: a.regime_change_prob,
        seed: a.seed,
    };
    let (panel, truth) = gen_synthetic(&cfg)?;
    io::write_panel(&a.out_panel, &panel)?;
    io::write_timeline(&a.out_truth, &truth)?;
    println!(
        "wrote {} steps of {} series ({} regime changes) to {} and {}",
        panel.n_steps(),
        panel.n_series(),
        regime_changes(&truth).len(),
        a.out_panel.display(),
        a.out_truth.display()
    );
    Ok(())
}

/// Clips a requested range to the steps with a full similarity window.
fn usable_steps(range: StepRange, panel: &SeriesPanel, cfg: &SimilarityConfig) -> CliResult<(usize, usize)> {
    cfg.validate()?;
    let m = panel.n_steps();
    if range.hi > m {
        return Err(CliError::Data(format!(
            "range ends at {} but the panel has {m} steps",
            range.hi
        )));
    }
    let lo = range.lo.max(cfg.window);
    if lo > range.hi {
        return Err(Error::InsufficientHistory {
            needed: cfg.window,
            available: range.hi,
        }
        .into());
    }
    Ok((lo, range.hi))
}

fn similarities(
    panel: &SeriesPanel,
    cfg: &SimilarityConfig,
    lo: usize,
    hi: usize,
) -> CliResult<Vec<(usize, SimilarityMatrix)>> {
    Ok((lo..=hi)
        .into_par_iter()
        .map(|k| similarity_at(panel, k, cfg).map(|s| (k, s)))
        .collect::<tricluster::Result<Vec<_>>>()?)
}

fn cluster_range(spec: &SpectralArgs, n: usize) -> (usize, usize) {
    (spec.c_min.unwrap_or(2), spec.c_max.unwrap_or(n))
}

fn descent(seed: u64) -> DescentConfig {
    DescentConfig {
        seed,
        ..DescentConfig::default()
    }
}

fn train(a: &TrainArgs) -> CliResult<()> {
    if a.labels == LabelSource::Truth && a.truth.is_none() {
        return Err(CliError::Usage(
            "--truth is required unless --labels spectral".into(),
        ));
    }
    let panel = io::read_panel(&a.panel)?;
    let sim = a.similarity.config();
    let range = a.train_range.unwrap_or(StepRange {
        lo: 1,
        hi: (panel.n_steps() / 2).max(1),
    });
    let (lo, hi) = usable_steps(range, &panel, &sim)?;
    let mats = similarities(&panel, &sim, lo, hi)?;
    let labels: Vec<Partition> = match a.labels {
        LabelSource::Truth => {
            let path = a.truth.as_ref().expect("checked above");
            let truth = io::read_timeline(path)?;
            mats.iter()
                .map(|(k, _)| {
                    truth
                        .get(*k)
                        .cloned()
                        .ok_or_else(|| CliError::io(path, format!("no label for step {k}")))
                })
                .collect::<CliResult<_>>()?
        }
        LabelSource::Spectral => {
            let (c_min, c_max) = cluster_range(&a.spectral, panel.n_series());
            let gd = descent(a.seed);
            mats.par_iter()
                .map(|(_, s)| dynamic_spectral(s, c_min, c_max, &gd).map(|r| r.partition))
                .collect::<tricluster::Result<_>>()?
        }
    };
    let data = TrainingSet::new(mats.into_iter().map(|(_, s)| s).zip(labels).collect())?;
    let cfg = TrainConfig {
        rates: match a.rates {
            RatesArg::Conditional => RateMode::Conditional,
            RatesArg::Pooled => RateMode::Pooled,
        },
        clamp_priors: !a.raw_priors,
    };
    io::write_params(&a.out_params, &train_exponential(&data, &cfg))?;
    let mut msg = format!(
        "trained on {} steps ({lo}..{hi}); wrote {}",
        data.len(),
        a.out_params.display()
    );
    if let Some(path) = &a.hmm {
        io::write_hmm(path, &hmm_train_with(&data, a.alpha, &cfg)?)?;
        let _ = write!(msg, " and {}", path.display());
    }
    println!("{msg}");
    Ok(())
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::ShiMalik => "shi-malik",
        Method::Spectral => "spectral",
        Method::Exponential => "exponential",
        Method::TriangularExact => "triangular-exact",
        Method::TriangularMcmc => "triangular-mcmc",
        Method::Hmm => "hmm",
    }
}

fn check_method_flags(a: &ClusterArgs) -> CliResult<()> {
    let name = method_name(a.method);
    let mismatch = |flag: &str, wanted: bool| {
        CliError::Usage(if wanted {
            format!("--method {name} needs {flag}")
        } else {
            format!("{flag} does not apply to --method {name}")
        })
    };
    let needs_params = !matches!(a.method, Method::ShiMalik | Method::Spectral);
    if needs_params != a.params.is_some() {
        return Err(mismatch("--params", needs_params));
    }
    let is_hmm = a.method == Method::Hmm;
    if is_hmm != a.transitions.is_some() {
        return Err(mismatch("--transitions", is_hmm));
    }
    if a.method != Method::TriangularMcmc && a.chain.any_set() {
        return Err(mismatch("chain flags", false));
    }
    if a.method != Method::Spectral && (a.spectral.c_min.is_some() || a.spectral.c_max.is_some()) {
        return Err(mismatch("--c-min/--c-max", false));
    }
    if a.chain.trace.is_some() && a.chain.chains.unwrap_or(1) != 1 {
        return Err(CliError::Usage("--trace needs a single chain".into()));
    }
    Ok(())
}

fn load_params(a: &ClusterArgs, n: usize) -> CliResult<ExpModelParams> {
    let path = a.params.as_ref().expect("checked by check_method_flags");
    let params = io::read_params(path)?;
    if params.n() != n {
        return Err(Error::Contract(format!(
            "{} covers {} series but the panel has {n}",
            path.display(),
            params.n()
        ))
        .into());
    }
    Ok(params)
}

fn per_step<F>(seq: &[(usize, SimilarityMatrix)], f: F) -> CliResult<ClusterTimeline>
where
    F: Fn(usize, &SimilarityMatrix) -> tricluster::Result<Partition> + Sync,
{
    let steps = seq
        .par_iter()
        .map(|(k, s)| f(*k, s).map(|p| (*k, p)))
        .collect::<tricluster::Result<Vec<_>>>()?;
    Ok(ClusterTimeline::new(steps)?)
}

fn write_trace(path: &Path, traces: &[(usize, Vec<TraceRow>)]) -> CliResult<()> {
    let mut text = String::from("time,step,accepted,log_score,partition\n");
    for (k, rows) in traces {
        for r in rows {
            let _ = writeln!(
                text,
                "{k},{},{},{},\"{}\"",
                r.step,
                u8::from(r.accepted),
                fmt_num(r.log_score),
                r.state
            );
        }
    }
    io::write_text(path, &text)
}

fn mcmc_timeline(
    a: &ClusterArgs,
    seq: &[(usize, SimilarityMatrix)],
    params: &ExpModelParams,
) -> CliResult<ClusterTimeline> {
    let defaults = ChainConfig::default();
    let cfg = ChainConfig {
        steps: a.chain.steps.unwrap_or(defaults.steps),
        burn_in: a.chain.burn_in.unwrap_or(defaults.burn_in),
        thin: a.chain.thin.unwrap_or(defaults.thin),
        seed: a.seed,
        frag_prob: a.chain.frag_prob.unwrap_or(defaults.frag_prob),
    };
    cfg.validate()?;
    let chains = a.chain.chains.unwrap_or(1);
    if chains == 0 {
        return Err(CliError::Usage("--chains must be at least 1".into()));
    }
    let Some(trace_path) = &a.chain.trace else {
        // Step k uses streams k*chains .. k*chains + chains - 1.
        return per_step(seq, |k, s| {
            run_chains_from(s, params, &cfg, k as u64 * chains, chains).map(|r| r.partition)
        });
    };
    let runs = seq
        .par_iter()
        .map(|(k, s)| {
            let target = |q: &Partition| log_posterior_unnorm(q, s, params).unwrap_or(f64::NEG_INFINITY);
            let mut trace = Vec::new();
            run_chain_with_target(s.n(), &target, &cfg, *k as u64, Some(&mut trace))
                .map(|(stats, _)| ((*k, stats.mode), (*k, trace)))
        })
        .collect::<tricluster::Result<Vec<_>>>()?;
    let (steps, traces): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    write_trace(trace_path, &traces)?;
    Ok(ClusterTimeline::new(steps)?)
}

fn cluster(a: &ClusterArgs) -> CliResult<()> {
    check_method_flags(a)?;
    let panel = io::read_panel(&a.panel)?;
    let n = panel.n_series();
    let sim = a.similarity.config();
    let m = panel.n_steps();
    let range = a.test_range.unwrap_or(StepRange { lo: m / 2 + 1, hi: m });
    let (lo, hi) = usable_steps(range, &panel, &sim)?;
    let seq = similarities(&panel, &sim, lo, hi)?;
    if let Some(dir) = &a.dump_similarity {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (k, s) in &seq {
            io::write_text(&dir.join(format!("similarity_{k}.csv")), &s.to_csv(fmt_num))?;
        }
    }
    let tl = match a.method {
        Method::ShiMalik => per_step(&seq, |_, s| shi_malik(s))?,
        Method::Spectral => {
            let (c_min, c_max) = cluster_range(&a.spectral, n);
            let gd = descent(a.seed);
            per_step(&seq, |_, s| {
                dynamic_spectral(s, c_min, c_max, &gd).map(|r| r.partition)
            })?
        }
        Method::Exponential => {
            let params = load_params(a, n)?;
            per_step(&seq, |_, s| exp_predict(s, &params))?
        }
        Method::TriangularExact => {
            let params = load_params(a, n)?;
            per_step(&seq, |_, s| exact_map(s, &params).map(|r| r.partition))?
        }
        Method::TriangularMcmc => {
            let params = load_params(a, n)?;
            mcmc_timeline(a, &seq, &params)?
        }
        Method::Hmm => {
            let params = load_params(a, n)?;
            let hmm = io::read_hmm(a.transitions.as_ref().expect("checked"), params)?;
            viterbi_decode(&hmm, &seq)?
        }
    };
    io::write_timeline(&a.out, &tl)?;
    println!(
        "clustered steps {lo}..{hi} with {}; wrote {}",
        method_name(a.method),
        a.out.display()
    );
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let truth = io::read_timeline(&a.truth)?;
    let mut csv = String::from("pred,time,exact,rand_index,adjusted_rand\n");
    for path in &a.pred {
        let pred = io::read_timeline(path)?;
        let report = if a.mask_after > 0 {
            evaluate_timeline_masked(&pred, &truth, a.mask_after)?
        } else {
            evaluate_timeline(&pred, &truth)?
        };
        println!(
            "{}: steps {} exact_match {} rand_index {} adjusted_rand {} stability {}",
            path.display(),
            report.rows.len(),
            fmt_num(report.per_step_exact_match),
            fmt_num(report.rand_index),
            fmt_num(report.adjusted_rand),
            fmt_num(report.stability)
        );
        for r in &report.rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                path.display(),
                r.time,
                u8::from(r.exact),
                fmt_num(r.rand_index),
                fmt_num(r.adjusted_rand)
            );
        }
    }
    if let Some(out) = &a.out_report {
        io::write_text(out, &csv)?;
    }
    Ok(())
}

fn weights(a: &WeightsArgs) -> CliResult<()> {
    let panel = io::read_panel(&a.panel)?;
    let (partition, at) = match (&a.partition, &a.timeline) {
        (Some(text), None) => {
            let p: Partition = text.parse()?;
            (p, a.at.unwrap_or(panel.n_steps()))
        }
        (None, Some(path)) => {
            let tl = io::read_timeline(path)?;
            let at = match a.at {
                Some(t) => t,
                None => tl
                    .steps()
                    .last()
                    .map(|(t, _)| *t)
                    .ok_or_else(|| CliError::io(path, "empty timeline"))?,
            };
            let p = tl
                .get(at)
                .cloned()
                .ok_or_else(|| CliError::io(path, format!("no partition at step {at}")))?;
            (p, at)
        }
        _ => {
            return Err(CliError::Usage(
                "give exactly one of --partition or --timeline".into(),
            ))
        }
    };
    let w = inverse_vol_weights_at(&panel, &partition, a.window, at)?;
    io::write_weights(&a.out, &w)?;
    println!("weights for {partition} at step {at}; wrote {}", a.out.display());
    Ok(())
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn clique_demo(a: &CliqueArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.graph).map_err(|e| CliError::io(&a.graph, e))?;
    let g = SimpleGraph::parse_edge_list(&text, a.vertices)?;
    let mut inst = build_reduction(&g, a.k, a.q, a.slack)?;
    let yes = decide_kclique_via_map(&mut inst)?;
    let report = map_structure_report(&inst)?;
    println!("{}", if yes { "YES" } else { "NO" });
    println!(
        "graph: {} vertices, {} edges; padding: {} vertices; k = {}",
        g.n_vertices(),
        g.n_edges(),
        inst.n_extra,
        a.k
    );
    println!("padding block complete: {}", pass(report.padding_complete));
    println!(
        "padding attached to a maximum clique: {}",
        pass(report.attached_to_max_clique)
    );
    Ok(())
}
