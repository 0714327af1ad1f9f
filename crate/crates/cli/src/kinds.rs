//! Per-seed procedures and cross-seed summaries of each experiment kind.

use serde_json::{json, Map, Value};
use tslab_core::data::WindowSample;
use tslab_core::eval::{
    collect_tokens, evaluate_few_shot, evaluate_windows, evaluate_zero_shot, token_space_stats, write_pca_csv,
    FewShotMode, TokenSpaceStats,
};
use tslab_core::init::{init_diagonal, init_random, init_random_groups};
use tslab_core::model::{ForecastModel, ParamGroup};
use tslab_core::numeric::Rng;
use tslab_core::scaling::{
    fit_params, load_observations_csv, optimal_horizon_noisy, optimal_horizon_small_model, planted_observations,
    samples_to_match,
};
use tslab_core::train::{assemble_model, pretrain_on_corpus, text_proxy_model, Assembled, TrainConfig, Variant};

use crate::error::{CliError, CliResult};
use crate::report::{MetricRow, SeedResult};
use crate::run::{log_json, metric_row, seed_result, Run};
use crate::spec::ExperimentKind;

/// Upper bound on test windows fed to the token-space statistics.
pub const TOKEN_WINDOWS: usize = 128;
/// Relative tolerance of the monotone samples-to-match curve check.
pub const CURVE_BAND: f64 = 0.05;

fn sub_seed(seed: u64, tag: &str) -> u64 {
    Rng::derive(seed, tag).next_u64()
}

pub fn run_seed(run: &mut Run, seed: u64) -> CliResult<SeedResult> {
    match run.spec.kind {
        ExperimentKind::ThreeGptComparison => three_gpt(run, seed),
        ExperimentKind::EncoderBias => encoder_bias(run, seed),
        ExperimentKind::ZeroShotSuite => zero_shot(run, seed, &[Variant::A, Variant::B, Variant::C, Variant::Di]),
        ExperimentKind::FewShotSuite => few_shot(run, seed),
        ExperimentKind::VocabAlignment => vocab_alignment(run, seed),
        ExperimentKind::FinetuneFromPretrained => finetune_from_pretrained(run, seed),
        ExperimentKind::QuantifySamples => quantify_samples(run, seed),
        ExperimentKind::LinearBaseline => zero_shot(run, seed, &[Variant::A, Variant::B, Variant::Linear]),
        ExperimentKind::ScalingFit => scaling_fit(run, seed),
    }
}

pub fn summarize(run: &mut Run, per_seed: &[SeedResult], averaged: &[MetricRow]) -> CliResult<Value> {
    match run.spec.kind {
        ExperimentKind::ThreeGptComparison => Ok(gap_summary(averaged)),
        ExperimentKind::EncoderBias => Ok(encoder_bias_summary(run, averaged)),
        ExperimentKind::ZeroShotSuite | ExperimentKind::LinearBaseline => relative_summary(run, averaged),
        ExperimentKind::FewShotSuite | ExperimentKind::FinetuneFromPretrained => Ok(Value::Null),
        ExperimentKind::VocabAlignment => Ok(vocab_summary(per_seed)),
        ExperimentKind::QuantifySamples => samples_summary(run, averaged),
        ExperimentKind::ScalingFit => Ok(scaling_summary(run, per_seed)),
    }
}

/// Assembles the requested variants on the seed's corpus. Variant A is
/// built first whenever B is requested so B can reuse its encoder/decoder.
fn assemble_set(run: &mut Run, seed: u64, variants: &[Variant], corpus: &[WindowSample]) -> CliResult<Vec<Assembled>> {
    let cfg = run.assembly(seed);
    let mut a: Option<Assembled> = None;
    if variants.iter().any(|v| matches!(v, Variant::A | Variant::B)) {
        a = Some(run.timed(format!("seed {seed}: assemble a"), |_| Ok(assemble_model(Variant::A, corpus, &cfg, None)?))?);
    }
    let mut out = Vec::new();
    for &v in variants {
        let m = match v {
            Variant::A => continue,
            Variant::B => {
                let from = a.as_ref().map(|a| &a.model);
                run.timed(format!("seed {seed}: assemble b"), |_| Ok(assemble_model(v, corpus, &cfg, from)?))?
            }
            _ => run.timed(format!("seed {seed}: assemble {}", v.name()), |_| {
                Ok(assemble_model(v, corpus, &cfg, None)?)
            })?,
        };
        out.push(m);
    }
    if variants.contains(&Variant::A) {
        out.push(a.expect("assembled above"));
    }
    out.sort_by_key(|m| variants.iter().position(|v| *v == m.variant));
    for m in &out {
        run.record_curve(seed, &format!("corpus/{}", m.variant.name()), &m.log);
        run.save_model(&m.model, seed, m.variant.name())?;
    }
    Ok(out)
}

fn assembly_details(models: &[Assembled]) -> Value {
    let mut d = Map::new();
    for m in models {
        let mut v = json!({"corpus_training": log_json(&m.log)});
        if let Some(tp) = &m.text_proxy {
            v["text_proxy"] = serde_json::to_value(tp).unwrap_or(Value::Null);
        }
        d.insert(m.variant.name().to_string(), v);
    }
    Value::Object(d)
}

fn fresh_encdec(model: &ForecastModel, seed: u64, tag: &str) {
    init_random_groups(model, sub_seed(seed, tag), &[ParamGroup::Encoder, ParamGroup::Decoder]);
}

fn three_gpt(run: &mut Run, seed: u64) -> CliResult<SeedResult> {
    let cfg = run.assembly(seed);
    let (tp, outcome) = run.timed(format!("seed {seed}: text-proxy backbone"), |_| Ok(text_proxy_model(&cfg)?))?;
    let di = ForecastModel::new(run.geo.model.clone())?;
    init_random(&di, sub_seed(seed, "three_gpt/di/init"));
    init_diagonal(&di);
    let corpus = run.corpus(seed, run.corpus_size())?;
    let ts = run.timed(format!("seed {seed}: time-series backbone"), |_| {
        Ok(assemble_model(Variant::C, &corpus, &cfg, None)?)
    })?;
    run.record_curve(seed, "corpus/ts", &ts.log);
    run.save_model(&tp, seed, "tp")?;
    run.save_model(&di, seed, "di")?;
    run.save_model(&ts.model, seed, "ts")?;

    let mut rows = Vec::new();
    let mut logs = Map::new();
    let names: Vec<String> = run.datasets.iter().map(|d| d.name.clone()).collect();
    for name in &names {
        for (label, base) in [("tp", &tp), ("di", &di), ("ts", &ts.model)] {
            let mut m = base.deep_clone()?;
            fresh_encdec(&m, seed, &format!("three_gpt/{name}/{label}/encdec"));
            let tcfg = run
                .finetune_cfg(seed, &format!("three_gpt/{name}/{label}/train"))
                .with_freeze(&[ParamGroup::Backbone]);
            let log = run.timed(format!("seed {seed}: {name}/{label}"), |r| {
                let data = r.dataset(name)?;
                let data = crate::run::Prepared {
                    name: data.name.clone(),
                    windows: data.windows.clone(),
                };
                r.fit(&mut m, &data, &tcfg, label, seed)
            })?;
            let rep = evaluate_windows(&m, &run.dataset(name)?.windows.test)?;
            rows.push(metric_row(name, label, &rep));
            logs.insert(format!("{name}/{label}"), log_json(&log));
        }
    }
    let details = json!({"text_proxy": outcome, "ts_corpus_training": log_json(&ts.log), "training": logs});
    Ok(seed_result(seed, rows, details))
}

/// `(max − min) / min` over the compared MSEs.
pub fn max_pairwise_gap(mses: &[f64]) -> f64 {
    let lo = mses.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / lo
}

fn by_dataset(averaged: &[MetricRow]) -> Vec<(String, Vec<&MetricRow>)> {
    let mut out: Vec<(String, Vec<&MetricRow>)> = Vec::new();
    for r in averaged {
        match out.iter_mut().find(|(d, _)| *d == r.dataset) {
            Some((_, v)) => v.push(r),
            None => out.push((r.dataset.clone(), vec![r])),
        }
    }
    out
}

fn gap_summary(averaged: &[MetricRow]) -> Value {
    let mut per = Map::new();
    let mut worst: f64 = 0.0;
    for (d, rows) in by_dataset(averaged) {
        let mses: Vec<f64> = rows.iter().map(|r| r.mse).collect();
        let gap = max_pairwise_gap(&mses);
        worst = worst.max(gap);
        let mut e = Map::new();
        for r in &rows {
            e.insert(r.model.clone(), json!(r.mse));
        }
        e.insert("max_pairwise_gap".into(), json!(gap));
        per.insert(d, Value::Object(e));
    }
    json!({"datasets": per, "max_pairwise_gap": worst})
}

fn encoder_bias(run: &mut Run, seed: u64) -> CliResult<SeedResult> {
    let cfg = run.assembly(seed);
    let (tp, outcome) = run.timed(format!("seed {seed}: text-proxy backbone"), |_| Ok(text_proxy_model(&cfg)?))?;
    let target = run.spec.target.clone().expect("validated");
    let sources = run
        .spec
        .sources
        .clone()
        .unwrap_or_else(|| run.datasets.iter().map(|d| d.name.clone()).collect());
    let mut rows = Vec::new();
    let mut logs = Map::new();
    for src in &sources {
        let mut m = tp.deep_clone()?;
        fresh_encdec(&m, seed, &format!("encoder_bias/{src}/encdec"));
        let tcfg = run
            .finetune_cfg(seed, &format!("encoder_bias/{src}/train"))
            .with_freeze(&[ParamGroup::Backbone]);
        let data = {
            let d = run.dataset(src)?;
            crate::run::Prepared {
                name: d.name.clone(),
                windows: d.windows.clone(),
            }
        };
        let log = run.timed(format!("seed {seed}: encoder/decoder on {src}"), |r| r.fit(&mut m, &data, &tcfg, "tp", seed))?;
        let rep = evaluate_zero_shot(&m, &run.dataset(&target)?.windows.test)?;
        rows.push(metric_row(&target, src, &rep));
        logs.insert(src.clone(), log_json(&log));
        run.save_model(&m, seed, &format!("encdec_{src}"))?;
    }
    Ok(seed_result(seed, rows, json!({"text_proxy": outcome, "training": logs})))
}

fn encoder_bias_summary(run: &Run, averaged: &[MetricRow]) -> Value {
    let best = averaged.iter().min_by(|a, b| a.mse.total_cmp(&b.mse));
    json!({
        "target": run.spec.target,
        "mse_by_source": averaged.iter().map(|r| (r.model.clone(), json!(r.mse))).collect::<Map<_, _>>(),
        "best_source": best.map(|r| r.model.clone()),
    })
}

fn with_reference(run: &Run, default: &[Variant]) -> Vec<Variant> {
    let mut v = run.spec.variants_or(default);
    if let Some(r) = run.spec.reference {
        if !v.contains(&r) {
            v.push(r);
        }
    }
    v
}

fn zero_shot(run: &mut Run, seed: u64, default: &[Variant]) -> CliResult<SeedResult> {
    let variants = with_reference(run, default);
    let corpus = run.corpus(seed, run.corpus_size())?;
    let models = assemble_set(run, seed, &variants, &corpus)?;
    let mut rows = Vec::new();
    for d in &run.datasets {
        for m in &models {
            let rep = evaluate_zero_shot(&m.model, &d.windows.test)?;
            rows.push(metric_row(&d.name, m.variant.name(), &rep));
        }
    }
    Ok(seed_result(seed, rows, assembly_details(&models)))
}

fn relative_summary(run: &mut Run, averaged: &[MetricRow]) -> CliResult<Value> {
    let reference = run.spec.reference.or(match run.spec.kind {
        ExperimentKind::LinearBaseline => Some(Variant::Linear),
        _ => None,
    });
    let Some(reference) = reference else {
        return Ok(Value::Null);
    };
    let mut per = Map::new();
    let mut plot = Vec::new();
    for (d, rows) in by_dataset(averaged) {
        let Some(base) = rows.iter().find(|r| r.model == reference.name()) else {
            continue;
        };
        let mut e = Map::new();
        for r in &rows {
            if base.mse == 0.0 {
                return Err(tslab_core::Error::UndefinedReference.into());
            }
            let rel = (r.mse - base.mse) / base.mse;
            e.insert(r.model.clone(), json!(rel));
            plot.push(vec![d.clone(), r.model.clone(), format!("{rel:?}")]);
        }
        per.insert(d, Value::Object(e));
    }
    run.write_plot("relative_error.csv", &["dataset", "model", "relative_error"], &plot)?;
    Ok(json!({"reference": reference.name(), "relative_error": per}))
}

fn few_shot(run: &mut Run, seed: u64) -> CliResult<SeedResult> {
    let variants = run.spec.variants_or(&[Variant::A, Variant::B, Variant::C]);
    let corpus = run.corpus(seed, run.corpus_size())?;
    let models = assemble_set(run, seed, &variants, &corpus)?;
    let mut rows = Vec::new();
    let mut tuned = Map::new();
    let names: Vec<String> = run.datasets.iter().map(|d| d.name.clone()).collect();
    for name in &names {
        for m in &models {
            for mode in [FewShotMode::TuneEncdec, FewShotMode::TuneBackbone] {
                let label = format!("{}/{}", m.variant.name(), mode.name());
                let cfg = run.finetune_cfg(seed, &format!("few_shot/{name}/{label}"));
                let mut model = m.model.deep_clone()?;
                let fraction = run.spec.few_shot_fraction;
                let res = run.timed(format!("seed {seed}: {name}/{label}"), |r| {
                    let w = &r.dataset(name)?.windows;
                    Ok(evaluate_few_shot(&mut model, &w.train, &w.val, &w.test, &cfg, mode, fraction)?)
                })?;
                run.record_curve(seed, &format!("{name}/{label}"), &res.log);
                rows.push(metric_row(name, &label, &res.report));
                tuned.insert(
                    format!("{name}/{label}"),
                    json!({"best_lr": res.best_lr, "n_train_windows": res.n_train_windows, "training": log_json(&res.log)}),
                );
            }
        }
    }
    Ok(seed_result(seed, rows, json!({"assembly": assembly_details(&models), "few_shot": tuned})))
}

fn rows_of(t: &tslab_core::numeric::Tensor) -> Vec<Vec<f64>> {
    let d = t.cols();
    t.to_vec().chunks(d).map(|r| r.to_vec()).collect()
}

fn stats_json(s: &TokenSpaceStats) -> Value {
    serde_json::to_value(s).unwrap_or(Value::Null)
}

fn vocab_alignment(run: &mut Run, seed: u64) -> CliResult<SeedResult> {
    let corpus = run.corpus(seed, run.corpus_size())?;
    let cfg = run.assembly(seed);
    let mut acfg = cfg.clone();
    acfg.model = cfg.model.clone().with_adapter(run.spec.adapter_prototypes, run.spec.text_proxy.vocab_size);
    let plain = run.timed(format!("seed {seed}: assemble a"), |_| Ok(assemble_model(Variant::A, &corpus, &cfg, None)?))?;
    let adapted = run.timed(format!("seed {seed}: assemble a with adapter"), |_| {
        Ok(assemble_model(Variant::A, &corpus, &acfg, None)?)
    })?;
    run.record_curve(seed, "corpus/a", &plain.log);
    run.record_curve(seed, "corpus/a_adapter", &adapted.log);
    run.save_model(&plain.model, seed, "a")?;
    run.save_model(&adapted.model, seed, "a_adapter")?;

    let adapter = adapted.model.adapter.as_ref().expect("configured above");
    let prototypes = rows_of(&adapter.prototypes()?);
    let d_model = cfg.model.d_model;
    let vocab: Vec<Vec<f64>> = adapted
        .text_proxy
        .as_ref()
        .map(|t| t.embedding.chunks(d_model).map(|r| r.to_vec()).collect())
        .unwrap_or_default();

    let mut rows = Vec::new();
    let mut stats = Map::new();
    let names: Vec<String> = run.datasets.iter().map(|d| d.name.clone()).collect();
    for name in &names {
        let test = run.dataset(name)?.windows.test.clone();
        for (label, m) in [("a", &plain.model), ("a_adapter", &adapted.model)] {
            let rep = evaluate_zero_shot(m, &test)?;
            rows.push(metric_row(name, label, &rep));
            let tokens = collect_tokens(m, &test[..test.len().min(TOKEN_WINDOWS)])?;
            let to_protos = token_space_stats(&tokens, &prototypes)?;
            let to_vocab = token_space_stats(&tokens, &vocab)?;
            let path = run.plot_path(&format!("pca_{name}_{label}_seed{seed}.csv"))?;
            write_pca_csv(&to_protos.pca2d, &path)?;
            stats.insert(
                format!("{name}/{label}"),
                json!({"prototypes": stats_json(&to_protos), "vocabulary": stats_json(&to_vocab)}),
            );
        }
    }
    let details = json!({
        "token_space": stats,
        "text_proxy": adapted.text_proxy,
        "corpus_training": {"a": log_json(&plain.log), "a_adapter": log_json(&adapted.log)},
    });
    Ok(seed_result(seed, rows, details))
}

fn mean_of(per_seed: &[SeedResult], pick: impl Fn(&Value) -> Option<f64>) -> Option<f64> {
    let v: Vec<f64> = per_seed.iter().filter_map(|s| pick(&s.details)).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn vocab_summary(per_seed: &[SeedResult]) -> Value {
    let Some(first) = per_seed.first() else {
        return Value::Null;
    };
    let keys: Vec<String> = first.details["token_space"]
        .as_object()
        .map(|o| o.keys().cloned().collect())
        .unwrap_or_default();
    let mut out = Map::new();
    for k in keys {
        let mut e = Map::new();
        for set in ["prototypes", "vocabulary"] {
            for stat in ["mean_nn_distance", "centroid_distance", "vocab_nn_distance"] {
                let m = mean_of(per_seed, |d| d["token_space"][&k][set][stat].as_f64());
                e.insert(format!("{set}_{stat}"), json!(m));
            }
        }
        out.insert(k, Value::Object(e));
    }
    let mut closer = Map::new();
    let datasets: Vec<String> = out
        .keys()
        .filter_map(|k| k.strip_suffix("/a").map(str::to_string))
        .collect();
    for d in datasets {
        let a = out[&format!("{d}/a")]["prototypes_mean_nn_distance"].as_f64();
        let aa = out.get(&format!("{d}/a_adapter")).and_then(|v| v["prototypes_mean_nn_distance"].as_f64());
        if let (Some(a), Some(aa)) = (a, aa) {
            closer.insert(d, json!(aa < a));
        }
    }
    json!({"token_space": out, "adapter_closer_to_prototypes": closer})
}

fn finetune_from_pretrained(run: &mut Run, seed: u64) -> CliResult<SeedResult> {
    let corpus = run.corpus(seed, run.corpus_size())?;
    let mut models = assemble_set(run, seed, &[Variant::A, Variant::B], &corpus)?;
    let b = models.pop().expect("b");
    let a = models.pop().expect("a");
    let mut ft = a.model.deep_clone()?;
    let tcfg = TrainConfig {
        seed: sub_seed(seed, "finetune/a/train"),
        ..run.spec.train.clone()
    }
    .with_freeze(&[ParamGroup::Encoder, ParamGroup::Decoder]);
    let log = run.timed(format!("seed {seed}: fine-tune a backbone"), |_| {
        Ok(pretrain_on_corpus(&mut ft, &corpus, &tcfg)?)
    })?;
    run.record_curve(seed, "corpus/a_finetuned", &log);
    run.save_model(&ft, seed, "a_finetuned")?;
    let mut rows = Vec::new();
    for d in &run.datasets {
        for (label, m) in [("a", &a.model), ("a_finetuned", &ft), ("b", &b.model)] {
            rows.push(metric_row(&d.name, label, &evaluate_zero_shot(m, &d.windows.test)?));
        }
    }
    let mut details = assembly_details(&[a, b]);
    details["a_finetuned"] = json!({"corpus_training": log_json(&log)});
    Ok(seed_result(seed, rows, details))
}

fn curve_label(n: usize) -> String {
    format!("b@{n}")
}

fn quantify_samples(run: &mut Run, seed: u64) -> CliResult<SeedResult> {
    let sizes = run.spec.corpus_sizes.clone();
    let largest = sizes.iter().copied().max().unwrap_or(0).max(run.corpus_size());
    let corpus = run.corpus(seed, largest)?;
    let cfg = run.assembly(seed);
    let a_corpus = &corpus[..run.corpus_size()];
    let a = run.timed(format!("seed {seed}: assemble a"), |_| Ok(assemble_model(Variant::A, a_corpus, &cfg, None)?))?;
    run.record_curve(seed, "corpus/a", &a.log);
    run.save_model(&a.model, seed, "a")?;
    let mut rows = Vec::new();
    for d in &run.datasets {
        rows.push(metric_row(&d.name, "a", &evaluate_zero_shot(&a.model, &d.windows.test)?));
    }
    let mut logs = Map::new();
    for &n in &sizes {
        let b = run.timed(format!("seed {seed}: assemble b on {n} windows"), |_| {
            Ok(assemble_model(Variant::B, &corpus[..n], &cfg, Some(&a.model))?)
        })?;
        let label = curve_label(n);
        run.record_curve(seed, &format!("corpus/{label}"), &b.log);
        run.save_model(&b.model, seed, &format!("b_{n}"))?;
        for d in &run.datasets {
            rows.push(metric_row(&d.name, &label, &evaluate_zero_shot(&b.model, &d.windows.test)?));
        }
        logs.insert(label, log_json(&b.log));
    }
    Ok(seed_result(seed, rows, json!({"a": log_json(&a.log), "b": logs})))
}

/// Whether each point is at most `(1 + band)` times the smallest earlier point.
pub fn non_increasing_within(values: &[f64], band: f64) -> bool {
    let mut best = f64::INFINITY;
    values.iter().all(|&v| {
        let ok = v <= best * (1.0 + band);
        best = best.min(v);
        ok
    })
}

fn samples_summary(run: &mut Run, averaged: &[MetricRow]) -> CliResult<Value> {
    let sizes = run.spec.corpus_sizes.clone();
    let mut per = Map::new();
    let mut plot = Vec::new();
    for (d, rows) in by_dataset(averaged) {
        let find = |m: &str| rows.iter().find(|r| r.model == m).copied();
        let Some(a) = find("a") else { continue };
        let mut curve = Vec::new();
        for &n in &sizes {
            if let Some(r) = find(&curve_label(n)) {
                curve.push((n as f64, r.mse));
                plot.push(vec![
                    d.clone(),
                    n.to_string(),
                    format!("{:?}", r.mse),
                    format!("{:?}", r.mae),
                    format!("{:?}", a.mse),
                ]);
            }
        }
        let crossing = samples_to_match(&curve, a.mse)?;
        let mses: Vec<f64> = curve.iter().map(|c| c.1).collect();
        per.insert(
            d,
            json!({
                "reference_mse": a.mse,
                "curve": curve.iter().map(|(n, m)| json!({"n_samples": n, "mse": m})).collect::<Vec<_>>(),
                "crossing_n_samples": crossing.reached.then_some(crossing.n_samples),
                "reached": crossing.reached,
                "non_increasing_within_band": non_increasing_within(&mses, CURVE_BAND),
            }),
        );
    }
    run.write_plot("samples_curve.csv", &["dataset", "n_samples", "mse", "mae", "reference_mse"], &plot)?;
    Ok(json!({"band": CURVE_BAND, "datasets": per}))
}

fn scaling_fit(run: &mut Run, seed: u64) -> CliResult<SeedResult> {
    let spec = run.spec;
    let obs = match (&spec.observations, &spec.planted) {
        (Some(p), _) => load_observations_csv(p)?,
        (None, Some(pl)) => planted_observations(&pl.law, pl.n_observations, pl.noise, seed),
        (None, None) => return Err(CliError::Report("scaling_fit has no observations".into())),
    };
    let fit = run.timed(format!("seed {seed}: fit"), |_| Ok(fit_params(&obs)?))?;
    let plot: Vec<Vec<String>> = obs
        .iter()
        .map(|o| {
            [o.n_params, o.n_data, o.horizon, o.d, o.loss, fit.law.predict(o)]
                .iter()
                .map(|v| format!("{v:?}"))
                .collect()
        })
        .collect();
    run.write_plot(
        &format!("scaling_fit_seed{seed}.csv"),
        &["n_params", "n_data", "horizon", "d", "observed", "predicted"],
        &plot,
    )?;
    Ok(seed_result(seed, Vec::new(), json!({"fit": fit})))
}

fn scaling_summary(run: &Run, per_seed: &[SeedResult]) -> Value {
    let field = |k: &str| mean_of(per_seed, |d| d["fit"]["law"][k].as_f64());
    let mut out = json!({
        "identifiable": ["k2_sq = K2^2", "k1_sq_damped_lambda = K1^2 (1 - eta) lambda0", "noise_term = sigma_M^2 S^2 d_I(S)", "alpha_z"],
        "mean_law": {
            "k2_sq": field("k2_sq"),
            "k1_sq_damped_lambda": field("k1_sq_damped_lambda"),
            "noise_term": field("noise_term"),
            "alpha_z": field("alpha_z"),
        },
        "mean_rms_log_residual": mean_of(per_seed, |d| d["fit"]["rms_log_residual"].as_f64()),
    });
    if let Some(pl) = &run.spec.planted {
        let rel = |fit: Option<f64>, truth: f64| fit.map(|f| (f - truth).abs() / truth);
        out["planted_relative_error"] = json!({
            "k2_sq": rel(field("k2_sq"), pl.law.k2_sq),
            "k1_sq_damped_lambda": rel(field("k1_sq_damped_lambda"), pl.law.k1_sq_damped_lambda),
            "noise_term": rel(field("noise_term"), pl.law.noise_term),
            "alpha_z": rel(field("alpha_z"), pl.law.alpha_z),
        });
    }
    if let Some(p) = &run.spec.horizon_params {
        let small = optimal_horizon_small_model(p, p.n).ok();
        let noisy = optimal_horizon_noisy(p, p.d_data, p.n).ok();
        out["optimal_horizon"] = json!({
            "small_model_lambert": small.map(|s| s.0),
            "small_model_approx": small.map(|s| s.1),
            "noisy": noisy,
        });
    }
    out
}
