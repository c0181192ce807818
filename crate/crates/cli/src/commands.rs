//! The four subcommands. Each builds every output in memory first and only
//! then touches the filesystem, so a failing run leaves nothing behind.

use std::path::Path;

use qdoe::csvio;
use qdoe::designs::Scheme;
use qdoe::estimators::{self, QuantizerMode, ReplicateSettings, Replication};
use qdoe::hsic;
use qdoe::inputs::{InputModel, Prepared};
use qdoe::models::BoundModel;
use qdoe::quantizer::{self, CandidatePool};
use serde::Serialize;

use crate::config::{self, ExperimentConfig};
use crate::CliError;

pub type OutputFile = (String, Vec<u8>);

fn metadata(cmd: &str, cfg: &ExperimentConfig) -> Vec<String> {
    vec![format!("qdoe {cmd}"), format!("config_sha256={}", cfg.hash()), format!("seed={}", cfg.seed)]
}

pub fn write_all(dir: &Path, files: &[OutputFile]) -> Result<(), CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(io(&path))?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn bound_model(cfg: &ExperimentConfig, inputs: &InputModel) -> Result<BoundModel, CliError> {
    let model = cfg.model.as_ref().ok_or_else(|| CliError::Config("model: this command needs a model".into()))?;
    Ok(model.bind(inputs.columns())?)
}

fn grid(cfg: &ExperimentConfig) -> Vec<(Scheme, usize)> {
    cfg.schemes().into_iter().flat_map(|s| cfg.sizes().into_iter().map(move |n| (s, n))).collect()
}

fn rq_distortion(prepared: &Prepared) -> Option<f64> {
    let f = prepared.fitted();
    (!f.is_empty()).then(|| f.iter().map(|x| x.quantizer.distortion()).sum())
}

pub fn sample(cfg: &ExperimentConfig, base: &Path) -> Result<Vec<OutputFile>, CliError> {
    let inputs = cfg.input_model(base)?;
    let mut files = Vec::new();
    for (scheme, n) in grid(cfg) {
        let mut rng = estimators::repetition_rng(cfg.seed);
        let prepared = inputs.prepare(scheme, n, &cfg.sampling(), &mut rng)?;
        let design = inputs.design_from(&prepared, &mut rng)?.with_seed(cfg.seed);
        let mut meta = metadata("sample", cfg);
        meta.push(format!("scheme={scheme} n={n}"));
        let distortion = rq_distortion(&prepared);
        if let Some(d) = distortion {
            meta.push(format!("distortion={}", csvio::fmt_f64(d)));
        }
        let mut buf = Vec::new();
        design.write_csv(&mut buf, &meta)?;
        match distortion {
            Some(d) => println!("{scheme}\tN={n}\tdistortion={d:.6e}"),
            None => println!("{scheme}\tN={n}"),
        }
        files.push((format!("design_{scheme}_n{n}.csv"), buf));
    }
    Ok(files)
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    command: &'static str,
    config_sha256: String,
    seed: u64,
    model: &'a str,
    mode: QuantizerMode,
    results: Vec<EstimateEntry>,
}

#[derive(Serialize)]
struct EstimateEntry {
    scheme: Scheme,
    n: usize,
    #[serde(flatten)]
    summary: estimators::Summary,
}

pub fn estimate(cfg: &ExperimentConfig, base: &Path) -> Result<Vec<OutputFile>, CliError> {
    let inputs = cfg.input_model(base)?;
    let f = bound_model(cfg, &inputs)?;
    let mode = if cfg.shared_quantizer { QuantizerMode::Shared } else { QuantizerMode::Refit };
    let runs: Vec<Replication> = grid(cfg)
        .into_iter()
        .map(|(scheme, n)| {
            let settings = ReplicateSettings {
                scheme,
                n,
                repetitions: cfg.repetitions,
                base_seed: cfg.seed,
                sampling: cfg.sampling(),
                mode,
            };
            log::info!("estimate {scheme} N={n}: {} repetitions", cfg.repetitions);
            let r = estimators::replicate(&inputs, &f, &settings)?;
            println!(
                "{scheme}\tN={n}\tmean={:.6}\tvar={:.4e}\tp025={:.6}\tp975={:.6}",
                r.summary.mean, r.summary.variance, r.summary.p025, r.summary.p975
            );
            Ok(r)
        })
        .collect::<Result<_, CliError>>()?;

    let mut csv = Vec::new();
    csvio::write_metadata(&mut csv, &metadata("estimate", cfg))?;
    let mut header = true;
    for r in &runs {
        let mut part = Vec::new();
        r.write_csv(&mut part, &[])?;
        // one header for the whole sweep
        let text = String::from_utf8(part).expect("csv is utf-8");
        let body = if header { text.as_str() } else { text.split_once('\n').map_or("", |(_, b)| b) };
        csv.extend_from_slice(body.as_bytes());
        header = false;
    }
    let report = EstimateReport {
        command: "estimate",
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        model: f.model().name(),
        mode,
        results: runs.iter().map(|r| EstimateEntry { scheme: r.scheme, n: r.n, summary: r.summary }).collect(),
    };
    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    Ok(vec![("estimate_repetitions.csv".into(), csv), ("estimate_summary.json".into(), json)])
}

pub fn hsic(cfg: &ExperimentConfig, base: &Path) -> Result<Vec<OutputFile>, CliError> {
    let inputs = cfg.input_model(base)?;
    let f = bound_model(cfg, &inputs)?;
    let groups = cfg.groups(&inputs)?;
    let settings = cfg.test_settings();
    let mut files = Vec::new();
    for (scheme, n) in grid(cfg) {
        let mut rng = estimators::repetition_rng(cfg.seed);
        let design = inputs.design(scheme, n, &cfg.sampling(), &mut rng)?;
        let y = estimators::evaluate(&design, &f)?;
        // permutations on a stream of their own
        let mut test_rng = estimators::repetition_rng(cfg.seed);
        test_rng.set_stream(2);
        let rows = hsic::screen(&design, &y, &groups, &cfg.output_kernel, &settings, &mut test_rng)?;
        for r in &rows {
            println!("{scheme}\tN={n}\t{}\thsic={:.4e}\tp={:.4}\t{}", r.input, r.hsic, r.p_value, r.decision());
        }
        let mut meta = metadata("hsic", cfg);
        meta.push(format!(
            "scheme={scheme} n={n} permutations={} alpha={}",
            settings.permutations,
            csvio::fmt_f64(settings.alpha)
        ));
        let mut buf = Vec::new();
        hsic::write_screen_csv(&mut buf, &rows, &meta)?;
        files.push((format!("hsic_{scheme}_n{n}.csv"), buf));
    }
    Ok(files)
}

pub fn quantize(cfg: &ExperimentConfig, base: &Path) -> Result<Vec<OutputFile>, CliError> {
    let mut rng = estimators::repetition_rng(cfg.seed);
    let mut files = Vec::new();
    let pool = match &cfg.pool_csv {
        Some(p) => config::read_pool(&base.join(p))?.1,
        None => {
            let inputs = cfg.input_model(base)?;
            let pool = CandidatePool::new(inputs.draw(cfg.pool_size, &mut rng))?;
            let mut buf = Vec::new();
            csvio::write_metadata(&mut buf, &metadata("quantize", cfg))?;
            buf.extend_from_slice(format!("{}\n", inputs.columns().join(",")).as_bytes());
            for row in pool.points().rows() {
                csvio::write_row(&mut buf, row)?;
            }
            files.push(("pool.csv".to_string(), buf));
            pool
        }
    };
    for n in cfg.sizes() {
        let q = quantizer::lloyd(&pool, n, &mut rng, &cfg.lloyd)?;
        println!(
            "N={n}\tdistortion={:.6e}\titerations={}\tconverged={}\trestarts={}",
            q.distortion(),
            q.iterations(),
            q.converged(),
            q.restarts()
        );
        let mut meta = metadata("quantize", cfg);
        meta.push(format!("iterations={} converged={}", q.iterations(), q.converged()));
        let mut buf = Vec::new();
        q.write_csv(&mut buf, &meta)?;
        files.push((format!("quantizer_n{n}.csv"), buf));
    }
    Ok(files)
}
