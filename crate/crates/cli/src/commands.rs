use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};

use cadseq::cad::{corpus_stats, emit_matrix, load_dataset, save_dataset, split_of, CadSequence, Split, TokenMatrix};
use cadseq::config::RunConfig;
use cadseq::eval::{cluster_sweep, default_ratios, perm_study, recon_report, to_f64};
use cadseq::gan::{generate_sequences, train_gan};
use cadseq::geometry::check_validity;
use cadseq::metrics::{generation_metrics, is_valid_matrix, per_length_csv};
use cadseq::nn::{epoch_log_row, EpochStats, ModelError};
use cadseq::rre::augment_dataset;
use cadseq::synth::synth_dataset;
use cadseq::{CadModel32, LatentGan32, TrainState32};

use crate::{Cli, CliError, Command, EvalArgs, TrainAeArgs};

type Records = Vec<(String, CadSequence)>;

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    CliError::Validation(msg.into()).into()
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default().finish()?,
    };
    Ok(match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    write(path, &s)
}

fn parse_split(s: &str) -> Result<Option<Split>> {
    match s {
        "train" => Ok(Some(Split::Train)),
        "validation" => Ok(Some(Split::Validation)),
        "test" => Ok(Some(Split::Test)),
        "all" => Ok(None),
        _ => Err(invalid(format!("unknown split {s:?}"))),
    }
}

fn select(records: &Records, split: Option<Split>) -> Records {
    records
        .iter()
        .filter(|(id, _)| split.is_none_or(|s| split_of(id) == s))
        .cloned()
        .collect()
}

fn non_empty(records: Records, what: &str) -> Result<Records> {
    if records.is_empty() {
        return Err(invalid(format!("the {what} split has no records")));
    }
    Ok(records)
}

fn matrices(records: &Records) -> Vec<TokenMatrix> {
    records.iter().map(|(_, s)| emit_matrix(s)).collect()
}

fn load_model(path: &Path, cfg: &RunConfig) -> Result<CadModel32> {
    let model = CadModel32::load(path).with_context(|| format!("loading {}", path.display()))?;
    if model.cfg.seq_len != cfg.model.seq_len {
        return Err(invalid(format!(
            "checkpoint sequence length {} differs from the configured {}",
            model.cfg.seq_len, cfg.model.seq_len
        )));
    }
    Ok(model)
}

fn sequence_records(items: &[(String, TokenMatrix, bool)]) -> Value {
    Value::Array(
        items
            .iter()
            .map(|(id, m, valid)| json!({"id": id, "vec": m.trimmed(), "valid": valid}))
            .collect(),
    )
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cli.out.clone();
    match &cli.command {
        Command::Synth { count, max_pairs } => synth(&cfg, out, *count, *max_pairs),
        Command::Ingest { dataset } => ingest(&cfg, out, dataset),
        Command::Augment { dataset } => {
            let records = load_dataset(dataset, cfg.model.seq_len)?;
            let aug = augment_dataset(&records, &cfg.rre);
            let path = out.unwrap_or_else(|| PathBuf::from("augmented.json"));
            save_dataset(&path, &aug)?;
            Ok(())
        }
        Command::TrainAe(args) => train_ae(cfg, out, args),
        Command::TrainGan { checkpoint, dataset } => train_gan_cmd(&cfg, out, checkpoint, dataset.as_deref()),
        Command::Encode { checkpoint, dataset } => {
            let model = load_model(checkpoint, &cfg)?;
            let records = load_dataset(dataset, cfg.model.seq_len)?;
            let zs = model.encode_batch(&matrices(&records))?;
            let v: Vec<Value> = records.iter().zip(zs).map(|((id, _), z)| json!({"id": id, "z": z})).collect();
            write_json(&out.unwrap_or_else(|| PathBuf::from("latents.json")), &v)
        }
        Command::Decode { checkpoint, latents } => decode(&cfg, out, checkpoint, latents),
        Command::Generate { checkpoint, gan, count } => {
            let model = load_model(checkpoint, &cfg)?;
            let gan = LatentGan32::load(gan)?;
            let seqs = generate_sequences(*count, &gan, &model, &cfg.geometry, cfg.seed)?;
            let items: Vec<(String, TokenMatrix, bool)> = seqs
                .into_iter()
                .enumerate()
                .map(|(i, (m, r))| (format!("gen-{i:05}"), m, r.valid))
                .collect();
            write_json(&out.unwrap_or_else(|| PathBuf::from("generated.json")), &sequence_records(&items))
        }
        Command::EvalRecon(args) => eval_recon(&cfg, out, args),
        Command::EvalGen { eval, gan, count } => {
            let model = load_model(&eval.checkpoint, &cfg)?;
            let refs = non_empty(
                select(&load_dataset(&eval.dataset, cfg.model.seq_len)?, parse_split(&eval.split)?),
                &eval.split,
            )?;
            let gan = LatentGan32::load(gan)?;
            let gen: Vec<TokenMatrix> = generate_sequences(*count, &gan, &model, &cfg.geometry, cfg.seed)?
                .into_iter()
                .map(|(m, _)| m)
                .collect();
            let block = generation_metrics(&gen, &matrices(&refs), &cfg.geometry, cfg.seed)?;
            write_json(
                &out.unwrap_or_else(|| cfg.paths.reports.join("gen_report.json")),
                &json!({ "generation": block, "count": count, "references": refs.len() }),
            )
        }
        Command::Cluster(args) => {
            let model = load_model(&args.checkpoint, &cfg)?;
            let recs = non_empty(
                select(&load_dataset(&args.dataset, cfg.model.seq_len)?, parse_split(&args.split)?),
                &args.split,
            )?;
            let z = to_f64(&model.encode_batch(&matrices(&recs))?);
            let rows = cluster_sweep(&z, &default_ratios(), cfg.seed)?;
            let mut csv = String::from("ratio,k,sc,sse\n");
            for r in rows {
                csv.push_str(&format!("{},{},{},{}\n", r.ratio, r.k, r.sc, r.sse));
            }
            write(&out.unwrap_or_else(|| cfg.paths.reports.join("cluster.csv")), &csv)
        }
        Command::PermTest(args) => {
            let model = load_model(&args.checkpoint, &cfg)?;
            let recs = select(&load_dataset(&args.dataset, cfg.model.seq_len)?, parse_split(&args.split)?);
            let seqs: Vec<CadSequence> = recs.into_iter().map(|(_, s)| s).collect();
            let rows = perm_study(&model, &seqs, cfg.seed)?;
            write_json(&out.unwrap_or_else(|| cfg.paths.reports.join("perm.json")), &rows)
        }
    }
}

fn synth(cfg: &RunConfig, out: Option<PathBuf>, count: usize, max_pairs: Option<usize>) -> Result<()> {
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let mut scfg = cfg.synth.clone();
    if let Some(m) = max_pairs {
        if m == 0 {
            return Err(invalid("max-pairs must be at least 1"));
        }
        scfg.max_pairs = m;
    }
    let records = synth_dataset(count, cfg.seed, &scfg);
    save_dataset(&out.unwrap_or_else(|| PathBuf::from("dataset.json")), &records)?;
    Ok(())
}

fn ingest(cfg: &RunConfig, out: Option<PathBuf>, dataset: &Path) -> Result<()> {
    let records = load_dataset(dataset, cfg.model.seq_len)?;
    let mut invalid_ids = Vec::new();
    for (id, s) in &records {
        let r = check_validity(s, &cfg.geometry);
        if !r.valid {
            invalid_ids.push(json!({"id": id, "rule": r.rule}));
        }
    }
    let mut counts = [0usize; 3];
    let mut assignment = serde_json::Map::new();
    for (id, _) in &records {
        let s = split_of(id);
        counts[s as usize] += 1;
        assignment.insert(id.clone(), json!(s));
    }
    let summary = json!({
        "records": records.len(),
        "valid": records.len() - invalid_ids.len(),
        "invalid": invalid_ids,
        "stats": corpus_stats(records.iter().map(|(_, s)| s)),
        "split": {"train": counts[0], "validation": counts[1], "test": counts[2]},
        "assignment": assignment,
    });
    match out {
        Some(p) => write_json(&p, &summary),
        None => {
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
    }
}

fn train_ae(mut cfg: RunConfig, out: Option<PathBuf>, args: &TrainAeArgs) -> Result<()> {
    if (args.rre_offline || args.rre_online) && !args.rre {
        return Err(invalid("--rre-offline and --rre-online require --rre"));
    }
    if args.no_contrastive {
        cfg.train.kappa = 0.0;
    }
    let dataset = args
        .dataset
        .clone()
        .or_else(|| cfg.paths.dataset.clone())
        .ok_or_else(|| invalid("no dataset given and none configured"))?;
    let records = load_dataset(&dataset, cfg.model.seq_len)?;
    let train = non_empty(select(&records, Some(Split::Train)), "train")?;
    let val = matrices(&select(&records, Some(Split::Validation)));
    let dir = out.unwrap_or_else(|| cfg.paths.checkpoints.clone());
    let ckpt = dir.join("ae.json");
    let log_path = dir.join("train_log.csv");

    let mut st = match &args.resume {
        Some(p) => {
            let mut st = TrainState32::load(p).with_context(|| format!("loading {}", p.display()))?;
            if st.model.cfg != cfg.model || st.train.kappa != cfg.train.kappa {
                return Err(invalid("resumed checkpoint conflicts with the configured model or kappa"));
            }
            st.train.epochs = cfg.train.epochs;
            st.train.max_steps = cfg.train.max_steps;
            st
        }
        None => TrainState32::new(cfg.model.clone(), cfg.train.clone(), cfg.seed)?,
    };
    let with_cont = st.train.kappa > 0.0;

    let mut data: Vec<CadSequence> = train.iter().map(|(_, s)| s.clone()).collect();
    if args.rre && args.rre_offline {
        data.extend(augment_dataset(&train, &cfg.rre).into_iter().map(|(_, s)| s));
    }
    let online = (args.rre && !args.rre_offline).then_some(&cfg.rre);

    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    if args.resume.is_none() || !log_path.exists() {
        let header = if with_cont {
            "epoch,step,l_rec,l_cont,val_acc_cmd,val_acc_param\n"
        } else {
            "epoch,step,l_rec,val_acc_cmd,val_acc_param\n"
        };
        write(&log_path, header)?;
    }
    let mut log = fs::OpenOptions::new()
        .append(true)
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    let on_epoch = |st: &TrainState32, s: &EpochStats| -> Result<(), ModelError> {
        st.save(&ckpt).map_err(|e| ModelError::Config(e.to_string()))?;
        log.write_all(epoch_log_row(s, with_cont).as_bytes())
            .map_err(|e| ModelError::Config(e.to_string()))
    };
    st.fit(&data, online, &val, on_epoch)?;
    if !ckpt.exists() {
        st.save(&ckpt)?;
    }
    Ok(())
}

fn train_gan_cmd(cfg: &RunConfig, out: Option<PathBuf>, checkpoint: &Path, dataset: Option<&Path>) -> Result<()> {
    let model = load_model(checkpoint, cfg)?;
    let dataset = dataset
        .map(Path::to_path_buf)
        .or_else(|| cfg.paths.dataset.clone())
        .ok_or_else(|| invalid("no dataset given and none configured"))?;
    let train = non_empty(select(&load_dataset(&dataset, cfg.model.seq_len)?, Some(Split::Train)), "train")?;
    let latents = model.encode_batch(&matrices(&train))?;
    let (gan, log) = train_gan(&latents, cfg.gan.clone(), cfg.seed)?;
    let dir = out.unwrap_or_else(|| cfg.paths.checkpoints.clone());
    gan.save(&dir.join("gan.json"), cfg.gan.iterations)?;
    let mut csv = String::from("iter,l_d,l_g,gp,wasserstein\n");
    for s in log {
        csv.push_str(&format!("{},{},{},{},{}\n", s.iter, s.l_d, s.l_g, s.gp, s.wasserstein));
    }
    write(&dir.join("gan_log.csv"), &csv)
}

fn decode(cfg: &RunConfig, out: Option<PathBuf>, checkpoint: &Path, latents: &Path) -> Result<()> {
    let model = load_model(checkpoint, cfg)?;
    let text = fs::read_to_string(latents).with_context(|| format!("reading {}", latents.display()))?;
    let v: Vec<Value> = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", latents.display())))?;
    let mut ids = Vec::with_capacity(v.len());
    let mut zs = Vec::with_capacity(v.len());
    for (i, item) in v.iter().enumerate() {
        let id = item.get("id").and_then(Value::as_str).map_or_else(|| format!("z-{i:05}"), str::to_string);
        let z: Vec<f32> = item
            .get("z")
            .and_then(Value::as_array)
            .and_then(|a| a.iter().map(|x| x.as_f64().map(|f| f as f32)).collect())
            .ok_or_else(|| invalid(format!("entry {i} has no numeric \"z\" array")))?;
        ids.push(id);
        zs.push(z);
    }
    let decoded = model.decode_batch(&zs).map_err(|e| match e {
        ModelError::Shape { .. } => invalid(e.to_string()),
        e => e.into(),
    })?;
    let items: Vec<(String, TokenMatrix, bool)> = ids
        .into_iter()
        .zip(decoded)
        .map(|(id, m)| {
            let ok = is_valid_matrix(&m, &cfg.geometry);
            (id, m, ok)
        })
        .collect();
    write_json(&out.unwrap_or_else(|| PathBuf::from("decoded.json")), &sequence_records(&items))
}

fn eval_recon(cfg: &RunConfig, out: Option<PathBuf>, args: &EvalArgs) -> Result<()> {
    let model = load_model(&args.checkpoint, cfg)?;
    let recs = non_empty(
        select(&load_dataset(&args.dataset, cfg.model.seq_len)?, parse_split(&args.split)?),
        &args.split,
    )?;
    let gt = matrices(&recs);
    let pred = model.reconstruct(&gt)?;
    let report = recon_report(&gt, &pred, &cfg.geometry, cfg.train.eta, cfg.seed)?;
    let dir = out.unwrap_or_else(|| cfg.paths.reports.clone());
    write_json(&dir.join("recon_report.json"), &report)?;
    write(&dir.join("per_length.csv"), &per_length_csv(&report.per_length))
}
