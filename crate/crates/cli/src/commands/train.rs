use clap::Args;
use pap_core::diffusion::{generate_dataset, train_toy};
use pap_core::eval::generate_subject;
use pap_core::{Image, Rng, Tensor};
use serde::Serialize;

use super::set;
use crate::error::CliResult;
use crate::io::{save_vector, write_json, write_png};
use crate::manifest::Outputs;
use crate::Common;

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Dataset size.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Photos in the exported subject set.
    #[arg(long)]
    pub photos: Option<usize>,
}

#[derive(Serialize)]
struct TrainRecord {
    initial_loss: f64,
    final_loss: f64,
    epoch_losses: Vec<f64>,
}

pub fn run(a: TrainArgs, env_seed: Option<&str>) -> CliResult<()> {
    let (mut cfg, out) = a.common.resolve(env_seed)?;
    set(&mut cfg.model.train.epochs, a.epochs);
    set(&mut cfg.model.train.lr, a.lr);
    set(&mut cfg.model.train.hidden, a.hidden);
    set(&mut cfg.dataset.toy.count, a.count);
    set(&mut cfg.dataset.subject.photos, a.photos);
    cfg.validate()?;

    let rng = Rng::new(cfg.seeds.base);
    let dataset = generate_dataset(&cfg.dataset.toy)?;
    let report = train_toy(&dataset, cfg.model.schedule, &cfg.model.train, &rng.child("train"))?;
    let subject = generate_subject(&cfg.dataset.subject, &rng.child("subject"))?;

    let mut o = Outputs::new(out)?;
    report.model.save(o.dir.join("model"), cfg.seeds.base)?;
    o.dir_files("model")?;
    let (images, embeddings) = dataset.to_tensors()?;
    images.write(o.file("dataset/images.papt")?)?;
    embeddings.write(o.file("dataset/embeddings.papt")?)?;
    Image::batch_to_tensor(&subject.images)?.write(o.file("subject/images.papt")?)?;
    save_vector(&o.file("subject/embedding.papt")?, &subject.embedding)?;
    Tensor::from_f64(vec![subject.attributes.len()], subject.attributes.clone())?
        .write(o.file("subject/attributes.papt")?)?;
    for (i, img) in subject.images.iter().enumerate() {
        write_png(&o.file(&format!("subject/preview/photo_{i:03}.png"))?, img)?;
    }
    write_json(
        &o.file("train.json")?,
        &TrainRecord {
            initial_loss: report.initial_loss,
            final_loss: report.final_loss,
            epoch_losses: report.epoch_losses,
        },
    )?;
    println!(
        "trained {} epochs: loss {:.4} -> {:.4}",
        cfg.model.train.epochs, report.initial_loss, report.final_loss
    );
    o.finish("train-toy", &cfg)?;
    Ok(())
}
