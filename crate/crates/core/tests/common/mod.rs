#![allow(dead_code)]

use std::sync::OnceLock;

use pap_core::diffusion::{generate_dataset, train_toy, ScheduleConfig, ToyDataset, ToyDatasetSpec, ToyModel, TrainConfig};
use pap_core::Rng;

pub struct Trained {
    pub model: ToyModel,
    pub dataset: ToyDataset,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// The default toy model, trained once per test binary.
pub fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let dataset = generate_dataset(&ToyDatasetSpec::default()).expect("dataset");
        let report = train_toy(&dataset, ScheduleConfig::default(), &TrainConfig::default(), &Rng::new(0)).expect("training");
        Trained {
            model: report.model,
            dataset,
            initial_loss: report.initial_loss,
            final_loss: report.final_loss,
        }
    })
}
