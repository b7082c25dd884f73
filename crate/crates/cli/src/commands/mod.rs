pub mod bounds;
pub mod estimate;
pub mod evaluate;
pub mod plot;
pub mod protect;
pub mod sample;
pub mod train;

pub use bounds::VerifyArgs;
pub use estimate::EstimateArgs;
pub use evaluate::EvaluateArgs;
pub use plot::PlotArgs;
pub use protect::ProtectArgs;
pub use sample::SampleArgs;
pub use train::TrainArgs;

pub(crate) fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
