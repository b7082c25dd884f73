use super::model::ToyModel;
use crate::error::Result;
use crate::image::Image;
use crate::rng::Rng;

/// Ancestral DDPM sampling conditioned on `c`.
///
/// `x_{t-1} = (x_t - (1 - a_t) / sqrt(1 - abar_t) * eps_hat) / sqrt(a_t) + sigma_t z`,
/// with no noise on the final step. The output is clamped to [0, 1] once, at
/// the end.
pub fn ddpm_sample(model: &ToyModel, c: &[f64], rng: &mut Rng) -> Result<Image> {
    let dims = *model.dims();
    let sched = model.schedule();
    let mut x = rng.gaussian_vec(dims.pixels());
    for t in (1..=sched.steps()).rev() {
        let eps_hat = model.predict(&x, t, c)?;
        let a = sched.alpha(t)?;
        let coef = (1.0 - a) / (1.0 - sched.alpha_bar(t)?).sqrt();
        let inv = 1.0 / a.sqrt();
        let sigma = sched.sigma(t)?;
        for (xi, e) in x.iter_mut().zip(&eps_hat) {
            *xi = inv * (*xi - coef * e);
        }
        if t > 1 {
            for xi in x.iter_mut() {
                *xi += sigma * rng.gaussian();
            }
        }
    }
    let mut img = Image::new(dims.height, dims.width, x)?;
    img.clamp_unit();
    Ok(img)
}
