//! Fixtures shared by the benchmarks.

use hsfuse_core::{
    generate_scene, make_prior, BlurOperator, DegradationModel, Downsampler, HsiCube, KernelSpec,
    PriorSource, SceneSpec, SpectralResponse,
};

/// A degraded synthetic scene ready for fusion.
pub struct Fixture {
    pub x: HsiCube,
    pub y: HsiCube,
    pub z: HsiCube,
    pub model: DegradationModel,
    pub prior: HsiCube,
}

/// `bands x size x size` scene, block blur of the downsampling factor, naive prior.
pub fn fixture(bands: usize, size: usize, factor: usize) -> Fixture {
    let x = generate_scene(&SceneSpec::new(bands, size, size, 5, 0)).expect("scene");
    let model = DegradationModel::new(
        BlurOperator::new(KernelSpec::UniformBlock(factor), size, size).expect("blur"),
        Downsampler::new(factor).expect("downsampler"),
        SpectralResponse::default_rgb(bands).expect("srf"),
    );
    let (y, z) = model.degrade(&x).expect("degrade");
    let prior = make_prior(&PriorSource::NaiveFusion, &y, &z, &model).expect("prior");
    Fixture {
        x,
        y,
        z,
        model,
        prior,
    }
}
