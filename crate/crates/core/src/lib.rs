//! Gait identification from dense motion: tracklets described by
//! divergence/curl/shear kinematics, aggregated into pyramidal Fisher Vectors
//! over person tracks and classified by one-vs-all linear classifiers.

pub mod classify;
pub mod encode;
pub mod error;
pub mod flow;
pub mod harness;
pub mod imgproc;
pub mod media;
pub mod persons;
pub mod scalar;
pub mod tracklets;

pub use error::{PfmError, Result};
pub use scalar::Real;

macro_rules! precision_aliases {
    ($t:ty) => {
        pub type Frame = crate::media::Frame<$t>;
        pub type FrameSequence = crate::media::FrameSequence<$t>;
        pub type FlowField = crate::flow::FlowField<$t>;
        pub type KinematicMaps = crate::flow::KinematicMaps<$t>;
        pub type Tracklet = crate::tracklets::Tracklet<$t>;
        pub type DcsDescriptor = crate::tracklets::DcsDescriptor<$t>;
        pub type BoundingBox = crate::persons::BoundingBox<$t>;
        pub type PersonTrack = crate::persons::PersonTrack<$t>;
        pub type GmmModel = crate::encode::GmmModel<$t>;
        pub type PcaModel = crate::encode::PcaModel<$t>;
        pub type PfmDescriptor = crate::encode::PfmDescriptor<$t>;
        pub type OvaModel = crate::classify::OvaModel<$t>;
        pub type ModelBundle = crate::harness::ModelBundle<$t>;
    };
}

/// Double-precision instantiations.
pub mod double {
    precision_aliases!(f64);
}

/// Single-precision instantiations.
pub mod single {
    precision_aliases!(f32);
}
