pub mod backend;
pub mod calibrate;
pub mod config;
pub mod dataset;
pub mod evaluate;
pub mod models;
pub mod onnx;
pub mod pipeline;
pub mod recording;
pub mod references;
pub mod source;
pub mod synth;
pub mod telemetry;
