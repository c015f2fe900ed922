//! ONNX model loading on top of tract.
//!
//! Tensor specs come from the graph's declared inputs and outputs. Inputs are
//! exposed channels-last; a model declaring a `1×3×H×W` input is fed through
//! a transpose so callers never see channels-first data. The batch dimension
//! is pinned to 1.

use std::path::Path;

use palmcursor_core::model::{Backend, ModelError, ModelHandle};
use palmcursor_core::tensor::{Dim, NamedTensors, Tensor, TensorSpec};
use std::collections::BTreeMap;
use tract_onnx::pb;
use tract_onnx::prelude::*;

type Plan = TypedRunnableModel<TypedModel>;

struct OnnxBackend {
    plan: Plan,
    inputs: Vec<TensorSpec>,
    outputs: Vec<TensorSpec>,
    /// Input shapes as the graph wants them, one per input.
    native_inputs: Vec<Vec<usize>>,
    channels_first: Vec<bool>,
    metadata: BTreeMap<String, String>,
}

fn malformed(path: &Path, reason: impl std::fmt::Display) -> ModelError {
    ModelError::MalformedModel { path: path.display().to_string(), reason: reason.to_string() }
}

fn proto_dims(info: &pb::ValueInfoProto) -> Option<Vec<Dim>> {
    let ty = info.r#type.as_ref()?;
    let pb::type_proto::Value::TensorType(tensor) = ty.value.as_ref()?;
    let shape = tensor.shape.as_ref()?;
    Some(
        shape
            .dim
            .iter()
            .enumerate()
            .map(|(i, d)| match &d.value {
                Some(pb::tensor_shape_proto::dimension::Value::DimValue(v)) if *v > 0 => Dim::Fixed(*v as usize),
                Some(pb::tensor_shape_proto::dimension::Value::DimParam(p)) if !p.is_empty() => Dim::Symbolic(p.clone()),
                _ => Dim::Symbolic(format!("d{i}")),
            })
            .collect(),
    )
}

fn proto_is_f32(info: &pb::ValueInfoProto) -> bool {
    match info.r#type.as_ref().and_then(|t| t.value.as_ref()) {
        Some(pb::type_proto::Value::TensorType(t)) => t.elem_type == pb::tensor_proto::DataType::Float as i32,
        _ => false,
    }
}

/// Loads an ONNX model file into a [`ModelHandle`].
pub fn load_model(path: &Path) -> Result<ModelHandle, ModelError> {
    if !path.is_file() {
        return Err(ModelError::FileMissing(path.display().to_string()));
    }
    let onnx = tract_onnx::onnx();
    let proto = onnx.proto_model_for_path(path).map_err(|e| malformed(path, e))?;
    let graph = proto.graph.as_ref().ok_or_else(|| malformed(path, "no graph"))?;

    let initializers: std::collections::HashSet<&str> = graph.initializer.iter().map(|t| t.name.as_str()).collect();
    let declared_inputs: Vec<&pb::ValueInfoProto> =
        graph.input.iter().filter(|i| !initializers.contains(i.name.as_str())).collect();

    let dir = path.parent().and_then(Path::to_str);
    let parsed = onnx.parse(&proto, dir).map_err(|e| malformed(path, format!("{e:#}")))?;
    if !parsed.unresolved_inputs.is_empty() {
        return Err(malformed(path, format!("unresolved inputs {:?}", parsed.unresolved_inputs)));
    }
    let mut model = parsed.model;
    if let Some(node) = model.nodes().iter().find(|n| n.op.name().starts_with("Unimplemented(")) {
        let name = node.op.name();
        let operator = name.trim_start_matches("Unimplemented(").trim_end_matches(')').to_string();
        return Err(ModelError::UnsupportedOperator { path: path.display().to_string(), operator });
    }

    let mut inputs = Vec::new();
    let mut native_inputs = Vec::new();
    let mut channels_first = Vec::new();
    for (ix, info) in declared_inputs.iter().enumerate() {
        if !proto_is_f32(info) {
            return Err(malformed(path, format!("input `{}` is not float32", info.name)));
        }
        let mut dims = proto_dims(info).ok_or_else(|| malformed(path, format!("input `{}` has no shape", info.name)))?;
        if let Some(first) = dims.first_mut() {
            *first = Dim::Fixed(1);
        }
        let native: Vec<usize> = dims
            .iter()
            .map(|d| d.fixed())
            .collect::<Option<_>>()
            .ok_or_else(|| malformed(path, format!("input `{}` has symbolic non-batch dimensions", info.name)))?;
        let nchw = native.len() == 4 && native[1] == 3 && native[3] != 3;
        let exposed = if nchw { vec![native[0], native[2], native[3], native[1]] } else { native.clone() };
        model
            .set_input_fact(ix, f32::fact(&native).into())
            .map_err(|e| malformed(path, format!("{e:#}")))?;
        inputs.push(TensorSpec::fixed(info.name.clone(), &exposed)?);
        native_inputs.push(native);
        channels_first.push(nchw);
    }

    let typed = model
        .into_optimized()
        .map_err(|e| malformed(path, format!("{e:#}")))?;
    let mut outputs = Vec::new();
    for (ix, info) in graph.output.iter().enumerate() {
        let fact = typed.output_fact(ix).map_err(|e| malformed(path, e))?;
        if fact.datum_type != f32::datum_type() {
            return Err(malformed(path, format!("output `{}` is {:?}, expected f32", info.name, fact.datum_type)));
        }
        let dims: Vec<Dim> = fact
            .shape
            .iter()
            .map(|d| match d.to_i64() {
                Ok(v) if v > 0 => Dim::Fixed(v as usize),
                _ => Dim::Symbolic(d.to_string()),
            })
            .collect();
        outputs.push(TensorSpec::new(info.name.clone(), dims)?);
    }
    let plan = typed.into_runnable().map_err(|e| malformed(path, format!("{e:#}")))?;

    let mut metadata: BTreeMap<String, String> =
        proto.metadata_props.iter().map(|p| (p.key.clone(), p.value.clone())).collect();
    metadata.entry("model_name".into()).or_insert_with(|| {
        if graph.name.is_empty() {
            path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        } else {
            graph.name.clone()
        }
    });
    let params: usize = graph.initializer.iter().map(|t| t.dims.iter().product::<i64>().max(0) as usize).sum();
    metadata.entry("parameter_count".into()).or_insert_with(|| params.to_string());

    Ok(ModelHandle::new(OnnxBackend { plan, inputs, outputs, native_inputs, channels_first, metadata }))
}

impl Backend for OnnxBackend {
    fn inputs(&self) -> &[TensorSpec] {
        &self.inputs
    }

    fn outputs(&self) -> &[TensorSpec] {
        &self.outputs
    }

    fn metadata(&self) -> BTreeMap<String, String> {
        self.metadata.clone()
    }

    fn run(&self, inputs: &NamedTensors) -> Result<NamedTensors, ModelError> {
        let backend = |e: anyhow::Error| ModelError::Backend(format!("{e:#}"));
        let mut feed: TVec<TValue> = tvec![];
        for ((spec, native), &nchw) in self.inputs.iter().zip(&self.native_inputs).zip(&self.channels_first) {
            let t = &inputs[spec.name()];
            let data = if nchw { hwc_to_chw(t.data(), native[2], native[3]) } else { t.data().to_vec() };
            let tensor = tract_onnx::prelude::Tensor::from_shape(native, &data).map_err(backend)?;
            feed.push(tensor.into());
        }
        let results = self.plan.run(feed).map_err(backend)?;
        let mut out = NamedTensors::new();
        for (spec, value) in self.outputs.iter().zip(results) {
            let view = value.to_array_view::<f32>().map_err(backend)?;
            let shape = view.shape().to_vec();
            let data: Vec<f32> = view.iter().copied().collect();
            out.insert(spec.name().to_string(), Tensor::new(shape, data)?);
        }
        Ok(out)
    }
}

fn hwc_to_chw(data: &[f32], height: usize, width: usize) -> Vec<f32> {
    let plane = height * width;
    let mut out = vec![0.0; data.len()];
    for (i, px) in data.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * plane + i] = px[c];
        }
    }
    out
}
