//! C ABI over the mexflow pipeline.
//!
//! Every function returns a [`MexflowStatus`]; on failure the message is
//! kept per thread and can be read with [`mexflow_last_error`]. Objects
//! cross the boundary as opaque handles that the caller releases with the
//! matching `_free` function. Images are row-major `f64` intensities in
//! `[0, 1]`; flow planes and network inputs are row-major `f64`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mexflow::apex::{spot_apex_dc, MotionSignal};
use mexflow::biwoof::{extract_biwoof, load_svm, predict_svm, BiwoofConfig, SvmModel};
use mexflow::cnn::{load_checkpoint, OffApexNet};
use mexflow::derivatives::{derive_channels, Channel};
use mexflow::eval::{compute_metrics, ConfusionMatrix};
use mexflow::flow::{FlowConfig, FlowField, FlowRegistry};
use mexflow::imaging::{GrayImage, Plane, INPUT_SIZE, NUM_CLASSES};
use mexflow::numerics::Tensor;
use mexflow::Error;

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MexflowStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Format = 5,
    NonFinite = 6,
    Diverged = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Other = 10,
}

/// Dense flow field between two frames.
pub struct MexflowFlow {
    field: FlowField,
}

/// Trained network loaded from a checkpoint directory.
pub struct MexflowNet {
    net: OffApexNet,
}

/// Linear SVM loaded from a model file.
pub struct MexflowSvm {
    model: SvmModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn root(e: &Error) -> &Error {
    match e {
        Error::AtFrame { source, .. } | Error::AtVideo { source, .. } => root(source),
        other => other,
    }
}

fn status_of(e: &Error) -> MexflowStatus {
    match root(e) {
        Error::Shape { .. } => MexflowStatus::Shape,
        Error::InvalidArgument(_) | Error::Registry(_) | Error::Manifest(_) => MexflowStatus::InvalidArgument,
        Error::NonFinite(_) => MexflowStatus::NonFinite,
        Error::Format { .. } | Error::Json(_) => MexflowStatus::Format,
        Error::Diverged(_) => MexflowStatus::Diverged,
        Error::Io { .. } => MexflowStatus::Io,
        _ => MexflowStatus::Other,
    }
}

struct Fail(MexflowStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MexflowStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MexflowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            MexflowStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            MexflowStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MexflowStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn pixels(width: usize, height: usize) -> Result<usize, Fail> {
    width
        .checked_mul(height)
        .filter(|&n| n > 0)
        .ok_or_else(|| Fail(MexflowStatus::InvalidArgument, format!("bad extent {width}x{height}")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mexflow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mexflow_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Estimates flow from `onset` to `apex` (each `width * height` pixels).
/// `config_json` is a flow config object such as `{"method":"tvl1"}`, or
/// null for the defaults.
#[no_mangle]
pub unsafe extern "C" fn mexflow_flow_estimate(
    onset: *const f64,
    apex: *const f64,
    width: usize,
    height: usize,
    config_json: *const c_char,
    out: *mut *mut MexflowFlow,
) -> MexflowStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let n = pixels(width, height)?;
        let a = GrayImage::new(width, height, slice(onset, n, "onset")?.to_vec())?;
        let b = GrayImage::new(width, height, slice(apex, n, "apex")?.to_vec())?;
        let config: FlowConfig = if config_json.is_null() {
            FlowConfig::default()
        } else {
            serde_json::from_str(text(config_json, "config_json")?).map_err(Error::from)?
        };
        let field = FlowRegistry::new().estimate(&a, &b, &config)?;
        *out = Box::into_raw(Box::new(MexflowFlow { field }));
        Ok(())
    })
}

/// Wraps caller-provided `p` and `q` planes as a flow handle.
#[no_mangle]
pub unsafe extern "C" fn mexflow_flow_from_planes(
    p: *const f64,
    q: *const f64,
    width: usize,
    height: usize,
    out: *mut *mut MexflowFlow,
) -> MexflowStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let n = pixels(width, height)?;
        let field = FlowField::from_planes(
            Plane::new(width, height, slice(p, n, "p")?.to_vec())?,
            Plane::new(width, height, slice(q, n, "q")?.to_vec())?,
        )?;
        *out = Box::into_raw(Box::new(MexflowFlow { field }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mexflow_flow_size(
    flow: *const MexflowFlow,
    width: *mut usize,
    height: *mut usize,
) -> MexflowStatus {
    guard(|| {
        let f = flow.as_ref().ok_or_else(|| null("flow"))?;
        *out_ptr(width, "width")? = f.field.width();
        *out_ptr(height, "height")? = f.field.height();
        Ok(())
    })
}

/// Copies one derived channel (`p`, `q`, `rho`, `theta`, `eps_mag`,
/// `eps_xx`, `eps_yy`, `eps_xy`, `eps_yx`) into `out`, which must hold
/// `width * height` values.
#[no_mangle]
pub unsafe extern "C" fn mexflow_flow_channel(
    flow: *const MexflowFlow,
    channel: *const c_char,
    out: *mut f64,
    out_len: usize,
) -> MexflowStatus {
    guard(|| {
        let f = flow.as_ref().ok_or_else(|| null("flow"))?;
        let ch = Channel::from_name(text(channel, "channel")?)?;
        let n = f.field.width() * f.field.height();
        if out_len < n {
            return Err(Fail(
                MexflowStatus::BufferTooSmall,
                format!("channel needs {n} values, buffer holds {out_len}"),
            ));
        }
        let plane = match ch {
            Channel::P => f.field.p.clone(),
            Channel::Q => f.field.q.clone(),
            _ => derive_channels(&f.field)?.get(ch).clone(),
        };
        slice_mut(out, n, "out")?.copy_from_slice(&plane.data);
        Ok(())
    })
}

/// Bi-WOOF descriptor of the flow. Writes the feature length to `out_len`;
/// the values are written only if `capacity` suffices.
#[no_mangle]
pub unsafe extern "C" fn mexflow_flow_biwoof(
    flow: *const MexflowFlow,
    blocks_per_side: usize,
    orientation_bins: usize,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> MexflowStatus {
    guard(|| {
        let f = flow.as_ref().ok_or_else(|| null("flow"))?;
        let out_len = out_ptr(out_len, "out_len")?;
        let cfg = BiwoofConfig::new(blocks_per_side, orientation_bins);
        cfg.validate()?;
        let features = extract_biwoof(&derive_channels(&f.field)?, &cfg)?.values;
        *out_len = features.len();
        if capacity < features.len() {
            return Err(Fail(
                MexflowStatus::BufferTooSmall,
                format!("descriptor needs {} values, buffer holds {capacity}", features.len()),
            ));
        }
        slice_mut(out, features.len(), "out")?.copy_from_slice(&features);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mexflow_flow_free(flow: *mut MexflowFlow) {
    if !flow.is_null() {
        drop(Box::from_raw(flow));
    }
}

/// Divide & Conquer apex index of a motion signal.
#[no_mangle]
pub unsafe extern "C" fn mexflow_spot_apex(signal: *const f64, len: usize, out_index: *mut usize) -> MexflowStatus {
    guard(|| {
        let out = out_ptr(out_index, "out_index")?;
        let values = slice(signal, len, "signal")?.to_vec();
        *out = spot_apex_dc(&MotionSignal::new(values))?.apex_index;
        Ok(())
    })
}

/// Accuracy and macro-F1 of a 3×3 confusion matrix given row-major
/// (rows true class, columns predicted class).
#[no_mangle]
pub unsafe extern "C" fn mexflow_metrics(
    counts: *const u64,
    out_accuracy: *mut f64,
    out_macro_f1: *mut f64,
) -> MexflowStatus {
    guard(|| {
        let c = slice(counts, NUM_CLASSES * NUM_CLASSES, "counts")?;
        let mut cm = ConfusionMatrix::default();
        for (i, row) in cm.counts.iter_mut().enumerate() {
            row.copy_from_slice(&c[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]);
        }
        let m = compute_metrics(&cm)?;
        *out_ptr(out_accuracy, "out_accuracy")? = m.accuracy;
        *out_ptr(out_macro_f1, "out_macro_f1")? = m.macro_f1;
        Ok(())
    })
}

/// Loads a network checkpoint directory written by `train-cnn`.
#[no_mangle]
pub unsafe extern "C" fn mexflow_net_load(dir: *const c_char, out: *mut *mut MexflowNet) -> MexflowStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let net = load_checkpoint(Path::new(text(dir, "dir")?))?;
        *out = Box::into_raw(Box::new(MexflowNet { net }));
        Ok(())
    })
}

/// Number of input streams the network expects.
#[no_mangle]
pub unsafe extern "C" fn mexflow_net_streams(net: *const MexflowNet, out: *mut usize) -> MexflowStatus {
    guard(|| {
        let n = net.as_ref().ok_or_else(|| null("net"))?;
        *out_ptr(out, "out")? = n.net.spec.streams();
        Ok(())
    })
}

/// Classifies one sample. `inputs` holds the streams back to back, each
/// 28×28 values already scaled to [−1, 1]. `out_logits` may be null or
/// hold 3 values.
#[no_mangle]
pub unsafe extern "C" fn mexflow_net_predict(
    net: *const MexflowNet,
    inputs: *const f64,
    len: usize,
    out_class: *mut c_int,
    out_logits: *mut f64,
) -> MexflowStatus {
    guard(|| {
        let n = net.as_ref().ok_or_else(|| null("net"))?;
        let per = INPUT_SIZE * INPUT_SIZE;
        let streams = n.net.spec.streams();
        if len != streams * per {
            return Err(Error::Shape {
                context: "network inputs".into(),
                expected: vec![streams * per],
                got: vec![len],
            }
            .into());
        }
        let data = slice(inputs, len, "inputs")?;
        let tensors = data
            .chunks(per)
            .map(|c| Tensor::new(vec![INPUT_SIZE, INPUT_SIZE, 1], c.to_vec()))
            .collect::<mexflow::Result<Vec<_>>>()?;
        let (logits, _) = n.net.forward(&tensors)?;
        *out_ptr(out_class, "out_class")? = mexflow::cnn::argmax(&logits) as c_int;
        if !out_logits.is_null() {
            slice_mut(out_logits, NUM_CLASSES, "out_logits")?.copy_from_slice(&logits);
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mexflow_net_free(net: *mut MexflowNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Loads an SVM model file written by `train-svm`.
#[no_mangle]
pub unsafe extern "C" fn mexflow_svm_load(path: *const c_char, out: *mut *mut MexflowSvm) -> MexflowStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let model = load_svm(Path::new(text(path, "path")?))?;
        *out = Box::into_raw(Box::new(MexflowSvm { model }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mexflow_svm_predict(
    svm: *const MexflowSvm,
    feature: *const f64,
    len: usize,
    out_class: *mut c_int,
) -> MexflowStatus {
    guard(|| {
        let s = svm.as_ref().ok_or_else(|| null("svm"))?;
        let (class, _) = predict_svm(&s.model, slice(feature, len, "feature")?)?;
        *out_ptr(out_class, "out_class")? = class as c_int;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mexflow_svm_free(svm: *mut MexflowSvm) {
    if !svm.is_null() {
        drop(Box::from_raw(svm));
    }
}

/// Runs the command-line front end in-process with `argv[0..argc]`
/// (program name first) and returns its exit code.
#[no_mangle]
pub unsafe extern "C" fn mexflow_cli(argc: c_int, argv: *const *const c_char) -> c_int {
    let mut args = Vec::new();
    match (|| -> Result<(), Fail> {
        for &p in slice(argv, usize::try_from(argc).unwrap_or(0), "argv")? {
            args.push(text(p, "argv entry")?.to_string());
        }
        Ok(())
    })() {
        Ok(()) => catch_unwind(|| mexflow::cli::dispatch(args)).unwrap_or(1),
        Err(Fail(_, msg)) => {
            set_error(msg);
            2
        }
    }
}
