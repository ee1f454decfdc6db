//! C ABI for the codemix classifier.
//!
//! The surface is deliberately small: open a checkpoint into an opaque
//! handle, ask it about its labels, clean text, predict probabilities, and
//! close it. Every fallible call returns a [`CmxStatus`]; the most recent
//! failure message is readable via `cmx_last_error` on the same thread.
//!
//! Strings returned as `*mut c_char` are owned by the caller and must be
//! released with `cmx_string_free`. The header is generated into
//! `include/codemix.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use codemix::model::Model;
use codemix::textprep::clean_text;
use codemix::training::{load_checkpoint, Checkpoint};
use codemix::Error;

/// Status codes mirroring the CLI exit codes (2 config/schema, 3 data,
/// 4 numeric), plus FFI-boundary failures.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmxStatus {
    CmxOk = 0,
    CmxErrConfig = 2,
    CmxErrData = 3,
    CmxErrNumeric = 4,
    CmxErrNullArgument = 5,
    CmxErrInvalidUtf8 = 6,
    CmxErrBufferTooSmall = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> CmxStatus {
    match err.exit_code() {
        2 => CmxStatus::CmxErrConfig,
        3 => CmxStatus::CmxErrData,
        _ => CmxStatus::CmxErrNumeric,
    }
}

/// An opened classifier: the checkpoint plus a ready-to-run model.
pub struct CmxClassifier {
    checkpoint: Checkpoint,
    model: Model,
    max_seq_len: usize,
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn cmx_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn cmx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Open a checkpoint file and hand back an owned classifier handle.
///
/// # Safety
///
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cmx_open(path: *const c_char, out: *mut *mut CmxClassifier) -> CmxStatus {
    if path.is_null() || out.is_null() {
        set_error("cmx_open: null argument");
        return CmxStatus::CmxErrNullArgument;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("cmx_open: path is not valid UTF-8");
            return CmxStatus::CmxErrInvalidUtf8;
        }
    };
    match open_classifier(Path::new(path)) {
        Ok(handle) => {
            *out = Box::into_raw(Box::new(handle));
            CmxStatus::CmxOk
        }
        Err(err) => {
            set_error(&err.to_string());
            *out = ptr::null_mut();
            status_of(&err)
        }
    }
}

fn open_classifier(path: &Path) -> Result<CmxClassifier, Error> {
    let checkpoint = load_checkpoint(path)?;
    let model = Model::from_parts(checkpoint.model.clone(), checkpoint.params.clone())?;
    let max_seq_len = checkpoint
        .model
        .max_seq_len
        .min(checkpoint.train.max_seq_len);
    Ok(CmxClassifier {
        checkpoint,
        model,
        max_seq_len,
    })
}

/// Release a handle from `cmx_open`. A null handle is a no-op.
///
/// # Safety
///
/// `handle` must come from `cmx_open` and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cmx_close(handle: *mut CmxClassifier) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of classes the classifier predicts; 0 on a null handle.
///
/// # Safety
///
/// `handle` must be a live handle from `cmx_open` (or null).
#[no_mangle]
pub unsafe extern "C" fn cmx_num_classes(handle: *const CmxClassifier) -> usize {
    match handle.as_ref() {
        Some(h) => h.checkpoint.label_names.len(),
        None => 0,
    }
}

/// Name of class `index` as a caller-owned string (free with
/// `cmx_string_free`); null if the handle is null or the index is out of
/// range.
///
/// # Safety
///
/// `handle` must be a live handle from `cmx_open` (or null).
#[no_mangle]
pub unsafe extern "C" fn cmx_label_name(handle: *const CmxClassifier, index: usize) -> *mut c_char {
    let Some(h) = handle.as_ref() else {
        set_error("cmx_label_name: null handle");
        return ptr::null_mut();
    };
    match h.checkpoint.label_names.get(index) {
        Some(name) => CString::new(name.as_str())
            .map(CString::into_raw)
            .unwrap_or(ptr::null_mut()),
        None => {
            set_error("cmx_label_name: index out of range");
            ptr::null_mut()
        }
    }
}

/// Clean raw UTF-8 text with the checkpoint's stored rules. Returns a
/// caller-owned string (free with `cmx_string_free`), or null on error.
///
/// # Safety
///
/// `handle` must be a live handle and `text` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cmx_clean_text(
    handle: *const CmxClassifier,
    text: *const c_char,
) -> *mut c_char {
    let Some(h) = handle.as_ref() else {
        set_error("cmx_clean_text: null handle");
        return ptr::null_mut();
    };
    if text.is_null() {
        set_error("cmx_clean_text: null text");
        return ptr::null_mut();
    }
    let Ok(text) = CStr::from_ptr(text).to_str() else {
        set_error("cmx_clean_text: text is not valid UTF-8");
        return ptr::null_mut();
    };
    let cleaned = clean_text(text, &h.checkpoint.clean_rules);
    CString::new(cleaned)
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Classify one raw text. Cleans it with the stored rules, tokenizes, runs
/// the model, and writes the class probabilities into `probs_out` (which
/// must hold `cmx_num_classes` values). The winning class index lands in
/// `pred_out`. Probabilities sum to 1.
///
/// # Safety
///
/// `handle` must be a live handle, `text` a valid NUL-terminated string,
/// and `probs_out`/`pred_out` valid for `probs_len` doubles / one usize.
#[no_mangle]
pub unsafe extern "C" fn cmx_predict(
    handle: *const CmxClassifier,
    text: *const c_char,
    probs_out: *mut f64,
    probs_len: usize,
    pred_out: *mut usize,
) -> CmxStatus {
    let Some(h) = handle.as_ref() else {
        set_error("cmx_predict: null handle");
        return CmxStatus::CmxErrNullArgument;
    };
    if text.is_null() || probs_out.is_null() || pred_out.is_null() {
        set_error("cmx_predict: null argument");
        return CmxStatus::CmxErrNullArgument;
    }
    let Ok(text) = CStr::from_ptr(text).to_str() else {
        set_error("cmx_predict: text is not valid UTF-8");
        return CmxStatus::CmxErrInvalidUtf8;
    };
    let n_classes = h.checkpoint.label_names.len();
    if probs_len < n_classes {
        set_error("cmx_predict: probability buffer too small");
        return CmxStatus::CmxErrBufferTooSmall;
    }

    let cleaned = clean_text(text, &h.checkpoint.clean_rules);
    let result = codemix::textprep::encode_batch(&[cleaned], &h.checkpoint.vocab, h.max_seq_len)
        .and_then(|batch| h.model.predict(&batch));
    match result {
        Ok((preds, probs)) => {
            let row = probs.row(0);
            std::ptr::copy_nonoverlapping(row.as_ptr(), probs_out, n_classes);
            *pred_out = preds[0];
            CmxStatus::CmxOk
        }
        Err(err) => {
            set_error(&err.to_string());
            status_of(&err)
        }
    }
}

/// Release a string returned by this library. A null pointer is a no-op.
///
/// # Safety
///
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cmx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    use codemix::dataset::{LabeledCorpus, LabeledExample};
    use codemix::model::ModelConfig;
    use codemix::textprep::{build_vocab, CleanRules};
    use codemix::training::{save_checkpoint, train, TrainConfig};

    fn trained_checkpoint_file(dir: &Path) -> std::path::PathBuf {
        let mut corpus = LabeledCorpus::new(vec!["NOT".into(), "HOF".into()]);
        for i in 0..16 {
            let label = i % 2;
            let text = if label == 1 {
                "bad1 good1"
            } else {
                "good1 good2"
            };
            corpus
                .push(LabeledExample {
                    id: i.to_string(),
                    text: text.into(),
                    label,
                })
                .unwrap();
        }
        let texts: Vec<&str> = corpus.examples().iter().map(|e| e.text.as_str()).collect();
        let vocab = build_vocab(&texts, 100, 1);
        let mcfg = ModelConfig {
            vocab_size: vocab.len(),
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            max_seq_len: 16,
            ..ModelConfig::desk_scale(vocab.len(), 2)
        };
        let tcfg = TrainConfig {
            epochs: 5,
            lr: 1e-3,
            ..TrainConfig::default()
        };
        let out = train(&mcfg, &tcfg, &vocab, &CleanRules::default(), &corpus, None).unwrap();
        let path = dir.join("model.cmcx");
        save_checkpoint(&out.checkpoint, &path).unwrap();
        path
    }

    fn open_handle(path: &Path) -> *mut CmxClassifier {
        let c_path = CString::new(path.to_str().unwrap()).unwrap();
        let mut handle: *mut CmxClassifier = ptr::null_mut();
        let status = unsafe { cmx_open(c_path.as_ptr(), &mut handle) };
        assert_eq!(status, CmxStatus::CmxOk);
        assert!(!handle.is_null());
        handle
    }

    #[test]
    fn version_is_a_static_string() {
        let v = unsafe { CStr::from_ptr(cmx_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn open_predict_close_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = trained_checkpoint_file(dir.path());
        let handle = open_handle(&path);

        let n = unsafe { cmx_num_classes(handle) };
        assert_eq!(n, 2);

        let name0 = unsafe { cmx_label_name(handle, 0) };
        assert_eq!(unsafe { CStr::from_ptr(name0) }.to_str().unwrap(), "NOT");
        unsafe { cmx_string_free(name0) };

        let text = CString::new("Bad1 stuff!!! https://t.co/x").unwrap();
        let mut probs = [0.0f64; 2];
        let mut pred = usize::MAX;
        let status =
            unsafe { cmx_predict(handle, text.as_ptr(), probs.as_mut_ptr(), 2, &mut pred) };
        assert_eq!(status, CmxStatus::CmxOk);
        assert!(pred < 2);
        assert!((probs[0] + probs[1] - 1.0).abs() < 1e-9);
        assert_eq!(pred, 1, "the trained model flags the bad token");

        unsafe { cmx_close(handle) };
    }

    #[test]
    fn clean_text_uses_stored_rules() {
        let dir = tempfile::tempdir().unwrap();
        let path = trained_checkpoint_file(dir.path());
        let handle = open_handle(&path);
        let text = CString::new("Watch https://t.co/xyz @user \u{1F600} Vera!!!").unwrap();
        let cleaned = unsafe { cmx_clean_text(handle, text.as_ptr()) };
        assert!(!cleaned.is_null());
        assert_eq!(
            unsafe { CStr::from_ptr(cleaned) }.to_str().unwrap(),
            "watch vera"
        );
        unsafe { cmx_string_free(cleaned) };
        unsafe { cmx_close(handle) };
    }

    #[test]
    fn error_paths_set_status_and_message() {
        // null arguments
        let status = unsafe { cmx_open(ptr::null(), ptr::null_mut()) };
        assert_eq!(status, CmxStatus::CmxErrNullArgument);

        // missing file maps to the config class, message readable
        let c_path = CString::new("/nonexistent/model.cmcx").unwrap();
        let mut handle: *mut CmxClassifier = ptr::null_mut();
        let status = unsafe { cmx_open(c_path.as_ptr(), &mut handle) };
        assert_eq!(status, CmxStatus::CmxErrConfig);
        assert!(handle.is_null());
        let msg = unsafe { CStr::from_ptr(cmx_last_error()) };
        assert!(msg.to_str().unwrap().contains("model.cmcx"));

        // corrupt payload maps to the data class
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.cmcx");
        std::fs::write(&bad, b"CMCXgarbage").unwrap();
        let c_bad = CString::new(bad.to_str().unwrap()).unwrap();
        let status = unsafe { cmx_open(c_bad.as_ptr(), &mut handle) };
        assert_eq!(status, CmxStatus::CmxErrData);
    }

    #[test]
    fn predict_rejects_short_buffer() {
        let dir = tempfile::tempdir().unwrap();
        let path = trained_checkpoint_file(dir.path());
        let handle = open_handle(&path);
        let text = CString::new("anything").unwrap();
        let mut probs = [0.0f64; 1];
        let mut pred = 0usize;
        let status =
            unsafe { cmx_predict(handle, text.as_ptr(), probs.as_mut_ptr(), 1, &mut pred) };
        assert_eq!(status, CmxStatus::CmxErrBufferTooSmall);
        unsafe { cmx_close(handle) };
    }

    #[test]
    fn label_name_out_of_range_is_null() {
        let dir = tempfile::tempdir().unwrap();
        let path = trained_checkpoint_file(dir.path());
        let handle = open_handle(&path);
        assert!(unsafe { cmx_label_name(handle, 99) }.is_null());
        unsafe { cmx_close(handle) };
    }
}
