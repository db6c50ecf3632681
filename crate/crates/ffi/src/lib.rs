//! C interface to the vocabulary, TF-IDF and sentence-encoder artefacts a
//! run directory produces.
//!
//! Objects are opaque handles created by `*_load` and released by the
//! matching `*_free`. Every other function returns an [`AdlinkStatus`];
//! when it is not `ADLINK_STATUS_OK`, [`adlink_last_error`] describes the
//! failure. Handles are immutable after loading and may be shared between
//! threads; the error message is per thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use adlink::encoder::SentenceEncoder;
use adlink::sparse::TfidfModel;
use adlink::tokenize::{encode, Vocabulary};
use adlink::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdlinkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    InvalidArgument = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// A WordPiece vocabulary.
pub struct AdlinkVocab(Vocabulary);

/// A fitted TF-IDF model.
pub struct AdlinkTfidf(TfidfModel);

/// A mean-pooled sentence encoder bound to its vocabulary.
pub struct AdlinkEncoder(SentenceEncoder);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(AdlinkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => AdlinkStatus::Io,
            Error::MalformedLine { .. } | Error::Schema { .. } | Error::Format(_) => AdlinkStatus::Format,
            Error::Config(_) | Error::InvalidArgument(_) => AdlinkStatus::InvalidArgument,
            Error::NonFiniteLoss { .. } | Error::Numerical(_) => AdlinkStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(message: Option<String>) {
    let c = message.map(|m| CString::new(m.replace('\0', " ")).expect("no interior nul"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AdlinkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(None);
            AdlinkStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(Some(message));
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(Some(format!("panic: {message}")));
            AdlinkStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(AdlinkStatus::NullPointer, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(AdlinkStatus::InvalidUtf8, format!("{name} is not UTF-8: {e}")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread, or null after a
/// successful one. Valid until the next call into this library.
#[no_mangle]
pub extern "C" fn adlink_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn adlink_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a vocabulary file (one token per line).
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn adlink_vocab_load(path: *const c_char, out: *mut *mut AdlinkVocab) -> AdlinkStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let vocab = Vocabulary::load(Path::new(path))?;
        write_out(out, Box::into_raw(Box::new(AdlinkVocab(vocab))), "out")
    })
}

/// # Safety
/// `vocab` must come from [`adlink_vocab_load`] and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn adlink_vocab_size(vocab: *const AdlinkVocab, out: *mut usize) -> AdlinkStatus {
    guard(|| write_out(out, handle(vocab, "vocab")?.0.len(), "out"))
}

/// Encodes `text` into exactly `max_len` ids (`[CLS] ... [SEP]` then
/// padding). `attention` may be null; otherwise it receives `max_len`
/// mask bytes. `n_attended` may be null.
///
/// # Safety
/// `ids` must hold `max_len` values, as must `attention` when non-null.
#[no_mangle]
pub unsafe extern "C" fn adlink_vocab_encode(
    vocab: *const AdlinkVocab,
    text: *const c_char,
    max_len: usize,
    ids: *mut u32,
    attention: *mut u8,
    n_attended: *mut usize,
) -> AdlinkStatus {
    guard(|| {
        let vocab = handle(vocab, "vocab")?;
        let text = str_arg(text, "text")?;
        if max_len < 3 {
            return Err(Failure(
                AdlinkStatus::InvalidArgument,
                format!("max_len must be at least 3, got {max_len}"),
            ));
        }
        if ids.is_null() {
            return Err(null("ids"));
        }
        let seq = encode(text, &vocab.0, max_len);
        std::slice::from_raw_parts_mut(ids, max_len).copy_from_slice(&seq.ids);
        if !attention.is_null() {
            std::slice::from_raw_parts_mut(attention, max_len).copy_from_slice(&seq.attention);
        }
        if !n_attended.is_null() {
            n_attended.write(seq.attended_len());
        }
        Ok(())
    })
}

/// # Safety
/// `vocab` must be null or come from [`adlink_vocab_load`], and not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn adlink_vocab_free(vocab: *mut AdlinkVocab) {
    release(vocab)
}

/// Loads a TF-IDF model saved as JSON.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn adlink_tfidf_load(path: *const c_char, out: *mut *mut AdlinkTfidf) -> AdlinkStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let model = TfidfModel::load(Path::new(path))?;
        write_out(out, Box::into_raw(Box::new(AdlinkTfidf(model))), "out")
    })
}

/// Cosine similarity of the TF-IDF vectors of two texts.
///
/// # Safety
/// Strings must be nul-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn adlink_tfidf_similarity(
    model: *const AdlinkTfidf,
    a: *const c_char,
    b: *const c_char,
    out: *mut f64,
) -> AdlinkStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let (a, b) = (str_arg(a, "a")?, str_arg(b, "b")?);
        write_out(out, model.0.similarity(a, b), "out")
    })
}

/// # Safety
/// `model` must be null or come from [`adlink_tfidf_load`], and not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn adlink_tfidf_free(model: *mut AdlinkTfidf) {
    release(model)
}

/// Loads an encoder checkpoint. The checkpoint must have been trained with
/// `vocab`; the encoder keeps its own copy, so `vocab` may be freed.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn adlink_encoder_load(
    path: *const c_char,
    vocab: *const AdlinkVocab,
    out: *mut *mut AdlinkEncoder,
) -> AdlinkStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let vocab = handle(vocab, "vocab")?;
        let enc = SentenceEncoder::load(Path::new(path), vocab.0.clone())?;
        write_out(out, Box::into_raw(Box::new(AdlinkEncoder(enc))), "out")
    })
}

/// Embedding width.
///
/// # Safety
/// `encoder` must come from [`adlink_encoder_load`] and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn adlink_encoder_dim(encoder: *const AdlinkEncoder, out: *mut usize) -> AdlinkStatus {
    guard(|| write_out(out, handle(encoder, "encoder")?.0.dim(), "out"))
}

/// Writes the sentence embedding of `text` to `out`, which holds `len`
/// values. Fails with `ADLINK_STATUS_BUFFER_TOO_SMALL` when `len` is below
/// the embedding width.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn adlink_encoder_embed(
    encoder: *const AdlinkEncoder,
    text: *const c_char,
    out: *mut f64,
    len: usize,
) -> AdlinkStatus {
    guard(|| {
        let enc = handle(encoder, "encoder")?;
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len < enc.0.dim() {
            return Err(Failure(
                AdlinkStatus::BufferTooSmall,
                format!("embedding needs {} values, buffer holds {len}", enc.0.dim()),
            ));
        }
        let v = enc.0.embed(text);
        std::slice::from_raw_parts_mut(out, v.len()).copy_from_slice(v.as_slice().expect("contiguous"));
        Ok(())
    })
}

/// Cosine similarity of two sentence embeddings.
///
/// # Safety
/// Strings must be nul-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn adlink_encoder_similarity(
    encoder: *const AdlinkEncoder,
    a: *const c_char,
    b: *const c_char,
    out: *mut f64,
) -> AdlinkStatus {
    guard(|| {
        let enc = handle(encoder, "encoder")?;
        let (a, b) = (str_arg(a, "a")?, str_arg(b, "b")?);
        write_out(out, enc.0.similarity(a, b), "out")
    })
}

/// # Safety
/// `encoder` must be null or come from [`adlink_encoder_load`], and not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn adlink_encoder_free(encoder: *mut AdlinkEncoder) {
    release(encoder)
}
