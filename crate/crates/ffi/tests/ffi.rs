use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use adlink::encoder::{init_encoder, EncoderConfig, SentenceEncoder};
use adlink::sparse::{fit_tfidf, IdfVariant, TokenizerKind};
use adlink::tokenize::{encode, Vocabulary};
use adlink_ffi::*;

struct Fixture {
    _dir: tempfile::TempDir,
    vocab: PathBuf,
    tfidf: PathBuf,
    encoder: PathBuf,
    reference: SentenceEncoder,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let vocab = Vocabulary::with_specials(["🌹", "rose", "##s", "gold", "kiss"]).unwrap();
    let vocab_path = dir.path().join("vocab.txt");
    vocab.save(&vocab_path).unwrap();
    let tfidf_path = dir.path().join("tfidf.json");
    fit_tfidf(
        &["🌹 rose", "gold kiss", "rose gold"],
        TokenizerKind::EmojiWord,
        IdfVariant::Smoothed,
    )
    .unwrap()
    .save(&tfidf_path)
    .unwrap();
    let cfg = EncoderConfig {
        vocab_size: vocab.len(),
        hidden: 8,
        heads: 2,
        max_len: 16,
        ..EncoderConfig::default()
    };
    let enc = SentenceEncoder::new(init_encoder(&cfg).unwrap(), vocab).unwrap();
    let enc_path = dir.path().join("encoder.ckpt");
    enc.save(&enc_path).unwrap();
    Fixture {
        _dir: dir,
        vocab: vocab_path,
        tfidf: tfidf_path,
        encoder: enc_path,
        reference: enc,
    }
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn cpath(p: &Path) -> CString {
    c(p.to_str().unwrap())
}

fn last_error() -> String {
    let p = adlink_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn load_vocab(path: &Path) -> *mut AdlinkVocab {
    let mut v = ptr::null_mut();
    assert_eq!(
        unsafe { adlink_vocab_load(cpath(path).as_ptr(), &mut v) },
        AdlinkStatus::Ok
    );
    v
}

#[test]
fn vocab_round_trip() {
    let f = fixture();
    let v = load_vocab(&f.vocab);
    assert!(adlink_last_error().is_null());
    let mut n = 0;
    assert_eq!(unsafe { adlink_vocab_size(v, &mut n) }, AdlinkStatus::Ok);
    assert_eq!(n, 10);

    let text = "🌹 roses gold";
    let mut ids = [0u32; 8];
    let mut attention = [9u8; 8];
    let mut attended = 0;
    let status = unsafe {
        adlink_vocab_encode(
            v,
            c(text).as_ptr(),
            8,
            ids.as_mut_ptr(),
            attention.as_mut_ptr(),
            &mut attended,
        )
    };
    assert_eq!(status, AdlinkStatus::Ok);
    let expected = encode(text, &Vocabulary::load(&f.vocab).unwrap(), 8);
    assert_eq!(ids.to_vec(), expected.ids);
    assert_eq!(attention.to_vec(), expected.attention);
    assert_eq!(attended, 6);

    let status = unsafe {
        adlink_vocab_encode(
            v,
            c(text).as_ptr(),
            2,
            ids.as_mut_ptr(),
            ptr::null_mut(),
            ptr::null_mut(),
        )
    };
    assert_eq!(status, AdlinkStatus::InvalidArgument);
    assert!(last_error().contains("max_len"));
    unsafe { adlink_vocab_free(v) };
}

#[test]
fn tfidf_similarity_matches_library() {
    let f = fixture();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { adlink_tfidf_load(cpath(&f.tfidf).as_ptr(), &mut m) },
        AdlinkStatus::Ok
    );
    let mut s = f64::NAN;
    let status = unsafe { adlink_tfidf_similarity(m, c("rose gold").as_ptr(), c("🌹 rose").as_ptr(), &mut s) };
    assert_eq!(status, AdlinkStatus::Ok);
    let direct = adlink::sparse::TfidfModel::load(&f.tfidf)
        .unwrap()
        .similarity("rose gold", "🌹 rose");
    assert_eq!(s, direct);
    assert!(s > 0.0 && s < 1.0);
    unsafe { adlink_tfidf_free(m) };
}

#[test]
fn encoder_embeddings_match_library() {
    let f = fixture();
    let v = load_vocab(&f.vocab);
    let mut e = ptr::null_mut();
    assert_eq!(
        unsafe { adlink_encoder_load(cpath(&f.encoder).as_ptr(), v, &mut e) },
        AdlinkStatus::Ok
    );
    unsafe { adlink_vocab_free(v) };

    let mut dim = 0;
    assert_eq!(unsafe { adlink_encoder_dim(e, &mut dim) }, AdlinkStatus::Ok);
    assert_eq!(dim, 8);
    let mut buf = vec![0.0; 12];
    assert_eq!(
        unsafe { adlink_encoder_embed(e, c("gold kiss").as_ptr(), buf.as_mut_ptr(), buf.len()) },
        AdlinkStatus::Ok
    );
    assert_eq!(&buf[..8], f.reference.embed("gold kiss").as_slice().unwrap());
    assert!(buf[8..].iter().all(|&x| x == 0.0));

    let status = unsafe { adlink_encoder_embed(e, c("gold").as_ptr(), buf.as_mut_ptr(), 4) };
    assert_eq!(status, AdlinkStatus::BufferTooSmall);
    assert!(last_error().contains("8"));

    let mut s = 0.0;
    assert_eq!(
        unsafe { adlink_encoder_similarity(e, c("rose").as_ptr(), c("rose").as_ptr(), &mut s) },
        AdlinkStatus::Ok
    );
    assert!((s - 1.0).abs() < 1e-9);
    unsafe { adlink_encoder_free(e) };
}

#[test]
fn errors_map_to_status_codes() {
    let f = fixture();
    let mut v = ptr::null_mut();
    let missing = f.vocab.with_file_name("absent.txt");
    assert_eq!(
        unsafe { adlink_vocab_load(cpath(&missing).as_ptr(), &mut v) },
        AdlinkStatus::Io
    );
    assert!(v.is_null());
    assert!(last_error().contains("absent.txt"));

    assert_eq!(
        unsafe { adlink_vocab_load(ptr::null(), &mut v) },
        AdlinkStatus::NullPointer
    );
    assert_eq!(
        unsafe { adlink_vocab_load(cpath(&f.vocab).as_ptr(), ptr::null_mut()) },
        AdlinkStatus::NullPointer
    );

    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { adlink_vocab_load(bad.as_ptr() as *const c_char, &mut v) },
        AdlinkStatus::InvalidUtf8
    );

    let mut t = ptr::null_mut();
    assert_eq!(
        unsafe { adlink_tfidf_load(cpath(&f.vocab).as_ptr(), &mut t) },
        AdlinkStatus::Format
    );

    // A checkpoint paired with the wrong vocabulary is rejected.
    let other = f.vocab.with_file_name("other.txt");
    Vocabulary::with_specials(["a", "b", "c", "d", "e"])
        .unwrap()
        .save(&other)
        .unwrap();
    let v = load_vocab(&other);
    let mut e = ptr::null_mut();
    assert_eq!(
        unsafe { adlink_encoder_load(cpath(&f.encoder).as_ptr(), v, &mut e) },
        AdlinkStatus::Format
    );
    assert!(e.is_null());
    unsafe {
        adlink_vocab_free(v);
        adlink_vocab_free(ptr::null_mut());
        adlink_tfidf_free(ptr::null_mut());
        adlink_encoder_free(ptr::null_mut());
    }

    let version = unsafe { CStr::from_ptr(adlink_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/adlink.h")).unwrap();
    let source = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert_eq!(exports.len(), 14);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct AdlinkVocab AdlinkVocab;"));
}

#[test]
fn c_program_links_against_static_library() {
    let f = fixture();
    let target = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = target.join("libadlink_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "adlink.h"
int main(int argc, char **argv) {
    AdlinkVocab *v = NULL;
    AdlinkTfidf *t = NULL;
    AdlinkEncoder *e = NULL;
    size_t dim = 0;
    double s = 0.0, emb[64];
    if (adlink_vocab_load(argv[1], &v) != ADLINK_STATUS_OK) return 1;
    if (adlink_tfidf_load(argv[2], &t) != ADLINK_STATUS_OK) return 2;
    if (adlink_encoder_load(argv[3], v, &e) != ADLINK_STATUS_OK) return 3;
    if (adlink_encoder_dim(e, &dim) != ADLINK_STATUS_OK || dim != 8) return 4;
    if (adlink_encoder_embed(e, "rose gold", emb, 64) != ADLINK_STATUS_OK) return 5;
    if (adlink_tfidf_similarity(t, "rose", "rose", &s) != ADLINK_STATUS_OK) return 6;
    if (adlink_vocab_load("/nonexistent", &v) != ADLINK_STATUS_IO) return 7;
    printf("%.6f %s\n", s, adlink_last_error() ? "err" : "none");
    adlink_encoder_free(e);
    adlink_tfidf_free(t);
    adlink_vocab_free(v);
    return argc == 4 ? 0 : 8;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = std::process::Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = std::process::Command::new(&exe)
        .arg(&f.vocab)
        .arg(&f.tfidf)
        .arg(&f.encoder)
        .output()
        .unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "1.000000 err\n");
}
