use std::ffi::{c_char, CStr, CString};
use std::ptr;

use grnkit_ffi::*;

fn cstrings(names: &[&str]) -> (Vec<CString>, Vec<*const c_char>) {
    let owned: Vec<CString> = names.iter().map(|n| CString::new(*n).unwrap()).collect();
    let ptrs = owned.iter().map(|c| c.as_ptr()).collect();
    (owned, ptrs)
}

fn last_error() -> String {
    let p = grnkit_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn random(tfs: &[&str], targets: &[&str], k: usize, seed: u64) -> *mut GrnkitGrn {
    let (_t, tp) = cstrings(tfs);
    let (_g, gp) = cstrings(targets);
    let mut out = ptr::null_mut();
    let st = grnkit_grn_random(tp.as_ptr(), tp.len(), gp.as_ptr(), gp.len(), k, seed, &mut out);
    assert_eq!(st, GrnkitStatus::Ok);
    out
}

#[test]
fn random_grn_round_trips_through_files() {
    unsafe {
        let g = random(&["TF1", "TF2", "TF3", "TF4"], &["A", "B", "C"], 2, 7);
        assert_eq!(grnkit_grn_n_edges(g), 6);
        assert!((grnkit_grn_density(g) - 0.5).abs() < 1e-12);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("nested/g.tsv").to_str().unwrap()).unwrap();
        assert_eq!(grnkit_grn_write(g, path.as_ptr()), GrnkitStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(grnkit_grn_read(path.as_ptr(), &mut back), GrnkitStatus::Ok);
        let mut o = f64::NAN;
        assert_eq!(grnkit_grn_overlap(g, back, &mut o), GrnkitStatus::Ok);
        assert_eq!(o, 1.0);
        grnkit_grn_free(g);
        grnkit_grn_free(back);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let (_t, tp) = cstrings(&["TF1", "TF2"]);
        let (_g, gp) = cstrings(&["A"]);
        let mut out = ptr::null_mut();
        let st = grnkit_grn_random(tp.as_ptr(), 2, gp.as_ptr(), 1, 3, 0, &mut out);
        assert_eq!(st, GrnkitStatus::Grn);
        assert!(out.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(grnkit_grn_read(ptr::null(), &mut out), GrnkitStatus::NullPointer);
        assert!(last_error().contains("path"));

        let missing = CString::new("/nonexistent/g.tsv").unwrap();
        assert_eq!(grnkit_grn_read(missing.as_ptr(), &mut out), GrnkitStatus::Io);

        assert!(grnkit_grn_density(ptr::null()).is_nan());
        assert_eq!(grnkit_grn_n_edges(ptr::null()), 0);
        grnkit_grn_free(ptr::null_mut());
        grnkit_matrix_free(ptr::null_mut());
        grnkit_string_free(ptr::null_mut());
    }
}

unsafe fn dense(values: &[f64], n_cells: usize, genes: &[&str]) -> *mut GrnkitMatrix {
    let (_g, gp) = cstrings(genes);
    let mut out = ptr::null_mut();
    let st = grnkit_matrix_from_dense(values.as_ptr(), n_cells, gp.len(), gp.as_ptr(), &mut out);
    assert_eq!(st, GrnkitStatus::Ok, "{}", last_error());
    out
}

#[test]
fn metrics_over_matrices() {
    unsafe {
        let a = dense(&[1.0, 2.0, 3.0, 4.0, 0.0, 1.0], 3, &["G1", "G2"]);
        let b = dense(&[1.0, 2.0, 3.0, 4.0, 0.0, 1.0], 3, &["G1", "G2"]);
        assert_eq!(grnkit_matrix_n_cells(a), 3);
        assert_eq!(grnkit_matrix_n_genes(a), 2);

        let mut v = f64::NAN;
        assert_eq!(grnkit_cosine_distance(a, b, &mut v), GrnkitStatus::Ok);
        assert!(v.abs() < 1e-12);
        assert_eq!(grnkit_euclidean_distance(a, b, &mut v), GrnkitStatus::Ok);
        assert!(v.abs() < 1e-12);
        assert_eq!(grnkit_mmd(a, b, ptr::null(), 0, &mut v), GrnkitStatus::Ok);
        assert!(v.abs() < 1e-9);
        let bw = [0.5, 2.0];
        assert_eq!(grnkit_mmd(a, b, bw.as_ptr(), 2, &mut v), GrnkitStatus::Ok);
        assert!(v.abs() < 1e-9);

        let other = dense(&[1.0, 2.0], 1, &["G1", "G3"]);
        assert_eq!(grnkit_euclidean_distance(a, other, &mut v), GrnkitStatus::Metric);

        let bad = [1.0, -1.0];
        let (_g, gp) = cstrings(&["G1", "G2"]);
        let mut out = ptr::null_mut();
        let st = grnkit_matrix_from_dense(bad.as_ptr(), 1, 2, gp.as_ptr(), &mut out);
        assert_eq!(st, GrnkitStatus::Data);

        grnkit_matrix_free(a);
        grnkit_matrix_free(b);
        grnkit_matrix_free(other);
    }
}

#[test]
fn matrix_loads_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    std::fs::write(&path, "barcode,G1,G2\nc1,1,2\nc2,3,4\n").unwrap();
    let p = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(grnkit_matrix_load(p.as_ptr(), 0, &mut m), GrnkitStatus::Ok, "{}", last_error());
        assert_eq!(grnkit_matrix_n_cells(m), 2);
        assert_eq!(grnkit_matrix_n_genes(m), 2);
        grnkit_matrix_free(m);
        assert_eq!(grnkit_matrix_load(p.as_ptr(), 9, &mut m), GrnkitStatus::InvalidArgument);
    }
}

#[test]
fn auroc_and_answer_parsing() {
    unsafe {
        let scores = [0.9, 0.8, 0.3, 0.1];
        let labels = [1u8, 1, 0, 0];
        let mut v = f64::NAN;
        assert_eq!(grnkit_auroc(scores.as_ptr(), labels.as_ptr(), 4, &mut v), GrnkitStatus::Ok);
        assert_eq!(v, 1.0);
        let one_class = [1u8; 4];
        assert_eq!(grnkit_auroc(scores.as_ptr(), one_class.as_ptr(), 4, &mut v), GrnkitStatus::Metric);

        let raw = CString::new("Sure. <Answer> [gata1, Spi1 , GATA1] </Answer>").unwrap();
        let mut s = ptr::null_mut();
        assert_eq!(grnkit_parse_answer(raw.as_ptr(), &mut s), GrnkitStatus::Ok);
        assert_eq!(CStr::from_ptr(s).to_str().unwrap(), "GATA1\nSPI1");
        grnkit_string_free(s);

        let raw = CString::new("no tags here").unwrap();
        assert_eq!(grnkit_parse_answer(raw.as_ptr(), &mut s), GrnkitStatus::Parse);
    }
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(grnkit_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_parses_as_c() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/grnkit.h")).unwrap();
    let src = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .filter_map(|rest| rest.split('(').next())
        .collect();
    assert!(exports.len() >= 20);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "header lacks {name}");
    }

    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let probe = std::process::Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(dir.join("include/grnkit.h"))
        .output();
    match probe {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler found; skipped syntax check"),
    }
}
