use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let out_dir = PathBuf::from(env::var("OUT_DIR").unwrap());

    let header = cbindgen::generate(&crate_dir).expect("cbindgen header generation");
    header.write_to_file(out_dir.join("codemix.h"));
    // keep the committed copy in sync for consumers that vendor the header
    header.write_to_file(crate_dir.join("include").join("codemix.h"));

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
