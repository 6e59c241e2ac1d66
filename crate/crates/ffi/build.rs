use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").unwrap();
    let header = PathBuf::from(&crate_dir).join("include").join("qchannel.h");
    std::fs::create_dir_all(header.parent().unwrap()).expect("cannot create include/");

    println!("cargo:rerun-if-changed=src/lib.rs");
    let mut config = cbindgen::Config::default();
    config.enumeration.rename_variants = cbindgen::RenameRule::QualifiedScreamingSnakeCase;
    cbindgen::Builder::new()
        .with_config(config)
        .with_crate(&crate_dir)
        .with_language(cbindgen::Language::C)
        .with_include_guard("QCHANNEL_H")
        .with_documentation(true)
        .with_cpp_compat(true)
        .generate()
        .expect("unable to generate qchannel.h")
        .write_to_file(header);
}
