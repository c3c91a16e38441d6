//! The generated header must be valid C and C++.
use std::path::Path;
use std::process::Command;

fn compile(compiler: &str, lang: &str) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let src = "#include \"resonant_auth.h\"\nint main(void) { RaReport r; (void)r; return ra_version() == 0; }\n";
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join(format!("t.{lang}"));
    std::fs::write(&file, src).unwrap();
    let status = match Command::new(compiler)
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(&dir)
        .arg(&file)
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("{compiler} not available; skipping");
            return;
        }
    };
    assert!(status.success(), "{compiler} rejected the header");
}

#[test]
fn header_compiles_as_c() {
    compile("cc", "c");
}

#[test]
fn header_compiles_as_cpp() {
    compile("c++", "cpp");
}
