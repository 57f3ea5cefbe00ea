/// ndarray-linalg is used without a bundled BLAS source; the system OpenBLAS
/// (which ships CBLAS and LAPACK in one shared object) provides the symbols.
fn main() {
    println!("cargo:rustc-link-lib=dylib=openblas");
}
