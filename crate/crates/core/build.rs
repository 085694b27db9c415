fn main() {
    // lapack-sys only declares the FFI signatures; the symbols come from the
    // system OpenBLAS (which bundles LAPACK).
    println!("cargo:rustc-link-search=native=/usr/lib/x86_64-linux-gnu");
    println!("cargo:rustc-link-lib=dylib=openblas");
}
