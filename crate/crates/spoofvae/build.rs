fn main() {
    // The acceptance target compiles the core oracle suites in as plain
    // functions; this cfg keeps their `#[test]` attributes off here.
    println!("cargo::rustc-check-cfg=cfg(oracle_suite)");
    println!("cargo::rustc-cfg=oracle_suite");
}
