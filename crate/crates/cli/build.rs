fn main() {
    for (key, var) in [("MITODET_TARGET", "TARGET"), ("MITODET_PROFILE", "PROFILE")] {
        let value = std::env::var(var).unwrap_or_else(|_| "unknown".into());
        println!("cargo:rustc-env={key}={value}");
    }
}
