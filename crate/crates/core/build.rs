use std::process::Command;

fn main() {
    let describe = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .unwrap_or_default();
    println!("cargo:rustc-env=CHANTRACK_GIT_DESCRIBE={}", describe.trim());
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}
