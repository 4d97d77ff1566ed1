//! Runs every CLI stage on a tiny config, then reruns one to show that
//! current outputs are reused.

use gradsign::cli::main_with_args;

const CONFIG: &str = r#"
seed = 1
[dataset]
n = 300
[train]
epochs = 4
[bench]
archs = 16
[select]
n = 4
runs = 50
[search]
runs = 2
[search.params]
budget = 2.0
b_max = 4
[verify]
instances = 5
planted = 2
"#;

fn main() {
    let dir = std::env::temp_dir().join("gradsign-pipeline");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let config = dir.join("config.toml");
    std::fs::write(&config, CONFIG).expect("write config");
    let out = dir.join("out");
    let base = ["gradsign", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    for stage in ["bench", "score", "correlate", "select", "search", "verify", "correlate"] {
        let code = main_with_args(base.iter().copied().chain([stage]));
        assert_eq!(code, 0, "{stage} failed");
    }
    println!("artifacts in {}", out.display());
}
