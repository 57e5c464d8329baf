use clap::Parser;

fn main() {
    let cli = oplab::cli::Cli::parse();
    std::process::exit(oplab::cli::run(cli));
}

#[cfg(test)]
mod tests {
    use std::process::Command;

    /// The built executable; cargo places it next to the test's `deps` dir.
    fn exe() -> std::path::PathBuf {
        let me = std::env::current_exe().unwrap();
        let p = me.parent().and_then(|d| d.parent()).unwrap().join(format!("oplab{}", std::env::consts::EXE_SUFFIX));
        assert!(p.exists(), "binary not built at {}", p.display());
        p
    }

    fn oplab(args: &[&str]) -> std::process::Output {
        Command::new(exe()).args(args).env_remove("OPLAB_SEED").output().unwrap()
    }

    fn tmp(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("oplab-{}-{name}", std::process::id()))
    }

    #[test]
    fn oracle_passes() {
        let out = oplab(&["oracle", "--samples", "1000"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.starts_with("# oplab "));
        assert_eq!(text.lines().filter(|l| l.contains("\"pass\":true")).count(), 8);
    }

    #[test]
    fn mutated_coding_map_is_caught() {
        let out = oplab(&["oracle", "--samples", "100", "--mutate-psi", "1"]);
        assert_eq!(out.status.code(), Some(1));
        let text = String::from_utf8(out.stdout).unwrap();
        let line = text.lines().find(|l| l.contains("coding map bijection")).unwrap();
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["pass"], false);
        assert_eq!(v["counterexample"]["depth"], 2);
    }

    #[test]
    fn limits_and_bad_input_exit_with_two() {
        let deep = oplab(&["oracle", "--depth", "9"]);
        assert_eq!(deep.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&deep.stderr).contains("depth"));
        assert_eq!(oplab(&["scaling", "--sigma", "12"]).status.code(), Some(2));
        assert_eq!(oplab(&["classify", "--spec", "nonsense"]).status.code(), Some(2));
        assert_eq!(oplab(&["frobnicate"]).status.code(), Some(2));
    }

    #[test]
    fn scaling_output_is_identical_across_worker_counts() {
        let mut files = Vec::new();
        for w in ["1", "4"] {
            let path = tmp(&format!("scaling-{w}.csv"));
            let out = oplab(&[
                "--workers", w, "--seed", "5", "-o", path.to_str().unwrap(), "scaling", "--mode", "z", "--sigma", "10101010",
                "--samples", "300", "--scales", "2,3,4,5",
            ]);
            assert!(out.status.code().is_some_and(|c| c < 2), "{}", String::from_utf8_lossy(&out.stderr));
            let text = std::fs::read_to_string(&path).unwrap();
            std::fs::remove_file(&path).unwrap();
            // the echoed config names the worker count; everything else must match
            files.push(text.lines().filter(|l| !l.starts_with("# config")).collect::<Vec<_>>().join("\n"));
        }
        assert_eq!(files[0], files[1]);
        assert!(files[0].contains("scale,eps,bits,samples,seed"));
        assert!(files[0].contains("# verdict: "));
    }

    #[test]
    fn config_file_drives_classify() {
        let cfg = tmp("classify.cfg");
        std::fs::write(&cfg, "spec = periodic k=2 period8\nsamples = 20000\nexpect = type 2\nseed = 3\n").unwrap();
        let out = oplab(&["--config", cfg.to_str().unwrap(), "classify"]);
        std::fs::remove_file(&cfg).unwrap();
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(out.status.code(), Some(0), "{text}");
        assert!(text.contains("\"verdict\""));
        assert!(text.contains("\"spec\":\"periodic k=2 period8\""));
    }

    #[test]
    fn entropy_of_trivial_sigma_is_zero() {
        let out = oplab(&["entropy", "--sigma", "0000", "--group", "4", "--samples", "200"]);
        assert_eq!(out.status.code(), Some(0));
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.lines().any(|l| l == "bits,0"), "{text}");
    }
}
